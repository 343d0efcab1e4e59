"""
Smooth partitions of unity over the periodic spatial grid.

Raw bumps are tensor products of a plateau-and-ramp profile built from the
quintic smoothstep s(t) = 6t^5 - 15t^4 + 10t^3; patches are then normalized by
the raw sum so that sum_j chi_j = 1 holds to roundoff.
"""

import logging
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.artifacts import write_csv
from src.errors import ValidationError
from src.grid import Field, Grid

logger = logging.getLogger(__name__)

NEGATIVE_DENSITY_TOLERANCE = 1e-12


def smoothstep(t: np.ndarray) -> np.ndarray:
    """Quintic smoothstep clamped to [0, 1]; C^2 at both ends."""
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


def periodic_distance(x: np.ndarray, center: float, half_length: float) -> np.ndarray:
    period = 2.0 * half_length
    return np.abs((x - center + half_length) % period - half_length)


def ramp_profile(distance: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """1 inside `inner`, 0 beyond `outer`, smoothstep in between."""
    return smoothstep((outer - distance) / (outer - inner))


@dataclass(frozen=True)
class PartitionOfUnity:
    """Patch weights chi_j >= 0 with sum_j chi_j = 1 on the grid."""
    grid: Grid
    patches: Tuple[np.ndarray, ...]
    centers: Tuple[Tuple[float, ...], ...]
    nominal_width: float
    overlap: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.patches)

    def total(self) -> np.ndarray:
        return np.sum(self.patches, axis=0)

    def patch_field(self, j: int) -> Field:
        return Field(self.grid, self.patches[j])

    def relabeled(self, order: Sequence[int]) -> "PartitionOfUnity":
        order = list(order)
        return PartitionOfUnity(
            self.grid,
            tuple(self.patches[j] for j in order),
            tuple(self.centers[j] for j in order),
            self.nominal_width,
            self.overlap,
            dict(self.metadata),
        )


def build_uniform(grid: Grid, patches_per_axis: int, overlap: float = 0.3) -> PartitionOfUnity:
    """
    Periodically tiled partition with patches_per_axis^dim patches.

    Patch centers sit at -L + (j + 1/2) P with pitch P = 2L / patches_per_axis;
    each raw bump is flat within P(1 - overlap)/2 of its center and ramps to
    zero at P(1 + overlap)/2, so neighbours overlap over a band of width
    overlap * P.
    """
    if patches_per_axis < 1:
        raise ValidationError(f"patches_per_axis must be >= 1, got {patches_per_axis}")
    if not 0.0 < overlap < 1.0:
        raise ValidationError(f"overlap must lie in (0, 1), got {overlap}")
    L = grid.half_length
    pitch = 2.0 * L / patches_per_axis
    axis = grid.axis()

    if patches_per_axis == 1:
        profiles = [np.ones_like(axis)]
    else:
        inner = 0.5 * pitch * (1.0 - overlap)
        outer = 0.5 * pitch * (1.0 + overlap)
        profiles = [
            ramp_profile(periodic_distance(axis, -L + (j + 0.5) * pitch, L), inner, outer)
            for j in range(patches_per_axis)
        ]
    centers_1d = [-L + (j + 0.5) * pitch for j in range(patches_per_axis)]

    raw, centers = [], []
    for combo in product(range(patches_per_axis), repeat=grid.dim):
        bump = profiles[combo[0]]
        for j in combo[1:]:
            bump = np.multiply.outer(bump, profiles[j])
        raw.append(np.asarray(bump, dtype=float).reshape(grid.shape))
        centers.append(tuple(centers_1d[j] for j in combo))

    total = np.sum(raw, axis=0)
    uncovered = np.argwhere(total <= 0.0)
    if uncovered.size:
        index = tuple(int(i) for i in uncovered[0])
        point = grid.mesh()[(slice(None),) + index]
        raise ValidationError(f"partition leaves grid point {point.tolist()} uncovered")
    patches = []
    for bump in raw:
        chi = bump / total
        chi.flags.writeable = False
        patches.append(chi)

    logger.debug("built %d patches (pitch %.4g, overlap %.2f)", len(patches), pitch, overlap)
    return PartitionOfUnity(
        grid=grid,
        patches=tuple(patches),
        centers=tuple(centers),
        nominal_width=pitch,
        overlap=overlap,
        metadata={"patches_per_axis": patches_per_axis, "profile": "quintic-smoothstep"},
    )


def _density_values(w: Union[Field, np.ndarray], grid: Grid) -> np.ndarray:
    values = w.values if isinstance(w, Field) else np.asarray(w)
    if values.shape != grid.shape:
        raise ValidationError(f"density shape {values.shape} does not match grid {grid.shape}")
    if np.iscomplexobj(values):
        scale = max(1.0, float(np.max(np.abs(values))))
        if np.max(np.abs(values.imag)) > NEGATIVE_DENSITY_TOLERANCE * scale:
            raise ValidationError("density must be real")
        values = values.real
    low = np.argwhere(values < -NEGATIVE_DENSITY_TOLERANCE)
    if low.size:
        index = tuple(int(i) for i in low[0])
        raise ValidationError(f"density is negative at index {index}: {values[index]}")
    return values


def decompose(pu: PartitionOfUnity, w: Union[Field, np.ndarray]) -> List[float]:
    """Per-patch integrals of chi_j * w (trapezoid on the torus)."""
    values = _density_values(w, pu.grid)
    cell = pu.grid.cell_volume
    return [float(cell * np.sum(chi * values)) for chi in pu.patches]


def patch_mass_rows(pu: PartitionOfUnity, masses: Sequence[float]) -> List[List[Any]]:
    return [[j + 1, *center, mass] for j, (center, mass) in enumerate(zip(pu.centers, masses))]


def write_patch_masses(path: Union[str, Path], pu: PartitionOfUnity, masses: Sequence[float],
                       digest: Optional[str] = None) -> Path:
    """CSV rows (patch_id, center..., mass)."""
    header = ["patch_id"] + [f"center_{axis}" for axis in range(pu.grid.dim)] + ["mass"]
    return write_csv(Path(path), header, patch_mass_rows(pu, masses), digest)
