"""
Dissipation-rate functionals and their microlocal decomposition.

eps_h = ||P_h u||^2 is computed through quantize.apply; an independent
brute-force kernel route (direct sums, no FFT) checks it at small N. Two
candidate h -> 0 limits are provided: the phase-space integral
int int |a|^2 |u|^2 dxi dx over all of phase space, and the limit
that eps_h actually approaches for wave packets at frequency xi0,
int |a(x, xi0)|^2 |u|^2 dx. Sweeps report both and the gaps to each.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from src.artifacts import write_csv
from src.errors import GuardError, ValidationError
from src.grid import Field, Grid, forward_transform, spectral_gradient
from src.parallel import ordered_map
from src.partition import PartitionOfUnity, decompose
from src.quantize import apply
from src.symbol import Symbol

logger = logging.getLogger(__name__)

ORACLE_MAX_POINTS = 64
TAIL_TOLERANCE = 1e-8
DEFAULT_XI_STEP = 1.0 / 16.0


def _energy_density(a: Symbol, u: Field, h: float, workers: int = 1) -> Field:
    return Field(u.grid, np.abs(apply(a, u, h, workers).values) ** 2)


def dissipation_rate(a: Symbol, u: Field, h: float, workers: int = 1) -> float:
    """eps_h = dx^n sum |P_h u|^2."""
    density = _energy_density(a, u, h, workers)
    return float(u.grid.cell_volume * np.sum(density.values.real))


def localized_dissipation(a: Symbol, u: Field, h: float, pu: PartitionOfUnity, workers: int = 1) -> List[float]:
    """Per-patch contributions int chi_j |P_h u|^2 dx."""
    if pu.grid != u.grid:
        raise ValidationError(f"partition grid {pu.grid} does not match field grid {u.grid}")
    return decompose(pu, _energy_density(a, u, h, workers))


def dissipation_spectrum(a: Symbol, u: Field, h: float, band_edges: Sequence[float],
                         workers: int = 1) -> List[float]:
    """
    Split eps_h over |xi| bands via discrete Plancherel on F_h(P_h u).

    Band 0 is |xi| < edges[0], band i is edges[i-1] <= |xi| < edges[i], and
    the last band collects everything at or above edges[-1].
    """
    edges = np.asarray(band_edges, dtype=float)
    if edges.size == 0 or np.any(np.diff(edges) <= 0) or edges[0] < 0:
        raise ValidationError("band edges must be nonnegative and strictly increasing")
    grid = u.grid
    spectrum = forward_transform(apply(a, u, h, workers), h)
    weight = spectrum.cell_volume / (2.0 * math.pi * h) ** grid.dim
    radius = np.sqrt(np.sum(grid.frequencies(h) ** 2, axis=0))
    bands = np.digitize(radius, edges)
    mass = weight * np.abs(spectrum.values) ** 2
    return [float(np.sum(mass[bands == b])) for b in range(edges.size + 1)]


# ---------------------------------------------------------------------------
# Brute-force kernel route
# ---------------------------------------------------------------------------

def _oracle_lattice(a: Symbol, u: Field, h: float):
    grid = u.grid
    if grid.dim != 1:
        raise ValidationError("the kernel oracle is implemented for dim = 1 only")
    if grid.points_per_axis > ORACLE_MAX_POINTS:
        raise GuardError(
            f"kernel oracle costs N^3; N = {grid.points_per_axis} exceeds {ORACLE_MAX_POINTS}"
        )
    if h <= 0:
        raise ValidationError(f"h must be positive, got {h}")
    x = grid.axis()
    xi = grid.frequency_axis(h)
    values = a(x[None, :, None], xi[None, None, :])
    if not np.all(np.isfinite(values)):
        j, k = np.argwhere(~np.isfinite(values))[0]
        raise ValidationError(f"symbol '{a.name}' is non-finite at (x, xi) = ({x[j]}, {xi[k]})")
    return grid, x, xi, values


def kernel_form(a: Symbol, u: Field, h: float, workers: int = 1) -> complex:
    """
    eps_h as the Hermitian form sum conj(u(y')) G(y', y) u(y), G = K^* K dx,
    with the kernel K(x, y) = (2 pi h)^{-1} sum_xi e^{i(x - y)xi/h} a(x, xi) dxi
    evaluated by direct summation.
    """
    grid, x, xi, values = _oracle_lattice(a, u, h)
    dx, dxi = grid.spacing, grid.dual_spacing(h)
    n = x.size

    def kernel_rows(j: int) -> np.ndarray:
        phase = np.exp(1j * (x[j] - x)[:, None] * xi[None, :] / h)
        return (phase * values[j][None, :]).sum(axis=1) * dxi / (2.0 * math.pi * h)

    kernel = np.array(ordered_map(kernel_rows, range(n), workers))
    gram = kernel.conj().T @ kernel * dx
    vector = np.asarray(u.values)
    return complex(np.vdot(vector, gram @ vector) * dx * dx)


def kernel_oracle(a: Symbol, u: Field, h: float, workers: int = 1) -> float:
    """Real part of kernel_form; the imaginary residue is roundoff."""
    value = kernel_form(a, u, h, workers)
    if abs(value.imag) > 1e-10 * max(abs(value), 1e-300):
        logger.warning("kernel oracle imaginary residue %.3g on value %.3g", value.imag, abs(value))
    return float(value.real)


def collapsed_kernel_functional(a: Symbol, u: Field, h: float) -> float:
    """
    (2 pi h)^{-2} sum_x sum_y sum_xi e^{i(x-y)xi/h} a(x,xi) conj(a(y,xi)) u(y) conj(u(x))
    with the two frequency sums of |P_h u|^2 collapsed into one.
    Reported next to the oracle; it is not eps_h.
    """
    grid, x, xi, values = _oracle_lattice(a, u, h)
    dx, dxi = grid.spacing, grid.dual_spacing(h)
    phase = np.exp(1j * x[:, None] * xi[None, :] / h)
    inner = (phase * values * np.conj(u.values)[:, None]).sum(axis=0) * dx
    return float(np.sum(np.abs(inner) ** 2) * dxi / (2.0 * math.pi * h) ** 2)


# ---------------------------------------------------------------------------
# Limits
# ---------------------------------------------------------------------------

@dataclass
class PhaseSpaceIntegral:
    value: float
    tail_bound: float
    truncation_radius: float
    xi_nodes: int

    def to_dict(self) -> Dict[str, float]:
        return {
            "value": self.value,
            "tail_bound": self.tail_bound,
            "truncation_radius": self.truncation_radius,
            "xi_nodes": self.xi_nodes,
        }


def _ball_nodes(dim: int, radius: float, step: float):
    count = int(math.ceil(radius / step))
    nodes = np.linspace(-radius, radius, 2 * count + 1)
    weights = np.full(nodes.size, nodes[1] - nodes[0])
    weights[[0, -1]] *= 0.5
    if dim == 1:
        return nodes[None, :], weights
    mesh = np.array(np.meshgrid(nodes, nodes, indexing="ij")).reshape(2, -1)
    w = np.outer(weights, weights).reshape(-1)
    inside = np.sum(mesh ** 2, axis=0) <= radius ** 2
    return mesh[:, inside], w[inside]


def _tail_integral(dim: int, m: float, radius: float) -> float:
    """int_{|xi| > R} (1 + |xi|)^{2m} dxi, bounded above for dim = 2."""
    if dim == 1:
        return 2.0 * (1.0 + radius) ** (2 * m + 1) / (-2 * m - 1)
    return 2.0 * math.pi * (1.0 + radius) ** (2 * m + 2) / (-2 * m - 2)


def _required_radius(dim: int, m: float, budget: float) -> float:
    if dim == 1:
        return (budget * (-2 * m - 1) / 2.0) ** (1.0 / (2 * m + 1)) - 1.0
    return (budget * (-2 * m - 2) / (2.0 * math.pi)) ** (1.0 / (2 * m + 2)) - 1.0


def phase_space_limit_paper(
    a: Symbol,
    u: Field,
    truncation_radius: float,
    xi_step: float = DEFAULT_XI_STEP,
    tail_tolerance: float = TAIL_TOLERANCE,
) -> PhaseSpaceIntegral:
    """
    int int |a(x, xi)|^2 |u(x)|^2 dxi dx over the grid times the xi-ball of the
    given radius (tensor trapezoid). Requires order m < -dim/2; the tail
    outside the ball is bounded by sup_x |a|^2 (1 + R)^{-2m} at |xi| = R times
    int_{|xi|>R} (1 + |xi|)^{2m} and must stay below tail_tolerance of the value.
    """
    grid = u.grid
    dim, m = grid.dim, a.declared_order
    if m >= -dim / 2.0:
        raise ValidationError(
            f"symbol '{a.name}' has order {m} >= -dim/2 = {-dim / 2.0}: |a|^2 is not integrable in xi"
        )
    if truncation_radius <= 0:
        raise ValidationError(f"truncation_radius must be positive, got {truncation_radius}")
    density = np.abs(u.values) ** 2
    mass = grid.cell_volume * float(np.sum(density))
    mesh = grid.mesh()
    nodes, weights = _ball_nodes(dim, truncation_radius, xi_step)

    if a.separable is not None:
        g2 = np.abs(a.frequency_factor(nodes)) ** 2
        f2 = np.abs(a.spatial_factor(mesh)) ** 2
        value = float(np.sum(weights * g2)) * grid.cell_volume * float(np.sum(f2 * density))
    else:
        flat_x = mesh.reshape(dim, -1)
        flat_density = density.reshape(-1)
        chunk = max(1, 2 ** 22 // flat_x.shape[1])
        value = 0.0
        for start in range(0, nodes.shape[1], chunk):
            block = nodes[:, start:start + chunk]
            a2 = np.abs(a(flat_x[:, :, None], block[:, None, :])) ** 2
            value += float(grid.cell_volume * (flat_density @ a2) @ weights[start:start + chunk])

    if dim == 1:
        rim = np.array([[truncation_radius], [-truncation_radius]]).T
    else:
        angles = 2.0 * math.pi * np.arange(16) / 16
        rim = truncation_radius * np.stack([np.cos(angles), np.sin(angles)])
    rim_values = np.abs(a(mesh.reshape(dim, -1)[:, :, None], rim[:, None, :])) ** 2
    constant = float(np.max(rim_values)) * (1.0 + truncation_radius) ** (-2 * m)
    tail = constant * mass * _tail_integral(dim, m, truncation_radius)

    if tail > tail_tolerance * value and value > 0:
        needed = _required_radius(dim, m, tail_tolerance * value / (constant * mass))
        raise GuardError(
            f"xi-tail bound {tail:.3g} exceeds {tail_tolerance:g} of the integral {value:.6g} at "
            f"radius {truncation_radius}; a radius of about {needed:.4g} is required"
        )
    return PhaseSpaceIntegral(value, tail, float(truncation_radius), int(nodes.shape[1]))


def frozen_frequency_limit(a: Symbol, u: Field, xi0: Sequence[float]) -> float:
    """int |a(x, xi0)|^2 |u(x)|^2 dx."""
    grid = u.grid
    xi0 = np.atleast_1d(np.asarray(xi0, dtype=float))
    if xi0.size != grid.dim:
        raise ValidationError(f"xi0 must have {grid.dim} components, got {xi0.size}")
    values = a(grid.mesh(), xi0.reshape((grid.dim,) + (1,) * grid.dim))
    return float(grid.cell_volume * np.sum(np.abs(values) ** 2 * np.abs(u.values) ** 2))


def coherent_state(grid: Grid, x0: Sequence[float], xi0: Sequence[float], h: float) -> Field:
    """(pi h)^{-n/4} e^{i(x - x0).xi0/h} e^{-|x - x0|^2/(2h)}, unit L^2 norm."""
    if h <= 0:
        raise ValidationError(f"h must be positive, got {h}")
    width = math.sqrt(h)
    if width < 4.0 * grid.spacing:
        raise ValidationError(
            f"coherent-state width sqrt(h) = {width:.4g} is unresolvable; need at least 4 dx = {4 * grid.spacing:.4g}"
        )
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    xi0 = np.atleast_1d(np.asarray(xi0, dtype=float))
    if x0.size != grid.dim or xi0.size != grid.dim:
        raise ValidationError(f"x0 and xi0 must have {grid.dim} components")
    if np.any(np.abs(x0) >= grid.half_length):
        raise ValidationError(f"x0 = {x0.tolist()} is not interior to the box")
    edge = math.exp(-(grid.half_length - float(np.max(np.abs(x0)))) ** 2 / (2.0 * h))
    if edge > 1e-12:
        logger.warning("coherent state at %s leaves %.2g of its peak on the box boundary", x0.tolist(), edge)
    offset = grid.mesh() - x0.reshape((grid.dim,) + (1,) * grid.dim)
    phase = np.exp(1j * np.sum(offset * xi0.reshape((grid.dim,) + (1,) * grid.dim), axis=0) / h)
    envelope = np.exp(-np.sum(offset ** 2, axis=0) / (2.0 * h))
    return Field(grid, (math.pi * h) ** (-grid.dim / 4.0) * phase * envelope)


def classical_dissipation(u: Field, nu: float) -> float:
    """nu * int |grad u|^2 dx with a spectral gradient."""
    if nu < 0:
        raise ValidationError(f"viscosity must be nonnegative, got {nu}")
    return nu * sum(component.norm_squared() for component in spectral_gradient(u))


# ---------------------------------------------------------------------------
# h sweeps
# ---------------------------------------------------------------------------

def _relative_gap(value: float, target: Optional[float]) -> Optional[float]:
    if target is None:
        return None
    return abs(value - target) / abs(target) if target != 0 else abs(value - target)


@dataclass
class SweepRow:
    h: float
    eps: float
    parts: List[float]
    limit_paper: Optional[float] = None
    limit_frozen: Optional[float] = None

    @property
    def gap_paper(self) -> Optional[float]:
        return _relative_gap(self.eps, self.limit_paper)

    @property
    def gap_frozen(self) -> Optional[float]:
        return _relative_gap(self.eps, self.limit_frozen)


@dataclass
class ConvergenceTable:
    rows: List[SweepRow]
    symbol: str = "symbol"
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        hs = [row.h for row in self.rows]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValidationError(f"h column must be strictly decreasing, got {hs}")
        for row in self.rows:
            total = math.fsum(row.parts)
            if abs(total - row.eps) > 1e-12 * max(abs(row.eps), 1e-300) + 1e-300:
                raise ValidationError(f"parts at h={row.h} sum to {total}, not eps_h = {row.eps}")

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(row, name) is None else getattr(row, name) for row in self.rows])

    def header(self) -> List[str]:
        parts = len(self.rows[0].parts) if self.rows else 0
        return (["h", "eps_h"] + [f"part_{j + 1}" for j in range(parts)]
                + ["limit_paper", "limit_frozen", "gap_paper", "gap_frozen"])

    def to_rows(self) -> List[List[Optional[float]]]:
        return [
            [row.h, row.eps, *row.parts, row.limit_paper, row.limit_frozen, row.gap_paper, row.gap_frozen]
            for row in self.rows
        ]

    def to_csv(self, path: Union[str, Path], digest: Optional[str] = None) -> Path:
        extra = {"symbol": self.symbol}
        for k, note in enumerate(self.notes):
            extra[f"note_{k + 1}"] = note
        return write_csv(Path(path), self.header(), self.to_rows(), digest, extra)


def h_sweep(
    a: Symbol,
    state_family: Callable[[float], Field],
    h_list: Sequence[float],
    pu: PartitionOfUnity,
    xi0: Optional[Sequence[float]] = None,
    truncation_radius: float = 8.0,
    workers: int = 1,
) -> ConvergenceTable:
    """
    One row per h: eps_h, patch parts, both candidate limits and relative gaps.
    No convergence verdict is taken here.
    """
    hs = [float(h) for h in h_list]
    if len(hs) < 4:
        raise ValidationError(f"h_list needs at least 4 values, got {len(hs)}")
    if any(b >= a_ for a_, b in zip(hs, hs[1:])):
        raise ValidationError(f"h_list must be strictly decreasing, got {hs}")

    def row(h: float):
        u = state_family(h)
        density = _energy_density(a, u, h)
        eps = float(u.grid.cell_volume * np.sum(density.values.real))
        parts = decompose(pu, density)
        note = None
        try:
            full = phase_space_limit_paper(a, u, truncation_radius).value
        except (ValidationError, GuardError) as exc:
            full, note = None, str(exc)
        frozen = frozen_frequency_limit(a, u, xi0) if xi0 is not None else None
        return SweepRow(h, eps, parts, full, frozen), note

    results = ordered_map(row, hs, workers)
    notes = []
    for _, note in results:
        if note and note not in notes:
            notes.append(note)
            logger.warning("phase-space integral skipped: %s", note)
    return ConvergenceTable([r for r, _ in results], symbol=a.name, notes=notes)
