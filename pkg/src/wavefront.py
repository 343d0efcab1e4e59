"""
Gabor phase-space densities, thresholded wavefront estimates, and split-step
evolution of ih du/dt = Op_h(g(xi) + f(x)) u.

propagation_check ties the pieces together: it evolves a coherent state,
tracks the Gabor centroid and compares it with the bicharacteristic of p0.
Time convention: classical time equals physical time and the quantum
generator is scaled by 1/h, so log-mass decay times h is compared with
2 int Im p0 along the ray.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from src.artifacts import write_csv
from src.bichar import flow
from src.energy import coherent_state
from src.errors import GuardError, ValidationError
from src.grid import Field, Grid
from src.parallel import ordered_map
from src.partition import periodic_distance
from src.symbol import DISSIPATIVITY_TOLERANCE, Symbol, batch_shape

logger = logging.getLogger(__name__)

WAVEFRONT_THRESHOLD = 0.1
SPECTRAL_GUARD = 1e-8
GUARD_MODE_FRACTION = 3.0 / 8.0
TIME_RESCALING = "classical time = physical time; quantum generator scaled by 1/h"
SURROGATE_NOTE = "dynamical surrogate: ih du/dt = Op_h(p0) u stands in for stationary P_h u = 0"


@dataclass
class PhaseSpaceDensity:
    """
    Gabor density on an (x0, xi) lattice; values shaped (*x_shape, *xi_shape).

    period: length of the periodic x box, or None for a non-periodic x lattice.
    """
    x_axes: Tuple[np.ndarray, ...]
    xi_axes: Tuple[np.ndarray, ...]
    values: np.ndarray
    h: float
    sigma: float
    cell_volume: float
    period: Optional[float] = None

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValidationError("phase-space density must be nonnegative")

    @property
    def dim(self) -> int:
        return len(self.x_axes)

    @property
    def total_mass(self) -> float:
        return float(self.cell_volume * np.sum(self.values))

    def normalized_mass(self) -> float:
        """total_mass / (2 pi h)^n, which approximates ||u||^2."""
        return self.total_mass / (2.0 * math.pi * self.h) ** self.dim

    def _coordinates(self) -> List[np.ndarray]:
        axes = list(self.x_axes) + list(self.xi_axes)
        return np.meshgrid(*axes, indexing="ij")

    def centroid(self) -> Tuple[np.ndarray, np.ndarray]:
        """Weighted mean of (x, xi); x is a circular mean when the box is periodic."""
        weight = np.sum(self.values)
        if weight == 0:
            raise ValidationError("centroid of a zero density is undefined")
        coordinates = self._coordinates()
        means = np.array([np.sum(c * self.values) / weight for c in coordinates])
        if self.period is not None:
            k = 2.0 * math.pi / self.period
            for d in range(self.dim):
                s = np.sum(np.sin(k * coordinates[d]) * self.values)
                c = np.sum(np.cos(k * coordinates[d]) * self.values)
                means[d] = math.atan2(s, c) / k
        return means[:self.dim], means[self.dim:]

    def x_marginal(self) -> np.ndarray:
        xi_axes = tuple(range(self.dim, 2 * self.dim))
        dxi = self.xi_axes[0][1] - self.xi_axes[0][0] if self.xi_axes[0].size > 1 else 1.0
        return np.sum(self.values, axis=xi_axes) * dxi ** self.dim

    def point(self, index: Sequence[int]) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        x = tuple(float(self.x_axes[d][index[d]]) for d in range(self.dim))
        xi = tuple(float(self.xi_axes[d][index[self.dim + d]]) for d in range(self.dim))
        return x, xi

    def argmax(self) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        return self.point(np.unravel_index(np.argmax(self.values), self.values.shape))

    def to_csv(self, path: Union[str, Path], digest: Optional[str] = None) -> Path:
        header = [f"x_{d}" for d in range(self.dim)] + [f"xi_{d}" for d in range(self.dim)] + ["value"]
        rows = ([*sum(self.point(index), ()), self.values[index]] for index in np.ndindex(*self.values.shape))
        return write_csv(Path(path), header, rows, digest, {"h": repr(self.h), "sigma": repr(self.sigma)})


def _xi_selection(grid: Grid, h: float, xi_window: Optional[Sequence[float]]) -> Tuple[np.ndarray, np.ndarray]:
    frequencies = grid.frequency_axis(h)
    order = np.argsort(frequencies, kind="stable")
    if xi_window is None:
        return order, frequencies[order]
    lo, hi = (float(v) for v in xi_window)
    nyquist = grid.nyquist(h)
    if not -nyquist <= lo < hi <= nyquist:
        raise ValidationError(f"xi window [{lo}, {hi}] must lie inside the Nyquist range +-{nyquist:.6g}")
    sorted_xi = frequencies[order]
    keep = (sorted_xi >= lo) & (sorted_xi <= hi)
    return order[keep], sorted_xi[keep]


def gabor_transform(
    u: Field,
    h: float,
    sigma: Optional[float] = None,
    xi_window: Optional[Sequence[float]] = None,
    x_stride: int = 1,
    workers: int = 1,
) -> PhaseSpaceDensity:
    """
    density(x0, xi) = |dx^n sum_y e^{-i xi.y/h} g(y - x0) u(y)|^2 with g the
    L^2-normalized periodic Gaussian of width sigma (default sqrt(h)).
    x0 runs over every x_stride-th grid point; xi over the dual lattice
    restricted to xi_window (applied per axis).
    """
    if h <= 0:
        raise ValidationError(f"h must be positive, got {h}")
    grid = u.grid
    sigma = math.sqrt(h) if sigma is None else float(sigma)
    if sigma < 2.0 * grid.spacing:
        raise ValidationError(f"window width {sigma:.4g} is narrower than 2 dx = {2 * grid.spacing:.4g}")
    if x_stride < 1:
        raise ValidationError(f"x_stride must be >= 1, got {x_stride}")
    dim, L = grid.dim, grid.half_length
    xi_index, xi_axis = _xi_selection(grid, h, xi_window)
    x_index = np.arange(0, grid.points_per_axis, x_stride)

    mesh = grid.mesh()
    base = np.exp(-sum(periodic_distance(mesh[d], -L, L) ** 2 for d in range(dim)) / (2.0 * sigma ** 2))
    base = base / math.sqrt(grid.cell_volume * np.sum(base ** 2))
    phase = grid.shift_phase() * grid.cell_volume
    selector = np.ix_(*(xi_index,) * dim)

    def column(center: Tuple[int, ...]) -> np.ndarray:
        window = np.roll(base, shift=center, axis=tuple(range(dim)))
        spectrum = np.fft.fftn(window * u.values) * phase
        return np.abs(spectrum[selector]) ** 2

    centers = list(product(x_index.tolist(), repeat=dim))
    columns = ordered_map(column, centers, workers)
    x_axis = grid.axis()[x_index]
    values = np.array(columns).reshape((x_index.size,) * dim + (xi_axis.size,) * dim)
    cell = (grid.spacing * x_stride * grid.dual_spacing(h)) ** dim
    return PhaseSpaceDensity((x_axis,) * dim, (xi_axis,) * dim, values, h, sigma, cell, 2.0 * grid.half_length)


@dataclass
class WavefrontEstimate:
    """Lattice points with density >= threshold_fraction * max, densest first."""
    points: List[Tuple[Tuple[float, ...], Tuple[float, ...]]]
    densities: List[float]
    indices: List[Tuple[int, ...]]
    threshold_fraction: float
    lattice_shape: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.points)

    def mask(self) -> np.ndarray:
        mask = np.zeros(self.lattice_shape, dtype=bool)
        for index in self.indices:
            mask[index] = True
        return mask

    def clusters(self) -> List[List[int]]:
        """Connected components under full lattice adjacency, as lists of point positions."""
        if not self.indices:
            return []
        structure = np.ones((3,) * len(self.lattice_shape), dtype=bool)
        labels, count = ndimage.label(self.mask(), structure=structure)
        groups: List[List[int]] = [[] for _ in range(count)]
        for position, index in enumerate(self.indices):
            groups[labels[index] - 1].append(position)
        return groups

    def to_dict(self) -> Dict[str, Any]:
        return {
            "threshold_fraction": self.threshold_fraction,
            "points": [{"x": list(x), "xi": list(xi), "density": d}
                       for (x, xi), d in zip(self.points, self.densities)],
            "clusters": len(self.clusters()),
        }


def estimate_wavefront(d: PhaseSpaceDensity, delta: float = WAVEFRONT_THRESHOLD) -> WavefrontEstimate:
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"threshold fraction must lie in (0, 1), got {delta}")
    peak = float(np.max(d.values)) if d.values.size else 0.0
    if peak <= 0.0:
        return WavefrontEstimate([], [], [], delta, d.values.shape)
    flat = d.values.reshape(-1)
    selected = np.flatnonzero(flat >= delta * peak)
    selected = selected[np.argsort(-flat[selected], kind="stable")]
    indices = [tuple(int(i) for i in np.unravel_index(k, d.values.shape)) for k in selected]
    return WavefrontEstimate(
        points=[d.point(index) for index in indices],
        densities=[float(flat[k]) for k in selected],
        indices=indices,
        threshold_fraction=delta,
        lattice_shape=d.values.shape,
    )


# ---------------------------------------------------------------------------
# Split-step evolution
# ---------------------------------------------------------------------------

@dataclass
class EvolutionRun:
    times: np.ndarray
    snapshots: List[Field]
    h: float
    dt: float
    metadata: Dict[str, Any] = field(default_factory=dict)

    def masses(self) -> np.ndarray:
        return np.array([s.norm_squared() for s in self.snapshots])

    def final(self) -> Field:
        return self.snapshots[-1]


def _high_mode_fraction(grid: Grid, values: np.ndarray) -> float:
    power = np.abs(np.fft.fftn(values)) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    cutoff = GUARD_MODE_FRACTION * grid.points_per_axis
    outside = np.zeros(grid.shape, dtype=bool)
    for modes in np.meshgrid(*(grid.signed_modes(),) * grid.dim, indexing="ij"):
        outside |= np.abs(modes) > cutoff
    return float(np.sum(power[outside])) / total


def _spectral_guard(grid: Grid, values: np.ndarray, when: str) -> None:
    fraction = _high_mode_fraction(grid, values)
    if fraction > SPECTRAL_GUARD:
        raise GuardError(
            f"{fraction:.3g} of the spectral energy lies beyond |k| > 3N/8 at {when}; "
            f"increase N or L to keep the field inside the resolved window"
        )


def _evaluate_part(part: Optional[Callable], points: np.ndarray) -> np.ndarray:
    if part is None:
        return np.zeros(points.shape[1:], dtype=np.complex128)
    values = np.asarray(part(points), dtype=np.complex128)
    return np.broadcast_to(values, points.shape[1:])


def evolve(
    g: Optional[Callable],
    f: Optional[Callable],
    u0: Field,
    h: float,
    t_end: float,
    dt: float,
    record_every: int = 1,
) -> EvolutionRun:
    """
    Strang splitting for ih du/dt = Op_h(g(xi) + f(x)) u: half potential step
    e^{-i f dt/(2h)}, full kinetic step e^{-i g dt/h} on the dual lattice,
    half potential step. dt is shrunk so that t_end is hit exactly.
    """
    if h <= 0 or t_end <= 0 or dt <= 0:
        raise ValidationError(f"h, t_end and dt must be positive, got h={h}, t_end={t_end}, dt={dt}")
    if dt > 0.01 * t_end * (1 + 1e-12):
        raise ValidationError(f"dt = {dt} exceeds 0.01 * t_end = {0.01 * t_end}")
    if record_every < 1:
        raise ValidationError(f"record_every must be >= 1, got {record_every}")
    grid = u0.grid
    potential = _evaluate_part(f, grid.mesh())
    kinetic = _evaluate_part(g, grid.frequencies(h))
    if np.max(potential.imag) > DISSIPATIVITY_TOLERANCE:
        index = np.unravel_index(np.argmax(potential.imag), grid.shape)
        raise ValidationError(f"potential is not dissipative: Im f = {potential.imag[index]:.3g} at index {index}")
    if np.max(kinetic.imag) > DISSIPATIVITY_TOLERANCE:
        raise ValidationError(f"multiplier part has Im g up to {np.max(kinetic.imag):.3g} > 0")

    _spectral_guard(grid, u0.values, "t = 0")
    steps = int(math.ceil(t_end / dt - 1e-9))
    dt = t_end / steps
    half = np.exp(-1j * potential * dt / (2.0 * h))
    full = np.exp(-1j * kinetic * dt / h)

    values = np.array(u0.values)
    times, snapshots = [0.0], [u0]
    for step in range(1, steps + 1):
        values = half * values
        # the (-1)^k box-offset phases of F_h and F_h^{-1} cancel
        values = np.fft.ifftn(full * np.fft.fftn(values))
        values = half * values
        if step % record_every == 0 or step == steps:
            times.append(t_end if step == steps else step * dt)
            snapshots.append(Field(grid, values))
    _spectral_guard(grid, values, f"t = {t_end}")

    logger.debug("evolved %d steps of dt=%.4g at h=%.4g", steps, dt, h)
    metadata = {"scheme": "strang", "steps": steps, "time_rescaling": TIME_RESCALING}
    return EvolutionRun(np.array(times), snapshots, h, dt, metadata)


# ---------------------------------------------------------------------------
# Propagation check
# ---------------------------------------------------------------------------

@dataclass
class PropagationReport:
    symbol: str
    x0: Tuple[float, ...]
    xi0: Tuple[float, ...]
    h: float
    t_end: float
    dt: float
    sigma: float
    times: np.ndarray
    centroid_x: np.ndarray
    centroid_xi: np.ndarray
    ray_x: np.ndarray
    ray_xi: np.ndarray
    field_log_mass: np.ndarray
    ray_log_amplitude: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)
    final_field: Optional[Field] = None

    @property
    def bound(self) -> float:
        return max(2.0 * self.sigma, 0.1)

    @property
    def max_x_deviation(self) -> float:
        """Largest centroid-to-ray gap in x, measured on the periodic box when the grid is known."""
        half_length = self.metadata.get("grid", {}).get("L")
        if half_length is None:
            return float(np.max(np.abs(self.centroid_x - self.ray_x)))
        return float(np.max(periodic_distance(self.centroid_x - self.ray_x, 0.0, half_length)))

    @property
    def max_xi_deviation(self) -> float:
        return float(np.max(np.abs(self.centroid_xi - self.ray_xi)))

    @property
    def decay_gap(self) -> float:
        """max_t |h (log m(t) - log m(0)) - (l(t) - l(0))|."""
        field_decay = self.h * (self.field_log_mass - self.field_log_mass[0])
        ray_decay = self.ray_log_amplitude - self.ray_log_amplitude[0]
        return float(np.max(np.abs(field_decay - ray_decay)))

    @property
    def passed(self) -> bool:
        return self.max_x_deviation <= self.bound and self.max_xi_deviation <= self.bound

    def header(self) -> List[str]:
        dim = len(self.x0)
        cols = lambda prefix: [f"{prefix}_{d}" for d in range(dim)]
        return (["t"] + cols("centroid_x") + cols("centroid_xi") + cols("ray_x") + cols("ray_xi")
                + ["field_log_mass", "ray_log_amp"])

    def to_rows(self) -> List[List[float]]:
        return [
            [t, *cx, *cxi, *rx, *rxi, m, l]
            for t, cx, cxi, rx, rxi, m, l in zip(self.times, self.centroid_x, self.centroid_xi, self.ray_x,
                                                 self.ray_xi, self.field_log_mass, self.ray_log_amplitude)
        ]

    def to_csv(self, path: Union[str, Path], digest: Optional[str] = None) -> Path:
        return write_csv(Path(path), self.header(), self.to_rows(), digest, {"symbol": self.symbol})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "symbol": self.symbol,
            "x0": list(self.x0),
            "xi0": list(self.xi0),
            "h": self.h,
            "t_end": self.t_end,
            "dt": self.dt,
            "sigma": self.sigma,
            "bound": self.bound,
            "max_x_deviation": self.max_x_deviation,
            "max_xi_deviation": self.max_xi_deviation,
            "decay_gap": self.decay_gap,
            "passed": self.passed,
            "dynamical_surrogate": True,
            "note": SURROGATE_NOTE,
            "metadata": self.metadata,
        }


def _split_symbol(p0: Union[Symbol, Tuple[Optional[Callable], Optional[Callable]]]) -> Tuple[Symbol, Callable, Callable]:
    if isinstance(p0, Symbol):
        g, f = p0.additive_parts()
        return p0, g, f
    g, f = p0
    zero = lambda z: np.zeros(np.shape(z)[1:], dtype=np.complex128)
    g, f = g or zero, f or zero
    combined = Symbol(
        evaluator=lambda x, xi: np.broadcast_to(g(xi), batch_shape(x, xi)) + np.broadcast_to(f(x), batch_shape(x, xi)),
        declared_order=0.0,
        name="g+f",
        additive=(g, f),
    )
    return combined, g, f


def propagation_check(
    p0: Union[Symbol, Tuple[Optional[Callable], Optional[Callable]]],
    x0: Sequence[float],
    xi0: Sequence[float],
    h: float,
    t_end: float,
    grid: Grid,
    dt: Optional[float] = None,
    sigma: Optional[float] = None,
    tol: float = 1e-8,
    checkpoints: int = 20,
    x_stride: int = 1,
    workers: int = 1,
) -> PropagationReport:
    """
    Evolve coherent_state(x0, xi0, h), take the Gabor centroid at `checkpoints`
    evenly spaced times and compare with the bicharacteristic from (x0, xi0).
    """
    symbol, g, f = _split_symbol(p0)
    sigma = math.sqrt(h) if sigma is None else float(sigma)
    dt = t_end / 200.0 if dt is None else dt
    u0 = coherent_state(grid, x0, xi0, h)
    steps = int(math.ceil(t_end / dt - 1e-9))
    run = evolve(g, f, u0, h, t_end, dt, record_every=max(1, steps // max(1, checkpoints)))

    centroids = []
    for snapshot in run.snapshots:
        density = gabor_transform(snapshot, h, sigma, x_stride=x_stride, workers=workers)
        centroids.append(density.centroid())
    x0 = tuple(float(v) for v in np.atleast_1d(x0))
    xi0 = tuple(float(v) for v in np.atleast_1d(xi0))
    ray = flow(symbol, (x0, xi0), t_end, tol, t_eval=run.times[1:])

    report = PropagationReport(
        symbol=symbol.name,
        x0=x0,
        xi0=xi0,
        h=h,
        t_end=t_end,
        dt=run.dt,
        sigma=sigma,
        times=run.times,
        centroid_x=np.array([c[0] for c in centroids]),
        centroid_xi=np.array([c[1] for c in centroids]),
        ray_x=ray.xs,
        ray_xi=ray.xis,
        field_log_mass=np.log(run.masses()),
        ray_log_amplitude=ray.log_amplitude,
        metadata=dict(run.metadata, grid={"dim": grid.dim, "N": grid.points_per_axis, "L": grid.half_length}),
        final_field=run.final(),
    )
    logger.info("propagation %s: dx=%.3g dxi=%.3g decay gap=%.3g", symbol.name, report.max_x_deviation,
                report.max_xi_deviation, report.decay_gap)
    return report
