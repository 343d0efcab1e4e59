"""
Bicharacteristic flow of Re p0 with the dissipative amplitude law.

    dx/dt  =  d_xi Re p0(x, xi)
    dxi/dt = -d_x  Re p0(x, xi)
    dl/dt  =  2 Im p0(x, xi)        (l = log |u|^2 along the ray)

Integrated with the Cash-Karp 5(4) embedded pair: the 5th-order solution is
propagated and the embedded difference controls the step so that the local
error (max norm over the state) stays below tol.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.artifacts import write_csv
from src.errors import FlowAborted, ValidationError
from src.parallel import ordered_map
from src.symbol import Symbol

logger = logging.getLogger(__name__)

BLOW_UP = 1e6
MAX_STEPS = 200_000
FD_STEP = 1e-6
SAFETY = 0.9
MIN_FACTOR, MAX_FACTOR = 0.2, 5.0

# Cash-Karp tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8])
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_B5 = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
_ERR = np.array([-277 / 64512, 0.0, 6925 / 370944, -6925 / 202752, -277 / 14336, 277 / 7084])


@dataclass(frozen=True)
class PhasePoint:
    x: Tuple[float, ...]
    xi: Tuple[float, ...]

    def __post_init__(self):
        try:
            x = tuple(float(v) for v in np.atleast_1d(self.x))
            xi = tuple(float(v) for v in np.atleast_1d(self.xi))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"phase point coordinates must be numbers, got x={self.x!r}, xi={self.xi!r}") from exc
        if len(x) != len(xi) or len(x) not in (1, 2):
            raise ValidationError(f"phase point needs matching x, xi of dim 1 or 2, got {x}, {xi}")
        if not all(math.isfinite(v) for v in x + xi):
            raise ValidationError(f"phase point is not finite: x={x}, xi={xi}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self) -> int:
        return len(self.x)


def as_phase_point(start: Union[PhasePoint, Sequence]) -> PhasePoint:
    if isinstance(start, PhasePoint):
        return start
    x, xi = start
    return PhasePoint(x, xi)


@dataclass
class Trajectory:
    """
    Sampled ray. times are monotone in the direction of integration
    (increasing for t_end > 0). step_sizes / error_estimates hold one entry
    per accepted step and need not match the sample count when t_eval is used.
    """
    times: np.ndarray
    xs: np.ndarray
    xis: np.ndarray
    log_amplitude: np.ndarray
    step_sizes: List[float] = field(default_factory=list)
    error_estimates: List[float] = field(default_factory=list)
    rejected_steps: int = 0
    status: str = "completed"
    symbol: str = "symbol"

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def points(self) -> List[PhasePoint]:
        return [PhasePoint(x, xi) for x, xi in zip(self.xs, self.xis)]

    def final(self) -> PhasePoint:
        return PhasePoint(self.xs[-1], self.xis[-1])

    def sample(self, times: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Linear interpolation of (x, xi, l) at the given times; exact on stored samples."""
        times = np.asarray(times, dtype=float)
        order = np.argsort(self.times)
        t = self.times[order]
        interp = lambda column: np.interp(times, t, column[order])
        xs = np.stack([interp(self.xs[:, d]) for d in range(self.dim)], axis=-1)
        xis = np.stack([interp(self.xis[:, d]) for d in range(self.dim)], axis=-1)
        return xs, xis, interp(self.log_amplitude)

    def header(self) -> List[str]:
        return (["t"] + [f"x_{d}" for d in range(self.dim)]
                + [f"xi_{d}" for d in range(self.dim)] + ["log_amp"])

    def to_rows(self) -> List[List[float]]:
        return [[t, *x, *xi, l] for t, x, xi, l in zip(self.times, self.xs, self.xis, self.log_amplitude)]

    def to_csv(self, path: Union[str, Path], digest: Optional[str] = None) -> Path:
        return write_csv(Path(path), self.header(), self.to_rows(), digest,
                         {"symbol": self.symbol, "status": self.status})


def _hamiltonian_gradient(p0: Symbol, x: np.ndarray, xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(d_x Re p0, d_xi Re p0) at one point."""
    if p0.gradient is not None:
        dx, dxi = p0.gradient(x[:, None], xi[:, None])
        return (np.real(np.broadcast_to(dx, x[:, None].shape))[:, 0],
                np.real(np.broadcast_to(dxi, xi[:, None].shape))[:, 0])
    return finite_difference_gradient(p0, x, xi)


def finite_difference_gradient(p0: Symbol, x: np.ndarray, xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences of Re p0 with step 1e-6 * max(1, |z|) per coordinate."""
    z = np.concatenate([x, xi])
    dim = x.size
    grad = np.empty_like(z)
    for i in range(z.size):
        step = FD_STEP * max(1.0, abs(z[i]))
        plus, minus = z.copy(), z.copy()
        plus[i] += step
        minus[i] -= step
        stacked = np.stack([plus, minus], axis=1)
        values = p0(stacked[:dim], stacked[dim:]).real
        grad[i] = (values[0] - values[1]) / (2.0 * step)
    return grad[:dim], grad[dim:]


def _rhs(p0: Symbol, dim: int, y: np.ndarray) -> np.ndarray:
    x, xi = y[:dim], y[dim:2 * dim]
    dx, dxi = _hamiltonian_gradient(p0, x, xi)
    value = complex(p0(x[:, None], xi[:, None])[0])
    return np.concatenate([dxi, -dx, [2.0 * value.imag]])


def _cash_karp_step(p0: Symbol, dim: int, y: np.ndarray, dt: float) -> Tuple[np.ndarray, float]:
    stages = []
    for i in range(6):
        increment = sum((a * k for a, k in zip(_A[i], stages)), np.zeros_like(y))
        stages.append(_rhs(p0, dim, y + dt * increment))
    k = np.array(stages)
    y_next = y + dt * (_B5 @ k)
    error = float(np.max(np.abs(dt * (_ERR @ k))))
    return y_next, error


def _targets(t_end: float, t_eval: Optional[Sequence[float]]) -> np.ndarray:
    if t_eval is None:
        return np.array([t_end])
    t_eval = np.asarray(t_eval, dtype=float)
    direction = math.copysign(1.0, t_end)
    if np.any(direction * t_eval < 0) or np.any(direction * t_eval > direction * t_end):
        raise ValidationError(f"t_eval must lie between 0 and t_end = {t_end}")
    if np.any(direction * np.diff(t_eval) <= 0):
        raise ValidationError("t_eval must be strictly monotone towards t_end")
    targets = t_eval[t_eval != 0.0]
    if not targets.size or targets[-1] != t_end:
        targets = np.append(targets, t_end)
    return targets


def flow(
    p0: Symbol,
    start: Union[PhasePoint, Sequence],
    t_end: float,
    tol: float = 1e-8,
    t_eval: Optional[Sequence[float]] = None,
    log_amplitude0: float = 0.0,
    initial_step: Optional[float] = None,
) -> Trajectory:
    """
    Integrate the ray from `start` to t_end (negative t_end flows backward).

    Without t_eval every accepted step is recorded; with t_eval the integrator
    lands exactly on each requested time and records only those (plus t = 0).
    Raises FlowAborted carrying the partial trajectory on blow-up
    (|x| + |xi| > 1e6), step underflow or step exhaustion.
    """
    if not 1e-12 <= tol <= 1e-4:
        raise ValidationError(f"tol must lie in [1e-12, 1e-4], got {tol}")
    if t_end == 0:
        raise ValidationError("t_end must be nonzero")
    start = as_phase_point(start)
    dim = start.dim
    direction = math.copysign(1.0, t_end)
    targets = _targets(float(t_end), t_eval)
    record_every_step = t_eval is None

    y = np.concatenate([start.x, start.xi, [log_amplitude0]]).astype(float)
    t = 0.0
    times, states = [0.0], [y.copy()]
    steps, errors = [], []
    rejected = 0
    dt = direction * (initial_step or min(abs(t_end), 1e-2))

    def partial(status: str) -> Trajectory:
        data = np.array(states)
        return Trajectory(np.array(times), data[:, :dim], data[:, dim:2 * dim], data[:, -1],
                          steps, errors, rejected, status, p0.name)

    target_index = 0
    for _ in range(MAX_STEPS):
        target = targets[target_index]
        remaining = target - t
        landing = abs(dt) >= abs(remaining)
        step = remaining if landing else dt
        y_next, error = _cash_karp_step(p0, dim, y, step)

        if not math.isfinite(error) or not np.all(np.isfinite(y_next)) or error > tol:
            rejected += 1
            factor = max(MIN_FACTOR, SAFETY * (tol / error) ** 0.2) if math.isfinite(error) else MIN_FACTOR
            dt = step * factor
            if abs(dt) < 1e-14 * max(1.0, abs(t)):
                raise FlowAborted("step_underflow", f"step size {dt:.3g} underflowed at t = {t:.6g}",
                                  partial("step_underflow"))
            continue

        t = target if landing else t + step
        y = y_next
        steps.append(float(step))
        errors.append(error)
        if record_every_step or landing:
            times.append(float(t))
            states.append(y.copy())
        if np.sum(np.abs(y[:2 * dim])) > BLOW_UP:
            raise FlowAborted("blow_up", f"|x| + |xi| exceeded {BLOW_UP:g} at t = {t:.6g}",
                              partial("blow_up"))
        if landing:
            target_index += 1
            if target_index == len(targets):
                logger.debug("flow of %s: %d steps, %d rejected", p0.name, len(steps), rejected)
                return partial("completed")

        if landing and abs(step) < abs(dt):
            # clipped landing step says little about the next one
            continue
        factor = MAX_FACTOR if error == 0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * (tol / error) ** 0.2))
        dt = step * factor

    raise FlowAborted("max_steps", f"no completion after {MAX_STEPS} steps at t = {t:.6g}", partial("max_steps"))


def conserve_check(p0: Symbol, traj: Trajectory) -> float:
    """max_t |Re p0(x(t), xi(t)) - Re p0(x(0), xi(0))|."""
    values = p0(traj.xs.T, traj.xis.T).real
    return float(np.max(np.abs(values - values[0])))


def flow_fan(
    p0: Symbol,
    starts: Sequence[Union[PhasePoint, Sequence]],
    t_end: float,
    tol: float = 1e-8,
    workers: int = 1,
    t_eval: Optional[Sequence[float]] = None,
) -> List[Trajectory]:
    """Independent flows from each start, returned in input order."""
    points = [as_phase_point(s) for s in starts]
    return ordered_map(lambda s: flow(p0, s, t_end, tol, t_eval=t_eval), points, workers)
