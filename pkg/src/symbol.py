"""
Symbols a(x, xi) on phase space and their empirical validators.

A Symbol wraps a vectorized evaluation rule. Coordinates are component-leading:
x and xi have shape (dim, *batch), and the evaluator returns an array of shape
batch (broadcast between x and xi). Builtins carry their declared order,
separability (a = f(x) g(xi)), additive split (a = g(xi) + f(x)), analytic
gradient and dissipativity metadata.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from src.errors import ValidationError

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]
Gradient = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

FIT_TOLERANCE = 0.15
DERIVATIVE_CAP = 2
FD_RELATIVE_STEP = 1e-4
ZERO_TOLERANCE = 1e-6
DISSIPATIVITY_TOLERANCE = 1e-12

BUILTIN_NAMES = ("constant", "bessel_decay", "multiplier", "potential", "free", "harmonic", "damped_free")


def batch_shape(x: np.ndarray, xi: np.ndarray) -> Tuple[int, ...]:
    return np.broadcast_shapes(np.shape(x)[1:], np.shape(xi)[1:])


@dataclass(frozen=True)
class Symbol:
    """
    Phase-space symbol with metadata.

    separable: (f, g) with a = f(x) g(xi); a None entry stands for 1.
    additive: (g, f) with a = g(xi) + f(x); a None entry stands for 0.
    gradient: analytic (d_x a, d_xi a), each shaped like its argument.
    """
    evaluator: Evaluator
    declared_order: float
    name: str = "symbol"
    separable: Optional[Tuple[Optional[Callable], Optional[Callable]]] = None
    dissipative: bool = False
    gradient: Optional[Gradient] = None
    additive: Optional[Tuple[Optional[Callable], Optional[Callable]]] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def __call__(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        values = np.asarray(self.evaluator(x, xi), dtype=np.complex128)
        return np.broadcast_to(values, batch_shape(x, xi))

    def spatial_factor(self, x: np.ndarray) -> np.ndarray:
        f = self.separable[0] if self.separable else None
        shape = np.shape(x)[1:]
        return np.ones(shape, dtype=np.complex128) if f is None else np.broadcast_to(
            np.asarray(f(x), dtype=np.complex128), shape)

    def frequency_factor(self, xi: np.ndarray) -> np.ndarray:
        g = self.separable[1] if self.separable else None
        shape = np.shape(xi)[1:]
        return np.ones(shape, dtype=np.complex128) if g is None else np.broadcast_to(
            np.asarray(g(xi), dtype=np.complex128), shape)

    def additive_parts(self) -> Tuple[Callable, Callable]:
        """(g(xi), f(x)) with missing parts replaced by zero functions."""
        if self.additive is None:
            raise ValidationError(f"symbol '{self.name}' has no additive split g(xi) + f(x)")
        g, f = self.additive
        zero = lambda z: np.zeros(np.shape(z)[1:], dtype=np.complex128)
        return (g or zero), (f or zero)

    def verify_separable(self, dim: int = 1, samples: int = 1000, seed: int = 0, box: float = 4.0) -> float:
        """Max relative deviation between f(x) g(xi) and direct evaluation."""
        if self.separable is None:
            raise ValidationError(f"symbol '{self.name}' declares no separable form")
        rng = np.random.default_rng(seed)
        x = rng.uniform(-box, box, size=(dim, samples))
        xi = rng.uniform(-box, box, size=(dim, samples))
        direct = self(x, xi)
        factored = self.spatial_factor(x) * self.frequency_factor(xi)
        return float(np.max(np.abs(direct - factored) / np.maximum(1.0, np.abs(direct))))


@dataclass(frozen=True)
class SymbolExpansion:
    """Truncated expansion a_0 + h a_1 + ... with term k of order <= m - k."""
    order: float
    terms: Tuple[Symbol, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValidationError("an expansion needs at least one term")
        for k, term in enumerate(terms):
            if term.declared_order > self.order - k + 1e-12:
                raise ValidationError(
                    f"term {k} ('{term.name}') declares order {term.declared_order} > {self.order - k}"
                )
        object.__setattr__(self, "terms", terms)


# ---------------------------------------------------------------------------
# Builtins
# ---------------------------------------------------------------------------

def _float_param(params: Dict[str, Any], key: str, default: Any = None) -> float:
    value = params.get(key, default)
    if isinstance(value, (bool, str)):
        raise ValidationError(f"parameter '{key}' must be a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"parameter '{key}' must be a number, got {value!r}") from exc


def _int_param(params: Dict[str, Any], key: str, default: int) -> int:
    value = params.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValidationError(f"parameter '{key}' must be an integer, got {value!r}")
    return int(value)


def _as_complex(value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValidationError(f"complex parameter must be [re, im], got {value}")
        parts = {"re": value[0], "im": value[1]}
        return complex(_float_param(parts, "re"), _float_param(parts, "im"))
    if isinstance(value, (bool, str)):
        raise ValidationError(f"complex parameter must be a number or [re, im], got {value!r}")
    try:
        return complex(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"complex parameter must be a number or [re, im], got {value!r}") from exc


def _sq(z: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(z) ** 2, axis=0)


def _ones(z: np.ndarray) -> np.ndarray:
    return np.ones(np.shape(z)[1:])


def _sample_callable(fn: Callable, params: Dict[str, Any]) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate a user callable at the origin and 1000 uniform points of [-4, 4]^dim."""
    dim = _int_param(params, "dim", 1)
    if dim < 1:
        raise ValidationError(f"parameter 'dim' must be >= 1, got {dim}")
    rng = np.random.default_rng(0)
    z = np.concatenate([np.zeros((dim, 1)), rng.uniform(-4.0, 4.0, size=(dim, 1000))], axis=1)
    return z, np.broadcast_to(np.asarray(fn(z), dtype=np.complex128), z.shape[1:])


def _check_claimed_dissipative(fn: Callable, params: Dict[str, Any], name: str) -> None:
    z, values = _sample_callable(fn, params)
    k = int(np.argmax(values.imag))
    if values.imag[k] > DISSIPATIVITY_TOLERANCE:
        raise ValidationError(
            f"{name} is flagged dissipative but Im = {values.imag[k]:.3g} at {z[:, k].tolist()}"
        )


def builtin(name: str, params: Optional[Dict[str, Any]] = None) -> Symbol:
    """Construct a named test symbol; see BUILTIN_NAMES."""
    params = dict(params or {})
    factory = _BUILTINS.get(name)
    if factory is None:
        raise ValidationError(f"unknown builtin symbol '{name}'; known: {', '.join(BUILTIN_NAMES)}")
    symbol = factory(params)
    logger.debug("built symbol %s (order %s) with %s", name, symbol.declared_order, params)
    return symbol


def _constant(params):
    value = _as_complex(params.get("value", 1.0))
    g = lambda xi: value * _ones(xi)
    return Symbol(
        evaluator=lambda x, xi: value * np.ones(batch_shape(x, xi)),
        declared_order=0.0,
        name="constant",
        separable=(None, g),
        additive=(g, None),
        dissipative=value.imag <= 0,
        gradient=lambda x, xi: (np.zeros_like(x, dtype=complex), np.zeros_like(xi, dtype=complex)),
        params={"value": value},
    )


def _bessel(m: float, name: str) -> Symbol:
    g = lambda xi: (1.0 + _sq(xi)) ** (m / 2.0)
    return Symbol(
        evaluator=lambda x, xi: np.broadcast_to(g(xi), batch_shape(x, xi)),
        declared_order=m,
        name=name,
        separable=(None, g),
        additive=(g, None),
        dissipative=True,
        gradient=lambda x, xi: (
            np.zeros_like(x, dtype=complex),
            (m * np.asarray(xi) * (1.0 + _sq(xi)) ** (m / 2.0 - 1.0)).astype(complex),
        ),
        params={"m": m},
    )


def _bessel_decay(params):
    if "m" not in params:
        raise ValidationError("bessel_decay requires parameter 'm'")
    return _bessel(_float_param(params, "m"), "bessel_decay")


def _multiplier(params):
    if callable(params.get("g")):
        if "order" not in params:
            raise ValidationError("multiplier with a callable g requires 'order'")
        g = params["g"]
        dissipative = bool(params.get("dissipative", False))
        if dissipative:
            _check_claimed_dissipative(g, params, "multiplier g")
        return Symbol(
            evaluator=lambda x, xi: np.broadcast_to(g(xi), batch_shape(x, xi)),
            declared_order=_float_param(params, "order"),
            name="multiplier",
            separable=(None, g),
            additive=(g, None),
            dissipative=dissipative,
            params={"profile": "callable"},
        )
    profile = params.get("profile", "linear")
    if profile == "bessel":
        return _bessel(_float_param(params, "m", -2.0), "multiplier")
    if profile != "linear":
        raise ValidationError(f"unknown multiplier profile '{profile}'")
    axis = _int_param(params, "axis", 0)
    offset = _float_param(params, "offset", 0.0)
    if axis < 0:
        raise ValidationError(f"multiplier axis must be >= 0, got {axis}")

    def g(xi):
        return np.asarray(xi)[axis] - offset

    def gradient(x, xi):
        d_xi = np.zeros_like(xi, dtype=complex)
        d_xi[axis] = 1.0
        return np.zeros_like(x, dtype=complex), d_xi

    return Symbol(
        evaluator=lambda x, xi: np.broadcast_to(g(xi), batch_shape(x, xi)),
        declared_order=1.0,
        name="multiplier",
        separable=(None, g),
        additive=(g, None),
        dissipative=True,
        gradient=gradient,
        params={"profile": "linear", "axis": axis, "offset": offset},
    )


def _potential(params):
    if callable(params.get("f")):
        f = params["f"]
        dissipative = bool(params.get("dissipative", False))
        if dissipative:
            _check_claimed_dissipative(f, params, "potential f")
        meta = {"profile": "callable"}
        gradient = None
    else:
        profile = params.get("profile", "gaussian")
        if profile == "constant":
            value = _as_complex(params.get("value", 1.0))
            f = lambda x: value * _ones(x)
            gradient = lambda x, xi: (np.zeros_like(x, dtype=complex), np.zeros_like(xi, dtype=complex))
            dissipative = value.imag <= 0
            meta = {"profile": "constant", "value": value}
        elif profile == "gaussian":
            amplitude = _as_complex(params.get("amplitude", 1.0))
            width = _float_param(params, "width", 1.0)
            if width <= 0:
                raise ValidationError(f"potential width must be positive, got {width}")
            try:
                center = np.atleast_1d(np.asarray(params.get("center", 0.0), dtype=float))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"potential center must be a list of numbers, got {params.get('center')!r}") from exc

            def f(x):
                offset = np.asarray(x) - center.reshape((-1,) + (1,) * (np.ndim(x) - 1))
                return amplitude * np.exp(-_sq(offset) / (2.0 * width ** 2))

            def gradient(x, xi):
                offset = np.asarray(x) - center.reshape((-1,) + (1,) * (np.ndim(x) - 1))
                return -offset / width ** 2 * f(x), np.zeros_like(xi, dtype=complex)

            dissipative = amplitude.imag <= 0
            meta = {"profile": "gaussian", "amplitude": amplitude, "width": width, "center": center.tolist()}
        else:
            raise ValidationError(f"unknown potential profile '{profile}'")
    return Symbol(
        evaluator=lambda x, xi: np.broadcast_to(f(x), batch_shape(x, xi)),
        declared_order=0.0,
        name="potential",
        separable=(f, None),
        additive=(None, f),
        dissipative=dissipative,
        gradient=gradient,
        params=meta,
    )


def _free(params):
    shift = _as_complex(params.get("shift", 0.0))
    g = lambda xi: _sq(xi) / 2.0 - shift
    return Symbol(
        evaluator=lambda x, xi: np.broadcast_to(g(xi), batch_shape(x, xi)),
        declared_order=2.0,
        name="free",
        separable=(None, g),
        additive=(g, None),
        dissipative=shift.imag >= 0,
        gradient=lambda x, xi: (np.zeros_like(x, dtype=complex), np.asarray(xi, dtype=complex)),
        params={"shift": shift},
    )


def _harmonic(params):
    shift = _as_complex(params.get("shift", 0.0))
    g = lambda xi: _sq(xi) / 2.0 - shift
    f = lambda x: _sq(x) / 2.0
    return Symbol(
        evaluator=lambda x, xi: (_sq(x) + _sq(xi)) / 2.0 - shift,
        declared_order=2.0,
        name="harmonic",
        additive=(g, f),
        dissipative=shift.imag >= 0,
        gradient=lambda x, xi: (np.asarray(x, dtype=complex), np.asarray(xi, dtype=complex)),
        params={"shift": shift},
    )


def _damped_free(params):
    gamma = params.get("gamma", 0.5)
    profile = params.get("profile", "constant")
    if callable(gamma):
        damping = gamma
        z, values = _sample_callable(gamma, params)
        k = int(np.argmin(values.real))
        if values.real[k] < 0 or np.max(np.abs(values.imag)) > DISSIPATIVITY_TOLERANCE:
            raise ValidationError(
                f"damped_free requires a real gamma >= 0, got {complex(values[k])} at {z[:, k].tolist()}"
            )
        slope = params.get("gamma_gradient")
        meta = {"profile": "callable"}
    else:
        gamma = _float_param(params, "gamma", 0.5)
        if gamma < 0:
            raise ValidationError(f"damped_free requires gamma >= 0, got {gamma}")
        if profile == "constant":
            damping = lambda x: gamma * _ones(x)
            slope = lambda x: np.zeros_like(x, dtype=float)
        elif profile == "tanh":
            damping = lambda x: gamma * (1.0 + np.tanh(np.asarray(x)[0]))

            def slope(x):
                out = np.zeros_like(x, dtype=float)
                out[0] = gamma / np.cosh(np.asarray(x)[0]) ** 2
                return out
        else:
            raise ValidationError(f"unknown damping profile '{profile}'")
        meta = {"gamma": gamma, "profile": profile}

    g = lambda xi: _sq(xi) / 2.0
    f = lambda x: -1j * damping(x)
    gradient = None
    if slope is not None:
        gradient = lambda x, xi: (-1j * slope(x), np.asarray(xi, dtype=complex))
    return Symbol(
        evaluator=lambda x, xi: _sq(xi) / 2.0 - 1j * damping(x),
        declared_order=2.0,
        name="damped_free",
        additive=(g, f),
        dissipative=True,
        gradient=gradient,
        params=meta,
    )


_BUILTINS = {
    "constant": _constant,
    "bessel_decay": _bessel_decay,
    "multiplier": _multiplier,
    "potential": _potential,
    "free": _free,
    "harmonic": _harmonic,
    "damped_free": _damped_free,
}


# ---------------------------------------------------------------------------
# Symbol-class verification
# ---------------------------------------------------------------------------

@dataclass
class DerivativeFit:
    """Decay fit of max |d_x^alpha d_xi^beta a| against (1 + |xi|)."""
    alpha: Tuple[int, ...]
    beta: Tuple[int, ...]
    exponent: float
    constant: float
    bound: float
    vanishes: bool
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "exponent": None if self.vanishes else self.exponent,
            "constant": None if self.vanishes else self.constant,
            "bound": self.bound,
            "vanishes": self.vanishes,
            "passed": self.passed,
        }


@dataclass
class SymbolClassReport:
    symbol: str
    claimed_order: float
    radii: List[float]
    directions: int
    fits: List[DerivativeFit]
    fit_tolerance: float = FIT_TOLERANCE
    derivative_cap: int = DERIVATIVE_CAP

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.fits)

    def fit(self, alpha: Sequence[int], beta: Sequence[int]) -> DerivativeFit:
        for f in self.fits:
            if f.alpha == tuple(alpha) and f.beta == tuple(beta):
                return f
        raise KeyError((tuple(alpha), tuple(beta)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "symbol": self.symbol,
            "claimed_order": self.claimed_order,
            "verdict": "pass" if self.passed else "fail",
            "radii": self.radii,
            "directions": self.directions,
            "fit_tolerance": self.fit_tolerance,
            "derivative_cap": self.derivative_cap,
            "fits": [f.to_dict() for f in self.fits],
        }


def multi_indices(dim: int, cap: int = DERIVATIVE_CAP) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """All (alpha, beta) in N^dim x N^dim with |alpha| + |beta| <= cap."""
    out = []
    for counts in product(range(cap + 1), repeat=2 * dim):
        if sum(counts) <= cap:
            out.append((tuple(counts[:dim]), tuple(counts[dim:])))
    return sorted(out, key=lambda ab: (sum(ab[0]) + sum(ab[1]), ab[1], ab[0]))


def mixed_difference(a: Symbol, z: np.ndarray, counts: Tuple[int, ...], steps: np.ndarray) -> np.ndarray:
    """Nested central differences of a at z = (x, xi) stacked, shape (2n, P)."""
    for i, c in enumerate(counts):
        if c:
            reduced = counts[:i] + (c - 1,) + counts[i + 1:]
            e = np.zeros_like(z)
            e[i] = steps[i]
            forward = mixed_difference(a, z + e, reduced, steps)
            backward = mixed_difference(a, z - e, reduced, steps)
            return (forward - backward) / (2.0 * steps[i])
    n = z.shape[0] // 2
    return a(z[:n], z[n:])


def _sphere_directions(dim: int, directions: int) -> np.ndarray:
    if dim == 1:
        # the 0-sphere has two points
        return np.array([[1.0], [-1.0]])
    angles = 2.0 * math.pi * np.arange(directions) / directions
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _default_x_samples(dim: int) -> np.ndarray:
    base = np.array([-1.5, 0.0, 0.5, 2.0])
    return np.array(list(product(base, repeat=dim)))


def verify_symbol_class(
    a: Symbol,
    m: float,
    radii: Sequence[float],
    directions: int = 8,
    dim: int = 1,
    x_samples: Optional[np.ndarray] = None,
    fit_tolerance: float = FIT_TOLERANCE,
) -> SymbolClassReport:
    """
    Empirical membership test for S^m.

    For every (alpha, beta) with |alpha| + |beta| <= 2 the maximum over
    directions and x samples of the finite-difference derivative is fitted
    log-log against (1 + r); the verdict passes when every fitted exponent is
    at most m - |beta| + fit_tolerance.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 4:
        raise ValidationError(f"need at least 4 radii, got {radii.size}")
    if np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise ValidationError("radii must be positive and strictly increasing")
    if radii[-1] / radii[0] < 16:
        raise ValidationError(f"radii must span a factor of 16, got {radii[-1] / radii[0]:.3g}")
    if directions < 8:
        raise ValidationError(f"need at least 8 directions, got {directions}")

    omegas = _sphere_directions(dim, directions)
    xs = _default_x_samples(dim) if x_samples is None else np.atleast_2d(np.asarray(x_samples, dtype=float))
    if xs.shape[1] != dim:
        xs = xs.reshape(-1, dim)
    indices = multi_indices(dim)
    magnitudes = np.zeros((len(indices), radii.size))
    floors = np.zeros((len(indices), radii.size))
    eps = np.finfo(float).eps

    for j, r in enumerate(radii):
        pairs = [(x, r * w) for x in xs for w in omegas]
        z = np.array([np.concatenate(p) for p in pairs]).T
        base = a(z[:dim], z[dim:])
        bad = np.flatnonzero(~np.isfinite(base))
        if bad.size:
            point = z[:, bad[0]]
            raise ValidationError(
                f"symbol '{a.name}' is non-finite at (x, xi) = ({point[:dim].tolist()}, {point[dim:].tolist()})"
            )
        steps = FD_RELATIVE_STEP * np.maximum(1.0, np.abs(z))
        scale = np.max(np.abs(base))
        for i, (alpha, beta) in enumerate(indices):
            counts = alpha + beta
            derivative = mixed_difference(a, z, counts, steps)
            magnitudes[i, j] = np.max(np.abs(derivative))
            order = sum(counts)
            floors[i, j] = 64.0 * eps * max(scale, 1e-300) / np.min(steps) ** order

    fits = []
    log_r = np.log1p(radii)
    for i, (alpha, beta) in enumerate(indices):
        bound = m - sum(beta)
        above = magnitudes[i] > floors[i]
        if above.sum() < 2:
            fits.append(DerivativeFit(alpha, beta, -math.inf, 0.0, bound, True, True))
            continue
        slope, intercept = np.polyfit(log_r[above], np.log(magnitudes[i][above]), 1)
        fits.append(DerivativeFit(
            alpha, beta, float(slope), float(math.exp(intercept)), bound, False,
            bool(slope <= bound + fit_tolerance),
        ))
    report = SymbolClassReport(
        symbol=a.name,
        claimed_order=float(m),
        radii=radii.tolist(),
        directions=len(omegas),
        fits=fits,
        fit_tolerance=fit_tolerance,
    )
    logger.info("symbol class check for %s at m=%s: %s", a.name, m, "pass" if report.passed else "fail")
    return report


# ---------------------------------------------------------------------------
# Principal type and dissipativity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseBox:
    """Axis-aligned region in (x, xi); one (lo, hi) pair per coordinate."""
    x_bounds: Tuple[Tuple[float, float], ...]
    xi_bounds: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        x_bounds = tuple((float(lo), float(hi)) for lo, hi in self.x_bounds)
        xi_bounds = tuple((float(lo), float(hi)) for lo, hi in self.xi_bounds)
        if len(x_bounds) != len(xi_bounds) or len(x_bounds) not in (1, 2):
            raise ValidationError("x and xi bounds must both have 1 or 2 axes")
        for lo, hi in x_bounds + xi_bounds:
            if not hi > lo:
                raise ValidationError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "x_bounds", x_bounds)
        object.__setattr__(self, "xi_bounds", xi_bounds)

    @property
    def dim(self) -> int:
        return len(self.x_bounds)

    @property
    def bounds(self) -> Tuple[Tuple[float, float], ...]:
        return self.x_bounds + self.xi_bounds

    def to_dict(self) -> Dict[str, Any]:
        return {"x": [list(b) for b in self.x_bounds], "xi": [list(b) for b in self.xi_bounds]}


@dataclass
class PrincipalTypeReport:
    symbol: str
    samples: int
    scale: float
    zero_points: int
    min_gradient_norm: Optional[float]
    violations: List[Dict[str, Any]]

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def zero_set_empty(self) -> bool:
        return self.zero_points == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "symbol": self.symbol,
            "verdict": "pass" if self.passed else "fail",
            "samples": self.samples,
            "scale": self.scale,
            "zero_points": self.zero_points,
            "zero_set_empty": self.zero_set_empty,
            "min_gradient_norm": self.min_gradient_norm,
            "violations": self.violations[:50],
            "violation_count": len(self.violations),
        }


@dataclass
class DissipativityReport:
    symbol: str
    samples: int
    max_imag: float
    argmax: List[float]

    @property
    def passed(self) -> bool:
        return self.max_imag <= DISSIPATIVITY_TOLERANCE

    def to_dict(self) -> Dict[str, Any]:
        return {
            "symbol": self.symbol,
            "verdict": "pass" if self.passed else "fail",
            "samples": self.samples,
            "max_imag": self.max_imag,
            "argmax": self.argmax,
        }


def _real_gradient(p0: Symbol, z: np.ndarray, dim: int) -> np.ndarray:
    """Central-difference gradient of Re p0 at the columns of z, shape (2n, P)."""
    grad = np.zeros_like(z)
    steps = 1e-6 * np.maximum(1.0, np.abs(z))
    for i in range(2 * dim):
        e = np.zeros_like(z)
        e[i] = steps[i]
        up = p0((z + e)[:dim], (z + e)[dim:]).real
        down = p0((z - e)[:dim], (z - e)[dim:]).real
        grad[i] = (up - down) / (2.0 * steps[i])
    return grad


def validate_principal_type(p0: Symbol, region: PhaseBox, samples: int = 1000,
                            max_refinements: int = 20000) -> PrincipalTypeReport:
    """
    Sampled check that grad Re p0 does not vanish on {p0 = 0}.

    Zeros are lattice points with |p0| < 1e-6 * scale plus roots of Re p0
    refined (brentq) on lattice edges where Re p0 changes sign.
    """
    if samples < 1000:
        raise ValidationError(f"principal-type check needs at least 1000 samples, got {samples}")
    dim = region.dim
    per_axis = max(3, math.ceil(samples ** (1.0 / (2 * dim))))
    if per_axis % 2 == 0:
        per_axis += 1
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in region.bounds]
    lattice = np.array(np.meshgrid(*axes, indexing="ij"))
    values = p0(lattice[:dim], lattice[dim:])
    finite = np.isfinite(values)
    if not np.all(finite):
        bad = tuple(int(i) for i in np.argwhere(~finite)[0])
        raise ValidationError(f"p0 is non-finite at {lattice[(slice(None),) + bad].tolist()}")
    scale = max(1.0, float(np.max(np.abs(values))))
    tol = ZERO_TOLERANCE * scale

    zeros = [lattice[(slice(None),) + idx] for idx in zip(*np.nonzero(np.abs(values) < tol))]

    real = values.real
    crossings = []
    for axis in range(2 * dim):
        lower = [slice(None)] * (2 * dim)
        upper = [slice(None)] * (2 * dim)
        lower[axis] = slice(0, -1)
        upper[axis] = slice(1, None)
        crossings.extend((axis, idx) for idx in np.argwhere(real[tuple(lower)] * real[tuple(upper)] < 0))
    if len(crossings) > max_refinements:
        logger.warning("principal-type refinement capped at %d of %d roots", max_refinements, len(crossings))
        crossings = crossings[:max_refinements]
    for axis, idx in crossings:
        start = lattice[(slice(None),) + tuple(idx)]
        direction = np.zeros(2 * dim)
        direction[axis] = axes[axis][1] - axes[axis][0]

        def along(t, start=start, direction=direction):
            z = start + t * direction
            return float(p0(z[:dim], z[dim:]).real)

        z = start + brentq(along, 0.0, 1.0, xtol=1e-14) * direction
        if abs(complex(p0(z[:dim], z[dim:]))) < tol:
            zeros.append(z)

    violations = []
    min_norm = None
    if zeros:
        points = np.array(zeros).T
        norms = np.linalg.norm(_real_gradient(p0, points, dim), axis=0)
        min_norm = float(np.min(norms))
        for k in np.flatnonzero(norms <= tol):
            violations.append({
                "x": points[:dim, k].tolist(),
                "xi": points[dim:, k].tolist(),
                "gradient_norm": float(norms[k]),
            })
    report = PrincipalTypeReport(p0.name, int(lattice[0].size), scale, len(zeros), min_norm, violations)
    logger.info("principal type for %s: %d zeros, %d violations", p0.name, len(zeros), len(violations))
    return report


def validate_dissipativity(p0: Symbol, region: PhaseBox, samples: int = 1000, seed: int = 0) -> DissipativityReport:
    """Max of Im p0 over uniform samples in the region; passes when <= 1e-12."""
    if samples < 1000:
        raise ValidationError(f"dissipativity check needs at least 1000 samples, got {samples}")
    dim = region.dim
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in region.bounds])
    hi = np.array([b[1] for b in region.bounds])
    z = lo[:, None] + (hi - lo)[:, None] * rng.random((2 * dim, samples))
    imag = p0(z[:dim], z[dim:]).imag
    k = int(np.argmax(imag))
    return DissipativityReport(p0.name, samples, float(imag[k]), z[:, k].tolist())
