"""
Experiment configuration: one JSON document with sections
{grid, symbol, states, sweep, partition, bichar, propagate}.

Every section is a dataclass with defaults; only the keys a subcommand
actually needs are mandatory, enforced through ExperimentConfig.require.
Errors name the dotted key (e.g. sweep.h_list).
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from src.energy import coherent_state
from src.errors import ConfigError, ValidationError
from src.grid import Field, Grid, band_limited_field
from src.symbol import BUILTIN_NAMES, PhaseBox, Symbol, builtin

SECTIONS = ("grid", "symbol", "states", "sweep", "partition", "bichar", "propagate")
STATE_KINDS = ("coherent", "gaussian", "random")


def _kind(name: str, default: Any = None, factory: Optional[Callable] = None):
    if factory is not None:
        return field(default_factory=factory, metadata={"kind": name})
    return field(default=default, metadata={"kind": name})


@dataclass
class GridConfig:
    dim: int = _kind("int", 1)
    points_per_axis: int = _kind("int", 256)
    half_length: float = _kind("float", 8.0)

    def build(self) -> Grid:
        try:
            return Grid(self.dim, self.points_per_axis, self.half_length)
        except ValidationError as exc:
            raise ConfigError("grid", str(exc)) from exc


@dataclass
class SymbolConfig:
    name: Optional[str] = _kind("str", None)
    params: Dict[str, Any] = _kind("dict", factory=dict)
    claimed_order: Optional[float] = _kind("float", None)
    radii: Optional[List[float]] = _kind("floats", None)
    directions: int = _kind("int", 8)
    region: Optional[Dict[str, Any]] = _kind("dict", None)
    samples: int = _kind("int", 1000)

    def build(self) -> Symbol:
        if self.name is None:
            raise ConfigError("symbol.name", "is required")
        if self.name not in BUILTIN_NAMES:
            raise ConfigError("symbol.name", f"unknown builtin '{self.name}'; expected one of {list(BUILTIN_NAMES)}")
        try:
            return builtin(self.name, self.params)
        except (ValidationError, TypeError, ValueError) as exc:
            raise ConfigError("symbol.params", str(exc)) from exc

    def phase_box(self, dim: int) -> PhaseBox:
        region = self.region or {}
        x_bounds = region.get("x", [[-4.0, 4.0]] * dim)
        xi_bounds = region.get("xi", [[-4.0, 4.0]] * dim)
        try:
            return PhaseBox(tuple(tuple(map(float, b)) for b in x_bounds),
                            tuple(tuple(map(float, b)) for b in xi_bounds))
        except (TypeError, ValueError) as exc:
            raise ConfigError("symbol.region", str(exc)) from exc


@dataclass
class StatesConfig:
    kind: str = _kind("str", "coherent")
    x0: Optional[List[float]] = _kind("floats", None)
    xi0: Optional[List[float]] = _kind("floats", None)
    width: float = _kind("float", 1.0)
    max_mode: int = _kind("int", 8)
    seed: Optional[int] = _kind("int", None)

    def family(self, grid: Grid, seed: int) -> Callable[[float], Field]:
        """Rule h -> Field; gaussian and random states do not depend on h."""
        if self.kind not in STATE_KINDS:
            raise ConfigError("states.kind", f"unknown state kind '{self.kind}'; expected one of {list(STATE_KINDS)}")
        x0 = np.zeros(grid.dim) if self.x0 is None else np.asarray(self.x0, dtype=float)
        xi0 = np.zeros(grid.dim) if self.xi0 is None else np.asarray(self.xi0, dtype=float)
        if x0.size != grid.dim:
            raise ConfigError("states.x0", f"needs {grid.dim} components")
        if xi0.size != grid.dim:
            raise ConfigError("states.xi0", f"needs {grid.dim} components")
        if self.kind == "coherent":
            return lambda h: coherent_state(grid, x0, xi0, h)
        if self.kind == "gaussian":
            offset = grid.mesh() - x0.reshape((grid.dim,) + (1,) * grid.dim)
            profile = np.exp(-np.sum(offset ** 2, axis=0) / (2.0 * self.width ** 2))
            state = Field(grid, profile / math.sqrt(grid.cell_volume * np.sum(profile ** 2)))
            return lambda h: state
        rng = np.random.default_rng(seed if self.seed is None else self.seed)
        state = band_limited_field(grid, self.max_mode, rng)
        state = state.with_values(state.values / state.norm())
        return lambda h: state


@dataclass
class SweepConfig:
    h_list: Optional[List[float]] = _kind("floats", None)
    truncation_radius: float = _kind("float", 8.0)
    bands: Optional[List[float]] = _kind("floats", None)


@dataclass
class PartitionConfig:
    patches_per_axis: int = _kind("int", 4)
    overlap: float = _kind("float", 0.3)
    counts: Optional[List[int]] = _kind("ints", None)


@dataclass
class BicharConfig:
    starts: Optional[List[Any]] = _kind("list", None)
    t_end: Optional[float] = _kind("float", None)
    tol: float = _kind("float", 1e-8)
    t_eval: Optional[List[float]] = _kind("floats", None)


@dataclass
class PropagateConfig:
    h: float = _kind("float", 0.05)
    t_end: Optional[float] = _kind("float", None)
    dt: Optional[float] = _kind("float", None)
    x0: Optional[List[float]] = _kind("floats", None)
    xi0: Optional[List[float]] = _kind("floats", None)
    sigma: Optional[float] = _kind("float", None)
    threshold: float = _kind("float", 0.1)
    tol: float = _kind("float", 1e-8)
    checkpoints: int = _kind("int", 20)
    x_stride: int = _kind("int", 1)


_SECTION_TYPES = {
    "grid": GridConfig,
    "symbol": SymbolConfig,
    "states": StatesConfig,
    "sweep": SweepConfig,
    "partition": PartitionConfig,
    "bichar": BicharConfig,
    "propagate": PropagateConfig,
}


def _coerce(key: str, value: Any, kind: str) -> Any:
    if value is None:
        return None
    number = (int, float)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, number):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if kind == "dict":
        if not isinstance(value, dict):
            raise ConfigError(key, f"expected an object, got {value!r}")
        return value
    if kind in ("floats", "ints", "list"):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {value!r}")
        if kind == "floats":
            return [_coerce(f"{key}[{i}]", v, "float") for i, v in enumerate(value)]
        if kind == "ints":
            return [_coerce(f"{key}[{i}]", v, "int") for i, v in enumerate(value)]
        return value
    raise ConfigError(key, f"unsupported kind {kind}")


def _parse_section(name: str, raw: Any):
    cls = _SECTION_TYPES[name]
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(name, f"section must be an object, got {type(raw).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}", "unknown key")
    values = {key: _coerce(f"{name}.{key}", value, known[key].metadata["kind"]) for key, value in raw.items()}
    return cls(**values)


@dataclass
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    symbol: SymbolConfig = field(default_factory=SymbolConfig)
    states: StatesConfig = field(default_factory=StatesConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    bichar: BicharConfig = field(default_factory=BicharConfig)
    propagate: PropagateConfig = field(default_factory=PropagateConfig)
    seed: int = 0

    def require(self, section: str, key: str) -> Any:
        value = getattr(getattr(self, section), key)
        if value is None:
            raise ConfigError(f"{section}.{key}", "is required for this subcommand")
        return value

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON of the parsed config and seed."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_config(document: Dict[str, Any], seed: Optional[int] = None) -> ExperimentConfig:
    if not isinstance(document, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(document) - set(SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    sections = {name: _parse_section(name, document.get(name)) for name in SECTIONS}
    file_seed = _coerce("seed", document.get("seed", 0), "int")
    if file_seed < 0 or file_seed >= 2 ** 64:
        raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {file_seed}")
    if seed is not None and not 0 <= seed < 2 ** 64:
        raise ConfigError("seed", f"override must be an unsigned 64-bit integer, got {seed}")
    return ExperimentConfig(**sections, seed=file_seed if seed is None else seed)


def load_config(path: Union[str, Path], seed: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError("<file>", f"{path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc}") from exc
    return parse_config(document, seed)
