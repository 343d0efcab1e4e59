"""
Periodic grids, sampled fields and the semiclassical Fourier pair.

Conventions
-----------
The box is [-L, L) per axis with N points, x_j = -L + j*dx, dx = 2L/N. The dual
lattice at semiclassical parameter h is xi_k = h*(pi/L)*k for integer k in
[-N/2, N/2), stored in FFT order. The transforms are

    F_h u(xi_k)      = dx^n  sum_x e^{-i x.xi_k/h} u(x)
    F_h^{-1} v(x_j)  = (2 pi h)^{-n} dxi^n sum_k e^{i x_j.xi/h} v(xi_k)

so that the symbol xi_j quantizes to -i h d/dx_j. Coordinate arrays are
component-leading: shape (dim, N, ..., N).
"""

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from src.artifacts import read_csv, read_csv_comments, write_csv
from src.errors import ValidationError

logger = logging.getLogger(__name__)

BINARY_MAGIC = b"MLK1"
BINARY_HEADER = struct.Struct("<4s4xddd")


def require_finite(values: np.ndarray, what: str = "values") -> None:
    """Reject arrays holding NaN/Inf, naming the first offending index."""
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        index = tuple(int(i) for i in bad[0])
        raise ValidationError(
            f"{what} contain a non-finite entry at index {index}: {values[index]!r}"
        )


def _check_h(h: float) -> None:
    if not (np.isfinite(h) and h > 0):
        raise ValidationError(f"semiclassical parameter h must be positive, got {h}")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the box [-L, L)^dim."""
    dim: int
    points_per_axis: int
    half_length: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError(f"dim must be 1 or 2, got {self.dim}")
        n = self.points_per_axis
        if n < 16 or n & (n - 1):
            raise ValidationError(f"points_per_axis must be a power of two >= 16, got {n}")
        if not (np.isfinite(self.half_length) and self.half_length > 0):
            raise ValidationError(f"half_length must be positive, got {self.half_length}")
        object.__setattr__(self, "half_length", float(self.half_length))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.points_per_axis

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.points_per_axis)

    def axes(self) -> Tuple[np.ndarray, ...]:
        return (self.axis(),) * self.dim

    def mesh(self) -> np.ndarray:
        """Grid coordinates, shape (dim, N, ..., N)."""
        return np.array(np.meshgrid(*self.axes(), indexing="ij"))

    def signed_modes(self) -> np.ndarray:
        """Integer mode numbers k in FFT order."""
        return np.fft.fftfreq(self.points_per_axis, d=1.0 / self.points_per_axis).round().astype(int)

    def dual_spacing(self, h: float) -> float:
        return h * math.pi / self.half_length

    def frequency_axis(self, h: float) -> np.ndarray:
        return self.dual_spacing(h) * self.signed_modes()

    def frequencies(self, h: float) -> np.ndarray:
        """Dual lattice, shape (dim, N, ..., N), FFT order."""
        return np.array(np.meshgrid(*(self.frequency_axis(h),) * self.dim, indexing="ij"))

    def nyquist(self, h: float) -> float:
        return h * math.pi * self.points_per_axis / (2.0 * self.half_length)

    def shift_phase(self) -> np.ndarray:
        """(-1)^(k_1 + ... + k_n), the phase e^{i pi k} from the box offset -L."""
        parity = self.signed_modes() % 2
        total = sum(np.meshgrid(*(parity,) * self.dim, indexing="ij"))
        return np.where(total % 2 == 0, 1.0, -1.0)


@dataclass(frozen=True)
class Field:
    """Complex samples on a grid; values are read-only, shape grid.shape."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.size != self.grid.size:
            raise ValidationError(
                f"field has {values.size} values, grid needs {self.grid.size}"
            )
        values = values.reshape(self.grid.shape)
        require_finite(values, "field values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Sample fn on the grid; fn receives the component-leading mesh."""
        return cls(grid, np.broadcast_to(fn(grid.mesh()), grid.shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def norm_squared(self) -> float:
        return float(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2))

    def norm(self) -> float:
        return math.sqrt(self.norm_squared())

    def to_csv(self, path: Union[str, Path], digest: Optional[str] = None) -> Path:
        """Columns: one index per axis, then re, im (row-major order)."""
        header = [f"i{axis}" for axis in range(self.grid.dim)] + ["re", "im"]
        rows = (
            list(index) + [self.values[index].real, self.values[index].imag]
            for index in np.ndindex(*self.grid.shape)
        )
        extra = {"dim": self.grid.dim, "N": self.grid.points_per_axis, "L": repr(self.grid.half_length)}
        return write_csv(Path(path), header, rows, digest, extra)

    @classmethod
    def from_csv(cls, path: Union[str, Path], grid: Grid) -> "Field":
        """Read a table written by to_csv; its dim/N/L must match grid and every index must appear once."""
        path = Path(path)
        comments = read_csv_comments(path)
        try:
            stored = (int(comments["dim"]), int(comments["N"]), float(comments["L"]))
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"{path}: missing or malformed dim/N/L header: {exc}") from exc
        expected = (grid.dim, grid.points_per_axis, grid.half_length)
        if stored != expected:
            raise ValidationError(f"{path}: written for (dim, N, L) = {stored}, target grid is {expected}")
        table = read_csv(path)
        values = np.zeros(grid.shape, dtype=np.complex128)
        seen = np.zeros(grid.shape, dtype=bool)
        for line, row in enumerate(table[1:], start=1):
            try:
                index = tuple(int(v) for v in row[: grid.dim])
                value = complex(float(row[grid.dim]), float(row[grid.dim + 1]))
            except (IndexError, ValueError) as exc:
                raise ValidationError(f"{path}: malformed data row {line}: {row}") from exc
            if len(index) != grid.dim or not all(0 <= i < grid.points_per_axis for i in index):
                raise ValidationError(f"{path}: index {index} out of range in row {line}")
            if seen[index]:
                raise ValidationError(f"{path}: index {index} appears more than once")
            seen[index] = True
            values[index] = value
        if not seen.all():
            missing = tuple(int(i) for i in np.argwhere(~seen)[0])
            raise ValidationError(f"{path}: {int((~seen).sum())} indices missing, first {missing}")
        return cls(grid, values)

    def save_binary(self, path: Union[str, Path]) -> Path:
        """MLK1 format: 32-byte header then interleaved little-endian re/im doubles."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = BINARY_HEADER.pack(
            BINARY_MAGIC, float(self.grid.dim), float(self.grid.points_per_axis), self.grid.half_length
        )
        with open(path, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(self.values).astype("<c16").tobytes(order="C"))
        return path

    @classmethod
    def load_binary(cls, path: Union[str, Path]) -> "Field":
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) < BINARY_HEADER.size:
            raise ValidationError(f"{path}: truncated header")
        magic, dim, n, half_length = BINARY_HEADER.unpack_from(raw)
        if magic != BINARY_MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}")
        grid = Grid(int(dim), int(n), half_length)
        payload = np.frombuffer(raw, dtype="<c16", offset=BINARY_HEADER.size)
        if payload.size != grid.size:
            raise ValidationError(f"{path}: expected {grid.size} values, found {payload.size}")
        return cls(grid, payload.reshape(grid.shape))


@dataclass(frozen=True)
class SpectralField:
    """Samples of F_h u on the dual lattice of (grid, h), FFT order."""
    grid: Grid
    h: float
    values: np.ndarray

    def __post_init__(self):
        _check_h(self.h)
        values = np.array(self.values, dtype=np.complex128).reshape(self.grid.shape)
        require_finite(values, "spectral values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies(self.h)

    @property
    def cell_volume(self) -> float:
        return self.grid.dual_spacing(self.h) ** self.grid.dim

    def mass(self) -> float:
        """sum |v|^2 dxi^n."""
        return float(self.cell_volume * np.sum(np.abs(self.values) ** 2))


def forward_transform(u: Field, h: float) -> SpectralField:
    """Semiclassical Fourier transform F_h u on the dual lattice."""
    _check_h(h)
    require_finite(u.values, "field values")
    grid = u.grid
    spectrum = np.fft.fftn(u.values) * grid.shift_phase() * grid.cell_volume
    return SpectralField(grid, h, spectrum)


def inverse_transform(v: SpectralField, h: float) -> Field:
    """Inverse of forward_transform; h must match the spectral field's own."""
    _check_h(h)
    if not math.isclose(v.h, h, rel_tol=1e-14, abs_tol=0.0):
        raise ValidationError(f"spectral field was built at h={v.h}, inverse requested at h={h}")
    grid = v.grid
    values = np.fft.ifftn(v.values * grid.shift_phase()) / grid.cell_volume
    return Field(grid, values)


def spectral_gradient(u: Field) -> List[Field]:
    """Classical (h = 1) spectral gradient; the Nyquist mode is dropped."""
    grid = u.grid
    spectrum = forward_transform(u, 1.0)
    xi = grid.frequencies(1.0)
    modes = np.meshgrid(*(grid.signed_modes(),) * grid.dim, indexing="ij")
    gradient = []
    for axis in range(grid.dim):
        symbol = np.where(modes[axis] == -grid.points_per_axis // 2, 0.0, 1j * xi[axis])
        gradient.append(inverse_transform(SpectralField(grid, 1.0, symbol * spectrum.values), 1.0))
    return gradient


def band_limited_field(grid: Grid, max_mode: int, rng: np.random.Generator, real: bool = False) -> Field:
    """Random field whose modes satisfy |k_i| <= max_mode on every axis."""
    if not 0 <= max_mode < grid.points_per_axis // 2:
        raise ValidationError(f"max_mode must lie in [0, {grid.points_per_axis // 2}), got {max_mode}")
    coefficients = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    modes = grid.signed_modes()
    keep = np.ones(grid.shape, dtype=bool)
    for axis_modes in np.meshgrid(*(modes,) * grid.dim, indexing="ij"):
        keep &= np.abs(axis_modes) <= max_mode
    values = np.fft.ifftn(np.where(keep, coefficients, 0.0)) * grid.size
    if real:
        values = values.real
    return Field(grid, values)
