"""
Left (Kohn-Nirenberg) semiclassical quantization on the periodic grid.

    P_h u(x_j) = (2 pi h)^{-n} sum_k e^{i x_j.xi_k/h} a(x_j, xi_k) F_h u(xi_k) dxi^n

Separable symbols a = f(x) g(xi) go through two FFTs; anything else is applied
densely in bounded row blocks.
"""

import logging
import math

import numpy as np

from src.errors import GuardError, ValidationError
from src.grid import Field, SpectralField, forward_transform, inverse_transform
from src.parallel import ordered_map
from src.symbol import Symbol, SymbolExpansion

logger = logging.getLogger(__name__)

MAX_DENSE_ELEMENTS = 2 ** 26
BLOCK_ELEMENTS = 2 ** 21


def _reject_non_finite(a: Symbol, values: np.ndarray, x: np.ndarray, xi: np.ndarray) -> None:
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        index = tuple(bad[0])
        xb = np.broadcast_to(x, (x.shape[0],) + values.shape)
        xib = np.broadcast_to(xi, (xi.shape[0],) + values.shape)
        point = (xb[(slice(None),) + index].tolist(), xib[(slice(None),) + index].tolist())
        raise ValidationError(f"symbol '{a.name}' is non-finite on the lattice at (x, xi) = {point}")


def dense_limit(dim: int) -> int:
    """Largest power-of-two N with N^(2 dim) within the dense budget."""
    return 2 ** int(math.log2(MAX_DENSE_ELEMENTS) // (2 * dim))


def apply(a: Symbol, u: Field, h: float, workers: int = 1, dense: bool = False) -> Field:
    """
    Apply Op_h(a) to u.

    dense=True forces the row-block path even for separable symbols, which is
    how the two paths are cross-checked.
    """
    if a.separable is not None and not dense:
        return _apply_separable(a, u, h)
    return _apply_dense(a, u, h, workers)


def _apply_separable(a: Symbol, u: Field, h: float) -> Field:
    grid = u.grid
    mesh = grid.mesh()
    f = a.spatial_factor(mesh)
    _reject_non_finite(a, f, mesh, np.zeros_like(mesh))
    if a.separable[1] is None:
        return Field(grid, f * u.values)
    xi = grid.frequencies(h)
    g = a.frequency_factor(xi)
    _reject_non_finite(a, g, np.zeros_like(xi), xi)
    spectrum = forward_transform(u, h)
    filtered = inverse_transform(SpectralField(grid, h, g * spectrum.values), h)
    return Field(grid, f * filtered.values)


def _apply_dense(a: Symbol, u: Field, h: float, workers: int) -> Field:
    grid = u.grid
    n, size, points = grid.dim, grid.size, grid.points_per_axis
    if size * size > MAX_DENSE_ELEMENTS:
        raise GuardError(
            f"dense quantization of '{a.name}' needs N^{2 * n} = {size * size} > {MAX_DENSE_ELEMENTS} "
            f"lattice entries; reduce N from {points} to at most {dense_limit(n)}"
        )
    spectrum = forward_transform(u, h).values.reshape(-1)
    x_points = grid.mesh().reshape(n, -1)
    xi_points = grid.frequencies(h).reshape(n, -1)
    j_index = np.array(np.meshgrid(*(np.arange(points),) * n, indexing="ij")).reshape(n, -1)
    k_index = np.array(np.meshgrid(*(grid.signed_modes(),) * n, indexing="ij")).reshape(n, -1)
    sign = grid.shift_phase().reshape(-1)
    weight = grid.dual_spacing(h) ** n / (2.0 * math.pi * h) ** n
    block = max(1, BLOCK_ELEMENTS // size)

    def row_block(start: int) -> np.ndarray:
        stop = min(start + block, size)
        # e^{i x_j.xi_k/h} = (-1)^k e^{2 pi i (j.k mod N)/N}, exact twiddles
        jk = (j_index[:, start:stop].T @ k_index) % points
        phase = sign[None, :] * np.exp(2j * math.pi * jk / points)
        xb = x_points[:, start:stop, None]
        xib = xi_points[:, None, :]
        values = a(xb, xib)
        _reject_non_finite(a, values, xb, xib)
        return weight * ((phase * values) @ spectrum)

    blocks = ordered_map(row_block, range(0, size, block), workers)
    logger.debug("dense quantization of %s: %d row blocks", a.name, len(blocks))
    return Field(grid, np.concatenate(blocks).reshape(grid.shape))


def apply_expansion(terms: SymbolExpansion, u: Field, h: float, workers: int = 1) -> Field:
    """sum_k h^k Op_h(a_k) u over the stored terms."""
    total = np.zeros(u.grid.shape, dtype=np.complex128)
    for k, term in enumerate(terms.terms):
        total = total + h ** k * apply(term, u, h, workers).values
    return Field(u.grid, total)
