"""Uniform Cartesian grids in one or two dimensions and the finite-difference
primitives shared by every other module.

Arrays are indexed ``values[i]`` in 1D and ``values[i, j]`` in 2D with ``i``
along x and ``j`` along y (``numpy.meshgrid(..., indexing="ij")`` order).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class GridSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n_nodes: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n_nodes))
        if not (len(lo) == len(hi) == len(n)) or len(n) not in (1, 2):
            raise ValueError("grid must be 1D or 2D with matching lo/hi/n_nodes")
        if any(k < 3 for k in n):
            raise GridSizeError(f"need at least 3 nodes per axis, got {n}")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("box extents must satisfy lo < hi on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n_nodes", n)

    @property
    def dim(self) -> int:
        return len(self.n_nodes)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (k - 1) for a, b, k in zip(self.lo, self.hi, self.n_nodes))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.n_nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis(self, k: int) -> np.ndarray:
        return self.lo[k] + np.arange(self.n_nodes[k]) * self.h[k]

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array per axis, each of ``shape``."""
        return tuple(np.meshgrid(*(self.axis(k) for k in range(self.dim)), indexing="ij"))

    def radius(self, center=None) -> np.ndarray:
        c = np.zeros(self.dim) if center is None else np.atleast_1d(center)
        xs = self.coords()
        return np.sqrt(sum((x - ck) ** 2 for x, ck in zip(xs, c)))

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = 0
            m[tuple(idx)] = True
            idx[k] = -1
            m[tuple(idx)] = True
        return m

    @cached_property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights: ``h^d`` at interior nodes, halved per boundary axis."""
        w = np.ones(())
        for k in range(self.dim):
            wk = np.full(self.n_nodes[k], self.h[k])
            wk[0] *= 0.5
            wk[-1] *= 0.5
            w = np.multiply.outer(w, wk)
        return w

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "nodes": list(self.n_nodes)}


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(*grid.coords()), grid.shape).copy())

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


def _check_same_grid(*fields: ScalarField):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError("fields live on different grids")


def laplacian_values(v: np.ndarray, h: tuple[float, ...]) -> np.ndarray:
    """Central-difference Laplacian at interior nodes of a raw array; 0 on the boundary."""
    out = np.zeros_like(v, dtype=float)
    inner = tuple(slice(1, -1) for _ in h)
    for k, hk in enumerate(h):
        plus = list(inner)
        minus = list(inner)
        plus[k] = slice(2, None)
        minus[k] = slice(None, -2)
        out[inner] += (v[tuple(plus)] - 2.0 * v[inner] + v[tuple(minus)]) / hk**2
    return out


def laplacian(f: ScalarField) -> ScalarField:
    """3-point (1D) / 5-point (2D) Laplacian.

    Boundary nodes hold 0 and are not valid stencil outputs; use
    ``grid.interior_mask`` to exclude them.
    """
    g = f.grid
    if any(k < 3 for k in g.n_nodes):
        raise GridSizeError("laplacian needs at least 3 nodes per axis")
    return ScalarField(g, laplacian_values(f.values, g.h))


def grad_sup_norm(f: ScalarField) -> float:
    """Largest difference quotient |f(p) - f(q)| / h over adjacent node pairs."""
    best = 0.0
    for k, hk in enumerate(f.grid.h):
        d = np.abs(np.diff(f.values, axis=k)) / hk
        if d.size:
            best = max(best, float(d.max()))
    return best


def integrate(f: ScalarField, mask: ScalarField | np.ndarray | None = None) -> float:
    """Trapezoid quadrature of ``f * mask``."""
    w = f.grid.weights
    if mask is None:
        return float(np.sum(f.values * w))
    if isinstance(mask, ScalarField):
        _check_same_grid(f, mask)
        mvals = mask.values
    else:
        mvals = np.asarray(mask, dtype=float)
        if mvals.shape != f.grid.shape:
            raise ValueError("mask shape does not match the grid")
    if np.any(mvals < 0) or np.any(mvals > 1):
        raise ValueError("mask values must lie in [0, 1]")
    return float(np.sum(f.values * mvals * w))


def dirichlet_values(v: np.ndarray, h: tuple[float, ...]) -> float:
    """Half the squared forward-difference gradient summed over grid edges, times h^d."""
    vol = float(np.prod(h))
    total = 0.0
    for k, hk in enumerate(h):
        d = np.diff(v, axis=k) / hk
        total += 0.5 * vol * float(np.sum(d * d))
    return total


def stiffness_matrix(grid: Grid) -> sp.csr_matrix:
    """Hessian of :func:`dirichlet_values` over all nodes (flattened C order).

    At an interior node the row equals ``h^d * (-laplacian)``.
    """
    n = grid.n_nodes
    vol = grid.cell_volume
    mats = []
    for k in range(grid.dim):
        ek = sp.diags([np.ones(n[k] - 1)], [0], shape=(n[k] - 1, n[k]))
        ek = ek - sp.diags([np.ones(n[k] - 1)], [1], shape=(n[k] - 1, n[k]))
        lk = (ek.T @ ek) * (vol / grid.h[k] ** 2)
        term = sp.identity(1, format="csr")
        for j in range(grid.dim):
            term = sp.kron(term, lk if j == k else sp.identity(n[j]), format="csr")
        mats.append(term)
    return sum(mats).tocsr()


def observed_order(err_coarse: float, err_fine: float, ratio: float = 2.0) -> float:
    return float(np.log(err_coarse / err_fine) / np.log(ratio))
