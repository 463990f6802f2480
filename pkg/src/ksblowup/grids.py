"""Radial discretization of R^n for odd n.

A grid stores nodes ``r_1 < ... < r_N = R_max`` obtained from a uniform
computational coordinate ``s_i = i / N`` through a map ``r(s)`` that is odd in
``s``.  Every radial field is treated as the restriction of an even function,
so values at negative ``s`` are mirrored and the value at the origin is
recovered by even polynomial extrapolation.  All stencils act on node values
only and are assembled once per grid as sparse matrices.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.special import gamma

SCHEMES = ("uniform", "mapped-stretched")

# points per cell for the cumulative (and full) quadrature; exact for degree 7
_QUAD_POINTS = 8


class GridError(ValueError):
    """Invalid grid parameters or incompatible fields."""


class ResolutionWarning(UserWarning):
    """Stencil error estimate exceeds the requested tolerance."""


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2) / gamma(n / 2)


def fd_weights(offsets, deriv: int) -> np.ndarray:
    """Finite-difference weights for ``deriv``-th derivative at 0 on integer offsets."""
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(V, rhs)


def _even_origin_weights(k: int) -> np.ndarray:
    # interpolate in t = s^2 through s = 1..k and evaluate at t = 0
    t = np.arange(1, k + 1, dtype=float) ** 2
    w = np.empty(k)
    for j in range(k):
        others = np.delete(t, j)
        w[j] = np.prod(others / (others - t[j]))
    return w


@lru_cache(maxsize=None)
def _fd_cached(offsets: tuple, deriv: int) -> tuple:
    return tuple(fd_weights(offsets, deriv))


@lru_cache(maxsize=None)
def _cell_cached(offsets: tuple) -> np.ndarray:
    return _cell_weights(offsets)


def _cell_weights(offsets) -> np.ndarray:
    # integral over [0, 1] of the Lagrange basis on the given integer offsets
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    V = np.vander(offsets, m, increasing=True).T
    moments = 1.0 / np.arange(1, m + 1)
    return np.linalg.solve(V, moments)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Discretized radial half-line for the ambient dimension ``n``.

    Attributes
    ----------
    n : int
        Ambient dimension (odd, >= 3).
    R_max : float
        Truncation radius; equals the last node.
    N : int
        Number of nodes.
    scheme : str
        ``"uniform"`` or ``"mapped-stretched"``.
    stretch : float
        Map parameter ``a`` of ``r = R_max sinh(a s) / sinh(a)``; unused for
        the uniform scheme.
    """

    n: int
    R_max: float
    N: int
    scheme: str = "uniform"
    stretch: float = 4.0
    s: np.ndarray = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)
    r_s: np.ndarray = field(init=False, repr=False)
    r_ss: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = np.arange(1, self.N + 1) / self.N
        if self.scheme == "uniform":
            r = self.R_max * s
            r_s = np.full_like(s, self.R_max)
            r_ss = np.zeros_like(s)
        else:
            a = self.stretch
            c = self.R_max / math.sinh(a)
            r = c * np.sinh(a * s)
            r_s = c * a * np.cosh(a * s)
            r_ss = c * a * a * np.sinh(a * s)
            r[-1] = self.R_max
        for name, val in (("s", s), ("nodes", r), ("r_s", r_s), ("r_ss", r_ss)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def ds(self) -> float:
        return 1.0 / self.N

    @property
    def h(self) -> float:
        """Spacing of a uniform grid; the smallest spacing otherwise."""
        return float(self.nodes[0])

    @property
    def quad_degree(self) -> Optional[int]:
        """Largest even-monomial degree integrated exactly (``None`` if not polynomial-exact)."""
        return _QUAD_POINTS - 1 if self.scheme == "uniform" else None

    def with_dimension(self, n: int) -> "RadialGrid":
        """Same nodes, different ambient dimension."""
        return make_grid(n, self.R_max, self.N, self.scheme, stretch=self.stretch, _check_parity=False)

    def coarsen(self) -> "RadialGrid":
        """Every second node (requires even ``N``)."""
        if self.N % 2:
            raise GridError("coarsen needs an even node count")
        return RadialGrid(self.n, self.R_max, self.N // 2, self.scheme, self.stretch)

    def field(self, values, decay_hint: Optional[float] = None) -> "RadialField":
        return RadialField(self, np.asarray(values, dtype=float), decay_hint=decay_hint)

    def sample(self, func: Callable[[np.ndarray], np.ndarray], decay_hint: Optional[float] = None) -> "RadialField":
        return self.field(func(self.nodes), decay_hint=decay_hint)

    # --- assembled operators -------------------------------------------------

    def _extension(self, ghosts: int, accuracy: int) -> sp.csr_matrix:
        """Map node values to ``[f(-s_g), ..., f(-s_1), f(0), f_1, ..., f_N]``."""
        N = self.N
        k = max(2, accuracy // 2 + 1)
        rows, cols, vals = [], [], []
        for g in range(ghosts):
            rows.append(g)
            cols.append(ghosts - 1 - g)
            vals.append(1.0)
        w0 = _even_origin_weights(k)
        for j, wj in enumerate(w0):
            rows.append(ghosts)
            cols.append(j)
            vals.append(wj)
        for i in range(N):
            rows.append(ghosts + 1 + i)
            cols.append(i)
            vals.append(1.0)
        return sp.csr_matrix((vals, (rows, cols)), shape=(N + ghosts + 1, N))

    def _s_derivative(self, deriv: int, accuracy: int, bias: str = "center") -> sp.csr_matrix:
        """d^deriv/ds^deriv acting on node values."""
        N = self.N
        half = (deriv + accuracy - 1) // 2
        ghosts = max(half, accuracy + deriv)
        E = self._extension(ghosts, accuracy)
        width = 2 * half + 1 if bias == "center" else accuracy + deriv
        last = ghosts + N
        rows, cols, vals = [], [], []
        for i in range(N):
            pos = ghosts + 1 + i  # index of node i in the extended vector
            lo = pos - half if bias == "center" else pos - (width - 1)
            hi = lo + width - 1
            if hi > last:
                # one-sided near R_max; one extra point keeps the order for deriv >= 2
                hi = last
                lo = last - (width - 1) - (deriv - 1)
            offs = tuple(range(lo - pos, hi - pos + 1))
            rows.extend([i] * len(offs))
            cols.extend(range(lo, hi + 1))
            vals.extend(_fd_cached(offs, deriv))
        S = sp.csr_matrix((np.asarray(vals) / self.ds**deriv, (rows, cols)), shape=(N, N + ghosts + 1))
        return (S @ E).tocsr()

    def derivative_matrix(self, accuracy: int = 2, bias: str = "center") -> sp.csr_matrix:
        """d/dr on node values; ``bias="upwind"`` uses backward (outflow) differences."""
        key = ("d1", accuracy, bias)
        cache = self._cache
        if key not in cache:
            Ds = self._s_derivative(1, accuracy, bias)
            cache[key] = (sp.diags(1.0 / self.r_s) @ Ds).tocsr()
        return cache[key]

    def second_derivative_matrix(self, accuracy: int = 2) -> sp.csr_matrix:
        key = ("d2", accuracy)
        cache = self._cache
        if key not in cache:
            D1s = self._s_derivative(1, accuracy)
            D2s = self._s_derivative(2, accuracy)
            M = sp.diags(1.0 / self.r_s**2) @ (D2s - sp.diags(self.r_ss / self.r_s) @ D1s)
            cache[key] = M.tocsr()
        return cache[key]

    def laplacian_matrix(self, accuracy: int = 2) -> sp.csr_matrix:
        key = ("lap", accuracy)
        cache = self._cache
        if key not in cache:
            M = self.second_derivative_matrix(accuracy) + sp.diags((self.n - 1) / self.nodes) @ self.derivative_matrix(accuracy)
            cache[key] = M.tocsr()
        return cache[key]

    def origin_weights(self, accuracy: int = 2) -> np.ndarray:
        """Weights on the first nodes giving the even extrapolation f(0)."""
        return _even_origin_weights(max(2, accuracy // 2 + 1))

    @cached_property
    def _cache(self) -> dict:
        return {}

    @cached_property
    def cell_matrix(self) -> sp.csr_matrix:
        """Sparse (N, N) matrix whose row c integrates over the cell [r_{c-1}, r_c] (r_0 = 0).

        Acts on samples of an even-extended integrand F; the cumulative sum of
        ``cell_matrix @ F`` gives ∫_0^{r_i} F dr with an 8-point local rule.
        """
        N, m = self.N, _QUAD_POINTS
        rows, cols, vals = [], [], []
        for c in range(N):  # cell [s_c, s_{c+1}], s_0 = 0
            lo = c - (m // 2 - 1)
            hi = lo + m - 1
            if hi > N:
                lo -= hi - N
                hi = N
            w = _cell_cached(tuple(range(lo - c, hi - c + 1)))
            for idx, wj in zip(range(lo, hi + 1), w):
                j = abs(idx)
                if j:  # G(0) = F(0) r'(0) and F(0) = 0 for the integrands used here
                    rows.append(c)
                    cols.append(j - 1)
                    vals.append(wj * self.ds * self.r_s[j - 1])
        return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Weights for ∫_0^{R_max} f(r) r^{n-1} dr."""
        w = np.asarray(self.cell_matrix.sum(axis=0)).ravel() * self.nodes ** (self.n - 1)
        w.setflags(write=False)
        return w

    @property
    def r_s0(self) -> float:
        """dr/ds at the origin."""
        if self.scheme == "uniform":
            return self.R_max
        return self.R_max * self.stretch / math.sinh(self.stretch)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Samples of an even radial function at the nodes of ``grid``."""

    grid: RadialGrid
    values: np.ndarray
    decay_hint: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.N,):
            raise GridError(f"field has shape {v.shape}, grid has {self.grid.N} nodes")
        if not np.all(np.isfinite(v)):
            raise GridError("field values must be finite")
        object.__setattr__(self, "values", v)

    def _wrap(self, values) -> "RadialField":
        return RadialField(self.grid, values)

    def __add__(self, other):
        return self._wrap(self.values + _values(other, self.grid))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - _values(other, self.grid))

    def __rsub__(self, other):
        return self._wrap(_values(other, self.grid) - self.values)

    def __mul__(self, other):
        return self._wrap(self.values * _values(other, self.grid))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._wrap(self.values / _values(other, self.grid))

    def __neg__(self):
        return self._wrap(-self.values)

    def origin_value(self, accuracy: int = 2) -> float:
        w = self.grid.origin_weights(accuracy)
        return float(w @ self.values[: len(w)])


def _values(other, grid: RadialGrid):
    if isinstance(other, RadialField):
        if other.grid is not grid and (other.grid.N != grid.N or not np.array_equal(other.grid.nodes, grid.nodes)):
            raise GridError("fields live on different grids")
        return other.values
    return other


def make_grid(n: int, R_max: float, N: int, scheme: str = "uniform", *, stretch: float = 4.0,
              _check_parity: bool = True) -> RadialGrid:
    """Build a radial grid.

    Raises
    ------
    GridError
        On even (or < 3) dimension, ``N < 16``, nonpositive ``R_max`` or an
        unknown scheme.
    """
    if not isinstance(n, (int, np.integer)) or n < 1 or (_check_parity and (n < 3 or n % 2 == 0)):
        raise GridError(f"dimension must be an odd integer >= 3, got {n!r}")
    if N < 16:
        raise GridError(f"need at least 16 nodes, got {N}")
    if not R_max > 0:
        raise GridError(f"R_max must be positive, got {R_max}")
    if scheme not in SCHEMES:
        raise GridError(f"unknown scheme {scheme!r}")
    if scheme == "mapped-stretched" and not stretch > 0:
        raise GridError("stretch parameter must be positive")
    return RadialGrid(int(n), float(R_max), int(N), scheme, float(stretch))


# --- differential operators ---------------------------------------------------

def radial_derivative(f: RadialField, accuracy: int = 2) -> RadialField:
    """f'(r) with centered differences of the given (even) order."""
    return f._wrap(f.grid.derivative_matrix(accuracy) @ f.values)


def radial_laplacian(f: RadialField, accuracy: int = 2) -> RadialField:
    """Δ_rad f = f'' + (n-1)/r f' in the grid's dimension."""
    return f._wrap(f.grid.laplacian_matrix(accuracy) @ f.values)


def laplacian_at_origin(f: RadialField) -> float:
    """Even-extension limit Δ f(0) = n f''(0)."""
    g = f.grid
    fss = 2.0 * (f.values[0] - f.origin_value()) / g.ds**2
    return g.n * fss / g.r_s0**2


def lambda_op(f: RadialField, accuracy: int = 2) -> RadialField:
    """Λ f = r f'(r)."""
    return f._wrap(f.grid.nodes * (f.grid.derivative_matrix(accuracy) @ f.values))


def dk_op(f: RadialField, k: int, tol: Optional[float] = None, accuracy: int = 2) -> RadialField:
    """D^k f: Δ^{k/2} f for even k, (Δ^{(k-1)/2} f)' for odd k.

    When ``tol`` is given the result is recomputed on the half-resolution grid
    and a :class:`ResolutionWarning` is issued if the Richardson error estimate
    exceeds ``tol`` times the result's sup norm.
    """
    if k < 1:
        raise GridError("k must be >= 1")
    if f.grid.N < 10 * k:
        raise GridError(f"grid too coarse for D^{k}: need N >= {10 * k}")
    out = _apply_dk(f.grid, f.values, k, accuracy)
    if tol is not None and f.grid.N % 2 == 0:
        coarse = f.grid.coarsen()
        out_c = _apply_dk(coarse, f.values[1::2], k, accuracy)
        err = np.max(np.abs(out[1::2] - out_c)) / (2**accuracy - 1)
        scale = max(np.max(np.abs(out)), np.finfo(float).tiny)
        if err > tol * scale:
            warnings.warn(f"D^{k} stencil error estimate {err:.3e} exceeds tolerance", ResolutionWarning, stacklevel=2)
    return f._wrap(out)


def _apply_dk(grid: RadialGrid, v: np.ndarray, k: int, accuracy: int) -> np.ndarray:
    L = grid.laplacian_matrix(accuracy)
    for _ in range(k // 2):
        v = L @ v
    if k % 2:
        v = grid.derivative_matrix(accuracy) @ v
    return v


# --- integration --------------------------------------------------------------

@dataclass(frozen=True)
class Integral:
    """Quadrature value with a tail (truncation) estimate beyond R_max."""

    value: float
    tail: float
    truncation_dominated: bool

    def __float__(self):
        return self.value


def tail_estimate(grid: RadialGrid, integrand: np.ndarray) -> float:
    """Estimate ∫_{R_max}^∞ of an integrand (already including r^{n-1}) by a power-law fit.

    Returns ``inf`` when the integrand does not decay monotonically at the end
    of the grid, and a roundoff-level bound when it has already vanished there.
    """
    r = grid.nodes
    j = min(int(np.searchsorted(r, 0.9 * r[-1])), grid.N - 2)
    outer = np.abs(integrand[j:])
    peak = float(np.max(np.abs(integrand))) if integrand.size else 0.0
    if peak == 0.0:
        return 0.0
    if np.max(outer) <= 1e-13 * peak:
        return float(np.max(outer) * (r[-1] - r[j]))
    fN, fj = integrand[-1], integrand[j]
    if fN == 0.0 or np.sign(fj) != np.sign(fN) or abs(fN) >= abs(fj):
        return math.inf
    p = math.log(abs(fj) / abs(fN)) / math.log(r[-1] / r[j])
    if p <= 1.0:
        return math.inf
    return float(abs(fN) * r[-1] / (p - 1.0))


def integrate(f: RadialField, weight: Union[RadialField, Callable, None] = None, *,
              full_space: bool = False, tol: float = 1e-10) -> Integral:
    """∫_0^{R_max} f · weight · r^{n-1} dr, optionally times |S^{n-1}|.

    ``weight`` may be a field on the same grid, a callable of r, or ``None``.
    """
    g = f.grid
    if weight is None:
        w = 1.0
    elif isinstance(weight, RadialField):
        w = _values(weight, g)
    else:
        w = weight(g.nodes)
    integrand = f.values * w
    value = float(g.quad_weights @ integrand)
    tail = tail_estimate(g, integrand * g.nodes ** (g.n - 1))
    if full_space:
        area = sphere_area(g.n)
        value *= area
        tail *= area
    dominated = tail > tol * max(abs(value), np.finfo(float).tiny)
    return Integral(value, tail, bool(dominated))


def cumulative_integral(f: RadialField) -> np.ndarray:
    """∫_0^{r_i} f(s) s^{n-1} ds at every node."""
    g = f.grid
    return np.cumsum(g.cell_matrix @ (f.values * g.nodes ** (g.n - 1)))
