"""Closed-form profiles, reduced mass, weighted norms and radial Fourier transforms.

Physical dimension ``d`` (default 3) and lifted dimension ``n = d + 2``.  The
weighted spaces use ``sigma0 = exp(-r^2/4)`` and ``sigma = phi^-2 exp(-r^2/4)``
on R^5.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grids import (
    GridError,
    RadialField,
    RadialGrid,
    cumulative_integral,
    dk_op,
    integrate,
    make_grid,
    radial_derivative,
    sphere_area,
    tail_estimate,
)

# order used when differentiating inside the transform pair
TRANSFORM_ACCURACY = 8


class Measured(float):
    """A quadrature result that remembers its truncation estimate."""

    tail: float
    truncation_dominated: bool

    def __new__(cls, value, tail=0.0, truncation_dominated=False):
        obj = super().__new__(cls, value)
        obj.tail = float(tail)
        obj.truncation_dominated = bool(truncation_dominated)
        return obj


class AliasingWarning(UserWarning):
    """Frequency content not resolved by the radial grid."""


@dataclass(frozen=True)
class ProfileFamily:
    d: int = 3

    def __post_init__(self):
        if self.d < 3:
            raise GridError("physical dimension must be >= 3")

    @property
    def n(self) -> int:
        return self.d + 2


# --- closed forms ---------------------------------------------------------------

def profile_U(d, r):
    """Self-similar Keller-Segel profile U(r) in R^d."""
    r2 = np.asarray(r, dtype=float) ** 2
    return 4.0 * (d - 2) * (2 * d + r2) / (2.0 * (d - 2) + r2) ** 2


def profile_phi(n, r):
    """Static similarity profile phi_n(r) = 2 / (2(n-4) + r^2)."""
    return 2.0 / (2.0 * (n - 4) + np.asarray(r, dtype=float) ** 2)


def profile_phi_prime(r):
    """d/dr of phi_5."""
    r = np.asarray(r, dtype=float)
    return -4.0 * r / (2.0 + r**2) ** 2


def profile_nu(r):
    """Unstable eigenfunction nu = phi + Λphi/2 = 4 / (2 + r^2)^2 (n = 5)."""
    return 4.0 / (2.0 + np.asarray(r, dtype=float) ** 2) ** 2


def sigma0(r):
    return np.exp(-np.asarray(r, dtype=float) ** 2 / 4.0)


def sigma(r):
    """H weight phi^-2 e^{-r^2/4}."""
    r = np.asarray(r, dtype=float)
    return (0.5 * (2.0 + r**2)) ** 2 * np.exp(-r**2 / 4.0)


@dataclass(frozen=True)
class WeightPair:
    """The two Gaussian-type weights on R^5."""

    sigma0 = staticmethod(sigma0)
    sigma = staticmethod(sigma)


def _require_n5(f: RadialField):
    if f.grid.n != 5:
        raise GridError(f"expected a field on R^5, got n={f.grid.n}")


# --- weighted inner products ------------------------------------------------------

def inner_H(f: RadialField, g: RadialField) -> Measured:
    _require_n5(f)
    res = integrate(f * g, sigma, full_space=True)
    return Measured(res.value, res.tail, res.truncation_dominated)


def norm_H(f: RadialField) -> Measured:
    ip = inner_H(f, f)
    return Measured(math.sqrt(max(ip, 0.0)), math.sqrt(ip.tail), ip.truncation_dominated)


def norm_H0(f: RadialField) -> Measured:
    _require_n5(f)
    res = integrate(f * f, sigma0, full_space=True)
    return Measured(math.sqrt(max(res.value, 0.0)), math.sqrt(res.tail), res.truncation_dominated)


def norm_L2(f: RadialField, tol: float = 1e-8) -> Measured:
    """Unweighted L^2(R^n) norm in the grid's dimension."""
    res = integrate(f * f, full_space=True, tol=tol)
    return Measured(math.sqrt(max(res.value, 0.0)), math.sqrt(res.tail), res.truncation_dominated)


def norm_homogeneous(f: RadialField, k: int, tol: float = 1e-8, accuracy: int = 2) -> Measured:
    """‖f‖ in the homogeneous Sobolev space of order k on R^n, via D^k."""
    return norm_L2(f if k == 0 else dk_op(f, k, accuracy=accuracy), tol=tol)


def norm_Xk(f: RadialField, k: int, tol: float = 1e-8) -> Measured:
    """‖f‖_{X^k}^2 = ‖Df‖^2 + ‖D^k f‖^2 in L^2(R^5)."""
    _require_n5(f)
    a = norm_homogeneous(f, 1, tol)
    b = norm_homogeneous(f, k, tol)
    tail = math.hypot(a.tail, b.tail)
    return Measured(math.hypot(a, b), tail, a.truncation_dominated or b.truncation_dominated)


def nu_norm_H(grid: RadialGrid) -> Measured:
    """‖ν‖_H, computed once per grid."""
    cache = grid._cache
    if "nu_norm_H" not in cache:
        cache["nu_norm_H"] = norm_H(grid.sample(profile_nu))
    return cache["nu_norm_H"]


def profile_g(grid: RadialGrid) -> RadialField:
    """The H-normalized unstable eigenfunction g = ν / ‖ν‖_H."""
    if grid.n != 5:
        raise GridError("g is defined on R^5")
    return grid.sample(profile_nu) / float(nu_norm_H(grid))


def project_P(f: RadialField) -> RadialField:
    """Rank-one H-orthogonal projection onto span{g}."""
    g = profile_g(f.grid)
    return float(inner_H(f, g)) * g


# --- reduced mass ---------------------------------------------------------------

def reduced_mass(u: RadialField, halved: bool = True) -> RadialField:
    """w(r) = c r^{-d} ∫_0^r u(s) s^{d-1} ds with c = 1/2 (evolution) or 1 (norm equivalence).

    ``u`` lives on an R^d grid; the result lives on the same nodes in R^{d+2}.
    """
    d = u.grid.n
    c = 0.5 if halved else 1.0
    mass = cumulative_integral(u)
    w = c * mass / u.grid.nodes**d
    return u.grid.with_dimension(d + 2).field(w)


def inverse_reduced_mass(w: RadialField, halved: bool = True, accuracy: int = TRANSFORM_ACCURACY) -> RadialField:
    """u = (2 if halved else 1) (d w + r w') on the R^d grid with the same nodes."""
    d = w.grid.n - 2
    c = 2.0 if halved else 1.0
    wp = radial_derivative(w, accuracy).values
    u = c * (d * w.values + w.grid.nodes * wp)
    return w.grid.with_dimension(d).field(u)


# --- radial Fourier transform -------------------------------------------------------

def _double_factorial(m: int) -> int:
    return math.prod(range(m, 0, -2)) if m > 0 else 1


def bessel_kernel(l: int, z):
    """K_l(z) = j_l(z) / z^l for l = 0, 1, 2 (so J_{l+1/2}(z) = sqrt(2z/pi) z^l K_l(z)).

    Closed elementary forms, with a power series below z = 0.5 where the
    closed forms cancel catastrophically.
    """
    if l not in (0, 1, 2):
        raise ValueError("only l = 0, 1, 2 (J_{1/2}, J_{3/2}, J_{5/2}) are supported")
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    # series: sum_k (-z^2/2)^k / (k! (2l+2k+1)!!)
    acc = np.zeros_like(zs)
    term = np.full_like(zs, 1.0 / _double_factorial(2 * l + 1))
    for k in range(12):
        acc += term
        term = term * (-zs**2 / 2.0) / ((k + 1) * (2 * l + 2 * k + 3))
    out[small] = acc
    zb = z[~small]
    s, c = np.sin(zb), np.cos(zb)
    if l == 0:
        out[~small] = s / zb
    elif l == 1:
        out[~small] = (s / zb - c) / zb**2
    else:
        out[~small] = ((3.0 / zb**2 - 1.0) * s / zb - 3.0 * c / zb**2) / zb**2
    return out


def bessel_j_half(l: int, z):
    """J_{l+1/2}(z) for l = 0, 1, 2."""
    z = np.asarray(z, dtype=float)
    return np.sqrt(2.0 * z / np.pi) * z**l * bessel_kernel(l, z)


def frequency_grid(grid: RadialGrid, xi_max: Optional[float] = None, N: Optional[int] = None) -> RadialGrid:
    """Default uniform frequency grid matched to the resolution of ``grid``."""
    if xi_max is None:
        xi_max = min(40.0, 0.5 * math.pi / float(np.max(np.diff(grid.nodes))))
    if N is None:
        N = max(256, int(math.ceil(xi_max * grid.R_max / math.pi)) * 2)
    return make_grid(grid.n, xi_max, N)


def hankel_eval(f: RadialField, points, d: Optional[int] = None) -> np.ndarray:
    """Radial unitary Fourier transform of ``f`` (on R^d) evaluated at ``points``.

    F_d f(ξ) = ξ^{1-d/2} ∫ f(r) J_{d/2-1}(rξ) r^{d/2} dr
             = sqrt(2/π) ∫ f(r) K_l(rξ) r^{d-1} dr,  l = (d-3)/2.
    """
    d = f.grid.n if d is None else d
    if d % 2 == 0 or d < 3 or d > 7:
        raise GridError("odd dimensions 3, 5, 7 only")
    l = (d - 3) // 2
    g = f.grid if f.grid.n == d else f.grid.with_dimension(d)
    wf = g.quad_weights * f.values
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    out = np.empty(pts.shape)
    # chunk to bound memory at large N
    chunk = max(1, 4_000_000 // g.N)
    for i in range(0, pts.size, chunk):
        p = pts.ravel()[i:i + chunk]
        K = bessel_kernel(l, np.multiply.outer(p, g.nodes))
        out.ravel()[i:i + chunk] = K @ wf
    return math.sqrt(2.0 / math.pi) * out


def hankel_transform(f: RadialField, d: Optional[int] = None, xi_grid: Optional[RadialGrid] = None,
                     tol: float = 1e-8) -> RadialField:
    """Radial Fourier transform sampled on a frequency grid (the transform is its own inverse).

    Warns with :class:`AliasingWarning` when the frequency grid exceeds the
    spatial Nyquist limit or the transform has not decayed at its top end.
    """
    d = f.grid.n if d is None else d
    if xi_grid is None:
        xi_grid = frequency_grid(f.grid.with_dimension(d) if f.grid.n != d else f.grid)
    elif xi_grid.n != d:
        xi_grid = xi_grid.with_dimension(d)
    nyquist = math.pi / float(np.max(np.diff(f.grid.nodes)))
    Ff = hankel_eval(f, xi_grid.nodes, d)
    top = np.max(np.abs(Ff[-max(3, xi_grid.N // 50):]))
    scale = np.max(np.abs(Ff)) if Ff.size else 0.0
    if xi_grid.R_max > nyquist or (scale > 0 and top > tol * scale):
        warnings.warn("radial transform not resolved on this frequency grid", AliasingWarning, stacklevel=2)
    return xi_grid.field(Ff)


# --- norm equivalence (reduced mass vs lifted Sobolev norms) ------------------------------

@dataclass(frozen=True)
class NormEquivalence:
    k: int
    lhs: float  # ‖u‖ of order k on R^d
    rhs: float  # ‖w‖ of order k+1 on R^{d+2}
    ratio: float
    lhs_tail: float
    rhs_tail: float
    truncation_dominated: bool


def norm_equivalence_check(u: RadialField, k: int, tol: float = 1e-4, accuracy: int = 4) -> NormEquivalence:
    """Compare ‖u‖_{Ḣ^k(R^d)} with ‖w‖_{Ḣ^{k+1}(R^{d+2})}, w the unhalved reduced mass.

    Both norms are computed in physical space through D^k and include the
    power-law tail estimate beyond R_max (w decays like r^{-d} outside the
    support of u).
    """
    if not 0 <= k <= 4:
        raise ValueError("k must be in 0..4")
    w = reduced_mass(u, halved=False)
    lhs = norm_homogeneous(u, k, tol, accuracy)
    rhs = norm_homogeneous(w, k + 1, tol, accuracy)
    lhs_c = math.hypot(lhs, lhs.tail) if math.isfinite(lhs.tail) else float(lhs)
    rhs_c = math.hypot(rhs, rhs.tail) if math.isfinite(rhs.tail) else float(rhs)
    ratio = lhs_c / rhs_c if rhs_c > 0 else math.nan
    return NormEquivalence(k, lhs_c, rhs_c, ratio, lhs.tail, rhs.tail,
                           lhs.truncation_dominated or rhs.truncation_dominated)


def equivalence_constant(d: int = 3) -> float:
    """The exact ratio sqrt(|S^{d-1}| / |S^{d+1}|) implied by F_d u(ρ) = ρ^2 F_{d+2} w(ρ)."""
    return math.sqrt(sphere_area(d) / sphere_area(d + 2))


def fourier_norm(Ff: RadialField, k: int) -> float:
    """‖ |ξ|^k F f ‖_{L^2} from samples on a frequency grid."""
    res = integrate(Ff * Ff, lambda x: x ** (2 * k), full_space=True)
    return math.sqrt(max(res.value, 0.0))


__all__ = [
    "AliasingWarning", "Measured", "NormEquivalence", "ProfileFamily", "WeightPair",
    "bessel_j_half", "bessel_kernel", "equivalence_constant", "fourier_norm", "frequency_grid",
    "hankel_eval", "hankel_transform", "inner_H", "inverse_reduced_mass", "norm_H", "norm_H0",
    "norm_L2", "norm_Xk", "norm_equivalence_check", "norm_homogeneous", "nu_norm_H", "profile_U",
    "profile_g", "profile_nu", "profile_phi", "profile_phi_prime", "project_P", "reduced_mass",
    "sigma", "sigma0", "tail_estimate",
]
