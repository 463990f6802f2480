"""Half-line Schrödinger reduction of the linearized operator, its spectrum, and the free semigroup.

The linearization L about phi (on R^5, weighted space H) is unitarily
equivalent to -A, where ``A u = -u'' + q u`` acts on L^2(0, ∞).  Removing the
ground state g~ (eigenvalue -1 of A) through the factorization
``A = A^- A^+ - 1`` gives the partner ``A_S``, whose spectrum is that of A
without -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy import integrate as spi
from scipy import optimize
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .grids import RadialField, RadialGrid, make_grid, sphere_area
from .profiles import frequency_grid, hankel_eval, hankel_transform, inner_H, norm_H, profile_nu, profile_phi

OP_KINDS = ("q_full", "partner_QS", "harmonic")


class EigenSolveError(RuntimeError):
    """The tridiagonal eigensolver did not converge."""


class UnmatchedEigenvalueError(RuntimeError):
    """SUSY matching failed for at least one eigenvalue."""


# --- potentials -------------------------------------------------------------------

def potential_q(r):
    """Potential of A: 2/r^2 + r^2/16 - 5/4 - 16/(2+r^2)^2 - 4/(2+r^2)."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    return 2.0 / r2 + r2 / 16.0 - 1.25 - 16.0 / (2.0 + r2) ** 2 - 4.0 / (2.0 + r2)


def potential_QS(r):
    """Regular part of the partner potential: r^2/16 - 3/4 - 8/(2+r^2)."""
    r2 = np.asarray(r, dtype=float) ** 2
    return r2 / 16.0 - 0.75 - 8.0 / (2.0 + r2)


def QS_negative_part(r):
    return np.minimum(potential_QS(r), 0.0)


def QS_root() -> float:
    """The unique positive zero of Q_S, bracketed in [4, 5]."""
    return optimize.brentq(potential_QS, 4.0, 5.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def superpotential(r):
    """W = g~'/g~ for g~ ∝ r^2 e^{-r^2/8} / (2 + r^2)."""
    r = np.asarray(r, dtype=float)
    return 2.0 / r - r / 4.0 - 2.0 * r / (2.0 + r * r)


# --- GGMT certificate ---------------------------------------------------------------

@dataclass(frozen=True)
class GGMTCertificate:
    p: int
    alpha: float
    lhs: float  # ∫_0^5 r^{2p-1} |Q_S|^p dr, the bound compared against rhs
    negative_part: float  # ∫_0^root r^{2p-1} |Q_S^-|^p dr
    rhs: float
    root: float
    abserr: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs < self.rhs

    def as_dict(self) -> dict:
        return {"p": self.p, "alpha": self.alpha, "lhs": self.lhs, "negative_part": self.negative_part,
                "rhs": self.rhs, "margin": self.margin, "root": self.root, "abserr": self.abserr,
                "pass": self.passed}


def ggmt_rhs(p: int, alpha: float) -> float:
    return ((4 * alpha + 1) ** ((2 * p - 1) / 2) * p**p * math.gamma(p) ** 2
            / ((p - 1) ** (p - 1) * math.gamma(2 * p)))


def ggmt_certificate(p: int = 2, alpha: float = 6.0, upper: float = 5.0) -> GGMTCertificate:
    """Integral criterion excluding nonpositive eigenvalues of A_S.

    ``lhs`` integrates |Q_S|^p over [0, upper] (Q_S is positive beyond the
    root, so this bounds the negative part); ``negative_part`` stops at the
    root of Q_S.
    """
    if int(p) != p or p < 2:
        raise ValueError("p must be an integer >= 2")
    p = int(p)
    root = QS_root()

    def integrand(r):
        return r ** (2 * p - 1) * abs(potential_QS(r)) ** p

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    neg, e1 = spi.quad(integrand, 0.0, root, **opts)
    pos, e2 = spi.quad(integrand, root, upper, **opts) if upper > root else (0.0, 0.0)
    abserr = e1 + e2
    lhs = neg + pos
    if abserr > 1e-9 * abs(lhs):
        raise RuntimeError(f"GGMT quadrature did not reach tolerance (abserr={abserr:.3e})")
    return GGMTCertificate(p, float(alpha), lhs, neg, ggmt_rhs(p, alpha), root, abserr)


# --- half-line operators --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SchrodingerOperator:
    """Cell-centred discretization of -u'' + V u on (0, R_max).

    Nodes ``(i - 1/2) h`` with ``h = R_max / (N + 1/2)``; the odd reflection
    ``u(-h/2) = -u(h/2)`` realizes u(0) = 0 and the last half-cell closes with
    a Dirichlet condition at R_max.
    """

    kind: str
    R_max: float
    N: int
    nodes: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)
    diag: np.ndarray = field(repr=False)
    offdiag: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.R_max / (self.N + 0.5)

    @property
    def matrix(self) -> sp.csr_matrix:
        return sp.diags([self.offdiag, self.diag, self.offdiag], [-1, 0, 1], format="csr")

    def refined(self, factor: int = 2) -> "SchrodingerOperator":
        return assemble(self.kind, self.N * factor, self.R_max)


def _potential(kind: str, r: np.ndarray) -> np.ndarray:
    if kind == "q_full":
        return potential_q(r)
    if kind == "partner_QS":
        return 6.0 / r**2 + potential_QS(r)
    if kind == "harmonic":
        return r**2
    raise ValueError(f"unknown operator kind {kind!r}; expected one of {OP_KINDS}")


def assemble(op_kind: str, N: int = 2000, R_max: float = 30.0) -> SchrodingerOperator:
    if N < 16 or R_max <= 0:
        raise ValueError("need N >= 16 and R_max > 0")
    h = R_max / (N + 0.5)
    r = (np.arange(1, N + 1) - 0.5) * h
    V = _potential(op_kind, r)
    if not np.all(np.isfinite(V)):
        raise ValueError("potential not finite on the grid")
    diag = 2.0 / h**2 + V
    diag[0] += 1.0 / h**2
    off = np.full(N - 1, -1.0 / h**2)
    for a in (r, V, diag, off):
        a.setflags(write=False)
    return SchrodingerOperator(op_kind, float(R_max), int(N), r, V, diag, off)


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Lowest eigenpairs of a half-line operator (ascending).

    ``eigenvectors[j]`` is normalized so that ``h * sum(v^2) = 1`` and its
    largest-magnitude entry is positive.  ``richardson`` combines N and 2N;
    ``error`` estimates the error of the N values; ``order`` is the observed
    convergence order from N, 2N, 4N when requested.
    """

    kind: str
    N: int
    R_max: float
    nodes: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    richardson: Optional[np.ndarray] = None
    error: Optional[np.ndarray] = None
    order: Optional[np.ndarray] = None

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "N": self.N, "R_max": self.R_max, "eigenvalues": self.eigenvalues.tolist()}
        for name in ("richardson", "error", "order"):
            val = getattr(self, name)
            out[name] = None if val is None else val.tolist()
        return out


def _tridiagonal_lowest(op: SchrodingerOperator, count: int):
    try:
        w, v = eigh_tridiagonal(op.diag, op.offdiag, select="i", select_range=(0, count - 1),
                                lapack_driver="stebz")
    except LinAlgError as exc:  # stein reports the non-converged vectors in its message
        raise EigenSolveError(f"{op.kind} N={op.N}: {exc}") from exc
    v = v / math.sqrt(op.h)
    for j in range(v.shape[1]):
        if v[np.argmax(np.abs(v[:, j])), j] < 0:
            v[:, j] = -v[:, j]
    return w, v.T.copy()


def eigen_solve(op: SchrodingerOperator, count: int = 6, refine: bool = True,
                order_check: bool = False) -> EigenDecomposition:
    """Lowest ``count`` eigenpairs, deterministic (bisection plus inverse iteration)."""
    if count < 1 or count > op.N:
        raise ValueError("count out of range")
    w, v = _tridiagonal_lowest(op, count)
    rich = err = order = None
    if refine:
        w2, _ = _tridiagonal_lowest(op.refined(2), count)
        rich = (4.0 * w2 - w) / 3.0
        err = np.abs(w - rich)
        if order_check:
            w4, _ = _tridiagonal_lowest(op.refined(4), count)
            with np.errstate(divide="ignore", invalid="ignore"):
                order = np.log2(np.abs(w - w2) / np.abs(w2 - w4))
    for a in (w, v):
        a.setflags(write=False)
    return EigenDecomposition(op.kind, op.N, op.R_max, op.nodes, w, v, rich, err, order)


def ground_state_gtilde(nodes) -> np.ndarray:
    """g~ ∝ r^2 e^{-r^2/8} / (2 + r^2), normalized in discrete L^2(R+) on uniform ``nodes``."""
    r = np.asarray(nodes, dtype=float)
    g = r**2 * np.exp(-r**2 / 8.0) / (2.0 + r**2)
    h = r[1] - r[0]
    return g / math.sqrt(h * np.sum(g * g))


# --- SUSY partner ---------------------------------------------------------------------

@dataclass(frozen=True)
class SusyReport:
    ground: float
    ground_present: bool
    ground_absent_in_partner: bool
    pairs: list  # (lambda_A, lambda_AS, |difference|, tolerance)
    superpotential_residual: float

    @property
    def matched(self) -> bool:
        return all(d <= t for _, _, d, t in self.pairs)

    @property
    def passed(self) -> bool:
        return self.ground_present and self.ground_absent_in_partner and self.matched


def superpotential_residual(N: int = 2000, R_max: float = 30.0, window=(0.5, 10.0)) -> float:
    """max |q - (W^2 + W' - 1)| on ``window`` with W = g~'/g~ from finite differences of g~."""
    h = R_max / (N + 0.5)
    r = (np.arange(1, N + 1) - 0.5) * h
    g = ground_state_gtilde(r)
    W = np.gradient(g, h, edge_order=2) / g
    Wp = np.gradient(W, h, edge_order=2)
    mask = (r >= window[0]) & (r <= window[1])
    return float(np.max(np.abs(potential_q(r[mask]) - (W[mask] ** 2 + Wp[mask] - 1.0))))


def susy_check(decompA: EigenDecomposition, decompAS: EigenDecomposition, pairs: int = 5,
               strict: bool = False) -> SusyReport:
    """Match the spectrum of A (minus its ground state -1) against A_S."""
    lamA, lamS = decompA.eigenvalues, decompAS.eigenvalues
    errA = decompA.error if decompA.error is not None else np.zeros_like(lamA)
    errS = decompAS.error if decompAS.error is not None else np.zeros_like(lamS)
    tol_ground = max(10.0 * float(errA[0]), 1e-6)
    present = abs(lamA[0] + 1.0) <= tol_ground
    absent = bool(np.all(np.abs(lamS + 1.0) > 0.5))
    m = min(pairs, lamA.size - 1, lamS.size)
    out = []
    for j in range(m):
        tol = 10.0 * (float(errA[j + 1]) + float(errS[j]))
        out.append((float(lamA[j + 1]), float(lamS[j]), abs(float(lamA[j + 1] - lamS[j])), tol))
    rep = SusyReport(float(lamA[0]), bool(present), absent, out,
                     superpotential_residual(decompA.N, decompA.R_max))
    if strict and not rep.matched:
        bad = [p for p in out if p[2] > p[3]]
        raise UnmatchedEigenvalueError(f"unmatched eigenvalues: {bad}")
    return rep


# --- spectrum of L ---------------------------------------------------------------------

def _log_transport_weight(r):
    """log of the unitary weight |S^4|^{-1/2} r^{-2} e^{r^2/8} phi(r) taking L^2(R+) to H."""
    r = np.asarray(r, dtype=float)
    return -0.5 * math.log(sphere_area(5)) - 2.0 * np.log(r) + r**2 / 8.0 + np.log(profile_phi(5, r))


@dataclass(frozen=True, eq=False)
class LSpectrum:
    """Top of the spectrum of L (descending: 1, then the stable eigenvalues)."""

    eigenvalues: np.ndarray
    richardson: Optional[np.ndarray]
    order: Optional[np.ndarray]
    decomposition: EigenDecomposition = field(repr=False)
    nu_cosine: float

    @property
    def top(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def gap(self) -> float:
        """Estimate of the spectral gap -lambda_2."""
        vals = self.richardson if self.richardson is not None else self.eigenvalues
        return float(-vals[1])

    def as_dict(self) -> dict:
        return {"eigenvalues": self.eigenvalues.tolist(),
                "richardson": None if self.richardson is None else self.richardson.tolist(),
                "order": None if self.order is None else self.order.tolist(),
                "top": self.top, "gap_estimate": self.gap, "nu_cosine": self.nu_cosine,
                "N": self.decomposition.N, "R_max": self.decomposition.R_max}


def nu_cosine_similarity(decomp: EigenDecomposition, j: int = 0) -> float:
    """Cosine in H between the transported j-th eigenvector and ν, evaluated in L^2(R+)."""
    r = decomp.nodes
    nu_pulled = np.exp(-_log_transport_weight(r)) * profile_nu(r)
    u = decomp.eigenvectors[j]
    return float(np.dot(u, nu_pulled) / (np.linalg.norm(u) * np.linalg.norm(nu_pulled)))


def spectrum_L(count: int = 6, N: int = 2000, R_max: float = 30.0, order_check: bool = True) -> LSpectrum:
    dec = eigen_solve(assemble("q_full", N, R_max), count, refine=True, order_check=order_check)
    lam = -dec.eigenvalues
    rich = None if dec.richardson is None else -dec.richardson
    return LSpectrum(lam, rich, dec.order, dec, nu_cosine_similarity(dec, 0))


def transport_eigenfunction(decomp: EigenDecomposition, j: int, grid: RadialGrid,
                            cut: float = 0.8) -> RadialField:
    """The j-th eigenvector of A carried to an eigenfunction of L on an R^5 grid, unit in H.

    The first few half-line nodes are skipped and bridged by an even spline
    of u / r^2.  Beyond ``cut * R_max`` (where the Dirichlet wall and roundoff would be
    amplified by e^{r^2/8}) the field continues with its far-field power law
    r^{-2-2λ}, λ = -eigenvalue.
    """
    if grid.n != 5:
        raise ValueError("L acts on R^5 fields")
    r_c = cut * decomp.R_max
    lam = -float(decomp.eigenvalues[j])
    u = decomp.eigenvectors[j]
    inside = decomp.nodes <= r_c
    inside[:6] = False  # the odd ghost leaves a few-node boundary layer in u / r^2
    x = decomp.nodes[inside]
    y = u[inside] / x**2  # smooth and even, since u ~ r^2 at the origin
    spline = CubicSpline(np.concatenate((-x[::-1], x)), np.concatenate((y[::-1], y)))
    r = grid.nodes
    f = np.empty_like(r)
    m = r <= r_c
    f[m] = spline(r[m]) * np.exp(_log_transport_weight(r[m]) + 2.0 * np.log(r[m]))
    f_c = float(spline(r_c) * np.exp(_log_transport_weight(r_c) + 2.0 * math.log(r_c)))
    f[~m] = f_c * (r[~m] / r_c) ** (-2.0 - 2.0 * lam)
    out = grid.field(f, decay_hint=-2.0 - 2.0 * lam)
    return out / float(norm_H(out))


# --- free semigroup ---------------------------------------------------------------------

def alpha_tau(tau: float) -> float:
    return -math.expm1(-tau)


def beta_tau(tau: float) -> float:
    return alpha_tau(tau) ** -0.5


def apply_S0(f: RadialField, tau: float, xi_grid: Optional[RadialGrid] = None) -> RadialField:
    """Free flow of ∂_τ = Δ - Λ/2 - 1: e^{-τ} (G_α * f)(e^{-τ/2} r) with α = 1 - e^{-τ}.

    The Gaussian convolution is a multiplier e^{-α ξ^2} on the radial Fourier
    transform (the transform is its own inverse).
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if tau == 0:
        return f
    d = f.grid.n
    if xi_grid is None:
        xi_grid = frequency_grid(f.grid)
    Ff = hankel_transform(f, d, xi_grid)
    a = alpha_tau(tau)
    damped = Ff * np.exp(-a * xi_grid.nodes**2)
    vals = math.exp(-tau) * hankel_eval(damped, math.exp(-tau / 2.0) * f.grid.nodes, d)
    return f.grid.field(vals)


def rayleigh_L(f: RadialField, Lf: RadialField) -> float:
    """⟨Lf, f⟩_H / ⟨f, f⟩_H."""
    return float(inner_H(Lf, f)) / float(inner_H(f, f))


__all__ = [
    "EigenDecomposition", "EigenSolveError", "GGMTCertificate", "LSpectrum", "OP_KINDS",
    "SchrodingerOperator", "SusyReport", "UnmatchedEigenvalueError", "alpha_tau", "apply_S0",
    "assemble", "beta_tau", "eigen_solve", "ggmt_certificate", "ggmt_rhs", "ground_state_gtilde",
    "nu_cosine_similarity", "potential_QS", "potential_q", "QS_negative_part", "QS_root",
    "rayleigh_L", "spectrum_L", "superpotential", "superpotential_residual", "susy_check",
    "transport_eigenfunction",
]
