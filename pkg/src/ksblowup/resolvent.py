"""The resolvent equation (λ - L) u = f as a radial ODE on R^5.

With V0 = 2ρφ and V1 = 2ρφ' + 12φ the equation reads

    u'' + (4/ρ - ρ/2 + V0) u' + (V1 - 1 - λ) u = -f,

and ``m(ρ) = ρ^4 e^{-ρ^2/4} (2 + ρ^2)^2`` is its integrating factor.  The
solution regular at 0 (u0) comes from a Frobenius series and outward
marching; the solution decaying at infinity (v_inf) is started from the
WKB-type asymptotics v^- of the normal form and integrated inward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate as spi
from scipy.linalg import solve_banded

from .grids import RadialField, RadialGrid, make_grid, sphere_area
from .profiles import profile_phi

RTOL = 1e-12
ATOL = 1e-300
SERIES_TERMS = 40  # even terms kept in the Frobenius series
MATCH_RADIUS = 2.0


class ResolventError(RuntimeError):
    """Base class for resolvent failures."""


class SeriesRadiusError(ResolventError):
    """Frobenius start radius too large."""


class SmallWronskianError(ResolventError):
    """u0 and v_inf are (numerically) dependent; λ is near an eigenvalue."""


class ContaminationError(ResolventError):
    """The inward integration picked up the growing solution."""


# --- coefficients -----------------------------------------------------------------------

def potentials_V0_V1(rho) -> Tuple[np.ndarray, np.ndarray]:
    rho = np.asarray(rho, dtype=float)
    phi = profile_phi(5, rho)
    dphi = -4.0 * rho / (2.0 + rho**2) ** 2
    return 2.0 * rho * phi, 2.0 * rho * dphi + 12.0 * phi


def integrating_factor(rho):
    rho = np.asarray(rho, dtype=float)
    return rho**4 * np.exp(-rho**2 / 4.0) * (2.0 + rho**2) ** 2


def normal_form_V(r):
    """Potential V of the normal form v'' - (r^2 + μ) v + V v = 0."""
    r = np.asarray(r, dtype=float)
    a = 1.0 + 2.0 * r**2
    return 16.0 / a**2 + 8.0 / a - 2.0 / r**2


def phase_xi(x):
    """ξ(x) = (asinh x + x sqrt(1 + x^2)) / 2."""
    x = np.asarray(x, dtype=float)
    return 0.5 * np.arcsinh(x) + 0.5 * x * np.sqrt(1.0 + x * x)


def log_v_pm(r, mu: float):
    """(log v^-, log v^+, d/dr log v^-, d/dr log v^+)."""
    r = np.asarray(r, dtype=float)
    base = -0.5 * math.log(2.0) - 0.25 * math.log(mu) - 0.25 * np.log1p(r * r / mu)
    ph = mu * phase_xi(r / math.sqrt(mu))
    dbase = -0.5 * r / (mu + r * r)
    dph = np.sqrt(mu + r * r)
    return base - ph, base + ph, dbase - dph, dbase + dph


def v_plus_minus(r, mu: float):
    """(v^-, v^+) evaluated from their log-scale representation."""
    lm, lp, _, _ = log_v_pm(r, mu)
    return np.exp(lm), np.exp(lp)


def v_pm_wronskian(r, mu: float):
    """v^- (v^+)' - (v^-)' v^+, computed as v^- v^+ (dlog v^+ - dlog v^-)."""
    lm, lp, dm, dp = log_v_pm(r, mu)
    return np.exp(lm + lp) * (dp - dm)


def v_minus_limit_constant(mu: float) -> float:
    """lim v^-(r) e^{r^2/2} r^{(μ+1)/2} as r → ∞."""
    return math.exp(-0.5 * math.log(2.0) + 0.25 * mu * math.log(mu / 4.0) - 0.25 * mu)


def _log_omega(r):
    """log ω(r), ω(r) = e^{r^2/2} r^{-2} (1 + 2 r^2)^{-1}, with u(2r) = v(r) ω(r)."""
    r = np.asarray(r, dtype=float)
    return r * r / 2.0 - 2.0 * np.log(r) - np.log1p(2.0 * r * r)


def _dlog_omega(r):
    r = np.asarray(r, dtype=float)
    return r - 2.0 / r - 4.0 * r / (1.0 + 2.0 * r * r)


# --- problem and fundamental pair -----------------------------------------------------------

def bump(center: float = 1.5, width: float = 0.5, amplitude: float = 1.0) -> Callable:
    """Smooth compactly supported bump on [center - width, center + width]."""
    def f(rho):
        x = (np.asarray(rho, dtype=float) - center) / width
        out = np.zeros_like(x)
        m = np.abs(x) < 1.0
        out[m] = amplitude * np.exp(1.0 - 1.0 / (1.0 - x[m] ** 2))
        return out
    f.support = (max(0.0, center - width), center + width)
    return f


@dataclass(frozen=True, eq=False)
class ResolventProblem:
    """(λ - L) u = f on the nodes of ``grid`` (an R^5 grid).

    ``f`` is a vectorized callable with bounded support ``support``.
    """

    lam: float
    f: Callable
    support: Tuple[float, float]
    grid: RadialGrid
    R_start: float = 40.0

    def __post_init__(self):
        if not self.lam > 2.0:
            raise ValueError("λ must exceed 2")
        if self.mu <= 3.0:
            raise ValueError("μ = 4λ - 5 must exceed 3")
        if self.support[1] >= self.grid.R_max:
            raise ValueError("support of f must lie inside the grid")

    @property
    def mu(self) -> float:
        return 4.0 * self.lam - 5.0

    @classmethod
    def with_bump(cls, lam: float = 3.0, center: float = 1.5, width: float = 0.5,
                  grid: Optional[RadialGrid] = None, **kw) -> "ResolventProblem":
        f = bump(center, width)
        grid = grid if grid is not None else make_grid(5, 20.0, 2000)
        return cls(lam, f, f.support, grid, **kw)

    def coefficients(self, rho):
        V0, V1 = potentials_V0_V1(rho)
        return 4.0 / rho - rho / 2.0 + V0, V1 - 1.0 - self.lam


def frobenius_coefficients(lam: float, terms: int = SERIES_TERMS) -> np.ndarray:
    """Coefficients a_k of u0 = Σ a_k ρ^k with a_0 = 1 (odd ones vanish).

    The ODE times ρ(2 + ρ^2)^2 has polynomial coefficients; the leading
    recurrence factor is 4 (m+1)(m+4), so the indicial exponents are 0, -3.
    """
    s = np.array([2.0, 0.0, 1.0])  # 2 + ρ^2
    s2 = P.polymul(s, s)
    P2 = P.polymul([0.0, 1.0], s2)
    P1 = P.polysub(P.polysub(4.0 * s2, 0.5 * P.polymul([0.0, 0.0, 1.0], s2)),
                   -4.0 * P.polymul([0.0, 0.0, 1.0], s))
    P0 = P.polymul([0.0, 1.0], P.polysub(P.polyadd([0.0, 0.0, -8.0], 24.0 * s), (1.0 + lam) * s2))
    K = 2 * terms
    a = np.zeros(K + 1)
    a[0] = 1.0
    for m in range(K):
        # coefficient of ρ^m: Σ_j P2_j k(k-1) a_k [k=m-j+2] + P1_j k a_k [k=m-j+1] + P0_j a_k [k=m-j]
        acc = 0.0
        for j, c in enumerate(P2):
            k = m - j + 2
            if 0 <= k <= m and c:
                acc += c * k * (k - 1) * a[k]
        for j, c in enumerate(P1):
            k = m - j + 1
            if 0 <= k <= m and c:
                acc += c * k * a[k]
        for j, c in enumerate(P0):
            k = m - j
            if 0 <= k <= m and c:
                acc += c * a[k]
        a[m + 1] = -acc / (4.0 * (m + 1) * (m + 4))
    return a


def _series(a: np.ndarray, rho):
    return P.polyval(rho, a), P.polyval(rho, P.polyder(a))


MAX_STEP = 0.05  # keeps the integrator from stepping over the support of f
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


@dataclass(frozen=True, eq=False)
class Branch:
    """A homogeneous solution (value, derivative) and its source integral.

    ``source(ρ)`` is ∫_0^ρ u m f for the regular branch and ∫_ρ^∞ v m f for
    the decaying branch.
    """

    lo: float
    hi: float
    sol: object = field(repr=False)
    scale: float = 1.0
    series: Optional[np.ndarray] = field(default=None, repr=False)
    rho0: float = 0.0
    source_sign: float = 1.0
    source_series: Optional[Callable] = field(default=None, repr=False)

    def __call__(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        u = np.empty_like(rho)
        du = np.empty_like(rho)
        s = rho < self.rho0
        if np.any(s):
            u[s], du[s] = _series(self.series, rho[s])
        if np.any(~s):
            y = self.sol(rho[~s])
            u[~s], du[~s] = self.scale * y[0], self.scale * y[1]
        return u, du

    def source(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        out = np.empty_like(rho)
        s = rho < self.rho0
        if np.any(s):
            out[s] = self.source_series(rho[s])
        if np.any(~s):
            out[~s] = self.source_sign * self.scale * self.sol(rho[~s])[2]
        return out


def _rhs(problem: ResolventProblem):
    f = problem.f

    def rhs(rho, y):
        p, q = problem.coefficients(rho)
        src = y[0] * integrating_factor(rho) * f(np.array([rho]))[0]
        return [y[1], -p * y[1] - q * y[0], src]
    return rhs


def _ivp(problem, span, y0):
    sol = spi.solve_ivp(_rhs(problem), span, y0, method="DOP853", rtol=RTOL, atol=ATOL,
                        dense_output=True, max_step=MAX_STEP)
    if not sol.success:
        raise ResolventError(f"integration over {span} failed: {sol.message}")
    return sol


def solve_regular_origin(problem: ResolventProblem, rho_end: float, rho0: float = 0.5,
                         terms: int = SERIES_TERMS) -> Branch:
    """u0 with u0(0) = 1, u0'(0) = 0: series on [0, ρ0], then DOP853 outward."""
    if rho0 >= 1.0:
        raise SeriesRadiusError(f"series start radius {rho0} must be < 1")
    a = frobenius_coefficients(problem.lam, terms)

    def series_source(x):
        # Gauss-Legendre on [0, x] of series * m * f
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = 0.5 * x[:, None] * (_GL_X[None, :] + 1.0)
        vals = P.polyval(t, a) * integrating_factor(t) * problem.f(t)
        return 0.5 * x * (vals @ _GL_W)

    u, du = _series(a, rho0)
    sol = _ivp(problem, (rho0, rho_end), [u, du, float(series_source(rho0)[0])])
    return Branch(0.0, rho_end, sol.sol, 1.0, a, rho0, 1.0, series_source)


def _start_decaying(problem: ResolventProblem, R: float):
    """log u and (log u)' at ρ = R from v^- through u(ρ) = v(ρ/2) ω(ρ/2)."""
    r = R / 2.0
    lm, _, dm, _ = log_v_pm(r, problem.mu)
    return float(lm + _log_omega(r)), 0.5 * float(dm + _dlog_omega(r))


def _inward(problem: ResolventProblem, R: float, rho_min: float):
    # start from u(R) = 1; the log-scale value is only needed for the overall constant
    _, dlogu = _start_decaying(problem, R)
    sol = _ivp(problem, (R, rho_min), [1.0, dlogu, 0.0])
    return sol, 1.0 / sol.sol(MATCH_RADIUS)[0]


def solve_decaying_infinity(problem: ResolventProblem, rho_min: Optional[float] = None,
                            check: bool = True, tol: float = 1e-8) -> Branch:
    """v_inf in the u-variable, from v^- at R_start integrated inward.

    The branch is scaled to equal 1 at the matching radius.  With ``check``
    the integration is repeated from 1.2 R_start; a relative mismatch above
    ``tol`` on [max(ρ_min, 1/2), R_start/2] raises :class:`ContaminationError`.
    """
    rho_min = float(problem.grid.nodes[0]) if rho_min is None else rho_min
    R = max(problem.R_start, problem.grid.R_max)
    sol, scale = _inward(problem, R, rho_min)
    # the inward source integral is -∫_ρ^R v m f
    branch = Branch(rho_min, R, sol.sol, float(scale), source_sign=-1.0)
    if check:
        sol2, scale2 = _inward(problem, 1.2 * R, rho_min)
        x = np.linspace(max(rho_min, 0.5), R / 2.0, 400)
        a = branch(x)[0]
        b = scale2 * sol2.sol(x)[0]
        mismatch = float(np.max(np.abs(a - b) / np.abs(a)))
        if mismatch > tol:
            raise ContaminationError(f"two-start mismatch {mismatch:.3e} exceeds {tol:.1e}")
    return branch


def two_start_mismatch(problem: ResolventProblem) -> float:
    """Relative shape difference of v_inf started at R_start and 1.2 R_start."""
    R = max(problem.R_start, problem.grid.R_max)
    s1, c1 = _inward(problem, R, 0.5)
    s2, c2 = _inward(problem, 1.2 * R, 0.5)
    x = np.linspace(0.5, R / 2.0, 400)
    a, b = c1 * s1.sol(x)[0], c2 * s2.sol(x)[0]
    return float(np.max(np.abs(a - b) / np.abs(a)))


@dataclass(frozen=True, eq=False)
class FundamentalPair:
    u0: Branch = field(repr=False)
    v_inf: Branch = field(repr=False)
    wronskian: float  # m (u0 v_inf' - u0' v_inf) at the matching radius
    relative_wronskian: float

    def scaled_wronskian(self, rho):
        """m W(u0, v_inf); valid on [lo, u0.hi]."""
        u, du = self.u0(rho)
        v, dv = self.v_inf(rho)
        return integrating_factor(rho) * (u * dv - du * v)


def fundamental_pair(problem: ResolventProblem, rho_end: Optional[float] = None) -> FundamentalPair:
    """u0 (up to ``rho_end``, default the end of f's support) and v_inf, with their Wronskian."""
    rho_end = max(MATCH_RADIUS, problem.support[1]) if rho_end is None else max(rho_end, MATCH_RADIUS)
    u0 = solve_regular_origin(problem, rho_end)
    v = solve_decaying_infinity(problem)
    u, du = u0(MATCH_RADIUS)
    w, dw = v(MATCH_RADIUS)
    m = integrating_factor(MATCH_RADIUS)
    C = float(m * (u[0] * dw[0] - du[0] * w[0]))
    scale = float(m * (abs(u[0] * dw[0]) + abs(du[0] * w[0])))
    rel = abs(C) / scale
    if rel < 1e-8:
        raise SmallWronskianError(f"relative Wronskian {rel:.3e} at ρ={MATCH_RADIUS}; λ near an eigenvalue")
    return FundamentalPair(u0, v, C, rel)


@dataclass(frozen=True, eq=False)
class ResolventSolution:
    """u = -(1/C) [v_inf(ρ) ∫_0^ρ u0 m f + u0(ρ) ∫_ρ^∞ v_inf m f]."""

    problem: ResolventProblem
    pair: FundamentalPair

    def __call__(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        b = self.problem.support[1]
        C = self.pair.wronskian
        u = np.zeros_like(rho)
        du = np.zeros_like(rho)
        out = rho >= b
        if np.any(out):
            I1 = float(self.pair.u0.source(b)[0])
            v, dv = self.pair.v_inf(rho[out])
            u[out] = -I1 * v / C
            du[out] = -I1 * dv / C
        inn = ~out
        if np.any(inn):
            x = rho[inn]
            i1 = self.pair.u0.source(x)
            i2 = self.pair.v_inf.source(x) - self.pair.v_inf.source(b)
            v, dv = self.pair.v_inf(x)
            w, dw = self.pair.u0(x)
            u[inn] = -(v * i1 + w * i2) / C
            du[inn] = -(dv * i1 + dw * i2) / C
        return u, du


def resolvent_solution(problem: ResolventProblem) -> ResolventSolution:
    return ResolventSolution(problem, fundamental_pair(problem))


def solve_resolvent(problem: ResolventProblem) -> RadialField:
    """u = (λ - L)^{-1} f on the problem grid."""
    sol = resolvent_solution(problem)
    u, _ = sol(problem.grid.nodes)
    return problem.grid.field(u, decay_hint=-2.0 - 2.0 * problem.lam)


def solve_resolvent_with_derivative(problem: ResolventProblem) -> Tuple[RadialField, np.ndarray]:
    sol = resolvent_solution(problem)
    u, du = sol(problem.grid.nodes)
    return problem.grid.field(u, decay_hint=-2.0 - 2.0 * problem.lam), du


# --- diagnostics --------------------------------------------------------------------------

def ode_residual(problem: ResolventProblem, u: np.ndarray, du: Optional[np.ndarray] = None,
                 grid: Optional[RadialGrid] = None, accuracy: int = 8,
                 window: Optional[Tuple[float, float]] = None) -> float:
    """max |u'' + p u' + q u + f| / max |f| over ``window``, by high-order differences.

    When the solver's derivative ``du`` is supplied, u'' is its first
    difference (noise grows like 1/h instead of 1/h^2).
    """
    grid = problem.grid if grid is None else grid
    r = grid.nodes
    if du is None:
        du = grid.derivative_matrix(accuracy) @ u
        d2u = grid.second_derivative_matrix(accuracy) @ u
    else:
        d2u = _odd_derivative(grid, du, accuracy)
    p, q = problem.coefficients(r)
    f = problem.f(r)
    res = d2u + p * du + q * u + f
    lo, hi = window if window is not None else (r[0], 0.75 * grid.R_max)
    m = (r >= lo) & (r <= hi)
    return float(np.max(np.abs(res[m])) / np.max(np.abs(f)))


def plugback_residual(solution: ResolventSolution, N: int = 16000) -> float:
    """ode_residual of a solution sampled on a fine auxiliary grid (u, u' from the solver)."""
    pb = solution.problem
    g = make_grid(5, pb.grid.R_max, N)
    u, du = solution(g.nodes)
    return ode_residual(pb, u, du, grid=g)


def branch_residual(problem: ResolventProblem, branch: Branch, hi: float, lo: float = 0.0,
                    N: int = 16000, accuracy: int = 8) -> float:
    """Relative homogeneous residual of a branch on [lo, hi].

    The stencils assume even data at the origin, so for the decaying branch
    (singular like ρ^{-3}) ``lo`` should stay away from 0.
    """
    g = make_grid(5, hi, N)
    r = g.nodes
    u, du = branch(r)
    d2u = _odd_derivative(g, du, accuracy)
    p, q = problem.coefficients(r)
    terms = np.abs(d2u) + np.abs(p * du) + np.abs(q * u)
    res = np.abs(d2u + p * du + q * u)
    m = (r >= max(lo, branch.lo, r[0])) & (r <= 0.95 * hi)
    return float(np.max(res[m] / np.max(terms[m])))


def _odd_derivative(grid: RadialGrid, g: np.ndarray, accuracy: int) -> np.ndarray:
    """d/dr of an odd function given at the nodes (the grid stencils assume even data)."""
    D = grid.derivative_matrix(accuracy)
    r = grid.nodes
    # g = r * (g / r) with g / r even
    e = g / r
    return e + r * (D @ e)


def decay_exponent(u: RadialField, window: Optional[Tuple[float, float]] = None) -> float:
    """Least-squares slope of log|u| against log ρ."""
    r = u.grid.nodes
    lo, hi = window if window is not None else (u.grid.R_max / 2.0, u.grid.R_max)
    m = (r >= lo) & (r <= hi)
    return float(np.polyfit(np.log(r[m]), np.log(np.abs(u.values[m])), 1)[0])


def connection_coefficient(pair: FundamentalPair, rho: float = 0.02) -> float:
    """ρ^3 v_inf(ρ) at small ρ: the weight of the singular branch ρ^{-3} (v_inf(2) = 1)."""
    return float(rho**3 * pair.v_inf(rho)[0][0])


def _weight_log(r):
    """log of |S^4|^{1/2} r^2 e^{-r^2/8} / φ (pull-back from H to L^2(R+))."""
    return 0.5 * math.log(sphere_area(5)) + 2.0 * np.log(r) - r * r / 8.0 - np.log(profile_phi(5, r))


def matrix_resolvent(problem: ResolventProblem, N: int = 8000, R_max: float = 30.0):
    """Independent oracle: (λ + A)^{-1} on the half-line, transported back.

    Returns the half-line nodes and the pulled-back solution U^{-1} u.
    """
    from .spectral import assemble  # local: spectral is not needed by the ODE solver

    op = assemble("q_full", N, R_max)
    r = op.nodes
    rhs = np.exp(_weight_log(r)) * problem.f(r)
    ab = np.zeros((3, N))
    ab[0, 1:] = op.offdiag
    ab[1] = op.diag + problem.lam
    ab[2, :-1] = op.offdiag
    return r, solve_banded((1, 1), ab, rhs)


def matrix_agreement(problem: ResolventProblem, N: int = 8000, R_max: float = 30.0) -> float:
    """Relative H-distance between the ODE resolvent and the matrix oracle."""
    r, x = matrix_resolvent(problem, N, R_max)
    sol = resolvent_solution(problem)
    u, _ = sol(r)
    y = np.exp(_weight_log(r)) * u
    return float(np.linalg.norm(x - y) / np.linalg.norm(y))


__all__ = [
    "Branch", "ContaminationError", "FundamentalPair", "ResolventError", "ResolventProblem",
    "ResolventSolution", "SeriesRadiusError", "SmallWronskianError", "bump", "connection_coefficient",
    "decay_exponent", "frobenius_coefficients", "fundamental_pair", "integrating_factor", "log_v_pm",
    "matrix_agreement", "matrix_resolvent", "normal_form_V", "ode_residual", "phase_xi", "plugback_residual", "branch_residual",
    "potentials_V0_V1", "resolvent_solution", "solve_decaying_infinity", "solve_regular_origin",
    "solve_resolvent", "solve_resolvent_with_derivative", "two_start_mismatch", "v_minus_limit_constant", "v_plus_minus", "v_pm_wronskian",
]
