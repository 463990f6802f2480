"""Similarity-variable flow, perturbation decay, blowup-time shooting and a physical-time run.

In similarity variables the reduced mass Ψ (on R^5) solves

    ∂_τ Ψ = ΔΨ - ΛΨ/2 - Ψ + ΛΨ^2 + 6Ψ^2,      Λ = r ∂_r,

with the static solution φ.  The perturbation ψ = Ψ - φ solves
``∂_τ ψ = L ψ + N(ψ)`` with ``L = Δ - Λ/2 - 1 + 2Λ(φ ·) + 12 φ`` and
``N(ψ) = Λψ^2 + 6ψ^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from .grids import RadialField, RadialGrid, ResolutionWarning, make_grid, sphere_area
from .profiles import norm_Xk, profile_g, profile_nu, profile_phi, project_P, sigma, sigma0

SCHEMES = ("imex-cn-euler", "imex-cnab2", "explicit-rk")
BLOWUP_NORM = 1e6


class EvolutionError(RuntimeError):
    pass


class StabilityError(EvolutionError):
    """Requested step violates the scheme's stability bound."""


class NoSignChangeError(EvolutionError):
    """The shooting bracket does not change the sign of a(τ*)."""


class NoBlowupError(EvolutionError):
    """Physical-time run did not blow up within its budget."""


class ExtrapolationWarning(UserWarning):
    """Initial-data rescaling sampled beyond the grid."""


# --- discrete operators ------------------------------------------------------------------

def _r(grid: RadialGrid) -> sp.dia_matrix:
    return sp.diags(grid.nodes)


def drift_matrix(grid: RadialGrid) -> sp.csr_matrix:
    """-Λ/2 with outflow (backward) differences."""
    return (-0.5 * _r(grid) @ grid.derivative_matrix(2, bias="upwind")).tocsr()


def L0_matrix(grid: RadialGrid, drift: bool = True) -> sp.csr_matrix:
    M = grid.laplacian_matrix(2) - sp.identity(grid.N)
    if drift:
        M = M + drift_matrix(grid)
    return M.tocsr()


def Lprime_matrix(grid: RadialGrid) -> sp.csr_matrix:
    """L' f = 2Λ(φ f) + 12 φ f."""
    phi = sp.diags(profile_phi(5, grid.nodes))
    return (2.0 * _r(grid) @ grid.derivative_matrix(2) @ phi + 12.0 * phi).tocsr()


def L_matrix(grid: RadialGrid, drift: bool = True, potential: bool = True) -> sp.csr_matrix:
    key = ("L", drift, potential)
    cache = grid._cache
    if key not in cache:
        M = L0_matrix(grid, drift)
        if potential:
            M = M + Lprime_matrix(grid)
        cache[key] = M.tocsr()
    return cache[key]


def nonlinear_term(grid: RadialGrid, psi: np.ndarray) -> np.ndarray:
    """N(ψ) = Λ(ψ^2) + 6ψ^2 (centered differences)."""
    sq = psi * psi
    return grid.nodes * (grid.derivative_matrix(2) @ sq) + 6.0 * sq


def rhs_similarity(Psi: RadialField) -> RadialField:
    """ΔΨ - ΛΨ/2 - Ψ + ΛΨ^2 + 6Ψ^2 with upwinded drift."""
    g = Psi.grid
    v = Psi.values
    out = L0_matrix(g) @ v + nonlinear_term(g, v)
    return g.field(out)


def linearized_rhs(psi: RadialField) -> RadialField:
    """L ψ = L0 ψ + L' ψ."""
    return psi.grid.field(L_matrix(psi.grid) @ psi.values)


# --- initial data --------------------------------------------------------------------------

def even_spline(f: RadialField) -> CubicSpline:
    r = f.grid.nodes
    x = np.concatenate((-r[::-1], r))
    y = np.concatenate((f.values[::-1], f.values))
    return CubicSpline(x, y)


def perturbation(grid: RadialGrid, eps: float, r0: float = 1.0, pfree: bool = False) -> RadialField:
    """ε (e^{-(r-r0)^2} + e^{-(r+r0)^2}), optionally with its P-component removed.

    The mirrored Gaussian makes the radial profile smooth at the origin.
    """
    v = grid.sample(lambda r: eps * (np.exp(-(r - r0) ** 2) + np.exp(-(r + r0) ** 2)))
    if pfree:
        v = v - project_P(v)
    return v


def initial_data(v: RadialField, T: float, return_flag: bool = False):
    """ψ(0) = T w0(√T ·) - φ with w0 = φ + v; φ part in closed form, v by cubic interpolation."""
    if not 0.5 <= T <= 1.5:
        raise ValueError("T must lie in [0.5, 1.5]")
    g = v.grid
    r = g.nodes
    x = math.sqrt(T) * r
    out_of_range = x > g.R_max
    spline = even_spline(v)
    vv = np.where(out_of_range, 0.0, spline(np.minimum(x, g.R_max)))
    extrapolated = bool(np.any(out_of_range)) and float(np.max(np.abs(v.values[-5:]))) > 1e-12 * max(
        float(np.max(np.abs(v.values))), 1e-300)
    if extrapolated:
        warnings.warn("rescaled data reaches beyond R_max", ExtrapolationWarning, stacklevel=2)
    psi = T * profile_phi(5, x) - profile_phi(5, r) + T * vv
    psi[-1] = 0.0  # homogeneous Dirichlet at R_max
    f = g.field(psi)
    return (f, extrapolated) if return_flag else f


# --- time stepping --------------------------------------------------------------------------

@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 0.01
    tau_star: float = 6.0
    scheme: str = "imex-cnab2"
    T: float = 1.0
    family: str = "bump"  # bump | bump-pfree | zero
    eps: float = 1e-3
    r0: float = 1.0
    seed: Optional[int] = None  # families are deterministic; kept for the record
    monitor_every: int = 1
    x3_every: int = 0  # 0 disables the X^3 surrogate
    drift: bool = True
    potential: bool = True
    nonlinear: bool = True
    escape: Optional[float] = None  # stop once |a(τ)| exceeds this (used by shooting)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.dt > 0 and self.tau_star > 0):
            raise ValueError("dt and tau_star must be positive")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.family not in ("bump", "bump-pfree", "zero"):
            raise ValueError(f"unknown perturbation family {self.family!r}")


@dataclass(eq=False)
class Trajectory:
    taus: np.ndarray
    norm_H: np.ndarray
    a: np.ndarray
    norm_X3: np.ndarray
    final: RadialField = field(repr=False)
    status: str = "ok"  # ok | blowup | escaped
    steps: int = 0
    stability_bound: float = math.inf

    @property
    def blowup_sign(self) -> float:
        """Direction of departure: sign of a(τ) where |a| first exceeds 1 (else at the end)."""
        big = np.flatnonzero(np.abs(self.a) > 1.0)
        return float(np.sign(self.a[big[0]] if big.size else self.a[-1]))

    def rows(self):
        return np.column_stack((self.taus, self.norm_H, self.a, self.norm_X3))


class _HWeights:
    """Quadrature weights for the H inner product on a fixed grid."""

    def __init__(self, grid: RadialGrid):
        self.w = sphere_area(5) * grid.quad_weights * sigma(grid.nodes)
        self.g = profile_g(grid).values

    def norm(self, v):
        return math.sqrt(max(float(np.dot(self.w, v * v)), 0.0))

    def a(self, v):
        return float(np.dot(self.w, v * self.g))


def stability_bound(grid: RadialGrid, psi0: np.ndarray, scheme: str) -> float:
    """Largest admissible step for the explicit parts of ``scheme``."""
    h = float(np.min(np.diff(np.concatenate(([0.0], grid.nodes)))))
    amp = float(np.max(np.abs(psi0)))
    speed = float(np.max(np.abs(2.0 * grid.nodes * psi0)))
    bound = math.inf
    if amp > 0:
        bound = min(bound, 1.0 / (12.0 * amp), h / speed if speed > 0 else math.inf)
    if scheme == "explicit-rk":
        # RK4 on the full operator: diffusion and drift limits
        bound = min(bound, 0.5 * h * h, 2.0 * h / grid.R_max)
    return bound


def _status(norm: float, a: float, escape: Optional[float]) -> str:
    if not np.isfinite(norm) or norm > BLOWUP_NORM:
        return "blowup"
    if escape is not None and abs(a) > escape:
        return "escaped"
    return "ok"


def _with_dirichlet(M: sp.csr_matrix) -> sp.csr_matrix:
    M = M.tolil()
    M[M.shape[0] - 1, :] = 0.0
    M[M.shape[0] - 1, M.shape[0] - 1] = 1.0
    return M.tocsr()


def evolve(psi0: RadialField, config: EvolutionConfig, raise_on_blowup: bool = False) -> Trajectory:
    """Integrate ∂_τ ψ = L ψ + N(ψ) up to τ* with homogeneous Dirichlet data at R_max.

    The IMEX schemes treat the linear operator L implicitly (Crank-Nicolson)
    and N explicitly (forward Euler or second-order Adams-Bashforth).
    """
    g = psi0.grid
    if g.n != 5:
        raise ValueError("ψ lives on R^5")
    cfg = config
    dt = cfg.dt
    nsteps = int(round(cfg.tau_star / dt))
    if abs(nsteps * dt - cfg.tau_star) > 1e-9 * cfg.tau_star:
        raise ValueError("tau_star must be a multiple of dt")
    bound = stability_bound(g, psi0.values, cfg.scheme)
    if dt > bound:
        raise StabilityError(f"dt={dt:g} exceeds the stability bound {bound:.3e} of {cfg.scheme}")
    L = L_matrix(g, cfg.drift, cfg.potential)
    NL = (lambda v: nonlinear_term(g, v)) if cfg.nonlinear else (lambda v: np.zeros_like(v))
    W = _HWeights(g)
    psi = psi0.values.copy()
    psi[-1] = 0.0
    interior = np.ones(g.N)
    interior[-1] = 0.0

    taus, nh, aa, x3 = [], [], [], []

    def record(k, v):
        taus.append(k * dt)
        nh.append(W.norm(v))
        aa.append(W.a(v))
        if cfg.x3_every and (k // cfg.monitor_every) % cfg.x3_every == 0:
            x3.append(float(norm_Xk(g.field(v), 3)))
        else:
            x3.append(math.nan)

    record(0, psi)
    status = "ok"
    if cfg.scheme.startswith("imex"):
        I = sp.identity(g.N, format="csr")
        lhs = splu(_with_dirichlet(I - 0.5 * dt * L).tocsc())
        rhs_op = (I + 0.5 * dt * L).tocsr()
        n_prev = None
        for k in range(1, nsteps + 1):
            n_now = NL(psi)
            if cfg.scheme == "imex-cnab2" and n_prev is not None:
                expl = 1.5 * n_now - 0.5 * n_prev
            else:
                expl = n_now
            b = rhs_op @ psi + dt * expl
            b[-1] = 0.0
            psi = lhs.solve(b)
            n_prev = n_now
            if k % cfg.monitor_every == 0 or k == nsteps:
                record(k, psi)
                status = _status(nh[-1], aa[-1], cfg.escape)
                if status != "ok":
                    break
    else:
        def F(v):
            return (L @ v + NL(v)) * interior

        for k in range(1, nsteps + 1):
            k1 = F(psi)
            k2 = F(psi + 0.5 * dt * k1)
            k3 = F(psi + 0.5 * dt * k2)
            k4 = F(psi + dt * k3)
            psi = psi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if k % cfg.monitor_every == 0 or k == nsteps:
                record(k, psi)
                status = _status(nh[-1], aa[-1], cfg.escape)
                if status != "ok":
                    break
    traj = Trajectory(np.array(taus), np.array(nh), np.array(aa), np.array(x3), g.field(psi), status,
                      k, bound)
    if status != "ok" and raise_on_blowup:
        raise EvolutionError(f"blowup detected at τ={taus[-1]:.3f} (‖ψ‖_H={nh[-1]:.3e})")
    return traj


# --- decay fits and shooting ---------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    omega: float  # decay rate: ‖ψ‖ ~ e^{-ω τ}
    window: tuple
    residual: float  # RMS of log-residuals

    def as_dict(self) -> dict:
        return {"omega": self.omega, "window": list(self.window), "residual": self.residual}


def fit_rate(taus, values, window) -> DecayFit:
    taus = np.asarray(taus, dtype=float)
    vals = np.abs(np.asarray(values, dtype=float))
    lo, hi = window
    m = (taus >= lo - 1e-12) & (taus <= hi + 1e-12) & (vals > 0)
    if m.sum() < 2:
        raise ValueError("window holds fewer than two samples")
    x, y = taus[m], np.log(vals[m])
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    return DecayFit(float(-slope), (float(lo), float(hi)), float(np.sqrt(np.mean(res**2))))


def fit_decay(trajectory: Trajectory, window=None) -> DecayFit:
    """Least-squares slope of log ‖ψ(τ)‖_H over ``window`` (default: second half)."""
    if window is None:
        window = (0.5 * trajectory.taus[-1], trajectory.taus[-1])
    lo, hi = window
    if lo < trajectory.taus[0] or hi > trajectory.taus[-1] + 1e-12:
        raise ValueError("window must lie inside the trajectory")
    return fit_rate(trajectory.taus, trajectory.norm_H, window)


def fit_growth(trajectory: Trajectory, window) -> float:
    """Growth rate of |a(τ)| over ``window``."""
    return -fit_rate(trajectory.taus, trajectory.a, window).omega


@dataclass(eq=False)
class ShootResult:
    T_star: float
    a_star: float
    bracket: tuple
    iterations: int
    trajectory: Trajectory = field(repr=False)
    history: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {"T_star": self.T_star, "a_star": self.a_star, "bracket": list(self.bracket),
                "iterations": self.iterations}


def default_similarity_grid(N: int = 1500, R_max: float = 30.0) -> RadialGrid:
    return make_grid(5, R_max, N)


def _a_end(v: RadialField, T: float, cfg: EvolutionConfig):
    traj = evolve(initial_data(v, T), replace(cfg, T=T))
    return traj.a[-1] if traj.status == "ok" else traj.blowup_sign * math.inf, traj


def _final_run(v: RadialField, T: float, cfg: EvolutionConfig) -> Trajectory:
    return evolve(initial_data(v, T), replace(cfg, T=T, escape=None))


def shoot_T(v: RadialField, bracket=(0.9, 1.1), tau_star: float = 6.0,
            config: Optional[EvolutionConfig] = None, T_tol: float = 1e-10, a_tol: float = 1e-14,
            max_iter: int = 80) -> ShootResult:
    """Bisection on T for a(τ*) = ⟨ψ(τ*), g⟩_H = 0."""
    cfg = replace(config or EvolutionConfig(), tau_star=tau_star)
    if cfg.escape is None:
        cfg = replace(cfg, escape=1.0)
    lo, hi = map(float, bracket)
    a_lo, _ = _a_end(v, lo, cfg)
    a_hi, _ = _a_end(v, hi, cfg)
    history = [(lo, a_lo), (hi, a_hi)]
    if not np.sign(a_lo) * np.sign(a_hi) < 0:
        raise NoSignChangeError(f"a(τ*) has the same sign at T={lo} ({a_lo:.3e}) and T={hi} ({a_hi:.3e})")
    it = 0
    traj = None
    a_mid = math.nan
    mid = 0.5 * (lo + hi)
    while it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        a_mid, traj = _a_end(v, mid, cfg)
        history.append((mid, a_mid))
        if abs(a_mid) < a_tol or (hi - lo) < T_tol:
            break
        if np.sign(a_mid) == np.sign(a_lo):
            lo, a_lo = mid, a_mid
        else:
            hi, a_hi = mid, a_mid
    if traj is None or traj.status != "ok":
        raise EvolutionError("bisection ended on a blowup trajectory")
    return ShootResult(mid, float(a_mid), (lo, hi), it, _final_run(v, mid, cfg), history)


# --- physical time ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PhysicalConfig:
    N: int = 3000
    R_max: float = 30.0
    stretch: float = 12.0
    cfl: float = 1e-2  # dt = cfl / ‖w‖_∞
    w_stop: float = 1e8
    t_max: float = 3.0
    max_steps: int = 200_000
    fit_span: float = 2.0  # fit 1/w(t,0) on the final stretch where w(t,0) grows by this factor
    snapshot_levels: Sequence[float] = (1e2, 1e4, 1e6)


@dataclass(eq=False)
class PhysicalResult:
    T_blowup: float
    times: np.ndarray
    w_origin: np.ndarray
    scaled_origin: float  # (T - t) w(t, 0) at the last step
    snapshots: list  # (t, ‖w‖_∞, ξ, rescaled profile, sup error against φ)
    steps: int
    fit_residual: float = 0.0

    def as_dict(self) -> dict:
        return {"T_blowup": self.T_blowup, "scaled_origin": self.scaled_origin, "steps": self.steps,
                "fit_residual": self.fit_residual,
                "snapshot_errors": [s[4] for s in self.snapshots],
                "snapshot_levels": [s[1] for s in self.snapshots],
                "snapshot_times": [s[0] for s in self.snapshots]}


class _Band:
    """Banded (LAPACK) storage of sparse matrices with a fixed pattern."""

    def __init__(self, mats, n):
        rows = np.concatenate([m.tocoo().row for m in mats])
        cols = np.concatenate([m.tocoo().col for m in mats])
        self.lower = max(int(np.max(rows - cols)), 0)
        self.upper = max(int(np.max(cols - rows)), 0)
        self.n = n

    def index(self, M):
        C = M.tocoo()
        return (self.upper + C.row - C.col, C.col), C.row, C.data

    def empty(self):
        return np.zeros((self.lower + self.upper + 1, self.n))


def evolve_physical(w0: RadialField, config: Optional[PhysicalConfig] = None) -> PhysicalResult:
    """∂_t w = Δw + Λw^2 + 6w^2 on R^5 up to ‖w‖_∞ = w_stop.

    Two-stage Rosenbrock steps (L-stable, second order, banded Jacobian at the
    current state) with dt = cfl / ‖w‖_∞; the outer boundary value is
    frozen.  T is extrapolated from the late-time linear law
    1/w(t, 0) ≈ κ (T - t) fitted on the final stretch of the run.
    """
    cfg = config or PhysicalConfig()
    grid = w0.grid
    if grid.n != 5:
        raise ValueError("w lives on R^5")
    N = grid.N
    D = grid.derivative_matrix(2)
    Lap = grid.laplacian_matrix(2)
    band = _Band([D, Lap, sp.identity(N)], N)
    lap_idx, _, lap_val = band.index(Lap)
    d_idx, d_row, d_val = band.index(D)
    diag = np.arange(N)
    last = [(band.upper + N - 1 - j, j) for j in range(max(0, N - 1 - band.lower), N)]
    last_idx = (np.array([k for k, _ in last]), np.array([j for _, j in last]))
    gamma = 1.0 + 1.0 / math.sqrt(2.0)
    r = grid.nodes

    def F(v):
        out = Lap @ v + 2.0 * r * v * (D @ v) + 6.0 * v * v
        out[-1] = 0.0
        return out

    w = w0.values.copy()
    origin_w = grid.origin_weights(2)
    t = 0.0
    times, w_orig = [0.0], [float(origin_w @ w[: origin_w.size])]
    snaps_raw = []
    levels = list(cfg.snapshot_levels)
    steps = 0
    while True:
        wmax = float(np.max(np.abs(w)))
        if not np.isfinite(wmax):
            raise EvolutionError("non-finite state in physical run")
        if wmax >= cfg.w_stop:
            break
        if t > cfg.t_max or steps >= cfg.max_steps:
            raise NoBlowupError(f"no blowup by t={t:.4g} after {steps} steps (‖w‖_∞={wmax:.3e})")
        dt = cfg.cfl / wmax
        Dw = D @ w
        # Jacobian: Lap + diag(2 r Dw + 12 w) + diag(2 r w) D
        ab = band.empty()
        ab[lap_idx] += lap_val
        ab[d_idx] += (2.0 * r * w)[d_row] * d_val
        ab[band.upper, diag] += 2.0 * r * Dw + 12.0 * w
        ab *= -gamma * dt
        ab[band.upper, diag] += 1.0
        ab[last_idx] = 0.0
        ab[band.upper, N - 1] = 1.0
        lu = (band.lower, band.upper)
        k1 = solve_banded(lu, ab, F(w), check_finite=False)
        k2 = solve_banded(lu, ab, F(w + dt * k1) - 2.0 * k1, check_finite=False)
        w = w + dt * (1.5 * k1 + 0.5 * k2)
        t += dt
        steps += 1
        times.append(t)
        w_orig.append(float(origin_w @ w[: origin_w.size]))
        while levels and np.max(w) >= levels[0]:
            snaps_raw.append((t, float(np.max(w)), w.copy()))
            levels.pop(0)
    times = np.array(times)
    w_orig = np.array(w_orig)
    m = w_orig >= w_orig[-1] / cfg.fit_span
    if m.sum() < 5:
        m = np.zeros_like(m)
        m[-5:] = True
    x = times[m] - times[-1]
    y = 1.0 / w_orig[m]
    slope, icpt = np.polyfit(x, y, 1)
    fit_res = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)) / np.max(np.abs(y)))
    T = times[-1] - icpt / slope
    snaps_raw.append((t, float(np.max(w)), w.copy()))
    snaps = [_rescaled_snapshot(grid, ts, wm, ws, T) for ts, wm, ws in snaps_raw]
    return PhysicalResult(float(T), times, w_orig, float((T - t) * w_orig[-1]), snaps, steps, fit_res)


def _rescaled_snapshot(grid: RadialGrid, t: float, wmax: float, w: np.ndarray, T: float, xi_max: float = 10.0):
    s = T - t
    xi = np.linspace(0.0, xi_max, 201)
    spline = even_spline(grid.field(w))
    x = math.sqrt(max(s, 0.0)) * xi
    prof = s * spline(np.minimum(x, grid.R_max))
    err = float(np.max(np.abs(prof - profile_phi(5, xi))) / 1.0)  # φ(0) = 1
    return (t, wmax, xi, prof, err)


def physical_grid(cfg: Optional[PhysicalConfig] = None) -> RadialGrid:
    cfg = cfg or PhysicalConfig()
    return make_grid(5, cfg.R_max, cfg.N, "mapped-stretched", stretch=cfg.stretch)


__all__ = [
    "DecayFit", "EvolutionConfig", "EvolutionError", "ExtrapolationWarning", "NoBlowupError",
    "NoSignChangeError", "PhysicalConfig", "PhysicalResult", "SCHEMES", "ShootResult", "StabilityError",
    "Trajectory", "default_similarity_grid", "drift_matrix", "evolve", "evolve_physical", "even_spline",
    "fit_decay", "fit_growth", "fit_rate", "initial_data", "L0_matrix", "L_matrix", "linearized_rhs",
    "Lprime_matrix", "nonlinear_term", "perturbation", "physical_grid", "rhs_similarity", "shoot_T",
    "stability_bound",
]
