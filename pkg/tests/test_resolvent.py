import math

import numpy as np
import pytest
import sympy as sy

from ksblowup.grids import make_grid
from ksblowup.resolvent import (ResolventProblem, branch_residual, bump, connection_coefficient, decay_exponent,
                                frobenius_coefficients, fundamental_pair, log_v_pm, matrix_agreement,
                                normal_form_V, phase_xi, plugback_residual, potentials_V0_V1,
                                resolvent_solution, solve_resolvent, two_start_mismatch, v_minus_limit_constant,
                                v_plus_minus, v_pm_wronskian)

MU = 7.0  # λ = 3


def test_coefficients():
    V0, V1 = potentials_V0_V1(np.array([0.0, math.sqrt(2)]))
    assert V0[0] == 0.0 and V1[0] == 12.0
    assert V0[1] == pytest.approx(math.sqrt(2), rel=1e-15)
    assert normal_form_V(1.0) == pytest.approx(22 / 9, rel=1e-15)
    assert phase_xi(0.0) == 0.0


def test_normal_form_symbolic():
    r, lam = sy.symbols("r lambda", positive=True)
    v = sy.Function("v")
    rho = 2 * r
    phi = 2 / (2 + rho**2)
    V0 = 2 * rho * phi
    V1 = 2 * rho * sy.diff(phi, r) / 2 + 12 * phi
    p = 4 / rho - rho / 2 + V0
    q = V1 - 1 - lam
    omega = sy.exp(r**2 / 2) / (r**2 * (1 + 2 * r**2))
    u = v(r) * omega
    # u_ρρ + p u_ρ + q u with d/dρ = (1/2) d/dr, scaled by 4/ω
    expr = sy.expand((sy.diff(u, r, 2) / 4 + p * sy.diff(u, r) / 2 + q * u) * 4 / omega)
    D2, D1 = sy.Derivative(v(r), (r, 2)), sy.Derivative(v(r), r)
    c2, c1 = expr.coeff(D2), expr.coeff(D1)
    c0 = sy.simplify((expr - c2 * D2 - c1 * D1) / v(r))
    mu = 4 * lam - 5
    V = 16 / (1 + 2 * r**2) ** 2 + 8 / (1 + 2 * r**2) - 2 / r**2
    assert sy.simplify(c2 - 1) == 0 and sy.simplify(c1) == 0
    assert sy.simplify(c0 - (-(r**2 + mu) + V)) == 0


def test_v_pm_wronskian_and_asymptotics():
    for r in (1.0, 2.0, 5.0):
        assert abs(v_pm_wronskian(r, MU) - 1.0) < 1e-10
    # log-derivatives agree with differences of the logs
    r = np.linspace(0.5, 8, 200)
    lm, lp, dm, dp = log_v_pm(r, MU)
    assert np.allclose(np.gradient(lm, r, edge_order=2)[5:-5], dm[5:-5], rtol=1e-4)
    # v^- e^{r^2/2} r^{(μ+1)/2} tends to a constant (1/√2 (μ/4)^{μ/4} e^{-μ/4}, not 1)
    big = np.array([1e2, 1e3, 1e4])
    lm, *_ = log_v_pm(big, MU)
    scaled = np.exp(lm + big**2 / 2 + (MU + 1) / 2 * np.log(big))
    assert scaled[-1] == pytest.approx(v_minus_limit_constant(MU), rel=1e-7)
    assert abs(scaled[0] - scaled[-1]) > abs(scaled[1] - scaled[-1])
    vm, vp = v_plus_minus(2.0, MU)
    assert vm > 0 and vp > 0


@pytest.fixture(scope="module")
def problem():
    return ResolventProblem.with_bump(3.0, 1.5, 0.5)


@pytest.fixture(scope="module")
def solution(problem):
    return resolvent_solution(problem)


def test_problem_validation():
    with pytest.raises(ValueError):
        ResolventProblem.with_bump(2.0)
    with pytest.raises(ValueError):
        ResolventProblem.with_bump(3.0, 19.8, 0.5)


def test_frobenius_branch(problem, solution):
    a = frobenius_coefficients(3.0)
    assert a[0] == 1.0 and np.all(a[1::2] == 0.0)
    u0 = solution.pair.u0
    u, du = u0(np.array([0.0, 1e-3]))
    assert u[0] == 1.0 and du[0] == 0.0
    assert abs(du[1]) < 1e-2
    assert np.all(np.isfinite(u0(np.linspace(0, u0.hi, 50))[0]))
    assert branch_residual(problem, u0, u0.hi) < 1e-10


def test_decaying_branch(problem, solution):
    assert two_start_mismatch(problem) < 1e-8
    assert branch_residual(problem, solution.pair.v_inf, 10.0, lo=0.5) < 1e-9
    u = solve_resolvent(problem)
    assert decay_exponent(u) == pytest.approx(-8.0, rel=0.05)


def test_scaled_wronskian_constant(solution):
    rho = np.linspace(1.0, 10.0, 40)
    pair = fundamental_pair(solution.problem, rho_end=10.0)
    W = pair.scaled_wronskian(rho)
    assert np.max(np.abs(W / W[0] - 1)) < 1e-8


def test_resolvent_residual_and_matrix_oracle(solution, problem):
    assert plugback_residual(solution) < 1e-8
    assert matrix_agreement(problem) < 1e-4


def test_far_field_constant(problem, solution):
    rho = np.array([10.0, 14.0, 18.0])
    u, _ = solution(rho)
    scaled = u * rho**8
    assert np.all(scaled > 0) or np.all(scaled < 0)
    assert abs(scaled[2] / scaled[1] - 1) < abs(scaled[1] / scaled[0] - 1) + 1e-3
    assert abs(connection_coefficient(solution.pair)) > 1.0


def test_zero_rhs(problem):
    f = bump(1.5, 0.5, amplitude=0.0)
    u = solve_resolvent(ResolventProblem(3.0, f, f.support, problem.grid))
    assert np.all(u.values == 0.0)


def test_linear_in_f():
    grid = make_grid(5, 20.0, 400)
    f1, f2 = bump(1.5, 0.5), bump(2.5, 0.7)
    a, b = 0.7, -1.9

    def f12(r):
        return a * f1(r) + b * f2(r)

    support = (1.0, 3.2)
    u1 = solve_resolvent(ResolventProblem(3.0, f1, f1.support, grid)).values
    u2 = solve_resolvent(ResolventProblem(3.0, f2, f2.support, grid)).values
    u12 = solve_resolvent(ResolventProblem(3.0, f12, support, grid)).values
    assert np.max(np.abs(u12 - (a * u1 + b * u2))) < 1e-8 * np.max(np.abs(u12))
