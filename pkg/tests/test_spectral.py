import math
import time

import numpy as np
import pytest
import sympy as sy
from hypothesis import given, settings
from hypothesis import strategies as st

from ksblowup.families import SEMIGROUP_SUITE
from ksblowup.grids import make_grid
from ksblowup.profiles import norm_L2, norm_Xk, profile_g, profile_nu
from ksblowup.spectral import (QS_negative_part, QS_root, apply_S0, assemble, eigen_solve, ggmt_certificate,
                               ggmt_rhs, ground_state_gtilde, nu_cosine_similarity, potential_q, potential_QS,
                               spectrum_L, superpotential, superpotential_residual, susy_check,
                               transport_eigenfunction)

GGMT_CLOSED_FORM = 1305275 / 55296 - 18 * math.log(2) + 18 * math.log(27)

_r = sy.symbols("r", positive=True)
_Q_S = _r**2 / 16 - sy.Rational(3, 4) - 8 / (2 + _r**2)
_q = 2 / _r**2 + _r**2 / 16 - sy.Rational(5, 4) - 16 / (2 + _r**2) ** 2 - 4 / (2 + _r**2)
_gt = _r**2 * sy.exp(-_r**2 / 8) / (2 + _r**2)


def test_symbolic_oracles():
    assert sy.simplify(sy.integrate(_r**3 * _Q_S**2, (_r, 0, 5))
                       - (sy.Rational(1305275, 55296) - 18 * sy.log(2) + 18 * sy.log(27))) == 0
    W = sy.diff(_gt, _r) / _gt
    assert sy.simplify(W**2 + sy.diff(W, _r) - 1 - _q) == 0
    assert sy.simplify(W**2 - sy.diff(W, _r) - 1 - (6 / _r**2 + _Q_S)) == 0
    assert _q.subs(_r, sy.sqrt(2)) == sy.Rational(-17, 8)
    assert _Q_S.subs(_r, 0) == sy.Rational(-19, 4)


def test_potentials():
    assert potential_q(math.sqrt(2)) == pytest.approx(-2.125, rel=1e-14)
    assert potential_q(1e4) - 1e8 / 16 == pytest.approx(-1.25, abs=1e-6)
    assert potential_q(1e-5) * 1e-10 == pytest.approx(2.0, rel=1e-8)
    assert potential_QS(0.0) == -4.75
    r = np.linspace(5, 30, 2001)
    assert np.all(potential_QS(r) > 0)
    assert QS_negative_part(6.0) == 0.0
    assert 4.0 < QS_root() < 5.0 and abs(potential_QS(QS_root())) < 1e-12
    x = np.linspace(0.3, 8, 50)
    W = sy.lambdify(_r, sy.diff(sy.log(_gt), _r), "numpy")
    assert np.allclose(superpotential(x), W(x), rtol=1e-13, atol=1e-13)


def test_ggmt_certificate():
    t0 = time.perf_counter()
    cert = ggmt_certificate(2, 6)
    assert time.perf_counter() - t0 < 1.0
    assert abs(cert.lhs / GGMT_CLOSED_FORM - 1) < 1e-8
    assert cert.rhs == pytest.approx(250 / 3, rel=1e-15)
    assert cert.passed and cert.as_dict()["pass"] is True
    assert cert.margin == pytest.approx(12.88, abs=5e-3)
    assert ggmt_rhs(2, 6) == pytest.approx(250 / 3, rel=1e-15)
    with pytest.raises(ValueError):
        ggmt_certificate(p=1)


def test_ggmt_monotone_in_upper_limit():
    uppers = [4.5, 5.0, 5.5, 6.0]
    certs = [ggmt_certificate(upper=u) for u in uppers]
    assert all(a.lhs <= b.lhs for a, b in zip(certs, certs[1:]))
    negs = [c.negative_part for c in certs]
    assert max(negs) - min(negs) == 0.0


def test_operators_exactly_symmetric():
    for kind in ("q_full", "partner_QS", "harmonic"):
        M = assemble(kind, 200, 30).matrix
        assert (M != M.T).nnz == 0
    with pytest.raises(ValueError):
        assemble("nope", 100)


def test_harmonic_oscillator_levels():
    dec = eigen_solve(assemble("harmonic", 2000, 12), 4)
    assert np.allclose(dec.eigenvalues, [3, 7, 11, 15], atol=2e-4)
    assert np.allclose(dec.richardson, [3, 7, 11, 15], atol=1e-7)


def test_lowest_eigenvalues():
    A = eigen_solve(assemble("q_full", 2000, 30), 3)
    AS = eigen_solve(assemble("partner_QS", 2000, 30), 3)
    assert A.eigenvalues[0] == pytest.approx(-1.0, abs=1e-4)
    assert AS.eigenvalues[0] > 0


def test_ground_state():
    for N in (500, 1000):
        g = ground_state_gtilde(assemble("q_full", N, 30).nodes)
        assert np.all(g > 0)
    res = []
    for N in (500, 1000, 2000):
        op = assemble("q_full", N, 30)
        g = ground_state_gtilde(op.nodes)
        res.append(np.linalg.norm(op.matrix @ g + g) / np.linalg.norm(g))
    assert res[0] > res[1] > res[2]
    for x in (0.5, 1.0, 2.0):
        pair = ground_state_gtilde(np.array([x, 2 * x]))
        exact = float((_gt.subs(_r, 2 * x) / _gt.subs(_r, x)).evalf(30))
        assert pair[1] / pair[0] == pytest.approx(exact, rel=1e-13)


def test_susy_isospectral():
    A = eigen_solve(assemble("q_full", 2000, 30), 6)
    AS = eigen_solve(assemble("partner_QS", 2000, 30), 6)
    rep = susy_check(A, AS, pairs=5, strict=True)
    assert rep.ground_present and rep.ground_absent_in_partner and rep.matched and rep.passed
    assert len(rep.pairs) == 5
    res = [superpotential_residual(N) for N in (500, 1000, 2000)]
    assert res[0] > res[1] > res[2]


def test_spectrum_L():
    t0 = time.perf_counter()
    spec = spectrum_L(6, 2000, 30)
    assert time.perf_counter() - t0 < 30
    assert abs(spec.top - 1) < 1e-4
    assert np.all(spec.eigenvalues[1:] < 0)
    assert spec.nu_cosine > 0.999
    assert abs(spec.order[0] - 2) < 0.4
    assert 0 < spec.gap < 0.5


def test_eigenvalues_monotone_under_truncation():
    # spacing matched to ~1e-4 across R; the 1e-6 slack covers the residual h-dependence
    h = 0.015
    lows = np.array([eigen_solve(assemble("q_full", int(R / h), R), 2, refine=False).eigenvalues
                     for R in (15.0, 20.0, 30.0)])
    assert np.all(np.diff(lows, axis=0) <= 1e-6)


def test_transported_top_eigenfunction_is_g():
    spec = spectrum_L(3, 2000, 30, order_check=False)
    grid = make_grid(5, 30, 3000)
    f = transport_eigenfunction(spec.decomposition, 0, grid)
    assert np.max(np.abs(f.values - profile_g(grid).values)) < 1e-3
    assert nu_cosine_similarity(spec.decomposition) > 0.999999


@pytest.fixture(scope="module")
def sgrid():
    return make_grid(5, 30, 1500)


def test_semigroup_composition(sgrid):
    for f in list(SEMIGROUP_SUITE.values())[:4]:
        s = sgrid.sample(f)
        a = apply_S0(apply_S0(s, 0.5), 1.0)
        b = apply_S0(s, 1.5)
        assert np.max(np.abs(a.values - b.values)) < 1e-6


def test_semigroup_x3_decay(sgrid):
    for f in SEMIGROUP_SUITE.values():
        s = sgrid.sample(f)
        base = float(norm_Xk(s, 3))
        for tau in (0.5, 1.0, 2.0):
            assert float(norm_Xk(apply_S0(s, tau), 3)) <= math.exp(-tau / 4) * base + 1e-10


def test_semigroup_continuity_and_positivity(sgrid):
    s = sgrid.sample(SEMIGROUP_SUITE["shell-1"])
    errs = [float(norm_L2(apply_S0(s, tau) - s)) / float(norm_L2(s)) for tau in (1e-2, 1e-3, 1e-4)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-3
    assert apply_S0(s, 0.0) is s
    for f in SEMIGROUP_SUITE.values():
        vals = sgrid.sample(f).values
        if np.all(vals >= 0):
            out = apply_S0(sgrid.sample(f), 0.7).values
            assert out.min() >= -1e-12 * np.max(np.abs(out))


def test_semigroup_on_nu_free_decay(sgrid):
    # S0 has no unstable mode, so ν contracts in X^3 as well
    nu = sgrid.sample(profile_nu)
    assert float(norm_Xk(apply_S0(nu, 1.0), 3)) < float(norm_Xk(nu, 3))


@settings(max_examples=10, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), tau=st.floats(0.05, 2.0))
def test_semigroup_linear(a, b, tau):
    g = make_grid(5, 30, 600)
    f, h = g.sample(SEMIGROUP_SUITE["gauss-1"]), g.sample(SEMIGROUP_SUITE["shell-2"])
    lhs = apply_S0(a * f + b * h, tau).values
    rhs = a * apply_S0(f, tau).values + b * apply_S0(h, tau).values
    assert np.allclose(lhs, rhs, atol=1e-12 * (abs(a) + abs(b) + 1))
