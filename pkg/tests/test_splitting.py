import math

import numpy as np
import pytest

from shsplit import verify
from shsplit.lattice import GridSpec, quad_weights
from shsplit.splitting import (
    DissipationCheck,
    ErrorBoundConstants,
    SplittingProblem,
    StepReport,
    dissipation_check,
    error_prefactor,
    guaranteed_decrement,
    max_stable_dt,
    scc_step,
)


def quadratic_problem(grid, a1, a2, a3):
    """nu_i = a_i/2 ||u||^2; the step has a closed form on uniform fields."""
    w3 = quad_weights(grid).w3

    def implicit_solve(rhs, dt):
        return rhs / (1.0 / dt + a2), 1, 0.0

    return SplittingProblem(
        grad_nu1=lambda u: a1 * u,
        grad_nu3=lambda u: a3 * u,
        implicit_solve=implicit_solve,
        lipschitz=abs(a1),
        mu2=a2,
        mu3=a3 if a3 > 0 else 0.0,
        weights=w3,
        nu3_convex=(a3 <= 0.0),
        nu_total=lambda u: 0.5 * (a1 + a2 - a3) * float(np.sum(w3 * u * u)),
    )


def test_scc_step_closed_form():
    g = GridSpec(2, 2, 2, 1.0, 1.0, 1.0)
    a1, a2, a3 = 0.7, 2.0, 0.4
    prob = quadratic_problem(g, a1, a2, a3)
    u = np.full(g.shape, 1.3)
    dt = 0.25
    x, report = scc_step(prob, u, dt)
    expected = 1.3 * (1.0 / dt - a1 + a3) / (1.0 / dt + a2)
    np.testing.assert_allclose(x, expected, rtol=1e-14)
    inc = abs(expected - 1.3) * math.sqrt(g.volume)
    assert report.increment_norm == pytest.approx(inc, rel=1e-12)
    assert report.dt == dt


def test_guaranteed_decrement_formula():
    assert guaranteed_decrement(0.5, 2.0, 3.0) == pytest.approx((2.0 - 1.5) * 4.0)
    assert guaranteed_decrement(1.0, 1.0, 0.0) == pytest.approx(1.0)


def test_max_stable_dt():
    assert max_stable_dt(3.0, 1.0, 0.0) == pytest.approx(1.0)
    assert max_stable_dt(3.0, 0.0, 1.0) == pytest.approx(1.0)
    assert max_stable_dt(1.0, 2.0, 0.0) == math.inf  # l_hat <= 0
    with pytest.raises(ValueError):
        max_stable_dt(-1.0, 0.0, 0.0)


def test_dissipation_check_passes_honest_problem():
    g = GridSpec(3, 3, 3, 0.5, 0.5, 0.5)
    prob = quadratic_problem(g, 0.7, 2.0, 0.4)
    u = np.random.default_rng(0).standard_normal(g.shape)
    for dt in (0.1, 1.0, 10.0):
        _, report = scc_step(prob, u, dt)
        chk = dissipation_check(report, prob.lipschitz, prob.mu2, prob.mu3)
        assert chk.ok, chk


def test_dissipation_check_catches_dishonest_constants():
    chk = verify.dissipation_negative_control()
    assert not chk.ok
    assert chk.slack < -1.0  # large, unambiguous violation


def test_problem_validation():
    g = GridSpec(2, 2, 2, 1.0, 1.0, 1.0)
    w3 = quad_weights(g).w3
    kw = dict(
        grad_nu1=lambda u: u,
        grad_nu3=lambda u: u,
        implicit_solve=lambda rhs, dt: (rhs, 0, 0.0),
        weights=w3,
    )
    SplittingProblem(lipschitz=1.0, mu2=0.0, mu3=1.0, **kw)
    SplittingProblem(lipschitz=1.0, mu2=0.0, mu3=0.0, nu3_convex=True, **kw)
    with pytest.raises(ValueError):
        SplittingProblem(lipschitz=0.0, mu2=0.0, mu3=1.0, **kw)
    with pytest.raises(ValueError):
        # concave-side modulus must be positive unless flagged convex
        SplittingProblem(lipschitz=1.0, mu2=0.0, mu3=0.0, **kw)
    with pytest.raises(ValueError):
        SplittingProblem(lipschitz=1.0, mu2=0.0, mu3=0.5, nu3_convex=True, **kw)


def test_error_prefactor_specialization_frozen():
    # r = 1/2, kappa1 = kappa2 = 2/3: dt_max = 1/(3 l_hat) and
    # prefactor = 1/sqrt(l_hat^2 + 4 L^2), pinned to 1e-14
    rng = np.random.default_rng(6)
    for _ in range(100):
        l = float(10.0 ** rng.uniform(-1, 2))
        mu2 = float(rng.uniform(0.0, 0.4)) * l
        mu3 = float(rng.uniform(0.0, 0.4)) * l
        l_hat = l - mu2 - mu3
        consts = error_prefactor(l, mu2, mu3)
        assert consts.l_hat == pytest.approx(l_hat, rel=1e-14)
        assert consts.dt_max == pytest.approx(1.0 / (3.0 * l_hat), rel=1e-14)
        assert consts.prefactor == pytest.approx(
            1.0 / math.sqrt(l_hat**2 + 4.0 * l**2), rel=1e-14
        )
        assert consts.rate > 0


def test_error_prefactor_negative_l_hat():
    # strongly convex implicit piece dominating the slope: dt unrestricted
    consts = error_prefactor(1.0, 5.0, 0.0)
    assert consts.l_hat == pytest.approx(-4.0)
    assert consts.dt_max == math.inf
    assert consts.prefactor > 0


def test_error_prefactor_validation():
    with pytest.raises(ValueError):
        error_prefactor(1.0, 1.0, 0.0)  # l_hat = 0 degenerate
    with pytest.raises(ValueError):
        error_prefactor(1.0, 0.0, 0.0, kappa1=1.5, kappa2=0.5)  # sum = 2
    with pytest.raises(ValueError):
        error_prefactor(1.0, 0.0, 0.0, r=1.0)
    with pytest.raises(ValueError):
        error_prefactor(1.0, 0.0, 0.0, r=0.0)


def test_error_growth_overflow_guard():
    consts = error_prefactor(100.0, 0.0, 0.0, horizon=1000.0)
    assert consts.growth == math.inf  # exp would overflow; reported honestly
    mild = error_prefactor(1.0, 0.5, 0.0, horizon=0.5)
    assert 0 < mild.growth < math.inf
    assert mild.growth == pytest.approx(math.sqrt(math.expm1(mild.rate * 0.5)), rel=1e-12)


def test_bound_method_scales_inputs():
    consts = error_prefactor(2.0, 0.5, 0.0, horizon=0.1)
    b1 = consts.bound(1e-3, 1.0, 1.0)
    b2 = consts.bound(1e-3, 2.0, 2.0)
    assert b2 == pytest.approx(2.0 * b1, rel=1e-12)
    with pytest.raises(ValueError):
        consts.bound(consts.dt_max * 1.01, 1.0, 1.0)
