import math

import numpy as np
import pytest

from shsplit import calculus, verify
from shsplit.energy import PhysParams
from shsplit.lattice import GridSpec


def test_identity_suite_small_grids():
    for dims in ((2, 2, 2), (3, 4, 5)):
        grid = GridSpec(*dims, 0.4, 0.5, 0.6)
        rep = verify.identity_suite(grid, n_fields=6, seed=2)
        assert rep.passed(1e-12), rep.max_defect


def test_oracle_equivalence_tight():
    grid = GridSpec(3, 4, 5, 0.3, 0.45, 0.5)
    worst = verify.oracle_equivalence(grid, n_fields=3, seed=0)
    assert worst <= 1e-13


def test_random_fields_deterministic():
    grid = GridSpec(3, 3, 3, 1.0, 1.0, 1.0)
    a = list(verify.random_fields(grid, 2, seed=7))
    b = list(verify.random_fields(grid, 2, seed=7))
    assert len(a) == 2
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.values, y.values)


def test_truncated_cubic_lipschitz_saturates():
    grid = GridSpec(3, 3, 3, 1.0, 1.0, 1.0)
    rep = verify.truncated_cubic_lipschitz(grid, 1.2, pairs=400, seed=1)
    assert rep.passed
    # the tail slope equals the bound, so sampling across it gets close
    assert rep.max_ratio >= 0.9 * rep.bound


def test_raw_cubic_control_fails():
    grid = GridSpec(3, 3, 3, 1.0, 1.0, 1.0)
    rep = verify.raw_cubic_lipschitz(grid, 1.2, pairs=400, seed=1)
    assert not rep.passed
    assert rep.max_ratio > rep.bound


def test_convexity_suite_both_branches():
    grid = GridSpec(4, 4, 4, 0.5, 0.5, 0.5)
    for eta in (0.3, 1.6):
        out = verify.convexity_suite(grid, PhysParams(1.0, eta), 1.5,
                                     pairs=24, seed=0)
        assert out["nu1_lipschitz"].passed
        assert out["nu1_monotone_min"] >= 0.0
        assert out["nu2"].passed()
        assert out["nu3"].passed()


def test_dissipation_control_fails():
    check = verify.dissipation_negative_control()
    assert not check.ok
    assert check.slack < -1.0


def test_mms_validation():
    grid = GridSpec(4, 4, 4, 0.25, 0.25, 0.25)
    params = PhysParams(1.0, 0.5)
    with pytest.raises(ValueError):
        verify.MMSProblem(grid, params, ((1, 0, 0),), (0.1, 0.2))
    with pytest.raises(ValueError):
        verify.MMSProblem(grid, params, ((1, 0, 0),), (0.1,), tau=0.0)


def test_mms_source_consistency():
    # Triangle check: the closed-form source minus the same equation
    # assembled from lattice operators and a central time difference must
    # equal the declared consistency defect, up to O(delta^2) in time.
    grid = GridSpec(12, 12, 12, 1 / 12, 1 / 12, 1 / 12)
    params = PhysParams(epsilon=1.0, eta=0.4)
    prob = verify.MMSProblem(grid, params, ((1, 1, 0), (2, 0, 1)),
                             (0.3, 0.2), tau=1.7)
    t = 0.35

    def discrete_residual(delta):
        dudt = (prob.exact(t + delta) - prob.exact(t - delta)) / (2 * delta)
        u = prob.exact(t)
        spatial = (u**3 + (1.0 - params.eta) * u
                   + params.epsilon * calculus.bilaplacian(u, grid)
                   + 2.0 * calculus.laplacian(u, grid))
        return dudt + spatial - prob.source(t)

    gamma = prob.gamma_defect(t)
    gaps = []
    for delta in (1e-3, 5e-4):
        gaps.append(np.max(np.abs(discrete_residual(delta) - gamma)))
    assert gaps[0] <= 1e-5
    # time-difference error is the only gap left and it is second order
    assert gaps[1] <= 0.3 * gaps[0]


def test_gamma_defect_second_order():
    params = PhysParams(epsilon=1.0, eta=0.5)
    norms = []
    for n in (8, 16):
        grid = GridSpec(n, n, n, 1 / n, 1 / n, 1 / n)
        prob = verify.MMSProblem(grid, params, ((1, 1, 0),), (0.25,))
        norms.append(np.max(np.abs(prob.gamma_defect(0.0))))
    ratio = norms[0] / norms[1]
    assert 3.2 <= ratio <= 4.8


def test_integral_steps():
    assert verify._integral_steps(1.0, 0.25) == 4
    with pytest.raises(ValueError):
        verify._integral_steps(1.0, 0.3)


def test_temporal_convergence_machinery():
    # wide box keeps the stiff modes mild so the asymptotic window is coarse
    grid = GridSpec(6, 6, 6, 1.0, 1.0, 1.0)
    params = PhysParams(epsilon=1.0, eta=0.5)
    u0 = verify.lattice.cosine_field(grid, [(1, 0, 0), (1, 1, 1)], [0.2, 0.1])
    with pytest.raises(ValueError):
        verify.temporal_convergence(grid, params, u0, dts=(1e-2, 5e-3),
                                    ref_dt=1e-3, t_final=0.1)
    study = verify.temporal_convergence(grid, params, u0,
                                        dts=(2e-2, 1e-2),
                                        ref_dt=5e-4, t_final=0.1)
    assert study.dts[0] > study.dts[1]
    assert study.errors[0] > study.errors[1] > 0
    assert 0.7 <= study.slope <= 1.3
    assert study.orders == pytest.approx(
        [math.log(study.errors[0] / study.errors[1]) / math.log(2.0)])
