import math

import numpy as np
import pytest

from shsplit import calculus, energy, lattice, splitting
from shsplit.energy import PhysParams
from shsplit.lattice import Field, GridSpec, quad_weights
from shsplit.linsolve import CGConfig, LinearSolveError
from shsplit.scheme import MonitorError, SHScheme


def small_scheme(eta=0.5, eps=1.0, n=6, h=0.5, amp=0.4, seed=3, **kw):
    grid = GridSpec(n, n, n, h, h, h)
    params = PhysParams(epsilon=eps, eta=eta)
    u0 = lattice.filtered_noise(grid, amp, seed=seed)
    return SHScheme(grid, params, u0, **kw)


def test_branch_selection():
    assert small_scheme(eta=0.5).linear_implicit
    assert not small_scheme(eta=1.0).linear_implicit
    assert not small_scheme(eta=1.5).linear_implicit


def test_branches_coincide_at_eta_one():
    # the eta >= 1 right-hand side at eta = 1 equals the eta < 1 form
    sch = small_scheme(eta=1.0)
    u = sch.u0.values
    dt = 1e-3
    rhs = sch._rhs(u, dt)
    by_hand = u / dt - u**3 - 2.0 * calculus.laplacian(u, sch.grid)
    np.testing.assert_allclose(rhs, by_hand, rtol=1e-13, atol=1e-13)
    assert sch._a0(dt) == pytest.approx(1.0 / dt)


def test_step_equals_generic_splitting_route():
    # hand-coded right-hand side vs the step assembled from energy gradients
    for eta in (0.3, 1.0, 1.7):
        sch = small_scheme(eta=eta, n=5, h=0.45, seed=11)
        dt = min(0.5 * sch.dt_limit, 1e-3)
        x_direct, rep_direct = sch.step(sch.u0, dt)
        x_generic, rep_generic = splitting.scc_step(
            sch.as_splitting_problem(), sch.u0.values, dt)
        scale = 1.0 + np.max(np.abs(x_direct.values))
        assert np.max(np.abs(x_direct.values - x_generic)) <= 1e-9 * scale
        assert rep_direct.guaranteed_decrement == pytest.approx(
            rep_generic.guaranteed_decrement, rel=1e-6, abs=1e-12)


def test_step_report_decrement_formula():
    sch = small_scheme()
    dt = min(0.5 * sch.dt_limit, 1e-3)
    _, rep = sch.step(sch.u0, dt)
    l, mu2, mu3 = sch.effective_moduli()
    expected = (1.0 / dt - (l - mu2 - mu3) / 2.0) * rep.increment_norm**2
    assert rep.guaranteed_decrement == pytest.approx(expected, rel=1e-12)
    assert rep.energy_after <= rep.energy_before
    assert rep.solver_residual <= 1e-10


def test_fixed_point_residual_matches_gradient_norm():
    sch = small_scheme(eta=0.4, eps=1.5)
    u = sch.u0.values
    g = energy.grad_energy_parts(u, sch.grid, sch.params).total
    w = quad_weights(sch.grid)
    direct = math.sqrt(lattice.inner(w, g, g))
    assert sch.fixed_point_residual(u) == pytest.approx(direct, rel=1e-12)


def test_monitored_run_dissipates():
    sch = small_scheme(n=6, h=1.0, amp=0.4)
    dt = min(sch.dt_limit, 1e-3)
    log = sch.run(dt, 30)
    hs = log.column("h")
    assert all(b <= a + 1e-10 * (1 + abs(a)) for a, b in zip(hs, hs[1:]))
    assert all(r.dissipation_slack >= -1e-10 * (1 + abs(r.h)) for r in log.rows[1:])
    assert all(r.supbound_slack >= 0.0 for r in log.rows)
    assert all(r.cg_residual <= 1e-10 for r in log.rows[1:])
    assert log.rows[0].n == 0 and log.final.n == 30
    assert log.final_state is not None
    assert log.stopped_on == "steps"


def test_run_log_thinning():
    sch = small_scheme(n=4)
    dt = min(sch.dt_limit, 1e-3)
    log = sch.run(dt, 10, log_every=4)
    assert [r.n for r in log.rows] == [0, 4, 8, 10]


def test_run_validations():
    sch = small_scheme(n=4)
    with pytest.raises(ValueError):
        sch.run(sch.dt_limit * 2.0, 5)  # beyond the certified step
    with pytest.raises(ValueError):
        sch.run(-1e-3, 5)
    with pytest.raises(ValueError):
        sch.run(1e-5, 0)
    with pytest.raises(ValueError):
        sch.run(1e-5, 5, forcing=lambda t: np.zeros(sch.grid.shape))  # monitors on
    # off-theory marches are allowed once monitors are off
    log = sch.run(sch.dt_limit * 2.0, 3, monitors=False)
    assert math.isnan(log.final.dissipation_slack) or log.final.dissipation_slack != 0


def test_monitor_triggers_on_sup_bound():
    sch = small_scheme(n=4, amp=0.3)
    big = Field(sch.grid, np.full(sch.grid.shape, 50.0 * sch.sup_bound))
    with pytest.raises(MonitorError):
        sch.run(min(sch.dt_limit, 1e-3), 2, u0=big)


def test_solver_failure_raises():
    cfg = CGConfig(rel_tol=1e-12, abs_tol=1e-300, max_iter=2)
    sch = small_scheme(n=6, h=0.2, eps=5.0, cg_config=cfg)
    with pytest.raises(LinearSolveError):
        sch.step(sch.u0, 1.0)


def test_adaptive_run_reaches_residual():
    grid = GridSpec(8, 8, 8, 1 / 8, 1 / 8, 1 / 8)
    params = PhysParams(epsilon=2.0, eta=0.25)
    u0 = lattice.cosine_field(grid, [(1, 0, 0), (1, 1, 1)], [0.04, 0.02])
    sch = SHScheme(grid, params, u0)
    log = sch.adaptive_run(1e-4, 0.9 * sch.dt_limit, max_steps=5000,
                           residual_tol=1e-7)
    assert log.stopped_on == "residual"
    assert log.final.fp_residual <= 1e-7
    dts = [r.dt for r in log.rows[1:]]
    assert all(1e-4 <= dt <= 0.9 * sch.dt_limit * (1 + 1e-12) for dt in dts)
    hs = log.column("h")
    assert all(b <= a + 1e-10 * (1 + abs(a)) for a, b in zip(hs, hs[1:]))


def test_adaptive_run_validations():
    sch = small_scheme(n=4)
    with pytest.raises(ValueError):
        sch.adaptive_run(1e-4, sch.dt_limit, max_steps=10, residual_tol=1e-8)
    with pytest.raises(ValueError):
        sch.adaptive_run(1e-2, 1e-4, max_steps=10, residual_tol=1e-8)
    with pytest.raises(ValueError):
        sch.adaptive_run(1e-4, min(1e-3, 0.5 * sch.dt_limit), max_steps=10,
                         residual_tol=1e-8, growth_cap=1.0)


def test_bounds_are_lazy_and_frozen():
    sch = small_scheme(n=4)
    assert sch._bounds is None  # nothing computed yet
    log = sch.run(1e-4, 2, monitors=False)
    assert sch._bounds is None  # unmonitored runs never touch the certificate
    assert math.isnan(log.final.supbound_slack)
    first = sch.bounds
    assert sch.bounds is first  # computed once, then frozen
