"""Acceptance gate: ten certified properties, one test each.

Run with -v for one pass/fail line per criterion; add -s to see the
measured margins.  Every tolerance is pinned here, not imported, so a
regression in any module trips exactly the criterion that owns it.
"""

import math
import time

import numpy as np
import pytest
import scipy.linalg

from shsplit import calculus, energy, lattice, linsolve, splitting, verify
from shsplit.energy import PhysParams
from shsplit.lattice import GridSpec, quad_weights
from shsplit.scheme import SHScheme
from shsplit.verify import DenseOracle


def report(line: str) -> None:
    print(f"\n{line}")


# --- shared march for criteria 5 and 6 -------------------------------------

MARCH_GRID = GridSpec(32, 32, 32, 1.0, 1.0, 1.0)
MARCH_PARAMS = PhysParams(epsilon=1.0, eta=0.5)
MARCH_STEPS = 200


@pytest.fixture(scope="module")
def march32():
    u0 = lattice.filtered_noise(MARCH_GRID, 0.5, seed=0)
    sch = SHScheme(MARCH_GRID, MARCH_PARAMS, u0)
    t0 = time.perf_counter()
    dt = min(sch.dt_limit, 0.01)
    log = sch.run(dt, MARCH_STEPS)
    elapsed = time.perf_counter() - t0
    return sch, log, elapsed


def test_criterion_01_discrete_identities():
    t0 = time.perf_counter()
    worst = 0.0
    budget = [334, 333, 333]
    grids = [GridSpec(3, 3, 3, 0.7, 0.7, 0.7),
             GridSpec(4, 5, 6, 0.5, 0.4, 0.3),
             GridSpec(8, 8, 8, 1.0, 1.0, 1.0)]
    for grid, n in zip(grids, budget):
        rep = verify.identity_suite(grid, n_fields=n, seed=11)
        assert rep.passed(1e-12), (grid, rep.worst)
        worst = max(worst, rep.max_defect)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    report(f"criterion 01 PASS: 1000 fields, max relative defect {worst:.3e},"
           f" {elapsed:.1f}s")


def test_criterion_02_oracle_equivalence():
    grid = GridSpec(3, 4, 5, 0.3, 0.45, 0.5)
    worst = verify.oracle_equivalence(grid, n_fields=4, seed=3)
    assert worst <= 1e-13

    # implicit operator against the dense assembly
    oracle = DenseOracle(grid)
    dt = 2.5e-3
    eps = 1.5
    sch = SHScheme(grid, PhysParams(epsilon=eps, eta=0.5),
                   lattice.filtered_noise(grid, 0.3, seed=0))
    dense = sch._a0(dt) * np.eye(grid.node_count) + eps * oracle.bilaplacian_matrix()
    apply_a = sch.implicit_operator(dt)
    gap = 0.0
    for f in verify.random_fields(grid, 4, seed=5):
        direct = apply_a(f.values)
        via_dense = oracle.unflatten(dense @ oracle.flatten(f.values))
        # the 1/dt diagonal puts outputs at ~4e2, so normalize by magnitude
        scale = 1.0 + float(np.max(np.abs(via_dense)))
        gap = max(gap, float(np.max(np.abs(direct - via_dense))) / scale)
    assert gap <= 1e-13

    # weighted self-adjointness and positive semidefiniteness of lap_d^2
    w3 = quad_weights(grid).w3
    probe = linsolve.spd_probe(lambda v: calculus.bilaplacian(v, grid),
                               grid.shape, w3, trials=100, seed=7)
    assert probe.passed, (probe.worst_asymmetry, probe.worst_negativity)
    report(f"criterion 02 PASS: oracle gap {worst:.3e}, implicit gap {gap:.3e},"
           f" spd asym {probe.worst_asymmetry:.3e}")


def test_criterion_03_gradient_consistency():
    grid = GridSpec(5, 4, 6, 0.5, 0.6, 0.4)
    params = PhysParams(epsilon=1.3, eta=0.4)
    w = quad_weights(grid)
    m = 1.1
    u = lattice.filtered_noise(grid, 0.7, seed=21).values
    step = 1e-5

    def phis(v):
        parts = energy.energy_parts(v, grid, params, m_trunc=m)
        return [parts.phi1, parts.phi2, parts.phi3, parts.phi4, parts.phi1_trunc]

    g = energy.grad_energy_parts(u, grid, params)
    grads = [g.g1, g.g2, g.g3, g.g4, energy.psi_trunc(u, m)[1]]

    rng = np.random.default_rng(33)
    worst = 0.0
    for _ in range(20):
        d = rng.standard_normal(grid.shape)
        fwd = phis(u + step * d)
        bwd = phis(u - step * d)
        for idx in range(5):
            fd = (fwd[idx] - bwd[idx]) / (2.0 * step)
            exact = lattice.inner(w, grads[idx], d)
            worst = max(worst, abs(fd - exact) / (1.0 + abs(exact)))
    assert worst <= 1e-6
    report(f"criterion 03 PASS: 20 directions x 5 functionals,"
           f" worst relative gap {worst:.3e}")


def test_criterion_04_curvature_constants():
    grid = GridSpec(4, 4, 4, 0.5, 0.5, 0.5)
    m = 1.3
    lip = verify.truncated_cubic_lipschitz(grid, m, pairs=10_000, seed=0)
    assert lip.max_ratio <= lip.bound * (1.0 + 1e-10)
    assert lip.bound == pytest.approx(3.0 * m * m)

    for eta in (0.5, 1.75):
        out = verify.convexity_suite(grid, PhysParams(1.0, eta), m,
                                     pairs=64, seed=1)
        assert out["nu1_monotone_min"] >= 0.0
        assert out["nu2"].passed(1e-10), out["nu2"]
        assert out["nu3"].passed(1e-10), out["nu3"]
        assert out["nu2"].modulus == pytest.approx(abs(1.0 - eta) if eta < 1 else 0.0)

    control = verify.raw_cubic_lipschitz(grid, m, pairs=10_000, seed=0)
    assert not control.passed
    report(f"criterion 04 PASS: ratio {lip.max_ratio:.6f} <= {lip.bound:.6f},"
           f" control ratio {control.max_ratio:.2f} rejected")


def test_criterion_05_dissipation_boundedness(march32):
    sch, log, elapsed = march32
    assert len(log.rows) == MARCH_STEPS + 1
    hs = log.column("h")
    for a, b in zip(hs, hs[1:]):
        assert b <= a + 1e-10 * (1.0 + abs(a))
    linfs = log.column("linf")
    assert max(linfs) <= sch.sup_bound
    l, mu2, mu3 = sch.effective_moduli()
    assert l == pytest.approx(3.0 * sch.m_trunc**2)
    assert mu2 + mu3 == pytest.approx(abs(1.0 - MARCH_PARAMS.eta))
    min_slack = min(r.dissipation_slack for r in log.rows[1:])
    assert min_slack >= -1e-10 * (1.0 + abs(hs[0]))
    assert elapsed < 300.0
    report(f"criterion 05 PASS: H {hs[0]:.4f} -> {hs[-1]:.4f}, "
           f"min decrement slack {min_slack:.3e}, "
           f"linf <= {sch.sup_bound:.1f}, {elapsed:.1f}s")


def test_criterion_06_solvability(march32):
    _, log, _ = march32
    worst = max(r.cg_residual for r in log.rows[1:])
    assert worst <= 1e-10

    grid = GridSpec(3, 3, 3, 0.6, 0.6, 0.6)
    eps, dt = 1.2, 5e-3
    sch = SHScheme(grid, PhysParams(epsilon=eps, eta=0.5),
                   lattice.filtered_noise(grid, 0.4, seed=2))
    oracle = DenseOracle(grid)
    a_dense = sch._a0(dt) * np.eye(grid.node_count) + eps * oracle.bilaplacian_matrix()
    w_diag = np.diag(oracle.mass_matrix())
    rhs = sch._rhs(sch.u0.values, dt)
    wa = w_diag[:, None] * a_dense
    factor = scipy.linalg.cho_factor(0.5 * (wa + wa.T))
    x_dense = scipy.linalg.cho_solve(factor, w_diag * oracle.flatten(rhs))
    x_cg = oracle.flatten(sch._solve(rhs, dt).x)
    gap = float(np.max(np.abs(x_cg - x_dense)) / (1.0 + np.max(np.abs(x_dense))))
    assert gap <= 1e-9
    report(f"criterion 06 PASS: max march residual {worst:.3e},"
           f" CG vs Cholesky gap {gap:.3e}")


def test_criterion_07_temporal_order():
    t0 = time.perf_counter()
    grid = GridSpec(16, 16, 16, 1.0, 1.0, 1.0)
    params = PhysParams(epsilon=1.0, eta=0.5)
    u0 = lattice.cosine_field(grid, [(1, 0, 0), (0, 1, 1), (2, 1, 0)],
                              [0.2, 0.15, 0.1])
    study = verify.temporal_convergence(
        grid, params, u0, dts=(1e-2, 5e-3, 2.5e-3), ref_dt=1e-4, t_final=0.5)
    elapsed = time.perf_counter() - t0
    for order in study.orders:
        assert 0.85 <= order <= 1.15, study
    assert 0.85 <= study.slope <= 1.15
    assert elapsed < 600.0
    report(f"criterion 07 PASS: orders {[f'{o:.3f}' for o in study.orders]},"
           f" slope {study.slope:.3f}, {elapsed:.1f}s")


def test_criterion_08_spatial_order():
    t0 = time.perf_counter()
    study = verify.spatial_convergence(
        PhysParams(epsilon=1.0, eta=0.5), box=(1.0, 1.0, 1.0), ns=(8, 16, 32),
        modes=((1, 1, 0), (2, 0, 1)), amplitudes=(0.25, 0.15), tau=2.0,
        dt=1e-5, t_final=1e-3)
    elapsed = time.perf_counter() - t0
    for order in study.orders_l2:
        assert 1.8 <= order <= 2.2, study
    for order in study.orders_linf:
        assert 1.8 <= order <= 2.2, study
    for ratio in study.gamma_ratios:
        assert 3.2 <= ratio <= 4.8, study
    assert elapsed < 900.0
    report(f"criterion 08 PASS: l2 orders {[f'{o:.3f}' for o in study.orders_l2]},"
           f" defect ratios {[f'{r:.2f}' for r in study.gamma_ratios]},"
           f" {elapsed:.1f}s")


def test_criterion_09_adaptive_asymptotics():
    grid = GridSpec(8, 8, 8, 1 / 8, 1 / 8, 1 / 8)
    params = PhysParams(epsilon=2.0, eta=0.25)
    assert 1.0 - params.eta - 1.0 / params.epsilon >= 0.0
    u0 = lattice.cosine_field(grid, [(1, 0, 0), (1, 1, 1)], [0.04, 0.02])
    sch = SHScheme(grid, params, u0)
    dt_lo, dt_hi = 1e-4, 0.9 * sch.dt_limit
    log = sch.adaptive_run(dt_lo, dt_hi, max_steps=100_000, residual_tol=1e-8)
    assert log.stopped_on == "residual"
    assert log.final.fp_residual <= 1e-8
    assert log.final.n < 100_000
    linfs = log.column("linf")
    for a, b in zip(linfs[10:], linfs[11:]):
        assert b <= a * (1.0 + 1e-12)
    for r in log.rows[1:]:
        assert dt_lo - 1e-15 <= r.dt <= dt_hi * (1.0 + 1e-12)
    report(f"criterion 09 PASS: residual {log.final.fp_residual:.3e}"
           f" after {log.final.n} steps, dt in [{dt_lo:.1e}, {dt_hi:.3e}]")


def test_criterion_10_constant_evaluators():
    rng = np.random.default_rng(99)
    worst_spec = 0.0
    for _ in range(100):
        lip = float(10.0 ** rng.uniform(-2, 3))
        mu2 = float(rng.uniform(0, 0.4) * lip)
        mu3 = float(rng.uniform(0, 0.4) * lip)
        consts = splitting.error_prefactor(lip, mu2, mu3)
        l_hat = lip - mu2 - mu3
        worst_spec = max(
            worst_spec,
            abs(consts.dt_max - 1.0 / (3.0 * l_hat)) / consts.dt_max,
            abs(consts.prefactor - 1.0 / math.sqrt(l_hat**2 + 4.0 * lip**2))
            / consts.prefactor)
    assert worst_spec <= 1e-14

    worst_omega = 0.0
    for _ in range(100):
        params = PhysParams(epsilon=float(10.0 ** rng.uniform(-1, 1)),
                            eta=float(rng.uniform(-1.0, 3.0)))
        zeta = energy.zeta_threshold(params) + float(10.0 ** rng.uniform(-3, 1))
        co = energy.c_eps_eta_zeta(params, zeta)
        e1 = 0.5 * (zeta + 1.0 - params.eta - 1.0 / co.omega)
        e2 = 0.5 * (params.epsilon - co.omega)
        e3 = 1.5 * co.c
        # near-threshold zeta makes e1 a cancellation of ~|zeta|-sized
        # summands, so measure against their magnitude, not the result's
        scale = 1.0 + abs(zeta) + abs(params.eta) + 1.0 / co.omega
        worst_omega = max(worst_omega, abs(e1 - e3) / scale, abs(e2 - e3) / scale)
    assert worst_omega <= 1e-14
    report(f"criterion 10 PASS: specialization gap {worst_spec:.3e},"
           f" omega identity gap {worst_omega:.3e}")
