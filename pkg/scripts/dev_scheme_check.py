"""Scratch checks for the scheme layer.

Run: python3 scripts/dev_scheme_check.py
"""

import math

import numpy as np

from shsplit import energy, lattice, scheme, splitting
from shsplit.energy import PhysParams
from shsplit.lattice import Field, GridSpec


def monotone_run():
    grid = GridSpec(8, 8, 8, 1.0, 1.0, 1.0)
    params = PhysParams(epsilon=1.0, eta=0.5)
    u0 = lattice.filtered_noise(grid, 0.4, seed=3)
    sch = scheme.SHScheme(grid, params, u0)
    print(f"  bounds: M={sch.m_trunc:.4g} sup={sch.sup_bound:.4g} "
          f"dt_limit={sch.dt_limit:.4g} C={sch.bounds.c_grid:.4g}")
    dt = min(sch.dt_limit, 1e-3)
    log = sch.run(dt, 50)
    hs = log.column("h")
    drops = np.diff(hs)
    assert np.all(drops <= 1e-10 * (1.0 + np.abs(hs[:-1]))), "energy rose"
    assert all(r.dissipation_slack >= -1e-10 * (1 + abs(r.h)) for r in log.rows[1:])
    assert all(r.supbound_slack >= 0 for r in log.rows)
    assert all(r.cg_residual <= 1e-10 for r in log.rows[1:])
    print(f"  H: {hs[0]:.6f} -> {hs[-1]:.6f} over {len(hs)-1} rows, "
          f"max cg iters {max(log.column('cg_iters'))}")


def branch_agreement_at_eta_one():
    grid = GridSpec(4, 5, 6, 0.5, 0.4, 0.3)
    u0 = lattice.filtered_noise(grid, 0.3, seed=7)
    # eta = 1 collapses both right-hand sides to the same expression
    params = PhysParams(epsilon=0.8, eta=1.0)
    sch = scheme.SHScheme(grid, params, u0)
    assert not sch.linear_implicit
    rhs = sch._rhs(u0.values, 1e-3)
    # hand-built eta<1 form at eta=1: u/dt - u^3 - 2 lap u
    from shsplit import calculus
    rhs_other = u0.values / 1e-3 - u0.values**3 - 2.0 * calculus.laplacian(u0.values, grid)
    assert np.max(np.abs(rhs - rhs_other)) < 1e-9 * np.max(np.abs(rhs))
    print("  eta=1 right-hand sides agree across branches")


def dual_route_step():
    for eta in (0.3, 1.0, 1.7):
        grid = GridSpec(5, 4, 6, 0.5, 0.45, 0.35)
        params = PhysParams(epsilon=1.2, eta=eta)
        u0 = lattice.filtered_noise(grid, 0.3, seed=11)
        sch = scheme.SHScheme(grid, params, u0)
        dt = min(0.5 * sch.dt_limit, 1e-3)
        x_direct, rep_direct = sch.step(u0, dt)
        prob = sch.as_splitting_problem()
        x_gen, rep_gen = splitting.scc_step(prob, u0.values, dt)
        scale = 1.0 + np.max(np.abs(x_direct.values))
        gap = np.max(np.abs(x_direct.values - x_gen)) / scale
        assert gap < 1e-9, f"routes disagree at eta={eta}: {gap:.3e}"
        assert abs(rep_direct.guaranteed_decrement - rep_gen.guaranteed_decrement) \
            <= 1e-8 * (1 + abs(rep_direct.guaranteed_decrement))
        print(f"  eta={eta}: route gap {gap:.2e}, "
              f"decrement {rep_direct.guaranteed_decrement:.3e}")


def adaptive_march():
    grid = GridSpec(8, 8, 8, 1 / 8, 1 / 8, 1 / 8)
    params = PhysParams(epsilon=2.0, eta=0.25)
    u0 = lattice.cosine_field(grid, [(1, 0, 0), (1, 1, 1)], [0.04, 0.02])
    sch = scheme.SHScheme(grid, params, u0)
    print(f"  bounds: M={sch.m_trunc:.4g} dt_limit={sch.dt_limit:.4g}")
    log = sch.adaptive_run(1e-4, 0.9 * sch.dt_limit, max_steps=100000,
                           residual_tol=1e-8, log_every=1)
    linf = log.column("linf")
    assert all(b <= a for a, b in zip(linf[10:], linf[11:])), "sup norm not monotone"
    assert log.stopped_on == "residual"
    print(f"  converged in {log.final.n} steps, t={log.final.t:.3f}, "
          f"fp residual {log.final.fp_residual:.2e}, final dt {log.final.dt:.3g}")


def fp_residual_two_routes():
    grid = GridSpec(4, 4, 4, 0.5, 0.5, 0.5)
    params = PhysParams(epsilon=1.5, eta=0.4)
    u0 = lattice.filtered_noise(grid, 0.5, seed=5)
    sch = scheme.SHScheme(grid, params, u0)
    w = lattice.quad_weights(grid)
    g = energy.grad_energy_parts(u0.values, grid, params).total
    direct = math.sqrt(float(np.sum(w.w3 * g * g)))
    gap = abs(sch.fixed_point_residual(u0.values) - direct)
    assert gap <= 1e-12 * (1 + direct), gap
    print(f"  fixed-point residual routes agree: gap {gap:.2e}")


if __name__ == "__main__":
    print("monotone_run"); monotone_run()
    print("branch_agreement_at_eta_one"); branch_agreement_at_eta_one()
    print("dual_route_step"); dual_route_step()
    print("fp_residual_two_routes"); fp_residual_two_routes()
    print("adaptive_march"); adaptive_march()
    print("all scheme checks passed")
