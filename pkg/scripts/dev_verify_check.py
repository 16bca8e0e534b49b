"""Scratch checks for the samplers and convergence studies.

Run: python3 scripts/dev_verify_check.py
"""

import time

from shsplit import lattice, verify
from shsplit.energy import PhysParams
from shsplit.lattice import GridSpec


def curvature():
    grid = GridSpec(4, 4, 4, 0.5, 0.5, 0.5)
    for eta in (0.3, 1.5):
        params = PhysParams(epsilon=1.0, eta=eta)
        suite = verify.convexity_suite(grid, params, m=1.2, pairs=32, seed=0)
        lip = suite["nu1_lipschitz"]
        assert lip.passed, f"truncated slope ratio {lip.max_ratio} > {lip.bound}"
        assert suite["nu1_monotone_min"] >= -1e-12
        assert suite["nu2"].passed(1e-10), suite["nu2"]
        assert suite["nu3"].passed(1e-10), suite["nu3"]
        print(f"  eta={eta}: lip ratio {lip.max_ratio:.4f} <= {lip.bound}, "
              f"nu2 slack {suite['nu2'].min_slack:.2e} defect {suite['nu2'].max_quad_defect:.2e}, "
              f"nu3 slack {suite['nu3'].min_slack:.2e}")
    bad = verify.raw_cubic_lipschitz(grid, 1.2, pairs=32, seed=0)
    assert not bad.passed, "raw cubic slipped past the sampler"
    print(f"  raw cubic caught: ratio {bad.max_ratio:.3f} > {bad.bound}")
    diss = verify.dissipation_negative_control()
    assert not diss.ok, "dishonest constants slipped past the decrement check"
    print(f"  dishonest decrement caught: slack {diss.slack:.4f}")


def temporal():
    t0 = time.time()
    grid = GridSpec(16, 16, 16, 1.0, 1.0, 1.0)
    params = PhysParams(epsilon=1.0, eta=0.5)
    u0 = lattice.cosine_field(grid, [(1, 0, 0), (0, 1, 1), (2, 1, 0)], [0.2, 0.15, 0.1])
    study = verify.temporal_convergence(
        grid, params, u0,
        dts=(1e-2, 5e-3, 2.5e-3), ref_dt=1e-4, t_final=0.5,
    )
    print(f"  errors {[f'{e:.3e}' for e in study.errors]}")
    print(f"  orders {[f'{p:.3f}' for p in study.orders]} slope {study.slope:.3f} "
          f"({time.time()-t0:.1f}s)")


def spatial():
    t0 = time.time()
    params = PhysParams(epsilon=1.0, eta=0.5)
    study = verify.spatial_convergence(params, ns=(8, 16, 32))
    for lv in study.levels:
        print(f"  n={lv.n}: err_l2 {lv.error_l2:.3e} err_inf {lv.error_linf:.3e} "
              f"gamma {lv.gamma_linf:.3e}")
    print(f"  orders_l2 {[f'{p:.3f}' for p in study.orders_l2]} "
          f"orders_inf {[f'{p:.3f}' for p in study.orders_linf]} "
          f"gamma ratios {[f'{r:.3f}' for r in study.gamma_ratios]} "
          f"({time.time()-t0:.1f}s)")


if __name__ == "__main__":
    print("curvature"); curvature()
    print("temporal"); temporal()
    print("spatial"); spatial()
    print("all verify checks passed")
