"""Development gate: dense-oracle equivalence and identity defects.

Run before trusting the stencil kernels.  Exits nonzero on any defect
above tolerance.
"""

import sys

import numpy as np

from shsplit import calculus, lattice, verify
from shsplit.lattice import GridSpec, quad_weights

TOL_ORACLE = 1e-13
TOL_IDENT = 1e-12

failures = []


def check(label, value, tol):
    status = "ok " if value <= tol else "FAIL"
    print(f"  {status} {label:34s} {value:9.3e} (tol {tol:.0e})")
    if value > tol:
        failures.append(label)


grids = [
    GridSpec(3, 3, 3, 0.7, 0.7, 0.7),
    GridSpec(4, 5, 6, 0.5, 0.31, 0.22),
    GridSpec(8, 8, 8, 1.0 / 8, 1.0 / 8, 1.0 / 8),
    GridSpec(2, 2, 2, 1.0, 0.5, 2.0),
]

for grid in grids:
    print(f"grid n=({grid.nx},{grid.ny},{grid.nz}) h=({grid.dx},{grid.dy},{grid.dz})")
    oracle = verify.DenseOracle(grid)
    w = quad_weights(grid)
    rng = np.random.default_rng(1234)
    u = rng.standard_normal(grid.shape)
    flat = u.ravel()

    # operator equivalence, matrix-free vs dense
    lap_mf = calculus.laplacian(u, grid).ravel()
    lap_dn = oracle.laplacian_matrix() @ flat
    check("laplacian", np.max(np.abs(lap_mf - lap_dn)) / max(np.max(np.abs(lap_dn)), 1), TOL_ORACLE)

    bil_mf = calculus.bilaplacian(u, grid).ravel()
    bil_dn = oracle.bilaplacian_matrix() @ flat
    check("bilaplacian", np.max(np.abs(bil_mf - bil_dn)) / max(np.max(np.abs(bil_dn)), 1), TOL_ORACLE)

    for a in range(3):
        for kind in (calculus.FORWARD, calculus.BACKWARD, calculus.CENTRAL, calculus.SECOND):
            mf = calculus.diff(u, grid, a, kind).ravel()
            dn = oracle.diff_matrix(a, kind) @ flat
            check(f"diff axis={a} {kind}", np.max(np.abs(mf - dn)) / max(np.max(np.abs(dn)), 1), TOL_ORACLE)

    ext = lattice.extend_array(u)
    for a in range(3):
        for b in range(3):
            for sa in (1, -1):
                for sb in (1, -1):
                    mf = calculus.second_diff_ext(ext, grid, a, sa, b, sb).ravel()
                    dn = oracle.mixed_matrix(a, sa, b, sb) @ flat
                    d = np.max(np.abs(mf - dn)) / max(np.max(np.abs(dn)), 1)
                    if d > TOL_ORACLE:
                        check(f"mixed a={a}{sa:+d} b={b}{sb:+d}", d, TOL_ORACLE)
    print("  ok  all mixed second differences")

    # quadratic forms: seminorm and laplacian-norm vs dense forms
    g_dense = oracle.seminorm_form()
    semi_mf = calculus.seminorm_d_squared(u, grid, w.w3)
    semi_dn = flat @ g_dense @ flat
    check("seminorm form", abs(semi_mf - semi_dn) / max(abs(semi_dn), 1), TOL_ORACLE)

    # Lemma 2.1 in matrix form: G == -W A_lap (exactly symmetric)
    wa = -oracle.mass_matrix() @ oracle.laplacian_matrix()
    check("G == -W*lap (SBP, matrix form)", np.max(np.abs(g_dense - wa)) / np.max(np.abs(g_dense)), TOL_ORACLE)
    check("W*lap symmetric", np.max(np.abs(wa - wa.T)) / np.max(np.abs(wa)), TOL_ORACLE)

    ln_dense = oracle.laplacian_norm_form()
    parts = calculus.laplacian_norm_identity(u, grid, w.w3)
    check("lap-norm form", abs(parts["lap_sq"] - flat @ ln_dense @ flat) / max(parts["lap_sq"], 1), TOL_ORACLE)
    dd_dense = oracle.dd_norm_form()
    check("dd-norm form", abs(parts["dd_sq"] - flat @ dd_dense @ flat) / max(parts["dd_sq"], 1), TOL_ORACLE)

    # identity suite
    rep = verify.identity_suite(grid, n_fields=40, seed=7)
    for k, v in rep.worst.items():
        check(f"identity {k}", v, TOL_IDENT)

    # eigencosine: sampled cosines are exact eigenvectors
    for modes in ((1, 0, 0), (2, 1, 0), (1, 1, 1)):
        f = lattice.cosine_field(grid, [modes], [0.8])
        lam = 0.0
        for a, m in enumerate(modes):
            h = grid.spacing[a]
            ln = (grid.lx, grid.ly, grid.lz)[a]
            lam += -(2.0 / h**2) * (1.0 - np.cos(m * np.pi * h / ln))
        lap = calculus.laplacian(f.values, grid)
        d = np.max(np.abs(lap - lam * f.values)) / max(abs(lam), 1)
        check(f"eigencosine {modes}", d, TOL_IDENT)
        bil = calculus.bilaplacian(f.values, grid)
        d2 = np.max(np.abs(bil - lam * lam * f.values)) / max(lam * lam, 1)
        check(f"eigencosine^2 {modes}", d2, 1e-11)

print()
if failures:
    print("FAILURES:", failures)
    sys.exit(1)
print("all foundation checks passed")
