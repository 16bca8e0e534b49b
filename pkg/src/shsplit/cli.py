"""Command line driver.

Subcommands: run (march a configured problem), constants (print the
certified bounds for a configuration), verify (self-checks), and
convergence (temporal or spatial order studies).  Exit codes: 0 success,
1 configuration or argument problem, 2 a certified property failed
(monitor, solver, or verification), 3 I/O trouble.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

from . import config as cfgmod
from . import lattice, storage, verify
from .energy import PhysParams, c_eps_eta_zeta, zeta_default, zeta_threshold
from .lattice import Field, GridSpec
from .linsolve import LinearSolveError
from .scheme import MonitorError, SHScheme
from .splitting import error_prefactor

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VIOLATION = 2
EXIT_IO = 3


def _add_common(p: argparse.ArgumentParser, output_dir: bool = False):
    p.add_argument("--config", metavar="PATH", help="key=value config file")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override one config entry (repeatable)")
    p.add_argument("--quiet", action="store_true", help="suppress progress chatter")
    p.add_argument("--json", action="store_true", help="emit a JSON summary on stdout")
    if output_dir:
        p.add_argument("--output-dir", metavar="DIR", default="out")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shsplit")
    sub = ap.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="march a configured problem")
    _add_common(runp, output_dir=True)

    consts = sub.add_parser("constants", help="print the certified constants")
    _add_common(consts)

    ver = sub.add_parser("verify", help="run the self-check battery")
    _add_common(ver)
    ver.add_argument("--level", choices=("quick", "full"), default="quick")
    ver.add_argument("--seed", type=int, default=0)

    conv = sub.add_parser("convergence", help="order studies")
    _add_common(conv, output_dir=True)
    conv.add_argument("--kind", choices=("temporal", "spatial"), required=True)
    conv.add_argument("--check", action="store_true",
                      help="exit 2 unless observed orders sit in the expected windows")
    conv.add_argument("--dts", default="1e-2,5e-3,2.5e-3",
                      help="temporal ladder, comma separated")
    conv.add_argument("--ref-dt", type=float, default=1e-4)
    conv.add_argument("--t-final", type=float, default=None)
    conv.add_argument("--ns", default="8,16,32", help="spatial levels, comma separated")
    conv.add_argument("--dt", type=float, default=1e-5, help="spatial study step")
    conv.add_argument("--box", default="1,1,1", help="spatial study box lengths")
    return ap


def _scheme_from(cfg) -> tuple[SHScheme, dict]:
    grid = cfgmod.grid_from(cfg)
    params = cfgmod.params_from(cfg)
    u0 = cfgmod.initial_field(cfg, grid)
    scheme = SHScheme(
        grid, params, u0,
        zeta=cfgmod.zeta_from(cfg),
        c_grid=cfgmod.c_grid_from(cfg),
        sobolev_mode=cfg["bound.sobolev_mode"],
        dense_limit=cfg["bound.dense_limit"],
        cg_config=cfgmod.cg_config_from(cfg),
    )
    return scheme, cfg


def cmd_run(args) -> int:
    cfg = cfgmod.load_config(args.config, tuple(args.set))
    scheme, _ = _scheme_from(cfg)

    os.makedirs(args.output_dir, exist_ok=True)
    cadence = cfg["output.snapshot_every"]
    on_state = None
    if cadence > 0 and cfg["output.snapshot"]:
        def on_state(n, t, field):
            path = os.path.join(args.output_dir, f"state_{n:06d}.snap")
            storage.write_snapshot(path, field, scheme.params, t)
            if cfg["output.vtk"]:
                storage.write_vtk(
                    os.path.join(args.output_dir, f"state_{n:06d}.vtk"), field)

    t0 = time.time()
    if cfg["run.mode"] == "fixed":
        log = scheme.run(cfg["run.dt"], cfg["run.steps"],
                         monitors=cfg["run.monitors"], log_every=cfg["run.log_every"],
                         on_state=on_state, on_state_every=max(cadence, 1))
    else:
        dt_hi = cfg["adaptive.dt_hi"] or 0.9 * scheme.dt_limit
        target = cfg["adaptive.target_decrement"] or None
        log = scheme.adaptive_run(
            cfg["adaptive.dt_lo"], dt_hi,
            max_steps=cfg["adaptive.max_steps"],
            residual_tol=cfg["adaptive.residual_tol"],
            target_decrement=target,
            growth_cap=cfg["adaptive.growth_cap"],
            log_every=cfg["run.log_every"],
            on_state=on_state, on_state_every=max(cadence, 1),
        )
    elapsed = time.time() - t0
    paths = {}
    if cfg["output.csv"]:
        paths["csv"] = os.path.join(args.output_dir, "run.csv")
        storage.write_run_csv(paths["csv"], log)
    if cfg["output.snapshot"]:
        paths["snapshot"] = os.path.join(args.output_dir, "final.snap")
        storage.write_snapshot(paths["snapshot"], log.final_state, scheme.params,
                               log.final.t)
    if cfg["output.vtk"]:
        paths["vtk"] = os.path.join(args.output_dir, "final.vtk")
        storage.write_vtk(paths["vtk"], log.final_state)
    with open(os.path.join(args.output_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# digest sha256:{cfgmod.digest(cfg)}\n")
        fh.write(cfgmod.dump(cfg))

    final = log.final
    summary = {
        "steps": final.n,
        "t_final": final.t,
        "h_initial": log.rows[0].h,
        "h_final": final.h,
        "linf_final": final.linf,
        "fp_residual": final.fp_residual,
        "stopped_on": log.stopped_on,
        "elapsed_s": round(elapsed, 3),
        "outputs": paths,
        "config_digest": cfgmod.digest(cfg),
    }
    if log.bounds is not None:
        summary["dt_limit"] = log.bounds.dt_limit
        summary["sup_bound"] = log.bounds.sup_bound
    if args.json:
        print(json.dumps(summary, indent=2))
    elif not args.quiet:
        print(f"{final.n} steps to t = {final.t:.6g} ({log.stopped_on}), "
              f"H {log.rows[0].h:.6g} -> {final.h:.6g}, "
              f"|U|_inf {final.linf:.6g}, grad residual {final.fp_residual:.3e} "
              f"[{elapsed:.1f}s]")
        for kind, path in paths.items():
            print(f"  {kind}: {path}")
    return EXIT_OK


def cmd_constants(args) -> int:
    cfg = cfgmod.load_config(args.config, tuple(args.set))
    scheme, _ = _scheme_from(cfg)
    b = scheme.bounds
    params = scheme.params
    co = c_eps_eta_zeta(params, b.zeta)
    l, mu2, mu3 = scheme.effective_moduli()
    consts = error_prefactor(l, mu2, mu3, horizon=1.0)
    out = {
        "epsilon": params.epsilon,
        "eta": params.eta,
        "zeta": b.zeta,
        "zeta_threshold": zeta_threshold(params),
        "coercivity_c": co.c,
        "omega": co.omega,
        "sobolev_c_grid": b.c_grid,
        "energy_h0": b.h0,
        "volume": b.volume,
        "sup_bound": b.sup_bound,
        "m_trunc": b.m_trunc,
        "lipschitz": l,
        "mu2": mu2,
        "mu3": mu3,
        "dt_limit": b.dt_limit,
        "error_dt_max": consts.dt_max,
        "error_prefactor": consts.prefactor,
        "error_rate": consts.rate,
    }
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        width = max(len(k) for k in out)
        for k, v in out.items():
            print(f"{k:<{width}}  {v}")
    return EXIT_OK


def _check_line(results: list, quiet: bool, label: str, ok: bool, detail: str):
    results.append((label, ok))
    if not quiet or not ok:
        print(f"{'PASS' if ok else 'FAIL'}  {label:<28s} {detail}")


def cmd_verify(args) -> int:
    cfg = cfgmod.load_config(args.config, tuple(args.set))
    params = cfgmod.params_from(cfg)
    seed = args.seed
    full = args.level == "full"
    results: list[tuple[str, bool]] = []

    def check(label, ok, detail=""):
        _check_line(results, args.quiet, label, ok, detail)

    grids = [GridSpec(3, 4, 5, 0.7, 0.5, 0.4), GridSpec(8, 8, 8, 1.0, 1.0, 1.0)]
    if full:
        grids.append(GridSpec(2, 2, 2, 1.0, 0.5, 2.0))

    n_fields = 40 if full else 8
    for grid in grids:
        rep = verify.identity_suite(grid, n_fields=n_fields, seed=seed)
        check(f"identities {grid.nx}x{grid.ny}x{grid.nz}", rep.passed(1e-12),
              f"max defect {rep.max_defect:.2e}")

    for grid in grids[: 2 if full else 1]:
        d = verify.oracle_equivalence(grid, n_fields=3, seed=seed)
        check(f"oracle {grid.nx}x{grid.ny}x{grid.nz}", d <= 1e-13, f"defect {d:.2e}")

    grid = GridSpec(8, 8, 8, 1.0, 1.0, 1.0)
    u0 = lattice.filtered_noise(grid, 0.4, seed)
    scheme = SHScheme(grid, params, u0)
    from .linsolve import spd_probe

    rep = spd_probe(scheme.implicit_operator(1e-3), grid.shape,
                    scheme.weights.w3, trials=100 if full else 25, seed=seed)
    check("implicit operator SPD", rep.passed,
          f"asym {rep.worst_asymmetry:.2e} neg {rep.worst_negativity:.2e}")

    small = GridSpec(4, 4, 4, 0.5, 0.5, 0.5)
    suite = verify.convexity_suite(small, params, m=scheme.m_trunc,
                                   pairs=96 if full else 24, seed=seed)
    lip = suite["nu1_lipschitz"]
    check("truncated slope Lipschitz", lip.passed,
          f"ratio {lip.max_ratio:.4g} bound {lip.bound:.4g}")
    check("truncated slope monotone", suite["nu1_monotone_min"] >= -1e-12,
          f"min {suite['nu1_monotone_min']:.2e}")
    check("implicit piece convexity", suite["nu2"].passed(1e-10),
          f"slack {suite['nu2'].min_slack:.2e} defect {suite['nu2'].max_quad_defect:.2e}")
    check("explicit piece convexity", suite["nu3"].passed(1e-10),
          f"slack {suite['nu3'].min_slack:.2e} defect {suite['nu3'].max_quad_defect:.2e}")

    bad = verify.raw_cubic_lipschitz(small, scheme.m_trunc, pairs=24, seed=seed)
    check("negative control: raw cubic", not bad.passed,
          f"ratio {bad.max_ratio:.4g} caught")
    diss = verify.dissipation_negative_control()
    check("negative control: decrement", not diss.ok, f"slack {diss.slack:.3g} caught")
    refl = verify.broken_reflection_control(trials=50 if full else 25, seed=seed)
    check("negative control: reflection", not refl.passed,
          f"asym {refl.worst_asymmetry:.2e} caught")

    if full:
        from .energy import sobolev_constant

        g6 = GridSpec(5, 5, 5, 0.3, 0.3, 0.3)
        dense = sobolev_constant(g6, mode="dense")
        probe = sobolev_constant(g6, mode="probe")
        gap = abs(dense.c - probe.c) / dense.c
        check("sobolev dense vs probe", gap <= 1e-8,
              f"C {dense.c:.8g} vs {probe.c:.8g}")

        tgrid = GridSpec(8, 8, 8, 1.0, 1.0, 1.0)
        tu0 = lattice.cosine_field(tgrid, [(1, 0, 0), (0, 1, 1)], [0.2, 0.1])
        tstudy = verify.temporal_convergence(
            tgrid, params, tu0, dts=(1e-2, 5e-3), ref_dt=2.5e-4, t_final=0.2)
        ok = all(abs(p - 1.0) <= 0.15 for p in tstudy.orders)
        check("temporal order", ok, f"orders {[f'{p:.3f}' for p in tstudy.orders]}")

        sstudy = verify.spatial_convergence(params, ns=(8, 16), dt=2e-5, t_final=4e-4)
        ok = all(abs(p - 2.0) <= 0.2 for p in sstudy.orders_l2) and all(
            3.2 <= r <= 4.8 for r in sstudy.gamma_ratios)
        check("spatial order", ok,
              f"orders {[f'{p:.3f}' for p in sstudy.orders_l2]} "
              f"gamma {[f'{r:.3f}' for r in sstudy.gamma_ratios]}")

    failed = [label for label, ok in results if not ok]
    if args.json:
        print(json.dumps({"level": args.level,
                          "checks": {label: ok for label, ok in results},
                          "failed": failed}, indent=2))
    elif not args.quiet:
        print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_VIOLATION


def cmd_convergence(args) -> int:
    cfg = cfgmod.load_config(args.config, tuple(args.set))
    params = cfgmod.params_from(cfg)
    os.makedirs(args.output_dir, exist_ok=True)
    violations = []

    if args.kind == "temporal":
        grid = cfgmod.grid_from(cfg)
        u0 = cfgmod.initial_field(cfg, grid)
        dts = tuple(float(s) for s in args.dts.split(","))
        t_final = args.t_final if args.t_final is not None else 0.5
        study = verify.temporal_convergence(
            grid, params, u0, dts=dts, ref_dt=args.ref_dt, t_final=t_final,
            cg_config=cfgmod.cg_config_from(cfg))
        path = os.path.join(args.output_dir, "temporal.csv")
        rows = []
        for i, (dt, err) in enumerate(zip(study.dts, study.errors)):
            rows.append((dt, err, study.orders[i - 1] if i > 0 else ""))
        storage.write_csv(path, ("dt", "error", "order"), rows)
        summary = {"kind": "temporal", "dts": study.dts, "errors": study.errors,
                   "orders": study.orders, "slope": study.slope, "csv": path}
        violations = [p for p in study.orders if abs(p - 1.0) > 0.15]
    else:
        ns = tuple(int(s) for s in args.ns.split(","))
        box = tuple(float(s) for s in args.box.split(","))
        t_final = args.t_final if args.t_final is not None else 1e-3
        study = verify.spatial_convergence(
            params, box=box, ns=ns, dt=args.dt, t_final=t_final,
            cg_config=cfgmod.cg_config_from(cfg))
        path = os.path.join(args.output_dir, "spatial.csv")
        rows = []
        for i, lv in enumerate(study.levels):
            rows.append((lv.n, lv.h, lv.error_l2, lv.error_linf, lv.gamma_linf,
                         study.orders_l2[i - 1] if i > 0 else "",
                         study.orders_linf[i - 1] if i > 0 else "",
                         study.gamma_ratios[i - 1] if i > 0 else ""))
        storage.write_csv(
            path,
            ("n", "h", "error_l2", "error_linf", "gamma_linf",
             "order_l2", "order_linf", "gamma_ratio"),
            rows)
        summary = {"kind": "spatial",
                   "levels": [lv.__dict__ for lv in study.levels],
                   "orders_l2": study.orders_l2, "orders_linf": study.orders_linf,
                   "gamma_ratios": study.gamma_ratios, "csv": path}
        violations = [p for p in study.orders_l2 if abs(p - 2.0) > 0.2]
        violations += [r for r in study.gamma_ratios if not 3.2 <= r <= 4.8]

    if args.json:
        print(json.dumps(summary, indent=2, default=list))
    elif not args.quiet:
        if args.kind == "temporal":
            print(f"errors {[f'{e:.4e}' for e in study.errors]}")
            print(f"orders {[f'{p:.3f}' for p in study.orders]} (slope {study.slope:.3f})")
        else:
            for lv in study.levels:
                print(f"n={lv.n:<3d} err_l2 {lv.error_l2:.4e} gamma {lv.gamma_linf:.4e}")
            print(f"orders_l2 {[f'{p:.3f}' for p in study.orders_l2]} "
                  f"gamma ratios {[f'{r:.3f}' for r in study.gamma_ratios]}")
        print(f"wrote {path}")
    if args.check and violations:
        if not args.quiet:
            print(f"order windows violated: {violations}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "run": cmd_run,
        "constants": cmd_constants,
        "verify": cmd_verify,
        "convergence": cmd_convergence,
    }[args.command]
    try:
        return handler(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"invalid request: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MonitorError as exc:
        print(f"monitor violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except LinearSolveError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
