"""Command-line entry point.

Each subcommand is a thin shell over a library call: parse arguments,
invoke, write structured JSON to ``--out`` and a short human summary to
stdout.  Exit codes: 0 success, 2 invalid usage, 1 runtime failure (with a
JSON error object on stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import basis as fb
from .dataset import FunctionalDataset, atomic_write_text, load_dataset, save_dataset
from .errors import KrigeBenchError
from .evaluation import (
    StudyConfig,
    evaluate_okfd_model,
    evaluate_spt_model,
    okfd_grid,
    report_to_csv,
    report_to_json,
    run_study,
)
from .kriging_functional import (
    Coregionalization,
    okfd_predict,
    okfd_weights,
    pwfk_assemble,
    pwfk_solve,
)
from .kriging_spt import SptKrigingSolver, constant_trend, sinusoid_trend
from .simulator import base_case, case_catalog, replace_size_trend, simulate_case
from .variogram import (
    FAMILIES,
    empirical_st_semivariogram,
    empirical_trace_semivariogram,
    fit_ols,
    fit_st_ols,
)


def _workers_default() -> int:
    env = os.environ.get("KRIGEBENCH_WORKERS")
    return int(env) if env else 1


def _write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fit_dataset_basis(ds: FunctionalDataset, kind: str, p: int):
    t_lo = min(t.min() for t in ds.times)
    t_hi = max(t.max() for t in ds.times)
    make = fb.make_fourier_basis if kind == "fourier" else fb.make_bspline_basis
    basis = make(p, (t_lo, t_hi))
    coefs = np.vstack(
        [fb.fit_coefficients(basis, ds.times[i], ds.values[i]) for i in range(ds.n_sites)]
    )
    return basis, coefs


def _cmd_catalog(args) -> int:
    entries = [c for c in case_catalog() if c.size == "medium" and not c.trend]
    print(f"{'case':>4}  {'scenario':<16} {'alpha':>5} {'beta':>5} {'p':>3}")
    for c in entries:
        beta = "-" if c.beta is None else f"{c.beta:g}"
        p = "-" if c.p is None else str(c.p)
        print(f"{c.case_id:>4}  {c.scenario:<16} {c.alpha:>5g} {beta:>5} {p:>3}")
    if args.out:
        _write_json(args.out, [c.to_json() for c in case_catalog()])
    return 0


def _cmd_simulate(args) -> int:
    cfg = replace_size_trend(base_case(args.case), args.size, args.trend)
    ds = simulate_case(cfg, args.seed, args.replicate,
                       noise_mean_zero_nugget=args.noise_mean_zero_nugget)
    save_dataset(ds, args.out)
    meta = dict(cfg.to_json(), seed=args.seed, replicate=args.replicate,
                noise_mean_zero_nugget=args.noise_mean_zero_nugget)
    _write_json(args.out + ".json", meta)
    print(f"simulated case {cfg.case_id} ({cfg.scenario}, {cfg.size}): "
          f"{ds.n_sites} sites -> {args.out}")
    return 0


def _cmd_smooth(args) -> int:
    ds = load_dataset(args.data)
    basis, coefs = _fit_dataset_basis(ds, args.basis, args.p)
    out = {
        "basis": {"kind": basis.kind, "p": basis.p, "domain": list(basis.domain)},
        "sites": [
            {"site_id": ds.site_ids[i], "coefficients": coefs[i].tolist()}
            for i in range(ds.n_sites)
        ],
    }
    _write_json(args.out, out)
    print(f"smoothed {ds.n_sites} sites with {args.basis} basis, p={args.p}")
    return 0


def _cmd_variogram(args) -> int:
    ds = load_dataset(args.data)
    if args.mode == "trace":
        basis, coefs = _fit_dataset_basis(ds, args.basis, args.p)
        emp = empirical_trace_semivariogram(
            ds.coords, coefs, fb.gram_matrix(basis), n_bins=args.bins
        )
        fit = fit_ols(emp, args.family)
        out = fit.to_json()
        out["empirical"] = emp.to_json()
        print(f"trace variogram fit ({args.family}): objective={fit.objective:.6g}")
    else:
        from .dataset import flatten_observations

        coords_l, times_l, values_l, _ = flatten_observations(ds)
        emp = empirical_st_semivariogram(coords_l, times_l, values_l,
                                         space_bins=args.bins, time_bins=args.bins)
        fit = fit_st_ols(emp, args.kind, spatial_family=args.family,
                         temporal_family=args.family, joint_family=args.family)
        out = fit.to_json()
        out["empirical"] = emp.to_json()
        print(f"space-time variogram fit ({args.kind}): objective={fit.objective:.6g}")
    _write_json(args.out, out)
    return 0


def _target(args) -> np.ndarray:
    return np.array([args.x, args.y], dtype=float)


def _pred_grid(ds: FunctionalDataset, n: int) -> np.ndarray:
    t_lo = min(t.min() for t in ds.times)
    t_hi = max(t.max() for t in ds.times)
    return np.linspace(t_lo, t_hi, n)


def _cmd_krige_okfd(args) -> int:
    ds = load_dataset(args.data)
    basis, coefs = _fit_dataset_basis(ds, args.basis, args.p)
    emp = empirical_trace_semivariogram(ds.coords, coefs, fb.gram_matrix(basis))
    vg = fit_ols(emp, args.family).model
    sol = okfd_weights(vg, ds.coords, _target(args))
    tgrid = _pred_grid(ds, args.grid)
    pred = okfd_predict(sol, coefs, basis, tgrid)
    _write_json(args.out, {
        "target": [args.x, args.y],
        "weights": sol.weights.tolist(),
        "t": tgrid.tolist(),
        "prediction": pred.tolist(),
    })
    print(f"okfd prediction at ({args.x:g}, {args.y:g}) on {args.grid} time points")
    return 0


def _cmd_krige_pwfk(args) -> int:
    ds = load_dataset(args.data)
    basis, coefs = _fit_dataset_basis(ds, args.basis, args.p)
    gram = fb.gram_matrix(basis)
    emp = empirical_trace_semivariogram(ds.coords, coefs, gram)
    fit = fit_ols(emp, args.family)
    # common-variogram coregionalization proxy: unit-sill latent variogram,
    # mixing factor from the sample covariance of the basis coefficients
    sill = fit.model.sill
    if sill <= 0:
        raise KrigeBenchError("fitted variogram has non-positive sill")
    gamma = fit.model.rescaled(1.0 / sill)
    cov = np.cov(coefs, rowvar=False)
    w, v = np.linalg.eigh(cov)
    mixing = v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
    coreg = Coregionalization(mixing=mixing, gamma=gamma)

    make = fb.make_fourier_basis if args.weight_basis == "fourier" else fb.make_bspline_basis
    basis_lambda = make(args.weight_p, basis.domain)
    system = pwfk_assemble(coreg, basis, basis_lambda, ds.coords, _target(args))
    sol = pwfk_solve(system)
    tgrid = _pred_grid(ds, args.grid)
    lam = sol.weights_on_grid(tgrid)
    curves = np.vstack([fb.basis_matrix(basis, tgrid) @ coefs[i]
                        for i in range(ds.n_sites)])
    pred = np.sum(lam * curves, axis=0)
    _write_json(args.out, {
        "target": [args.x, args.y],
        "t": tgrid.tolist(),
        "prediction": pred.tolist(),
        "weight_coefficients": sol.b.tolist(),
    })
    print(f"pwfk prediction at ({args.x:g}, {args.y:g}) with "
          f"{args.weight_basis} weight basis, K={args.weight_p}")
    return 0


def _cmd_krige_spt(args) -> int:
    from .dataset import flatten_observations
    from .kriging_spt import estimate_trend_ols

    ds = load_dataset(args.data)
    coords_l, times_l, values_l, _ = flatten_observations(ds)
    trend = sinusoid_trend() if args.trend == "sinusoid" else constant_trend()
    if args.trend == "sinusoid":
        beta = estimate_trend_ols(trend, coords_l, times_l, values_l)
        resid = values_l - trend.design(coords_l, times_l) @ beta
    else:
        resid = values_l
    emp = empirical_st_semivariogram(coords_l, times_l, resid)
    model = fit_st_ols(emp, args.kind, spatial_family=args.family,
                       temporal_family=args.family, joint_family=args.family).model
    solver = SptKrigingSolver(model=model, coords=coords_l, times=times_l, trend=trend)
    tgrid = _pred_grid(ds, args.grid)
    pred = solver.predict(values_l, _target(args), tgrid)
    _write_json(args.out, {
        "target": [args.x, args.y],
        "t": tgrid.tolist(),
        "prediction": pred.tolist(),
        "model": model.to_json(),
    })
    print(f"spt ({args.kind}) prediction at ({args.x:g}, {args.y:g})")
    return 0


def _cmd_cv(args) -> int:
    ds = load_dataset(args.data)
    if args.method == "okfd":
        if args.sweep:
            from .evaluation import sweep_okfd

            scenario = "stationary"
            res = sweep_okfd(ds, okfd_grid(scenario, args.size))
            out = res.to_json()
            print(f"okfd sweep best: {res.best_label} mspe={res.best_mspe:.6g}")
        else:
            mspe = evaluate_okfd_model(ds, args.basis, args.p, args.family)
            out = {"mspe": mspe, "basis": args.basis, "p": args.p,
                   "family": args.family}
            print(f"okfd cv mspe={mspe:.6g}")
    else:
        mspe = evaluate_spt_model(ds, args.kind, (args.family, args.family),
                                  trend_variant=args.trend,
                                  neighborhood=args.neighborhood)
        out = {"mspe": mspe, "kind": args.kind, "family": args.family,
               "trend": args.trend}
        print(f"spt ({args.kind}) cv mspe={mspe:.6g}")
    _write_json(args.out, out)
    return 0


def _cmd_study(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        cfg = StudyConfig.from_json(json.load(fh))
    if args.workers is not None:
        cfg.workers = args.workers
    else:
        cfg.workers = _workers_default()
    report, timings = run_study(cfg)
    atomic_write_text(args.out, report_to_json(report) + "\n")
    if args.csv:
        atomic_write_text(args.csv, report_to_csv(report))
    if args.timings:
        _write_json(args.timings, timings)
    for case in report["cases"]:
        parts = ", ".join(
            f"{m}={v['overall_mspe']:.4f}" for m, v in sorted(case["methods"].items())
        )
        print(f"case {case['case_id']} ({case['size']}): {parts}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="krigebench",
                                description="functional vs space-time kriging benchmark")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("catalog", help="list simulation cases")
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_catalog)

    sp = sub.add_parser("simulate", help="simulate one replicate of a case")
    sp.add_argument("--case", type=int, required=True)
    sp.add_argument("--size", choices=["small", "medium", "large"], default="medium")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--replicate", type=int, default=0)
    sp.add_argument("--trend", action="store_true")
    sp.add_argument("--noise-mean-zero-nugget", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_simulate)

    def add_basis(sp):
        sp.add_argument("--basis", choices=["fourier", "bspline"], default="bspline")
        sp.add_argument("--p", type=int, default=9)

    sp = sub.add_parser("smooth", help="fit basis coefficients per site")
    sp.add_argument("--data", required=True)
    add_basis(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_smooth)

    sp = sub.add_parser("variogram", help="estimate and fit a variogram")
    sp.add_argument("--data", required=True)
    sp.add_argument("--mode", choices=["trace", "st"], default="trace")
    add_basis(sp)
    sp.add_argument("--family", choices=FAMILIES, default="exponential")
    sp.add_argument("--kind", choices=["separable", "product_sum", "metric"],
                    default="separable")
    sp.add_argument("--bins", type=int, default=15)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_variogram)

    def add_target(sp):
        sp.add_argument("--x", type=float, required=True)
        sp.add_argument("--y", type=float, required=True)
        sp.add_argument("--grid", type=int, default=101,
                        help="number of prediction time points")

    sp = sub.add_parser("krige-okfd", help="predict a curve with constant weights")
    sp.add_argument("--data", required=True)
    add_basis(sp)
    sp.add_argument("--family", choices=FAMILIES, default="exponential")
    add_target(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_krige_okfd)

    sp = sub.add_parser("krige-pwfk", help="predict a curve with time-varying weights")
    sp.add_argument("--data", required=True)
    add_basis(sp)
    sp.add_argument("--family", choices=FAMILIES, default="exponential")
    sp.add_argument("--weight-basis", choices=["fourier", "bspline"], default="bspline")
    sp.add_argument("--weight-p", type=int, default=5)
    add_target(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_krige_pwfk)

    sp = sub.add_parser("krige-spt", help="predict a curve with space-time kriging")
    sp.add_argument("--data", required=True)
    sp.add_argument("--kind", choices=["separable", "product_sum", "metric"],
                    default="separable")
    sp.add_argument("--family", choices=FAMILIES, default="exponential")
    sp.add_argument("--trend", choices=["none", "sinusoid"], default="none")
    add_target(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_krige_spt)

    sp = sub.add_parser("cv", help="leave-one-site-out cross-validation")
    sp.add_argument("--data", required=True)
    sp.add_argument("--method", choices=["okfd", "spt"], default="okfd")
    add_basis(sp)
    sp.add_argument("--family", choices=FAMILIES, default="exponential")
    sp.add_argument("--kind", choices=["separable", "product_sum", "metric"],
                    default="separable")
    sp.add_argument("--trend", choices=["none", "sinusoid"], default="none")
    sp.add_argument("--sweep", action="store_true",
                    help="evaluate the full model grid instead of one model")
    sp.add_argument("--neighborhood", type=int, default=None,
                    help="restrict spt kriging to the N nearest sites per fold")
    sp.add_argument("--size", choices=["small", "medium", "large"], default="medium",
                    help="grid-size preset used with --sweep")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_cv)

    sp = sub.add_parser("study", help="run a multi-case benchmark study")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--csv", help="also write the flat per-case CSV summary")
    sp.add_argument("--timings")
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(fn=_cmd_study)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except KrigeBenchError as e:
        err = {"error": type(e).__name__, "message": str(e)}
        print(json.dumps(err), file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError) as e:
        err = {"error": type(e).__name__, "message": str(e)}
        print(json.dumps(err), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
