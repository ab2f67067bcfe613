"""Leave-one-site-out cross-validation, model sweeps and the study engine.

Prediction quality is scored against the raw observations: each site is
removed in turn, its curve predicted at its own observed time points from
the remaining sites, and the squared errors averaged per site then over
sites.  Sweeps evaluate a grid of model configurations and keep the
minimum; the study engine repeats that over simulated replicates and
aggregates the per-replicate minima.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import betainc

from . import basis as fb
from .dataset import FunctionalDataset, flatten_observations
from .errors import KrigeBenchError
from .kriging_spt import (
    SptKrigingSolver,
    TrendSpec,
    basis_trend,
    constant_trend,
    estimate_trend_ols,
    sinusoid_trend,
    spt_cov_matrix,
)
from .simulator import CaseConfig, base_case, simulate_case
from .variogram import (
    FAMILIES,
    empirical_st_semivariogram,
    empirical_trace_semivariogram,
    fit_ols,
    fit_st_ols,
)

SCHEMA_VERSION = 1

# basis-count grids per scenario group and sample size
_P_STATIONARY = {
    "small": {"fourier": [5, 7, 9, 11], "bspline": [5, 6, 7, 8, 9, 10, 11, 12]},
    "big": {"fourier": [5, 15, 25, 35, 45, 47, 49], "bspline": [5, 15, 25, 35, 45, 47, 49]},
}
_P_NONSTAT_BIG = [5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 35, 45, 47, 49]


def okfd_grid(scenario: str, size: str) -> list[tuple[str, int, str]]:
    """(basis kind, p, variogram family) combinations for one sweep."""
    group = "small" if size == "small" else "big"
    if scenario == "non_stationary" and group == "big":
        plists = {"fourier": _P_NONSTAT_BIG, "bspline": _P_NONSTAT_BIG}
    else:
        plists = _P_STATIONARY[group]
    out = []
    for kind in ("fourier", "bspline"):
        for p in plists[kind]:
            for fam in FAMILIES:
                out.append((kind, p, fam))
    return out


def fcv_mspe(predict_fn, ds: FunctionalDataset) -> float:
    """Leave-one-site-out mean squared prediction error.

    `predict_fn(train_ds, site_index)` must return predictions at the held
    out site's observed time points; errors are scored against raw data.
    """
    n = ds.n_sites
    if n < 3:
        raise KrigeBenchError("need at least 3 sites for cross-validation")
    total = 0.0
    for i in range(n):
        pred = predict_fn(ds.drop_site(i), i)
        total += float(np.mean((ds.values[i] - pred) ** 2))
    return total / n


@dataclass
class SweepRecord:
    label: str
    mspe: float | None
    error: str | None = None
    seconds: float = 0.0


@dataclass
class SweepResult:
    records: list[SweepRecord]
    best_label: str | None
    best_mspe: float | None
    total_seconds: float

    def to_json(self) -> dict:
        return {
            "records": [
                {"label": r.label, "mspe": r.mspe, "error": r.error}
                for r in self.records
            ],
            "best_label": self.best_label,
            "best_mspe": self.best_mspe,
        }


def _finish_sweep(records, order_key) -> SweepResult:
    total = sum(r.seconds for r in records)
    valid = [r for r in records if r.mspe is not None]
    if not valid:
        return SweepResult(records=records, best_label=None, best_mspe=None,
                           total_seconds=total)
    best = min(valid, key=order_key)
    return SweepResult(
        records=records, best_label=best.label, best_mspe=best.mspe,
        total_seconds=total,
    )


def _okfd_smooth(ds: FunctionalDataset, basis_kind: str, p: int, n_bins: int):
    """Smoothing and empirical trace variogram, shared across families."""
    t_lo = min(t.min() for t in ds.times)
    t_hi = max(t.max() for t in ds.times)
    make = fb.make_fourier_basis if basis_kind == "fourier" else fb.make_bspline_basis
    basis = make(p, (t_lo, t_hi))
    coefs = np.vstack(
        [fb.fit_coefficients(basis, ds.times[i], ds.values[i]) for i in range(ds.n_sites)]
    )
    gram = fb.gram_matrix(basis)
    emp = empirical_trace_semivariogram(ds.coords, coefs, gram, n_bins=n_bins)
    return basis, coefs, emp


def _okfd_fcv(ds: FunctionalDataset, basis, coefs, vg) -> float:
    # one semivariance matrix over all sites, sliced per held-out fold
    from .variogram import model_semivariance

    n = ds.n_sites
    dist = np.linalg.norm(ds.coords[:, None, :] - ds.coords[None, :, :], axis=2)
    gmat = np.asarray(model_semivariance(vg, dist))
    idx = np.arange(n)
    total = 0.0
    for i in range(n):
        keep = idx != i
        m = n - 1
        a = np.empty((m + 1, m + 1))
        a[:m, :m] = gmat[np.ix_(keep, keep)]
        a[:m, m] = 1.0
        a[m, :m] = 1.0
        a[m, m] = 0.0
        rhs = np.append(gmat[keep, i], 1.0)
        lam = np.linalg.solve(a, rhs)[:m]
        pred = fb.basis_matrix(basis, ds.times[i]) @ (lam @ coefs[keep])
        total += float(np.mean((ds.values[i] - pred) ** 2))
    return total / n


def evaluate_okfd_model(
    ds: FunctionalDataset, basis_kind: str, p: int, family: str, n_bins: int = 15
) -> float:
    """One smoothing + trace-variogram + cross-validated prediction run."""
    basis, coefs, emp = _okfd_smooth(ds, basis_kind, p, n_bins)
    vg = fit_ols(emp, family).model
    return _okfd_fcv(ds, basis, coefs, vg)


def sweep_okfd(ds: FunctionalDataset, grid, n_bins: int = 15) -> SweepResult:
    """Minimum cross-validation error over (basis kind, p, family) models.

    Smoothing and the empirical trace variogram depend only on the basis,
    so they are computed once per (kind, p) and shared by the families.
    """
    records = []
    by_basis: dict[tuple[str, int], list[str]] = {}
    for kind, p, fam in grid:
        by_basis.setdefault((kind, p), []).append(fam)
    for (kind, p), fams in by_basis.items():
        t0 = time.perf_counter()
        try:
            basis, coefs, emp = _okfd_smooth(ds, kind, p, n_bins)
        except KrigeBenchError as e:
            dt = (time.perf_counter() - t0) / len(fams)
            for fam in fams:
                records.append(SweepRecord(f"okfd:{kind}:{p}:{fam}", None,
                                           error=str(e), seconds=dt))
            continue
        shared = time.perf_counter() - t0
        for j, fam in enumerate(fams):
            t1 = time.perf_counter()
            label = f"okfd:{kind}:{p}:{fam}"
            extra = shared if j == 0 else 0.0
            try:
                vg = fit_ols(emp, fam).model
                mspe = _okfd_fcv(ds, basis, coefs, vg)
                records.append(SweepRecord(label, mspe,
                                           seconds=extra + time.perf_counter() - t1))
            except KrigeBenchError as e:
                records.append(SweepRecord(label, None, error=str(e),
                                           seconds=extra + time.perf_counter() - t1))

    def order_key(r):
        _, kind, p, fam = r.label.split(":")
        return (r.mspe, int(p), FAMILIES.index(fam), kind)

    return _finish_sweep(records, order_key)


def _trend_spec(variant: str, ds: FunctionalDataset) -> TrendSpec | None:
    if variant == "none":
        return None
    if variant == "sinusoid":
        return sinusoid_trend()
    if variant.startswith("bspline-"):
        p = int(variant.split("-", 1)[1])
        t_lo = min(t.min() for t in ds.times)
        t_hi = max(t.max() for t in ds.times)
        return basis_trend(fb.make_bspline_basis(p, (t_lo, t_hi)))
    raise KrigeBenchError(f"unknown trend variant {variant!r}")


def spt_combos(kind: str) -> list[tuple[str, str]]:
    """Component-family combinations within one dependence-structure group."""
    if kind == "metric":
        return [(f, f) for f in FAMILIES]
    return [(fs, ft) for fs in FAMILIES for ft in FAMILIES]


def _spt_variant_setup(ds: FunctionalDataset, trend_variant: str,
                       space_bins: int, time_bins: int):
    """Trend (if any), residuals and empirical space-time variogram —
    shared by every family combination under one trend variant."""
    coords_l, times_l, values_l, sites_l = flatten_observations(ds)
    trend = _trend_spec(trend_variant, ds)
    if trend is None:
        resid = values_l
    else:
        beta = estimate_trend_ols(trend, coords_l, times_l, values_l)
        resid = values_l - trend.design(coords_l, times_l) @ beta
    emp = empirical_st_semivariogram(
        coords_l, times_l, resid, space_bins=space_bins, time_bins=time_bins
    )
    return coords_l, times_l, values_l, sites_l, trend, emp


def _spt_fcv(ds, model, trend, coords_l, times_l, values_l, sites_l,
             fast_cv: bool = False, neighborhood: int | None = None) -> float:
    """Held-out curve error for one space-time model.

    The default refits the kriging system per fold -- the cost the study's
    timing comparison is about.  `fast_cv` switches to the single
    factorization leave-one-site-out identity, which returns the same
    predictions to machine precision.
    """
    trend = trend or constant_trend()
    if neighborhood is not None:
        # local kriging: keep only the nearest training sites per fold
        site_dist = np.linalg.norm(
            ds.coords[:, None, :] - ds.coords[None, :, :], axis=2
        )
        total = 0.0
        for i in range(ds.n_sites):
            order = np.argsort(site_dist[i])
            near = set([s for s in order if s != i][:neighborhood])
            keep = np.array([s in near for s in sites_l])
            solver = SptKrigingSolver(
                model=model, coords=coords_l[keep], times=times_l[keep],
                trend=trend,
            )
            pred = solver.predict(values_l[keep], ds.coords[i], ds.times[i])
            total += float(np.mean((ds.values[i] - pred) ** 2))
        return total / ds.n_sites
    if fast_cv:
        solver = SptKrigingSolver(
            model=model, coords=coords_l, times=times_l, trend=trend
        )
        preds = solver.loso_curves(values_l, sites_l)
        total = sum(
            float(np.mean((ds.values[i] - preds[i]) ** 2))
            for i in range(ds.n_sites)
        )
        return total / ds.n_sites
    # dual form of the universal kriging predictor per fold:
    #   beta = (X' S^-1 X)^-1 X' S^-1 z,  r = S^-1 (z - X beta),
    #   z_hat(s0,t0) = x0' beta + c0' r
    # identical to the bordered weight solve, one SPD factorization per fold
    sigma = spt_cov_matrix(model, coords_l, times_l)
    x = trend.design(coords_l, times_l)
    total = 0.0
    for i in range(ds.n_sites):
        keep = np.flatnonzero(sites_l != i)
        idx = np.flatnonzero(sites_l == i)
        if idx.size and idx[-1] - idx[0] + 1 == idx.size:
            # site blocks are contiguous in long form; plain slice copies
            # beat fancy indexing on the big fold matrix
            a0, b0 = idx[0], idx[-1] + 1
            m = keep.size
            s_kk = np.empty((m, m))
            s_kk[:a0, :a0] = sigma[:a0, :a0]
            s_kk[:a0, a0:] = sigma[:a0, b0:]
            s_kk[a0:, :a0] = sigma[b0:, :a0]
            s_kk[a0:, a0:] = sigma[b0:, b0:]
        else:
            s_kk = sigma[np.ix_(keep, keep)]
        x_k = x[keep]
        z_k = values_l[keep]
        try:
            c = cho_factor(s_kk, check_finite=False)
        except np.linalg.LinAlgError:
            jitter = 1e-10 * np.trace(s_kk) / s_kk.shape[0]
            c = cho_factor(s_kk + jitter * np.eye(s_kk.shape[0]),
                           check_finite=False)
        siz = cho_solve(c, np.column_stack([z_k, x_k]), check_finite=False)
        si_z, si_x = siz[:, 0], siz[:, 1:]
        beta = np.linalg.solve(x_k.T @ si_x, x_k.T @ si_z)
        r = si_z - si_x @ beta
        pred = x[idx] @ beta + sigma[np.ix_(keep, idx)].T @ r
        total += float(np.mean((ds.values[i] - pred) ** 2))
    return total / ds.n_sites


def evaluate_spt_model(
    ds: FunctionalDataset,
    kind: str,
    families: tuple[str, str],
    trend_variant: str = "none",
    space_bins: int = 12,
    time_bins: int = 12,
    fast_cv: bool = False,
    neighborhood: int | None = None,
) -> float:
    """One space-time model: residual variogram fit + cross-validated FCV."""
    coords_l, times_l, values_l, sites_l, trend, emp = _spt_variant_setup(
        ds, trend_variant, space_bins, time_bins
    )
    fs, ft = families
    model = fit_st_ols(
        emp, kind, spatial_family=fs, temporal_family=ft, joint_family=fs
    ).model
    return _spt_fcv(ds, model, trend, coords_l, times_l, values_l, sites_l,
                    fast_cv=fast_cv, neighborhood=neighborhood)


def sweep_spt(
    ds: FunctionalDataset,
    kind: str,
    trend_variants: tuple[str, ...] = ("none",),
    space_bins: int = 12,
    time_bins: int = 12,
    neighborhood: int | None = None,
) -> SweepResult:
    """Minimum FCV error within one dependence-structure group."""
    records = []
    for variant in trend_variants:
        t0 = time.perf_counter()
        try:
            setup = _spt_variant_setup(ds, variant, space_bins, time_bins)
        except KrigeBenchError as e:
            dt = (time.perf_counter() - t0) / len(spt_combos(kind))
            for fams in spt_combos(kind):
                records.append(SweepRecord(
                    f"spt:{kind}:{fams[0]}:{fams[1]}:{variant}", None,
                    error=str(e), seconds=dt))
            continue
        coords_l, times_l, values_l, sites_l, trend, emp = setup
        shared = time.perf_counter() - t0
        for j, fams in enumerate(spt_combos(kind)):
            t1 = time.perf_counter()
            label = f"spt:{kind}:{fams[0]}:{fams[1]}:{variant}"
            extra = shared if j == 0 else 0.0
            try:
                model = fit_st_ols(
                    emp, kind, spatial_family=fams[0],
                    temporal_family=fams[1], joint_family=fams[0],
                ).model
                mspe = _spt_fcv(ds, model, trend, coords_l, times_l,
                                values_l, sites_l, neighborhood=neighborhood)
                records.append(SweepRecord(label, mspe,
                                           seconds=extra + time.perf_counter() - t1))
            except KrigeBenchError as e:
                records.append(SweepRecord(label, None, error=str(e),
                                           seconds=extra + time.perf_counter() - t1))
    return _finish_sweep(records, lambda r: (r.mspe, r.label))


def overall_mspe(minima) -> tuple[float, int]:
    """Mean of valid per-replicate minima and the number excluded."""
    vals = [v for v in minima if v is not None and np.isfinite(v)]
    if not vals:
        raise KrigeBenchError("no valid replicates")
    return float(np.mean(vals)), len(minima) - len(vals)


def paired_ttest(a, b) -> dict:
    """Classical paired two-sided t-test with degenerate-case flags."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise KrigeBenchError("paired test needs equal-length vectors, n >= 2")
    d = a - b
    n = d.size
    sd = d.std(ddof=1)
    mean = d.mean()
    if sd == 0:
        if mean == 0:
            return {"t": 0.0, "p": 1.0, "flag": "degenerate-all-zero"}
        return {"t": np.inf if mean > 0 else -np.inf, "p": 0.0,
                "flag": "degenerate-zero-variance"}
    t = mean / (sd / np.sqrt(n))
    nu = n - 1
    p = float(betainc(nu / 2.0, 0.5, nu / (nu + t * t)))
    return {"t": float(t), "p": p, "flag": None}


@dataclass
class StudyConfig:
    """Configuration of one benchmark study run."""

    cases: list[int]
    sizes: list[str]
    replicates: int
    seed: int
    trend: bool = False
    spt_kinds: tuple[str, ...] = ("separable",)
    workers: int = 1
    noise_mean_zero_nugget: bool = False
    neighborhood: int | None = None
    space_bins: int = 12
    time_bins: int = 12

    def validate(self) -> None:
        from .simulator import SIZES

        for cid in self.cases:
            base_case(cid)
        for size in self.sizes:
            if size not in SIZES:
                raise KrigeBenchError(f"unknown size {size!r}")
        if self.replicates < 1:
            raise KrigeBenchError("need at least one replicate")
        for kind in self.spt_kinds:
            if kind not in ("separable", "product_sum", "metric"):
                raise KrigeBenchError(f"unknown space-time kind {kind!r}")
        if self.neighborhood is not None and self.neighborhood < 1:
            raise KrigeBenchError("neighborhood must be a positive site count")

    def to_json(self) -> dict:
        return {
            "cases": list(self.cases),
            "sizes": list(self.sizes),
            "replicates": self.replicates,
            "seed": self.seed,
            "trend": self.trend,
            "spt_kinds": list(self.spt_kinds),
            "noise_mean_zero_nugget": self.noise_mean_zero_nugget,
            "neighborhood": self.neighborhood,
            "space_bins": self.space_bins,
            "time_bins": self.time_bins,
        }

    @staticmethod
    def from_json(d: dict) -> "StudyConfig":
        return StudyConfig(
            cases=list(d["cases"]),
            sizes=list(d.get("sizes", ["medium"])),
            replicates=int(d["replicates"]),
            seed=int(d["seed"]),
            trend=bool(d.get("trend", False)),
            spt_kinds=tuple(d.get("spt_kinds", ["separable"])),
            workers=int(d.get("workers", 1)),
            noise_mean_zero_nugget=bool(d.get("noise_mean_zero_nugget", False)),
            neighborhood=(int(d["neighborhood"])
                          if d.get("neighborhood") is not None else None),
            space_bins=int(d.get("space_bins", 12)),
            time_bins=int(d.get("time_bins", 12)),
        )


def _spt_trend_variants(cfg: CaseConfig) -> tuple[str, ...]:
    """Trend handling mirrors the benchmark design: universal kriging with
    the simulated sinusoid for trend variants; ordinary plus universal with
    the generating spline columns for non-stationary cases."""
    if cfg.scenario == "non_stationary":
        return ("none", f"bspline-{cfg.p}")
    if cfg.trend:
        return ("sinusoid",)
    return ("none",)


def run_replicate(args) -> dict:
    """One replicate: simulate, sweep both approaches, return minima."""
    (case_cfg, seed, replicate, spt_kinds, noise_zero, space_bins, time_bins,
     neighborhood) = args
    ds = simulate_case(
        case_cfg, seed, replicate, noise_mean_zero_nugget=noise_zero
    )
    out = {"replicate": replicate, "methods": {}, "timings": {}}
    t0 = time.perf_counter()
    okfd = sweep_okfd(ds, okfd_grid(case_cfg.scenario, case_cfg.size))
    out["methods"]["okfd"] = okfd.best_mspe
    out["timings"]["okfd"] = {
        "total_seconds": okfd.total_seconds,
        "n_models": len(okfd.records),
    }
    variants = _spt_trend_variants(case_cfg)
    for kind in spt_kinds:
        res = sweep_spt(ds, kind, trend_variants=variants,
                        space_bins=space_bins, time_bins=time_bins,
                        neighborhood=neighborhood)
        out["methods"][f"spt_{kind}"] = res.best_mspe
        out["timings"][f"spt_{kind}"] = {
            "total_seconds": res.total_seconds,
            "n_models": len(res.records),
        }
    out["timings"]["wall_seconds"] = time.perf_counter() - t0
    return out


def run_study(config: StudyConfig):
    """Execute the study; returns (report dict, timings dict).

    The report is deterministic given the config; wall-clock timings are
    returned separately so reports are byte-comparable across runs and
    worker counts.
    """
    config.validate()
    case_entries = []
    for cid in config.cases:
        for size in config.sizes:
            cfg = replace(base_case(cid), size=size,
                          trend=config.trend and cid <= 18)
            case_entries.append(cfg)

    report = {"schema_version": SCHEMA_VERSION, "config": config.to_json(), "cases": []}
    timings = {"cases": []}
    for cfg in case_entries:
        tasks = [
            (cfg, config.seed, r, config.spt_kinds, config.noise_mean_zero_nugget,
             config.space_bins, config.time_bins, config.neighborhood)
            for r in range(config.replicates)
        ]
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(run_replicate, tasks))
        else:
            results = [run_replicate(t) for t in tasks]
        results.sort(key=lambda r: r["replicate"])

        methods = sorted(results[0]["methods"])
        entry = {
            "case_id": cfg.case_id,
            "size": cfg.size,
            "trend": cfg.trend,
            "replicates": config.replicates,
            "methods": {},
        }
        for m in methods:
            minima = [r["methods"][m] for r in results]
            mean, excluded = overall_mspe(minima)
            entry["methods"][m] = {
                "overall_mspe": mean,
                "per_replicate_minima": minima,
                "excluded": excluded,
            }
        if "okfd" in methods and "spt_separable" in methods:
            ok = np.array([r["methods"]["okfd"] for r in results], dtype=float)
            sep = np.array([r["methods"]["spt_separable"] for r in results], dtype=float)
            valid = np.isfinite(ok) & np.isfinite(sep)
            entry["n_times_okfd_beats_separable"] = int(np.sum(ok[valid] < sep[valid]))
            if valid.sum() >= 2:
                entry["paired_t_okfd_vs_separable"] = paired_ttest(ok[valid], sep[valid])
        report["cases"].append(entry)

        tentry = {"case_id": cfg.case_id, "size": cfg.size, "trend": cfg.trend,
                  "methods": {}}
        for m in methods:
            tot = sum(r["timings"][m]["total_seconds"] for r in results)
            n_models = results[0]["timings"][m]["n_models"]
            tentry["methods"][m] = {
                "total_seconds": tot,
                "mean_seconds_per_model": tot / (n_models * len(results)),
                "n_models": n_models,
            }
        timings["cases"].append(tentry)
    return report, timings


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def report_to_csv(report: dict) -> str:
    """Flatten a study report to CSV, one row per case x size x method."""
    lines = ["case_id,size,trend,method,overall_mspe,replicates,excluded"]
    for entry in report["cases"]:
        for method in sorted(entry["methods"]):
            stats = entry["methods"][method]
            lines.append(
                "{},{},{},{},{:.17g},{},{}".format(
                    entry["case_id"], entry["size"],
                    str(entry["trend"]).lower(), method,
                    stats["overall_mspe"], entry["replicates"],
                    stats["excluded"],
                )
            )
    return "\n".join(lines) + "\n"
