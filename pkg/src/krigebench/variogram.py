"""Semivariogram families, empirical estimators and least-squares fitting.

Covers the purely spatial (trace-)semivariogram used by functional kriging
and the space-time semivariogram surfaces (separable, product-sum, metric)
used by spatio-temporal kriging.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.spatial.distance import pdist, squareform

from .errors import (
    EmptyVariogramError,
    FitFailureError,
    InsufficientDataError,
    InvalidLagError,
    InvalidParameterError,
)

FAMILIES = ("exponential", "spherical", "stable")
ST_KINDS = ("separable", "product_sum", "metric")


@dataclass(frozen=True)
class VariogramModel:
    """Parametric semivariogram with nugget, partial sill and range.

    The stable family has an extra shape exponent in (0, 2]; exponential is
    stable with shape 1 but kept as its own family for the model sweeps.
    """

    family: str
    nugget: float
    partial_sill: float
    range_: float
    shape: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown family {self.family!r}")
        if self.nugget < 0 or self.partial_sill <= 0 or self.range_ <= 0:
            raise InvalidParameterError(
                f"invalid parameters nugget={self.nugget} "
                f"partial_sill={self.partial_sill} range={self.range_}"
            )
        if self.family == "stable" and not (0 < self.shape <= 2):
            raise InvalidParameterError(f"stable shape must be in (0,2], got {self.shape}")

    @property
    def sill(self) -> float:
        return self.nugget + self.partial_sill

    def rescaled(self, factor: float) -> "VariogramModel":
        """Same shape with nugget and partial sill multiplied by `factor`."""
        return VariogramModel(
            family=self.family,
            nugget=self.nugget * factor,
            partial_sill=self.partial_sill * factor,
            range_=self.range_,
            shape=self.shape,
        )

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "nugget": self.nugget,
            "partial_sill": self.partial_sill,
            "range": self.range_,
            "shape": self.shape,
        }


def model_semivariance(model: VariogramModel, h) -> np.ndarray | float:
    """Semivariance at lag h >= 0; exactly 0 at h = 0."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise InvalidLagError("negative lag")
    hr = h / model.range_
    if model.family == "exponential":
        struct = 1.0 - np.exp(-hr)
    elif model.family == "spherical":
        struct = np.where(hr < 1.0, 1.5 * hr - 0.5 * hr**3, 1.0)
    else:
        struct = 1.0 - np.exp(-np.power(hr, model.shape))
    gamma = np.where(h > 0, model.nugget + model.partial_sill * struct, 0.0)
    return gamma if gamma.ndim else float(gamma)


def model_covariance(model: VariogramModel, h) -> np.ndarray | float:
    """Covariance sill - semivariance; equals the total sill at h = 0."""
    h = np.asarray(h, dtype=float)
    c = np.asarray(model.sill - model_semivariance(model, h))
    return c if c.ndim else float(c)


@dataclass(frozen=True)
class StVariogramModel:
    """Space-time covariance model built from component variograms.

    separable:   C(h,u) = C_s(h) C_t(u)
    product_sum: C(h,u) = k C_s(h) C_t(u) + C_s(h) + C_t(u),  k > 0
    metric:      C(h,u) = C_joint(sqrt(h^2 + (kappa u)^2)),   kappa > 0
    """

    kind: str
    spatial: VariogramModel | None = None
    temporal: VariogramModel | None = None
    joint: VariogramModel | None = None
    k: float | None = None
    kappa: float | None = None

    def __post_init__(self):
        if self.kind not in ST_KINDS:
            raise InvalidParameterError(f"unknown st kind {self.kind!r}")
        if self.kind == "metric":
            if self.joint is None or self.kappa is None or self.kappa <= 0:
                raise InvalidParameterError("metric model needs joint variogram and kappa > 0")
        else:
            if self.spatial is None or self.temporal is None:
                raise InvalidParameterError(f"{self.kind} model needs spatial and temporal parts")
            if self.kind == "product_sum" and (self.k is None or self.k <= 0):
                raise InvalidParameterError("product_sum model needs k > 0")

    @property
    def sill(self) -> float:
        return st_model_covariance(self, 0.0, 0.0)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.spatial is not None:
            out["spatial"] = self.spatial.to_json()
        if self.temporal is not None:
            out["temporal"] = self.temporal.to_json()
        if self.joint is not None:
            out["joint"] = self.joint.to_json()
        if self.k is not None:
            out["k"] = self.k
        if self.kappa is not None:
            out["kappa"] = self.kappa
        return out


def st_model_covariance(model: StVariogramModel, h, u):
    """Space-time covariance at spatial lag h and time lag u (both >= 0)."""
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(h < 0) or np.any(u < 0):
        raise InvalidLagError("negative lag")
    if model.kind == "separable":
        c = model_covariance(model.spatial, h) * model_covariance(model.temporal, u)
    elif model.kind == "product_sum":
        cs = model_covariance(model.spatial, h)
        ct = model_covariance(model.temporal, u)
        c = model.k * cs * ct + cs + ct
    else:
        c = model_covariance(model.joint, np.sqrt(h**2 + (model.kappa * u) ** 2))
    c = np.asarray(c)
    return c if c.ndim else float(c)


def st_model_semivariance(model: StVariogramModel, h, u):
    return model.sill - np.asarray(st_model_covariance(model, h, u))


@dataclass
class EmpiricalVariogram:
    """Binned moment estimates; `u` is None for purely spatial lags."""

    h: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray
    u: np.ndarray | None = None

    def to_json(self) -> dict:
        out = {
            "h": self.h.tolist(),
            "gamma": self.gamma.tolist(),
            "counts": self.counts.tolist(),
        }
        if self.u is not None:
            out["u"] = self.u.tolist()
        return out


def _bin_pairs(dist, sq, n_bins, max_dist, eps, centers):
    """Average 0.5*sq over distance bins; returns (h, gamma, counts)."""
    if centers is not None:
        centers = np.asarray(centers, dtype=float)
        if eps is None:
            raise InvalidParameterError("explicit centers require eps")
        hs, gs, cs = [], [], []
        for c in centers:
            mask = (dist > c - eps) & (dist < c + eps)
            if not mask.any():
                continue
            hs.append(dist[mask].mean())
            gs.append(0.5 * sq[mask].mean())
            cs.append(int(mask.sum()))
        return np.array(hs), np.array(gs), np.array(cs)
    if max_dist is None:
        max_dist = 0.5 * dist.max()
    edges = np.linspace(0.0, max_dist, n_bins + 1)
    idx = np.digitize(dist, edges[1:], right=True)
    hs, gs, cs = [], [], []
    for b in range(n_bins):
        mask = idx == b
        if b == 0:
            mask &= dist <= edges[1]
        if not mask.any():
            continue
        hs.append(dist[mask].mean())
        gs.append(0.5 * sq[mask].mean())
        cs.append(int(mask.sum()))
    return np.array(hs), np.array(gs), np.array(cs)


def empirical_trace_semivariogram(
    coords,
    coefs,
    gram,
    n_bins: int = 15,
    max_dist: float | None = None,
    centers=None,
    eps: float | None = None,
) -> EmpiricalVariogram:
    """Moment estimator of the time-integrated semivariogram.

    The integral of the squared difference of two basis-expanded curves is
    the Gram quadratic form on the coefficient difference, so each site pair
    contributes (a_i - a_j)^T G (a_i - a_j) to its distance bin.
    """
    coords = np.asarray(coords, dtype=float)
    coefs = np.asarray(coefs, dtype=float)
    n = coords.shape[0]
    if n < 2:
        raise InsufficientDataError("need at least 2 sites")
    dist = pdist(coords)
    ii, jj = np.triu_indices(n, k=1)
    diff = coefs[ii] - coefs[jj]
    sq = np.einsum("ij,jk,ik->i", diff, gram, diff)
    h, g, c = _bin_pairs(dist, sq, n_bins, max_dist, eps, centers)
    if h.size == 0:
        raise EmptyVariogramError("all lag bins empty")
    return EmpiricalVariogram(h=h, gamma=g, counts=c)


def empirical_st_semivariogram(
    coords,
    times,
    values,
    space_bins: int = 12,
    time_bins: int = 12,
    max_h: float | None = None,
    max_u: float | None = None,
) -> EmpiricalVariogram:
    """Binned space-time moment estimator over long-form observations.

    Input arrays are long form (one entry per observation).  A dedicated
    zero bin on each axis keeps the same-site (h=0) and same-time (u=0)
    pairs separate from the smallest positive lag class.
    """
    coords = np.asarray(coords, dtype=float)
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise InsufficientDataError("need at least 2 observations")
    ii, jj = np.triu_indices(n, k=1)
    dh = np.hypot(coords[ii, 0] - coords[jj, 0], coords[ii, 1] - coords[jj, 1])
    du = np.abs(times[ii] - times[jj])
    sq = (values[ii] - values[jj]) ** 2

    def axis_edges(d, n_bins, cutoff):
        if cutoff is None:
            pos = d[d > 0]
            cutoff = 0.5 * pos.max() if pos.size else 1.0
        # bin 0 is the exact-zero class; then n_bins equal classes to cutoff
        return np.concatenate([[0.0], np.linspace(0.0, cutoff, n_bins + 1)[1:]])

    eh = axis_edges(dh, space_bins, max_h)
    eu = axis_edges(du, time_bins, max_u)
    hi = np.digitize(dh, eh[1:], right=True)  # 0 => h == 0 only when dh <= 0
    hi = np.where(dh == 0, 0, np.maximum(hi, 1))
    ui = np.digitize(du, eu[1:], right=True)
    ui = np.where(du == 0, 0, np.maximum(ui, 1))
    keep = (dh <= eh[-1]) & (du <= eu[-1])
    code = hi[keep] * (len(eu)) + ui[keep]
    dh, du, sq = dh[keep], du[keep], sq[keep]
    hs, us, gs, cs = [], [], [], []
    for b in np.unique(code):
        mask = code == b
        hs.append(dh[mask].mean())
        us.append(du[mask].mean())
        gs.append(0.5 * sq[mask].mean())
        cs.append(int(mask.sum()))
    if not hs:
        raise EmptyVariogramError("all lag bins empty")
    return EmpiricalVariogram(
        h=np.array(hs), gamma=np.array(gs), counts=np.array(cs), u=np.array(us)
    )


@dataclass
class VariogramFit:
    """Fitted model plus the least-squares diagnostics."""

    model: VariogramModel | StVariogramModel
    objective: float
    converged: bool
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "model": self.model.to_json(),
            "objective": self.objective,
            "converged": self.converged,
            "flags": self.flags,
        }


def _sv_param_vector(family):
    """(names, lower, upper) of the free parameters for one family."""
    names = ["nugget", "partial_sill", "range_"]
    lo = [0.0, 1e-10, 1e-10]
    hi = [np.inf, np.inf, np.inf]
    if family == "stable":
        names.append("shape")
        lo.append(1e-3)
        hi.append(2.0)
    return names, np.array(lo), np.array(hi)


def _raw_semivariance(family, nugget, psill, range_, shape, h):
    """Semivariance without model construction or validation.

    The fitting objective is evaluated hundreds of thousands of times per
    sweep; building a validated frozen dataclass per evaluation dominated
    the profile, so the optimizer uses this raw kernel instead.
    """
    hr = h / range_
    if family == "exponential":
        struct = 1.0 - np.exp(-hr)
    elif family == "spherical":
        struct = np.where(hr < 1.0, 1.5 * hr - 0.5 * hr**3, 1.0)
    else:
        struct = 1.0 - np.exp(-hr**shape)
    return np.where(h > 0, nugget + psill * struct, 0.0)


def _raw_component_cov(family, nugget, psill, range_, shape, h):
    return nugget + psill - _raw_semivariance(family, nugget, psill, range_, shape, h)


def _raw_st_semivariance(kind, sp_fam, tp_fam, vec, h, u):
    """Space-time semivariance from a flat vector, same fast path as above."""
    if kind == "metric":
        nj = 4 if sp_fam == "stable" else 3
        shape = vec[3] if sp_fam == "stable" else 1.0
        kappa = vec[nj]
        if vec[2] <= 0 or kappa <= 0 or shape <= 0:
            return None
        d = np.sqrt(h**2 + (kappa * u) ** 2)
        return _raw_semivariance(sp_fam, vec[0], vec[1], vec[2], shape, d)
    ns = 4 if sp_fam == "stable" else 3
    nt = 4 if tp_fam == "stable" else 3
    s_shape = vec[3] if sp_fam == "stable" else 1.0
    t_vec = vec[ns:ns + nt]
    t_shape = t_vec[3] if tp_fam == "stable" else 1.0
    if vec[2] <= 0 or t_vec[2] <= 0 or s_shape <= 0 or t_shape <= 0:
        return None
    cs = _raw_component_cov(sp_fam, vec[0], vec[1], vec[2], s_shape, h)
    ct = _raw_component_cov(tp_fam, t_vec[0], t_vec[1], t_vec[2], t_shape, u)
    sill_s = vec[0] + vec[1]
    sill_t = t_vec[0] + t_vec[1]
    if kind == "separable":
        return sill_s * sill_t - cs * ct
    k = vec[ns + nt]
    if k <= 0:
        return None
    sill = k * sill_s * sill_t + sill_s + sill_t
    return sill - (k * cs * ct + cs + ct)


def _model_from_vector(family, vec):
    kwargs = dict(zip(["nugget", "partial_sill", "range_"], vec[:3]))
    if family == "stable":
        kwargs["shape"] = vec[3]
    return VariogramModel(family=family, **kwargs)


def _multistart(residual_fn, starts, lo, hi, weights=None):
    """Nelder-Mead over each start, then a bounded least-squares polish."""

    # plain-python bound check: numpy reductions on tiny vectors cost more
    # than the whole residual at this call volume
    bound_idx = [
        (i, float(lo[i]), float(hi[i]))
        for i in range(len(lo))
        if lo[i] > -np.inf or hi[i] < np.inf
    ]

    def objective(vec):
        for i, l, h in bound_idx:
            if vec[i] < l or vec[i] > h:
                return 1e30
        r = residual_fn(vec)
        if weights is not None:
            r = r * weights
        return float(r @ r)

    # coarse simplex search per start to locate basins, then a bounded
    # least-squares polish of the leading candidates for the fine digits
    d = len(starts[0])
    candidates = []
    for s_idx, x0 in enumerate(starts):
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"xatol": 1e-3, "fatol": 1e-10,
                                "maxiter": 12 * d})
        candidates.append((res.fun, s_idx, res.x, res.success))
    candidates.sort(key=lambda c: (c[0], c[1]))
    best = candidates[0]
    sq = np.sqrt(weights) if weights is not None else 1.0
    polished = (best[0], best[1], best[2], bool(best[3]))
    for fun, s_idx, x, _ in candidates[:3]:
        try:
            pol = least_squares(
                lambda v: residual_fn(v) * sq,
                np.clip(x, lo, hi), bounds=(lo, hi),
                xtol=1e-14, ftol=1e-14, gtol=1e-14,
            )
        except Exception:
            continue
        cand = (float(2 * pol.cost), s_idx, pol.x, True)
        if cand[0] < polished[0] - 1e-18:
            polished = cand
    return polished[2], polished[0], polished[3]


def fit_ols(
    emp: EmpiricalVariogram,
    family: str,
    weights: np.ndarray | None = None,
) -> VariogramFit:
    """Least-squares fit of one semivariogram family to binned estimates.

    Unweighted by default; pass per-bin weights (e.g. pair counts) for the
    weighted variant used inside the iterative space-time trend loop.
    """
    if family not in FAMILIES:
        raise InvalidParameterError(f"unknown family {family!r}")
    names, lo, hi = _sv_param_vector(family)
    h, g = emp.h, emp.gamma
    n_free = len(names)
    if h.size < n_free + 1:
        raise InsufficientDataError(
            f"need at least {n_free + 1} bins, got {h.size}"
        )

    def residual(vec):
        shape = vec[3] if family == "stable" else 1.0
        if vec[2] <= 0 or (family == "stable" and shape <= 0):
            return np.full_like(g, 1e15)
        return _raw_semivariance(family, vec[0], vec[1], vec[2], shape, h) - g

    pos = h[h > 0]
    h_min = pos.min() if pos.size else 1e-3
    h_max = h.max()
    ranges = np.geomspace(max(h_min, 1e-8), 2 * h_max, 8)
    g_hi = np.quantile(g, 0.9) if g.max() > 0 else 1.0
    g_hi = max(g_hi, 1e-8)
    starts = []
    for a in ranges:
        for nug_frac in (0.0, 0.3):
            vec = [nug_frac * g_hi, (1 - nug_frac) * g_hi, a]
            if family == "stable":
                vec.append(0.5 if nug_frac == 0.0 else 1.5)
            starts.append(np.array(vec))
    x, obj, ok = _multistart(residual, starts, lo, hi, weights)
    if not ok and not np.isfinite(obj):
        raise FitFailureError("no start converged", diagnostics={"objective": obj})
    model = _model_from_vector(family, np.clip(x, lo, hi))
    flags = []
    if model.range_ < h_min:
        flags.append("near-zero-range")
    return VariogramFit(model=model, objective=obj, converged=ok, flags=flags)


def _st_build(kind, sp_fam, tp_fam, vec):
    """Map a flat parameter vector to an StVariogramModel."""
    if kind == "metric":
        nj = 4 if sp_fam == "stable" else 3
        joint = _model_from_vector(sp_fam, vec[:nj])
        return StVariogramModel(kind="metric", joint=joint, kappa=vec[nj])
    ns = 4 if sp_fam == "stable" else 3
    nt = 4 if tp_fam == "stable" else 3
    sp = _model_from_vector(sp_fam, vec[:ns])
    tp = _model_from_vector(tp_fam, vec[ns:ns + nt])
    if kind == "separable":
        return StVariogramModel(kind="separable", spatial=sp, temporal=tp)
    return StVariogramModel(kind="product_sum", spatial=sp, temporal=tp, k=vec[ns + nt])


def fit_st_ols(
    emp: EmpiricalVariogram,
    kind: str,
    spatial_family: str = "exponential",
    temporal_family: str = "exponential",
    joint_family: str = "exponential",
    weights: np.ndarray | None = None,
) -> VariogramFit:
    """Fit one space-time model family to a binned semivariogram surface.

    Marginal one-dimensional fits (smallest-u and smallest-h slices) seed
    the joint optimization, which then refines all parameters together.
    """
    if kind not in ST_KINDS:
        raise InvalidParameterError(f"unknown st kind {kind!r}")
    if emp.u is None:
        raise InvalidParameterError("space-time fit needs (h, u) lags")
    h, u, g = emp.h, emp.u, emp.gamma

    if kind == "metric":
        fam = joint_family
        names, lo1, hi1 = _sv_param_vector(fam)
        lo = np.append(lo1, 1e-8)
        hi = np.append(hi1, np.inf)
        if h.size < lo.size + 1:
            raise InsufficientDataError("too few bins")
        kappa0 = (h.max() / u.max()) if u.max() > 0 else 1.0

        def residual(vec):
            sv = _raw_st_semivariance("metric", fam, fam, vec, h, u)
            if sv is None:
                return np.full_like(g, 1e15)
            return sv - g

        g_hi = max(np.quantile(g, 0.9), 1e-8)
        d = np.sqrt(h**2 + (kappa0 * u) ** 2)
        ranges = np.geomspace(max(d[d > 0].min(), 1e-8), 2 * d.max(), 4)
        starts = []
        for a in ranges:
            for kap in (kappa0, 2 * kappa0):
                vec = [0.1 * g_hi, 0.9 * g_hi, a]
                if fam == "stable":
                    vec.append(1.0)
                vec.append(kap)
                starts.append(np.array(vec))
        x, obj, ok = _multistart(residual, starts, lo, hi, weights)
        model = _st_build("metric", fam, fam, np.clip(x, lo, hi))
        return VariogramFit(model=model, objective=obj, converged=ok)

    # marginal slices seed the spatial/temporal components
    u_zero = u <= max(1e-12, np.min(u))
    h_zero = h <= max(1e-12, np.min(h))
    sp_emp = EmpiricalVariogram(h=h[u_zero], gamma=g[u_zero], counts=emp.counts[u_zero])
    tp_emp = EmpiricalVariogram(h=u[h_zero], gamma=g[h_zero], counts=emp.counts[h_zero])
    try:
        sp0 = fit_ols(sp_emp, spatial_family).model
    except (InsufficientDataError, FitFailureError):
        sp0 = None
    try:
        tp0 = fit_ols(tp_emp, temporal_family).model
    except (InsufficientDataError, FitFailureError):
        tp0 = None

    ns = 4 if spatial_family == "stable" else 3
    nt = 4 if temporal_family == "stable" else 3
    _, lo_s, hi_s = _sv_param_vector(spatial_family)
    _, lo_t, hi_t = _sv_param_vector(temporal_family)
    lo = np.concatenate([lo_s, lo_t])
    hi = np.concatenate([hi_s, hi_t])
    if kind == "product_sum":
        lo = np.append(lo, 1e-8)
        hi = np.append(hi, np.inf)
    if h.size < lo.size + 1:
        raise InsufficientDataError("too few bins")

    def residual(vec):
        sv = _raw_st_semivariance(kind, spatial_family, temporal_family, vec, h, u)
        if sv is None:
            return np.full_like(g, 1e15)
        return sv - g

    g_hi = max(np.quantile(g, 0.9), 1e-8)

    def comp_start(model, fam, default_range, total):
        if model is not None:
            vec = [model.nugget, model.partial_sill, model.range_]
            if fam == "stable":
                vec.append(model.shape)
            return vec
        vec = [0.05 * total, 0.95 * total, default_range]
        if fam == "stable":
            vec.append(1.0)
        return vec

    h_pos = h[h > 0]
    u_pos = u[u > 0]
    a_h = np.geomspace(max(h_pos.min(), 1e-8), 2 * h.max(), 3) if h_pos.size else [1.0]
    a_u = np.geomspace(max(u_pos.min(), 1e-8), 2 * u.max(), 3) if u_pos.size else [1.0]
    starts = []
    for ah in a_h:
        for au in a_u:
            if kind == "separable":
                sp_s = comp_start(sp0, spatial_family, ah, g_hi)
                tp_s = comp_start(tp0, temporal_family, au, 1.0)
                # temporal component normalized to unit sill at the start
                tp_s[0], tp_s[1] = 0.05, 0.95
                starts.append(np.array(sp_s + tp_s))
            else:
                sp_s = comp_start(sp0, spatial_family, ah, 0.5 * g_hi)
                tp_s = comp_start(tp0, temporal_family, au, 0.5 * g_hi)
                for k0 in (0.1, 1.0):
                    starts.append(np.array(sp_s + tp_s + [k0]))
    x, obj, ok = _multistart(residual, starts, lo, hi, weights)
    model = _st_build(kind, spatial_family, temporal_family, np.clip(x, lo, hi))
    return VariogramFit(model=model, objective=obj, converged=ok)


def serialize_fit(fit: VariogramFit, emp: EmpiricalVariogram | None = None) -> str:
    out = fit.to_json()
    if emp is not None:
        out["empirical"] = emp.to_json()
    return json.dumps(out, indent=2, sort_keys=True)
