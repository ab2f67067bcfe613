"""Spatio-temporal kriging: covariance assembly, ordinary and universal
bordered solves, trend estimation, and the iterated trend/variogram loop.

Observations are long form: coords (N, 2), times (N,), values (N,).  The
bordered saddle-point matrix is factored once per configuration and reused
across prediction time points, since only the right-hand side changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import (
    DegenerateResidualsError,
    InvalidCovarianceError,
    InvalidParameterError,
    SingularFitError,
    SingularSystemError,
)
from .variogram import (
    EmpiricalVariogram,
    StVariogramModel,
    empirical_st_semivariogram,
    fit_st_ols,
    st_model_covariance,
)


@dataclass(frozen=True)
class TrendSpec:
    """Covariate builder x(s, t); the first column is always the constant."""

    builder: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n_covariates: int
    name: str = "trend"

    def design(self, coords, times) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        times = np.atleast_1d(np.asarray(times, dtype=float))
        x = self.builder(coords, times)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape != (times.size, self.n_covariates):
            raise InvalidParameterError(
                f"trend builder returned {x.shape}, expected "
                f"({times.size}, {self.n_covariates})"
            )
        return x


def constant_trend() -> TrendSpec:
    return TrendSpec(
        builder=lambda s, t: np.ones((t.size, 1)), n_covariates=1, name="constant"
    )


def sinusoid_trend() -> TrendSpec:
    """Columns [1, sin(2 pi t)] matching the simulated deterministic trend."""

    def build(s, t):
        return np.column_stack([np.ones(t.size), np.sin(2 * np.pi * t)])

    return TrendSpec(builder=build, n_covariates=2, name="sinusoid")


def basis_trend(basis) -> TrendSpec:
    """Time-only trend spanned by a basis system (plus implied constant)."""
    from .basis import basis_matrix

    def build(s, t):
        return basis_matrix(basis, t)

    return TrendSpec(builder=build, n_covariates=basis.p, name=f"basis-{basis.kind}-{basis.p}")


def spt_cov_matrix(model: StVariogramModel, coords, times) -> np.ndarray:
    """N x N covariance over long-form points; nugget only on exact zero lags."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    h = cdist(coords, coords)
    u = np.abs(times[:, None] - times[None, :])
    return np.asarray(st_model_covariance(model, h, u))


@dataclass
class BorderedFactor:
    """LU factorization of [[Sigma, X], [X^T, 0]] reused across targets."""

    lu: tuple
    n_obs: int
    n_cov: int
    condition: float


def _lu_with_cond(mat: np.ndarray):
    """LU factorization plus a cheap condition estimate from diag(U).

    A full SVD would dominate the cost on large kriging systems; the
    diagonal-ratio estimate is enough to detect effective singularity.
    """
    lu = sla.lu_factor(mat)
    d = np.abs(np.diag(lu[0]))
    if d.min() == 0 or not np.isfinite(d).all():
        return lu, np.inf
    return lu, float(d.max() / d.min())


def _factor_bordered(sigma: np.ndarray, x: np.ndarray) -> BorderedFactor:
    n, m = x.shape
    mat = np.zeros((n + m, n + m))
    mat[:n, :n] = sigma
    mat[:n, n:] = x
    mat[n:, :n] = x.T
    lu, cond = _lu_with_cond(mat)
    if not np.isfinite(cond) or cond > 1e14:
        # near-singular factorizations get one diagonal jitter retry
        jitter = 1e-10 * np.trace(sigma) / n
        mat[:n, :n] = sigma + jitter * np.eye(n)
        lu, cond = _lu_with_cond(mat)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularSystemError("singular kriging system", condition=cond)
    return BorderedFactor(lu=lu, n_obs=n, n_cov=m, condition=cond)


@dataclass
class SptKrigingSolver:
    """Weight solver for one model + observation set (+ optional trend)."""

    model: StVariogramModel
    coords: np.ndarray
    times: np.ndarray
    trend: TrendSpec = field(default_factory=constant_trend)
    _factor: BorderedFactor | None = None

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        x = self.trend.design(self.coords, self.times)
        if np.linalg.matrix_rank(x) < x.shape[1]:
            raise SingularFitError("rank-deficient trend design")
        self._x = x

    def _ensure_factor(self):
        if self._factor is None:
            sigma = spt_cov_matrix(self.model, self.coords, self.times)
            self._factor = _factor_bordered(sigma, self._x)

    def weights(self, s0, t0):
        """Kriging weights and multipliers at target (s0, t0)."""
        self._ensure_factor()
        s0 = np.asarray(s0, dtype=float)
        h0 = np.linalg.norm(self.coords - s0[None, :], axis=1)
        u0 = np.abs(self.times - t0)
        sigma0 = np.asarray(st_model_covariance(self.model, h0, u0))
        x0 = self.trend.design(s0[None, :], np.array([t0]))[0]
        rhs = np.concatenate([sigma0, x0])
        sol = sla.lu_solve(self._factor.lu, rhs)
        lam = sol[: self._factor.n_obs]
        mu = sol[self._factor.n_obs:]
        if np.max(np.abs(self._x.T @ lam - x0)) > 1e-8:
            raise SingularSystemError(
                "unbiasedness constraint violated", condition=self._factor.condition
            )
        return lam, mu

    def predict(self, values, s0, tgrid) -> np.ndarray:
        """BLUP at (s0, t) for each t in tgrid; shared factorization, one
        batched right-hand-side solve."""
        self._ensure_factor()
        values = np.asarray(values, dtype=float)
        s0 = np.asarray(s0, dtype=float)
        tgrid = np.atleast_1d(np.asarray(tgrid, dtype=float))
        h0 = np.linalg.norm(self.coords - s0[None, :], axis=1)
        u0 = np.abs(self.times[:, None] - tgrid[None, :])
        sigma0 = np.asarray(st_model_covariance(self.model, h0[:, None], u0))
        x0 = self.trend.design(np.repeat(s0[None, :], tgrid.size, axis=0), tgrid)
        rhs = np.vstack([sigma0, x0.T])
        sol = sla.lu_solve(self._factor.lu, rhs)
        lam = sol[: self._factor.n_obs]
        if np.max(np.abs(self._x.T @ lam - x0.T)) > 1e-8:
            raise SingularSystemError(
                "unbiasedness constraint violated", condition=self._factor.condition
            )
        return values @ lam

    def loso_curves(self, values, site_index) -> list[np.ndarray]:
        """Leave-one-site-out BLUPs at each site's own observation points.

        Refitting the bordered system per held-out site repeats an O(N^3)
        factorization n times; the cross-validation identity
        z_hat_I = z_I - (K^-1_II)^-1 (K^-1 r)_I recovers every held-out
        prediction from a single factorization of the full matrix.
        """
        self._ensure_factor()
        values = np.asarray(values, dtype=float)
        site_index = np.asarray(site_index)
        n = self._factor.n_obs
        q = self._factor.n_cov
        v = sla.lu_solve(self._factor.lu, np.concatenate([values, np.zeros(q)]))
        eye = np.zeros((n + q, n))
        eye[:n, :n] = np.eye(n)
        kinv_obs = sla.lu_solve(self._factor.lu, eye)[:n]
        out = []
        for i in np.unique(site_index):
            idx = np.flatnonzero(site_index == i)
            out.append(values[idx] - np.linalg.solve(kinv_obs[np.ix_(idx, idx)], v[idx]))
        return out


def spt_ordinary_weights(model: StVariogramModel, coords, times, s0, t0):
    """Constant-mean kriging weights; sum to one."""
    solver = SptKrigingSolver(model=model, coords=coords, times=times)
    lam, mu = solver.weights(s0, t0)
    return lam, float(mu[0])


def spt_universal_weights(model: StVariogramModel, trend: TrendSpec, coords, times, s0, t0):
    """Trend-aware kriging weights; reproduce the covariates at the target."""
    solver = SptKrigingSolver(model=model, coords=coords, times=times, trend=trend)
    return solver.weights(s0, t0)


def spt_predict_curve(
    model: StVariogramModel,
    coords,
    times,
    values,
    s0,
    tgrid,
    trend: TrendSpec | None = None,
) -> np.ndarray:
    solver = SptKrigingSolver(
        model=model, coords=coords, times=times, trend=trend or constant_trend()
    )
    return solver.predict(values, s0, tgrid)


def estimate_trend_ols(trend: TrendSpec, coords, times, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    x = trend.design(coords, times)
    if values.size < x.shape[1]:
        raise InvalidParameterError("fewer observations than covariates")
    beta, _, rank, _ = np.linalg.lstsq(x, values, rcond=None)
    if rank < x.shape[1]:
        raise SingularFitError("rank-deficient trend design")
    return beta


def estimate_trend_gls(trend: TrendSpec, coords, times, values, sigma) -> np.ndarray:
    """beta = (X^T Sigma^-1 X)^-1 X^T Sigma^-1 Z."""
    values = np.asarray(values, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    x = trend.design(coords, times)
    try:
        cf = sla.cho_factor(sigma)
    except np.linalg.LinAlgError as e:
        raise InvalidCovarianceError(str(e))
    except sla.LinAlgError as e:  # pragma: no cover - scipy alias
        raise InvalidCovarianceError(str(e))
    si_x = sla.cho_solve(cf, x)
    si_z = sla.cho_solve(cf, values)
    return np.linalg.solve(x.T @ si_x, x.T @ si_z)


@dataclass
class IterationLog:
    betas: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def iterate_trend_variogram(
    trend: TrendSpec,
    coords,
    times,
    values,
    kind: str = "separable",
    spatial_family: str = "exponential",
    temporal_family: str = "exponential",
    joint_family: str = "exponential",
    max_iter: int = 10,
    tol: float = 1e-6,
    space_bins: int = 12,
    time_bins: int = 12,
    weighted: bool = True,
):
    """Alternate trend regression and residual-variogram fitting.

    OLS seeds beta; each round fits the space-time variogram to the
    residual empirical surface (pair-count weighted when `weighted`), then
    re-estimates beta by GLS; stops on relative beta change below tol.
    """
    values = np.asarray(values, dtype=float)
    beta = estimate_trend_ols(trend, coords, times, values)
    log = IterationLog(betas=[beta.copy()])
    x = trend.design(coords, times)
    fit = None
    for _ in range(max_iter):
        resid = values - x @ beta
        if np.max(np.abs(resid)) < 1e-12:
            raise DegenerateResidualsError(
                "residuals are numerically zero; variogram undefined"
            )
        emp = empirical_st_semivariogram(
            coords, times, resid, space_bins=space_bins, time_bins=time_bins
        )
        wts = emp.counts.astype(float) if weighted else None
        fit = fit_st_ols(
            emp, kind,
            spatial_family=spatial_family,
            temporal_family=temporal_family,
            joint_family=joint_family,
            weights=wts,
        )
        log.objectives.append(fit.objective)
        sigma = spt_cov_matrix(fit.model, coords, times)
        beta_new = estimate_trend_gls(trend, coords, times, values, sigma)
        log.n_iter += 1
        rel = np.linalg.norm(beta_new - beta) / max(np.linalg.norm(beta), 1e-30)
        beta = beta_new
        log.betas.append(beta.copy())
        if rel < tol:
            log.converged = True
            break
    return beta, fit.model, log
