"""Gaussian process simulator for the 24-case benchmark catalog.

Scenario families: separable covariances sampled matrix-normal style from
the Kronecker factors, non-separable covariances sampled from a dense
Cholesky over all space-time points, and non-stationary curves built from
spatially correlated basis coefficients plus white measurement noise.

Replicate streams use the counter-based Philox generator keyed by
(root seed, case, size, trend, replicate), so replicates are reproducible
and independent of scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .basis import basis_matrix, make_bspline_basis
from .dataset import FunctionalDataset
from .errors import InvalidParameterError, SimulationFailureError

NUGGET = 0.04
STABLE_SHAPE = 0.5
NOISE_MEAN = 0.04
SIZES = {"small": (6, 12), "medium": (6, 50), "large": (15, 50)}
_SIZE_CODE = {"small": 0, "medium": 1, "large": 2}


@dataclass(frozen=True)
class CaseConfig:
    """One row of the simulation catalog at a concrete size/trend variant."""

    case_id: int
    scenario: str  # separable | non_separable | non_stationary
    size: str  # small | medium | large
    alpha: float
    beta: float | None = None
    p: int | None = None
    trend: bool = False

    @property
    def n_side(self) -> int:
        return SIZES[self.size][0]

    @property
    def n_sites(self) -> int:
        return self.n_side**2

    @property
    def m(self) -> int:
        return SIZES[self.size][1]

    def to_json(self) -> dict:
        return {
            "case_id": self.case_id,
            "scenario": self.scenario,
            "size": self.size,
            "alpha": self.alpha,
            "beta": self.beta,
            "p": self.p,
            "trend": self.trend,
        }


_ALPHAS = (0.1, 0.5, 2.0)
_BETAS = (0.1, 1.0, 10.0)


def base_case(case_id: int) -> CaseConfig:
    """Catalog row for one case id at medium size without trend."""
    if not 1 <= case_id <= 24:
        raise InvalidParameterError(f"case id must be 1..24, got {case_id}")
    if case_id <= 18:
        scenario = "separable" if case_id <= 9 else "non_separable"
        idx = (case_id - 1) % 9
        return CaseConfig(
            case_id=case_id,
            scenario=scenario,
            size="medium",
            alpha=_ALPHAS[idx // 3],
            beta=_BETAS[idx % 3],
        )
    idx = case_id - 19
    return CaseConfig(
        case_id=case_id,
        scenario="non_stationary",
        size="medium",
        alpha=_ALPHAS[idx % 3],
        p=7 if idx < 3 else 15,
    )


def replace_size_trend(cfg: CaseConfig, size: str, trend: bool) -> CaseConfig:
    """Catalog row at a different size/trend variant, with validation."""
    if size not in SIZES:
        raise InvalidParameterError(f"unknown size {size!r}")
    if trend and cfg.scenario == "non_stationary":
        raise InvalidParameterError(
            "trend variant applies to the stationary cases only"
        )
    return replace(cfg, size=size, trend=trend)


def case_catalog() -> list[CaseConfig]:
    """All case/size/trend variants (trend only for the stationary cases)."""
    out = []
    for cid in range(1, 25):
        base = base_case(cid)
        for size in SIZES:
            out.append(replace(base, size=size))
            if cid <= 18:
                out.append(replace(base, size=size, trend=True))
    return out


def replicate_rng(cfg: CaseConfig, seed: int, replicate: int) -> np.random.Generator:
    """Independent counter-based stream for one replicate of one case."""
    ss = np.random.SeedSequence(
        seed,
        spawn_key=(cfg.case_id, _SIZE_CODE[cfg.size], int(cfg.trend), replicate),
    )
    return np.random.Generator(np.random.Philox(ss))


def grid_layout(cfg: CaseConfig):
    """Site ids, coordinates (row-major regular grid in the unit square)
    and the shared time grid."""
    side = np.linspace(0.0, 1.0, cfg.n_side)
    xx, yy = np.meshgrid(side, side, indexing="ij")
    coords = np.column_stack([xx.ravel(), yy.ravel()])
    width = len(str(cfg.n_sites - 1))
    ids = [f"s{i:0{width}d}" for i in range(cfg.n_sites)]
    tgrid = np.linspace(0.0, 1.0, cfg.m)
    return ids, coords, tgrid


def _cholesky(mat: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(mat) / mat.shape[0]
        try:
            return np.linalg.cholesky(mat + jitter * np.eye(mat.shape[0]))
        except np.linalg.LinAlgError as e:
            raise SimulationFailureError(f"covariance not factorizable: {e}")


def spatial_cov(h: np.ndarray, alpha: float, nugget: float = NUGGET) -> np.ndarray:
    """Exponential covariance with nugget on exact zero distance."""
    return (1.0 - nugget) * np.exp(-alpha * h) + nugget * (h == 0)


def temporal_cov(u: np.ndarray, beta: float) -> np.ndarray:
    """Stable covariance with fixed shape exponent 0.5."""
    return np.exp(-np.power(beta * np.abs(u), STABLE_SHAPE))


def nonseparable_cov(h, u, alpha: float, beta: float, nugget: float = NUGGET):
    """Non-separable family: temporal mixing deforms the spatial decay."""
    ct = temporal_cov(np.asarray(u), beta)
    mix = 2.0 - ct
    return (1.0 - nugget) / mix * np.exp(-alpha * np.asarray(h) / np.sqrt(mix)) + nugget * (
        np.asarray(h) == 0
    )


def time_trend(t) -> np.ndarray:
    """The deterministic sinusoidal time trend added in the trend variants."""
    return 9.0 + 3.0 * np.sin(2.0 * np.pi * np.asarray(t, dtype=float))


def _to_dataset(ids, coords, tgrid, zmat) -> FunctionalDataset:
    return FunctionalDataset(
        site_ids=list(ids),
        coords=coords,
        times=[tgrid.copy() for _ in ids],
        values=[zmat[i].copy() for i in range(len(ids))],
    )


def simulate_separable(cfg: CaseConfig, seed: int, replicate: int = 0) -> FunctionalDataset:
    """Sample Z = L_s X L_t^T realizing the Kronecker covariance."""
    if cfg.scenario != "separable":
        raise InvalidParameterError(f"not a separable case: {cfg.case_id}")
    ids, coords, tgrid = grid_layout(cfg)
    rng = replicate_rng(cfg, seed, replicate)
    ls = _cholesky(spatial_cov(cdist(coords, coords), cfg.alpha))
    lt = _cholesky(temporal_cov(tgrid[:, None] - tgrid[None, :], cfg.beta))
    x = rng.standard_normal((cfg.n_sites, cfg.m))
    z = ls @ x @ lt.T
    if cfg.trend:
        z = z + time_trend(tgrid)[None, :]
    return _to_dataset(ids, coords, tgrid, z)


def simulate_nonseparable(cfg: CaseConfig, seed: int, replicate: int = 0) -> FunctionalDataset:
    """Dense Cholesky sampling over all space-time points."""
    if cfg.scenario != "non_separable":
        raise InvalidParameterError(f"not a non-separable case: {cfg.case_id}")
    ids, coords, tgrid = grid_layout(cfg)
    rng = replicate_rng(cfg, seed, replicate)
    n, m = cfg.n_sites, cfg.m
    h = np.repeat(np.repeat(cdist(coords, coords), m, axis=0), m, axis=1)
    u = np.abs(tgrid[:, None] - tgrid[None, :])
    u = np.tile(u, (n, n))
    cov = nonseparable_cov(h, u, cfg.alpha, cfg.beta)
    z = (_cholesky(cov) @ rng.standard_normal(n * m)).reshape(n, m)
    if cfg.trend:
        z = z + time_trend(tgrid)[None, :]
    return _to_dataset(ids, coords, tgrid, z)


def simulate_nonstationary(
    cfg: CaseConfig,
    seed: int,
    replicate: int = 0,
    noise_mean_zero_nugget: bool = False,
) -> FunctionalDataset:
    """Spatially correlated basis coefficients plus white noise.

    The noise is N(0.04, 1) read literally (mean 0.04, unit variance); the
    `noise_mean_zero_nugget` toggle reinterprets it as zero-mean noise with
    variance 0.04.
    """
    if cfg.scenario != "non_stationary":
        raise InvalidParameterError(f"not a non-stationary case: {cfg.case_id}")
    ids, coords, tgrid = grid_layout(cfg)
    rng = replicate_rng(cfg, seed, replicate)
    basis = make_bspline_basis(cfg.p, (0.0, 1.0))
    ls = _cholesky(np.exp(-cfg.alpha * cdist(coords, coords)))
    coef = ls @ rng.standard_normal((cfg.n_sites, cfg.p))
    z = coef @ basis_matrix(basis, tgrid).T
    if noise_mean_zero_nugget:
        z = z + np.sqrt(NOISE_MEAN) * rng.standard_normal(z.shape)
    else:
        z = z + NOISE_MEAN + rng.standard_normal(z.shape)
    return _to_dataset(ids, coords, tgrid, z)


def simulate_case(
    cfg: CaseConfig,
    seed: int,
    replicate: int = 0,
    noise_mean_zero_nugget: bool = False,
) -> FunctionalDataset:
    if cfg.scenario == "separable":
        return simulate_separable(cfg, seed, replicate)
    if cfg.scenario == "non_separable":
        return simulate_nonseparable(cfg, seed, replicate)
    return simulate_nonstationary(
        cfg, seed, replicate, noise_mean_zero_nugget=noise_mean_zero_nugget
    )


def apply_time_trend(ds: FunctionalDataset, m) -> FunctionalDataset:
    """Add a deterministic time trend m(t) to every sample."""
    return ds.map_values(lambda t, v: v + np.asarray(m(t), dtype=float))
