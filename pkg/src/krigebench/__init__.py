"""Benchmark toolkit comparing functional kriging with space-time kriging
on simulated spatial functional data."""

from .basis import (
    BasisSystem,
    basis_matrix,
    evaluate_curve,
    fit_coefficients,
    gram_matrix,
    make_bspline_basis,
    make_fourier_basis,
)
from .dataset import FunctionalDataset, load_dataset, save_dataset
from .errors import KrigeBenchError
from .evaluation import (
    StudyConfig,
    fcv_mspe,
    okfd_grid,
    paired_ttest,
    run_study,
    sweep_okfd,
    sweep_spt,
)
from .kriging_functional import (
    Coregionalization,
    okfd_predict,
    okfd_weights,
    pwfk_assemble,
    pwfk_solve,
)
from .kriging_spt import SptKrigingSolver, iterate_trend_variogram
from .simulator import CaseConfig, base_case, case_catalog, simulate_case
from .variogram import (
    StVariogramModel,
    VariogramModel,
    empirical_st_semivariogram,
    empirical_trace_semivariogram,
    fit_ols,
    fit_st_ols,
)

__version__ = "0.1.0"

__all__ = [
    "BasisSystem",
    "CaseConfig",
    "Coregionalization",
    "FunctionalDataset",
    "KrigeBenchError",
    "SptKrigingSolver",
    "StVariogramModel",
    "StudyConfig",
    "VariogramModel",
    "base_case",
    "basis_matrix",
    "case_catalog",
    "empirical_st_semivariogram",
    "empirical_trace_semivariogram",
    "evaluate_curve",
    "fcv_mspe",
    "fit_coefficients",
    "fit_ols",
    "fit_st_ols",
    "gram_matrix",
    "iterate_trend_variogram",
    "load_dataset",
    "make_bspline_basis",
    "make_fourier_basis",
    "okfd_grid",
    "okfd_predict",
    "okfd_weights",
    "paired_ttest",
    "pwfk_assemble",
    "pwfk_solve",
    "run_study",
    "save_dataset",
    "simulate_case",
    "sweep_okfd",
    "sweep_spt",
]
