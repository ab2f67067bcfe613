"""B-spline and Fourier basis systems for curve smoothing.

Curves observed on a finite time grid are represented as linear combinations
of p basis functions, with coefficients fitted by least squares.  The Gram
matrix of the system turns time integrals of squared curve differences into
quadratic forms on the coefficients, which is what the trace-variogram
estimator needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline

from .errors import (
    InsufficientDataError,
    InvalidDomainError,
    InvalidParameterError,
    OutOfDomainError,
    SingularFitError,
)

BSPLINE_ORDER = 4  # cubic splines only
_GL_NODES, _GL_WEIGHTS = leggauss(7)


@dataclass(frozen=True)
class BasisSystem:
    """A family of p basis functions on a closed interval.

    kind is "bspline" (cubic, order 4) or "fourier" (orthonormal on the
    domain, ordered constant, sin, cos, sin, ...).  For B-splines `knots`
    holds the breakpoints: both endpoints plus p-4 interior points.
    """

    kind: str
    p: int
    domain: tuple[float, float]
    knots: np.ndarray | None = field(default=None, repr=False)

    @property
    def t_lo(self) -> float:
        return self.domain[0]

    @property
    def t_hi(self) -> float:
        return self.domain[1]

    def _full_knots(self) -> np.ndarray:
        # endpoint knots repeated to full multiplicity for scipy
        k = BSPLINE_ORDER - 1
        return np.concatenate(
            [np.repeat(self.knots[0], k), self.knots, np.repeat(self.knots[-1], k)]
        )

    def quadrature_breaks(self) -> np.ndarray:
        """Breakpoints subdividing the domain for Gauss-Legendre quadrature."""
        if self.kind == "bspline":
            return np.asarray(self.knots)
        # trig integrands are not polynomial; use enough panels to resolve
        # the highest frequency present in basis products
        n_pan = max(4, 4 * self.p)
        return np.linspace(self.t_lo, self.t_hi, n_pan + 1)


def make_bspline_basis(p: int, domain: tuple[float, float]) -> BasisSystem:
    """Cubic B-spline system with p-4 equally spaced interior knots."""
    t_lo, t_hi = float(domain[0]), float(domain[1])
    if not np.isfinite([t_lo, t_hi]).all() or t_hi <= t_lo:
        raise InvalidDomainError(f"degenerate domain [{t_lo}, {t_hi}]")
    if p < BSPLINE_ORDER:
        raise InvalidParameterError(f"bspline basis needs p >= 4, got {p}")
    knots = np.linspace(t_lo, t_hi, p - BSPLINE_ORDER + 2)
    return BasisSystem(kind="bspline", p=int(p), domain=(t_lo, t_hi), knots=knots)


def make_fourier_basis(p: int, domain: tuple[float, float]) -> BasisSystem:
    """Fourier system [const, sin, cos, ...], orthonormal on the domain."""
    t_lo, t_hi = float(domain[0]), float(domain[1])
    if not np.isfinite([t_lo, t_hi]).all() or t_hi <= t_lo:
        raise InvalidDomainError(f"degenerate domain [{t_lo}, {t_hi}]")
    if p < 1 or p % 2 == 0:
        raise InvalidParameterError(f"fourier basis needs odd p >= 1, got {p}")
    return BasisSystem(kind="fourier", p=int(p), domain=(t_lo, t_hi))


def _check_in_domain(basis: BasisSystem, times: np.ndarray) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size and (times.min() < basis.t_lo or times.max() > basis.t_hi):
        raise OutOfDomainError(
            f"time outside domain [{basis.t_lo}, {basis.t_hi}]"
        )
    return times


def basis_matrix(basis: BasisSystem, times) -> np.ndarray:
    """Evaluate all basis functions at `times`; rows index times."""
    times = _check_in_domain(basis, times)
    if basis.kind == "bspline":
        dm = BSpline.design_matrix(
            times, basis._full_knots(), BSPLINE_ORDER - 1, extrapolate=False
        )
        return dm.toarray()
    period = basis.t_hi - basis.t_lo
    out = np.empty((times.size, basis.p))
    out[:, 0] = 1.0 / np.sqrt(period)
    amp = np.sqrt(2.0 / period)
    phase = 2.0 * np.pi * (times - basis.t_lo) / period
    for j in range(1, (basis.p + 1) // 2):
        out[:, 2 * j - 1] = amp * np.sin(j * phase)
        out[:, 2 * j] = amp * np.cos(j * phase)
    return out


def evaluate_basis(basis: BasisSystem, t: float) -> np.ndarray:
    """Basis values at a single in-domain time point."""
    return basis_matrix(basis, [t])[0]


def fit_coefficients(basis: BasisSystem, times, values) -> np.ndarray:
    """Least-squares coefficients of the curve sampled at (times, values)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise InvalidParameterError("times and values must have equal length")
    if times.size < basis.p:
        raise InsufficientDataError(
            f"need at least p={basis.p} samples, got {times.size}"
        )
    design = basis_matrix(basis, times)
    coef, _, rank, sv = np.linalg.lstsq(design, values, rcond=None)
    if rank < basis.p:
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
        raise SingularFitError(
            f"rank-deficient design (rank {rank} < p {basis.p})", condition=cond
        )
    return coef


def evaluate_curve(coeffs, basis: BasisSystem, times) -> np.ndarray:
    """Pointwise curve values a^T B(t) on a time grid."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.p,):
        raise InvalidParameterError(
            f"coefficient length {coeffs.shape} != p {basis.p}"
        )
    return basis_matrix(basis, times) @ coeffs


def _panel_quadrature(breaks: np.ndarray):
    """Gauss-Legendre nodes/weights (7 per panel) over consecutive breaks."""
    lo = breaks[:-1]
    hi = breaks[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return nodes, weights


def quadrature_rule(*bases: BasisSystem):
    """Shared quadrature over the union of the bases' breakpoints."""
    breaks = np.unique(np.concatenate([b.quadrature_breaks() for b in bases]))
    return _panel_quadrature(breaks)


def gram_matrix(basis: BasisSystem) -> np.ndarray:
    """Exact matrix of pairwise basis-product integrals over the domain."""
    if basis.kind == "fourier":
        return np.eye(basis.p)
    nodes, weights = _panel_quadrature(basis.quadrature_breaks())
    bm = basis_matrix(basis, nodes)
    g = (bm * weights[:, None]).T @ bm
    return 0.5 * (g + g.T)
