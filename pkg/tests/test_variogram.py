"""Parametric semivariogram families, empirical estimators, and OLS fitting."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krigebench.basis import (
    basis_matrix,
    fit_coefficients,
    gram_matrix,
    make_bspline_basis,
    make_fourier_basis,
)
from krigebench.errors import (
    EmptyVariogramError,
    InsufficientDataError,
    InvalidLagError,
    InvalidParameterError,
)
from krigebench.variogram import (
    EmpiricalVariogram,
    StVariogramModel,
    VariogramModel,
    empirical_st_semivariogram,
    empirical_trace_semivariogram,
    fit_ols,
    fit_st_ols,
    model_covariance,
    model_semivariance,
    st_model_covariance,
    st_model_semivariance,
)

EXP_SPATIAL = VariogramModel("exponential", nugget=0.04, partial_sill=0.96,
                             range_=10.0)


class TestModelSemivariance:
    def test_zero_lag_is_zero(self):
        for m in (EXP_SPATIAL,
                  VariogramModel("spherical", 0.1, 0.9, 2.0),
                  VariogramModel("stable", 0.0, 1.0, 1.0, shape=0.5)):
            assert model_semivariance(m, 0.0) == 0.0

    def test_spherical_reaches_sill_at_range(self):
        m = VariogramModel("spherical", 0.0, 1.0, 2.0)
        assert model_semivariance(m, 2.0) == pytest.approx(1.0, abs=1e-14)
        assert model_semivariance(m, 5.0) == pytest.approx(1.0, abs=1e-14)

    def test_exponential_closed_form(self):
        # decay rate 0.1, so range parameter 10; at lag 10: 1 - 0.96 e^{-1}
        got = model_semivariance(EXP_SPATIAL, 10.0)
        assert got == pytest.approx(1.0 - 0.96 * np.exp(-1.0), abs=1e-6)

    def test_negative_lag_rejected(self):
        with pytest.raises(InvalidLagError):
            model_semivariance(EXP_SPATIAL, -0.5)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(InvalidParameterError):
            VariogramModel("exponential", nugget=-0.1, partial_sill=1.0,
                           range_=1.0)
        with pytest.raises(InvalidParameterError):
            VariogramModel("stable", 0.0, 1.0, 1.0, shape=2.5)


class TestModelCovariance:
    def test_zero_lag_gives_total_sill(self):
        assert model_covariance(EXP_SPATIAL, 0.0) == pytest.approx(1.0)

    def test_effective_range_structured_correlation(self):
        # structured part falls to 0.05 at three times the range parameter
        h_eff = 3.0 * np.log(20.0) / np.log(20.0) * 10.0 * np.log(20.0) / 3.0
        # effective range for decay 0.1 is ln(20)/0.1 = 29.96
        h_eff = np.log(20.0) / 0.1
        assert h_eff == pytest.approx(29.96, abs=0.01)
        assert model_covariance(EXP_SPATIAL, h_eff) == pytest.approx(
            0.96 * 0.05, abs=1e-4)

    def test_stable_temporal_effective_range(self):
        m = VariogramModel("stable", nugget=0.0, partial_sill=1.0,
                           range_=10.0, shape=0.5)
        assert model_covariance(m, 89.74) == pytest.approx(0.05, abs=1e-3)

    def test_covariance_plus_semivariance_is_sill(self):
        for h in (0.1, 1.0, 7.3):
            total = model_covariance(EXP_SPATIAL, h) + model_semivariance(
                EXP_SPATIAL, h)
            assert total == EXP_SPATIAL.nugget + EXP_SPATIAL.partial_sill


def _separable(sa=0.5, ta=0.3):
    return StVariogramModel(
        "separable",
        spatial=VariogramModel("exponential", 0.0, 1.0, sa),
        temporal=VariogramModel("exponential", 0.0, 1.0, ta),
    )


class TestStModelCovariance:
    def test_separable_origin_is_product(self):
        m = _separable()
        got = st_model_covariance(m, 0.0, 0.0)
        want = model_covariance(m.spatial, 0.0) * model_covariance(m.temporal, 0.0)
        assert got == pytest.approx(want)

    def test_metric_three_four_five(self):
        joint = VariogramModel("exponential", 0.0, 1.0, 2.0)
        m = StVariogramModel("metric", joint=joint, kappa=1.0)
        assert st_model_covariance(m, 3.0, 4.0) == pytest.approx(
            model_covariance(joint, 5.0))

    def test_product_sum_arithmetic(self):
        # choose lags where C_s = 0.5 and C_t = 0.25
        cs = VariogramModel("exponential", 0.0, 1.0, 1.0)
        ct = VariogramModel("exponential", 0.0, 1.0, 1.0)
        h = -np.log(0.5)
        u = -np.log(0.25)
        m = StVariogramModel("product_sum", spatial=cs, temporal=ct, k=2.0)
        assert st_model_covariance(m, h, u) == pytest.approx(1.0, abs=1e-12)

    def test_separable_u0_reduces_to_spatial_shape(self):
        m = _separable()
        ct0 = model_covariance(m.temporal, 0.0)
        for h in (0.0, 0.2, 0.9):
            assert st_model_covariance(m, h, 0.0) == model_covariance(
                m.spatial, h) * ct0


class TestEmpiricalTraceSemivariogram:
    def test_identical_curves_give_zero(self):
        basis = make_bspline_basis(5, (0.0, 1.0))
        coords = np.array([[0.0, 0.0], [1.0, 0.0]])
        coefs = np.ones((2, 5))
        emp = empirical_trace_semivariogram(coords, coefs, gram_matrix(basis),
                                            n_bins=1, max_dist=2.0)
        assert emp.gamma.shape == (1,)
        assert emp.gamma[0] == pytest.approx(0.0, abs=1e-15)

    def test_constant_curves_zero_and_two(self):
        # gamma-hat = (1/2) * integral of (2-0)^2 dt = 2 on [0,1]
        basis = make_bspline_basis(4, (0.0, 1.0))
        t = np.linspace(0, 1, 20)
        a0 = fit_coefficients(basis, t, np.zeros(20))
        a2 = fit_coefficients(basis, t, np.full(20, 2.0))
        emp = empirical_trace_semivariogram(
            np.array([[0.0, 0.0], [1.0, 0.0]]), np.vstack([a0, a2]),
            gram_matrix(basis), n_bins=1, max_dist=2.0)
        assert emp.gamma[0] == pytest.approx(2.0, abs=1e-10)

    def test_pair_count_conservation(self):
        rng = np.random.default_rng(3)
        n = 7
        coords = rng.uniform(size=(n, 2))
        coefs = rng.normal(size=(n, 4))
        basis = make_bspline_basis(4, (0.0, 1.0))
        emp = empirical_trace_semivariogram(coords, coefs, gram_matrix(basis),
                                            n_bins=15, max_dist=np.sqrt(2) + 1)
        assert emp.counts.sum() == n * (n - 1) // 2

    def test_single_site_rejected(self):
        basis = make_bspline_basis(4, (0.0, 1.0))
        with pytest.raises(InsufficientDataError):
            empirical_trace_semivariogram(np.array([[0.0, 0.0]]),
                                          np.ones((1, 4)),
                                          gram_matrix(basis))

    def test_all_bins_empty_rejected(self):
        basis = make_bspline_basis(4, (0.0, 1.0))
        coords = np.array([[0.0, 0.0], [5.0, 0.0]])
        with pytest.raises(EmptyVariogramError):
            empirical_trace_semivariogram(coords, np.ones((2, 4)),
                                          gram_matrix(basis),
                                          n_bins=3, max_dist=1.0)


class TestEmpiricalStSemivariogram:
    def test_constant_field_all_zero(self):
        coords = np.repeat(np.array([[0.0, 0.0], [1.0, 0.0]]), 3, axis=0)
        times = np.tile(np.array([0.0, 0.5, 1.0]), 2)
        emp = empirical_st_semivariogram(coords, times, np.full(6, 3.0))
        np.testing.assert_allclose(emp.gamma, 0.0, atol=1e-15)

    def test_two_sites_one_time(self):
        coords = np.array([[0.0, 0.0], [1.0, 0.0]])
        times = np.array([0.0, 0.0])
        emp = empirical_st_semivariogram(coords, times, np.array([0.0, 4.0]),
                                         space_bins=3, time_bins=3,
                                         max_h=2.0, max_u=1.0)
        # single pair at spatial lag 1, temporal lag 0: (1/2) * 16 = 8
        assert emp.gamma.max() == pytest.approx(8.0)

    def test_deterministic_ramp(self):
        # Z(s, t) = t so squared increments depend only on the time lag
        coords = np.repeat(np.array([[0.0, 0.0]]), 5, axis=0)
        times = np.linspace(0, 1, 5)
        emp = empirical_st_semivariogram(coords, times, times.copy(),
                                         space_bins=1, time_bins=4,
                                         max_h=1.0, max_u=1.1)
        for u, g in zip(emp.u, emp.gamma):
            if g > 0:
                # bins mixing several exact lags average their u^2/2 values
                assert g <= max(emp.u) ** 2 / 2 + 1e-12
        zero_u = emp.gamma[np.isclose(emp.u, emp.u.min())]
        assert zero_u.min() >= 0


class TestFitOls:
    def test_exponential_noise_free_recovery(self):
        h = np.linspace(0.5, 15.0, 15)
        truth = VariogramModel("exponential", 0.04, 0.96, 10.0)
        emp = EmpiricalVariogram(h=h,
                                 gamma=np.array([model_semivariance(truth, x)
                                                 for x in h]),
                                 counts=np.ones(15, dtype=int))
        fit = fit_ols(emp, "exponential")
        assert fit.objective < 1e-12
        assert fit.model.nugget == pytest.approx(0.04, abs=1e-4)
        assert fit.model.partial_sill == pytest.approx(0.96, abs=1e-4)
        assert fit.model.range_ == pytest.approx(10.0, abs=1e-3)

    def test_flat_target_collapses_to_nugget_like_fit(self):
        h = np.linspace(0.2, 3.0, 10)
        emp = EmpiricalVariogram(h=h, gamma=np.full(10, 1.7),
                                 counts=np.ones(10, dtype=int))
        fit = fit_ols(emp, "spherical")
        sill = fit.model.nugget + fit.model.partial_sill
        assert sill == pytest.approx(1.7, abs=1e-3)
        assert "near-zero-range" in fit.flags or fit.model.range_ <= h[0]

    def test_stable_shape_recovery(self):
        h = np.linspace(0.3, 8.0, 15)
        truth = VariogramModel("stable", 0.0, 1.0, 2.0, shape=0.5)
        emp = EmpiricalVariogram(h=h,
                                 gamma=np.array([model_semivariance(truth, x)
                                                 for x in h]),
                                 counts=np.ones(15, dtype=int))
        fit = fit_ols(emp, "stable")
        assert fit.model.shape == pytest.approx(0.5, abs=1e-3)

    def test_too_few_bins_rejected(self):
        emp = EmpiricalVariogram(h=np.array([0.5, 1.0]),
                                 gamma=np.array([0.3, 0.5]),
                                 counts=np.ones(2, dtype=int))
        with pytest.raises(InsufficientDataError):
            fit_ols(emp, "exponential")

    def test_fit_serializes_to_json(self):
        h = np.linspace(0.5, 5.0, 8)
        truth = VariogramModel("exponential", 0.1, 0.9, 2.0)
        emp = EmpiricalVariogram(h=h,
                                 gamma=np.array([model_semivariance(truth, x)
                                                 for x in h]),
                                 counts=np.ones(8, dtype=int))
        fit = fit_ols(emp, "exponential")
        rec = json.loads(json.dumps(fit.to_json()))
        assert rec["model"]["family"] == "exponential"
        assert rec["converged"] is True


class TestFitStOls:
    def test_separable_noise_free_recovery(self):
        truth = _separable(sa=0.5, ta=0.3)
        h = np.repeat(np.linspace(0.0, 1.2, 7), 6)
        u = np.tile(np.linspace(0.0, 1.0, 6), 7)
        gamma = np.array([st_model_semivariance(truth, hh, uu)
                          for hh, uu in zip(h, u)])
        emp = EmpiricalVariogram(h=h, gamma=gamma,
                                 counts=np.ones(h.size, dtype=int), u=u)
        fit = fit_st_ols(emp, "separable")
        resid = max(abs(st_model_semivariance(fit.model, hh, uu) - g)
                    for hh, uu, g in zip(h, u, gamma))
        assert resid < 1e-3


@st.composite
def variogram_models(draw):
    family = draw(st.sampled_from(["exponential", "spherical", "stable"]))
    nugget = draw(st.floats(min_value=0.0, max_value=0.5))
    psill = draw(st.floats(min_value=0.05, max_value=3.0))
    range_ = draw(st.floats(min_value=0.05, max_value=20.0))
    shape = draw(st.floats(min_value=0.1, max_value=2.0))
    return VariogramModel(family, nugget, psill, range_, shape=shape)


@given(variogram_models())
@settings(max_examples=80, deadline=None)
def test_semivariance_monotone_and_bounded(m):
    h = np.linspace(0, 30 * m.range_, 1000)
    g = model_semivariance(m, h)
    assert g[0] == 0.0
    assert np.all(np.diff(g) >= -1e-12)
    assert np.all(g <= m.nugget + m.partial_sill + 1e-9)


@given(variogram_models(), st.floats(min_value=1e-9, max_value=50.0))
@settings(max_examples=80, deadline=None)
def test_covariance_semivariance_complementarity(m, h):
    total = model_covariance(m, h) + model_semivariance(m, h)
    assert total == pytest.approx(m.nugget + m.partial_sill, rel=1e-12)


@given(n=st.integers(min_value=2, max_value=8),
       p=st.integers(min_value=4, max_value=12),
       seed=st.integers(min_value=0, max_value=2**31),
       fourier=st.booleans())
@settings(max_examples=25, deadline=None)
def test_trace_semivariogram_matches_brute_force_quadrature(n, p, seed, fourier):
    rng = np.random.default_rng(seed)
    if fourier:
        p = p - (1 - p % 2)
        basis = make_fourier_basis(p, (0.0, 1.0))
    else:
        basis = make_bspline_basis(p, (0.0, 1.0))
    coords = rng.uniform(size=(n, 2))
    coefs = rng.normal(size=(n, p))
    gram = gram_matrix(basis)
    emp = empirical_trace_semivariogram(coords, coefs, gram, n_bins=5,
                                        max_dist=2.0)

    tgrid = np.linspace(0, 1, 2001)
    bmat = basis_matrix(basis, tgrid)
    curves = coefs @ bmat.T
    dist = np.linalg.norm(coords[:, None] - coords[None], axis=2)
    edges = np.linspace(0, 2.0, 6)
    for center, got in zip(emp.h, emp.gamma):
        total, count = 0.0, 0
        for i in range(n):
            for j in range(i + 1, n):
                b = min(np.searchsorted(edges, dist[i, j], side="right") - 1, 4)
                if np.isclose(0.5 * (edges[b] + edges[b + 1]), center):
                    total += np.trapezoid((curves[i] - curves[j]) ** 2, tgrid)
                    count += 1
        if count:
            assert got == pytest.approx(total / (2 * count), rel=1e-6)
