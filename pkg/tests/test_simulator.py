"""Case catalog, Gaussian field simulation, and Monte-Carlo moment checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krigebench.dataset import flatten_observations
from krigebench.simulator import (
    apply_time_trend,
    base_case,
    case_catalog,
    grid_layout,
    nonseparable_cov,
    replace_size_trend,
    simulate_case,
    spatial_cov,
    temporal_cov,
    time_trend,
)


class TestCaseCatalog:
    def test_case_3_parameters(self):
        cfg = base_case(3)
        assert cfg.scenario == "separable"
        assert cfg.alpha == 0.1
        assert cfg.beta == 10.0

    def test_case_21_parameters(self):
        cfg = base_case(21)
        assert cfg.scenario == "non_stationary"
        assert cfg.p == 7
        assert cfg.alpha == 2.0

    def test_case_22_parameters(self):
        cfg = base_case(22)
        assert cfg.scenario == "non_stationary"
        assert cfg.p == 15
        assert cfg.alpha == 0.1

    def test_full_grid_coverage(self):
        cat = case_catalog()
        ids = sorted({c.case_id for c in cat})
        assert ids == list(range(1, 25))
        sep = [(c.alpha, c.beta) for c in cat
               if c.scenario == "separable" and c.size == "small"
               and not c.trend]
        assert sorted(set(sep)) == [(a, b) for a in (0.1, 0.5, 2.0)
                                    for b in (0.1, 1.0, 10.0)]

    def test_trend_variants_only_for_stationary(self):
        cat = case_catalog()
        assert all(not c.trend for c in cat if c.scenario == "non_stationary")
        assert any(c.trend for c in cat if c.case_id == 1)

    def test_sizes(self):
        small = replace_size_trend(base_case(1), "small", False)
        _, coords, t = grid_layout(small)
        assert coords.shape == (36, 2)
        assert t.shape == (12,)
        large = replace_size_trend(base_case(1), "large", False)
        _, coords, t = grid_layout(large)
        assert coords.shape == (225, 2)
        assert t.shape == (50,)


class TestClosedFormCovariances:
    def test_spatial_origin_and_nugget(self):
        assert spatial_cov(np.array([0.0]), alpha=0.5)[0] == pytest.approx(1.0)
        # discontinuity: just off the origin the nugget is gone
        assert spatial_cov(np.array([1e-12]), alpha=0.5)[0] == pytest.approx(
            0.96, abs=1e-9)

    def test_temporal_stretched_exponential(self):
        u = np.array([2.0])
        assert temporal_cov(u, beta=0.5)[0] == pytest.approx(np.exp(-1.0))

    def test_nonseparable_origin_is_one(self):
        assert nonseparable_cov(np.array([0.0]), np.array([0.0]),
                                alpha=0.5, beta=1.0)[0] == pytest.approx(1.0)

    def test_nonseparable_long_time_limit(self):
        # when the temporal part decays away: (1 - nu) / (2 - 0) at h = 0+
        got = nonseparable_cov(np.array([1e-12]), np.array([1e12]),
                               alpha=0.5, beta=1.0)[0]
        assert got == pytest.approx(0.48, abs=1e-6)


class TestDeterminism:
    def test_same_seed_bitwise_identical(self):
        cfg = replace_size_trend(base_case(5), "small", False)
        a = simulate_case(cfg, 123, replicate=2)
        b = simulate_case(cfg, 123, replicate=2)
        for va, vb in zip(a.values, b.values):
            np.testing.assert_array_equal(va, vb)

    def test_replicates_differ(self):
        cfg = replace_size_trend(base_case(5), "small", False)
        a = simulate_case(cfg, 123, replicate=0)
        b = simulate_case(cfg, 123, replicate=1)
        assert not np.array_equal(a.values[0], b.values[0])

    def test_scenarios_give_valid_datasets(self):
        for cid in (2, 11, 20):
            cfg = replace_size_trend(base_case(cid), "small", False)
            ds = simulate_case(cfg, 77)
            assert len(ds.site_ids) == 36
            assert all(np.all(np.isfinite(v)) for v in ds.values)


class TestTimeTrend:
    def test_formula(self):
        t = np.array([0.0, 0.25, 0.5])
        np.testing.assert_allclose(time_trend(t), [9.0, 12.0, 9.0], atol=1e-12)

    def test_zero_field_gets_exact_trend(self):
        cfg = replace_size_trend(base_case(1), "small", False)
        ds = simulate_case(cfg, 5)
        zero = ds.__class__(site_ids=ds.site_ids, coords=ds.coords,
                            times=ds.times,
                            values=[np.zeros_like(v) for v in ds.values])
        shifted = apply_time_trend(zero, time_trend)
        for t, v in zip(shifted.times, shifted.values):
            np.testing.assert_array_equal(v, time_trend(t))

    def test_add_subtract_round_trip(self):
        cfg = replace_size_trend(base_case(1), "small", False)
        ds = simulate_case(cfg, 5)
        back = apply_time_trend(apply_time_trend(ds, time_trend),
                                lambda t: -time_trend(t))
        for va, vb in zip(ds.values, back.values):
            np.testing.assert_allclose(va, vb, atol=1e-12)

    def test_trend_flag_mean_at_quarter_period(self):
        # m(0.25) = 9 + 3 sin(pi/2) = 12
        cfg = replace_size_trend(base_case(1), "small", True)
        k = 3  # time grid index with t = 3/11 closest to 0.25
        sims = [simulate_case(cfg, 5, replicate=r) for r in range(200)]
        t = sims[0].times[0][k]
        samples = np.array([ds.values[10][k] for ds in sims])
        se = samples.std(ddof=1) / np.sqrt(len(sims))
        assert samples.mean() == pytest.approx(time_trend(np.array([t]))[0],
                                               abs=4 * se)


class TestMonteCarloMoments:
    """Sample-moment checks against the closed-form covariances.

    Replicate counts are kept modest here; the acceptance suite runs the
    500-replicate versions.
    """

    N_REP = 200

    def _replicates(self, cid, seed=900, **kw):
        cfg = replace_size_trend(base_case(cid), "small", False)
        return [simulate_case(cfg, seed, replicate=r, **kw)
                for r in range(self.N_REP)]

    def test_separable_unit_variance(self):
        sims = self._replicates(1)
        samples = np.array([ds.values[7][3] for ds in sims])
        se = np.sqrt(2.0 / self.N_REP)  # var of sample variance of N(0,1)
        assert samples.var(ddof=1) == pytest.approx(1.0, abs=4 * se)

    def test_separable_lagged_covariance(self):
        sims = self._replicates(2)  # alpha=0.1, beta=1
        cfg = replace_size_trend(base_case(2), "small", False)
        _, coords, t = grid_layout(cfg)
        i, j, k, l = 0, 1, 0, 3
        h = np.linalg.norm(coords[i] - coords[j])
        u = abs(t[k] - t[l])
        want = spatial_cov(np.array([h]), 0.1)[0] * temporal_cov(
            np.array([u]), 1.0)[0]
        prods = np.array([ds.values[i][k] * ds.values[j][l] for ds in sims])
        se = prods.std(ddof=1) / np.sqrt(self.N_REP)
        assert prods.mean() == pytest.approx(want, abs=4 * se + 1e-9)

    def test_nonseparable_lagged_covariance(self):
        sims = self._replicates(11)
        cfg = replace_size_trend(base_case(11), "small", False)
        _, coords, t = grid_layout(cfg)
        i, j, k, l = 0, 2, 1, 4
        h = np.linalg.norm(coords[i] - coords[j])
        u = abs(t[k] - t[l])
        want = nonseparable_cov(np.array([h]), np.array([u]),
                                cfg.alpha, cfg.beta)[0]
        prods = np.array([ds.values[i][k] * ds.values[j][l] for ds in sims])
        se = prods.std(ddof=1) / np.sqrt(self.N_REP)
        assert prods.mean() == pytest.approx(want, abs=4 * se + 1e-9)

    def test_nonstationary_noise_mean_literal(self):
        sims = self._replicates(19)
        samples = np.array([ds.values[5][2] for ds in sims])
        se = samples.std(ddof=1) / np.sqrt(self.N_REP)
        assert samples.mean() == pytest.approx(0.04, abs=4 * se)

    def test_nonstationary_noise_mean_zero_toggle(self):
        sims = self._replicates(19, noise_mean_zero_nugget=True)
        samples = np.array([ds.values[5][2] for ds in sims])
        se = samples.std(ddof=1) / np.sqrt(self.N_REP)
        assert samples.mean() == pytest.approx(0.0, abs=4 * se)


@given(cid=st.integers(min_value=1, max_value=24),
       seed=st.integers(min_value=0, max_value=2**31))
@settings(max_examples=15, deadline=None)
def test_simulation_determinism_property(cid, seed):
    cfg = replace_size_trend(base_case(cid), "small", False)
    a = simulate_case(cfg, seed)
    b = simulate_case(cfg, seed)
    _, _, va, _ = flatten_observations(a)
    _, _, vb, _ = flatten_observations(b)
    np.testing.assert_array_equal(va, vb)
