"""Cross-correlation formula, peak-lag distributions, and the case study."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sttraverse.analysis import (
    CaseStudyResult,
    case_study,
    cross_correlation,
    peak_lag_distribution,
    write_curve_csv,
    write_heatmap,
    write_histogram_csv,
)
from sttraverse.data import SynthSpec, generate
from sttraverse.errors import ConfigError, DataError
from sttraverse.graph import from_edge_list
from sttraverse.model import ModelConfig, init_params
from sttraverse.training import SeriesDataset

from oracles import xcorr_literal


class TestCrossCorrelation:
    def test_self_correlation_at_zero_lag(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(100)
        curve = cross_correlation(x, x, 5)
        assert curve.coefficients[0] == pytest.approx(1.0, abs=1e-12)

    def test_exact_shift_peaks_with_coefficient_one(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(120)
        y = np.roll(x, 3)
        y[:3] = x[:3]   # keep length; head values never enter lag-3 overlap
        curve = cross_correlation(x, y, 8)
        assert curve.peak_lag == 3
        assert curve.coefficients[3] == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(0, 200))
    @settings(max_examples=30, deadline=None)
    def test_matches_literal_formula_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(60)
        y = rng.standard_normal(60)
        curve = cross_correlation(x, y, 10)
        for k in range(11):
            assert curve.coefficients[k] == pytest.approx(xcorr_literal(x, y, k),
                                                          abs=1e-12)

    @given(st.integers(0, 100))
    @settings(max_examples=30, deadline=None)
    def test_bounded_by_one(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(50) * rng.uniform(0.1, 10)
        y = rng.standard_normal(50) * rng.uniform(0.1, 10)
        curve = cross_correlation(x, y, 12)
        assert np.all(np.abs(curve.coefficients) <= 1.0 + 1e-9)

    def test_positive_scale_invariance_literal_mode(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(80)
        y = rng.standard_normal(80)
        base = cross_correlation(x, y, 10).coefficients
        scaled = cross_correlation(2.5 * x, 0.3 * y, 10).coefficients
        np.testing.assert_allclose(base, scaled, atol=1e-9)

    def test_affine_invariance_overlap_normalized_mode(self):
        # the full-length normalization is intentionally not shift-invariant
        # for k > 0; the overlap-normalized variant is plain Pearson and is
        rng = np.random.default_rng(6)
        x = rng.standard_normal(80)
        y = rng.standard_normal(80)
        base = cross_correlation(x, y, 10, overlap_normalized=True).coefficients
        moved = cross_correlation(2.0 * x + 5.0, 0.5 * y - 3.0, 10,
                                  overlap_normalized=True).coefficients
        np.testing.assert_allclose(base, moved, atol=1e-9)

    def test_constant_series_degenerate_flag(self):
        curve = cross_correlation(np.full(50, 3.0), np.arange(50.0), 4)
        assert curve.degenerate[0]
        assert curve.coefficients[0] == 0.0

    def test_too_short_rejected(self):
        with pytest.raises(DataError, match="too short"):
            cross_correlation(np.arange(10.0), np.arange(10.0), 9)


class TestPeakLagDistribution:
    def test_injected_lag_recovered(self):
        spec = SynthSpec(n_nodes=8, length=800,
                         edges=[(i, (i + 1) % 8, 4, 0.55) for i in range(8)],
                         persistence=0.2, season_period=24.0, season_amp=0.1,
                         noise=0.3, seed=3)
        raw, graph, _ = generate(spec)
        report = peak_lag_distribution(graph, raw.values, k_max=10)
        assert report.proportions[4] >= 0.9

    def test_single_pair_point_mass(self):
        spec = SynthSpec(n_nodes=2, length=400, edges=[(0, 1, 3, 0.6)],
                         persistence=0.1, season_period=24.0, season_amp=0.0,
                         noise=0.3, seed=4)
        raw, graph, _ = generate(spec)
        report = peak_lag_distribution(graph, raw.values, k_max=8)
        assert report.n_pairs == 1
        assert report.proportions.sum() == pytest.approx(1.0)
        assert report.proportions.max() == 1.0

    def test_connected_dominates_far_on_synthetic(self):
        # long path graph so far pairs (> 9 hops) exist
        n = 14
        spec = SynthSpec(n_nodes=n, length=900,
                         edges=[(i, i + 1, 2, 0.5) for i in range(n - 1)],
                         persistence=0.2, season_period=24.0, season_amp=0.0,
                         noise=0.3, seed=5)
        raw, graph, _ = generate(spec)
        connected = peak_lag_distribution(graph, raw.values, k_max=6, pair_source="connected")
        far = peak_lag_distribution(graph, raw.values, k_max=6, pair_source="far")
        assert far.n_pairs > 0
        assert np.all(connected.curves_mean >= far.curves_mean)

    def test_no_far_pairs_empty_report(self):
        spec = SynthSpec(n_nodes=3, length=300, edges=[(0, 1, 1, 0.4), (1, 2, 1, 0.4)],
                         persistence=0.2, season_period=12.0, season_amp=0.2,
                         noise=0.3, seed=6)
        raw, graph, _ = generate(spec)
        report = peak_lag_distribution(graph, raw.values, k_max=5, pair_source="far")
        assert report.empty
        assert report.proportions.sum() == 0.0

    def test_proportions_sum_to_one(self):
        spec = SynthSpec(n_nodes=5, length=500,
                         edges=[(0, 1, 2, 0.3), (1, 2, 3, 0.3), (2, 3, 1, 0.3),
                                (3, 4, 2, 0.3)],
                         persistence=0.2, season_period=24.0, season_amp=0.1,
                         noise=0.3, seed=7)
        raw, graph, _ = generate(spec)
        report = peak_lag_distribution(graph, raw.values, k_max=8)
        assert report.proportions.sum() == pytest.approx(1.0, abs=1e-12)

    def test_bad_pair_source(self):
        g = from_edge_list(2, [(0, 1)])
        with pytest.raises(ConfigError):
            peak_lag_distribution(g, np.zeros((2, 1, 50)), 4, pair_source="nearby")


@pytest.fixture(scope="module")
def setup():
    spec = SynthSpec(n_nodes=4, length=400,
                     edges=[(0, 1, 3, 0.6), (1, 2, 1, 0.2), (2, 3, 1, 0.2)],
                     persistence=0.1, season_period=24.0, season_amp=0.2,
                     noise=0.3, seed=8)
    raw, graph, _ = generate(spec)
    cfg = ModelConfig(n_nodes=4, input_dim=1, n_layers=2, hidden=8, window=5,
                      input_len=10, horizon=4, dropout=0.0, seed=1)
    params = init_params(cfg)
    dataset = SeriesDataset.build(raw.values, 10, 4)
    return params, dataset, graph


class TestCaseStudy:

    def test_heatmap_shape_and_columns(self, setup):
        params, dataset, graph = setup
        result = case_study(params, dataset, graph, (0, 1), k_max=8)
        assert result.heatmap.shape == (6, 10)   # window+1 x input_len
        # clamped region: lag m > t has no mass
        for t in range(10):
            np.testing.assert_array_equal(result.heatmap[t + 1:, t],
                                          np.zeros(max(0, 5 - t)))
        # each full column's mass equals the column count share (weights sum to 1
        # over each segment, aggregated over windows)
        sums = result.heatmap.sum(axis=0)
        np.testing.assert_allclose(sums, np.ones(10), atol=1e-9)

    def test_xcorr_peak_matches_injected_lag(self, setup):
        params, dataset, graph = setup
        result = case_study(params, dataset, graph, (0, 1), k_max=8)
        assert result.curve.peak_lag == 3

    def test_uniform_ablation_flat_heatmap(self):
        spec = SynthSpec(n_nodes=3, length=300, edges=[(0, 1, 2, 0.5), (1, 2, 1, 0.2)],
                         persistence=0.1, season_period=24.0, season_amp=0.2,
                         noise=0.3, seed=9)
        raw, graph, _ = generate(spec)
        cfg = ModelConfig(n_nodes=3, input_dim=1, n_layers=1, hidden=6, window=4,
                          input_len=8, horizon=3, dropout=0.0, seed=2,
                          ablation="no_attention")
        params = init_params(cfg)
        dataset = SeriesDataset.build(raw.values, 8, 3)
        result = case_study(params, dataset, graph, (0, 1), k_max=6)
        for t in range(8):
            window = min(4, t) + 1
            np.testing.assert_allclose(result.heatmap[:window, t],
                                       np.full(window, 1.0 / window), atol=1e-12)

    def test_non_edge_pair_rejected(self, setup):
        params, dataset, graph = setup
        with pytest.raises(ConfigError, match="not a directed edge"):
            case_study(params, dataset, graph, (3, 0))

    def test_series_dump_matches_raw(self, setup):
        params, dataset, graph = setup
        result = case_study(params, dataset, graph, (0, 1), k_max=8)
        np.testing.assert_array_equal(result.source_series, dataset.raw[0, 0])
        np.testing.assert_array_equal(result.target_series, dataset.raw[1, 0])


class TestWriters:
    def test_curve_csv(self, tmp_path):
        curve = cross_correlation(np.sin(np.arange(50.0)), np.cos(np.arange(50.0)), 4)
        path = tmp_path / "curve.csv"
        write_curve_csv(path, curve)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "lag,value"
        assert len(lines) == 6

    def test_heatmap_format(self, tmp_path):
        path = tmp_path / "heatmap.txt"
        write_heatmap(path, np.arange(6.0).reshape(2, 3))
        lines = path.read_text().splitlines()
        assert lines[0] == "rows=source_lags cols=target_steps"
        grid = np.loadtxt(path, skiprows=1)
        np.testing.assert_array_equal(grid, np.arange(6.0).reshape(2, 3))
