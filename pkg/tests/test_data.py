"""CSV ingestion contracts and the synthetic generator."""

import numpy as np
import pytest

from sttraverse.analysis import cross_correlation
from sttraverse.data import (
    RawDataset,
    SynthSpec,
    generate,
    load_series_csv,
    load_synth_spec,
    save_series_csv,
    write_lag_table,
    write_synth_spec,
)
from sttraverse.errors import ConfigError, DataError


class TestWideCsv:
    def test_roundtrip_exact(self, tmp_path):
        path = tmp_path / "series.csv"
        path.write_text(
            "time,n0_f0,n1_f0\n"
            "0,1.5,2.5\n"
            "1,-0.25,3\n"
            "2,0,4.125\n")
        ds = load_series_csv(path)
        expected = np.array([[[1.5, -0.25, 0.0]], [[2.5, 3.0, 4.125]]])
        np.testing.assert_array_equal(ds.values, expected)

    def test_save_load_save_byte_stable(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = RawDataset(values=rng.standard_normal((3, 2, 7)))
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        save_series_csv(p1, ds)
        loaded = load_series_csv(p1)
        np.testing.assert_array_equal(loaded.values, ds.values)
        save_series_csv(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,n0_f0,n1_f0\n0,1,2\n1,3\n")
        with pytest.raises(DataError, match="bad.csv:3.*ragged"):
            load_series_csv(path)

    def test_nan_cell_strict_names_location(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("time,n0_f0,n1_f0\n0,1,2\n1,nan,4\n")
        with pytest.raises(DataError, match="gap.csv:3.*n0_f0"):
            load_series_csv(path)

    def test_forward_fill(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("time,n0_f0\n0,1\n1,\n2,3\n")
        ds = load_series_csv(path, missing="ffill")
        np.testing.assert_array_equal(ds.values.reshape(-1), [1.0, 1.0, 3.0])

    def test_leading_gap_rejected_even_with_ffill(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("time,n0_f0\n0,\n1,2\n")
        with pytest.raises(DataError):
            load_series_csv(path, missing="ffill")

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,n0_f0\n0,apple\n")
        with pytest.raises(DataError, match="non-numeric"):
            load_series_csv(path)


class TestLongCsv:
    def test_long_equals_wide(self, tmp_path):
        wide = tmp_path / "wide.csv"
        wide.write_text(
            "time,n0_speed,n0_flow,n1_speed,n1_flow\n"
            "0,1,2,3,4\n"
            "1,5,6,7,8\n")
        rows = ["time,node,feature,value"]
        for t in range(2):
            for n in range(2):
                for f, name in enumerate(("speed", "flow")):
                    value = 1 + f + 2 * n + 4 * t
                    rows.append(f"{t},{n},{name},{value}")
        long = tmp_path / "long.csv"
        long.write_text("\n".join(rows) + "\n")
        a = load_series_csv(wide)
        b = load_series_csv(long)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.feature_names == b.feature_names

    def test_missing_cell_rejected(self, tmp_path):
        path = tmp_path / "long.csv"
        path.write_text("time,node,feature,value\n0,0,f0,1\n1,0,f0,2\n"
                        "0,1,f0,5\n")   # node 1 missing at t=1
        with pytest.raises(DataError, match="time=1 node=1"):
            load_series_csv(path)


class TestGenerator:
    def test_all_zero_without_drivers(self):
        spec = SynthSpec(n_nodes=3, length=50, edges=[], persistence=0.0,
                         season_period=24.0, season_amp=0.0, noise=0.0, seed=0)
        raw, graph, table = generate(spec)
        np.testing.assert_array_equal(raw.values, np.zeros((3, 1, 50)))
        assert table == []

    def test_single_edge_lag_recovered_by_xcorr(self):
        spec = SynthSpec(n_nodes=2, length=600, edges=[(0, 1, 3, 0.7)],
                         persistence=0.1, season_period=24.0, season_amp=0.0,
                         noise=0.4, seed=1)
        raw, graph, _ = generate(spec)
        curve = cross_correlation(raw.values[0, 0], raw.values[1, 0], 8)
        assert curve.peak_lag == 3

    def test_determinism_and_seed_sensitivity(self):
        spec = SynthSpec(n_nodes=3, length=100, edges=[(0, 1, 2, 0.4)],
                         persistence=0.2, season_period=12.0, season_amp=0.3,
                         noise=0.2, seed=5)
        a, _, ta = generate(spec)
        b, _, tb = generate(spec)
        np.testing.assert_array_equal(a.values, b.values)
        assert ta == tb
        c, _, tc = generate(SynthSpec(**{**spec.__dict__, "seed": 6}))
        assert not np.array_equal(a.values, c.values)
        assert tc == ta   # lag table independent of the seed

    def test_stability_guard(self):
        spec = SynthSpec(n_nodes=2, length=50, edges=[(0, 1, 1, 0.8)],
                         persistence=0.3, season_period=12.0, season_amp=0.1,
                         noise=0.1, seed=0)
        with pytest.raises(ConfigError, match="unstable"):
            spec.validate()

    def test_warmup_discarded_length(self):
        spec = SynthSpec(n_nodes=2, length=80, edges=[(0, 1, 4, 0.5)],
                         persistence=0.1, season_period=12.0, season_amp=0.2,
                         noise=0.1, seed=2)
        raw, _, _ = generate(spec)
        assert raw.n_steps == 80


class TestSpecFiles:
    def test_spec_roundtrip(self, tmp_path):
        spec = SynthSpec(n_nodes=4, length=200,
                         edges=[(0, 1, 4, 0.7), (1, 2, 2, 0.15)],
                         persistence=0.12, season_period=4.8, season_amp=0.45,
                         noise=0.31, seed=9)
        path = tmp_path / "synth.ini"
        write_synth_spec(path, spec)
        loaded = load_synth_spec(path)
        assert loaded == spec

    def test_lag_table_format(self, tmp_path):
        path = tmp_path / "lags.csv"
        write_lag_table(path, [(0, 1, 4, 0.7)])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "u,v,lag,weight"
        assert lines[1].startswith("0,1,4,")

    def test_missing_section_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[model]\nhidden = 3\n")
        with pytest.raises(DataError, match="synth"):
            load_synth_spec(path)

    def test_bad_edge_entry_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[synth]\nn_nodes = 2\nlength = 50\nedges = 0 1 2\n")
        with pytest.raises(DataError, match="u v lag weight"):
            load_synth_spec(path)
