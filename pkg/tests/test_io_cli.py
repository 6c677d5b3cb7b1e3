import io
import math
import os

import numpy as np
import pytest

from extload import cli
from extload.io import (IngestError, RunConfig, aggregate_raw, build_config, parse_config_text,
                        payload, read_raw, read_records, read_table, write_table)


def _raw(rows):
    return io.StringIO("".join(f"{t},{v},{y}\n" for t, v, y in rows))


class TestAggregate:
    def test_two_sample_block(self):
        agg = aggregate_raw([(0.0, 1.0, 0.1), (300.0, 3.0, 0.5), (600.0, 9.0, 9.0)])
        assert agg.v[0] == 2.0 and agg.s[0] == pytest.approx(math.sqrt(2), abs=1e-15)
        assert agg.y[0] == 0.5

    def test_constant_speed(self):
        rows = [(t, 7.0, 0.1 * (t % 3)) for t in range(0, 1200, 1)]
        agg = aggregate_raw(rows)
        assert agg.n == 2 and np.all(agg.s == 0) and np.all(agg.v == 7.0)

    def test_block_maximum(self):
        rows = [(0.0, 5.0, 0.1), (200.0, 5.0, 0.5), (400.0, 5.0, 0.3)]
        assert aggregate_raw(rows).y[0] == 0.5

    def test_drops_incomplete_and_sparse(self):
        rows = [(0.0, 5.0, 1.0), (10.0, 6.0, 1.0),       # block 0: complete
                (600.0, 5.0, 1.0),                         # block 1: one sample
                (1800.0, 5.0, 1.0), (1810.0, 5.0, 1.0)]    # block 3: cut short
        agg = aggregate_raw(rows)
        assert agg.n == 1 and agg.n_dropped == 3

    def test_non_monotone_timestamps(self):
        src = _raw([(0, 5, 1), (10, 5, 1), (5, 5, 1)])
        with pytest.raises(IngestError) as err:
            aggregate_raw(read_raw(src))
        assert err.value.line == 3

    def test_iso_timestamps_and_header(self):
        text = "time,v,y\n2020-01-01T00:00:00,4,1\n2020-01-01T00:05:00,6,2\n2020-01-01T00:10:00,5,1\n"
        agg = aggregate_raw(read_raw(io.StringIO(text)))
        assert agg.n == 1 and agg.v[0] == 5.0

    def test_bad_row(self):
        with pytest.raises(IngestError) as err:
            list(read_raw(io.StringIO("0,1,2\n1,x,2\n")))
        assert err.value.line == 2

    def test_empty(self):
        assert aggregate_raw([]).n == 0


def test_table_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cols = {"a": rng.standard_normal(20), "b": np.arange(20), "c": ["x"] * 20}
    path = tmp_path / "t.csv"
    write_table(path, cols, {"seed": 3})
    meta, back = read_table(path)
    assert meta["seed"] == "3"
    assert np.array_equal(back["a"], cols["a"])
    assert list(back["c"]) == cols["c"]
    assert not payload(path).startswith("#")


def test_read_records_validation(tmp_path):
    path = tmp_path / "r.csv"
    write_table(path, {"v": [5.0, 6.0], "s": [0.5, -0.1], "y": [1.0, 2.0]})
    with pytest.raises(IngestError):
        read_records(path)
    write_table(path, {"v": [5.0, 6.0], "y": [1.0, 2.0]})
    assert np.all(read_records(path).cov.s == 0)


class TestConfig:
    def test_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 4\nm_l = 77  # comment\nt_years = 10, 30\n")
        cfg = build_config(path, full_scale=True, overrides={"m_l": 9, "seed": None})
        assert cfg.seed == 4 and cfg.m_l == 9 and cfg.t_years == (10.0, 30.0)
        assert cfg.m_w == 1000 and cfg.burn_in == 1000

    def test_desk_defaults(self):
        cfg = RunConfig()
        assert (cfg.burn_in, cfg.m_l, cfg.m_w, cfg.n_w, cfg.n_l) == (200, 500, 100, 100, 100)

    def test_unknown_key(self):
        with pytest.raises(IngestError):
            parse_config_text("nonsense = 1")

    def test_invalid_values(self):
        with pytest.raises(ValueError):
            RunConfig(m_l=0)
        with pytest.raises(ValueError):
            RunConfig(split_frac=1.5)

    def test_hash_stable(self):
        assert RunConfig(seed=1).hash() == RunConfig(seed=1).hash() != RunConfig(seed=2).hash()


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------

FAST = ["--burn-in", "5", "--m-l", "6", "--m-w", "3", "--n-w", "20", "--n-l", "10"]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = cli.main(["simulate", "--sim-blocks", "120", "--ref-datasets", "3",
                     "--out-dir", str(out)])
    assert code == 0
    return out


def test_simulate_outputs(sim_dir):
    _, train = read_table(sim_dir / "training.csv")
    _, ref = read_table(sim_dir / "reference_quantiles.csv")
    assert train["v"].size == 120 and np.all(train["s"] == 0)
    assert ref["q_0.0001"].size == 3 and np.all(ref["q_0.0001"] < ref["q_1e-05"])


def test_estimate_writes_one_file_per_service_life(sim_dir, tmp_path):
    code = cli.main(["estimate", "--data", str(sim_dir / "training.csv"), *FAST,
                     "--out-dir", str(tmp_path)])
    assert code == 0
    assert {"spline_T20.csv", "spline_T50.csv", "chain_trace.csv", "sic_table.csv"} <= set(
        os.listdir(tmp_path))
    meta, cols = read_table(tmp_path / "spline_T50.csv")
    assert meta["seed"] == "0" and cols["l_t"].size == 6 and meta["n_draws"] == "6"


def test_estimate_binned(sim_dir, tmp_path):
    code = cli.main(["estimate-binned", "--data", str(sim_dir / "training.csv"), *FAST,
                     "--out-dir", str(tmp_path)])
    assert code == 0 and (tmp_path / "binned_T20.csv").exists()


def test_fit_wind_and_band(sim_dir, tmp_path):
    data = str(sim_dir / "training.csv")
    assert cli.main(["fit-wind", "--data", data, *FAST, "--out-dir", str(tmp_path)]) == 0
    _, sic = read_table(tmp_path / "sic_table.csv")
    assert sic["chosen"].sum() == 1
    assert cli.main(["credible-band", "--data", data, *FAST, "--centers", "6,10,14",
                     "--out-dir", str(tmp_path)]) == 0
    _, band = read_table(tmp_path / "band_v.csv")
    assert np.all(band["lower"] < band["upper"])


def test_ingest_cli(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text("".join(f"{t},{5 + (t % 7)},{t % 5}\n" for t in range(0, 3000, 20)))
    out = tmp_path / "rec.csv"
    assert cli.main(["ingest", "--input", str(raw), "--output", str(out)]) == 0
    assert read_records(out).n == 5


def test_exit_codes(sim_dir, tmp_path, capsys):
    assert cli.main(["estimate"]) == 2
    assert cli.main(["nonsense"]) == 2
    assert cli.main(["estimate", "--data", str(tmp_path / "missing.csv")]) == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("0,5,1\n10,5,1\n5,5,1\n")
    assert cli.main(["ingest", "--input", str(bad), "--output", str(tmp_path / "o.csv")]) == 4
    assert cli.main(["credible-band", "--data", str(sim_dir / "training.csv"), *FAST,
                     "--centers", "500", "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert all(line.startswith("error ") for line in err if line.startswith("error"))
    assert err[-1].startswith("error 2 EmptySlab")


def test_score_cli(sim_dir, tmp_path):
    code = cli.main(["score", "--data", str(sim_dir / "training.csv"), *FAST,
                     "--score-repeats", "1", "--out-dir", str(tmp_path)])
    assert code == 0
    _, table = read_table(tmp_path / "score_table.csv")
    assert sorted(set(table["b"])) == [0.0, 1.0, 2.0]
    assert sorted(set(table["tau"])) == [0.9, 0.99]
    _, sweep = read_table(tmp_path / "tau_sweep.csv")
    assert list(sweep["tau"]) == [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]
    _, diffs = read_table(tmp_path / "bin_differences.csv")
    assert diffs["bin"].size >= 1 and np.all(np.isfinite(diffs["standardized"]))
