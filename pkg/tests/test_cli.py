import json
import subprocess
import sys

import numpy as np
import pytest

from hdiv import Dataset
from hdiv.cli import main
from hdiv.io import load_dataset_csv, save_dataset_csv
from hdiv.statistic import Hypothesis, q_statistic


@pytest.fixture
def dataset(rng):
    n, k = 30, 6
    z = rng.standard_normal((n, k))
    x = z @ rng.standard_normal(k) + rng.standard_normal(n)
    y = 1.2 * x + rng.standard_normal(n)
    return Dataset(y=y, x=x, z=z)


@pytest.fixture
def data_csv(tmp_path, dataset):
    path = tmp_path / "data.csv"
    save_dataset_csv(dataset, path)
    return path


class TestCsvRoundTrip:
    def test_statistic_survives_round_trip(self, data_csv, dataset):
        reloaded = load_dataset_csv(data_csv)
        hyp = Hypothesis(beta0=1.2)
        s1 = q_statistic(dataset, hyp).statistic
        s2 = q_statistic(reloaded, hyp).statistic
        assert s2 == pytest.approx(s1, abs=1e-12)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n4,5,6\n")
        from hdiv import ValidationError

        with pytest.raises(ValidationError, match="header"):
            load_dataset_csv(path)

    def test_ragged_row_location(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("y,x,z1\n1,2,3\n4,5\n")
        from hdiv import ValidationError

        with pytest.raises(ValidationError, match="row 3"):
            load_dataset_csv(path)

    def test_non_numeric_cell_location(self, tmp_path):
        path = tmp_path / "text.csv"
        path.write_text("y,x,z1\n1,2,3\n4,oops,6\n")
        from hdiv import ValidationError

        with pytest.raises(ValidationError, match="row 3, column 2"):
            load_dataset_csv(path)


class TestCmdTest:
    def test_json_output_schema(self, data_csv, capsys):
        code = main(["test", "--data", str(data_csv), "--beta0", "1.2"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        for field in (
            "statistic", "p_value", "reject", "n", "k", "trace_sigma2", "mode"
        ):
            assert field in out
        assert out["schema_version"] == 1
        assert out["n"] == 30 and out["k"] == 6

    def test_missing_file_exit_2(self, tmp_path, capsys):
        code = main(["test", "--data", str(tmp_path / "nope.csv"), "--beta0", "0"])
        assert code == 2

    def test_malformed_csv_exit_3(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("y,x,z1\n1,2,3\n4,5\n")
        assert main(["test", "--data", str(path), "--beta0", "0"]) == 3

    def test_degenerate_instruments_exit_4(self, tmp_path, capsys):
        path = tmp_path / "ortho.csv"
        path.write_text("y,x,z1,z2\n1,2,1,0\n3,4,0,1\n")
        assert main(["test", "--data", str(path), "--beta0", "0"]) == 4

    def test_markdown_and_csv_formats(self, data_csv, capsys):
        assert main(
            ["test", "--data", str(data_csv), "--beta0", "1.2", "--format", "markdown"]
        ) == 0
        assert "| statistic |" in capsys.readouterr().out
        assert main(
            ["test", "--data", str(data_csv), "--beta0", "1.2", "--format", "csv"]
        ) == 0
        assert "statistic" in capsys.readouterr().out.splitlines()[0]


class TestCmdSimulate:
    def test_reps_zero_exit_3(self, capsys):
        code = main(["simulate", "--table1-defaults", "--reps", "0", "--seed", "1"])
        assert code == 3

    def test_unknown_config_key_exit_3(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 20, "bogus": 1}))
        code = main(["simulate", "--config", str(cfg), "--reps", "5", "--seed", "1"])
        assert code == 3
        assert "bogus" in capsys.readouterr().err

    def test_small_config_runs(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "n": 40,
                    "ratios": [0.5],
                    "rhos": [0.5],
                    "hs": [0.0, 2.0],
                    "processes": ["NET-E"],
                    "beta0": 2.0,
                }
            )
        )
        code = main(["simulate", "--config", str(cfg), "--reps", "20", "--seed", "3"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["schema_version"] == 1
        assert len(out["cells"]) == 2
        assert out["metadata"]["base_seed"] == 3

    def test_config_determinism(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 40, "ratios": [0.5], "rhos": [-0.9],
                                   "hs": [0.0], "processes": ["SPA-E"]}))
        args = ["simulate", "--config", str(cfg), "--reps", "25", "--seed", "9"]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args + ["--threads", "3"]) == 0
        second = capsys.readouterr().out
        assert first == second


class TestCmdInvert:
    def test_intervals_json(self, data_csv, capsys):
        code = main(
            ["invert", "--data", str(data_csv), "--lo", "-2", "--hi", "4",
             "--steps", "121"]
        )
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert isinstance(out["intervals"], list)
        assert out["grid"]["steps"] == 121

    def test_empty_set_is_success(self, data_csv, capsys):
        code = main(
            ["invert", "--data", str(data_csv), "--lo", "80", "--hi", "90",
             "--steps", "11"]
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out)["intervals"] == []

    def test_missing_file_exit_2(self, tmp_path):
        code = main(
            ["invert", "--data", str(tmp_path / "x.csv"), "--lo", "0",
             "--hi", "1", "--steps", "5"]
        )
        assert code == 2

    def test_interval_contains_tsls_estimate(self, rng, tmp_path, capsys):
        # independent sanity oracle: two-stage least squares point estimate
        n, k = 300, 5
        z = rng.standard_normal((n, k))
        pi = np.full(k, 1.0)
        x = z @ pi + rng.standard_normal(n)
        y = 0.8 * x + rng.standard_normal(n)
        proj = z @ np.linalg.lstsq(z, x, rcond=None)[0]
        tsls = float(proj @ y) / float(proj @ x)
        path = tmp_path / "strong.csv"
        save_dataset_csv(Dataset(y=y, x=x, z=z), path)
        assert main(
            ["invert", "--data", str(path), "--lo", "-1", "--hi", "3",
             "--steps", "401"]
        ) == 0
        out = json.loads(capsys.readouterr().out)
        assert any(lo <= tsls <= hi for lo, hi in out["intervals"])


class TestCmdDiagnose:
    def test_runs_and_reports(self, capsys):
        code = main(
            ["diagnose", "--null-normality", "--n", "60", "--k", "30",
             "--reps", "150", "--seed", "2"]
        )
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out) == {"schema_version", "ks_statistic", "p_value"}


def test_console_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "hdiv.cli", "--version"],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
