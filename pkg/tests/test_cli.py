import json
import math

import numpy as np
import pytest

from termembed.cli import main
from termembed.pointio import read_points_bin, read_points_csv, write_points_bin, write_points_csv


def write_csv(path, arr):
    write_points_csv(path, np.asarray(arr, dtype=float))
    return str(path)


def bundle_bytes(bundle_dir):
    return {p.name: p.read_bytes() for p in sorted(bundle_dir.iterdir())}


@pytest.fixture
def points_csv(tmp_path):
    rng = np.random.default_rng(0)
    return write_csv(tmp_path / "pts.csv", rng.standard_normal((12, 6)))


class TestBuild:
    def test_exact_small_announced(self, tmp_path, capsys):
        path = write_csv(tmp_path / "three.csv", [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        rc = main(["build", path, "--out", str(tmp_path / "b"), "--epsilon", "0.1"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["mode"] == "exact_small"

    def test_sketch_mode_announced(self, tmp_path, capsys, points_csv):
        rc = main(["build", points_csv, "--out", str(tmp_path / "b"),
                   "--epsilon", "0.5", "--const-C", "0.5"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["mode"] == "sketch" and out["out_dim"] == out["m"] + 1

    def test_missing_file_exits_2(self, tmp_path, capsys):
        rc = main(["build", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "b")])
        assert rc == 2
        assert capsys.readouterr().err != ""

    def test_duplicate_points_exit_2(self, tmp_path, capsys):
        path = write_csv(tmp_path / "dup.csv", [[1.0, 1.0], [1.0, 1.0]])
        rc = main(["build", path, "--out", str(tmp_path / "b")])
        assert rc == 2

    def test_rebuild_is_byte_identical(self, tmp_path, points_csv):
        args = ["build", points_csv, "--out", str(tmp_path / "b"),
                "--epsilon", "0.5", "--const-C", "0.5", "--seed", "7"]
        assert main(args) == 0
        first = bundle_bytes(tmp_path / "b")
        assert main(args) == 0
        second = bundle_bytes(tmp_path / "b")
        assert first == second

    def test_usage_error_exits_1(self, tmp_path, capsys, points_csv):
        rc = main(["build", points_csv])  # missing --out
        assert rc == 1


class TestQuery:
    @pytest.fixture
    def bundle(self, tmp_path, points_csv):
        out = tmp_path / "bundle"
        assert main(["build", points_csv, "--out", str(out),
                     "--epsilon", "0.5", "--const-C", "0.5", "--seed", "3"]) == 0
        return out

    def test_members_get_zero_tail(self, tmp_path, bundle, points_csv):
        qpath = tmp_path / "q.csv"
        qpath.write_bytes((tmp_path / "pts.csv").read_bytes())
        rc = main(["query", str(bundle), str(qpath), str(tmp_path / "out.csv")])
        assert rc == 0
        out = read_points_csv(tmp_path / "out.csv")
        assert np.all(out[:, -1] == 0.0)

    def test_empty_query_file(self, tmp_path, bundle):
        qpath = tmp_path / "empty.csv"
        qpath.write_text("")
        rc = main(["query", str(bundle), str(qpath), str(tmp_path / "out.csv")])
        assert rc == 0
        assert read_points_csv(tmp_path / "out.csv").shape == (0, 0)

    def test_round_trip_bit_exact(self, tmp_path, bundle):
        rng = np.random.default_rng(5)
        qpath = tmp_path / "q.bin"
        write_points_bin(qpath, rng.standard_normal((4, 6)))
        out = tmp_path / "out.bin"
        assert main(["query", str(bundle), str(qpath), str(out)]) == 0
        first = read_points_bin(out)
        write_points_bin(tmp_path / "again.bin", first)
        assert (tmp_path / "again.bin").read_bytes() == out.read_bytes()

    def test_dimension_mismatch_exit_2(self, tmp_path, bundle, capsys):
        qpath = write_csv(tmp_path / "bad.csv", np.zeros((2, 3)))
        rc = main(["query", str(bundle), qpath, str(tmp_path / "out.csv")])
        assert rc == 2

    def test_diagnostics_sidecar(self, tmp_path, bundle):
        qpath = write_csv(tmp_path / "q.csv", np.random.default_rng(6).standard_normal((3, 6)))
        assert main(["query", str(bundle), qpath, str(tmp_path / "out.csv")]) == 0
        diag = json.loads((tmp_path / "out.csv.diag.json").read_text())
        assert diag["queries"] == 3
        for entry in diag["per_query"]:
            assert {"residual", "iterations", "anchor_index", "converged"} <= set(entry)

    def test_query_determinism(self, tmp_path, bundle):
        qpath = write_csv(tmp_path / "q.csv", np.random.default_rng(7).standard_normal((3, 6)))
        out1, out2 = tmp_path / "o1.csv", tmp_path / "o2.csv"
        assert main(["query", str(bundle), qpath, str(out1)]) == 0
        assert main(["query", str(bundle), qpath, str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestVerifyAndEval:
    @pytest.fixture
    def bundle(self, tmp_path, points_csv):
        out = tmp_path / "bundle"
        assert main(["build", points_csv, "--out", str(out),
                     "--epsilon", "0.5", "--const-C", "0.5", "--seed", "11"]) == 0
        return out

    def test_verify_report_and_pass(self, tmp_path, bundle):
        report = tmp_path / "chd.json"
        rc = main(["verify-chd", str(bundle), "--samples", "500",
                   "--report", str(report), "--assert", "max_violation=2.0"])
        assert rc == 0
        rep = json.loads(report.read_text())
        assert rep["method"] == "sampled"
        assert 0.0 <= rep["max_violation"] <= 2.0
        assert len(rep["witness_weights"]) == 12 * 11

    def test_verify_assert_failure_exits_3_report_written(self, tmp_path, bundle, capsys):
        report = tmp_path / "chd.json"
        rc = main(["verify-chd", str(bundle), "--samples", "500",
                   "--report", str(report), "--assert", "max_violation=0.0"])
        assert rc == 3
        assert report.exists()
        assert "assert failed" in capsys.readouterr().err

    def test_verify_unknown_assert_key_is_usage_error(self, bundle):
        rc = main(["verify-chd", str(bundle), "--samples", "100",
                   "--assert", "bogus_key=1"])
        assert rc == 1

    def test_eval_report(self, tmp_path, bundle):
        report = tmp_path / "eval.json"
        rc = main(["eval", str(bundle), "--queries-per-mode", "4",
                   "--report", str(report), "--assert", "max_ratio_dev=2.0"])
        assert rc == 0
        rep = json.loads(report.read_text())
        assert rep["pair_count"] > 0
        assert rep["ratios"]["min"] > 0.0

    def test_eval_efn_baseline_reproduces_sqrt10(self, tmp_path):
        pts = write_csv(tmp_path / "efn.csv", [[-1.0], [0.0], [2.0]])
        bundle = tmp_path / "efnb"
        assert main(["build", pts, "--out", str(bundle), "--epsilon", "0.1"]) == 0
        qpath = write_csv(tmp_path / "q1.csv", [[1.0]])
        report = tmp_path / "efn_eval.json"
        rc = main(["eval", str(bundle), "--baseline", "efn",
                   "--queries-file", qpath, "--report", str(report)])
        assert rc == 0
        rep = json.loads(report.read_text())
        assert abs(rep["distortion"] - math.sqrt(10)) <= 1e-9

    def test_eval_raw_dump(self, tmp_path, bundle):
        dump = tmp_path / "raw.csv"
        rc = main(["eval", str(bundle), "--queries-per-mode", "2",
                   "--raw-dump", str(dump), "--report", str(tmp_path / "r.json")])
        assert rc == 0
        lines = dump.read_text().strip().split("\n")
        assert lines[0] == "query_index,point_index,ratio,abs_sq_error"
        assert len(lines) > 1

    def test_eval_custom_samplers_and_dash_assert_key(self, tmp_path, bundle):
        report = tmp_path / "eval.json"
        rc = main(["eval", str(bundle), "--queries-per-mode", "3",
                   "--samplers", "member,shell:0.5,far:2",
                   "--report", str(report), "--assert", "max-ratio-dev=5.0"])
        assert rc == 0
        rep = json.loads(report.read_text())
        assert set(rep["samplers"]) == {"member", "shell:0.5", "far:2"}

    def test_verify_on_exact_bundle(self, tmp_path):
        pts = write_csv(tmp_path / "tiny.csv", [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        bundle = tmp_path / "tinyb"
        assert main(["build", pts, "--out", str(bundle), "--epsilon", "0.1"]) == 0
        report = tmp_path / "chd.json"
        rc = main(["verify-chd", str(bundle), "--report", str(report),
                   "--assert", "max_violation=0.1"])
        assert rc == 0
        rep = json.loads(report.read_text())
        assert rep["method"] == "exact_small" and rep["max_violation"] == 0.0

    def test_verify_grid_window_on_tiny_sketch(self, tmp_path):
        # force sketch mode on a 4-point set so |Y| = 12 > 6: no grid fields
        rng = np.random.default_rng(8)
        pts = write_csv(tmp_path / "p.csv", rng.standard_normal((32, 4)))
        bundle = tmp_path / "b"
        assert main(["build", pts, "--out", str(bundle), "--epsilon", "0.5",
                     "--const-C", "0.5", "--seed", "2"]) == 0
        report = tmp_path / "chd.json"
        rc = main(["verify-chd", str(bundle), "--samples", "300",
                   "--grid", "0.05", "--report", str(report)])
        assert rc == 0
        rep = json.loads(report.read_text())
        assert "certified_bound" not in rep  # |Y| too large for the grid tier


class TestScalingCommand:
    def test_csv_output(self, tmp_path, points_csv):
        out = tmp_path / "table.csv"
        rc = main(["scaling", points_csv, "--epsilons", "0.5", "--consts", "0.5,1.0",
                   "--seeds", "0,1", "--queries-per-mode", "2",
                   "--chd-samples", "100", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().strip().split("\n")
        assert len(lines) == 5  # header + 2x2 factorial

    def test_json_output(self, tmp_path, points_csv):
        out = tmp_path / "table.json"
        rc = main(["scaling", points_csv, "--epsilons", "0.5", "--consts", "1.0",
                   "--seeds", "0", "--queries-per-mode", "2",
                   "--chd-samples", "100", "--out", str(out)])
        assert rc == 0
        rows = json.loads(out.read_text())
        assert rows[0]["epsilon"] == 0.5


class TestSeedFallback:
    def test_te_seed_env(self, tmp_path, points_csv, monkeypatch):
        monkeypatch.setenv("TE_SEED", "99")
        out1 = tmp_path / "b1"
        assert main(["build", points_csv, "--out", str(out1),
                     "--epsilon", "0.5", "--const-C", "0.5"]) == 0
        cfg = json.loads((out1 / "config.json").read_text())
        assert cfg["seed"] == 99

    def test_explicit_seed_beats_env(self, tmp_path, points_csv, monkeypatch):
        monkeypatch.setenv("TE_SEED", "99")
        out1 = tmp_path / "b1"
        assert main(["build", points_csv, "--out", str(out1),
                     "--epsilon", "0.5", "--const-C", "0.5", "--seed", "5"]) == 0
        cfg = json.loads((out1 / "config.json").read_text())
        assert cfg["seed"] == 5
