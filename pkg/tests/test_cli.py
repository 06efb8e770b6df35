import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from pairadjust.cli import AnalyzeConfig, load_experiment, main
from pairadjust.estimators import AdjustmentSpec, estimate


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "pairadjust.cli", *args],
        capture_output=True,
        text=True,
    )


class TestSimulate:
    def test_smoke_summary_csv(self, tmp_path):
        out = tmp_path / "summary.csv"
        proc = run_cli(
            "simulate", "--model", "1", "--pairs", "100", "--reps", "100",
            "--delta", "0", "--seed", "7", "--out", str(out),
        )
        assert proc.returncode == 0
        rows = list(csv.DictReader(out.open()))
        assert [r["kind"] for r in rows] == [
            "unadjusted", "naive", "naive2", "pfe", "refit",
        ]
        assert all(r["replications"] == "100" for r in rows)

    def test_byte_identical_reruns(self):
        args = (
            "simulate", "--model", "2", "--pairs", "30", "--reps", "40",
            "--delta", "0.25", "--seed", "9",
        )
        first = run_cli(*args)
        second = run_cli(*args)
        assert first.returncode == second.returncode == 0
        assert first.stdout == second.stdout

    def test_unknown_model_is_usage_error(self):
        proc = run_cli("simulate", "--model", "99", "--pairs", "5", "--reps", "1")
        assert proc.returncode == 2

    def test_unknown_method_is_usage_error(self):
        proc = run_cli(
            "simulate", "--model", "1", "--pairs", "10", "--reps", "1",
            "--methods", "unadjusted,bogus",
        )
        assert proc.returncode == 2


@pytest.fixture()
def unit_file(tmp_path):
    path = tmp_path / "units.csv"
    path.write_text("unit_id,z\nu1,0.9\nu2,0.1\nu3,0.5\nu4,0.4\n")
    return path


class TestMatchAssign:
    def test_four_row_scalar_file(self, unit_file, tmp_path):
        out = tmp_path / "assign.csv"
        proc = run_cli(
            "match-assign", "--data", str(unit_file), "--x-cols", "z",
            "--seed", "3", "--out", str(out),
        )
        assert proc.returncode == 0
        rows = list(csv.DictReader(out.open()))
        assert [r["unit_id"] for r in rows] == ["u2", "u4", "u3", "u1"]
        by_pair = {}
        for r in rows:
            by_pair.setdefault(r["pair_id"], []).append(int(r["d"]))
        assert all(sorted(v) == [0, 1] for v in by_pair.values())

    def test_diagnostics_on_stderr_match_hand_value(self, unit_file):
        proc = run_cli("match-assign", "--data", str(unit_file), "--x-cols", "z")
        # pairs {0.1, 0.4} and {0.5, 0.9}: r=1 mean distance = (0.3 + 0.4) / 2
        assert "0.35" in proc.stderr

    def test_same_seed_identical(self, unit_file):
        a = run_cli("match-assign", "--data", str(unit_file), "--seed", "5")
        b = run_cli("match-assign", "--data", str(unit_file), "--seed", "5")
        assert a.stdout == b.stdout

    def test_odd_row_count_exits_one(self, tmp_path):
        path = tmp_path / "odd.csv"
        path.write_text("unit_id,z\na,1\nb,2\nc,3\n")
        proc = run_cli("match-assign", "--data", str(path))
        assert proc.returncode == 1


@pytest.fixture()
def experiment_file(tmp_path):
    path = tmp_path / "exp.csv"
    proc = run_cli(
        "simulate", "--model", "2", "--pairs", "25", "--reps", "1",
        "--delta", "0.25", "--seed", "21", "--dump-data", str(path),
        "--out", str(tmp_path / "ignore.csv"),
    )
    assert proc.returncode == 0
    return path


class TestAnalyze:
    def test_round_trip_matches_library(self, experiment_file):
        cfg = AnalyzeConfig(
            data_path=str(experiment_file),
            outcome="y",
            treatment="d",
            pair_id="pair_id",
            x_cols=("x1",),
            w_cols=("w1",),
            methods=("unadjusted", "pfe"),
        )
        data = load_experiment(cfg)
        expected = {
            "unadjusted": estimate(data, AdjustmentSpec("unadjusted", name="unadjusted")),
            "pfe": estimate(data, AdjustmentSpec("pfe", use_w=True, name="pfe")),
        }
        proc = run_cli(
            "analyze", "--data", str(experiment_file), "--outcome", "y",
            "--treatment", "d", "--pair-id", "pair_id", "--x-cols", "x1",
            "--w-cols", "w1", "--methods", "unadjusted,pfe",
        )
        assert proc.returncode == 0
        rows = list(csv.DictReader(proc.stdout.splitlines()))
        for row in rows:
            want = expected[row["method"]]
            assert row["delta_hat"] == f"{want.delta_hat:.12g}"
            assert row["std_error"] == f"{want.std_error:.12g}"
            assert row["ci_lower"] == f"{want.ci_lower:.12g}"
            assert row["reject_h0"] == str(want.reject_h0)

    def test_hand_dataset_difference_in_means(self, tmp_path):
        path = tmp_path / "hand.csv"
        path.write_text(
            "y,d,pair\n3,1,p1\n1,0,p1\n2,0,p2\n4,1,p2\n"
        )
        proc = run_cli(
            "analyze", "--data", str(path), "--outcome", "y", "--treatment", "d",
            "--pair-id", "pair", "--methods", "unadjusted",
        )
        assert proc.returncode == 0
        row = next(csv.DictReader(proc.stdout.splitlines()))
        assert float(row["delta_hat"]) == 2.0

    def test_json_mirrors_report_fields(self, experiment_file):
        proc = run_cli(
            "analyze", "--data", str(experiment_file), "--outcome", "y",
            "--treatment", "d", "--pair-id", "pair_id", "--w-cols", "w1",
            "--methods", "naive", "--format", "json",
        )
        assert proc.returncode == 0
        payload = json.loads(proc.stdout)
        assert payload[0]["method"] == "naive"
        for field in (
            "delta_hat", "sigma_hat", "std_error", "ci_lower", "ci_upper",
            "alpha", "reject_h0", "delta_null", "diagnostics",
        ):
            assert field in payload[0]

    def test_missing_column_binding_is_usage_error(self, experiment_file):
        proc = run_cli(
            "analyze", "--data", str(experiment_file), "--outcome", "nope",
            "--treatment", "d", "--pair-id", "pair_id", "--methods", "unadjusted",
        )
        assert proc.returncode == 2

    def test_unknown_method_is_usage_error(self, experiment_file):
        proc = run_cli(
            "analyze", "--data", str(experiment_file), "--outcome", "y",
            "--treatment", "d", "--pair-id", "pair_id", "--methods", "magic",
        )
        assert proc.returncode == 2

    def test_bad_pair_exits_one_and_names_pair(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y,d,pair\n3,1,p1\n1,1,p1\n2,0,p2\n4,1,p2\n")
        proc = run_cli(
            "analyze", "--data", str(path), "--outcome", "y", "--treatment", "d",
            "--pair-id", "pair", "--methods", "unadjusted",
        )
        assert proc.returncode == 1
        assert "p1" in proc.stderr

    def test_pair_order_follows_first_appearance(self, tmp_path):
        # reversing file order changes the pairs-of-pairs grouping, which the
        # loader must preserve rather than normalize away
        rng = np.random.default_rng(8)
        lines = ["y,d,pair"]
        for j in range(6):
            base = rng.standard_normal()
            lines.append(f"{base + 1.0},1,g{j}")
            lines.append(f"{base - 1.0},0,g{j}")
        path = tmp_path / "ordered.csv"
        path.write_text("\n".join(lines) + "\n")
        cfg = AnalyzeConfig(
            data_path=str(path), outcome="y", treatment="d", pair_id="pair",
            x_cols=(), w_cols=(), methods=("unadjusted",),
        )
        data = load_experiment(cfg)
        assert [data.plan.pairs[j].tolist() for j in range(3)] == [
            [0, 1], [2, 3], [4, 5],
        ]


def test_main_entry_returns_exit_codes(tmp_path):
    path = tmp_path / "missing.csv"
    assert main(["match-assign", "--data", str(path)]) == 1
