import json

import pytest

from xsepconv.cli import main
from xsepconv.padding import improved_schedule, schedule_to_json


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestAnalyze:
    def test_toy_config_csv(self, capsys, tmp_path, toy_config_path):
        out = tmp_path / "toy.csv"
        code, stdout, _ = run(capsys, "analyze", "--config", str(toy_config_path), "--out", str(out))
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "layer,baseline_macs,xsep_macs,baseline_params,xsep_params,ratio"
        assert lines[1] == "mid_dw5x5,307200,172032,1200,672,0.56"
        assert lines[2] == "down_dw5x5,76800,76800,1200,1200,1.0"
        assert lines[3].startswith("TOTAL,384000,248832,2400,1872,")
        assert "savings" in stdout

    def test_missing_file_names_path(self, capsys, tmp_path):
        missing = tmp_path / "nope.json"
        code, _, stderr = run(capsys, "analyze", "--config", str(missing))
        assert code == 2
        assert str(missing) in stderr

    def test_malformed_config_diagnoses_field(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"input": [1, 4, 4], "layers": [{"name": "x", "kind": "dw", "c": 1}]}))
        code, _, stderr = run(capsys, "analyze", "--config", str(bad))
        assert code == 2
        assert "layer 0" in stderr and "'k'" in stderr

    def test_bundled_config(self, capsys, tmp_path, mobilenet_config_path):
        out = tmp_path / "net.csv"
        code, stdout, _ = run(capsys, "analyze", "--config", str(mobilenet_config_path), "--out", str(out))
        assert code == 0
        assert "baseline:    17507328 MACs" in stdout


class TestRatios:
    def test_k5_row(self, capsys, tmp_path):
        out = tmp_path / "r.csv"
        code, _, _ = run(capsys, "ratios", "--k-min", "5", "--k-max", "7", "--out", str(out))
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "5,0.56,1.24,true,false"
        k7 = lines[3].split(",")
        assert k7[0] == "7"
        assert abs(float(k7[1]) - 18 / 49) < 1e-15
        assert abs(float(k7[2]) - 37 / 49) < 1e-15
        assert k7[3:] == ["true", "true"]

    def test_bad_range(self, capsys):
        code, _, stderr = run(capsys, "ratios", "--k-min", "9", "--k-max", "3")
        assert code == 2
        assert "k_min" in stderr


class TestVerify:
    def test_equiv_suite_passes(self, capsys):
        code, stdout, _ = run(capsys, "verify", "--suite", "equiv", "--seed", "7")
        assert code == 0
        summary = json.loads(stdout)
        assert summary["passed"] is True
        assert summary["suites"]["equiv"]["max_deviation"] < 1e-10

    def test_unknown_suite(self, capsys):
        code, _, stderr = run(capsys, "verify", "--suite", "nope")
        assert code == 2
        assert "unknown suite" in stderr

    def test_cost_suite_passes(self, capsys):
        code, stdout, _ = run(capsys, "verify", "--suite", "cost")
        assert code == 0
        assert json.loads(stdout)["suites"]["cost"]["mac_mismatches"] == []


class TestDeterminism:
    def test_ratios_byte_stable(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "ratios", "--k-min", "1", "--k-max", "31", "--out", str(a))
        run(capsys, "ratios", "--k-min", "1", "--k-max", "31", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_analyze_byte_stable(self, capsys, tmp_path, mobilenet_config_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "analyze", "--config", str(mobilenet_config_path), "--out", str(a))
        run(capsys, "analyze", "--config", str(mobilenet_config_path), "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_verify_byte_stable(self, capsys):
        _, out1, _ = run(capsys, "verify", "--suite", "shift", "--seed", "3")
        _, out2, _ = run(capsys, "verify", "--suite", "shift", "--seed", "3")
        assert out1 == out2


class TestBench:
    def test_reps_floor(self, capsys):
        code, _, stderr = run(capsys, "bench", "--reps", "10")
        assert code == 2
        assert "reps below minimum" in stderr

    def test_csv_schema_and_dedup(self, capsys, tmp_path):
        out = tmp_path / "bench.csv"
        code, stdout, stderr = run(
            capsys, "bench", "--k", "3", "--dims", "1x4x16x16", "--reps", "30",
            "--variant", "xsep", "--variant", "xsep", "--variant", "vanilla_dw",
            "--out", str(out),
        )
        assert code == 0
        assert "duplicate variant" in stderr
        lines = out.read_text().splitlines()
        assert lines[0] == "variant,k,dims,median_ns,macs,gmacs_per_s,reps,warmup"
        assert len(lines) == 3  # deduplicated
        for line in lines[1:]:
            fields = line.split(",")
            assert int(fields[3]) > 0  # positive time
        assert "time ratio xsep/vanilla_dw" in stdout

    def test_bad_dims(self, capsys):
        code, _, stderr = run(capsys, "bench", "--dims", "16x16", "--reps", "30")
        assert code == 2
        assert "dims" in stderr


class TestTrainToy:
    def test_zero_epochs(self, capsys, tmp_path):
        code, _, stderr = run(
            capsys, "train-toy", "--epochs", "0", "--out", str(tmp_path / "t.csv")
        )
        assert code == 2
        assert "epochs" in stderr

    def test_short_run_writes_history(self, capsys, tmp_path):
        out = tmp_path / "t.csv"
        code, stdout, _ = run(capsys, "train-toy", "--epochs", "2", "--seed", "1", "--out", str(out))
        lines = out.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,train_accuracy,test_loss,test_accuracy"
        assert len(lines) == 3
        assert "train loss" in stdout
        # loss may not strictly decrease in 2 epochs; only the exit contract matters
        assert code in (0, 1)


class TestShift:
    def test_trace_from_schedule_file(self, capsys, tmp_path):
        sched_path = tmp_path / "sched.json"
        sched_path.write_text(schedule_to_json(improved_schedule(4)))
        code, stdout, _ = run(capsys, "shift", "--schedule", str(sched_path))
        assert code == 0
        report = json.loads(stdout)
        assert report["final_offset"] == [0.0, 0.0]
        assert report["predicted_offset"] == [0.0, 0.0]

    def test_missing_schedule(self, capsys, tmp_path):
        code, _, stderr = run(capsys, "shift", "--schedule", str(tmp_path / "no.json"))
        assert code == 2
        assert "not found" in stderr
