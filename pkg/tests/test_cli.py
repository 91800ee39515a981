import json

import numpy as np
import pytest

from corenet.cli import (
    EXIT_FORMAT,
    EXIT_MISSING,
    EXIT_OK,
    EXIT_USAGE,
    _parse_fractions,
    run,
)
from corenet.data import make_digits, save_csv
from corenet.nnw import save_network

from _support import random_network


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = make_digits(900, seed=8)
    csv_path = root / "digits.csv"
    save_csv(data, csv_path)
    return root, csv_path


@pytest.fixture(scope="module")
def trained(workdir):
    root, csv_path = workdir
    out = root / "net.nnw1"
    code = run(["train", "--data", str(csv_path), "--arch", "24",
                "--epochs", "6", "--out", str(out), "--seed", "1"])
    assert code == EXIT_OK
    return out


class TestParseFractions:
    def test_comma_list(self):
        assert _parse_fractions("0.25,0.5") == [0.25, 0.5]

    def test_range(self):
        vals = _parse_fractions("0.1..1.0")
        assert len(vals) == 10
        assert vals[0] == 0.1 and vals[-1] == 1.0

    def test_range_with_step(self):
        assert _parse_fractions("0.2..0.6..0.2") == [0.2, 0.4, 0.6]


class TestTrain(object):
    def test_emits_weights_and_summary(self, workdir, trained, capsys):
        assert trained.exists()


class TestCompress:
    def test_smoke_writes_outputs(self, workdir, trained, capsys):
        root, csv_path = workdir
        out = root / "compressed.nnw1"
        report = root / "report.json"
        code = run(["compress", "--weights", str(trained), "--data", str(csv_path),
                    "--out", str(out), "--report", str(report),
                    "--eps", "0.5", "--delta", "0.1", "--mode", "corenet++",
                    "--fraction", "0.5", "--seed", "3"])
        assert code == EXIT_OK
        assert out.exists()
        parsed = json.loads(report.read_text())
        assert parsed["sizes"]["compressed"] <= parsed["sizes"]["original"]

    def test_missing_weights_exit_2(self, workdir, capsys):
        root, csv_path = workdir
        code = run(["compress", "--weights", str(root / "nope.nnw1"),
                    "--data", str(csv_path), "--out", str(root / "x.nnw1")])
        assert code == EXIT_MISSING
        assert "weights not found" in capsys.readouterr().err

    def test_unknown_flag_exit_3(self, workdir, capsys):
        root, csv_path = workdir
        code = run(["compress", "--weights", "w", "--data", str(csv_path),
                    "--out", "o", "--bogus-flag"])
        assert code == EXIT_USAGE

    def test_corrupt_weights_exit_4(self, workdir, capsys):
        root, csv_path = workdir
        bad = root / "bad.nnw1"
        bad.write_bytes(b"\x10\x00\x00\x00\x00\x00\x00\x00" + b"{" * 16)
        code = run(["compress", "--weights", str(bad), "--data", str(csv_path),
                    "--out", str(root / "y.nnw1")])
        assert code == EXIT_FORMAT

    def test_deterministic_byte_identical(self, workdir, trained):
        root, csv_path = workdir
        outs = []
        for tag, jobs in (("a", "1"), ("b", "8")):
            out = root / f"det_{tag}.nnw1"
            code = run(["compress", "--weights", str(trained), "--data", str(csv_path),
                        "--out", str(out), "--fraction", "0.4", "--seed", "11",
                        "--jobs", jobs])
            assert code == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_config_file_with_flag_override(self, workdir, trained):
        root, csv_path = workdir
        cfg_path = root / "cfg.json"
        cfg_path.write_text(json.dumps({"fraction": 0.3, "seed": 4, "mode": "corenet"}))
        out_cfg = root / "from_cfg.nnw1"
        out_flag = root / "from_flag.nnw1"
        assert run(["compress", "--weights", str(trained), "--data", str(csv_path),
                    "--out", str(out_cfg), "--config", str(cfg_path)]) == EXIT_OK
        # explicit flag wins over the config value
        assert run(["compress", "--weights", str(trained), "--data", str(csv_path),
                    "--out", str(out_flag), "--config", str(cfg_path),
                    "--fraction", "0.7"]) == EXIT_OK
        from corenet.network import size_of
        from corenet.nnw import load_network
        assert size_of(load_network(out_flag)) > size_of(load_network(out_cfg))

    def test_dump_plan_and_sensitivities(self, workdir, trained):
        root, csv_path = workdir
        plan = root / "plan.json"
        sens = root / "sens.json"
        code = run(["compress", "--weights", str(trained), "--data", str(csv_path),
                    "--out", str(root / "z.nnw1"), "--fraction", "0.5", "--seed", "2",
                    "--dump-plan", str(plan), "--dump-sensitivities", str(sens)])
        assert code == EXIT_OK
        assert "eps_schedule" in json.loads(plan.read_text())
        parsed = json.loads(sens.read_text())
        assert "sensitivities" in parsed and "delta_estimates" in parsed


class TestSweep:
    def test_cell_count(self, workdir, trained, capsys):
        root, csv_path = workdir
        oj, oc = root / "rep.json", root / "rep.csv"
        code = run(["sweep", "--weights", str(trained), "--data", str(csv_path),
                    "--schemes", "corenet,uniform,l1", "--fractions", "0.4,0.8",
                    "--trials", "1", "--seed", "5",
                    "--out-json", str(oj), "--out-csv", str(oc)])
        assert code == EXIT_OK
        report = json.loads(oj.read_text())
        assert len(report["cells"]) == 6
        assert len(oc.read_text().strip().splitlines()) == 7

    def test_three_schemes_times_ten_fractions(self, workdir, trained):
        root, csv_path = workdir
        oj = root / "rep30.json"
        code = run(["sweep", "--weights", str(trained), "--data", str(csv_path),
                    "--schemes", "corenet,uniform,l1", "--fractions", "0.1..1.0",
                    "--trials", "1", "--seed", "6",
                    "--out-json", str(oj), "--out-csv", str(root / "rep30.csv")])
        assert code == EXIT_OK
        report = json.loads(oj.read_text())
        assert len(report["cells"]) == 30
        assert all("error" not in c for c in report["cells"])


class TestEvalAndBound:
    def test_eval_identical_nets(self, workdir, trained, capsys):
        root, csv_path = workdir
        code = run(["eval", "--weights", str(trained), "--compressed", str(trained),
                    "--data", str(csv_path), "--seed", "1"])
        assert code == EXIT_OK
        out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert out["relative_error"] == 0.0
        assert out["accuracy_drop"] == 0.0

    def test_bound_emits_value_and_convention(self, workdir, trained, capsys):
        root, csv_path = workdir
        code = run(["bound", "--weights", str(trained), "--data", str(csv_path),
                    "--gamma", "1.0", "--seed", "1"])
        assert code == EXIT_OK
        out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert out["bound"] >= out["margin_loss"]
        assert "constant" in out["convention"]


class TestConvert:
    def test_check_dataset(self, workdir, capsys):
        root, csv_path = workdir
        code = run(["convert", "--check-dataset", str(csv_path)])
        assert code == EXIT_OK
        out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert out["dataset"]["features"] == 64

    def test_validate_network(self, workdir, trained, capsys):
        code = run(["convert", "--validate", str(trained)])
        assert code == EXIT_OK
        out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert out["network"]["bias_embedded"] is True

    def test_verify_round_trip(self, workdir, tmp_path, capsys):
        net = random_network([4, 3], seed=60)
        wpath = tmp_path / "w.nnw1"
        save_network(net, wpath)
        g = np.random.Generator(np.random.PCG64(1))
        inputs = g.normal(size=(5, 4))
        sidecar = {
            "inputs": inputs.tolist(),
            "outputs": [net.forward(x).tolist() for x in inputs],
        }
        spath = tmp_path / "verify.json"
        spath.write_text(json.dumps(sidecar))
        assert run(["convert", "--verify", str(spath), str(wpath)]) == EXIT_OK
        out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert out["verify"]["ok"] is True

    def test_verify_detects_mismatch(self, workdir, tmp_path, capsys):
        net = random_network([4, 3], seed=61)
        wpath = tmp_path / "w.nnw1"
        save_network(net, wpath)
        sidecar = {"inputs": [[0.0, 0.0, 0.0, 0.0]], "outputs": [[9.9, 9.9, 9.9]]}
        spath = tmp_path / "verify.json"
        spath.write_text(json.dumps(sidecar))
        assert run(["convert", "--verify", str(spath), str(wpath)]) != EXIT_OK
