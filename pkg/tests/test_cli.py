import filecmp
import json

import pytest

from wpcn_relay.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from wpcn_relay.neural import Model


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    code = main(["gen-data", "--n", "2", "--k", "2", "--train", "60", "--val", "20", "--test", "10",
                 "--seed", "4", "--out", str(out)])
    assert code == EXIT_OK
    code = main(["train", "--arch", "sc-net", "--epochs", "2", "--out", str(out)])
    assert code == EXIT_OK
    return out


def run_json(capsys, argv):
    capsys.readouterr()
    code = main(["--json"] + argv)
    return code, json.loads(capsys.readouterr().out) if code == EXIT_OK else None


class TestUsage:
    @pytest.mark.parametrize("argv", [
        [], ["bogus"], ["solve", "--n", "0"], ["solve", "--method", "magic"],
        ["gen-data", "--train", "x"], ["distill", "--teacher", "t.json", "--kernel", "2"],
        ["search", "--teacher", "t.json", "--menu", "8,4"],
        ["distill", "--teacher", "t.json", "--lambda1", "0", "--lambda2", "0"],
    ])
    def test_usage_errors(self, argv, capsys):
        assert main(argv) == EXIT_USAGE

    def test_help_exits_ok(self, capsys):
        assert main(["--help"]) == EXIT_OK

    def test_every_subcommand_exists(self, capsys):
        for cmd in ("gen-data", "solve", "train", "distill", "search", "evaluate"):
            assert main([cmd, "--help"]) == EXIT_OK


class TestSolve:
    def test_json(self, capsys):
        code, payload = run_json(capsys, ["solve", "--n", "3", "--k", "2", "--seed", "1"])
        assert code == EXIT_OK
        assert len(payload["assignment"]) == 3
        assert payload["verify"]["feasible"]

    def test_flags_after_subcommand(self, capsys):
        capsys.readouterr()
        assert main(["solve", "--seed", "1", "--json"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["method"] == "bba"

    def test_instance_file(self, tmp_path, capsys):
        from wpcn_relay.model import sample_instance

        path = tmp_path / "inst.json"
        path.write_text(sample_instance(2, 1, seed=3).to_json())
        code, payload = run_json(capsys, ["solve", "--instance", str(path), "--method", "or"])
        assert code == EXIT_OK and len(payload["assignment"]) == 2

    def test_unreadable_instance(self, tmp_path, capsys):
        assert main(["solve", "--instance", str(tmp_path / "missing.json")]) == EXIT_RUNTIME


class TestPipeline:
    def test_gen_data_deterministic(self, workdir, tmp_path, capsys):
        assert main(["gen-data", "--n", "2", "--k", "2", "--train", "60", "--val", "20", "--test", "10",
                     "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
        for suffix in ("train.jsonl", "val.jsonl", "test.jsonl", "meta.json"):
            assert filecmp.cmp(workdir / f"n2k2.{suffix}", tmp_path / f"n2k2.{suffix}", shallow=False)

    def test_train_outputs(self, workdir):
        model = Model.load(workdir / "sc-net.model.json")
        assert model.normalization["n"] == 2
        lines = (workdir / "sc-net.curves.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,train_ce,val_ce" and len(lines) == 4

    def test_distill(self, workdir, capsys):
        code, payload = run_json(capsys, [
            "distill", "--teacher", str(workdir / "sc-net.model.json"), "--epochs", "1",
            "--out", str(workdir), "--nodes", "4,4,4", "--stem", "tiny",
        ])
        assert code == EXIT_OK
        assert Model.load(payload["model"]).arch.nodes == (4, 4, 4)

    def test_search(self, workdir, capsys):
        code, payload = run_json(capsys, [
            "search", "--teacher", str(workdir / "sc-net.model.json"), "--epochs", "1",
            "--eps", "20000", "--vth", "5", "--out", str(workdir),
        ])
        assert code == EXIT_OK
        trace = json.loads((workdir / "search_trace.json").read_text())
        assert len(trace["records"]) == payload["iterations"] >= 1
        assert trace["threshold_met"]

    def test_evaluate_is_byte_stable(self, workdir, tmp_path):
        args = ["evaluate", "--data", str(workdir), "--models", str(workdir / "sc-net.model.json"), "--no-timing"]
        assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
        a, b = tmp_path / "a" / "report.csv", tmp_path / "b" / "report.csv"
        assert filecmp.cmp(a, b, shallow=False)
        lines = a.read_text().splitlines()
        assert lines[0] == "method,mean_total,gap,runtime,accuracy"
        methods = [line.split(",")[0] for line in lines[1:] if not line.startswith("#")]
        assert methods == ["bba", "or", "criterion", "direct", "sc-net"]
        assert lines[1].split(",")[2] == "0"

    def test_evaluate_with_timing(self, workdir, tmp_path, capsys):
        code, payload = run_json(capsys, ["evaluate", "--data", str(workdir), "--limit", "3",
                                          "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert payload["n_instances"] == 3
        assert all(r["runtime"] > 0 for r in payload["rows"])


class TestRuntimeErrors:
    def test_missing_dataset(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path), "--name", "none"]) == EXIT_RUNTIME

    def test_missing_teacher(self, workdir, tmp_path, capsys):
        assert main(["distill", "--data", str(workdir), "--teacher", str(tmp_path / "no.json")]) == EXIT_RUNTIME

    def test_size_mismatch(self, workdir, tmp_path, capsys):
        from wpcn_relay.neural import make_sc_net

        Model(make_sc_net(3, 2)).save(tmp_path / "big.model.json")
        assert main(["evaluate", "--data", str(workdir), "--models", str(tmp_path / "big.model.json"),
                     "--out", str(tmp_path)]) == EXIT_RUNTIME
