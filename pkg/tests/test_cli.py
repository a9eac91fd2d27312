import hashlib
import os

import pytest

from twostream_reid import cli


def run(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Corpus + pair manifests + one trained plate checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    corpus = str(root / "corpus")
    pairs = str(root / "pairs")
    run_dir = str(root / "run")
    base = ["--seed", "11"]
    assert cli.main(["synth", "--out", corpus, "--n-vehicles", "14",
                     "--match-fraction", "0.6", "--occurrences", "2",
                     "--shape-classes", "4"] + base) == 0
    assert cli.main(["pairs", "--manifest", f"{corpus}/manifest.csv",
                     "--out", pairs, "--n", "2", "--lambda", "3"] + base) == 0
    assert cli.main(["train", "--pairs", f"{pairs}/train.pairs", "--corpus", corpus,
                     "--out", run_dir, "--model", "plate", "--backbone", "lenet5",
                     "--epochs", "2", "--batch-size", "16"] + base) == 0
    return {"corpus": corpus, "pairs": pairs, "run": run_dir, "root": root}


class TestSynth:
    def test_stats_block_and_manifest(self, workspace, capsys, tmp_path):
        out = str(tmp_path / "c")
        code, text, _ = run(["synth", "--out", out, "--n-vehicles", "6", "--seed", "1"], capsys)
        assert code == 0
        assert "Camera  #Vehicles  #Plates" in text
        assert "resolved config:" in text and "seed = 1" in text
        assert os.path.isfile(os.path.join(out, "manifest.csv"))

    def test_same_seed_identical_manifest(self, capsys, tmp_path):
        digests = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            assert cli.main(["synth", "--out", out, "--n-vehicles", "6", "--seed", "7"]) == 0
            digests.append(hashlib.sha256(
                open(os.path.join(out, "manifest.csv"), "rb").read()).hexdigest())
        capsys.readouterr()
        assert digests[0] == digests[1]

    def test_bad_out_dir_is_runtime_error(self, capsys):
        code, _, err = run(["synth", "--out", "/proc/nope/x"], capsys)
        assert code == 3 and "runtime error" in err


class TestPairs:
    def test_settings_block_shows_lambda_relation(self, workspace, capsys, tmp_path):
        out = str(tmp_path / "p")
        code, text, _ = run(["pairs", "--manifest", f"{workspace['corpus']}/manifest.csv",
                             "--out", out, "--n", "2", "--lambda", "3", "--seed", "4"], capsys)
        assert code == 0
        pos, neg = 0, 0
        for line in text.splitlines():
            if line.strip().startswith("Testing:"):
                parts = line.split()
                pos, neg = int(parts[2]), int(parts[4])
        assert neg == 3 * pos > 0

    def test_pool_exhaustion_reports_size(self, workspace, capsys, tmp_path):
        code, _, err = run(["pairs", "--manifest", f"{workspace['corpus']}/manifest.csv",
                            "--out", str(tmp_path / "p"), "--n", "2", "--lambda", "9999"],
                           capsys)
        assert code == 1 and "pool has only" in err

    def test_same_seed_identical_manifests(self, workspace, capsys, tmp_path):
        blobs = []
        for name in ("p1", "p2"):
            out = str(tmp_path / name)
            assert cli.main(["pairs", "--manifest", f"{workspace['corpus']}/manifest.csv",
                             "--out", out, "--n", "2", "--lambda", "2", "--seed", "6"]) == 0
            blobs.append(open(os.path.join(out, "test.pairs"), "rb").read())
        capsys.readouterr()
        assert blobs[0] == blobs[1]


class TestTrain:
    def test_artifacts_written(self, workspace):
        assert os.path.isfile(os.path.join(workspace["run"], "best.ckpt"))
        assert os.path.isfile(os.path.join(workspace["run"], "log.csv"))

    def test_unknown_backbone_is_usage_error(self, workspace, capsys, tmp_path):
        code, _, err = run(["train", "--pairs", f"{workspace['pairs']}/train.pairs",
                            "--corpus", workspace["corpus"], "--out", str(tmp_path / "x"),
                            "--model", "plate", "--backbone", "resnet"], capsys)
        assert code == 1 and "invalid choice" in err

    def test_missing_required_setting_is_usage_error(self, capsys):
        code, _, err = run(["train", "--model", "plate"], capsys)
        assert code == 1 and "missing required settings" in err


class TestEval:
    def test_report_row(self, workspace, capsys, tmp_path):
        records = str(tmp_path / "records.csv")
        code, text, _ = run(["eval", "--checkpoint", f"{workspace['run']}/best.ckpt",
                             "--pairs", f"{workspace['pairs']}/test.pairs",
                             "--corpus", workspace["corpus"], "--label", "siamese-plate",
                             "--out", records], capsys)
        assert code == 0
        header = next(line for line in text.splitlines() if line.startswith("model"))
        assert "siamese-plate" in text
        for col in ("tp", "fp", "fn", "tn", "P", "R", "F", "A"):
            assert f" {col}" in header
        lines = open(records).read().splitlines()
        assert lines[0].startswith("model,N,lambda,tp,fp,fn,tn,P,R,F,A")

    def test_wrong_manifest_kind_is_validation_error(self, workspace, capsys):
        code, _, err = run(["eval", "--checkpoint", f"{workspace['run']}/best.ckpt",
                            "--pairs", f"{workspace['corpus']}/manifest.csv",
                            "--corpus", workspace["corpus"]], capsys)
        assert code == 2 and "validation error" in err


class TestInfer:
    def plate_path(self, workspace):
        cam1 = os.path.join(workspace["corpus"], "cam1")
        return os.path.join(cam1, sorted(p for p in os.listdir(cam1) if "plate" in p)[0])

    def test_verdict_line(self, workspace, capsys):
        plate = self.plate_path(workspace)
        code, text, _ = run(["infer", "--checkpoint", f"{workspace['run']}/best.ckpt",
                             "--plate1", plate, "--plate2", plate], capsys)
        assert code == 0
        assert "p(matching)" in text and "verdict:" in text

    def test_modality_mismatch_is_usage_error(self, workspace, capsys):
        shape = self.plate_path(workspace).replace("plate", "shape")
        code, _, err = run(["infer", "--checkpoint", f"{workspace['run']}/best.ckpt",
                            "--shape1", shape, "--shape2", shape], capsys)
        assert code == 1 and "requires exactly" in err

    def test_missing_file_is_runtime_error(self, workspace, capsys):
        code, _, err = run(["infer", "--checkpoint", f"{workspace['run']}/best.ckpt",
                            "--plate1", "nope.png", "--plate2", "nope.png"], capsys)
        assert code == 3


class TestConfigFile:
    def test_flags_override_file(self, workspace, capsys, tmp_path):
        cfg = tmp_path / "pairs.cfg"
        cfg.write_text("n = 2\nlambda = 3\ntest-fraction = 0.4  # inline comment\n")
        code, text, _ = run(["pairs", "--manifest", f"{workspace['corpus']}/manifest.csv",
                             "--out", str(tmp_path / "p"), "--config", str(cfg),
                             "--lambda", "2"], capsys)
        assert code == 0
        assert "lam = 2" in text  # flag wins
        assert "test_fraction = 0.4" in text  # file fills the rest

    def test_unknown_key_rejected(self, workspace, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("warp_speed = 9\n")
        code, _, err = run(["pairs", "--manifest", f"{workspace['corpus']}/manifest.csv",
                            "--out", str(tmp_path / "p"), "--config", str(cfg)], capsys)
        assert code == 1 and "unknown config keys" in err

    def test_malformed_line_rejected(self, workspace, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just some words\n")
        code, _, err = run(["pairs", "--manifest", f"{workspace['corpus']}/manifest.csv",
                            "--out", str(tmp_path / "p"), "--config", str(cfg)], capsys)
        assert code == 2 and "expected 'key = value'" in err


class TestTopLevel:
    def test_no_subcommand_prints_help(self, capsys):
        code, text, _ = run([], capsys)
        assert code == 1 and "synth" in text and "infer" in text

    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, err = run(["synth", "--frobnicate"], capsys)
        assert code == 1
