import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from mvflstm.cli import main
from mvflstm.features import write_wav
from mvflstm.serialization import load_features, save_params

TOY_TEXT = """\
# two views over 16 bins x 3 stacked frames
input_dim=48
view F=6 S=3 K=2 L=4
view F=12 K=2 L=4
projection=16
tlstm=2x32
outputs=5
"""


def assert_exit(argv, code):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == code


def test_table1_text(capsys):
    assert main(["table1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 15
    assert out[2].split()[0] == "01" and out[-1].split()[0] == "13"
    assert "25,613,872" in out[2]


def test_table1_csv(capsys):
    assert main(["table1", "--csv"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 13 and rows[12]["total"] == "28617008"


def test_analyze_table1_with_two_biases(capsys):
    assert main(["analyze", "--table1", "--biases", "2", "--csv"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows[0]["total"] == str(25_613_872 + 5 * 4 * 768)


def test_unknown_flag_is_usage_error(capsys):
    assert_exit(["table1", "--bogus"], 1)
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand_is_usage_error():
    assert_exit([], 1)


def test_analyze_config_and_baseline(tmp_path, capsys):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(TOY_TEXT)
    base = tmp_path / "base.cfg"
    base.write_text("input_dim=48\ntlstm=2x32\noutputs=5\n")
    assert main(["analyze", "--config", str(cfg), "--baseline", str(base)]) == 0
    out = capsys.readouterr().out
    assert "multi-view output V = 176" in out and "delta %" in out
    assert main(["analyze", "--config", str(cfg), "--csv"]) == 0
    assert capsys.readouterr().out.splitlines()[1].startswith("toy.cfg,")


def test_analyze_needs_config(capsys):
    assert main(["analyze"]) == 1


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("input_dim=48\nview F=7 S=3 K=1 L=2\ntlstm=1x4\noutputs=3\n")
    assert main(["analyze", "--config", str(bad)]) == 2
    assert main(["analyze", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert "error" in capsys.readouterr().err


def test_gradcheck_seed_7(capsys):
    assert main(["gradcheck", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "seed 7" in out


def test_gradcheck_impossible_tolerance_is_numeric_failure(capsys):
    assert main(["gradcheck", "--seed", "7", "--tolerance", "1e-30"]) == 3


def test_ctc_selftest(capsys):
    assert main(["ctc-selftest", "--instances", "50", "--completeness", "5"]) == 0
    assert main(["ctc-selftest", "--instances", "50", "--completeness", "5", "--tolerance", "0"]) == 3


def test_features_from_wav(tmp_path, capsys):
    rng = np.random.default_rng(0)
    write_wav(tmp_path / "a.wav", np.clip(0.2 * rng.standard_normal(2000), -0.99, 0.99), 8000)
    argv = ["features", str(tmp_path / "a.wav"), str(tmp_path / "a.fea"),
            "--frame-length", "64", "--frame-shift", "16", "--bins", "32"]
    assert main(argv) == 0
    x = load_features(tmp_path / "a.fea")
    assert x.shape == ((1 + (2000 - 64) // 16) // 3, 96)

    stats = {"mean": [0.0] * 96, "variance": [4.0] * 96, "count": 1}
    (tmp_path / "s.json").write_text(json.dumps(stats))
    assert main(argv[:3] + ["--mvn", str(tmp_path / "s.json")] + argv[3:]) == 0
    np.testing.assert_allclose(load_features(tmp_path / "a.fea"), x / 2, rtol=1e-6)


def test_features_bad_wav(tmp_path):
    (tmp_path / "x.wav").write_bytes(b"not a wav")
    assert main(["features", str(tmp_path / "x.wav"), str(tmp_path / "x.fea")]) == 2


def test_train_then_eval(tmp_path, capsys):
    out, metrics = tmp_path / "p.mvf", tmp_path / "m.csv"
    argv = ["train", "--steps", "4", "--warm-start", "2", "--batch-size", "2", "--eval-every", "2",
            "--out", str(out), "--metrics", str(metrics)]
    assert main(argv) == 0
    assert "label error rate" in capsys.readouterr().out
    assert metrics.read_text().splitlines()[0] == "step,phase,loss,label_error_rate"
    assert main(["eval", "--params", str(out), "--utterances", "5"]) == 0
    assert "utterances 5" in capsys.readouterr().out


def test_eval_rejects_mismatched_params(tmp_path):
    bad = tmp_path / "bad.mvf"
    save_params(bad, [np.zeros((2, 2), np.float32)])
    assert main(["eval", "--params", str(bad), "--utterances", "2"]) == 2


def test_train_divergence_exit_code():
    assert main(["train", "--steps", "2", "--warm-start", "1", "--batch-size", "1", "--noise", "nan"]) == 3


def test_seed_env_var(tmp_path, monkeypatch):
    def run(name):
        path = tmp_path / name
        assert main(["train", "--steps", "3", "--warm-start", "1", "--batch-size", "2", "--metrics", str(path)]) == 0
        return path.read_text()

    monkeypatch.setenv("MVFLSTM_SEED", "11")
    a = run("a.csv")
    b = run("b.csv")
    monkeypatch.setenv("MVFLSTM_SEED", "12")
    c = run("c.csv")
    assert a == b and a != c


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "mvflstm", "table1", "--csv"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("id,total,delta_pct")
