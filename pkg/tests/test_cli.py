import json
import subprocess
import sys

import numpy as np
import pytest

from taylorattr.cli import main
from taylorattr.evaluation import read_pgm
from taylorattr.model import DenseLayer, Network, save_model


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_attribute_to_stdout(capsys):
    code, out, _ = run(["attribute", "--poly", "x1^2*x2", "--input", "1,2", "--method", "gradient_x_input"], capsys)
    assert code == 0
    assert json.loads(out)["scores"] == [4.0, 2.0]


def test_attribute_ig3_byte_identical(tmp_path, capsys):
    argv = ["attribute", "--poly", "x1^2*x2 + x2*x3", "--input", "1,2,-1", "--method", "ig3",
            "--seed", "7", "--num-baselines", "20", "--sigma", "63.75"]
    outs = []
    for k in range(2):
        path = tmp_path / f"out{k}.json"
        assert main(argv + ["--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_attribute_network_image_and_export(tmp_path, capsys):
    img = np.arange(16, dtype=float).reshape(4, 4) * 10
    (tmp_path / "x.pgm").write_bytes(b"P5\n4 4\n255\n" + img.astype(np.uint8).tobytes())
    save_model(Network((DenseLayer(np.ones((1, 16)), [0.0]),)), tmp_path / "m.model.json")
    code, _, _ = run(["attribute", "--model", str(tmp_path / "m.model.json"), "--input", str(tmp_path / "x.pgm"),
                      "--method", "perturbation_patch", "--patch-size", "2", "--out", str(tmp_path / "a.json")], capsys)
    assert code == 0
    scores = json.loads((tmp_path / "a.json").read_text())["scores"]
    assert scores[0] == scores[1] == scores[4] == scores[5] == 0 + 10 + 40 + 50
    code, _, _ = run(["export", "--attribution", str(tmp_path / "a.json"), "--height", "4", "--width", "4",
                      "--out", str(tmp_path / "s.pgm")], capsys)
    assert code == 0 and read_pgm(tmp_path / "s.pgm").shape == (4, 4)


def test_attribute_feature_mismatch(capsys):
    code, _, err = run(["attribute", "--poly", "x1*x3", "--input", "1,2", "--method", "gradient"], capsys)
    assert code == 1 and "error" in err


def test_verify_small_suite(tmp_path, capsys):
    code, out, _ = run(["verify", "--count", "8", "--json", str(tmp_path / "v.json")], capsys)
    assert code == 0
    assert "deeplift_rescale" in out
    assert json.loads((tmp_path / "v.json").read_text())["summary"]["exact_ig"]["pass"]


def test_eval_missing_model_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere.model.json"
    code, _, err = run(["eval", "--manifest", str(tmp_path / "m.jsonl"), "--model", str(missing)], capsys)
    assert code == 1 and str(missing) in err


def test_gen_train_eval_pipeline(tmp_path, capsys):
    data = tmp_path / "data"
    assert run(["gen-data", "--count", "12", "--out-dir", str(data)], capsys)[0] == 0
    model = tmp_path / "clf.model.json"
    assert run(["train", "--manifest", str(data / "manifest.jsonl"), "--out", str(model), "--epochs", "3"], capsys)[0] == 0
    code, out, _ = run(["eval", "--manifest", str(data / "manifest.jsonl"), "--model", str(model),
                        "--methods", "gradient", "ig3@J=2", "random", "--num-baselines", "2", "--steps", "8",
                        "--out-json", str(tmp_path / "r.json"), "--out-csv", str(tmp_path / "r.csv")], capsys)
    assert code == 0 and "ig3@J=2" in out
    assert json.loads((tmp_path / "r.json").read_text())["samples_used"] == 6


def test_eval_unknown_method(tmp_path, capsys):
    save_model(Network((DenseLayer(np.ones((1, 4)), [0.0]),)), tmp_path / "m.json")
    (tmp_path / "man.jsonl").write_text("")
    code, _, err = run(["eval", "--manifest", str(tmp_path / "man.jsonl"), "--model", str(tmp_path / "m.json"),
                        "--methods", "gradcam"], capsys)
    assert code == 1 and "gradcam" in err


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--no-such-flag"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "taylorattr", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "attribute" in proc.stdout
