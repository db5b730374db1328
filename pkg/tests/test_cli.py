import json
import subprocess
import sys
from pathlib import Path

import pytest

from synthforge.annotation import read_manifest
from synthforge.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from synthforge.evaluation import Detection, PredictionRecord, write_predictions


@pytest.fixture
def config_file(assets, tmp_path):
    (pot, pot_obj, _), (carton, carton_obj, carton_tex) = assets["meshes"]
    path = tmp_path / "gen.toml"
    path.write_text(f"""
background_root = "{assets['backgrounds'].as_posix()}"
output_root = "run"
images_per_class = 2
master_seed = 5

[render]
width = 40
height = 32
samples_per_pixel = 2

[[classes]]
name = "{pot}"
mesh = "{Path(pot_obj).as_posix()}"

[[classes]]
name = "{carton}"
mesh = "{Path(carton_obj).as_posix()}"
texture = "{Path(carton_tex).as_posix()}"
""")
    return path


@pytest.fixture
def generated(config_file):
    assert main(["generate", "--config", str(config_file)]) == EXIT_OK
    return config_file.parent / "run"


def test_generate_inspect(generated, capsys):
    assert (generated / "manifest.json").exists()
    capsys.readouterr()
    assert main(["inspect", "--manifest", str(generated / "manifest.json")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "4 samples, 2 classes" in out
    assert "[0] pot: 2" in out and "[1] carton: 2" in out
    assert "bbox width" in out


def test_split_command(generated, capsys):
    out_path = generated / "split.json"
    assert main(["split", "--manifest", str(generated / "manifest.json"), "--val-fraction", "0.5",
                 "--seed", "3", "--output", str(out_path)]) == EXIT_OK
    assert "train 2, val 2" in capsys.readouterr().out
    assert read_manifest(out_path).split.count("val") == 2
    assert read_manifest(generated / "manifest.json").split is None
    assert main(["split", "--manifest", str(out_path), "--val-fraction", "1.5", "--seed", "3"]) == EXIT_CONFIG


def test_render_one_matches_dataset(generated, config_file, tmp_path, capsys):
    out = tmp_path / "debug"
    assert main(["render-one", "--config", str(config_file), "--class", "carton", "--index", "1",
                 "--out", str(out)]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["class_id"] == 1 and doc["index"] == 1
    from PIL import Image
    import numpy as np

    a = np.asarray(Image.open(out / "carton_000001.png"))
    b = np.asarray(Image.open(generated / "images/carton/000001.png"))
    np.testing.assert_array_equal(a, b)
    assert (out / "carton_000001_pose.png").exists() and (out / "carton_000001_mask.png").exists()
    assert main(["render-one", "--config", str(config_file), "--class", "0", "--index", "0", "--out", str(out)]) == 0
    assert main(["render-one", "--config", str(config_file), "--class", "soup", "--index", "0"]) == EXIT_CONFIG


def test_evaluate_command(generated, tmp_path, capsys):
    m = read_manifest(generated / "manifest.json")
    preds = [PredictionRecord(s.image_id, [Detection(s.class_id, 0.9), Detection(1 - s.class_id, 0.1)])
             for s in m.samples[:3]]
    write_predictions(preds, tmp_path / "p.jsonl")
    report = tmp_path / "r.json"
    assert main(["evaluate", "--manifest", str(generated / "manifest.json"), "--predictions",
                 str(tmp_path / "p.jsonl"), "--dac-k", "1", "--report", str(report)]) == EXIT_OK
    assert "DAC@1 0.75" in capsys.readouterr().out
    doc = json.loads(report.read_text())
    assert doc["missing_predictions"] == 1 and doc["accuracy"] == 1.0


def test_resume_flag(generated, config_file):
    assert main(["generate", "--config", str(config_file), "--resume", "--workers", "1"]) == EXIT_OK
    assert json.loads((generated / "run_report.json").read_text())["rendered_this_run"] == 0


def test_config_errors_exit_1(tmp_path, config_file, capsys):
    assert main(["generate", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    bad = tmp_path / "bad.toml"
    bad.write_text(config_file.read_text().replace("images_per_class = 2", "images_per_class = 0"))
    assert main(["generate", "--config", str(bad)]) == EXIT_CONFIG
    nobg = tmp_path / "nobg.toml"
    nobg.write_text(config_file.read_text().replace('background_root = "', 'background_root = "/nonexistent'))
    assert main(["generate", "--config", str(nobg)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_io_errors_exit_2(tmp_path, generated):
    assert main(["evaluate", "--manifest", str(generated / "manifest.json"),
                 "--predictions", str(tmp_path / "nope.jsonl")]) == EXIT_IO
    (tmp_path / "blocker").write_text("")
    assert main(["split", "--manifest", str(generated / "manifest.json"), "--val-fraction", "0.5", "--seed", "1",
                 "--output", str(tmp_path / "blocker" / "x.json")]) == EXIT_IO


def test_bad_manifest_exit_1(tmp_path):
    (tmp_path / "m.json").write_text("{}")
    assert main(["inspect", "--manifest", str(tmp_path / "m.json")]) == EXIT_CONFIG


def test_module_entry_point_and_log_env(tmp_path):
    (tmp_path / "m.json").write_text('{"version": 1, "categories": [], "images": [], "annotations": [],'
                                     ' "synthforge": {"samples": []}}')
    proc = subprocess.run([sys.executable, "-m", "synthforge", "inspect", "--manifest", str(tmp_path / "m.json")],
                          capture_output=True, text=True, env={"SYNTHFORGE_LOG": "debug", "PATH": ""})
    assert proc.returncode == 0, proc.stderr
    assert "0 samples" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "synthforge"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr
