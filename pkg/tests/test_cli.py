import csv
import json
import os

import pytest

from shapesync.cli import main

TINY = [
    "--set", "synth.train_clips=3",
    "--set", "synth.eval_clips=2",
    "--set", "synth.frames=8",
    "--set", "synth.height=32",
    "--set", "synth.width=32",
    "--set", "synth.head_radius=6",
    "--set", "schedule.steps=5",
    "--set", "train.steps=3",
    "--set", "train.batch_size=2",
    "--set", "train.checkpoint_every=2",
]


@pytest.fixture(scope="module")
def run_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = str(root / "corpus")
    train = str(root / "train")
    dub = str(root / "dub")
    assert main(TINY + ["synth", "--out", corpus]) == 0
    assert main(TINY + ["train", "--corpus", corpus, "--out", train]) == 0
    assert main(TINY + ["dub", "--checkpoint", f"{train}/model.unis",
                        "--corpus", f"{corpus}/eval", "--clips", "1",
                        "--out", dub]) == 0
    return corpus, train, dub


def test_synth_layout(run_dirs):
    corpus, _, _ = run_dirs
    assert os.path.isdir(f"{corpus}/train/clip_0000")
    assert len(os.listdir(f"{corpus}/train")) >= 3
    assert os.path.exists(f"{corpus}/resolved_config.json")
    with open(f"{corpus}/resolved_config.json") as f:
        assert json.load(f)["synth"]["train_clips"] == 3


def test_train_outputs(run_dirs):
    _, train, _ = run_dirs
    assert os.path.exists(f"{train}/model.unis")
    assert os.path.exists(f"{train}/ckpt_000002.unis")
    with open(f"{train}/loss.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "loss", "grad_norm"]
    assert len(rows) == 4


def test_dub_outputs(run_dirs):
    _, _, dub = run_dirs
    clip = f"{dub}/clip_0000"
    assert os.path.isdir(f"{clip}/gen")
    assert os.path.isdir(f"{clip}/composited")
    assert os.path.exists(f"{clip}/latent.grd")


def test_eval_ground_truth(run_dirs, tmp_path, capsys):
    corpus, _, _ = run_dirs
    out = str(tmp_path / "eval")
    assert main(TINY + ["eval", "--corpus", f"{corpus}/eval", "--out", out]) == 0
    with open(f"{out}/eval.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0][0] == "clip"
    assert len(rows) == 3


def test_sweep_csv(run_dirs, tmp_path):
    corpus, train, _ = run_dirs
    out = str(tmp_path / "sweep")
    assert main(TINY + ["sweep", "--checkpoint", f"{train}/model.unis",
                        "--corpus", f"{corpus}/eval", "--clips", "1",
                        "--taus", "0.0,0.8", "--seeds", "0",
                        "--out", out]) == 0
    with open(f"{out}/sweep.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["tau", "seed", "clip", "background_psnr", "sync_corr",
                       "pose_drift", "boundary_grad", "gsr"]
    assert len(rows) == 3


def test_composite_command(run_dirs, tmp_path):
    corpus, _, dub = run_dirs
    out = str(tmp_path / "comp")
    clip = f"{corpus}/eval/clip_0000"
    assert main(TINY + ["composite", "--gen", f"{dub}/clip_0000/gen",
                        "--video", f"{clip}/frames", "--mask", f"{clip}/mask",
                        "--out", out]) == 0
    assert os.path.isdir(f"{out}/composited")


def test_gradcheck_command():
    assert main(["--set", "schedule.steps=5", "gradcheck"]) == 0


def test_bad_config_exit_code(capsys, tmp_path):
    rc = main(["--set", "sampler.tau_inj=2.0", "synth",
               "--out", str(tmp_path / "x")])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error:") and "\n" not in err.strip()


def test_unknown_key_exit_code(tmp_path):
    assert main(["--set", "bogus.key=1", "synth",
                 "--out", str(tmp_path / "y")]) == 2


def test_runtime_error_exit_code(tmp_path):
    rc = main(TINY + ["train", "--corpus", str(tmp_path / "missing"),
                      "--out", str(tmp_path / "z")])
    assert rc == 1
