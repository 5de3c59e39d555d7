"""Secondary acceptance: regenerate every figure kind from CSVs produced by
the experiment driver through its command-line interface, plus the
hand-computed confidence-band oracle (in test_figures)."""

import math
import os
import shutil
import subprocess
import sys

import pytest

from mcplots import FigureSpec, render

DRIVER = shutil.which("modeconn") or None

CONFIG = """\
[data]
kind = blobs
n = 60
dim = 2
classes = 2
noise = 0.4
seed = 5

[arch]
widths = 2,{width},{width},2

[train]
lr = 0.1
momentum = 0.9
batch = 30
epochs = 200
target_loss = 0.02

[bounds]
trials = 2
epochs = 50

[dropout]
trials = 4

[path]
trials = 2
samples_per_segment = 5
epochs = 50
lr = 0.2
"""


def run_driver(args, cwd):
    cmd = [DRIVER] if DRIVER else [sys.executable, "-m", "modeconn.cli"]
    res = subprocess.run(cmd + [str(a) for a in args], cwd=cwd,
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return res


@pytest.fixture(scope="module")
def driver_outputs(tmp_path_factory):
    """Real CSV outputs from small path and width-sweep runs."""
    tmp = tmp_path_factory.mktemp("driver")
    summaries = []
    for width in (8, 16):
        cfg = tmp / f"w{width}.ini"
        cfg.write_text(CONFIG.format(width=width))
        for seed in (1, 2, 3):
            out = tmp / f"w{width}-s{seed}"
            run_driver(["train", "--config", cfg, "--out", out,
                        "--seed", seed, "--jobs", 1], tmp)
            model = out / f"model-seed{seed}.mcnet"
            run_driver(["bounds", "--config", cfg, "--out", out,
                        "--seed", seed, "--jobs", 1, model], tmp)
            run_driver(["dropout", "--config", cfg, "--out", out,
                        "--seed", seed, "--jobs", 1, model], tmp)
            summaries.append(str(out / "bounds-summary.csv"))
            summaries.append(str(out / "dropout-summary.csv"))
    cfg8 = tmp / "w8.ini"
    path_out = tmp / "pathrun"
    run_driver(["path", "--config", cfg8, "--out", path_out, "--seed", 9,
                "--jobs", 1,
                tmp / "w8-s1" / "model-seed1.mcnet",
                tmp / "w8-s2" / "model-seed2.mcnet"], tmp)
    return {
        "summaries": summaries,
        "path_report": str(path_out / "path-report.csv"),
        "dir": tmp,
    }


def test_all_four_figure_kinds_from_driver_outputs(driver_outputs, tmp_path):
    figs = {
        "layer-curves": FigureSpec(
            "layer-curves", driver_outputs["summaries"],
            str(tmp_path / "layers.png"),
        ),
        "path-loss": FigureSpec(
            "path-loss", [driver_outputs["path_report"]],
            str(tmp_path / "path.png"),
        ),
        "width-sweep": FigureSpec(
            "width-sweep", driver_outputs["summaries"],
            str(tmp_path / "sweep.png"),
        ),
        "layer-curves-log": FigureSpec(
            "layer-curves", driver_outputs["summaries"],
            str(tmp_path / "layers-log.png"), log_scale=True,
        ),
    }
    for name, spec in figs.items():
        data = render(spec)
        assert os.path.getsize(spec.out) > 0, name
        assert data["series"], name
    # three seeds per width: the confidence band exists on the curves
    data = render(FigureSpec("layer-curves", driver_outputs["summaries"],
                             str(tmp_path / "again.png")))
    series = data["series"]["subnet-bound"]
    assert any(h > m for h, m in zip(series["high"], series["mean"]))
    print("PASS figure regeneration (4 kinds, nonempty, banded)")
