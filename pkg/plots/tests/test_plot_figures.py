import math
import os

import pytest

from mcplots import FigureSpec, render
from mcplots.csvio import SchemaError, read_summaries
from mcplots.figures import mean_and_band


def test_band_matches_hand_computed_oracle():
    # losses 0.2, 0.3, 0.4: mean 0.3, sample std 0.1,
    # half-width = 1.96 * 0.1 / sqrt(3) = 0.1131607...
    mean, half = mean_and_band([0.2, 0.3, 0.4])
    assert abs(mean - 0.3) <= 1e-15
    assert abs(half - 1.96 * 0.1 / math.sqrt(3)) <= 1e-12
    assert abs(half - 0.11316067) <= 1e-7


def test_band_omitted_below_three_seeds():
    assert mean_and_band([0.2])[1] is None
    assert mean_and_band([0.2, 0.4])[1] is None


def test_layer_curves_three_seed_band(three_seed_summary, tmp_path):
    out = str(tmp_path / "fig.png")
    data = render(FigureSpec("layer-curves", [three_seed_summary], out))
    assert os.path.getsize(out) > 0
    series = data["series"]["subnet-bound"]
    # layer 0 losses are 0.2/0.3/0.4 across the seeds
    half = series["high"][0] - series["mean"][0]
    assert abs(series["mean"][0] - 0.3) <= 1e-12
    assert abs(half - 1.96 * 0.1 / math.sqrt(3)) <= 1e-12
    assert abs(data["reference"] - 0.05) <= 1e-12


def test_layer_curves_single_seed_band_collapses(single_seed_summary, tmp_path):
    out = str(tmp_path / "fig.png")
    data = render(FigureSpec("layer-curves", [single_seed_summary], out))
    series = data["series"]["subnet-bound"]
    assert series["low"] == series["mean"] == series["high"]


def test_path_loss_series(path_report, tmp_path):
    out = str(tmp_path / "fig.png")
    data = render(FigureSpec("path-loss", [path_report], out))
    assert os.path.getsize(out) > 0
    series = data["series"]["path-report"]
    assert series["x"] == [0.0, 0.5, 1.0]
    assert series["loss"] == [0.05, 0.08, 0.04]


def test_width_sweep_max_over_layers(three_seed_summary, tmp_path):
    out = str(tmp_path / "fig.png")
    data = render(FigureSpec("width-sweep", [three_seed_summary], out))
    series = data["series"]["subnet-bound"]
    assert series["x"] == [16]
    # per seed the max over layers is base + 0.02; mean over 0.22/0.32/0.42
    assert abs(series["mean"][0] - 0.32) <= 1e-12


def test_log_variant_renders(three_seed_summary, tmp_path):
    out = str(tmp_path / "fig.png")
    render(FigureSpec("layer-curves", [three_seed_summary], out, log_scale=True))
    assert os.path.getsize(out) > 0


def test_rerender_identical_bytes(three_seed_summary, tmp_path):
    a = str(tmp_path / "a.png")
    b = str(tmp_path / "b.png")
    render(FigureSpec("layer-curves", [three_seed_summary], a))
    render(FigureSpec("layer-curves", [three_seed_summary], b))
    assert open(a, "rb").read() == open(b, "rb").read()


def test_schema_mismatch_named(path_report, tmp_path):
    with pytest.raises(SchemaError) as err:
        read_summaries([path_report])
    assert "columns" in str(err.value)


def test_missing_input_rejected(tmp_path):
    with pytest.raises(FileNotFoundError):
        FigureSpec("layer-curves", [str(tmp_path / "nope.csv")],
                   str(tmp_path / "o.png"))


def test_unknown_kind_rejected(three_seed_summary, tmp_path):
    with pytest.raises(ValueError):
        FigureSpec("pie", [three_seed_summary], str(tmp_path / "o.png"))
