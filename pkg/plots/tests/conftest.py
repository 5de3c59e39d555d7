import csv

import pytest

SUMMARY_COLUMNS = (
    "experiment", "layer_l", "seed", "width", "best_loss", "best_error", "ref_loss",
)
PATH_COLUMNS = ("t", "segment_index", "segment_label", "train_loss", "train_error")


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerows(rows)


@pytest.fixture
def three_seed_summary(tmp_path):
    """Summary rows for three model seeds with hand-friendly loss values."""
    rows = []
    for seed, base in ((1, 0.2), (2, 0.3), (3, 0.4)):
        for layer in (0, 1, 2):
            rows.append(("subnet-bound", layer, seed, 16,
                         base + 0.01 * layer, 0.0, 0.05))
            if layer:
                rows.append(("dropout", layer, seed, 16,
                             2 * base + 0.01 * layer, 0.0, 0.05))
    path = tmp_path / "summary.csv"
    write_csv(path, SUMMARY_COLUMNS, rows)
    return str(path)


@pytest.fixture
def single_seed_summary(tmp_path):
    rows = [("subnet-bound", layer, 5, 32, 0.1 + 0.02 * layer, 0.0, 0.04)
            for layer in (0, 1, 2)]
    path = tmp_path / "single.csv"
    write_csv(path, SUMMARY_COLUMNS, rows)
    return str(path)


@pytest.fixture
def path_report(tmp_path):
    rows = [
        (0.0, 0, "output-interp", 0.05, 0.0),
        (0.5, 0, "output-interp", 0.08, 0.0),
        (1.0, 1, "zero-incoming", 0.04, 0.0),
    ]
    path = tmp_path / "path-report.csv"
    write_csv(path, PATH_COLUMNS, rows)
    return str(path)
