"""Schema-checked readers for the experiment CSV files.

The column lists mirror the documented output schemas of the experiment
driver; a file with a different header is rejected by name.
"""

from __future__ import annotations

import csv

SUMMARY_COLUMNS = (
    "experiment", "layer_l", "seed", "width", "best_loss", "best_error", "ref_loss",
)
PATH_REPORT_COLUMNS = (
    "t", "segment_index", "segment_label", "train_loss", "train_error",
)

_FLOAT_FIELDS = {"best_loss", "best_error", "ref_loss", "t", "train_loss",
                 "train_error"}
_INT_FIELDS = {"layer_l", "seed", "width", "segment_index"}


class SchemaError(ValueError):
    """A CSV file does not carry the expected columns."""


def read_rows(path: str, columns) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != tuple(columns):
            raise SchemaError(
                f"{path}: columns {reader.fieldnames} != expected {list(columns)}"
            )
        rows = []
        for raw in reader:
            row = {}
            for key, value in raw.items():
                if key in _FLOAT_FIELDS:
                    row[key] = float(value)
                elif key in _INT_FIELDS:
                    row[key] = int(value)
                else:
                    row[key] = value
            rows.append(row)
    return rows


def read_summaries(paths) -> list[dict]:
    rows = []
    for path in paths:
        rows.extend(read_rows(path, SUMMARY_COLUMNS))
    return rows


def read_path_report(path: str) -> list[dict]:
    return read_rows(path, PATH_REPORT_COLUMNS)
