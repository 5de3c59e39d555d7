"""Dataset generation, IDX image loading, and the on-disk formats.

Model files are a single file in two parts: a UTF-8 JSON manifest, a
separator byte pair ``b"\\n\\x00"``, then a little-endian float64 blob in
the fixed order W_1 (row-major, rows = input side), b_1, W_2, b_2, ...,
b_{L-1}, W_L.  Path files follow the same scheme with one blob per
breakpoint.  Loads of anything saved here are bitwise round trips.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .network import Dataset, NetworkArch, Params
from .pathbuild import PWLPath
from .rng import SplitMix64

MODEL_TAG = "MCNET1"
PATH_TAG = "MCPATH1"
_SEPARATOR = b"\n\x00"

DATA_KINDS = ("blobs", "moons", "planted-separable", "xor", "mnist-subset")


class FormatError(ValueError):
    """A file does not match its declared format."""


class IdxParseError(FormatError):
    """IDX parsing failure; carries the byte offset of the problem."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"byte {offset}: {message}")


@dataclass(frozen=True)
class DataSpec:
    kind: str
    n: int
    dim: int = 2
    classes: int = 2
    noise: float = 0.3
    seed: int = 0
    images: str | None = None
    labels: str | None = None

    def __post_init__(self):
        if self.kind not in DATA_KINDS:
            raise ValueError(f"unknown data kind {self.kind!r}")
        if self.n < self.classes:
            raise ValueError("need at least one sample per class")
        if self.kind == "mnist-subset" and (self.images is None or self.labels is None):
            raise ValueError("mnist-subset needs image and label file paths")


def _onehot(labels: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _circle_anchors(classes: int, dim: int, radius: float) -> np.ndarray:
    anchors = np.zeros((classes, dim))
    angles = 2.0 * np.pi * np.arange(classes) / classes
    anchors[:, 0] = radius * np.cos(angles)
    if dim > 1:
        anchors[:, 1] = radius * np.sin(angles)
    return anchors


def _balanced_labels(n: int, classes: int, rng: SplitMix64) -> np.ndarray:
    labels = np.arange(n, dtype=np.int64) % classes
    return labels[rng.permutation(n)]


def _make_blobs(spec: DataSpec, rng: SplitMix64) -> Dataset:
    anchors = _circle_anchors(spec.classes, spec.dim, 3.0)
    labels = _balanced_labels(spec.n, spec.classes, rng)
    noise = rng.normal_block(spec.n * spec.dim).reshape(spec.n, spec.dim)
    x = anchors[labels] + spec.noise * noise
    return Dataset(x, _onehot(labels, spec.classes))


def _make_moons(spec: DataSpec, rng: SplitMix64) -> Dataset:
    if spec.dim != 2 or spec.classes != 2:
        raise ValueError("moons is a two-class planar dataset")
    labels = _balanced_labels(spec.n, 2, rng)
    t = rng.float_block(spec.n) * np.pi
    x = np.empty((spec.n, 2))
    x[:, 0] = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t))
    x[:, 1] = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
    x += spec.noise * rng.normal_block(spec.n * 2).reshape(spec.n, 2)
    return Dataset(x, _onehot(labels, 2))


def _make_planted(spec: DataSpec, rng: SplitMix64) -> Dataset:
    """Class balls around circle anchors, sized so one-vs-rest hyperplanes
    separate every class with margin at least the noise scale."""
    if spec.dim < 2:
        raise ValueError("planted-separable needs dim >= 2")
    radius = 3.0
    gap = radius * (1.0 - math.cos(2.0 * math.pi / max(spec.classes, 2)))
    margin = spec.noise
    ball = 0.45 * (gap - 2.0 * margin)
    if ball <= 0:
        raise ValueError(
            f"margin {margin:g} too large for {spec.classes} planted classes"
        )
    anchors = _circle_anchors(spec.classes, spec.dim, radius)
    labels = _balanced_labels(spec.n, spec.classes, rng)
    x = anchors[labels]
    angle = rng.float_block(spec.n) * 2.0 * np.pi
    rad = ball * np.sqrt(rng.float_block(spec.n))
    x[:, 0] += rad * np.cos(angle)
    if spec.dim > 1:
        x[:, 1] += rad * np.sin(angle)
    if spec.dim > 2:
        extra = rng.uniform_block(spec.n * (spec.dim - 2), -1.0, 1.0)
        x[:, 2:] += extra.reshape(spec.n, spec.dim - 2)
    return Dataset(x, _onehot(labels, spec.classes))


def _make_xor(spec: DataSpec, rng: SplitMix64) -> Dataset:
    if spec.dim != 2 or spec.classes != 2:
        raise ValueError("xor is a two-class planar dataset")
    corners = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    idx = np.arange(spec.n, dtype=np.int64) % 4
    x = corners[idx]
    labels = ((idx == 1) | (idx == 2)).astype(np.int64)  # xor of the sign bits
    if spec.noise > 0:
        x = x + spec.noise * rng.normal_block(spec.n * 2).reshape(spec.n, 2)
    return Dataset(x, _onehot(labels, 2))


def generate(spec: DataSpec) -> Dataset:
    """Deterministic dataset: the same DataSpec yields the same bytes."""
    rng = SplitMix64(spec.seed)
    if spec.kind == "blobs":
        return _make_blobs(spec, rng)
    if spec.kind == "moons":
        return _make_moons(spec, rng)
    if spec.kind == "planted-separable":
        return _make_planted(spec, rng)
    if spec.kind == "xor":
        return _make_xor(spec, rng)
    return load_idx_subset(spec.images, spec.labels, spec.n, spec.seed)


# ---------------------------------------------------------------------------
# IDX files

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def _read_exact(f, count: int, offset: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise IdxParseError(offset + len(data), f"truncated while reading {what}")
    return data


def read_idx_images(path: str) -> np.ndarray:
    """(n, rows, cols) uint8 array from an IDX image file."""
    with open(path, "rb") as f:
        header = _read_exact(f, 16, 0, "image header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != _IDX_IMAGES_MAGIC:
            raise IdxParseError(
                0, f"bad image magic 0x{magic:08X}, expected 0x{_IDX_IMAGES_MAGIC:08X}"
            )
        payload = _read_exact(f, n * rows * cols, 16, "image payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)


def read_idx_labels(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        header = _read_exact(f, 8, 0, "label header")
        magic, n = struct.unpack(">II", header)
        if magic != _IDX_LABELS_MAGIC:
            raise IdxParseError(
                0, f"bad label magic 0x{magic:08X}, expected 0x{_IDX_LABELS_MAGIC:08X}"
            )
        payload = _read_exact(f, n, 8, "label payload")
    return np.frombuffer(payload, dtype=np.uint8)


def write_idx_images(path: str, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    atomic_write_bytes(
        path, struct.pack(">IIII", _IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes()
    )


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    atomic_write_bytes(
        path, struct.pack(">II", _IDX_LABELS_MAGIC, len(labels)) + labels.tobytes()
    )


def load_idx_subset(images_path: str, labels_path: str, n: int, seed: int) -> Dataset:
    """Uniform without-replacement sample of n examples, pixels scaled to
    [-1, 1] via x/127.5 - 1, labels one-hot over 10 classes."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    total = images.shape[0]
    if labels.shape[0] != total:
        raise FormatError(
            f"{total} images vs {labels.shape[0]} labels"
        )
    if not 1 <= n <= total:
        raise ValueError(f"cannot sample {n} of {total} examples")
    if n == total:
        idx = np.arange(total, dtype=np.int64)
    else:
        idx = SplitMix64(seed).subset(total, n)
    x = images[idx].reshape(n, -1).astype(np.float64) / 127.5 - 1.0
    return Dataset(x, _onehot(labels[idx].astype(np.int64), 10))


# ---------------------------------------------------------------------------
# atomic writes


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write-temp-rename so re-runs overwrite outputs atomically."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# model and path files


def _arch_manifest(arch: NetworkArch) -> dict:
    return {
        "widths": list(arch.widths),
        "activation": arch.activation,
        "slope": arch.slope,
        "loss_kind": arch.loss_kind,
    }


def _arch_from_manifest(m: dict) -> NetworkArch:
    return NetworkArch(
        tuple(m["widths"]), m["activation"], float(m.get("slope", 0.0)), m["loss_kind"]
    )


def _params_blob(params: Params) -> bytes:
    parts = []
    L = params.arch.depth
    for l in range(L):
        parts.append(params.weights[l].astype("<f8").tobytes())
        if l < L - 1:
            parts.append(params.biases[l].astype("<f8").tobytes())
    return b"".join(parts)


def blob_float_count(arch: NetworkArch) -> int:
    widths = arch.widths
    weights = sum(widths[l] * widths[l + 1] for l in range(arch.depth))
    biases = sum(widths[l] for l in range(1, arch.depth))
    return weights + biases


def _params_from_blob(arch: NetworkArch, blob: bytes, offset: int = 0) -> Params:
    need = blob_float_count(arch)
    flat = np.frombuffer(blob, dtype="<f8", count=need, offset=offset).copy()
    pos = 0
    weights, biases = [], []
    widths = arch.widths
    for l in range(arch.depth):
        k = widths[l] * widths[l + 1]
        weights.append(flat[pos:pos + k].reshape(widths[l], widths[l + 1]))
        pos += k
        if l < arch.depth - 1:
            biases.append(flat[pos:pos + widths[l + 1]].copy())
            pos += widths[l + 1]
    return Params(arch, weights, biases)


def _split_file(raw: bytes, path: str) -> tuple[dict, bytes]:
    cut = raw.find(b"\x00")
    if cut < 0:
        raise FormatError(f"{path}: missing manifest separator")
    try:
        manifest = json.loads(raw[:cut].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad manifest: {exc}") from exc
    return manifest, raw[cut + 1:]


def save_model(params: Params, path: str, seed: int = 0) -> None:
    manifest = {"format": MODEL_TAG, "seed": int(seed), **_arch_manifest(params.arch)}
    atomic_write_bytes(
        path, json.dumps(manifest).encode("utf-8") + _SEPARATOR + _params_blob(params)
    )


def load_model(path: str) -> tuple[Params, dict]:
    with open(path, "rb") as f:
        raw = f.read()
    manifest, blob = _split_file(raw, path)
    tag = manifest.get("format")
    if tag != MODEL_TAG:
        raise FormatError(f"{path}: format tag {tag!r}, expected {MODEL_TAG!r}")
    arch = _arch_from_manifest(manifest)
    expect = blob_float_count(arch) * 8
    if len(blob) != expect:
        raise FormatError(
            f"{path}: blob holds {len(blob)} bytes, manifest implies {expect}"
        )
    return _params_from_blob(arch, blob), manifest


def save_path_file(path_obj: PWLPath, path: str) -> None:
    manifest = {
        "format": PATH_TAG,
        "labels": list(path_obj.labels),
        "breakpoints": len(path_obj.breakpoints),
        **_arch_manifest(path_obj.start.arch),
    }
    blob = b"".join(_params_blob(p) for p in path_obj.breakpoints)
    atomic_write_bytes(
        path, json.dumps(manifest).encode("utf-8") + _SEPARATOR + blob
    )


def load_path_file(path: str) -> PWLPath:
    with open(path, "rb") as f:
        raw = f.read()
    manifest, blob = _split_file(raw, path)
    tag = manifest.get("format")
    if tag != PATH_TAG:
        raise FormatError(f"{path}: format tag {tag!r}, expected {PATH_TAG!r}")
    arch = _arch_from_manifest(manifest)
    count = int(manifest["breakpoints"])
    stride = blob_float_count(arch) * 8
    if len(blob) != stride * count:
        raise FormatError(
            f"{path}: blob holds {len(blob)} bytes, manifest implies {stride * count}"
        )
    points = [_params_from_blob(arch, blob, offset=i * stride) for i in range(count)]
    return PWLPath(points, list(manifest["labels"]))


# ---------------------------------------------------------------------------
# CSV / JSON reports

TRIALS_COLUMNS = (
    "experiment", "layer_l", "trial", "seed", "subset_hash",
    "loss", "error_rate", "wall_ms",
)
SUMMARY_COLUMNS = (
    "experiment", "layer_l", "seed", "width", "best_loss", "best_error", "ref_loss",
)
PATH_REPORT_COLUMNS = (
    "t", "segment_index", "segment_label", "train_loss", "train_error",
)
TRAINING_COLUMNS = ("epoch", "loss")


def subset_hash(indices) -> str:
    import hashlib

    text = ",".join(str(int(i)) for i in indices)
    return hashlib.sha1(text.encode("ascii")).hexdigest()[:12]


def write_csv(path: str, columns, rows) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def read_csv_dicts(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def validate_csv(path: str, columns) -> None:
    with open(path, newline="", encoding="utf-8") as f:
        header = next(csv.reader(f))
    if tuple(header) != tuple(columns):
        raise FormatError(f"{path}: header {header} != {list(columns)}")


def write_json(path: str, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
