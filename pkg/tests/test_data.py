import json
import struct

import numpy as np
import pytest

import modeconn.data as dio
import modeconn.network as net
import modeconn.pathbuild as pb
from conftest import make_digit_corpus, random_params
from modeconn.conditions import check_linear_separability


# ---------------------------------------------------------------------------
# generation


def test_blobs_zero_noise_puts_points_on_centers():
    d = dio.generate(dio.DataSpec(kind="blobs", n=30, dim=3, classes=3,
                                  noise=0.0, seed=0))
    centers = {tuple(row) for row in d.inputs}
    assert len(centers) == 3


def test_generation_deterministic():
    spec = dio.DataSpec(kind="blobs", n=50, dim=2, classes=2, noise=0.5, seed=9)
    a, b = dio.generate(spec), dio.generate(spec)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)


def test_planted_passes_separability_checker():
    d = dio.generate(dio.DataSpec(kind="planted-separable", n=120, dim=10,
                                  classes=3, noise=0.3, seed=1))
    assert check_linear_separability(d.inputs, d.targets).passed


def test_planted_rejects_oversized_margin():
    with pytest.raises(ValueError):
        dio.generate(dio.DataSpec(kind="planted-separable", n=30, dim=2,
                                  classes=8, noise=3.0, seed=0))


def test_xor_four_points():
    d = dio.generate(dio.DataSpec(kind="xor", n=4, dim=2, classes=2,
                                  noise=0.0, seed=0))
    assert sorted(map(tuple, d.inputs.tolist())) == [
        (-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)
    ]
    # class 1 is the xor of the sign bits (opposite-sign corners)
    for x, t in zip(d.inputs, d.targets):
        assert t[1] == (1.0 if x[0] * x[1] < 0 else 0.0)


def test_moons_two_classes_balanced():
    d = dio.generate(dio.DataSpec(kind="moons", n=40, dim=2, classes=2,
                                  noise=0.1, seed=2))
    assert d.targets.sum(axis=0).tolist() == [20.0, 20.0]


# ---------------------------------------------------------------------------
# IDX parsing


def _write_corpus(tmp_path, n=64, side=8):
    images, labels = make_digit_corpus(n, seed=4, side=side)
    img_path = str(tmp_path / "images-idx3-ubyte")
    lab_path = str(tmp_path / "labels-idx1-ubyte")
    dio.write_idx_images(img_path, images)
    dio.write_idx_labels(lab_path, labels)
    return img_path, lab_path, images, labels


def test_idx_roundtrip_and_reference_parser(tmp_path):
    img_path, lab_path, images, labels = _write_corpus(tmp_path)
    # independent parse with struct, as a second implementation
    with open(img_path, "rb") as f:
        raw = f.read()
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    assert magic == 0x00000803
    assert (n, rows, cols) == images.shape
    first = np.frombuffer(raw[16:16 + rows * cols], dtype=np.uint8)
    assert np.array_equal(first, images[0].ravel())
    got = dio.read_idx_images(img_path)
    assert np.array_equal(got, images)
    assert np.array_equal(dio.read_idx_labels(lab_path), labels)


def test_idx_bad_magic_reports_offset(tmp_path):
    path = str(tmp_path / "bad")
    dio.atomic_write_bytes(path, struct.pack(">IIII", 0xDEAD, 1, 2, 2) + b"\x00" * 4)
    with pytest.raises(dio.IdxParseError) as err:
        dio.read_idx_images(path)
    assert err.value.offset == 0


def test_idx_truncation_reports_offset(tmp_path):
    path = str(tmp_path / "short")
    dio.atomic_write_bytes(
        path, struct.pack(">IIII", 0x00000803, 2, 2, 2) + b"\x01" * 5
    )
    with pytest.raises(dio.IdxParseError) as err:
        dio.read_idx_images(path)
    assert err.value.offset == 16 + 5


def test_subset_scaling_endpoints(tmp_path):
    img_path, lab_path, images, labels = _write_corpus(tmp_path)
    d = dio.load_idx_subset(img_path, lab_path, 10, seed=0)
    assert d.inputs.min() >= -1.0 and d.inputs.max() <= 1.0
    # pixel 0 -> -1, pixel 255 -> +1 exactly
    images2 = images.copy()
    images2[0].fill(0)
    images2[1].fill(255)
    dio.write_idx_images(img_path, images2)
    d2 = dio.load_idx_subset(img_path, lab_path, images2.shape[0], seed=0)
    assert set(d2.inputs[0]) == {-1.0}
    assert set(d2.inputs[1]) == {1.0}


def test_subset_full_set_takes_all_rows(tmp_path):
    img_path, lab_path, images, labels = _write_corpus(tmp_path, n=32)
    d = dio.load_idx_subset(img_path, lab_path, 32, seed=5)
    assert d.n == 32
    flat = images.reshape(32, -1).astype(np.float64) / 127.5 - 1.0
    assert np.array_equal(d.inputs, flat)
    assert np.array_equal(d.labels(), labels)


def test_subset_deterministic_sample(tmp_path):
    img_path, lab_path, *_ = _write_corpus(tmp_path)
    a = dio.load_idx_subset(img_path, lab_path, 16, seed=3)
    b = dio.load_idx_subset(img_path, lab_path, 16, seed=3)
    assert np.array_equal(a.inputs, b.inputs)


# ---------------------------------------------------------------------------
# model files


def test_model_roundtrip_bitwise(tmp_path):
    p = random_params((3, 5, 4, 2), 0)
    path = str(tmp_path / "m.mcnet")
    dio.save_model(p, path, seed=77)
    q, manifest = dio.load_model(path)
    assert manifest["format"] == "MCNET1"
    assert manifest["seed"] == 77
    assert net.params_equal(p, q)


def test_model_blob_length_matches_width_arithmetic(tmp_path):
    arch = net.NetworkArch((3, 5, 4, 2))
    p = random_params((3, 5, 4, 2), 1)
    path = str(tmp_path / "m.mcnet")
    dio.save_model(p, path)
    raw = open(path, "rb").read()
    blob = raw[raw.find(b"\x00") + 1:]
    widths = arch.widths
    expect = sum(widths[i] * widths[i + 1] for i in range(3)) + sum(widths[1:3])
    assert len(blob) == expect * 8
    assert dio.blob_float_count(arch) == expect


def test_model_truncated_blob_rejected(tmp_path):
    p = random_params((3, 5, 2), 2)
    path = str(tmp_path / "m.mcnet")
    dio.save_model(p, path)
    raw = open(path, "rb").read()
    dio.atomic_write_bytes(path, raw[:-8])
    with pytest.raises(dio.FormatError) as err:
        dio.load_model(path)
    assert "blob holds" in str(err.value)


def test_model_version_tag_mismatch(tmp_path):
    p = random_params((3, 5, 2), 3)
    path = str(tmp_path / "m.mcnet")
    dio.save_model(p, path)
    raw = open(path, "rb").read()
    cut = raw.find(b"\x00")
    manifest = json.loads(raw[:cut])
    manifest["format"] = "MCNET9"
    dio.atomic_write_bytes(
        path, json.dumps(manifest).encode() + b"\n\x00" + raw[cut + 1:]
    )
    with pytest.raises(dio.FormatError) as err:
        dio.load_model(path)
    assert "MCNET9" in str(err.value) and "MCNET1" in str(err.value)


def test_path_file_roundtrip_bitwise(tmp_path):
    a = random_params((3, 5, 2), 4)
    b = random_params((3, 5, 2), 5)
    path_obj = pb.PWLPath([a, b, random_params((3, 5, 2), 6)],
                          [pb.OUTPUT_INTERP, pb.SET_INCOMING])
    fp = str(tmp_path / "p.mcpath")
    dio.save_path_file(path_obj, fp)
    loaded = dio.load_path_file(fp)
    assert loaded.labels == path_obj.labels
    assert len(loaded.breakpoints) == 3
    for x, y in zip(loaded.breakpoints, path_obj.breakpoints):
        assert net.params_equal(x, y)


def test_atomic_write_replaces_existing(tmp_path):
    path = str(tmp_path / "f.txt")
    dio.atomic_write_text(path, "one")
    dio.atomic_write_text(path, "two")
    assert open(path).read() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]


# ---------------------------------------------------------------------------
# CSV helpers


def test_csv_write_validate_roundtrip(tmp_path):
    path = str(tmp_path / "t.csv")
    dio.write_csv(path, dio.TRIALS_COLUMNS,
                  [("subnet-bound", 0, 1, 2, "abc", 0.5, 0.0, 1.25)])
    dio.validate_csv(path, dio.TRIALS_COLUMNS)
    rows = dio.read_csv_dicts(path)
    assert rows[0]["experiment"] == "subnet-bound"
    assert float(rows[0]["loss"]) == 0.5
    with pytest.raises(dio.FormatError):
        dio.validate_csv(path, dio.SUMMARY_COLUMNS)


def test_subset_hash_stable():
    assert dio.subset_hash([1, 2, 3]) == dio.subset_hash((1, 2, 3))
    assert dio.subset_hash([1, 2, 3]) != dio.subset_hash([1, 2, 4])
