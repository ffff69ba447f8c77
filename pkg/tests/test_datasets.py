import struct

import numpy as np
import pytest

from cotlab.datasets import (
    Dataset,
    FormatError,
    export_csv,
    gen_spirals,
    gen_two_moons,
    load_idx,
    split,
    standardize,
    write_idx,
)
from cotlab.numerics import InputError, Rng


def test_two_moons_noiseless_geometry():
    ds = gen_two_moons(400, 0.0, Rng(0))
    x, y = ds.features, ds.labels
    r0 = np.hypot(x[y == 0, 0], x[y == 0, 1])
    r1 = np.hypot(x[y == 1, 0] - 1.0, x[y == 1, 1] - 0.5)
    assert np.max(np.abs(r0 - 1.0)) < 1e-12
    assert np.max(np.abs(r1 - 1.0)) < 1e-12
    assert np.all(x[y == 0, 1] >= 0) and np.all(x[y == 1, 1] <= 0.5)


def test_two_moons_balanced_and_deterministic():
    a = gen_two_moons(1000, 0.1, Rng(3))
    assert a.class_counts().tolist() == [500, 500]
    b = gen_two_moons(1000, 0.1, Rng(3))
    assert a.features.tobytes() == b.features.tobytes()
    assert gen_two_moons(1000, 0.1, Rng(4)).features.tobytes() != a.features.tobytes()


def test_spirals_counts_and_reproducible():
    a = gen_spirals(1500, 3, 0.2, Rng(1))
    assert a.class_counts().tolist() == [500, 500, 500]
    assert gen_spirals(1500, 3, 0.2, Rng(1)).features.tobytes() == a.features.tobytes()


def test_spirals_noiseless_radius_monotone():
    ds = gen_spirals(300, 3, 0.0, Rng(2), radius=2.0)
    for k in range(3):
        pts = ds.features[ds.labels == k]  # rows are in increasing arc order
        r = np.hypot(pts[:, 0], pts[:, 1])
        assert np.all(np.diff(r) >= 0)
        assert r.max() <= 2.0


def test_spirals_arm_offset():
    ds = gen_spirals(30, 3, 0.0, Rng(0), turns=0.0)
    for k in range(3):
        pts = ds.features[ds.labels == k]
        ang = np.arctan2(pts[:, 1], pts[:, 0]) % (2 * np.pi)
        np.testing.assert_allclose(ang[np.hypot(*pts.T) > 1e-9], 2 * np.pi * k / 3, atol=1e-12)


def _write_minimal_idx(tmp_path, image_magic=0x803):
    img = tmp_path / "img"
    lab = tmp_path / "lab"
    img.write_bytes(struct.pack(">IIII", image_magic, 2, 2, 2) + bytes([0, 255, 128, 1, 2, 3, 4, 5]))
    lab.write_bytes(struct.pack(">II", 0x801, 2) + bytes([1, 0]))
    return img, lab


def test_load_idx_minimal(tmp_path):
    img, lab = _write_minimal_idx(tmp_path)
    assert img.read_bytes()[:4] == bytes([0, 0, 8, 3])
    ds = load_idx(img, lab)
    assert ds.features.shape == (2, 4)
    assert ds.features[0, 1] == 1.0
    assert ds.features[0, 0] == 0.0
    assert ds.labels.tolist() == [1, 0]
    assert ds.input_range == (0.0, 1.0)


def test_load_idx_bad_magic(tmp_path):
    img, lab = _write_minimal_idx(tmp_path, image_magic=0x801)
    with pytest.raises(FormatError, match="0x00000801"):
        load_idx(img, lab)


def test_load_idx_count_mismatch(tmp_path):
    img, _ = _write_minimal_idx(tmp_path)
    lab = tmp_path / "lab3"
    lab.write_bytes(struct.pack(">II", 0x801, 3) + bytes([1, 0, 1]))
    with pytest.raises(FormatError):
        load_idx(img, lab)
    short = tmp_path / "short"
    short.write_bytes(img.read_bytes()[:-1])
    with pytest.raises(FormatError):
        load_idx(short, tmp_path / "lab")


def test_idx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.uniform(0, 1, (20, 16)), rng.integers(0, 10, 20), 10)
    write_idx(ds, tmp_path / "i", tmp_path / "l", (4, 4))
    back = load_idx(tmp_path / "i", tmp_path / "l", 10)
    assert np.max(np.abs(back.features - ds.features)) <= 1 / 255
    assert np.array_equal(back.labels, ds.labels)


def test_split_sizes_partition_and_determinism():
    ds = gen_two_moons(1000, 0.1, Rng(0))
    tr, te = split(ds, 0.8, Rng(5))
    assert (len(tr), len(te)) == (800, 200)
    tr2, _ = split(ds, 0.8, Rng(5))
    assert tr.features.tobytes() == tr2.features.tobytes()
    rows = lambda d: sorted(map(tuple, np.column_stack([d.features, d.labels])))
    assert rows(ds) == sorted(rows(tr) + rows(te))


def test_split_stratified():
    ds = gen_spirals(2000, 3, 0.2, Rng(0))
    tr, te = split(ds, 0.75, Rng(1), stratified=True)
    assert (len(tr), len(te)) == (1500, 500)
    assert np.all(tr.class_counts() > 0) and np.all(te.class_counts() > 0)
    tiny = Dataset(np.zeros((3, 1)), [0, 0, 1], 2)
    with pytest.raises(InputError):
        split(tiny, 0.5, Rng(0), stratified=True)


def test_split_rejects_fraction():
    ds = gen_two_moons(10, 0.0, Rng(0))
    for f in (0.0, 1.0, 1.5):
        with pytest.raises(InputError):
            split(ds, f, Rng(0))


def test_standardize_uses_train_statistics():
    tr = Dataset(np.array([[0.0, 5.0], [2.0, 5.0], [4.0, 5.0]]), [0, 1, 0], 2)
    te = Dataset(np.array([[2.0, 6.0], [10.0, 5.0]]), [1, 0], 2)
    tr2, te2, rec = standardize(tr, te)
    assert np.all(np.abs(tr2.features.mean(axis=0)) < 1e-10)
    assert abs(tr2.features[:, 0].std() - 1.0) < 1e-10
    assert rec.constant_dims == [1]
    assert rec.std[1] == 1.0
    # test uses train mean 2 / std sqrt(8/3), not its own statistics
    np.testing.assert_allclose(te2.features[:, 0], [0.0, 8.0 / np.sqrt(8 / 3)])
    np.testing.assert_allclose(te2.features[:, 1], [1.0, 0.0])


def test_standardize_empty_train():
    empty = Dataset(np.zeros((0, 2)), [], 2)
    with pytest.raises(InputError):
        standardize(empty, empty)


def test_export_csv(tmp_path):
    ds = Dataset(np.array([[0.1, 2.0], [3.0, -4.5]]), [1, 0], 2)
    export_csv(ds, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines == ["x0,x1,label", "0.1,2.0,1", "3.0,-4.5,0"]
