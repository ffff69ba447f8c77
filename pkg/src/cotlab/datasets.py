"""Synthetic generators, IDX (MNIST format) I/O, splitting and scaling."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numerics import InputError, Rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    pass


@dataclass
class NormalizationRecord:
    mean: np.ndarray
    std: np.ndarray
    constant_dims: list[int] = field(default_factory=list)

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.std

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant_dims": list(self.constant_dims),
        }


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"
    params: dict = field(default_factory=dict)
    normalization: NormalizationRecord | None = None
    input_range: tuple[float, float] | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise InputError(
                f"features {self.features.shape} and labels {self.labels.shape} do not agree"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InputError(f"labels out of range for K={self.num_classes}")
        if not np.all(np.isfinite(self.features)):
            raise InputError("features contain non-finite values")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx, name: str | None = None) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx], name=name or self.name)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def _class_sizes(n: int, k: int) -> list[int]:
    return [n // k + (1 if c < n % k else 0) for c in range(k)]


def gen_two_moons(n: int, noise: float, rng: Rng) -> Dataset:
    """Two interleaved unit half-circles centred at (0, 0) and (1, 0.5)."""
    if n < 2 or noise < 0:
        raise InputError(f"two moons needs n >= 2 and noise >= 0, got n={n}, noise={noise}")
    n0, n1 = _class_sizes(n, 2)
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([upper, lower])
    if noise > 0:
        x = x + rng.normal(x.shape, scale=noise)
    y = np.repeat([0, 1], [n0, n1])
    return Dataset(x, y, 2, "two_moons", {"n": n, "noise": noise, "seed": rng.seed})


def gen_spirals(n: int, classes: int, noise: float, rng: Rng, turns: float = 1.0, radius: float = 3.0) -> Dataset:
    """``classes`` Archimedean spiral arms rotated by 2*pi/classes from each other.

    Along an arm, the arc parameter ``t`` in [0, 1] gives radius ``radius * t`` and angle
    ``2*pi*(k/classes + turns*t)``; isotropic Gaussian noise is then added.
    """
    if classes < 2 or n < classes or noise < 0:
        raise InputError(f"spirals needs classes >= 2, n >= classes, noise >= 0 (got {classes}, {n}, {noise})")
    xs, ys = [], []
    for k, size in enumerate(_class_sizes(n, classes)):
        t = np.sort(rng.uniform(0.0, 1.0, size))
        angle = 2.0 * np.pi * (k / classes + turns * t)
        xs.append(radius * np.column_stack([t * np.cos(angle), t * np.sin(angle)]))
        ys.append(np.full(size, k))
    x = np.vstack(xs)
    if noise > 0:
        x = x + rng.normal(x.shape, scale=noise)
    params = {"n": n, "classes": classes, "noise": noise, "turns": turns, "radius": radius, "seed": rng.seed}
    return Dataset(x, np.concatenate(ys), classes, "spirals", params)


def _read_idx(path, expected_magic: int, kind: str) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad IDX {kind} magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    count = int(np.prod(dims))
    if len(data) - header != count:
        raise FormatError(f"{path}: expected {count} payload bytes for dims {dims}, found {len(data) - header}")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    """Load an IDX image/label pair, flattening images and scaling by 1/255."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images_path} has {images.shape[0]} images but {labels_path} has {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    k = num_classes if num_classes is not None else int(labels.max()) + 1 if labels.size else 2
    return Dataset(
        x,
        labels.astype(np.int64),
        max(k, 2),
        Path(images_path).name,
        {"images": str(images_path), "labels": str(labels_path), "scaling": "x/255"},
        input_range=(0.0, 1.0),
    )


def write_idx(dataset: Dataset, images_path, labels_path, image_shape: tuple[int, int] | None = None) -> None:
    """Write features (assumed in [0, 1]) as uint8 IDX images plus IDX labels."""
    m, d = dataset.features.shape
    if image_shape is None:
        side = int(round(np.sqrt(d)))
        image_shape = (side, d // side) if side * (d // side) == d else (1, d)
    if image_shape[0] * image_shape[1] != d:
        raise InputError(f"image shape {image_shape} does not hold {d} features")
    if dataset.labels.size and dataset.labels.max() > 255:
        raise InputError("IDX labels must fit in one byte")
    pixels = np.clip(np.rint(dataset.features * 255.0), 0, 255).astype(np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, m, *image_shape) + pixels.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, m) + dataset.labels.astype(np.uint8).tobytes())


def split(dataset: Dataset, train_fraction: float, rng: Rng, stratified: bool = False) -> tuple[Dataset, Dataset]:
    """Seeded shuffle-and-split.

    Plain mode cuts a single permutation at ``round(fraction * M)``.  Stratified
    mode splits every class separately and fails rather than leave a class
    absent from either side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InputError(f"train_fraction must be in (0, 1), got {train_fraction}")
    m = len(dataset)
    if stratified:
        train_idx, test_idx = [], []
        for c in range(dataset.num_classes):
            members = np.flatnonzero(dataset.labels == c)
            members = members[rng.permutation(members.size)]
            cut = int(round(train_fraction * members.size))
            if cut == 0 or cut == members.size:
                raise InputError(f"stratified split would leave class {c} empty on one side")
            train_idx.append(members[:cut])
            test_idx.append(members[cut:])
        tr = np.sort(np.concatenate(train_idx))
        te = np.sort(np.concatenate(test_idx))
        tr, te = tr[rng.permutation(tr.size)], te[rng.permutation(te.size)]
    else:
        perm = rng.permutation(m)
        cut = int(round(train_fraction * m))
        tr, te = perm[:cut], perm[cut:]
    return dataset.subset(tr, f"{dataset.name}/train"), dataset.subset(te, f"{dataset.name}/test")


def standardize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset, NormalizationRecord]:
    """Zero-mean, unit-variance scaling with statistics from ``train`` only.

    Zero-variance dimensions are centred but left unscaled (std recorded as
    1) and listed in ``constant_dims``.
    """
    if len(train) == 0:
        raise InputError("cannot standardize with an empty training set")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    constant = [int(i) for i in np.flatnonzero(std == 0.0)]
    std = np.where(std == 0.0, 1.0, std)
    record = NormalizationRecord(mean, std, constant)
    tr = replace(train, features=record.apply(train.features), normalization=record, input_range=None)
    te = replace(test, features=record.apply(test.features), normalization=record, input_range=None)
    return tr, te, record


def export_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def make_digit_idx(out_dir, n_train: int = 10000, n_test: int = 2000, seed: int = 0) -> dict[str, Path]:
    """Build a 28x28 handwritten-digit corpus in IDX format.

    Source glyphs are scikit-learn's bundled 8x8 digits (1797 scans), split
    into disjoint train/test source pools.  Each output image is a randomly
    rotated, scaled and shifted upsampling of a source glyph, so the result
    has MNIST's layout without needing a network download.
    """
    from scipy import ndimage
    from sklearn.datasets import load_digits

    digits = load_digits()
    images = digits.images / 16.0
    labels = digits.target
    rng = Rng(seed).child("digits")
    order = rng.permutation(len(labels))
    cut = int(0.8 * len(labels))
    pools = {"train": order[:cut], "test": order[cut:]}

    def render(idx_pool, count, stream: Rng):
        picks = idx_pool[stream.integers(0, idx_pool.size, count)]
        out = np.zeros((count, 28, 28))
        angles = stream.uniform(-15.0, 15.0, count)
        scales = stream.uniform(2.2, 2.8, count)
        shifts = stream.uniform(-2.0, 2.0, (count, 2))
        for i, src in enumerate(picks):
            theta = np.deg2rad(angles[i])
            rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]) / scales[i]
            centre_out = np.array([13.5, 13.5]) + shifts[i]
            offset = np.array([3.5, 3.5]) - rot @ centre_out
            out[i] = ndimage.affine_transform(images[src], rot, offset=offset, output_shape=(28, 28), order=1)
        out = np.clip(out + stream.normal(out.shape, scale=0.03), 0.0, 1.0)
        return out.reshape(count, -1), labels[picks]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for part, count in (("train", n_train), ("test", n_test)):
        x, y = render(pools[part], count, rng.child(part))
        ds = Dataset(x, y, 10, f"digits-{part}")
        img, lab = out_dir / f"{part}-images-idx3-ubyte", out_dir / f"{part}-labels-idx1-ubyte"
        write_idx(ds, img, lab, (28, 28))
        paths[f"{part}_images"], paths[f"{part}_labels"] = img, lab
    return paths
