"""Datasets: the noisy cubic, IDX image files, normalization and attack sets."""

from __future__ import annotations

import enum
import gzip
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidSpecError, ShapeError


class Role(str, enum.Enum):
    TRAIN = "train"
    TEST = "test"
    ATTACK = "attack"


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    role: Role = Role.TRAIN
    num_classes: int | None = None

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.asarray(self.labels)
        if x.shape[0] != y.shape[0]:
            raise ShapeError(f"{x.shape[0]} inputs but {y.shape[0]} labels")
        if not np.isfinite(x).all():
            raise ShapeError("inputs contain non-finite values")
        if self.num_classes is not None and y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ShapeError(f"class labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "role", Role(self.role))

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, index, role=None):
        return replace(self, inputs=self.inputs[index], labels=self.labels[index],
                       role=self.role if role is None else role)


def cubic(x):
    return x**3 - 3 * x**2 - x + 1


def gen_poly(n, noise_sd=0.1, seed=0, interval=(-1.5, 3.5)) -> LabeledDataset:
    """Samples of ``x^3 - 3x^2 - x + 1`` plus Gaussian noise, x uniform on ``interval``."""
    if n < 1:
        raise InvalidSpecError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(interval[0], interval[1], size=n)
    y = cubic(x) + noise_sd * rng.standard_normal(n)
    return LabeledDataset(x.reshape(-1, 1), y)


# IDX: two zero bytes, type code, number of dims, then big-endian int32 sizes.
IDX_UBYTE = 0x08
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _open_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes, expect_magic=None) -> np.ndarray:
    """Decode an unsigned-byte IDX payload into an array of the declared shape."""
    if len(raw) < 4:
        raise FormatError("file shorter than the 4-byte magic number", 0)
    (magic,) = struct.unpack(">I", raw[:4])
    if expect_magic is not None and magic != expect_magic:
        raise FormatError(f"bad magic number 0x{magic:08x}, expected 0x{expect_magic:08x}", 0)
    if raw[0] != 0 or raw[1] != 0 or raw[2] != IDX_UBYTE:
        raise FormatError(f"unsupported IDX header 0x{magic:08x}", 0)
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"truncated header: need {header} bytes, have {len(raw)}", len(raw))
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(shape, dtype=np.int64))
    if len(raw) < header + count:
        raise FormatError(
            f"truncated payload: need {count} data bytes, have {len(raw) - header}", len(raw)
        )
    if len(raw) > header + count:
        raise FormatError(f"{len(raw) - header - count} trailing bytes after payload", header + count)
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(shape)


def encode_idx(array) -> bytes:
    a = np.asarray(array)
    if a.dtype != np.uint8:
        raise FormatError(f"only uint8 arrays can be written, got {a.dtype}")
    header = struct.pack(">BBBB", 0, 0, IDX_UBYTE, a.ndim) + struct.pack(f">{a.ndim}I", *a.shape)
    return header + np.ascontiguousarray(a).tobytes()


def write_idx(path, array):
    Path(path).write_bytes(encode_idx(array))


def load_idx(images_path, labels_path, role=Role.TRAIN, num_classes=10) -> LabeledDataset:
    """Load an image/label IDX pair; pixels scaled to [0, 1], rows flattened."""
    images = parse_idx(_open_bytes(images_path), IMAGES_MAGIC)
    labels = parse_idx(_open_bytes(labels_path), LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"count mismatch: {images.shape[0]} images in {images_path} vs "
            f"{labels.shape[0]} labels in {labels_path}",
            4,
        )
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset(x, labels.astype(np.int64), role, num_classes)


def avg_pool(ds: LabeledDataset, side: int, factor: int) -> LabeledDataset:
    """Average-pool square images stored as flattened rows by ``factor`` per axis."""
    if ds.dim != side * side or side % factor:
        raise ShapeError(f"cannot pool {ds.dim}-d rows as {side}x{side} images by {factor}")
    n = len(ds)
    m = side // factor
    x = ds.inputs.reshape(n, m, factor, m, factor).mean(axis=(2, 4)).reshape(n, m * m)
    return replace(ds, inputs=x)


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, ds: LabeledDataset) -> LabeledDataset:
        return replace(ds, inputs=(ds.inputs - self.mean) / self.sd)


SD_FLOOR = 1e-8


def normalize_channelwise(ds: LabeledDataset):
    """Standardize each input coordinate; returns the dataset and the statistics."""
    if len(ds) < 2:
        raise ShapeError("need at least 2 samples to normalize")
    mean = ds.inputs.mean(axis=0)
    sd = np.maximum(ds.inputs.std(axis=0), SD_FLOOR)
    stats = ChannelStats(mean, sd)
    return stats.apply(ds), stats


@dataclass(frozen=True)
class AttackSpec:
    source: LabeledDataset
    relabel_seed: int = 0
    num_classes: int = 10


def build_attack_set(spec: AttackSpec) -> LabeledDataset:
    """Relabel every sample with a wrong class drawn uniformly from the other classes."""
    k = spec.num_classes
    if k < 2:
        raise InvalidSpecError(f"num_classes must be >= 2, got {k}")
    y = np.asarray(spec.source.labels, dtype=np.int64)
    rng = np.random.default_rng(spec.relabel_seed)
    # shift in [1, k-1] never maps a label to itself
    wrong = (y + rng.integers(1, k, size=y.shape[0])) % k
    return LabeledDataset(spec.source.inputs, wrong, Role.ATTACK, k)


def split_first_n(ds: LabeledDataset, n: int):
    if not 1 <= n <= len(ds):
        raise InvalidSpecError(f"n must lie in [1, {len(ds)}], got {n}")
    return ds.subset(slice(0, n)), ds.subset(slice(n, None))


@dataclass
class MnistBundle:
    """Train / attack pool / test splits for the desk-scale MNIST studies."""

    train: LabeledDataset
    attack_pool: LabeledDataset
    test: LabeledDataset
    stats: ChannelStats = field(repr=False, default=None)


def mnist_bundle(data_dir, n_train=512, pool=2, normalize=True) -> MnistBundle:
    """First ``n_train`` training images as S_train, the remainder as the attack pool.

    Images are average-pooled by ``pool`` (1 keeps 28x28). With ``normalize``
    the inputs are standardized with statistics of the whole training file, and
    pixels that are constant over that file are dropped: their clamped sd would
    blow test pixels up by 1e8.
    """
    data_dir = Path(data_dir)
    train = load_idx(_find(data_dir, "train-images"), _find(data_dir, "train-labels"))
    test = load_idx(_find(data_dir, "t10k-images"), _find(data_dir, "t10k-labels"), Role.TEST)
    if pool > 1:
        train, test = avg_pool(train, 28, pool), avg_pool(test, 28, pool)
    stats = None
    if normalize:
        keep = train.inputs.std(axis=0) > SD_FLOOR
        train = replace(train, inputs=train.inputs[:, keep])
        test = replace(test, inputs=test.inputs[:, keep])
        train, stats = normalize_channelwise(train)
        test = stats.apply(test)
    head, tail = split_first_n(train, n_train)
    return MnistBundle(head, replace(tail, role=Role.ATTACK), test, stats)


def _find(data_dir, stem):
    for suffix in ("-idx3-ubyte", "-idx1-ubyte", "-idx3-ubyte.gz", "-idx1-ubyte.gz"):
        p = data_dir / f"{stem}{suffix}"
        if p.exists():
            return p
    raise FileNotFoundError(f"no {stem}*-ubyte file in {data_dir}")
