"""Dataset loading, client partitioning and synthetic data.

The MNIST loader reads the standard big-endian IDX containers (optionally
gzip-compressed, as the canonical distribution ships them); pixels are
scaled to [0, 1]. Partitioners split sample indices across clients either
uniformly (IID) or per class with Dirichlet-distributed proportions, where
a smaller concentration alpha gives a more heterogeneous split.
"""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer labels."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels must have the same length")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Partition:
    """Disjoint shards of sample indices, one per client."""

    shards: dict

    def __post_init__(self):
        seen = set()
        for client, idx in self.shards.items():
            idx = np.asarray(idx)
            chunk = set(idx.tolist())
            if chunk & seen:
                raise ValueError(f"shard of client {client} overlaps another shard")
            seen |= chunk

    def num_samples(self) -> int:
        return sum(len(idx) for idx in self.shards.values())


def iid_partition(n_samples: int, num_clients: int,
                  rng: np.random.Generator) -> Partition:
    """Random permutation split into shards whose sizes differ by at most 1."""
    if n_samples < num_clients:
        raise ValueError(
            f"cannot split {n_samples} samples across {num_clients} clients"
        )
    order = rng.permutation(n_samples)
    chunks = np.array_split(order, num_clients)
    return Partition({k: np.sort(chunk) for k, chunk in enumerate(chunks)})


def _largest_remainder_counts(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``, as close to the proportions as
    possible: floor first, then hand out the remainder by largest
    fractional part (ties to the lower index)."""
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    remainder = total - int(counts.sum())
    if remainder > 0:
        fractional = raw - counts
        order = np.lexsort((np.arange(len(counts)), -fractional))
        counts[order[:remainder]] += 1
    return counts


def dirichlet_partition(labels, num_clients: int, alpha: float,
                        rng: np.random.Generator) -> Partition:
    """Per class, split the samples across clients with proportions drawn
    from Dirichlet(alpha); classes without samples are skipped."""
    if alpha <= 0:
        raise ValueError("dirichlet concentration alpha must be > 0")
    labels = np.asarray(labels)
    shards = {k: [] for k in range(num_clients)}
    for cls in np.unique(labels):
        cls_idx = rng.permutation(np.nonzero(labels == cls)[0])
        if len(cls_idx) == 0:
            continue
        proportions = rng.dirichlet(np.full(num_clients, alpha))
        counts = _largest_remainder_counts(proportions, len(cls_idx))
        offsets = np.cumsum(counts)[:-1]
        for k, chunk in enumerate(np.split(cls_idx, offsets)):
            shards[k].append(chunk)
    merged = {
        k: np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
        for k, parts in shards.items()
    }
    return Partition(merged)


def _read_idx(path, expected_magic: int) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"IDX file not found: {path}")
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    magic = struct.unpack(">i", raw[:4])[0]
    if magic != expected_magic:
        raise ValueError(f"{path}: bad IDX magic {magic}, expected {expected_magic}")
    n_dims = 1 if expected_magic == LABELS_MAGIC else 3
    header_len = 4 + 4 * n_dims
    if len(raw) < header_len:
        raise ValueError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{n_dims}i", raw[4:header_len])
    expected_size = header_len + int(np.prod(dims))
    if len(raw) != expected_size:
        raise ValueError(
            f"{path}: expected {expected_size} bytes for dims {dims}, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype=np.uint8, offset=header_len)
    return data.reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an images/labels IDX pair into row-major [0, 1] feature vectors."""
    images = _read_idx(images_path, IMAGES_MAGIC)
    labels = _read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"image count {images.shape[0]} does not match "
            f"label count {labels.shape[0]}"
        )
    n, rows, cols = images.shape
    inputs = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64), num_classes=10)


def _mnist_file(directory: Path, stems) -> Path:
    for stem in stems:
        for name in (f"{stem}.gz", stem):
            candidate = directory / name
            if candidate.exists():
                return candidate
    raise FileNotFoundError(f"missing {stems[0]}[.gz] under {directory}")


def load_mnist(directory) -> tuple:
    """Load the train/test IDX pairs from a directory, raw or gzipped.

    The held-out pair may carry either the canonical t10k-* name or test-*.
    """
    directory = Path(directory)
    train = load_idx(_mnist_file(directory, ("train-images-idx3-ubyte",)),
                     _mnist_file(directory, ("train-labels-idx1-ubyte",)))
    test = load_idx(
        _mnist_file(directory, ("t10k-images-idx3-ubyte", "test-images-idx3-ubyte")),
        _mnist_file(directory, ("t10k-labels-idx1-ubyte", "test-labels-idx1-ubyte")),
    )
    return train, test


def synthetic_blobs(num_classes: int, n_per_class: int, feature_dim: int,
                    separation: float, rng: np.random.Generator) -> Dataset:
    """Unit-variance Gaussian blobs whose class means sit ``separation``
    apart (for num_classes <= feature_dim), linearly separable once the
    separation dwarfs the noise."""
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if n_per_class < 1 or feature_dim < 1:
        raise ValueError("need positive n_per_class and feature_dim")
    means = np.zeros((num_classes, feature_dim))
    scale = separation / np.sqrt(2.0)
    for cls in range(num_classes):
        means[cls, cls % feature_dim] = scale * (1 + cls // feature_dim)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    inputs = means[labels] + rng.standard_normal((len(labels), feature_dim))
    return Dataset(inputs, labels, num_classes=num_classes)
