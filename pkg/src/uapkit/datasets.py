"""Dataset ingestion and sampling.

Supports the CIFAR-10 binary batch layout (bit-exact read/write), a
seeded synthetic class-template dataset, and balanced input/test
splitting with index provenance so disjointness stays verifiable.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FormatError
from .fileio import atomic_write_bytes

CIFAR_RECORD_BYTES = 3073
CIFAR_IMAGE_SHAPE = (32, 32, 3)
CIFAR_CLASSES = 10

DATASET_MAGIC = b"UAPD"
DATASET_VERSION = 1


@dataclass
class LabeledDataset:
    """Images in [0, 1] with integer labels and split provenance."""

    images: np.ndarray  # (n, H, W, C) float64
    labels: np.ndarray  # (n,) int64
    class_count: int
    provenance: dict = field(default_factory=dict)
    source_indices: np.ndarray = None  # indices into the parent dataset

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError("images and labels lengths differ")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self):
        return self.images.shape[0]

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.class_count)


def load_cifar10(paths):
    """Parse CIFAR-10 binary batch files into a LabeledDataset.

    Each record is 1 label byte followed by 3072 pixel bytes (channel
    planes R, G, B of 1024 row-major bytes each); pixels are scaled to
    [0, 1] by division by 255.
    """
    if isinstance(paths, (str, bytes)) or not hasattr(paths, "__iter__"):
        paths = [paths]
    images, labels = [], []
    for path in paths:
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
            raise FormatError(
                f"{path}: file length {len(raw)} is not a positive multiple "
                f"of {CIFAR_RECORD_BYTES} (misaligned at offset "
                f"{len(raw) - len(raw) % CIFAR_RECORD_BYTES})"
            )
        data = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        batch_labels = data[:, 0]
        bad = np.nonzero(batch_labels >= CIFAR_CLASSES)[0]
        if bad.size:
            raise FormatError(
                f"{path}: label byte {batch_labels[bad[0]]} > 9 at offset "
                f"{int(bad[0]) * CIFAR_RECORD_BYTES}"
            )
        pixels = data[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
        images.append(pixels.astype(np.float64) / 255.0)
        labels.append(batch_labels.astype(np.int64))
    return LabeledDataset(
        images=np.concatenate(images),
        labels=np.concatenate(labels),
        class_count=CIFAR_CLASSES,
        provenance={"kind": "cifar10-binary", "paths": [str(p) for p in paths]},
    )


def write_cifar10(dataset, path):
    """Write a dataset back to the CIFAR-10 binary layout (bit-exact)."""
    if dataset.image_shape != CIFAR_IMAGE_SHAPE:
        raise ValueError(f"CIFAR-10 layout needs images {CIFAR_IMAGE_SHAPE}")
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    pixels = pixels.transpose(0, 3, 1, 2).reshape(len(dataset), 3072)
    records = np.empty((len(dataset), CIFAR_RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = dataset.labels
    records[:, 1:] = pixels
    atomic_write_bytes(path, records.tobytes())


def synth_dataset(class_count=10, n_per_class=60, image_shape=(32, 32, 1),
                  sigma=0.05, seed=0):
    """Synthetic dataset: one fixed template per class plus Gaussian noise.

    Templates are seeded uniform draws in [0.2, 0.8]; samples are
    template + N(0, sigma^2) clipped to [0, 1]. Deterministic per seed.
    """
    if class_count < 2:
        raise ValueError("need at least 2 classes")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    image_shape = tuple(int(d) for d in image_shape)
    if len(image_shape) != 3 or min(image_shape) < 1:
        raise ValueError(f"image shape must be (H, W, C), got {image_shape}")
    rng = np.random.default_rng(seed)
    templates = rng.uniform(0.2, 0.8, size=(class_count,) + image_shape)
    noise = rng.standard_normal((class_count, n_per_class) + image_shape) * sigma
    raw = templates[:, np.newaxis] + noise
    clipped = int(np.sum((raw < 0.0) | (raw > 1.0)))
    images = np.clip(raw, 0.0, 1.0).reshape((class_count * n_per_class,) + image_shape)
    labels = np.repeat(np.arange(class_count), n_per_class)
    return LabeledDataset(
        images=images, labels=labels, class_count=class_count,
        provenance={"kind": "synthetic", "seed": int(seed), "sigma": float(sigma),
                    "n_per_class": int(n_per_class), "clipped_pixels": clipped},
    )


def split_balanced(dataset, n_per_class, seed=0):
    """Split into a balanced input set and the disjoint remainder.

    The input set holds exactly ``n_per_class`` seeded-random images per
    class; both halves carry their source indices for disjointness checks.
    """
    counts = dataset.class_counts()
    if np.any(counts < n_per_class):
        short = int(np.argmin(counts))
        raise ValueError(
            f"class {short} has only {counts[short]} images, need {n_per_class}"
        )
    rng = np.random.default_rng(seed)
    picked = []
    for k in range(dataset.class_count):
        idx = np.nonzero(dataset.labels == k)[0]
        picked.append(rng.permutation(idx)[:n_per_class])
    input_idx = np.sort(np.concatenate(picked))
    mask = np.ones(len(dataset), dtype=bool)
    mask[input_idx] = False
    test_idx = np.nonzero(mask)[0]

    def take(idx, label):
        return LabeledDataset(
            images=dataset.images[idx], labels=dataset.labels[idx],
            class_count=dataset.class_count,
            provenance={**dataset.provenance, "split": label,
                        "split_seed": int(seed), "n_per_class": int(n_per_class)},
            source_indices=idx,
        )

    return take(input_idx, "input"), take(test_idx, "test")


# -- synthetic dataset file format (UAPD) ------------------------------------


def save_dataset(dataset, path):
    """Write the UAPD binary format (atomically)."""
    h, w, c = dataset.image_shape
    prov = dataset.provenance or {}
    blob = bytearray()
    blob += DATASET_MAGIC
    blob += struct.pack("<I", DATASET_VERSION)
    blob += struct.pack("<I", dataset.class_count)
    blob += struct.pack("<I", len(dataset))
    blob += struct.pack("<III", h, w, c)
    blob += struct.pack("<d", float(prov.get("sigma", 0.0)))
    blob += struct.pack("<Q", int(prov.get("seed", 0)))
    blob += np.ascontiguousarray(dataset.labels, dtype=np.uint8).tobytes()
    blob += np.ascontiguousarray(dataset.images, dtype="<f4").tobytes()
    atomic_write_bytes(path, bytes(blob))


def load_dataset(path):
    """Read a UAPD file back into a LabeledDataset."""
    with open(path, "rb") as fh:
        raw = fh.read()
    header = struct.calcsize("<4sIIIIIIdQ")
    if len(raw) < header:
        raise FormatError(f"dataset file truncated at offset {len(raw)}")
    magic, version, k, n, h, w, c, sigma, seed = struct.unpack_from("<4sIIIIIIdQ", raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"not a UAPD file (offset 0): magic {magic!r}")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset format version {version}")
    off = header
    expected = off + n + n * h * w * c * 4
    if len(raw) != expected:
        raise FormatError(f"dataset file has {len(raw)} bytes, expected {expected}")
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off).astype(np.int64)
    off += n
    images = np.frombuffer(raw, dtype="<f4", count=n * h * w * c, offset=off)
    images = images.reshape(n, h, w, c).astype(np.float64)
    return LabeledDataset(
        images=images, labels=labels, class_count=k,
        provenance={"kind": "synthetic", "sigma": sigma, "seed": int(seed),
                    "path": str(path)},
    )
