"""IDX-format dataset files (the MNIST distribution format).

Headers are big-endian: images carry magic 0x00000803 and three
dimension words, labels carry 0x00000801 and one. Readers accept plain
or gzip-compressed files; writers emit plain files that round-trip
through the readers byte for byte.
"""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(Exception):
    """The bytes on disk are not a valid IDX image/label file."""


def _read_all(path) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def load_idx_images(path) -> np.ndarray:
    """Load an IDX image file as uint8 [count, rows, cols]."""
    buf = _read_all(path)
    if len(buf) < 16:
        raise IdxFormatError(f"{path}: header truncated")
    magic, count, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IMAGES_MAGIC:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x} (expected 0x{IMAGES_MAGIC:08x})")
    want = count * rows * cols
    if len(buf) - 16 != want:
        raise IdxFormatError(f"{path}: payload is {len(buf) - 16} bytes, header says {want}")
    return np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(count, rows, cols).copy()


def load_idx_labels(path) -> np.ndarray:
    """Load an IDX label file as uint8 [count]."""
    buf = _read_all(path)
    if len(buf) < 8:
        raise IdxFormatError(f"{path}: header truncated")
    magic, count = struct.unpack(">II", buf[:8])
    if magic != LABELS_MAGIC:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x} (expected 0x{LABELS_MAGIC:08x})")
    if len(buf) - 8 != count:
        raise IdxFormatError(f"{path}: payload is {len(buf) - 8} bytes, header says {count}")
    return np.frombuffer(buf, dtype=np.uint8, offset=8).copy()


def save_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("expected [count, rows, cols] uint8 images")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def save_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError("expected a 1-D uint8 label vector")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


@dataclass
class Dataset:
    """Images scaled to [0, 1] float32, shaped [n, 1, rows, cols]."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


_SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(data_dir, name) -> str:
    for candidate in (name, name + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"{name}[.gz] not found in {data_dir}")


def load_dataset(data_dir, split: str = "train") -> Dataset:
    """Load one split from a directory holding the standard four files."""
    if split not in _SPLIT_FILES:
        raise ValueError(f"split must be one of {tuple(_SPLIT_FILES)}, got {split!r}")
    img_name, lbl_name = _SPLIT_FILES[split]
    raw = load_idx_images(_find(data_dir, img_name))
    labels = load_idx_labels(_find(data_dir, lbl_name))
    if len(raw) != len(labels):
        raise IdxFormatError(
            f"{split} split: {len(raw)} images but {len(labels)} labels"
        )
    images = (raw.astype(np.float32) / 255.0)[:, None, :, :]
    return Dataset(images=images, labels=labels.astype(np.int64))
