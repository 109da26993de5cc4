"""CIFAR-10 binary batches: 1 label byte + 3072 pixel bytes (R, G, B planes, 32x32 row-major) per record."""

from __future__ import annotations

import os

import numpy as np

from .errors import InputError

SIDE = 32
RECORD = 1 + 3 * SIDE * SIDE
TEST_BATCH = "test_batch.bin"


def parse_batch(data: bytes):
    """Labels (N,) uint8 and images (N, 32, 32, 3) uint8 from raw batch bytes."""
    if len(data) == 0 or len(data) % RECORD:
        raise InputError(f"CIFAR-10 batch size {len(data)} is not a positive multiple of {RECORD}")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, RECORD)
    labels = raw[:, 0].copy()
    if labels.max() > 9:
        raise InputError(f"label {int(labels.max())} outside 0..9")
    images = raw[:, 1:].reshape(-1, 3, SIDE, SIDE).transpose(0, 2, 3, 1).copy()
    return labels, images


def read_batch(path, limit=None):
    """Read a batch file, or ``test_batch.bin`` inside a directory."""
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, TEST_BATCH)
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise InputError(f"cannot read CIFAR-10 batch {path}: {e.strerror}") from None
    labels, images = parse_batch(data)
    if limit is not None:
        labels, images = labels[:limit], images[:limit]
    return labels, images


def resize_nearest(images: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbour resize of (N, h, w, c) images to (N, size, size, c).

    Output pixel i reads source pixel floor(i * h / size), which is exact
    integer arithmetic and so identical on every platform.
    """
    n, h, w, c = images.shape
    rows = (np.arange(size) * h) // size
    cols = (np.arange(size) * w) // size
    return images[:, rows][:, :, cols]


def to_input(images: np.ndarray, size: int) -> np.ndarray:
    """uint8 images -> model input (1, N, size, size, 3) scaled to [0, 1]."""
    return (resize_nearest(images, size).astype(np.float64) / 255.0)[None]


def write_batch(path, labels, images):
    """Inverse of :func:`read_batch` (used to build fixtures)."""
    labels = np.asarray(labels, dtype=np.uint8)
    images = np.asarray(images, dtype=np.uint8)
    planes = images.transpose(0, 3, 1, 2).reshape(len(labels), -1)
    with open(path, "wb") as f:
        f.write(np.concatenate([labels[:, None], planes], axis=1).tobytes())
