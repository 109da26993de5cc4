import numpy as np
import pytest

from gemst.cifar import RECORD, parse_batch, read_batch, resize_nearest, to_input, write_batch
from gemst.errors import InputError


def fixture(tmp_path, n=3, name="test_batch.bin"):
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 10, n)
    images = rng.integers(0, 256, (n, 32, 32, 3))
    write_batch(tmp_path / name, labels, images)
    return labels, images


def test_round_trip(tmp_path):
    labels, images = fixture(tmp_path)
    got_l, got_i = read_batch(tmp_path / "test_batch.bin")
    assert np.array_equal(got_l, labels) and np.array_equal(got_i, images)
    got_l, _ = read_batch(tmp_path, limit=2)
    assert len(got_l) == 2


def test_record_layout():
    rec = bytearray(RECORD)
    rec[0] = 7
    rec[1] = 255  # red plane, pixel (0, 0)
    rec[1 + 1024 + 33] = 9  # green plane, pixel (1, 1)
    labels, images = parse_batch(bytes(rec))
    assert labels[0] == 7 and images[0, 0, 0, 0] == 255 and images[0, 1, 1, 1] == 9


def test_bad_sizes_and_labels(tmp_path):
    with pytest.raises(InputError):
        parse_batch(b"")
    with pytest.raises(InputError):
        parse_batch(bytes(RECORD + 1))
    with pytest.raises(InputError):
        parse_batch(bytes([10]) + bytes(RECORD - 1))
    with pytest.raises(InputError):
        read_batch(tmp_path / "missing.bin")


def test_resize_and_input():
    img = np.arange(4, dtype=np.uint8).reshape(1, 2, 2, 1)
    assert resize_nearest(img, 4)[0, :, :, 0].tolist() == [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]]
    x = to_input(np.full((2, 32, 32, 3), 255, dtype=np.uint8), 16)
    assert x.shape == (1, 2, 16, 16, 3) and x.max() == 1.0
