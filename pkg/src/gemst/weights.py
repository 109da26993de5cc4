"""GSTW weight container: a flat, little-endian list of named tensors.

Layout::

    b"GSTW"  u16 version  u32 entry_count
    per entry:
        u16 name_len, name (UTF-8)
        u8 dtype tag (0 f32, 1 f64, 2 u32, 3 u8)
        u8 rank, rank x u32 dims
        payload (product(dims) elements, little-endian)

Model weights are f32. Entries whose name starts with ``meta/`` carry
metadata (config hash, per-site thresholds and temporal grouping) and may use
the other tags.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagicError, TruncatedFileError, VersionError, WeightFileError
from .profiler import atomic_write

MAGIC = b"GSTW"
VERSION = 1
META_PREFIX = "meta/"

_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<u4"), 3: np.dtype("u1")}
_TAG_OF = {v: k for k, v in _TAGS.items()}


@dataclass
class WeightContainer:
    entries: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.entries[name]

    def __contains__(self, name):
        return name in self.entries

    def add(self, name: str, array):
        a = np.asarray(array)
        if a.dtype.newbyteorder("<") not in _TAG_OF:
            raise WeightFileError(f"{name}: unsupported dtype {a.dtype}")
        self.entries[name] = a

    def add_text(self, name: str, text: str):
        self.add(name, np.frombuffer(text.encode(), dtype=np.uint8))

    def text(self, name: str) -> str:
        return bytes(self.entries[name].astype(np.uint8)).decode()


def dumps(container: WeightContainer) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(container.entries))]
    for name, a in container.entries.items():
        raw = name.encode()
        dt = a.dtype.newbyteorder("<")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<BB", _TAG_OF[dt], a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(np.ascontiguousarray(a, dtype=dt).tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"file ends inside {what} at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(data: bytes) -> WeightContainer:
    """Parse a whole container; nothing is returned unless every entry parsed."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise BadMagicError("not a GSTW weight file")
    version, count = r.unpack("<HI", "header")
    if version != VERSION:
        raise VersionError(f"unsupported GSTW version {version}")
    entries = {}
    for k in range(count):
        (n,) = r.unpack("<H", f"entry {k} name length")
        try:
            name = r.take(n, f"entry {k} name").decode()
        except UnicodeDecodeError:
            raise WeightFileError(f"entry {k}: name is not UTF-8") from None
        tag, rank = r.unpack("<BB", f"entry {name} header")
        if tag not in _TAGS:
            raise WeightFileError(f"entry {name}: unknown dtype tag {tag}")
        dims = r.unpack(f"<{rank}I", f"entry {name} dims")
        dt = _TAGS[tag]
        size = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        payload = r.take(size, f"entry {name} payload")
        if name in entries:
            raise WeightFileError(f"duplicate entry {name}")
        entries[name] = np.frombuffer(payload, dtype=dt).reshape(dims)
    if r.pos != len(data):
        raise WeightFileError(f"{len(data) - r.pos} trailing bytes after last entry")
    return WeightContainer(entries)


def save(container: WeightContainer, path):
    atomic_write(path, dumps(container))


def load(path) -> WeightContainer:
    with open(path, "rb") as f:
        return loads(f.read())
