"""Counter-based splittable random streams.

Every consumer of randomness in this package draws from a stream addressed by
a master seed plus a label path, e.g. ``streams(1234).child("invert", 3)``.
Streams with distinct paths are independent Philox generators, so work can be
re-run or reordered without perturbing unrelated draws.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["StreamFamily", "streams"]


def _key_from_path(master_seed: int, path: tuple) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16)
    h.update(repr(int(master_seed)).encode())
    for part in path:
        h.update(b"/")
        h.update(repr(part).encode())
    return np.frombuffer(h.digest(), dtype=np.uint64)


class StreamFamily:
    """A node in the stream tree; ``generator()`` yields its own Generator."""

    def __init__(self, master_seed: int, path: tuple = ()):
        self.master_seed = int(master_seed)
        self.path = path

    def child(self, *labels) -> "StreamFamily":
        return StreamFamily(self.master_seed, self.path + tuple(labels))

    def generator(self) -> np.random.Generator:
        key = _key_from_path(self.master_seed, self.path)
        return np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"StreamFamily(seed={self.master_seed}, path={self.path!r})"


def streams(master_seed: int) -> StreamFamily:
    return StreamFamily(master_seed)
