"""
Combinatorial indexing, byte-level XOR algebra and file splitting.

Every caching scheme in this package labels file fragments by subsets of
users (or cache profiles).  Subsets are always handled as sorted tuples and
enumerated in lexicographic order, which is also the order used to map a
subset label to a flat subpacket index.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class CodecError(ValueError):
    """Raised on malformed payload operations (e.g. length mismatch)."""


def enumerate_subsets(ground_size: int, subset_size: int) -> list[tuple[int, ...]]:
    """Return all `subset_size`-subsets of ``range(ground_size)`` in lex order."""
    if ground_size < 0 or subset_size < 0 or subset_size > ground_size:
        raise ValueError(
            f"invalid subset sizes: ground_size={ground_size}, subset_size={subset_size}")
    return list(itertools.combinations(range(ground_size), subset_size))


def subset_rank(subset: Sequence[int], ground_size: int) -> int:
    """Lexicographic rank of a sorted subset of ``range(ground_size)``."""
    k = len(subset)
    rank = 0
    prev = -1
    for i, c in enumerate(subset):
        if c <= prev or c >= ground_size:
            raise ValueError(f"{tuple(subset)} is not a sorted subset of range({ground_size})")
        # count subsets that agree on the first i entries and have a smaller i-th one
        for smaller in range(prev + 1, c):
            rank += math.comb(ground_size - smaller - 1, k - i - 1)
        prev = c
    return rank


def subset_unrank(rank: int, ground_size: int, subset_size: int) -> tuple[int, ...]:
    """Inverse of :func:`subset_rank`."""
    total = math.comb(ground_size, subset_size)
    if not 0 <= rank < total:
        raise ValueError(f"rank {rank} out of range for C({ground_size},{subset_size})={total}")
    out = []
    c = 0
    for i in range(subset_size):
        while True:
            block = math.comb(ground_size - c - 1, subset_size - i - 1)
            if rank < block:
                break
            rank -= block
            c += 1
        out.append(c)
        c += 1
    return tuple(out)


def xor_combine(payloads: Iterable[bytes]) -> bytes:
    """Bytewise XOR of equal-length payloads."""
    payloads = list(payloads)
    if not payloads:
        raise CodecError("xor_combine needs at least one payload")
    n = len(payloads[0])
    acc = np.frombuffer(payloads[0], dtype=np.uint8).copy()
    for p in payloads[1:]:
        if len(p) != n:
            raise CodecError(f"payload length mismatch: {len(p)} != {n}")
        np.bitwise_xor(acc, np.frombuffer(p, dtype=np.uint8), out=acc)
    return acc.tobytes()


def subpacket_size(file_size: int, S: int) -> int:
    """Length of each subpacket when a `file_size`-byte file is split in `S` parts."""
    if S < 1:
        raise ValueError("subpacketization must be >= 1")
    return -(-file_size // S)


@dataclass(frozen=True)
class FileLibrary:
    """N equal-size content files.

    ``file_size`` is the true length F; subpackets derived from a file may be
    zero-padded, the library keeps the unpadded payloads.
    """
    payloads: tuple[bytes, ...]

    def __post_init__(self):
        if not self.payloads:
            raise ValueError("library needs at least one file")
        sizes = {len(p) for p in self.payloads}
        if len(sizes) != 1 or 0 in sizes:
            raise ValueError(f"all files must share one positive size, got {sorted(sizes)}")

    @classmethod
    def synthetic(cls, n_files: int, file_size: int, seed: int = 0) -> "FileLibrary":
        """Seeded pseudorandom payloads."""
        if n_files < 1 or file_size < 1:
            raise ValueError("n_files and file_size must be positive")
        rng = np.random.default_rng(seed)
        data = rng.integers(0, 256, size=(n_files, file_size), dtype=np.uint8)
        return cls(tuple(row.tobytes() for row in data))

    @property
    def n_files(self) -> int:
        return len(self.payloads)

    @property
    def file_size(self) -> int:
        return len(self.payloads[0])

    def __getitem__(self, file_id: int) -> bytes:
        return self.payloads[file_id]


def split_file(file_id: int, S: int, library: FileLibrary) -> list[bytes]:
    """Split one file into `S` equal-length parts, zero-padding the last one.

    All parts have length ``ceil(F / S)``; concatenating them and truncating to
    F bytes gives the original file back.
    """
    if not 0 <= file_id < library.n_files:
        raise KeyError(f"unknown file id {file_id}")
    size = subpacket_size(library.file_size, S)
    data = library[file_id]
    data = data + bytes(size * S - len(data))
    return [data[i * size:(i + 1) * size] for i in range(S)]


def join_parts(parts: Sequence[bytes], file_size: int) -> bytes:
    return b"".join(parts)[:file_size]


def file_label(file_id: int) -> str:
    """Human-readable file name: A, B, ..., Z, F26, F27, ..."""
    return chr(ord("A") + file_id) if file_id < 26 else f"F{file_id}"
