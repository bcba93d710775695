"""Winnowing document fingerprints for source code.

Text is normalized (whitespace dropped, ASCII letters lower-cased), cut into
k-grams, hashed with a rolling polynomial hash, and the rightmost minimum of
every window of ``w`` consecutive hashes is kept.  Any shared substring of
length ``t = w + k - 1`` or more is guaranteed to produce a shared hash.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Protocol, Sequence

import numpy as np

from crowdrev._backend import kernels

_ASCII_LOWER = str.maketrans("ABCDEFGHIJKLMNOPQRSTUVWXYZ", "abcdefghijklmnopqrstuvwxyz")


@dataclass(frozen=True)
class WinnowParams:
    """Noise threshold ``k`` and window length ``w``; ``t`` is derived."""

    k: int = 12
    w: int = 8
    strip_punctuation: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.w < 1:
            raise ValueError(f"w must be >= 1, got {self.w}")

    @property
    def t(self) -> int:
        return self.w + self.k - 1

    @classmethod
    def from_thresholds(cls, k: int, t: int, strip_punctuation: bool = False) -> WinnowParams:
        if t < k:
            raise ValueError(f"guarantee threshold t={t} must be >= k={k}")
        return cls(k=k, w=t - k + 1, strip_punctuation=strip_punctuation)


class HashProvider(Protocol):
    def hash_kgrams(self, text: str, k: int) -> np.ndarray: ...


class RollingHash:
    """Default provider: polynomial hash mod 2**61-1 with base 1000003,
    passed through the splitmix64 finalizer."""

    name = "rolling-poly61"

    def hash_kgrams(self, text: str, k: int) -> np.ndarray:
        return kernels.kgram_hashes(text, k)


class TableHash:
    """Looks k-grams up in a fixed table. Used to reproduce hand-worked examples."""

    name = "table"

    def __init__(self, table: Mapping[str, int]):
        self.table = dict(table)

    def hash_kgrams(self, text: str, k: int) -> np.ndarray:
        return np.array([self.table[g] for g in kgrams(text, k)], dtype=np.uint64)


DEFAULT_HASH = RollingHash()

_ENTRY = np.dtype([("hash", "<u8"), ("pos", "<u4")])


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """Selected hashes and the k-gram positions that produced them."""

    hashes: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.uint64))
    positions: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.uint32))

    def __len__(self) -> int:
        return len(self.hashes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return np.array_equal(self.hashes, other.hashes) and np.array_equal(
            self.positions, other.positions
        )

    def __repr__(self) -> str:
        return f"Fingerprint({len(self)} entries)"

    @cached_property
    def sorted_hashes(self) -> np.ndarray:
        return np.sort(self.hashes)

    def to_bytes(self) -> bytes:
        """Little-endian: u32 count, then (u64 hash, u32 position) per entry."""
        entries = np.empty(len(self), dtype=_ENTRY)
        entries["hash"] = self.hashes
        entries["pos"] = self.positions
        return struct.pack("<I", len(self)) + entries.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> Fingerprint:
        if len(blob) < 4:
            raise ValueError("fingerprint blob shorter than its length prefix")
        (n,) = struct.unpack_from("<I", blob)
        if len(blob) != 4 + n * _ENTRY.itemsize:
            raise ValueError(f"fingerprint blob size {len(blob)} does not match count {n}")
        entries = np.frombuffer(blob, dtype=_ENTRY, count=n, offset=4)
        return cls(
            hashes=entries["hash"].astype(np.uint64),
            positions=entries["pos"].astype(np.uint32),
        )


def normalize(raw: str, strip_punctuation: bool = False) -> str:
    """Drop all whitespace and lower-case ASCII letters.

    With ``strip_punctuation`` only alphanumeric characters survive.
    """
    text = "".join(raw.split()).translate(_ASCII_LOWER)
    if strip_punctuation:
        text = "".join(ch for ch in text if ch.isalnum())
    return text


def kgrams(s: str, k: int) -> list[str]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return [s[i : i + k] for i in range(len(s) - k + 1)]


def hash_kgram(g: str, provider: HashProvider = DEFAULT_HASH) -> int:
    return int(provider.hash_kgrams(g, len(g))[0])


def winnow(hashes: Sequence[int] | np.ndarray, w: int) -> Fingerprint:
    """Select the rightmost minimum of each window of ``w`` hashes.

    A sequence shorter than ``w`` is treated as a single window.
    """
    arr = np.asarray(hashes, dtype=np.uint64)
    sel, pos = kernels.winnow_select(arr, w)
    return Fingerprint(hashes=sel, positions=pos)


def fingerprint_text(
    raw: str, params: WinnowParams = WinnowParams(), provider: HashProvider = DEFAULT_HASH
) -> Fingerprint:
    text = normalize(raw, params.strip_punctuation)
    return winnow(provider.hash_kgrams(text, params.k), params.w)


def match_degree(query: Fingerprint, candidate: Fingerprint) -> float:
    """Percentage of the query's hashes (as a multiset) found in the candidate."""
    n = len(query)
    if n == 0:
        return 0.0
    shared = kernels.intersection_size(query.sorted_hashes, candidate.sorted_hashes)
    return 100.0 * shared / n


def match_degree_reference(query: Sequence[int], candidate: Sequence[int]) -> float:
    """Counter-based multiset intersection; independent of the kernels."""
    if not query:
        return 0.0
    shared = sum((Counter(query) & Counter(candidate)).values())
    return 100.0 * shared / len(query)


def code_size(code: str) -> int:
    """Characters per line after trimming each line, summed."""
    return sum(len(line.strip()) for line in code.splitlines())

