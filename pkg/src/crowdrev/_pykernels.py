"""Pure-Python hot kernels. Reference behaviour for the compiled ``_ckernels``."""

from __future__ import annotations

from collections import deque

import numpy as np

MOD = (1 << 61) - 1
BASE = 1_000_003
_MASK64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finalizer; a bijection on 64-bit values."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def kgram_hashes(text: str, k: int) -> np.ndarray:
    """Hash every k-gram of ``text`` with a rolling polynomial hash mod 2**61-1."""
    n = len(text)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        return np.empty(0, dtype=np.uint64)
    top = pow(BASE, k - 1, MOD)
    h = 0
    for ch in text[:k]:
        h = (h * BASE + ord(ch)) % MOD
    out = [mix64(h)]
    for i in range(k, n):
        h = ((h - ord(text[i - k]) * top) * BASE + ord(text[i])) % MOD
        out.append(mix64(h))
    return np.array(out, dtype=np.uint64)


def winnow_select(hashes: np.ndarray, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Rightmost minimum of every window of ``w`` hashes, one entry per position."""
    if w < 1:
        raise ValueError("w must be >= 1")
    values = [int(v) for v in hashes]
    n = len(values)
    sel_h: list[int] = []
    sel_p: list[int] = []
    if n == 0:
        return np.empty(0, dtype=np.uint64), np.empty(0, dtype=np.uint32)
    w = min(w, n)
    window: deque[int] = deque()
    last = -1
    for i, v in enumerate(values):
        # ">=" drops equal values on the left so ties resolve to the rightmost.
        while window and values[window[-1]] >= v:
            window.pop()
        window.append(i)
        if window[0] <= i - w:
            window.popleft()
        if i >= w - 1 and window[0] != last:
            last = window[0]
            sel_h.append(values[last])
            sel_p.append(last)
    return np.array(sel_h, dtype=np.uint64), np.array(sel_p, dtype=np.uint32)


def intersection_size(a: np.ndarray, b: np.ndarray) -> int:
    """Multiset intersection size of two ascending-sorted hash arrays."""
    i = j = count = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        x, y = a[i], b[j]
        if x == y:
            count += 1
            i += 1
            j += 1
        elif x < y:
            i += 1
        else:
            j += 1
    return count
