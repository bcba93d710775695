# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; must agree bit-for-bit with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint32_t, uint64_t, int64_t

cnp.import_array()

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"

cdef uint64_t MOD = (<uint64_t>1 << 61) - 1
cdef uint64_t BASE = 1000003


cdef inline uint64_t mulmod(uint64_t a, uint64_t b) nogil:
    cdef u128 p = <u128>a * <u128>b
    cdef uint64_t lo = <uint64_t>(p & MOD)
    cdef uint64_t hi = <uint64_t>(p >> 61)
    cdef uint64_t r = lo + hi
    if r >= MOD:
        r -= MOD
    return r


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = z + <uint64_t>0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


def kgram_hashes(str text, Py_ssize_t k):
    if k < 1:
        raise ValueError("k must be >= 1")
    cdef Py_ssize_t n = len(text)
    if n < k:
        return np.empty(0, dtype=np.uint64)
    cdef cnp.ndarray[uint32_t, ndim=1] codes = np.frombuffer(
        text.encode("utf-32-le", "surrogatepass"), dtype=np.uint32).copy()
    cdef uint32_t[::1] c = codes
    cdef cnp.ndarray[uint64_t, ndim=1] out_arr = np.empty(n - k + 1, dtype=np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef uint64_t top = 1, h = 0
    cdef Py_ssize_t i
    with nogil:
        for i in range(k - 1):
            top = mulmod(top, BASE)
        for i in range(k):
            h = mulmod(h, BASE) + c[i]
            if h >= MOD:
                h -= MOD
        out[0] = mix64(h)
        for i in range(k, n):
            # subtract the outgoing char: add its additive inverse mod MOD
            h = h + (MOD - mulmod(c[i - k], top))
            if h >= MOD:
                h -= MOD
            h = mulmod(h, BASE) + c[i]
            if h >= MOD:
                h -= MOD
            out[i - k + 1] = mix64(h)
    return out_arr


def winnow_select(hashes, Py_ssize_t w):
    if w < 1:
        raise ValueError("w must be >= 1")
    cdef const uint64_t[::1] h = np.ascontiguousarray(hashes, dtype=np.uint64)
    cdef Py_ssize_t n = h.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.uint64), np.empty(0, dtype=np.uint32)
    if w > n:
        w = n
    cdef cnp.ndarray[int64_t, ndim=1] dq_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] dq = dq_arr
    cdef cnp.ndarray[uint32_t, ndim=1] pos_arr = np.empty(n, dtype=np.uint32)
    cdef uint32_t[::1] pos = pos_arr
    cdef Py_ssize_t head = 0, tail = 0, i, m = 0
    cdef int64_t last = -1
    with nogil:
        for i in range(n):
            while tail > head and h[dq[tail - 1]] >= h[i]:
                tail -= 1
            dq[tail] = i
            tail += 1
            if dq[head] <= i - w:
                head += 1
            if i >= w - 1 and dq[head] != last:
                last = dq[head]
                pos[m] = <uint32_t>last
                m += 1
    positions = pos_arr[:m].copy()
    return np.asarray(h)[positions.astype(np.intp)].copy(), positions


def intersection_size(a, b):
    cdef const uint64_t[::1] x = np.ascontiguousarray(a, dtype=np.uint64)
    cdef const uint64_t[::1] y = np.ascontiguousarray(b, dtype=np.uint64)
    cdef Py_ssize_t i = 0, j = 0, na = x.shape[0], nb = y.shape[0], count = 0
    with nogil:
        while i < na and j < nb:
            if x[i] == y[j]:
                count += 1
                i += 1
                j += 1
            elif x[i] < y[j]:
                i += 1
            else:
                j += 1
    return count
