"""Open-addressing (linear probing) map from kmer word pairs to int64 values."""

from __future__ import annotations

import numba as nb
import numpy as np

from .kmer import hash_pair

EMPTY = -1
_SEED = np.uint64(0x5851F42D4C957F2D)


@nb.njit(cache=True, inline="always")
def table_find(keys_hi, keys_lo, vals, hi, lo):
    """Slot index holding (hi, lo), or the empty slot where it would go (negated - 1)."""
    mask = np.uint64(vals.shape[0] - 1)
    slot = hash_pair(hi, lo, _SEED) & mask
    while True:
        s = np.int64(slot)
        if vals[s] == EMPTY:
            return -s - 1
        if keys_hi[s] == hi and keys_lo[s] == lo:
            return s
        slot = (slot + np.uint64(1)) & mask


@nb.njit(cache=True, inline="always")
def table_get(keys_hi, keys_lo, vals, hi, lo):
    s = table_find(keys_hi, keys_lo, vals, hi, lo)
    if s < 0:
        return EMPTY
    return vals[s]


@nb.njit(cache=True)
def table_insert_many(keys_hi, keys_lo, vals, his, los, values):
    for j in range(his.shape[0]):
        s = table_find(keys_hi, keys_lo, vals, his[j], los[j])
        if s < 0:
            s = -s - 1
            keys_hi[s] = his[j]
            keys_lo[s] = los[j]
        vals[s] = values[j]


@nb.njit(cache=True)
def table_get_many(keys_hi, keys_lo, vals, his, los):
    out = np.empty(his.shape[0], dtype=np.int64)
    for j in range(his.shape[0]):
        out[j] = table_get(keys_hi, keys_lo, vals, his[j], los[j])
    return out


def capacity_for(n: int) -> int:
    cap = 16
    while cap < 2 * n + 2:
        cap <<= 1
    return cap


class KmerTable:
    """Fixed-capacity map; call :meth:`reserve` before bulk inserts."""

    def __init__(self, capacity: int = 16):
        cap = 16
        while cap < capacity:
            cap <<= 1
        self.keys_hi = np.zeros(cap, dtype=np.uint64)
        self.keys_lo = np.zeros(cap, dtype=np.uint64)
        self.vals = np.full(cap, EMPTY, dtype=np.int64)
        self.size = 0

    @classmethod
    def from_arrays(cls, his: np.ndarray, los: np.ndarray, values: np.ndarray) -> KmerTable:
        t = cls(capacity_for(len(his)))
        t.insert_many(his, los, values)
        return t

    @property
    def capacity(self) -> int:
        return self.vals.shape[0]

    def reserve(self, n_total: int) -> None:
        if 2 * n_total + 2 <= self.capacity:
            return
        used = self.vals != EMPTY
        his, los, vals = self.keys_hi[used], self.keys_lo[used], self.vals[used]
        cap = capacity_for(n_total)
        self.keys_hi = np.zeros(cap, dtype=np.uint64)
        self.keys_lo = np.zeros(cap, dtype=np.uint64)
        self.vals = np.full(cap, EMPTY, dtype=np.int64)
        table_insert_many(self.keys_hi, self.keys_lo, self.vals, his, los, vals)

    def insert_many(self, his, los, values) -> None:
        his = np.ascontiguousarray(his, dtype=np.uint64)
        los = np.ascontiguousarray(los, dtype=np.uint64)
        values = np.ascontiguousarray(values, dtype=np.int64)
        self.reserve(self.size + len(his))
        table_insert_many(self.keys_hi, self.keys_lo, self.vals, his, los, values)
        self.size = int(np.count_nonzero(self.vals != EMPTY))

    def get_many(self, his, los) -> np.ndarray:
        return table_get_many(self.keys_hi, self.keys_lo, self.vals,
                              np.ascontiguousarray(his, dtype=np.uint64),
                              np.ascontiguousarray(los, dtype=np.uint64))

    def __len__(self) -> int:
        return self.size
