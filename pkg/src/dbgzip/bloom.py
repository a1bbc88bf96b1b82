"""Probabilistic de Bruijn graph stored in a Bloom filter.

Graph nodes are canonical kmers; edges are never stored, they are recovered by
asking the filter about the four possible successors of a node. A second
backend, :class:`ExactDbg`, answers membership from a sorted kmer set and is
used as a zero-false-positive oracle in tests.
"""

from __future__ import annotations

import math
import struct
import zlib

import numba as nb
import numpy as np

from .kmer import (
    Kmer,
    canonical_pair,
    check_k,
    hash_pair,
    pair_less,
    push_left,
    push_right,
    word_masks,
)

# f = 0.5 ** ln 2: false positive rate per bit-per-element at the optimal hash count
BLOOM_BASE = 0.5 ** math.log(2)
MIN_BITS_PER_KMER = 4.0
MAX_BITS_PER_KMER = 20.0
DEFAULT_SEEDS = (0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F)

BLOOM = 0
EXACT = 1

IMAGE_MAGIC = b"BLM1"
_IMAGE_HEAD = struct.Struct("<4sBBHQIIQQ")  # magic, k, kind, pad, m, h, pad, seed1, seed2
_CRC = struct.Struct("<I")


class CorruptImageError(ValueError):
    """A serialized graph image failed validation."""


def optimal_bits_per_kmer(mean_abundance: float) -> float:
    """Bloom size in bits per solid kmer minimising filter + false-branch cost.

    The cost model is ``r + 6 * D * f**r`` bits per genome kmer: the filter
    itself plus three candidate false successors per node, about 2 bits each.
    """
    if not mean_abundance > 0:
        raise ValueError(f"mean abundance must be positive, got {mean_abundance}")
    ln_f = math.log(BLOOM_BASE)
    arg = -1.0 / (6.0 * mean_abundance * ln_f)
    if arg >= 1.0:
        # cost is increasing in r everywhere: the smallest filter wins
        return MIN_BITS_PER_KMER
    r = math.log(arg) / ln_f
    return min(MAX_BITS_PER_KMER, max(MIN_BITS_PER_KMER, r))


def hash_count(bits_per_kmer: float) -> int:
    return max(1, round(bits_per_kmer * math.log(2)))


# ---------------------------------------------------------------------------
# kernels


@nb.njit(cache=True, inline="always")
def _bloom_probe(bits, m, nh, seed1, seed2, hi, lo):
    um = np.uint64(m)
    idx = hash_pair(hi, lo, seed1) % um
    step = hash_pair(hi, lo, seed2) % um
    if step == 0:
        step = np.uint64(1)
    for _ in range(nh):
        if (bits[idx >> np.uint64(6)] >> (idx & np.uint64(63))) & np.uint64(1) == 0:
            return False
        idx += step
        if idx >= um:
            idx -= um
    return True


@nb.njit(cache=True)
def bloom_insert(bits, m, nh, seed1, seed2, his, los):
    um = np.uint64(m)
    for j in range(his.shape[0]):
        hi = his[j]
        lo = los[j]
        idx = hash_pair(hi, lo, seed1) % um
        step = hash_pair(hi, lo, seed2) % um
        if step == 0:
            step = np.uint64(1)
        for _ in range(nh):
            bits[idx >> np.uint64(6)] |= np.uint64(1) << (idx & np.uint64(63))
            idx += step
            if idx >= um:
                idx -= um


@nb.njit(cache=True, inline="always")
def _exact_contains(ex_hi, ex_lo, hi, lo):
    a = 0
    b = ex_hi.shape[0]
    while a < b:
        mid = (a + b) >> 1
        if pair_less(ex_hi[mid], ex_lo[mid], hi, lo):
            a = mid + 1
        else:
            b = mid
    return a < ex_hi.shape[0] and ex_hi[a] == hi and ex_lo[a] == lo


@nb.njit(cache=True, inline="always")
def graph_contains(kind, bits, m, nh, seed1, seed2, ex_hi, ex_lo, hi, lo):
    """Membership of a canonical kmer."""
    if kind == BLOOM:
        if m == 0:
            return False
        return _bloom_probe(bits, m, nh, seed1, seed2, hi, lo)
    return _exact_contains(ex_hi, ex_lo, hi, lo)


@nb.njit(cache=True)
def contains_many(kind, bits, m, nh, seed1, seed2, ex_hi, ex_lo, his, los):
    out = np.empty(his.shape[0], dtype=np.bool_)
    for j in range(his.shape[0]):
        out[j] = graph_contains(kind, bits, m, nh, seed1, seed2, ex_hi, ex_lo, his[j], los[j])
    return out


@nb.njit(cache=True, inline="always")
def successor_mask(kind, bits, m, nh, seed1, seed2, ex_hi, ex_lo, k,
                   fhi, flo, rhi, rlo, lmask, hmask):
    """Bit b set iff oriented node + base b is a member. ``(rhi, rlo)`` is revcomp(node)."""
    mask = 0
    for b in range(4):
        nfh, nfl = push_right(fhi, flo, b, lmask, hmask)
        nrh, nrl = push_left(rhi, rlo, 3 - b, k)
        chi, clo, _ = canonical_pair(nfh, nfl, nrh, nrl)
        if graph_contains(kind, bits, m, nh, seed1, seed2, ex_hi, ex_lo, chi, clo):
            mask |= 1 << b
    return mask


@nb.njit(cache=True)
def _successor_mask_one(kind, bits, m, nh, seed1, seed2, ex_hi, ex_lo, k, fhi, flo, rhi, rlo):
    lmask, hmask = word_masks(k)
    return successor_mask(kind, bits, m, nh, seed1, seed2, ex_hi, ex_lo, k,
                          fhi, flo, rhi, rlo, lmask, hmask)


# ---------------------------------------------------------------------------
# graph objects


_EMPTY_U64 = np.zeros(0, dtype=np.uint64)


class GraphBase:
    """Common query surface of the Bloom and exact-set backends."""

    k: int
    kind: int

    def kernel_args(self) -> tuple:
        """Arguments forwarded to the numba walkers, in ``graph_contains`` order."""
        raise NotImplementedError

    def contains(self, x: Kmer) -> bool:
        c = x.canonical()
        hi, lo = c.words
        return bool(graph_contains(*self.kernel_args(), np.uint64(hi), np.uint64(lo)))

    __contains__ = contains

    def contains_words(self, his: np.ndarray, los: np.ndarray) -> np.ndarray:
        return contains_many(*self.kernel_args(), his, los)


class ProbabilisticDbg(GraphBase):
    """Bloom filter over canonical kmers.

    ``m`` is the exact bit length used for indexing; the backing array is
    rounded up to whole 64-bit words.
    """

    kind = BLOOM

    def __init__(self, k: int, m: int, h: int, seeds: tuple[int, int] = DEFAULT_SEEDS,
                 bits: np.ndarray | None = None):
        check_k(k)
        self.k = k
        self.m = int(m)
        self.h = int(h)
        self.seeds = (int(seeds[0]), int(seeds[1]))
        n_words = (self.m + 63) // 64
        if bits is None:
            bits = np.zeros(n_words, dtype=np.uint64)
        elif bits.shape != (n_words,):
            raise ValueError("bit array does not match m")
        self.bits = bits

    def kernel_args(self) -> tuple:
        return (BLOOM, self.bits, self.m, self.h, np.uint64(self.seeds[0]),
                np.uint64(self.seeds[1]), _EMPTY_U64, _EMPTY_U64)

    def add_words(self, his: np.ndarray, los: np.ndarray) -> None:
        if self.m == 0:
            raise ValueError("cannot insert into a zero-size filter")
        bloom_insert(self.bits, self.m, self.h, np.uint64(self.seeds[0]),
                     np.uint64(self.seeds[1]), his, los)

    def add(self, x: Kmer) -> None:
        hi, lo = x.canonical().words
        self.add_words(np.array([hi], dtype=np.uint64), np.array([lo], dtype=np.uint64))

    @property
    def n_bytes(self) -> int:
        return self.bits.nbytes

    def fill_ratio(self) -> float:
        if self.m == 0:
            return 0.0
        return int(np.unpackbits(self.bits.view(np.uint8)).sum()) / self.m

    def serialize(self) -> bytes:
        return serialize(self)


class ExactDbg(GraphBase):
    """Exact node set; zero false positives."""

    kind = EXACT

    def __init__(self, k: int, his: np.ndarray, los: np.ndarray):
        check_k(k)
        self.k = k
        his = np.asarray(his, dtype=np.uint64)
        los = np.asarray(los, dtype=np.uint64)
        order = np.lexsort((los, his))
        his, los = his[order], los[order]
        if his.size:
            keep = np.ones(his.size, dtype=bool)
            keep[1:] = (his[1:] != his[:-1]) | (los[1:] != los[:-1])
            his, los = his[keep], los[keep]
        self.his = np.ascontiguousarray(his)
        self.los = np.ascontiguousarray(los)

    @classmethod
    def from_kmers(cls, kmers, k: int) -> ExactDbg:
        words = [x.canonical().words for x in kmers]
        his = np.array([w[0] for w in words], dtype=np.uint64)
        los = np.array([w[1] for w in words], dtype=np.uint64)
        return cls(k, his, los)

    def kernel_args(self) -> tuple:
        return (EXACT, _EMPTY_U64, 0, 0, np.uint64(0), np.uint64(0), self.his, self.los)

    def __len__(self) -> int:
        return int(self.his.size)


def build(solid_his: np.ndarray, solid_los: np.ndarray, bits_per_kmer: float, k: int,
          seeds: tuple[int, int] = DEFAULT_SEEDS) -> ProbabilisticDbg:
    """Insert the solid canonical kmers into a filter of ceil(r * n) bits."""
    n = int(np.asarray(solid_his).size)
    if n == 0:
        raise ValueError("cannot build a graph from an empty solid set")
    if not bits_per_kmer > 0:
        raise ValueError("bits per kmer must be positive")
    m = max(1, math.ceil(bits_per_kmer * n))
    g = ProbabilisticDbg(k, m, hash_count(bits_per_kmer), seeds)
    g.add_words(np.ascontiguousarray(solid_his, dtype=np.uint64),
                np.ascontiguousarray(solid_los, dtype=np.uint64))
    return g


def empty_graph(k: int) -> ProbabilisticDbg:
    return ProbabilisticDbg(k, 0, 1)


def successors(g: GraphBase, x: Kmer) -> list[tuple[str, Kmer]]:
    """Graph successors of the oriented node ``x``, in A, C, G, T order."""
    if x.k != g.k:
        raise ValueError(f"kmer length {x.k} does not match graph k={g.k}")
    fhi, flo = x.words
    rhi, rlo = x.revcomp().words
    mask = _successor_mask_one(*g.kernel_args(), g.k, np.uint64(fhi), np.uint64(flo),
                               np.uint64(rhi), np.uint64(rlo))
    top = (1 << (2 * g.k)) - 1
    out = []
    for b in range(4):
        if mask >> b & 1:
            out.append(("ACGT"[b], Kmer(((x.value << 2) | b) & top, g.k)))
    return out


# ---------------------------------------------------------------------------
# serialization


def serialize(g: ProbabilisticDbg) -> bytes:
    head = _IMAGE_HEAD.pack(IMAGE_MAGIC, g.k, BLOOM, 0, g.m, g.h, 0, *g.seeds)
    body = g.bits.astype("<u8", copy=False).tobytes()
    crc = zlib.crc32(body, zlib.crc32(head))
    return head + _CRC.pack(crc) + body


def deserialize(data: bytes) -> ProbabilisticDbg:
    mv = memoryview(data)
    fixed = _IMAGE_HEAD.size + _CRC.size
    if len(mv) < fixed:
        raise CorruptImageError("graph image truncated")
    magic, k, kind, _, m, h, _, s1, s2 = _IMAGE_HEAD.unpack_from(mv, 0)
    if magic != IMAGE_MAGIC:
        raise CorruptImageError("bad graph image magic")
    if kind != BLOOM:
        raise CorruptImageError(f"unknown graph kind {kind}")
    (crc,) = _CRC.unpack_from(mv, _IMAGE_HEAD.size)
    n_words = (m + 63) // 64
    body = mv[fixed:]
    if len(body) != 8 * n_words:
        raise CorruptImageError("graph image truncated")
    if zlib.crc32(body, zlib.crc32(mv[: _IMAGE_HEAD.size])) != crc:
        raise CorruptImageError("graph image checksum mismatch")
    try:
        check_k(k)
    except ValueError as exc:
        raise CorruptImageError(str(exc)) from None
    bits = np.frombuffer(body, dtype="<u8").astype(np.uint64)
    return ProbabilisticDbg(k, m, h, (s1, s2), bits)
