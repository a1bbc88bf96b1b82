"""Packed kmers and their canonical (strand-independent) form.

A kmer of length k (odd, 1 <= k <= 63) is packed 2 bits per base with the
fixed code table A=0, C=1, G=2, T=3, first base in the most significant
position. Inside the numba kernels a kmer is a pair of uint64 words
``(hi, lo)``: ``lo`` holds the last ``min(k, 32)`` bases and ``hi`` the
remaining leading bases (always zero when k <= 32). Comparing the pair
lexicographically is the same as comparing the packed integer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

ALPHABET = "ACGTN"
N_CODE = 4
MAX_K = 63

# byte -> code; anything outside ACGT (either case) becomes N
BASE_CODES = np.full(256, N_CODE, dtype=np.uint8)
for _i, _c in enumerate("ACGT"):
    BASE_CODES[ord(_c)] = _i
    BASE_CODES[ord(_c.lower())] = _i
CODE_BASES = np.frombuffer(b"ACGTN", dtype=np.uint8).copy()
# complement table over codes, N stays N
COMPLEMENT_CODES = np.array([3, 2, 1, 0, 4], dtype=np.uint8)

_U0 = np.uint64(0)
_U1 = np.uint64(1)
_U2 = np.uint64(2)
_U3 = np.uint64(3)
_U62 = np.uint64(62)
_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)


def check_k(k: int) -> None:
    if not isinstance(k, (int, np.integer)) or k < 1 or k > MAX_K or k % 2 == 0:
        raise ValueError(f"k must be odd and in [1, {MAX_K}], got {k!r}")


def encode_bases(seq: bytes | str) -> np.ndarray:
    """Map a nucleotide string to codes 0..4 (non-ACGT -> N)."""
    if isinstance(seq, str):
        seq = seq.encode("ascii", "replace")
    return BASE_CODES[np.frombuffer(seq, dtype=np.uint8)]


def decode_bases(codes: np.ndarray) -> str:
    return CODE_BASES[np.asarray(codes, dtype=np.uint8)].tobytes().decode("ascii")


# ---------------------------------------------------------------------------
# numba primitives on (hi, lo) word pairs


@nb.njit(cache=True, inline="always")
def word_masks(k):
    if k >= 32:
        lmask = _ALL
        hmask = (_U1 << np.uint64(2 * (k - 32))) - _U1
    else:
        lmask = (_U1 << np.uint64(2 * k)) - _U1
        hmask = _U0
    return lmask, hmask


@nb.njit(cache=True, inline="always")
def push_right(hi, lo, b, lmask, hmask):
    """Drop the first base, append code ``b`` at the end."""
    nhi = ((hi << _U2) | (lo >> _U62)) & hmask
    nlo = ((lo << _U2) | np.uint64(b)) & lmask
    return nhi, nlo


@nb.njit(cache=True, inline="always")
def push_left(hi, lo, c, k):
    """Drop the last base, prepend code ``c`` at the front."""
    nlo = (lo >> _U2) | ((hi & _U3) << _U62)
    nhi = hi >> _U2
    if k > 32:
        nhi |= np.uint64(c) << np.uint64(2 * (k - 32) - 2)
    else:
        nlo |= np.uint64(c) << np.uint64(2 * k - 2)
    return nhi, nlo


@nb.njit(cache=True, inline="always")
def pair_less(ahi, alo, bhi, blo):
    return ahi < bhi or (ahi == bhi and alo < blo)


@nb.njit(cache=True, inline="always")
def canonical_pair(fhi, flo, rhi, rlo):
    """Return (hi, lo, strand); strand is 1 when the reverse complement is smaller."""
    if pair_less(rhi, rlo, fhi, flo):
        return rhi, rlo, 1
    return fhi, flo, 0


@nb.njit(cache=True)
def revcomp_pair(hi, lo, k):
    rhi = _U0
    rlo = _U0
    lmask, hmask = word_masks(k)
    # read bases last-to-first, pushing complements on the right
    for i in range(k):
        if i < 32:
            b = (lo >> np.uint64(2 * i)) & _U3
        else:
            b = (hi >> np.uint64(2 * (i - 32))) & _U3
        rhi, rlo = push_right(rhi, rlo, _U3 - b, lmask, hmask)
    return rhi, rlo


@nb.njit(cache=True, inline="always")
def mix64(x):
    # splitmix64 finalizer
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


@nb.njit(cache=True, inline="always")
def hash_pair(hi, lo, seed):
    return mix64(lo ^ mix64(hi ^ seed))


@nb.njit(cache=True)
def canonical_kmers_of(codes, offsets, k):
    """Canonical words of every valid kmer over a batch of reads."""
    lmask, hmask = word_masks(k)
    n_reads = offsets.shape[0] - 1
    total = 0
    for r in range(n_reads):
        ln = offsets[r + 1] - offsets[r]
        if ln >= k:
            total += ln - k + 1
    out_hi = np.empty(total, dtype=np.uint64)
    out_lo = np.empty(total, dtype=np.uint64)
    n = 0
    for r in range(n_reads):
        start = offsets[r]
        end = offsets[r + 1]
        fhi = _U0
        flo = _U0
        rhi = _U0
        rlo = _U0
        run = 0
        for i in range(start, end):
            b = codes[i]
            if b > 3:
                run = 0
                continue
            fhi, flo = push_right(fhi, flo, b, lmask, hmask)
            rhi, rlo = push_left(rhi, rlo, 3 - b, k)
            run += 1
            if run >= k:
                chi, clo, _ = canonical_pair(fhi, flo, rhi, rlo)
                out_hi[n] = chi
                out_lo[n] = clo
                n += 1
    return out_hi[:n], out_lo[:n]


# ---------------------------------------------------------------------------
# Python-level kmer value


def _split(value: int) -> tuple[int, int]:
    return value >> 64, value & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True, order=True)
class Kmer:
    """An oriented kmer; ``value`` is the packed 2k-bit integer."""

    value: int
    k: int

    @property
    def words(self) -> tuple[int, int]:
        return _split(self.value)

    def revcomp(self) -> Kmer:
        return revcomp(self)

    def canonical(self) -> Kmer:
        return canonical(self)

    def is_canonical(self) -> bool:
        return self.value <= revcomp(self).value

    def __str__(self) -> str:
        return unpack(self)


def pack(s: str | bytes, k: int | None = None) -> Kmer:
    """Pack an ACGT string of length k."""
    if isinstance(s, bytes):
        s = s.decode("ascii")
    if k is None:
        k = len(s)
    if not 1 <= k <= MAX_K:
        raise ValueError(f"kmer length must be in [1, {MAX_K}], got {k}")
    if len(s) != k:
        raise ValueError(f"expected {k} bases, got {len(s)}")
    value = 0
    for ch in s:
        code = "ACGT".find(ch)
        if code < 0:
            raise ValueError(f"invalid base {ch!r} in kmer {s!r}")
        value = (value << 2) | code
    return Kmer(value, k)


def unpack(x: Kmer) -> str:
    out = []
    v = x.value
    for _ in range(x.k):
        out.append("ACGT"[v & 3])
        v >>= 2
    return "".join(reversed(out))


def revcomp(x: Kmer) -> Kmer:
    v = x.value
    r = 0
    for _ in range(x.k):
        r = (r << 2) | (3 - (v & 3))
        v >>= 2
    return Kmer(r, x.k)


def canonical(x: Kmer) -> Kmer:
    rc = revcomp(x)
    return rc if rc.value < x.value else x


def revcomp_string(s: str) -> str:
    table = str.maketrans("ACGTNacgtn", "TGCANtgcan")
    return s.translate(table)[::-1]


def kmers_of(read: str, k: int) -> list[tuple[int, Kmer | None]]:
    """Every kmer of ``read`` by start position; ``None`` marks kmers covering a non-ACGT base."""
    if k < 1:
        raise ValueError("k must be >= 1")
    read = read.upper()
    out: list[tuple[int, Kmer | None]] = []
    for pos in range(len(read) - k + 1):
        window = read[pos:pos + k]
        if all(c in "ACGT" for c in window):
            out.append((pos, pack(window, k)))
        else:
            out.append((pos, None))
    return out
