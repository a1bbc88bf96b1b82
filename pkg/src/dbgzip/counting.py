"""Canonical kmer counting and the solidity threshold derived from it.

Counting is exact. Occurrences are hashed into partitions; with more than
one partition each chunk's partial counts are spilled to temporary files so
the working set stays bounded by the memory budget rather than by the input
size.
"""

from __future__ import annotations

import logging
import math
import os
import shutil
import tempfile
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba as nb
import numpy as np

from .fastx import ReadBatch, estimated_input_bytes, read_batches
from .kmer import Kmer, canonical_kmers_of, check_k, hash_pair

logger = logging.getLogger(__name__)

HISTOGRAM_CAP = 10_000
T_SOL_MIN = 2
T_SOL_MAX = 20
T_SOL_FALLBACK = 3
DEFAULT_MEMORY_BUDGET = 64 << 20
COUNT_CHUNK_READS = 20_000
# rough bytes of sort scratch per kmer occurrence; sizes the per-call chunk
SORT_BYTES_PER_KMER = 64

_PART_SEED = np.uint64(0xD6E8FEB86659FD93)
_REC = np.dtype([("hi", "<u8"), ("lo", "<u8"), ("n", "<u4")])


def unique_counts(his: np.ndarray, los: np.ndarray, weights: np.ndarray | None = None):
    """Sort (hi, lo) pairs and sum multiplicities per distinct pair."""
    if his.size == 0:
        return (np.zeros(0, np.uint64), np.zeros(0, np.uint64), np.zeros(0, np.int64))
    if not his.any():
        order = np.argsort(los, kind="stable")
    else:
        order = np.lexsort((los, his))
    his = his[order]
    los = los[order]
    start = np.ones(his.size, dtype=bool)
    start[1:] = (his[1:] != his[:-1]) | (los[1:] != los[:-1])
    idx = np.flatnonzero(start)
    if weights is None:
        counts = np.diff(np.append(idx, his.size)).astype(np.int64)
    else:
        counts = np.add.reduceat(weights[order].astype(np.int64), idx)
    return his[idx], los[idx], counts


@nb.njit(cache=True)
def _partition_ids(his, los, n_parts):
    out = np.empty(his.shape[0], dtype=np.int64)
    up = np.uint64(n_parts)
    for i in range(his.shape[0]):
        out[i] = np.int64(hash_pair(his[i], los[i], _PART_SEED) % up)
    return out


@dataclass
class AbundanceHistogram:
    """``h[c]`` = number of distinct kmers seen exactly c times; c = 0 unused.

    The last bucket also collects every count above the cap.
    """

    h: np.ndarray

    @classmethod
    def empty(cls, cap: int = HISTOGRAM_CAP) -> AbundanceHistogram:
        return cls(np.zeros(cap + 1, dtype=np.int64))

    @classmethod
    def from_counts(cls, counts: np.ndarray, cap: int = HISTOGRAM_CAP) -> AbundanceHistogram:
        hist = cls.empty(cap)
        hist.add_counts(counts)
        return hist

    @classmethod
    def from_list(cls, values: Sequence[int], cap: int = HISTOGRAM_CAP) -> AbundanceHistogram:
        """Build from ``[h(1), h(2), ...]``; entries past the cap fold into it."""
        values = np.asarray(values, dtype=np.int64)
        hist = cls.empty(max(cap, 1))
        n = min(values.size, hist.h.size - 1)
        hist.h[1:n + 1] = values[:n]
        hist.h[-1] += values[n:].sum()
        return hist

    def add_counts(self, counts: np.ndarray) -> None:
        cap = self.h.size - 1
        clipped = np.minimum(np.asarray(counts, dtype=np.int64), cap)
        self.h += np.bincount(clipped, minlength=cap + 1)[: cap + 1]

    @property
    def n_distinct(self) -> int:
        return int(self.h[1:].sum())

    def __getitem__(self, c: int) -> int:
        return int(self.h[c]) if 0 <= c < self.h.size else 0

    def __eq__(self, other) -> bool:
        return isinstance(other, AbundanceHistogram) and np.array_equal(self.h, other.h)


class CountTable:
    """Canonical kmer -> count, held as arrays sorted by packed value."""

    def __init__(self, k: int, his: np.ndarray, los: np.ndarray, counts: np.ndarray):
        self.k = k
        self.his = np.ascontiguousarray(his, dtype=np.uint64)
        self.los = np.ascontiguousarray(los, dtype=np.uint64)
        self.counts = np.ascontiguousarray(counts, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.counts.size)

    def total(self) -> int:
        return int(self.counts.sum())

    def _index(self, hi: int, lo: int) -> int:
        lo_bound = np.searchsorted(self.his, np.uint64(hi), side="left")
        hi_bound = np.searchsorted(self.his, np.uint64(hi), side="right")
        j = lo_bound + np.searchsorted(self.los[lo_bound:hi_bound], np.uint64(lo))
        if j < hi_bound and self.los[j] == lo:
            return int(j)
        return -1

    def __getitem__(self, x: Kmer) -> int:
        hi, lo = x.canonical().words
        j = self._index(hi, lo)
        return int(self.counts[j]) if j >= 0 else 0

    def __contains__(self, x: Kmer) -> bool:
        return self[x] > 0

    def kmers(self) -> list[Kmer]:
        return [Kmer((int(h) << 64) | int(l), self.k) for h, l in zip(self.his, self.los)]

    def items(self) -> list[tuple[Kmer, int]]:
        return list(zip(self.kmers(), (int(c) for c in self.counts)))

    def as_dict(self) -> dict[str, int]:
        return {str(x): c for x, c in self.items()}

    def histogram(self, cap: int = HISTOGRAM_CAP) -> AbundanceHistogram:
        return AbundanceHistogram.from_counts(self.counts, cap)

    def filter(self, min_count: int) -> CountTable:
        keep = self.counts >= min_count
        return CountTable(self.k, self.his[keep], self.los[keep], self.counts[keep])


class KmerCounter:
    """Two-stage exact counter: :meth:`add` batches, then :meth:`finish`.

    ``partitions > 1`` switches to disk spilling under ``tmpdir``. Batches are
    sliced so one sort never needs more than a fraction of ``memory_budget``.
    """

    def __init__(self, k: int, partitions: int = 1, tmpdir: str | None = None,
                 memory_budget: int = DEFAULT_MEMORY_BUDGET):
        check_k(k)
        self.k = k
        self.chunk_bases = max(1 << 16, memory_budget // SORT_BYTES_PER_KMER)
        self.partitions = max(1, int(partitions))
        self.n_reads = 0
        self.n_bases = 0
        self.n_occurrences = 0
        self._mem: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._dir = None
        if self.partitions > 1:
            self._dir = tempfile.mkdtemp(prefix="dbgzip-count-", dir=tmpdir)
            for p in range(self.partitions):
                open(self._raw_path(p), "wb").close()
        self._histogram: AbundanceHistogram | None = None
        self._final: CountTable | None = None

    def _raw_path(self, p: int) -> str:
        return os.path.join(self._dir, f"part{p:04d}.raw")

    def _counted_path(self, p: int) -> str:
        return os.path.join(self._dir, f"part{p:04d}.cnt")

    def add(self, batch: ReadBatch) -> None:
        if self._histogram is not None:
            raise RuntimeError("counter already finished")
        self.n_reads += len(batch)
        self.n_bases += batch.n_bases
        offsets = batch.offsets
        first = 0
        while first < len(batch):
            # at least one read per slice, however long
            last = int(np.searchsorted(offsets, offsets[first] + self.chunk_bases, side="right")) - 1
            last = min(max(last, first + 1), len(batch))
            his, los = canonical_kmers_of(batch.codes, offsets[first:last + 1], self.k)
            self._add_kmers(his, los)
            first = last

    def _add_kmers(self, his: np.ndarray, los: np.ndarray) -> None:
        self.n_occurrences += int(his.size)
        his, los, counts = unique_counts(his, los)
        if self.partitions == 1:
            self._mem.append((his, los, counts))
            if len(self._mem) > 8:
                self._mem = [self._merge(self._mem)]
            return
        pid = _partition_ids(his, los, self.partitions)
        order = np.argsort(pid, kind="stable")
        bounds = np.searchsorted(pid[order], np.arange(self.partitions + 1))
        rec = np.empty(his.size, dtype=_REC)
        rec["hi"] = his[order]
        rec["lo"] = los[order]
        rec["n"] = counts[order]
        for p in range(self.partitions):
            a, b = bounds[p], bounds[p + 1]
            if b > a:
                with open(self._raw_path(p), "ab") as fh:
                    rec[a:b].tofile(fh)

    @staticmethod
    def _merge(parts):
        his = np.concatenate([p[0] for p in parts])
        los = np.concatenate([p[1] for p in parts])
        w = np.concatenate([p[2] for p in parts])
        return unique_counts(his, los, w)

    def finish(self) -> AbundanceHistogram:
        """Complete counting and return the abundance histogram."""
        if self._histogram is not None:
            return self._histogram
        hist = AbundanceHistogram.empty()
        if self.partitions == 1:
            his, los, counts = self._merge(self._mem) if self._mem else unique_counts(
                np.zeros(0, np.uint64), np.zeros(0, np.uint64))
            self._mem = []
            self._final = CountTable(self.k, his, los, counts)
            hist.add_counts(counts)
        else:
            for p in range(self.partitions):
                rec = np.fromfile(self._raw_path(p), dtype=_REC)
                os.remove(self._raw_path(p))
                his, los, counts = unique_counts(rec["hi"], rec["lo"], rec["n"])
                del rec
                hist.add_counts(counts)
                out = np.empty(his.size, dtype=_REC)
                out["hi"], out["lo"] = his, los
                out["n"] = np.minimum(counts, np.iinfo(np.uint32).max)
                out.tofile(self._counted_path(p))
        self._histogram = hist
        return hist

    def _iter_counted(self):
        self.finish()
        if self.partitions == 1:
            yield self._final.his, self._final.los, self._final.counts
            return
        for p in range(self.partitions):
            rec = np.fromfile(self._counted_path(p), dtype=_REC)
            yield rec["hi"], rec["lo"], rec["n"].astype(np.int64)

    def _collect(self, min_count: int) -> CountTable:
        parts = []
        for his, los, counts in self._iter_counted():
            keep = counts >= min_count
            parts.append((his[keep], los[keep], counts[keep]))
        if not parts:
            return CountTable(self.k, np.zeros(0, np.uint64), np.zeros(0, np.uint64),
                              np.zeros(0, np.int64))
        his = np.concatenate([p[0] for p in parts])
        los = np.concatenate([p[1] for p in parts])
        counts = np.concatenate([p[2] for p in parts])
        if len(parts) > 1:
            order = np.lexsort((los, his))
            his, los, counts = his[order], los[order], counts[order]
        return CountTable(self.k, his, los, counts)

    def table(self) -> CountTable:
        """Every distinct kmer with its count (memory grows with the input)."""
        return self._collect(1)

    def solid(self, t_sol: int) -> CountTable:
        return self._collect(t_sol)

    def close(self) -> None:
        if self._dir is not None:
            shutil.rmtree(self._dir, ignore_errors=True)
            self._dir = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        self.close()


def partitions_for(path: str | os.PathLike, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> int:
    est = estimated_input_bytes(path) * SORT_BYTES_PER_KMER
    return max(1, math.ceil(est / memory_budget))


def count_kmers(source: str | os.PathLike | ReadBatch | Iterable[str], k: int,
                memory_budget: int | None = None) -> tuple[CountTable, AbundanceHistogram]:
    """Exact canonical kmer counts over a file or in-memory reads."""
    check_k(k)
    if isinstance(source, ReadBatch):
        batches: Iterable[ReadBatch] = [source]
        parts = 1
    elif isinstance(source, (str, os.PathLike)):
        batches = read_batches(source, COUNT_CHUNK_READS)
        parts = partitions_for(source, memory_budget) if memory_budget else 1
    else:
        batches = [ReadBatch.from_sequences(list(source))]
        parts = 1
    with KmerCounter(k, parts, memory_budget=memory_budget or DEFAULT_MEMORY_BUDGET) as counter:
        for batch in batches:
            counter.add(batch)
        hist = counter.finish()
        return counter.table(), hist


def infer_t_sol(hist: AbundanceHistogram | Sequence[int]) -> int:
    """Solidity threshold at the first valley of the abundance histogram.

    Scans c = 1, 2, ... and stops at the first c whose successor bucket is
    strictly larger. Result is clamped to [2, 20]; 3 when no rise is found.
    """
    if not isinstance(hist, AbundanceHistogram):
        hist = AbundanceHistogram.from_list(hist)
    h = hist.h
    if h[1:].sum() == 0:
        raise ValueError("empty abundance histogram")
    # the last bucket aggregates the overflow and is not part of the scan
    top = h.size - 1
    for c in range(1, top - 1):
        if h[c + 1] > h[c]:
            return min(T_SOL_MAX, max(T_SOL_MIN, c))
    return T_SOL_FALLBACK


def solid_kmers(table: CountTable, t_sol: int) -> CountTable:
    """Kmers with count >= t_sol (counts retained for anchor ranking)."""
    return table.filter(t_sol)


def mean_solid_abundance(table: CountTable, t_sol: int = 1) -> float:
    solid = table.counts[table.counts >= t_sol]
    if solid.size == 0:
        raise ValueError("no solid kmers")
    return float(solid.mean())
