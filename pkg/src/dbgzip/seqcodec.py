"""Read encoding against the graph: anchors, bifurcation lists, raw fallback.

An anchored read is stored as a dictionary index, the anchor position, a
strand bit and the read length, plus for each side of the anchor a list of
branch nucleotides (taken where the graph offers zero or several successors)
and a list of positioned error events (where the graph has a single successor
that disagrees with the read). The left side is walked on the reverse
complement of the read, so both sides share one walker.

Sequence streams of a block, each with its own adaptive model:

======  ==============  ========  ==========================================
id      name            alphabet  content
======  ==============  ========  ==========================================
0       flags           3         0 raw, 1 anchored forward, 2 anchored rc
1       read_len        256       varint per read
2       anchor_pos      256       varint per anchored read
3       anchor_index    256       varint per anchored read
4       bifurcation     5         branch nucleotides, right side then left
5       error_pos       256       per side: count, then position gaps - 1
6       error_nt        5         error nucleotides, right side then left
7       raw             5         nucleotides of raw reads
======  ==============  ========  ==========================================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import rangecoder as rc
from .bloom import GraphBase, successor_mask
from .counting import CountTable
from .hashtable import EMPTY, KmerTable, table_find
from .kmer import (
    CODE_BASES,
    Kmer,
    canonical_pair,
    encode_bases,
    push_left,
    push_right,
    revcomp_pair,
    word_masks,
)

FLAG_RAW, FLAG_FWD, FLAG_RC = 0, 1, 2
SEQ_STREAM_NAMES = ("flags", "read_len", "anchor_pos", "anchor_index",
                    "bifurcation", "error_pos", "error_nt", "raw")
SEQ_ALPHABETS = np.array([3, 256, 256, 256, 5, 256, 5, 5], dtype=np.int64)
N_SEQ_STREAMS = len(SEQ_STREAM_NAMES)
S_FLAGS, S_LEN, S_APOS, S_AIDX, S_BIF, S_ERRPOS, S_ERRNT, S_RAW = range(N_SEQ_STREAMS)

# decoder status codes
OK = 0
ERR_TRUNCATED = 1
ERR_DESYNC = 2
ERR_BAD_FIELD = 3

MAX_READ_LEN = 1 << 30


class StreamDesyncError(ValueError):
    """Decoded streams disagree with the graph walk: the data is corrupt."""


# ---------------------------------------------------------------------------
# kernels


@nb.njit(cache=True, inline="always")
def _single_base(mask):
    """(number of set bits, index of the highest set bit) of a 4-bit mask."""
    cnt = (mask & 1) + ((mask >> 1) & 1) + ((mask >> 2) & 1) + ((mask >> 3) & 1)
    b = -1
    for j in range(4):
        if (mask >> j) & 1:
            b = j
    return cnt, b


@nb.njit(cache=True)
def _words_at(seq, p, k, lmask, hmask):
    fhi = np.uint64(0)
    flo = np.uint64(0)
    rhi = np.uint64(0)
    rlo = np.uint64(0)
    for i in range(p, p + k):
        b = seq[i]
        fhi, flo = push_right(fhi, flo, b, lmask, hmask)
        rhi, rlo = push_left(rhi, rlo, 3 - b, k)
    return fhi, flo, rhi, rlo


@nb.njit(cache=True)
def walk_encode(seq, p, k, kind, bits, m, nh, s1, s2, ex_hi, ex_lo,
                bif, errpos, errnt):
    """Bifurcation list of ``seq`` to the right of the anchor at ``p``.

    Fills ``bif`` / ``errpos`` / ``errnt`` (each at least len(seq) long) and
    returns (n_branch, n_error). Error positions are indices into ``seq``.
    """
    lmask, hmask = word_masks(k)
    fhi, flo, rhi, rlo = _words_at(seq, p, k, lmask, hmask)
    nb_ = 0
    ne = 0
    n = seq.shape[0]
    for i in range(p, n - k):
        nt = seq[i + k]
        mask = successor_mask(kind, bits, m, nh, s1, s2, ex_hi, ex_lo, k,
                              fhi, flo, rhi, rlo, lmask, hmask)
        cnt, sb = _single_base(mask)
        if cnt == 1:
            if nt != sb:
                errpos[ne] = i + k
                errnt[ne] = nt
                ne += 1
            step = sb
        else:
            bif[nb_] = nt
            nb_ += 1
            # N never enters a kmer: continue as if it were A, mirrored on decode
            step = nt if nt < 4 else 0
        fhi, flo = push_right(fhi, flo, step, lmask, hmask)
        rhi, rlo = push_left(rhi, rlo, 3 - step, k)
    return nb_, ne


@nb.njit(cache=True)
def walk_decode(out, p, k, kind, bits, m, nh, s1, s2, ex_hi, ex_lo,
                errpos, errnt, n_err, bif, use_stream, dst, ddata, dmodel):
    """Inverse of :func:`walk_encode`; ``out[p:p + k]`` must hold the anchor.

    Branch nucleotides come from ``bif`` or, when ``use_stream``, straight from
    the range decoder ``(dst, ddata, dmodel)``. Returns (n_branch, status).
    """
    lmask, hmask = word_masks(k)
    fhi, flo, rhi, rlo = _words_at(out, p, k, lmask, hmask)
    n = out.shape[0]
    ei = 0
    nb_ = 0
    for i in range(p, n - k):
        pos = i + k
        mask = successor_mask(kind, bits, m, nh, s1, s2, ex_hi, ex_lo, k,
                              fhi, flo, rhi, rlo, lmask, hmask)
        cnt, sb = _single_base(mask)
        if ei < n_err and errpos[ei] == pos:
            if cnt != 1:
                return nb_, ERR_DESYNC
            out[pos] = errnt[ei]
            ei += 1
            step = sb
        elif cnt == 1:
            out[pos] = sb
            step = sb
        else:
            if use_stream:
                nt = rc.decode_symbol(dst, ddata, dmodel)
            else:
                if nb_ >= bif.shape[0]:
                    return nb_, ERR_DESYNC
                nt = bif[nb_]
            nb_ += 1
            out[pos] = nt
            step = nt if nt < 4 else 0
        fhi, flo = push_right(fhi, flo, step, lmask, hmask)
        rhi, rlo = push_left(rhi, rlo, 3 - step, k)
    if ei != n_err:
        return nb_, ERR_DESYNC
    return nb_, OK


@nb.njit(cache=True)
def _revcomp_codes(src, dst):
    n = src.shape[0]
    for j in range(n):
        b = src[n - 1 - j]
        dst[j] = 3 - b if b < 4 else 4


@nb.njit(cache=True)
def select_anchors_kernel(codes, offsets, k, solid_hi, solid_lo, solid_vals,
                          dict_hi, dict_lo, dict_vals, list_hi, list_lo, size):
    """Anchor per read: first dictionary hit left to right, else the most
    abundant solid kmer (leftmost on ties), which is then inserted.

    Returns (index, position, strand, new_size); index -1 marks a raw read.
    """
    lmask, hmask = word_masks(k)
    n_reads = offsets.shape[0] - 1
    aidx = np.full(n_reads, -1, dtype=np.int64)
    apos = np.full(n_reads, -1, dtype=np.int64)
    astr = np.zeros(n_reads, dtype=np.int64)
    for r in range(n_reads):
        start = offsets[r]
        end = offsets[r + 1]
        fhi = np.uint64(0)
        flo = np.uint64(0)
        rhi = np.uint64(0)
        rlo = np.uint64(0)
        run = 0
        best = -1
        bpos = -1
        bhi = np.uint64(0)
        blo = np.uint64(0)
        bstr = 0
        found = False
        for i in range(start, end):
            b = codes[i]
            if b > 3:
                run = 0
                continue
            fhi, flo = push_right(fhi, flo, b, lmask, hmask)
            rhi, rlo = push_left(rhi, rlo, 3 - b, k)
            run += 1
            if run < k:
                continue
            chi, clo, strand = canonical_pair(fhi, flo, rhi, rlo)
            pos = i - start - k + 1
            s = table_find(dict_hi, dict_lo, dict_vals, chi, clo)
            if s >= 0:
                aidx[r] = dict_vals[s]
                apos[r] = pos
                astr[r] = strand
                found = True
                break
            s = table_find(solid_hi, solid_lo, solid_vals, chi, clo)
            if s >= 0 and solid_vals[s] > best:
                best = solid_vals[s]
                bpos = pos
                bhi = chi
                blo = clo
                bstr = strand
        if found or best < 0:
            continue
        s = -table_find(dict_hi, dict_lo, dict_vals, bhi, blo) - 1
        dict_hi[s] = bhi
        dict_lo[s] = blo
        dict_vals[s] = size
        list_hi[size] = bhi
        list_lo[size] = blo
        aidx[r] = size
        apos[r] = bpos
        astr[r] = bstr
        size += 1
    return aidx, apos, astr, size


@nb.njit(cache=True)
def _enc(states, bufs, models, j, s):
    bufs[j] = rc.encode_symbol(states[j], bufs[j], models[j], s)


@nb.njit(cache=True)
def _enc_varint(states, bufs, models, j, v):
    bufs[j] = rc.encode_varint(states[j], bufs[j], models[j], v)


@nb.njit(cache=True, nogil=True)
def encode_block_kernel(codes, offsets, aidx, apos, astr, k,
                        kind, bits, m, nh, s1, s2, ex_hi, ex_lo, bufs):
    """Entropy-code one block of reads into the eight sequence streams.

    ``bufs`` is a typed list of eight scratch byte arrays; on return it holds
    the encoded streams. Returns per-block counters
    (anchored, raw, branch nucleotides, error events).
    """
    n_reads = offsets.shape[0] - 1
    states = np.empty((N_SEQ_STREAMS, 5), dtype=np.int64)
    models = []
    for j in range(N_SEQ_STREAMS):
        states[j] = rc.encoder_state()
        models.append(rc.new_model(SEQ_ALPHABETS[j]))
    maxlen = 1
    for r in range(n_reads):
        maxlen = max(maxlen, offsets[r + 1] - offsets[r])
    bif = np.empty(maxlen, dtype=np.uint8)
    errpos = np.empty(maxlen, dtype=np.int64)
    errnt = np.empty(maxlen, dtype=np.uint8)
    rcbuf = np.empty(maxlen, dtype=np.uint8)
    stats = np.zeros(4, dtype=np.int64)
    for r in range(n_reads):
        seq = codes[offsets[r]:offsets[r + 1]]
        n = seq.shape[0]
        if aidx[r] < 0:
            _enc(states, bufs, models, S_FLAGS, FLAG_RAW)
            _enc_varint(states, bufs, models, S_LEN, n)
            for i in range(n):
                _enc(states, bufs, models, S_RAW, seq[i])
            stats[1] += 1
            continue
        stats[0] += 1
        _enc(states, bufs, models, S_FLAGS, FLAG_RC if astr[r] else FLAG_FWD)
        _enc_varint(states, bufs, models, S_LEN, n)
        _enc_varint(states, bufs, models, S_APOS, apos[r])
        _enc_varint(states, bufs, models, S_AIDX, aidx[r])
        rcv = rcbuf[:n]
        _revcomp_codes(seq, rcv)
        for side in range(2):
            if side == 0:
                nbr, ne = walk_encode(seq, apos[r], k, kind, bits, m, nh, s1, s2,
                                      ex_hi, ex_lo, bif, errpos, errnt)
                prev = apos[r] + k - 1
            else:
                p2 = n - k - apos[r]
                nbr, ne = walk_encode(rcv, p2, k, kind, bits, m, nh, s1, s2,
                                      ex_hi, ex_lo, bif, errpos, errnt)
                prev = p2 + k - 1
            _enc_varint(states, bufs, models, S_ERRPOS, ne)
            for e in range(ne):
                _enc_varint(states, bufs, models, S_ERRPOS, errpos[e] - prev - 1)
                prev = errpos[e]
                _enc(states, bufs, models, S_ERRNT, errnt[e])
            for e in range(nbr):
                _enc(states, bufs, models, S_BIF, bif[e])
            stats[2] += nbr
            stats[3] += ne
    for j in range(N_SEQ_STREAMS):
        bufs[j] = rc.finish(states[j], bufs[j])
        bufs[j] = bufs[j][: states[j][4]].copy()
    return stats


@nb.njit(cache=True)
def _grow(buf, need):
    if need <= buf.shape[0]:
        return buf
    nbuf = np.empty(max(need, 2 * buf.shape[0]), dtype=np.uint8)
    nbuf[: buf.shape[0]] = buf
    return nbuf


@nb.njit(cache=True)
def _kmer_bases(hi, lo, k, dst):
    for i in range(k):
        j = k - 1 - i
        if j < 32:
            dst[i] = np.uint8((lo >> np.uint64(2 * j)) & np.uint64(3))
        else:
            dst[i] = np.uint8((hi >> np.uint64(2 * (j - 32))) & np.uint64(3))


@nb.njit(cache=True)
def _decode_side_errors(dst, data, model, first, n, errpos, errnt, ntdst, ntdata, ntmodel):
    ne = rc.decode_varint(dst, data, model)
    if ne < 0 or ne > n:
        return -1
    prev = first - 1
    for e in range(ne):
        gap = rc.decode_varint(dst, data, model)
        pos = prev + 1 + gap
        if gap < 0 or pos >= n:
            return -1
        errpos[e] = pos
        errnt[e] = rc.decode_symbol(ntdst, ntdata, ntmodel)
        prev = pos
    return ne


@nb.njit(cache=True, nogil=True)
def decode_block_kernel(streams, n_reads, k, kind, bits, m, nh, s1, s2, ex_hi, ex_lo,
                        dict_hi, dict_lo):
    """Rebuild ``n_reads`` reads from the eight streams.

    Returns (codes, offsets, status).
    """
    states = []
    models = []
    for j in range(N_SEQ_STREAMS):
        states.append(rc.decoder_state(streams[j]))
        models.append(rc.new_model(SEQ_ALPHABETS[j]))
    offsets = np.zeros(n_reads + 1, dtype=np.int64)
    out = np.empty(1024, dtype=np.uint8)
    scratch = np.empty(64, dtype=np.uint8)
    errpos = np.empty(64, dtype=np.int64)
    errnt = np.empty(64, dtype=np.uint8)
    empty_bif = np.empty(0, dtype=np.uint8)
    n_dict = dict_hi.shape[0]
    total = 0
    for r in range(n_reads):
        flag = rc.decode_symbol(states[S_FLAGS], streams[S_FLAGS], models[S_FLAGS])
        n = rc.decode_varint(states[S_LEN], streams[S_LEN], models[S_LEN])
        if n < 0 or n > MAX_READ_LEN:
            return out[:total], offsets, ERR_BAD_FIELD
        out = _grow(out, total + n)
        if scratch.shape[0] < n:
            scratch = np.empty(2 * n, dtype=np.uint8)
            errpos = np.empty(2 * n, dtype=np.int64)
            errnt = np.empty(2 * n, dtype=np.uint8)
        read = out[total:total + n]
        if flag == FLAG_RAW:
            for i in range(n):
                read[i] = rc.decode_symbol(states[S_RAW], streams[S_RAW], models[S_RAW])
        else:
            p = rc.decode_varint(states[S_APOS], streams[S_APOS], models[S_APOS])
            a = rc.decode_varint(states[S_AIDX], streams[S_AIDX], models[S_AIDX])
            if a < 0 or a >= n_dict or p < 0 or p + k > n:
                return out[:total], offsets, ERR_BAD_FIELD
            hi = dict_hi[a]
            lo = dict_lo[a]
            if flag == FLAG_RC:
                hi, lo = revcomp_pair(hi, lo, k)
            _kmer_bases(hi, lo, k, read[p:p + k])
            rcv = scratch[:n]
            p2 = n - k - p
            for side in range(2):
                if side == 0:
                    first = p + k
                else:
                    first = p2 + k
                    # rc frame: anchor revcomp at p2
                    for i in range(k):
                        b = read[p + k - 1 - i]
                        rcv[p2 + i] = 3 - b
                ne = _decode_side_errors(states[S_ERRPOS], streams[S_ERRPOS], models[S_ERRPOS],
                                         first, n, errpos, errnt, states[S_ERRNT],
                                         streams[S_ERRNT], models[S_ERRNT])
                if ne < 0:
                    return out[:total], offsets, ERR_BAD_FIELD
                target = read if side == 0 else rcv
                start = p if side == 0 else p2
                _, status = walk_decode(target, start, k, kind, bits, m, nh, s1, s2,
                                        ex_hi, ex_lo, errpos, errnt, ne, empty_bif, True,
                                        states[S_BIF], streams[S_BIF], models[S_BIF])
                if status != OK:
                    return out[:total], offsets, status
            for q in range(p2 + k, n):
                b = rcv[q]
                read[n - 1 - q] = 3 - b if b < 4 else 4
        total += n
        offsets[r + 1] = total
    for j in range(N_SEQ_STREAMS):
        if states[j][3] != 0:
            return out[:total], offsets, ERR_TRUNCATED
    return out[:total].copy(), offsets, OK


# ---------------------------------------------------------------------------
# Python-level objects


class AnchorDictionary:
    """Insertion-ordered set of canonical anchor kmers with dense indices."""

    def __init__(self, k: int, capacity: int = 1024):
        self.k = k
        self.table = KmerTable(2 * capacity)
        self._his = np.zeros(capacity, dtype=np.uint64)
        self._los = np.zeros(capacity, dtype=np.uint64)
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def reserve(self, extra: int) -> None:
        need = self.size + extra
        self.table.reserve(need)
        if need > self._his.size:
            cap = max(need, 2 * self._his.size)
            for name in ("_his", "_los"):
                old = getattr(self, name)
                new = np.zeros(cap, dtype=np.uint64)
                new[: self.size] = old[: self.size]
                setattr(self, name, new)

    def add(self, x: Kmer) -> int:
        c = x.canonical()
        found = self.index(c)
        if found is not None:
            return found
        self.reserve(1)
        hi, lo = c.words
        self._his[self.size] = hi
        self._los[self.size] = lo
        self.table.insert_many(np.array([hi], np.uint64), np.array([lo], np.uint64),
                               np.array([self.size], np.int64))
        self.size += 1
        return self.size - 1

    def index(self, x: Kmer) -> int | None:
        hi, lo = x.canonical().words
        v = int(self.table.get_many(np.array([hi], np.uint64), np.array([lo], np.uint64))[0])
        return None if v == EMPTY else v

    def __contains__(self, x: Kmer) -> bool:
        return self.index(x) is not None

    def __getitem__(self, i: int) -> Kmer:
        if not 0 <= i < self.size:
            raise IndexError(i)
        return Kmer((int(self._his[i]) << 64) | int(self._los[i]), self.k)

    def words(self) -> tuple[np.ndarray, np.ndarray]:
        return self._his[: self.size], self._los[: self.size]

    @classmethod
    def from_words(cls, k: int, his: np.ndarray, los: np.ndarray) -> AnchorDictionary:
        d = cls(k, max(16, len(his)))
        n = len(his)
        d._his[:n] = his
        d._los[:n] = los
        d.table.insert_many(his, los, np.arange(n, dtype=np.int64))
        d.size = n
        return d


class SolidIndex:
    """Hash index of solid kmer counts used during anchor selection."""

    def __init__(self, solid: CountTable):
        self.k = solid.k
        self.table = KmerTable.from_arrays(solid.his, solid.los, solid.counts)

    def __len__(self) -> int:
        return len(self.table)


def select_block_anchors(codes, offsets, k: int, dictionary: AnchorDictionary,
                         solid: SolidIndex):
    n_reads = len(offsets) - 1
    dictionary.reserve(n_reads)
    t, d = solid.table, dictionary.table
    aidx, apos, astr, size = select_anchors_kernel(
        codes, offsets, k, t.keys_hi, t.keys_lo, t.vals,
        d.keys_hi, d.keys_lo, d.vals, dictionary._his, dictionary._los, dictionary.size)
    d.size += int(size) - dictionary.size
    dictionary.size = int(size)
    return aidx, apos, astr


@dataclass
class BifurcationStream:
    """One side of an anchored read.

    Error positions are read coordinates; left-side entries are listed in walk
    order (moving away from the anchor), nucleotides in read orientation.
    """

    branch_nucleotides: list[str] = field(default_factory=list)
    error_events: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.branch_nucleotides) + len(self.error_events)


@dataclass
class ReadRecord:
    kind: str  # "anchored" or "raw"
    read_len: int
    anchor_index: int = -1
    anchor_pos: int = -1
    strand: int = 0
    right: BifurcationStream = field(default_factory=BifurcationStream)
    left: BifurcationStream = field(default_factory=BifurcationStream)
    sequence: str | None = None

    @property
    def anchored(self) -> bool:
        return self.kind == "anchored"


_COMP = "TGCAN"


def _solid_index(counts: CountTable | SolidIndex, t_sol: int) -> SolidIndex:
    if isinstance(counts, SolidIndex):
        return counts
    return SolidIndex(counts.filter(t_sol))


def select_anchor(read: str, dictionary: AnchorDictionary,
                  counts: CountTable | SolidIndex, t_sol: int = 1):
    """(anchor_index, anchor_pos) for one read, or None when it has no solid kmer."""
    codes = encode_bases(read)
    offsets = np.array([0, codes.size], dtype=np.int64)
    aidx, apos, _ = select_block_anchors(codes, offsets, dictionary.k, dictionary,
                                         _solid_index(counts, t_sol))
    if aidx[0] < 0:
        return None
    return int(aidx[0]), int(apos[0])


def encode_read(read: str, anchor: tuple[int, int], graph: GraphBase,
                dictionary: AnchorDictionary | None = None) -> ReadRecord:
    """Walk the graph from the anchor in both directions and record deviations."""
    k = graph.k
    seq = encode_bases(read)
    n = seq.size
    index, p = anchor
    if not 0 <= p <= n - k:
        raise ValueError(f"anchor position {p} outside read of length {n}")
    window = seq[p:p + k]
    if window.max(initial=0) > 3:
        raise ValueError("anchor kmer covers a non-ACGT base")
    x = Kmer(_pack_codes(window), k)
    strand = 0 if x.is_canonical() else 1
    if dictionary is not None and dictionary[index] != x.canonical():
        raise ValueError("anchor kmer does not match the dictionary entry")
    rec = ReadRecord("anchored", n, index, p, strand)
    args = graph.kernel_args()
    bif = np.empty(n, np.uint8)
    errpos = np.empty(n, np.int64)
    errnt = np.empty(n, np.uint8)
    nbr, ne = walk_encode(seq, p, k, *args, bif, errpos, errnt)
    rec.right = BifurcationStream(["ACGTN"[b] for b in bif[:nbr]],
                                  [(int(errpos[e]), "ACGTN"[errnt[e]]) for e in range(ne)])
    rcv = np.empty(n, np.uint8)
    _revcomp_codes(seq, rcv)
    nbr, ne = walk_encode(rcv, n - k - p, k, *args, bif, errpos, errnt)
    rec.left = BifurcationStream([_COMP[b] for b in bif[:nbr]],
                                 [(n - 1 - int(errpos[e]), _COMP[errnt[e]]) for e in range(ne)])
    return rec


def _pack_codes(codes) -> int:
    v = 0
    for c in codes:
        v = (v << 2) | int(c)
    return v


def _codes_of(chars: list[str], complement: bool) -> np.ndarray:
    s = "".join(chars)
    if complement:
        s = s.translate(str.maketrans("ACGTN", "TGCAN"))
    return encode_bases(s)


def decode_read(rec: ReadRecord, dictionary: AnchorDictionary, graph: GraphBase) -> str:
    if not rec.anchored:
        return decode_raw(rec)
    k = graph.k
    n = rec.read_len
    p = rec.anchor_pos
    anchor = dictionary[rec.anchor_index]
    if rec.strand:
        anchor = anchor.revcomp()
    out = np.zeros(n, np.uint8)
    out[p:p + k] = encode_bases(str(anchor))
    args = graph.kernel_args()
    dummy_st = rc.decoder_state(np.zeros(8, np.uint8))
    dummy_model = rc.new_model(5)
    epos = np.array([e[0] for e in rec.right.error_events], np.int64)
    ent = _codes_of([e[1] for e in rec.right.error_events], False)
    used, status = walk_decode(out, p, k, *args, epos, ent, len(epos),
                               _codes_of(rec.right.branch_nucleotides, False), False,
                               dummy_st, np.zeros(8, np.uint8), dummy_model)
    if status != OK or used != len(rec.right.branch_nucleotides):
        raise StreamDesyncError("right bifurcation stream does not match the graph walk")
    rcv = np.zeros(n, np.uint8)
    _revcomp_codes(out, rcv)
    epos = np.array([n - 1 - e[0] for e in rec.left.error_events], np.int64)
    ent = _codes_of([e[1] for e in rec.left.error_events], True)
    used, status = walk_decode(rcv, n - k - p, k, *args, epos, ent, len(epos),
                               _codes_of(rec.left.branch_nucleotides, True), False,
                               dummy_st, np.zeros(8, np.uint8), dummy_model)
    if status != OK or used != len(rec.left.branch_nucleotides):
        raise StreamDesyncError("left bifurcation stream does not match the graph walk")
    back = np.empty(n, np.uint8)
    _revcomp_codes(rcv, back)
    out[:p] = back[:p]
    return CODE_BASES[out].tobytes().decode()


def encode_raw(read: str) -> ReadRecord:
    seq = CODE_BASES[encode_bases(read)].tobytes().decode()
    return ReadRecord("raw", len(seq), sequence=seq)


def decode_raw(rec: ReadRecord) -> str:
    if rec.sequence is None or len(rec.sequence) != rec.read_len:
        raise StreamDesyncError("raw record length mismatch")
    return rec.sequence


def encode_raw_bytes(read: str) -> bytes:
    """Raw read through the dedicated 5-symbol model (length implied by the caller)."""
    return rc.encode_symbols(encode_bases(read), 5)


def decode_raw_bytes(data: bytes, n: int) -> str:
    return CODE_BASES[rc.decode_symbols(data, 5, n).astype(np.uint8)].tobytes().decode()


def encode_block(codes: np.ndarray, offsets: np.ndarray, aidx, apos, astr,
                 graph: GraphBase) -> tuple[list[bytes], np.ndarray]:
    bufs = nb.typed.List([np.empty(256, np.uint8) for _ in range(N_SEQ_STREAMS)])
    stats = encode_block_kernel(codes, offsets, aidx, apos, astr, graph.k,
                                *graph.kernel_args(), bufs)
    return [b.tobytes() for b in bufs], stats


def decode_block(streams: list[bytes], n_reads: int, graph: GraphBase,
                 dict_his: np.ndarray, dict_los: np.ndarray):
    arrs = nb.typed.List([np.frombuffer(s, dtype=np.uint8) for s in streams])
    codes, offsets, status = decode_block_kernel(arrs, n_reads, graph.k, *graph.kernel_args(),
                                                 dict_his, dict_los)
    if status == ERR_TRUNCATED:
        raise rc.TruncatedStreamError("sequence stream ended early")
    if status != OK:
        raise StreamDesyncError(f"sequence streams inconsistent with graph (code {status})")
    return codes, offsets
