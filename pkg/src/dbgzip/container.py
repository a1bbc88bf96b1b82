"""Compressed file format and the compress / decompress pipelines.

Layout (all integers little-endian; see FORMAT.md for the normative text)::

    file header        48 bytes, fixed
    graph section      u64 length + serialized Bloom image
    block payloads     per block, its streams back to back
    dictionary         u64 count + count * ceil(k / 4) bytes of packed kmers
    block index        u32 n_blocks, u32 n_streams,
                       per block: u32 n_reads, u64 offset, n_streams * u32 length
    trailer            u64 dictionary offset, u64 index offset, u32 crc32, 4s end magic

The CRC covers every byte before the CRC field. The dictionary and index sit
after the payloads so the writer can stream blocks to disk as they finish.
"""

from __future__ import annotations

import io
import logging
import os
import struct
import zlib
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator

import numpy as np

from . import bloom, headers as hdr, seqcodec as sc
from .counting import DEFAULT_MEMORY_BUDGET, KmerCounter, infer_t_sol, partitions_for
from .fastx import FASTQ, ReadBatch, format_fasta, read_batches, sniff_format
from .kmer import check_k

logger = logging.getLogger(__name__)

MAGIC = b"DBGZ"
END_MAGIC = b"ZGBD"
VERSION = 1
FLAG_HEADERS = 1
FLAG_FASTQ_INPUT = 2
DEFAULT_BLOCK_SIZE = 50_000
DEFAULT_K = 31

_FILE_HEADER = struct.Struct("<4sHHB3xIdQQI4x")
_TRAILER = struct.Struct("<QQI4s")
_U64 = struct.Struct("<Q")
_INDEX_HEAD = struct.Struct("<II")
_BLOCK_HEAD = struct.Struct("<IQ")

STREAM_NAMES = sc.SEQ_STREAM_NAMES + hdr.HEADER_STREAM_NAMES


class ContainerError(ValueError):
    """Base class for unreadable compressed files."""


class BadMagicError(ContainerError):
    pass


class VersionMismatchError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


class TruncatedFileError(ContainerError):
    pass


@dataclass
class FileParams:
    k: int
    t_sol: int
    bits_per_kmer: float
    n_reads: int
    n_bases: int
    block_size: int
    flags: int = FLAG_HEADERS

    @property
    def has_headers(self) -> bool:
        return bool(self.flags & FLAG_HEADERS)

    @property
    def n_streams(self) -> int:
        return len(STREAM_NAMES) if self.has_headers else sc.N_SEQ_STREAMS


@dataclass
class BlockEntry:
    n_reads: int
    offset: int
    lengths: list[int]


@dataclass
class EncodedBlock:
    n_reads: int
    streams: list[bytes]
    stats: np.ndarray = field(default_factory=lambda: np.zeros(4, np.int64))
    header_pre_entropy: int = 0


def pack_dictionary(k: int, his: np.ndarray, los: np.ndarray) -> bytes:
    nbytes = (2 * k + 7) // 8
    n = len(his)
    raw = np.empty((n, 16), dtype=np.uint8)
    raw[:, :8] = np.ascontiguousarray(los, dtype="<u8").view(np.uint8).reshape(n, 8)
    raw[:, 8:] = np.ascontiguousarray(his, dtype="<u8").view(np.uint8).reshape(n, 8)
    if k <= 32:
        cols = raw[:, :nbytes]
    else:
        cols = np.concatenate([raw[:, :8], raw[:, 8:8 + nbytes - 8]], axis=1)
    return _U64.pack(n) + np.ascontiguousarray(cols).tobytes()


def unpack_dictionary(k: int, data: memoryview) -> tuple[np.ndarray, np.ndarray]:
    if len(data) < 8:
        raise TruncatedFileError("dictionary section truncated")
    (n,) = _U64.unpack_from(data, 0)
    nbytes = (2 * k + 7) // 8
    if len(data) != 8 + n * nbytes:
        raise TruncatedFileError("dictionary section has the wrong size")
    cols = np.frombuffer(data[8:], dtype=np.uint8).reshape(n, nbytes)
    raw = np.zeros((n, 16), dtype=np.uint8)
    if k <= 32:
        raw[:, :nbytes] = cols
    else:
        raw[:, :8] = cols[:, :8]
        raw[:, 8:8 + nbytes - 8] = cols[:, 8:]
    los = raw[:, :8].copy().view("<u8").reshape(n).astype(np.uint64)
    his = raw[:, 8:].copy().view("<u8").reshape(n).astype(np.uint64)
    return his, los


class ContainerWriter:
    """Streams a container to ``fh``; blocks are appended in order."""

    def __init__(self, fh: BinaryIO, params: FileParams, graph_image: bytes):
        self.fh = fh
        self.params = params
        self._crc = 0
        self._pos = 0
        self.blocks: list[BlockEntry] = []
        self._write(_FILE_HEADER.pack(MAGIC, VERSION, params.flags, params.k, params.t_sol,
                                      params.bits_per_kmer, params.n_reads, params.n_bases,
                                      params.block_size))
        self._write(_U64.pack(len(graph_image)) + graph_image)
        self.graph_size = len(graph_image)
        self.dictionary_size = 0

    def _write(self, data: bytes) -> None:
        self.fh.write(data)
        self._crc = zlib.crc32(data, self._crc)
        self._pos += len(data)

    def add_block(self, n_reads: int, streams: list[bytes]) -> None:
        if len(streams) != self.params.n_streams:
            raise ValueError(f"expected {self.params.n_streams} streams, got {len(streams)}")
        self.blocks.append(BlockEntry(n_reads, self._pos, [len(s) for s in streams]))
        for s in streams:
            self._write(s)

    def close(self, dict_his: np.ndarray, dict_los: np.ndarray) -> int:
        dict_offset = self._pos
        packed = pack_dictionary(self.params.k, dict_his, dict_los)
        self.dictionary_size = len(packed)
        self._write(packed)
        index_offset = self._pos
        parts = [_INDEX_HEAD.pack(len(self.blocks), self.params.n_streams)]
        for b in self.blocks:
            parts.append(_BLOCK_HEAD.pack(b.n_reads, b.offset))
            parts.append(struct.pack(f"<{len(b.lengths)}I", *b.lengths))
        self._write(b"".join(parts))
        self._write(_U64.pack(dict_offset) + _U64.pack(index_offset))
        tail = struct.pack("<I4s", self._crc, END_MAGIC)
        self.fh.write(tail)
        self._pos += len(tail)
        return self._pos

    def sizes(self) -> dict[str, int]:
        """Bytes per component; ``overhead`` makes the total equal the file size."""
        sizes = {"graph": self.graph_size, "dictionary": self.dictionary_size}
        for name in STREAM_NAMES[: self.params.n_streams]:
            sizes[name] = 0
        for b in self.blocks:
            for name, ln in zip(STREAM_NAMES, b.lengths):
                sizes[name] += ln
        sizes["overhead"] = self._pos - sum(sizes.values())
        return sizes


@dataclass
class Container:
    """Parsed view over a complete compressed file."""

    params: FileParams
    graph_image: memoryview
    dict_his: np.ndarray
    dict_los: np.ndarray
    blocks: list[BlockEntry]
    data: memoryview
    section_sizes: dict[str, int]

    def block_streams(self, i: int) -> list[bytes]:
        b = self.blocks[i]
        out = []
        pos = b.offset
        for ln in b.lengths:
            out.append(bytes(self.data[pos:pos + ln]))
            pos += ln
        return out

    def graph(self) -> bloom.ProbabilisticDbg:
        return bloom.deserialize(bytes(self.graph_image))


def write_container(params: FileParams, graph_image: bytes, dict_his: np.ndarray,
                    dict_los: np.ndarray, blocks: list[tuple[int, list[bytes]]]) -> bytes:
    buf = io.BytesIO()
    w = ContainerWriter(buf, params, graph_image)
    for n_reads, streams in blocks:
        w.add_block(n_reads, streams)
    w.close(dict_his, dict_los)
    return buf.getvalue()


def read_container(data: bytes | memoryview) -> Container:
    mv = memoryview(data)
    if len(mv) < 4:
        raise TruncatedFileError("file too short")
    if bytes(mv[:4]) != MAGIC:
        raise BadMagicError("not a dbgzip file")
    if len(mv) < _FILE_HEADER.size + 8 + _TRAILER.size:
        raise TruncatedFileError("file too short")
    magic, version, flags, k, t_sol, r, n_reads, n_bases, block_size = \
        _FILE_HEADER.unpack_from(mv, 0)
    if version != VERSION:
        raise VersionMismatchError(f"format version {version}, expected {VERSION}")
    dict_off, index_off, crc, end = _TRAILER.unpack_from(mv, len(mv) - _TRAILER.size)
    if end != END_MAGIC:
        raise TruncatedFileError("end marker missing; file truncated")
    if zlib.crc32(mv[: len(mv) - 8]) != crc:
        raise ChecksumError("file checksum mismatch")
    params = FileParams(k, t_sol, r, n_reads, n_bases, block_size, flags)
    try:
        check_k(k)
    except ValueError as exc:
        raise ContainerError(str(exc)) from None
    pos = _FILE_HEADER.size
    (glen,) = _U64.unpack_from(mv, pos)
    pos += 8
    payload_start = pos + glen
    end_of_index = len(mv) - _TRAILER.size
    if not payload_start <= dict_off <= index_off <= end_of_index:
        raise TruncatedFileError("section offsets out of range")
    graph_image = mv[pos:payload_start]
    dict_his, dict_los = unpack_dictionary(k, mv[dict_off:index_off])
    if end_of_index - index_off < _INDEX_HEAD.size:
        raise TruncatedFileError("block index truncated")
    n_blocks, n_streams = _INDEX_HEAD.unpack_from(mv, index_off)
    if end_of_index - index_off != _INDEX_HEAD.size + n_blocks * (_BLOCK_HEAD.size + 4 * n_streams):
        raise ContainerError("block index size mismatch")
    if n_streams != params.n_streams:
        raise ContainerError("stream count does not match header flags")
    p = index_off + _INDEX_HEAD.size
    blocks = []
    for _ in range(n_blocks):
        nr, off = _BLOCK_HEAD.unpack_from(mv, p)
        p += _BLOCK_HEAD.size
        lengths = list(struct.unpack_from(f"<{n_streams}I", mv, p))
        p += 4 * n_streams
        if not (payload_start <= off and off + sum(lengths) <= dict_off):
            raise TruncatedFileError("block extends outside the payload section")
        blocks.append(BlockEntry(nr, off, lengths))
    if sum(b.n_reads for b in blocks) != n_reads:
        raise ContainerError("block read counts do not add up")
    sizes = {"graph": len(graph_image), "dictionary": index_off - dict_off}
    for name in STREAM_NAMES[:n_streams]:
        sizes[name] = 0
    for b in blocks:
        for name, ln in zip(STREAM_NAMES, b.lengths):
            sizes[name] += ln
    sizes["overhead"] = len(mv) - sum(sizes.values())
    return Container(params, graph_image, dict_his, dict_los, blocks, mv, sizes)


# ---------------------------------------------------------------------------
# pipelines


@dataclass
class CompressParams:
    k: int = DEFAULT_K
    t_sol: int | None = None
    bits_per_kmer: float | None = None
    block_size: int = DEFAULT_BLOCK_SIZE
    threads: int = 1
    sequence_only: bool = False
    memory_budget: int = DEFAULT_MEMORY_BUDGET


@dataclass
class CompressReport:
    n_reads: int = 0
    n_bases: int = 0
    t_sol: int = 0
    bits_per_kmer: float = 0.0
    n_solid: int = 0
    n_distinct: int = 0
    mean_abundance: float = 0.0
    n_anchors: int = 0
    anchored_reads: int = 0
    raw_reads: int = 0
    branch_nucleotides: int = 0
    error_events: int = 0
    header_pre_entropy_bytes: int = 0
    header_input_bytes: int = 0
    file_size: int = 0
    sizes: dict[str, int] = field(default_factory=dict)

    def sequence_bytes(self) -> int:
        """Bytes spent on reads: graph and dictionary plus the sequence streams."""
        return (self.sizes.get("graph", 0) + self.sizes.get("dictionary", 0)
                + sum(self.sizes.get(n, 0) for n in sc.SEQ_STREAM_NAMES))

    def bits_per_base(self) -> float:
        return 8.0 * self.sequence_bytes() / self.n_bases if self.n_bases else 0.0

    def sequence_ratio(self) -> float:
        s = self.sequence_bytes()
        return self.n_bases / s if s else float("inf")

    def header_bytes(self) -> int:
        return sum(self.sizes.get(n, 0) for n in hdr.HEADER_STREAM_NAMES)


def _encode_block_job(batch: ReadBatch, anchors, graph, with_headers: bool) -> EncodedBlock:
    streams, stats = sc.encode_block(batch.codes, batch.offsets, *anchors, graph)
    pre = 0
    if with_headers:
        enc = hdr.HeaderEncoder()
        for h in batch.headers:
            enc.add(h)
        streams += enc.finish()
        pre = enc.n_pre_entropy
    return EncodedBlock(len(batch), streams, stats, pre)


def compress_pipeline(in_path: str | os.PathLike, out: str | os.PathLike | BinaryIO,
                      params: CompressParams | None = None) -> CompressReport:
    """Count kmers in one pass, then encode blocks against the graph in a second."""
    params = params or CompressParams()
    check_k(params.k)
    if params.block_size < 1:
        raise ValueError("block size must be positive")
    report = CompressReport()
    fmt = sniff_format(in_path)

    # pass 1: counting
    parts = partitions_for(in_path, params.memory_budget)
    with KmerCounter(params.k, parts, memory_budget=params.memory_budget) as counter:
        for batch in read_batches(in_path, params.block_size):
            counter.add(batch)
            report.header_input_bytes += sum(len(h) for h in batch.headers)
        hist = counter.finish()
        report.n_reads = counter.n_reads
        report.n_bases = counter.n_bases
        report.n_distinct = hist.n_distinct
        if params.t_sol is not None:
            t_sol = max(1, params.t_sol)
        elif hist.n_distinct:
            t_sol = infer_t_sol(hist)
        else:
            t_sol = 1
        solid = counter.solid(t_sol)
    report.t_sol = t_sol
    report.n_solid = len(solid)
    if len(solid):
        report.mean_abundance = float(solid.counts.mean())
        r = params.bits_per_kmer or bloom.optimal_bits_per_kmer(report.mean_abundance)
        graph = bloom.build(solid.his, solid.los, r, params.k)
    else:
        r = params.bits_per_kmer or 0.0
        graph = bloom.empty_graph(params.k)
    report.bits_per_kmer = r
    solid_index = sc.SolidIndex(solid)
    del solid
    logger.info("T_sol=%d solid=%d D=%.2f r=%.2f", t_sol, report.n_solid,
                report.mean_abundance, r)

    flags = (0 if params.sequence_only else FLAG_HEADERS) | (FLAG_FASTQ_INPUT if fmt == FASTQ else 0)
    fparams = FileParams(params.k, t_sol, r, report.n_reads, report.n_bases,
                         params.block_size, flags)
    dictionary = sc.AnchorDictionary(params.k, capacity=max(1024, min(report.n_solid, 1 << 20)))

    own = not hasattr(out, "write")
    fh = open(out, "wb") if own else out
    try:
        writer = ContainerWriter(fh, fparams, graph.serialize())

        def consume(block: EncodedBlock) -> None:
            writer.add_block(block.n_reads, block.streams)
            report.anchored_reads += int(block.stats[0])
            report.raw_reads += int(block.stats[1])
            report.branch_nucleotides += int(block.stats[2])
            report.error_events += int(block.stats[3])
            report.header_pre_entropy_bytes += block.header_pre_entropy

        # pass 2: anchors are chosen here, in read order, so the dictionary and
        # therefore the output bytes do not depend on the worker count
        batches = read_batches(in_path, params.block_size)
        with_headers = not params.sequence_only
        if params.threads <= 1:
            for batch in batches:
                anchors = sc.select_block_anchors(batch.codes, batch.offsets, params.k,
                                                  dictionary, solid_index)
                consume(_encode_block_job(batch, anchors, graph, with_headers))
        else:
            with ThreadPoolExecutor(params.threads) as pool:
                pending: deque = deque()
                for batch in batches:
                    anchors = sc.select_block_anchors(batch.codes, batch.offsets, params.k,
                                                      dictionary, solid_index)
                    pending.append(pool.submit(_encode_block_job, batch, anchors, graph,
                                               with_headers))
                    while len(pending) > 2 * params.threads:
                        consume(pending.popleft().result())
                while pending:
                    consume(pending.popleft().result())
        his, los = dictionary.words()
        report.n_anchors = len(dictionary)
        report.file_size = writer.close(his, los)
    finally:
        if own:
            fh.close()
    report.sizes = writer.sizes()
    return report


def _decode_block_job(container: Container, i: int, graph) -> tuple[list[bytes], np.ndarray, np.ndarray]:
    streams = container.block_streams(i)
    b = container.blocks[i]
    codes, offsets = sc.decode_block(streams[: sc.N_SEQ_STREAMS], b.n_reads, graph,
                                     container.dict_his, container.dict_los)
    if container.params.has_headers:
        heads = hdr.decode_headers(streams[sc.N_SEQ_STREAMS:], b.n_reads)
    else:
        first = sum(x.n_reads for x in container.blocks[:i])
        heads = [str(first + j + 1).encode() for j in range(b.n_reads)]
    return heads, codes, offsets


def load_container(source: str | os.PathLike | bytes | Container) -> Container:
    if isinstance(source, Container):
        return source
    if isinstance(source, (bytes, bytearray, memoryview)):
        return read_container(source)
    with open(source, "rb") as fh:
        return read_container(fh.read())


def decompress_blocks(source, threads: int = 1) -> Iterator[tuple[list[bytes], np.ndarray, np.ndarray]]:
    """Decoded blocks in file order as (headers, codes, offsets)."""
    container = load_container(source)
    graph = container.graph()
    n = len(container.blocks)
    if threads <= 1:
        for i in range(n):
            yield _decode_block_job(container, i, graph)
        return
    with ThreadPoolExecutor(threads) as pool:
        pending: deque = deque()
        for i in range(n):
            pending.append(pool.submit(_decode_block_job, container, i, graph))
            while len(pending) > 2 * threads:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def decompress_pipeline(source, threads: int = 1) -> Iterator[tuple[bytes, str]]:
    """Every record as (header, sequence), in input order."""
    for heads, codes, offsets in decompress_blocks(source, threads):
        batch = ReadBatch(heads, codes, offsets)
        for i, h in enumerate(heads):
            yield h, batch.sequence(i)


def decompress_file(source, out: str | os.PathLike | BinaryIO, threads: int = 1) -> int:
    """Write single-line FASTA; returns the number of reads.

    The whole file is validated before ``out`` is opened, so a corrupt input
    leaves no partial output behind.
    """
    source = load_container(source)
    own = not hasattr(out, "write")
    fh = open(out, "wb") if own else out
    n = 0
    try:
        for heads, codes, offsets in decompress_blocks(source, threads):
            fh.write(format_fasta(heads, codes, offsets))
            n += len(heads)
    finally:
        if own:
            fh.close()
    return n


def container_stats(source) -> dict:
    c = load_container(source)
    p = c.params
    sizes = dict(c.section_sizes)
    seq = sizes["graph"] + sizes["dictionary"] + sum(sizes[n] for n in sc.SEQ_STREAM_NAMES)
    return {
        "file_size": len(c.data),
        "n_reads": p.n_reads,
        "n_bases": p.n_bases,
        "k": p.k,
        "t_sol": p.t_sol,
        "bits_per_kmer": p.bits_per_kmer,
        "n_blocks": len(c.blocks),
        "n_anchors": len(c.dict_his),
        "sizes": sizes,
        "unmapped_bytes": sizes["raw"],
        "sequence_bytes": seq,
        "bits_per_base": 8.0 * seq / p.n_bases if p.n_bases else 0.0,
    }
