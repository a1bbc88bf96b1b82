"""Streaming FASTA/FASTQ records (plain or gzip) batched into code arrays."""

from __future__ import annotations

import gzip
import logging
import os
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .kmer import BASE_CODES, CODE_BASES

logger = logging.getLogger(__name__)

FASTA = "fasta"
FASTQ = "fastq"


class MalformedInputError(ValueError):
    """Input does not parse as FASTA or FASTQ."""


@dataclass
class ReadBatch:
    """Consecutive reads: headers (without the marker) and concatenated base codes."""

    headers: list[bytes]
    codes: np.ndarray  # uint8, values 0..4
    offsets: np.ndarray  # int64, len n + 1

    def __len__(self) -> int:
        return len(self.headers)

    @property
    def n_bases(self) -> int:
        return int(self.offsets[-1])

    def sequence(self, i: int) -> str:
        return CODE_BASES[self.codes[self.offsets[i]:self.offsets[i + 1]]].tobytes().decode()

    def sequences(self) -> list[str]:
        return [self.sequence(i) for i in range(len(self))]

    @classmethod
    def from_records(cls, records: Iterable[tuple[bytes, bytes]]) -> ReadBatch:
        headers = []
        seqs = []
        for h, s in records:
            headers.append(h)
            seqs.append(s)
        lengths = np.fromiter((len(s) for s in seqs), dtype=np.int64, count=len(seqs))
        offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        codes = BASE_CODES[np.frombuffer(b"".join(seqs), dtype=np.uint8)]
        return cls(headers, codes, offsets)

    @classmethod
    def from_sequences(cls, seqs: Iterable[str], headers: Iterable[bytes] | None = None) -> ReadBatch:
        seqs = [s.encode() if isinstance(s, str) else s for s in seqs]
        if headers is None:
            headers = [b"r%d" % i for i in range(len(seqs))]
        return cls.from_records(zip(headers, seqs))


def open_input(path: str | os.PathLike) -> BinaryIO:
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def sniff_format(path: str | os.PathLike) -> str:
    with open_input(path) as fh:
        for line in fh:
            if line.strip():
                if line.startswith(b">"):
                    return FASTA
                if line.startswith(b"@"):
                    return FASTQ
                raise MalformedInputError(f"unrecognized record start {line[:20]!r}")
    return FASTA


def _fasta_records(fh: BinaryIO) -> Iterator[tuple[bytes, bytes]]:
    header = None
    parts: list[bytes] = []
    for line in fh:
        line = line.rstrip(b"\r\n")
        if line.startswith(b">"):
            if header is not None:
                yield header, b"".join(parts)
            header = line[1:]
            parts = []
        elif header is None:
            if line.strip():
                raise MalformedInputError("sequence data before the first FASTA header")
        else:
            parts.append(line.strip())
    if header is not None:
        yield header, b"".join(parts)


def _fastq_records(fh: BinaryIO) -> Iterator[tuple[bytes, bytes]]:
    warned = False
    while True:
        head = fh.readline()
        if not head:
            return
        if not head.strip():
            continue
        if not head.startswith(b"@"):
            raise MalformedInputError(f"FASTQ record does not start with '@': {head[:20]!r}")
        seq = fh.readline().rstrip(b"\r\n")
        plus = fh.readline()
        qual = fh.readline().rstrip(b"\r\n")
        if not plus.startswith(b"+") or len(qual) != len(seq):
            raise MalformedInputError(f"truncated or malformed FASTQ record {head[:40]!r}")
        if not warned:
            logger.warning("quality scores are discarded; only headers and bases are kept")
            warned = True
        yield head.rstrip(b"\r\n")[1:], seq


def read_records(path: str | os.PathLike) -> Iterator[tuple[bytes, bytes]]:
    fmt = sniff_format(path)
    with open_input(path) as fh:
        if fmt == FASTA:
            yield from _fasta_records(fh)
        else:
            yield from _fastq_records(fh)


def read_batches(path: str | os.PathLike, batch_size: int) -> Iterator[ReadBatch]:
    buf: list[tuple[bytes, bytes]] = []
    for rec in read_records(path):
        buf.append(rec)
        if len(buf) >= batch_size:
            yield ReadBatch.from_records(buf)
            buf = []
    if buf:
        yield ReadBatch.from_records(buf)


def format_fasta(headers: list[bytes], codes: np.ndarray, offsets: np.ndarray) -> bytes:
    """Render records as single-line FASTA."""
    text = CODE_BASES[codes].tobytes()
    out = []
    for i, h in enumerate(headers):
        out.append(b">" + h + b"\n" + text[offsets[i]:offsets[i + 1]] + b"\n")
    return b"".join(out)


def estimated_input_bytes(path: str | os.PathLike) -> int:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        if fh.read(2) == b"\x1f\x8b":
            return size * 4
    return size
