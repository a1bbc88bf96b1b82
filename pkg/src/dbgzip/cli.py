"""``dbgzip`` command line: compress, decompress, simulate, stats."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import bloom, container as ct
from .counting import DEFAULT_MEMORY_BUDGET
from .fastx import MalformedInputError
from .rangecoder import TruncatedStreamError
from .seqcodec import StreamDesyncError
from .simulate import SimConfig, simulate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CORRUPT = 3
EXIT_IO = 4

SUFFIX = ".dbgz"

_DATA_ERRORS = (ct.ContainerError, MalformedInputError, StreamDesyncError,
                TruncatedStreamError, bloom.CorruptImageError)


class UsageError(Exception):
    pass


def _auto_int(text: str) -> int | None:
    if text == "auto":
        return None
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer or 'auto'")
    return value


def _auto_float(text: str) -> float | None:
    if text == "auto":
        return None
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive or 'auto'")
    return value


def _positive(kind):
    def parse(text: str):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError("must be positive")
        return value
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbgzip", description="Reference-free DNA read compressor.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="mode", required=True)

    c = sub.add_parser("compress", help="compress a FASTA/FASTQ file (optionally gzipped)")
    c.add_argument("input", type=Path)
    c.add_argument("-o", "--output", type=Path, help=f"default: INPUT{SUFFIX}")
    c.add_argument("-k", type=int, default=ct.DEFAULT_K, help="kmer size, odd, at most 63")
    c.add_argument("--t-sol", type=_auto_int, default=None, metavar="N|auto",
                   help="solidity threshold (default: from the abundance histogram)")
    c.add_argument("--bits-per-kmer", type=_auto_float, default=None, metavar="R|auto",
                   help="Bloom filter bits per solid kmer (default: from mean abundance)")
    c.add_argument("--block-size", type=_positive(int), default=ct.DEFAULT_BLOCK_SIZE)
    c.add_argument("--threads", type=_positive(int), default=1)
    c.add_argument("--memory", type=_positive(int), default=DEFAULT_MEMORY_BUDGET >> 20,
                   metavar="MB", help="counting memory budget")
    c.add_argument("--sequence-only", action="store_true", help="drop read headers")
    c.add_argument("--json", action="store_true", help="print the report as JSON")

    d = sub.add_parser("decompress", help="restore reads as FASTA")
    d.add_argument("input", type=Path)
    d.add_argument("-o", "--output", type=Path, help="default: INPUT without .dbgz")
    d.add_argument("--threads", type=_positive(int), default=1)

    s = sub.add_parser("simulate", help="write simulated reads")
    s.add_argument("-o", "--output", type=Path, required=True)
    s.add_argument("--genome-length", type=_positive(int), default=100_000)
    s.add_argument("--coverage", type=_positive(float), default=70.0)
    s.add_argument("--error-rate", type=float, default=0.01)
    s.add_argument("--read-length", type=_positive(int), default=100)
    s.add_argument("--seed", type=int, default=0)

    st = sub.add_parser("stats", help="component breakdown of a compressed file")
    st.add_argument("input", type=Path)
    st.add_argument("--json", action="store_true")
    return p


def _print_report(report: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report, indent=2, sort_keys=True))
        return
    sizes = report.pop("sizes")
    for key, value in report.items():
        print(f"{key:24s} {value:.4f}" if isinstance(value, float) else f"{key:24s} {value}")
    total = report.get("file_size") or 1
    print("components (bytes, share of file):")
    for name, n in sizes.items():
        print(f"  {name:22s} {n:12d} {100.0 * n / total:6.2f}%")


def _compress(args) -> dict:
    if args.k % 2 == 0 or not 1 <= args.k <= 63:
        raise UsageError("k must be odd and between 1 and 63")
    out = args.output or args.input.with_name(args.input.name + SUFFIX)
    params = ct.CompressParams(k=args.k, t_sol=args.t_sol, bits_per_kmer=args.bits_per_kmer,
                               block_size=args.block_size, threads=args.threads,
                               sequence_only=args.sequence_only,
                               memory_budget=args.memory << 20)
    t0 = time.perf_counter()
    rep = ct.compress_pipeline(args.input, out, params)
    return {
        "output": str(out),
        "seconds": time.perf_counter() - t0,
        "n_reads": rep.n_reads,
        "n_bases": rep.n_bases,
        "t_sol": rep.t_sol,
        "bits_per_kmer": rep.bits_per_kmer,
        "solid_kmers": rep.n_solid,
        "mean_solid_abundance": rep.mean_abundance,
        "anchors": rep.n_anchors,
        "anchored_reads": rep.anchored_reads,
        "unmapped_reads": rep.raw_reads,
        "file_size": rep.file_size,
        "bits_per_base": rep.bits_per_base(),
        "sequence_ratio": rep.sequence_ratio(),
        "sizes": rep.sizes,
    }


def _decompress(args) -> None:
    out = args.output
    if out is None:
        name = args.input.name
        if not name.endswith(SUFFIX):
            raise UsageError(f"cannot derive output name; pass -o (input lacks {SUFFIX})")
        out = args.input.with_name(name[: -len(SUFFIX)])
    if out.exists() and out.resolve() == args.input.resolve():
        raise UsageError("output would overwrite the input")
    ct.decompress_file(args.input, out, threads=args.threads)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.mode == "compress":
            _print_report(_compress(args), args.json)
        elif args.mode == "decompress":
            _decompress(args)
        elif args.mode == "simulate":
            cfg = SimConfig(args.genome_length, args.coverage, args.error_rate,
                            args.read_length, args.seed)
            simulate(cfg, args.output)
        else:
            _print_report(ct.container_stats(args.input), args.json)
    except UsageError as exc:
        print(f"dbgzip: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"dbgzip: corrupt or malformed data: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except OSError as exc:
        print(f"dbgzip: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"dbgzip: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
