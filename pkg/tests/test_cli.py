import json
import subprocess
import sys

import pytest

from dbgzip.cli import EXIT_CORRUPT, EXIT_IO, EXIT_OK, EXIT_USAGE, run


def test_compress_decompress_identical(small_fasta, tmp_path, capsys):
    out = tmp_path / "x.dbgz"
    assert run(["compress", str(small_fasta), "-o", str(out), "--json"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["file_size"] == out.stat().st_size
    assert {"graph", "dictionary", "raw", "bifurcation"} <= set(report["sizes"])
    back = tmp_path / "x.fa"
    assert run(["decompress", str(out), "-o", str(back)]) == EXIT_OK
    assert back.read_bytes() == small_fasta.read_bytes()


def test_default_output_names(small_fasta, tmp_path):
    src = tmp_path / "in.fa"
    src.write_bytes(small_fasta.read_bytes())
    assert run(["compress", str(src), "--t-sol", "3", "--bits-per-kmer", "12"]) == EXIT_OK
    src.unlink()
    assert run(["decompress", str(tmp_path / "in.fa.dbgz")]) == EXIT_OK
    assert src.read_bytes() == small_fasta.read_bytes()


def test_stats_sum_to_file_size(small_fasta, tmp_path, capsys):
    out = tmp_path / "x.dbgz"
    run(["compress", str(small_fasta), "-o", str(out)])
    capsys.readouterr()
    assert run(["stats", str(out), "--json"]) == EXIT_OK
    s = json.loads(capsys.readouterr().out)
    assert sum(s["sizes"].values()) == s["file_size"]
    assert run(["stats", str(out)]) == EXIT_OK
    assert "bits_per_base" in capsys.readouterr().out


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--genome-length", "100000", "--coverage", "70", "--error-rate",
            "0.01", "--seed", "42"]
    a, b = tmp_path / "a.fa", tmp_path / "b.fa"
    assert run(args + ["-o", str(a)]) == EXIT_OK
    assert run(args + ["-o", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("argv", [["compress", "x.fa", "-k", "30"], ["frobnicate"],
                                  ["compress", "x.fa", "--threads", "0"],
                                  ["compress", "x.fa", "--t-sol", "zero"], []])
def test_usage_errors(argv, tmp_path):
    assert run(argv) == EXIT_USAGE


def test_corrupt_and_io_errors(small_fasta, tmp_path):
    out = tmp_path / "x.dbgz"
    run(["compress", str(small_fasta), "-o", str(out)])
    data = bytearray(out.read_bytes())
    data[100] ^= 0xFF
    bad = tmp_path / "bad.dbgz"
    bad.write_bytes(bytes(data))
    assert run(["decompress", str(bad), "-o", str(tmp_path / "o.fa")]) == EXIT_CORRUPT
    assert run(["stats", str(small_fasta)]) == EXIT_CORRUPT
    garbage = tmp_path / "g.fa"
    garbage.write_bytes(b"hello\n")
    assert run(["compress", str(garbage)]) == EXIT_CORRUPT
    assert run(["compress", str(tmp_path / "missing.fa")]) == EXIT_IO
    assert run(["decompress", str(out), "-o", str(tmp_path / "no" / "dir.fa")]) == EXIT_IO


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dbgzip.cli", "--help"], capture_output=True)
    assert proc.returncode == 0 and b"compress" in proc.stdout
