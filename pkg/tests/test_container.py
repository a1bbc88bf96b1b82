import gzip
import io
import struct

import numpy as np
import pytest

from dbgzip import container as ct
from dbgzip.fastx import read_records


def compress(path, tmp_path, name="out.dbgz", **kw):
    out = tmp_path / name
    rep = ct.compress_pipeline(path, out, ct.CompressParams(**kw))
    return out, rep


def decompress_bytes(path, threads=1):
    buf = io.BytesIO()
    ct.decompress_file(path, buf, threads=threads)
    return buf.getvalue()


def test_end_to_end_byte_identical(small_fasta, tmp_path):
    out, rep = compress(small_fasta, tmp_path, block_size=1500)
    assert decompress_bytes(out) == small_fasta.read_bytes()
    assert rep.file_size == out.stat().st_size == sum(rep.sizes.values())
    assert rep.anchored_reads + rep.raw_reads == rep.n_reads == 6000


def test_thread_count_does_not_change_output(small_fasta, tmp_path):
    a, _ = compress(small_fasta, tmp_path, "a", block_size=1000, threads=1)
    b, _ = compress(small_fasta, tmp_path, "b", block_size=1000, threads=4)
    c, _ = compress(small_fasta, tmp_path, "c", block_size=1000, threads=1)
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    assert decompress_bytes(b, threads=3) == small_fasta.read_bytes()


def test_records_preserve_order(small_fasta, tmp_path):
    out, _ = compress(small_fasta, tmp_path, block_size=777)
    got = [(h, s) for h, s in ct.decompress_pipeline(out, threads=2)]
    want = [(h, s.decode()) for h, s in read_records(small_fasta)]
    assert got == want


def test_zero_reads(tmp_path):
    src = tmp_path / "empty.fa"
    src.write_bytes(b"")
    out, rep = compress(src, tmp_path)
    assert rep.n_reads == 0
    assert decompress_bytes(out) == b""
    assert ct.container_stats(out)["n_blocks"] == 0


def test_reads_without_solid_kmers(tmp_path):
    src = tmp_path / "few.fa"
    src.write_bytes(b">a\nACGTTGCAACGTAGGCTAGCTAGGATCGATCGA\n>b\nNNNN\n>c\n\n")
    out, rep = compress(src, tmp_path, t_sol=50)
    assert rep.raw_reads == 3 and decompress_bytes(out) == src.read_bytes()


def test_sequence_only_and_fastq(tmp_path):
    src = tmp_path / "r.fq.gz"
    with gzip.open(src, "wb") as fh:
        for i in range(300):
            fh.write(b"@q%d extra\n%s\n+\n%s\n" % (i, b"ACGTTGCA" * 12, b"I" * 96))
    out, rep = compress(src, tmp_path, k=21)
    text = decompress_bytes(out)
    assert text.splitlines()[:2] == [b">q0 extra", b"ACGTTGCA" * 12]
    assert ct.load_container(out).params.flags & ct.FLAG_FASTQ_INPUT
    out2, rep2 = compress(src, tmp_path, "s.dbgz", k=21, sequence_only=True)
    assert rep2.header_bytes() == 0 and rep2.file_size < rep.file_size
    lines = decompress_bytes(out2).splitlines()
    assert lines[0] == b">1" and lines[598] == b">300" and lines[1] == b"ACGTTGCA" * 12


def test_section_round_trip(small_fasta, tmp_path):
    out, _ = compress(small_fasta, tmp_path, block_size=2500)
    data = out.read_bytes()
    c = ct.read_container(data)
    blocks = [(b.n_reads, c.block_streams(i)) for i, b in enumerate(c.blocks)]
    again = ct.write_container(c.params, bytes(c.graph_image), c.dict_his, c.dict_los, blocks)
    assert again == data
    assert c.graph().serialize() == bytes(c.graph_image)


@pytest.mark.parametrize("k", [5, 31, 33, 63])
def test_dictionary_packing(k, nprng):
    n = 100
    full = [int(v) for v in nprng.integers(0, 2**62, n)]
    vals = [((v << 64) | (v * 7 % 2**64)) & ((1 << (2 * k)) - 1) for v in full]
    his = np.array([v >> 64 for v in vals], np.uint64)
    los = np.array([v & (2**64 - 1) for v in vals], np.uint64)
    packed = ct.pack_dictionary(k, his, los)
    assert len(packed) == 8 + n * ((2 * k + 7) // 8)
    h2, l2 = ct.unpack_dictionary(k, memoryview(packed))
    assert np.array_equal(h2, his) and np.array_equal(l2, los)


@pytest.fixture(scope="module")
def good_file(tmp_path_factory, small_fasta):
    tmp = tmp_path_factory.mktemp("c")
    out, _ = compress(small_fasta, tmp, block_size=2000)
    return out.read_bytes()


def test_flipped_payload_byte(good_file, tmp_path):
    bad = bytearray(good_file)
    bad[len(bad) // 2] ^= 1
    p = tmp_path / "bad.dbgz"
    p.write_bytes(bytes(bad))
    dest = tmp_path / "never.fa"
    with pytest.raises(ct.ChecksumError):
        ct.decompress_file(p, dest)
    assert not dest.exists()


def test_bad_magic(good_file):
    with pytest.raises(ct.BadMagicError):
        ct.read_container(b"XXXX" + good_file[4:])


def test_version_mismatch(good_file):
    bad = good_file[:4] + struct.pack("<H", ct.VERSION + 1) + good_file[6:]
    with pytest.raises(ct.VersionMismatchError):
        ct.read_container(bad)


@pytest.mark.parametrize("cut", [3, 30, 1000, -1])
def test_truncation(good_file, cut):
    with pytest.raises(ct.TruncatedFileError):
        ct.read_container(good_file[:cut])


def test_errors_are_distinct():
    kinds = {ct.BadMagicError, ct.VersionMismatchError, ct.ChecksumError, ct.TruncatedFileError}
    assert all(issubclass(e, ct.ContainerError) for e in kinds)
    assert len({e.__mro__[0] for e in kinds}) == 4


def test_stats_accounting(good_file, tmp_path):
    p = tmp_path / "g.dbgz"
    p.write_bytes(good_file)
    s = ct.container_stats(p)
    assert sum(s["sizes"].values()) == s["file_size"] == len(good_file)
    fixed = s["sizes"]["overhead"]
    # file header, graph length, index head, trailer; per block its index entry
    assert fixed == 48 + 8 + 8 + 24 + s["n_blocks"] * (12 + 4 * 11)
