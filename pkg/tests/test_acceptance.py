"""Acceptance suite: one PASS/FAIL line per criterion (see terminal summary)."""

import io
import math
import os
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from dbgzip import bloom, container as ct, headers as hdr, seqcodec as sc
from dbgzip.counting import CountTable
from dbgzip.fastx import ReadBatch
from dbgzip.kmer import Kmer, canonical, kmers_of, pack
from dbgzip.simulate import SimConfig, simulate

from conftest import random_dna, revcomp

F = 0.5 ** math.log(2)
pytestmark = pytest.mark.slow

DESK = dict(genome_length=100_000, error_rate=0.01, read_length=100, seed=2024)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def desk(workdir):
    """Same 100 kbp genome at several coverages, 1% substitutions."""
    paths = {}
    for cov in (10, 30, 50, 70, 140):
        p = workdir / f"desk{cov}.fa"
        simulate(SimConfig(coverage=cov, **DESK), p)
        paths[cov] = p
    return paths


def compress(path, out, **kw):
    return ct.compress_pipeline(path, out, ct.CompressParams(**kw))


def test_ac01_losslessness(workdir, verdict):
    rnd = random.Random(20240101)
    t0 = time.perf_counter()
    failures = []
    n = 20
    for i in range(n):
        cfg = SimConfig(genome_length=rnd.randint(10_000, 200_000), coverage=rnd.uniform(10, 80),
                        error_rate=rnd.uniform(0, 0.03), read_length=rnd.randint(80, 150),
                        seed=rnd.randrange(2**31))
        r = rnd.choice([4, 8, 12])
        threads = rnd.choice([1, 8])
        src, out = workdir / f"l{i}.fa", workdir / f"l{i}.dbgz"
        simulate(cfg, src)
        compress(src, out, bits_per_kmer=r, threads=threads,
                 block_size=rnd.choice([7_000, 50_000]))
        buf = io.BytesIO()
        ct.decompress_file(out, buf, threads=threads)
        if buf.getvalue() != src.read_bytes():
            failures.append((cfg, r, threads))
        src.unlink()
        out.unlink()
    dt = time.perf_counter() - t0
    ok = not failures and dt < 300
    verdict("AC1 losslessness", ok,
            f"{n - len(failures)}/{n} configurations byte-exact (headers included), {dt:.0f}s (< 300s)")
    assert ok, failures


def test_ac02_optimal_bloom_size(verdict):
    r50 = bloom.optimal_bits_per_kmer(50)
    grid = np.round(np.arange(4.0, 20.0001, 0.1), 1)
    errs = {}
    for d in (10, 50, 200):
        best = float(grid[np.argmin(grid + 6 * d * F ** grid)])
        errs[d] = abs(bloom.optimal_bits_per_kmer(d) - best)
    ok = abs(r50 - 10.3) <= 0.1 and max(errs.values()) <= 0.1
    verdict("AC2 optimal bits per kmer", ok,
            f"r(D=50)={r50:.3f} (10.3 +- 0.1); grid-search gap "
            + ", ".join(f"D={d}: {e:.3f}" for d, e in errs.items()) + " (<= 0.1)")
    assert ok


def test_ac03_bloom_fpr(verdict):
    rng = np.random.default_rng(3)
    k = 31

    def words(n):
        lo = rng.integers(0, 1 << (2 * k), size=n, dtype=np.uint64)
        return np.array([canonical(Kmer(int(v), k)).value for v in lo], dtype=np.uint64)

    members = np.unique(words(100_000))
    while members.size < 100_000:
        members = np.unique(np.concatenate([members, words(100_000 - members.size)]))
    g = bloom.build(np.zeros(members.size, np.uint64), members, 10, k)
    assert g.h == 7
    queries = words(1_000_000)
    queries = queries[~np.isin(queries, members)]
    fpr = float(g.contains_words(np.zeros(queries.size, np.uint64), queries).mean())
    target = 0.618 ** 10
    rel = abs(fpr - target) / target
    ok = rel <= 0.25
    verdict("AC3 Bloom FPR", ok,
            f"measured {fpr:.5f} over {queries.size} non-members vs {target:.5f}, rel. error {rel:.1%} (<= 25%)")
    assert ok


def test_ac04_bits_per_base(desk, workdir, verdict):
    rep = compress(desk[70], workdir / "ac4.dbgz")
    bpb = rep.bits_per_base()
    ok = bpb <= 1.0
    verdict("AC4 bits per base", ok,
            f"{bpb:.3f} bits/base on 100 kbp/70x/1% (T_sol={rep.t_sol}, r={rep.bits_per_kmer:.2f}) (<= 1.0)")
    assert ok


def test_ac05_coverage_monotonic(desk, workdir, verdict):
    ratios = [compress(desk[c], workdir / "ac5.dbgz").sequence_ratio() for c in (10, 30, 50, 70)]
    ok = all(a < b for a, b in zip(ratios, ratios[1:]))
    verdict("AC5 coverage monotonicity", ok,
            "sequence ratio at 10/30/50/70x: " + " < ".join(f"{r:.2f}" for r in ratios))
    assert ok


def test_ac06_tsol_ablation(desk, workdir, verdict):
    auto = compress(desk[70], workdir / "ac6a.dbgz")
    none = compress(desk[70], workdir / "ac6b.dbgz", t_sol=1)
    factor = auto.sequence_ratio() / none.sequence_ratio()
    ok = factor >= 1.5
    verdict("AC6 T_sol ablation", ok,
            f"auto T_sol={auto.t_sol} ratio {auto.sequence_ratio():.2f} vs unfiltered "
            f"{none.sequence_ratio():.2f}: factor {factor:.2f} (>= 1.5)")
    assert ok


def test_ac07_bloom_tradeoff(desk, workdir, verdict):
    totals = {}
    for r in (4, 6, 8, 10, 14, 20):
        s = compress(desk[70], workdir / "ac7.dbgz", bits_per_kmer=r).sizes
        totals[r] = s["graph"] + s["bifurcation"] + s["error_pos"] + s["error_nt"]
    r_star = min(totals, key=totals.get)
    ok = 8 <= r_star <= 14 and totals[4] > totals[r_star] and totals[20] > totals[r_star]
    verdict("AC7 Bloom size trade-off", ok,
            f"r*={r_star} in [8, 14]; totals " + ", ".join(f"r={r}: {v}" for r, v in totals.items()))
    assert ok


def test_ac08_headers(verdict):
    hs = [b"SRR959239.%d %d length=%d" % (i, i, 98 + i % 3) for i in range(1, 100_001)]
    streams = hdr.encode_headers(hs)
    raw = sum(len(h) + 2 for h in hs)
    ratio = raw / sum(map(len, streams))
    exact = hdr.decode_headers(streams, len(hs)) == hs
    ok = ratio >= 20 and exact
    verdict("AC8 header compression", ok,
            f"{ratio:.1f}x on 1e5 sequential SRA-style headers, lossless={exact} (>= 20x)")
    assert ok


def test_ac09_oracle_equivalence(verdict):
    rnd = random.Random(99)
    k = 31
    genome = random_dna(rnd, 5000)
    kmerset = {canonical(x) for _, x in kmers_of(genome, k)}
    assert len(kmerset) == len(genome) - k + 1  # repeat-free
    g = bloom.ExactDbg.from_kmers(kmerset, k)
    reads = []
    for _ in range(500):
        p = rnd.randrange(len(genome) - 100)
        r = genome[p:p + 100]
        reads.append(revcomp(r) if rnd.random() < 0.5 else r)
    batch = ReadBatch.from_sequences(reads)
    his = np.array([x.words[0] for x in kmerset], np.uint64)
    los = np.array([x.words[1] for x in kmerset], np.uint64)
    order = np.lexsort((los, his))
    solid = CountTable(k, his[order], los[order], np.ones(len(kmerset), np.int64))
    d = sc.AnchorDictionary(k)
    aidx, apos, astr = sc.select_block_anchors(batch.codes, batch.offsets, k, d, sc.SolidIndex(solid))
    streams, stats = sc.encode_block(batch.codes, batch.offsets, aidx, apos, astr, g)
    entries = int(stats[2] + stats[3])
    recs = [sc.encode_read(r, (int(i), int(p)), g, d) for r, i, p in zip(reads, aidx, apos)]
    records_clean = all(len(rec.right) + len(rec.left) == 0 for rec in recs)
    mismatches = steps = 0
    for read, p in zip(reads, apos):
        for seq, start in ((read, int(p)), (revcomp(read), len(read) - k - int(p))):
            for j in range(start, len(seq) - k + 1):
                x = pack(seq[j:j + k])
                brute = [b for b in "ACGT" if canonical(pack(seq[j + 1:j + k] + b)) in kmerset]
                mismatches += [b for b, _ in bloom.successors(g, x)] != brute
                steps += 1
    ok = (aidx >= 0).all() and entries == 0 and records_clean and mismatches == 0
    verdict("AC9 oracle equivalence", ok,
            f"{int((aidx >= 0).sum())}/500 reads anchored, {entries} branch+error entries, "
            f"successor sets equal brute force at {steps - mismatches}/{steps} walk steps")
    assert ok


def _peak_rss(path, out):
    """(peak RSS, peak traced heap) in MB for one compression in a fresh process."""
    code = ("import resource, sys, tracemalloc\n"
            "from dbgzip import container as ct\n"
            "tracemalloc.start()\n"
            "ct.compress_pipeline(sys.argv[1], sys.argv[2])\n"
            "print(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,"
            " tracemalloc.get_traced_memory()[1])\n")
    res = subprocess.run([sys.executable, "-c", code, str(path), str(out)],
                         capture_output=True, text=True, check=True)
    rss_kb, heap = res.stdout.split()[-2:]
    return int(rss_kb) / 1024, int(heap) / 2**20


def _best_time(path, out, repeat=2, **kw):
    best = math.inf
    for _ in range(repeat):
        t = time.perf_counter()
        compress(path, out, **kw)
        best = min(best, time.perf_counter() - t)
    return best


def test_ac10_memory(desk, workdir, verdict):
    m = {c: _peak_rss(desk[c], workdir / "m.dbgz") for c in (70, 140)}
    rss_growth = m[140][0] / m[70][0] - 1
    heap_growth = m[140][1] / m[70][1] - 1
    ok = rss_growth < 0.20 and heap_growth < 0.20
    verdict("AC10a memory vs coverage", ok,
            f"peak RSS {m[70][0]:.0f} -> {m[140][0]:.0f} MB (+{rss_growth:.1%}), traced heap "
            f"{m[70][1]:.0f} -> {m[140][1]:.0f} MB (+{heap_growth:.1%}) from 70x to 140x (< 20%)")
    assert ok


def test_ac10_time(desk, workdir, verdict):
    compress(desk[70], workdir / "w.dbgz")  # warm the JIT cache
    t1 = _best_time(desk[70], workdir / "t.dbgz")
    t2 = _best_time(desk[140], workdir / "t.dbgz")
    ok = t2 / t1 <= 2.5
    verdict("AC10b time vs reads", ok,
            f"{t1:.2f}s for 7.0M bases -> {t2:.2f}s for 14.0M bases: x{t2 / t1:.2f} (<= 2.5)")
    assert ok


@pytest.mark.xfail((os.cpu_count() or 1) < 8, reason="fewer than 8 CPUs available", strict=False)
def test_ac10_threads(desk, workdir, verdict):
    compress(desk[70], workdir / "w.dbgz", threads=8)
    t1 = _best_time(desk[70], workdir / "p.dbgz", threads=1)
    t8 = _best_time(desk[70], workdir / "p.dbgz", threads=8)
    speedup = t1 / t8
    ok = speedup >= 3.0
    verdict("AC10c 8-thread speedup", ok,
            f"x{speedup:.2f} with 8 workers on {os.cpu_count()} CPU(s) (>= 3.0)")
    assert ok


@pytest.mark.network
def test_ac11_real_data(workdir, verdict):
    path = os.environ.get("DBGZIP_SRR959239")
    if not path:
        verdict("AC11 SRR959239 (optional)", None, "not run: set DBGZIP_SRR959239 to a local FASTQ")
        pytest.skip("optional real-data check; dataset not available")
    rep = compress(path, workdir / "srr.dbgz", threads=os.cpu_count() or 1)
    ok = rep.sequence_ratio() >= 12
    verdict("AC11 SRR959239 (optional)", ok, f"sequence ratio {rep.sequence_ratio():.2f} (>= 12)")
    assert ok
