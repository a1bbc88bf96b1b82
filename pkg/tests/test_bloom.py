import math
import random

import numpy as np
import pytest

from dbgzip import bloom
from dbgzip.kmer import Kmer, canonical, kmers_of, pack, revcomp, unpack

from conftest import random_dna

F = 0.5 ** math.log(2)


def random_words(rng, n, k=31):
    """Canonical kmer words drawn uniformly (k <= 32 so hi is zero)."""
    lo = rng.integers(0, 1 << (2 * k), size=n, dtype=np.uint64)
    canon = np.array([canonical(Kmer(int(v), k)).value for v in lo], dtype=np.uint64)
    return np.zeros(n, np.uint64), canon


def grid_argmin(d):
    grid = np.round(np.arange(4.0, 20.0001, 0.1), 1)
    return float(grid[np.argmin(grid + 6 * d * F ** grid)])


def test_optimal_bits_d50():
    assert bloom.optimal_bits_per_kmer(50) == pytest.approx(10.3, abs=0.1)


@pytest.mark.parametrize("d", [10, 50, 200])
def test_optimal_bits_matches_grid_search(d):
    assert bloom.optimal_bits_per_kmer(d) == pytest.approx(grid_argmin(d), abs=0.1)


def test_optimal_bits_clamped():
    assert bloom.optimal_bits_per_kmer(0.05) == 4.0
    assert bloom.optimal_bits_per_kmer(1e9) == 20.0
    with pytest.raises(ValueError):
        bloom.optimal_bits_per_kmer(0)


def test_hash_count():
    assert bloom.hash_count(10) == 7
    assert bloom.hash_count(0.5) == 1


@pytest.fixture(scope="module")
def members():
    return random_words(np.random.default_rng(7), 100_000)


def measured_fpr(members, r, n_queries=1_000_000):
    his, los = members
    g = bloom.build(his, los, r, 31)
    assert g.contains_words(his, los).all()
    qhi, qlo = random_words(np.random.default_rng(99), n_queries)
    fresh = ~np.isin(qlo, los)
    return float(g.contains_words(qhi[fresh], qlo[fresh]).mean()), g


def test_no_false_negatives_and_sizes(members):
    his, los = members
    g = bloom.build(his, los, 10, 31)
    assert g.m == 1_000_000 and g.h == 7
    assert g.contains_words(his, los).all()


@pytest.mark.parametrize("r", [8, 10, 12])
def test_fpr_matches_model(members, r):
    fpr, _ = measured_fpr(members, r, 300_000 if r != 10 else 1_000_000)
    assert abs(fpr - F ** r) / F ** r < 0.25


def test_fpr_decreases_with_r(members):
    assert measured_fpr(members, 20, 200_000)[0] < measured_fpr(members, 10, 200_000)[0]


def test_build_rejects_empty():
    with pytest.raises(ValueError):
        bloom.build(np.zeros(0, np.uint64), np.zeros(0, np.uint64), 10, 31)


def test_membership_is_canonical(rng):
    xs = [pack(random_dna(rng, 31)) for _ in range(200)]
    g = bloom.build(*np.array([canonical(x).words for x in xs], dtype=np.uint64).T, 12, 31)
    for x in xs:
        assert g.contains(x) and g.contains(revcomp(x))


def exact_from_reads(reads, k):
    return bloom.ExactDbg.from_kmers(
        [x for r in reads for _, x in kmers_of(r, k) if x is not None], k)


def test_successors_single_read():
    g = exact_from_reads(["ACGTACGTAC"], 5)
    succ = bloom.successors(g, pack("ACGTA"))
    assert [(b, unpack(y)) for b, y in succ] == [("C", "CGTAC")]


def test_successors_empty_graph():
    assert bloom.successors(bloom.empty_graph(5), pack("ACGTA")) == []


def test_successors_strand_symmetry():
    # path a -> b -> c; querying revcomp(b) gives revcomp of b's predecessor
    g = exact_from_reads(["AACCGTT"], 5)   # AACCG, ACCGT, CCGTT
    b = pack("ACCGT")
    assert [unpack(y) for _, y in bloom.successors(g, b)] == ["CCGTT"]
    assert [unpack(y) for _, y in bloom.successors(g, revcomp(b))] == [unpack(revcomp(pack("AACCG")))]


def test_successors_match_brute_force(rng):
    k = 7
    reads = [random_dna(rng, 40) for _ in range(20)]
    kmerset = {canonical(x) for r in reads for _, x in kmers_of(r, k) if x is not None}
    g = bloom.ExactDbg.from_kmers(kmerset, k)
    for r in reads:
        for _, x in kmers_of(r, k):
            for y in (x, revcomp(x)):
                s = unpack(y)
                want = [b for b in "ACGT" if canonical(pack(s[1:] + b)) in kmerset]
                assert [b for b, _ in bloom.successors(g, y)] == want


def test_serialize_round_trip(members):
    his, los = members
    g = bloom.build(his, los, 10, 31)
    img = g.serialize()
    g2 = bloom.deserialize(img)
    assert np.array_equal(g.bits, g2.bits) and (g2.m, g2.h, g2.k) == (g.m, g.h, g.k)
    assert g2.serialize() == img


def test_serialize_detects_corruption(members):
    his, los = members
    img = bytearray(bloom.build(his[:1000], los[:1000], 10, 31).serialize())
    img[-3] ^= 0x10
    with pytest.raises(bloom.CorruptImageError):
        bloom.deserialize(bytes(img))
    with pytest.raises(bloom.CorruptImageError):
        bloom.deserialize(bytes(img[:20]))


def test_empty_graph_image():
    img = bloom.empty_graph(31).serialize()
    g = bloom.deserialize(img)
    assert g.m == 0 and not g.contains(pack("A" * 31))
    assert len(img) == 44  # fixed head + crc, no words


def test_deterministic_bits(members):
    his, los = members
    a = bloom.build(his, los, 9.5, 31).serialize()
    b = bloom.build(his.copy(), los.copy(), 9.5, 31).serialize()
    assert a == b


def test_k63_words():
    rng = random.Random(3)
    xs = [pack(random_dna(rng, 63)) for _ in range(500)]
    g = bloom.ExactDbg.from_kmers(xs, 63)
    assert all(g.contains(x) and g.contains(revcomp(x)) for x in xs)
    assert not g.contains(pack(random_dna(rng, 63)))
