import random

import numpy as np
import pytest
from hypothesis import settings

from dbgzip.simulate import SimConfig, simulate

# numba compiles on first call; keep hypothesis from timing that
settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

BASES = "ACGT"


def random_dna(rng: random.Random, n: int) -> str:
    return "".join(rng.choice(BASES) for _ in range(n))


def revcomp(s: str) -> str:
    return s.translate(str.maketrans("ACGTN", "TGCAN"))[::-1]


def canonical_str(s: str) -> str:
    return min(s, revcomp(s))


@pytest.fixture(scope="session")
def small_fasta(tmp_path_factory):
    """20 kbp genome at 30x with 1% errors."""
    path = tmp_path_factory.mktemp("data") / "small.fa"
    simulate(SimConfig(20_000, 30, 0.01, 100, seed=11), path)
    return path


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion (``ok=None`` is SKIP)."""
    def record(label: str, ok: bool | None, detail: str) -> bool | None:
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"{label}: {status}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
