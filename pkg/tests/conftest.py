import numpy as np
import pytest

from roulette_mcmc.ising import IsingLattice

# 3 x 3 data lattice shared by the small-oracle tests
DATA_3X3 = """3
++-
+++
-+-
"""

ACCEPTANCE_RESULTS = []


def record_acceptance(number, passed, detail):
    ACCEPTANCE_RESULTS.append((number, bool(passed), detail))
    print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def data3():
    return IsingLattice.from_text(DATA_3X3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: str(r[0])):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
