from fractions import Fraction

import numpy as np
import pytest

from sybilreg.model import CandidateNetwork, Dataset, DisjointNetworkSpec


def fraction_inverse(a):
    """Exact Gauss-Jordan inverse over the rationals; independent of numpy/LAPACK."""
    n = len(a)
    m = [[Fraction(v).limit_denominator(10**9) for v in row] + [Fraction(int(i == j)) for j in range(n)]
         for i, row in enumerate(a)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        pv = m[col][col]
        m[col] = [v / pv for v in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [[float(v) for v in row[n:]] for row in m]


def random_spec(rng, n_max=200, k_max=7, size_range=(2, 50), pi_range=(0.01, 0.99), pi_grid=False):
    """Disjoint spec on randomly placed rows."""
    k = int(rng.integers(0, k_max + 1))
    while True:
        sizes = rng.integers(size_range[0], size_range[1] + 1, size=k)
        if sizes.sum() <= n_max:
            break
    n = int(rng.integers(max(int(sizes.sum()), 1), n_max + 1))
    perm = rng.permutation(n)
    nets, start = [], 0
    for s in sizes:
        if pi_grid:
            pi = float(rng.integers(1, 100)) / 100
        else:
            pi = float(rng.uniform(*pi_range))
        nets.append(CandidateNetwork(tuple(perm[start:start + s]), pi))
        start += s
    return DisjointNetworkSpec(tuple(nets), n)


def random_dataset(rng, n, p=3, beta=None):
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    beta = np.arange(1, p + 1, dtype=float) if beta is None else np.asarray(beta)
    y = X @ beta + rng.standard_normal(n)
    return Dataset(y, X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240229)


@pytest.fixture
def line_data():
    return Dataset([1.0, 3.0, 5.0], [[1, 0], [1, 1], [1, 2]])


# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE_RESULTS: dict[str, tuple[str, str]] = {}


def record_criterion(key: str, ok: bool | None, detail: str) -> None:
    status = "N/A" if ok is None else ("PASS" if ok else "FAIL")
    ACCEPTANCE_RESULTS[key] = (status, detail)
    print(f"criterion {key}: {status}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        status, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {status}  {detail}")
