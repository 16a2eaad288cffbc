import itertools

import numpy as np
import pytest

from oimstab.model import CouplingMatrix

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" ({detail})"
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def j3():
    """N=3 example: J12 = 1, J13 = -0.5, J23 = 2."""
    return CouplingMatrix(np.array([[0.0, 1.0, -0.5], [1.0, 0.0, 2.0], [-0.5, 2.0, 0.0]]))


def random_j(n, rng, scale=1.0):
    return CouplingMatrix.random(n, scale, rng)


def all_states(n):
    """Every state in {+1,-1}^n (both signs), brute force."""
    return np.array(list(itertools.product([1, -1], repeat=n)), dtype=np.int8)


def brute_lambda(j, s):
    """Independent top eigenvalue: explicit D(s) and LAPACK."""
    j = np.asarray(j)
    s = np.asarray(s, dtype=float)
    n = len(s)
    d = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            if a != b:
                d[a, b] = j[a, b] * s[a] * s[b]
        d[a, a] = -sum(j[a, b] * s[a] * s[b] for b in range(n) if b != a)
    return np.linalg.eigvalsh(d)[-1]


def brute_h(j, s):
    j = np.asarray(j)
    n = len(s)
    return -sum(j[a, b] * s[a] * s[b] for a in range(n) for b in range(a + 1, n))
