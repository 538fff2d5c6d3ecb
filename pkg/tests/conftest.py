import itertools
import math

import numpy as np
import pytest

from bcbounds.channel import Channel, make_bsc_bc


def h2(p: float) -> float:
    """Binary entropy in bits, written out with math.log2."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def brute_entropy(p, names) -> float:
    """Entropy of a marginal by explicit accumulation over every cell."""
    axes = [p.names.index(n) for n in names]
    acc = {}
    for idx in itertools.product(*(range(c) for c in p.cards)):
        key = tuple(idx[a] for a in axes)
        acc[key] = acc.get(key, 0.0) + p.mass[idx]
    return -sum(v * math.log2(v) for v in acc.values() if v > 0)


def brute_cmi(p, a, b, c=()) -> float:
    a, b, c = list(a), list(b), list(c)
    return (brute_entropy(p, a + c) + brute_entropy(p, b + c)
            - brute_entropy(p, a + b + c) - brute_entropy(p, c))


def random_channel(rng, x_card=2, y_card=2, z_card=2) -> Channel:
    k = rng.random((x_card, y_card * z_card)) + 0.05
    k /= k.sum(axis=1, keepdims=True)
    return Channel.from_matrix(k, y_card, z_card)


def superposition_support(w, p1, p2, n=200001):
    """Degraded BSC pair: max over beta of w1 (h(beta*p1) - h(p1)) + w2 (1 - h(beta*p2))."""
    beta = np.linspace(0.0, 0.5, n)

    def h(x):
        x = np.clip(x, 1e-300, 1 - 1e-16)
        return -x * np.log2(x) - (1 - x) * np.log2(1 - x)

    conv = lambda a, b: a * (1 - b) + b * (1 - a)  # noqa: E731
    r1 = h(conv(beta, p1)) - h2(p1)
    r2 = 1 - h(conv(beta, p2))
    return float(np.max(w[1] * r1 + w[2] * r2))


@pytest.fixture
def bsc_bc():
    return make_bsc_bc(0.1, 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
