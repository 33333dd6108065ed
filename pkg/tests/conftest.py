import math

import numpy as np
import pytest


def batch_means_se(values, batches: int = 20) -> float:
    """Monte Carlo standard error of the mean from non-overlapping batch means."""
    x = np.asarray(values, dtype=float)
    size = x.size // batches
    if size < 2:
        raise ValueError("too few values for batch means")
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def pooled_se(chains, batches: int = 20) -> float:
    """SE of the pooled mean of independent equal-length chains."""
    ses = [batch_means_se(c, batches) for c in chains]
    return float(math.sqrt(sum(s * s for s in ses)) / len(ses))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sign_corrected_se(chains, h, batches: int = 20) -> float:
    """Batch-means SE of the pooled sign-corrected mean of ``h`` (delta method)."""
    signs = [np.array([s.sign for s in c], dtype=float) for c in chains]
    values = [np.array([h(s.theta) for s in c], dtype=float) for c in chains]
    est = sum(float(np.sum(s * v)) for s, v in zip(signs, values)) / sum(float(s.sum()) for s in signs)
    mean_sign = float(np.mean(np.concatenate(signs)))
    z = [s * (v - est) / mean_sign for s, v in zip(signs, values)]
    return pooled_se(z, batches)


# one line per acceptance criterion, repeated at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
