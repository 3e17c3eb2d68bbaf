import re

import numpy as np
import pytest


def central_diff_grad(f, z, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at 1-D ``z``."""
    z = np.asarray(z, dtype=np.float64)
    g = np.empty_like(z)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        g[i] = (f(zp) - f(zm)) / (2 * h)
    return g


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def direct_kl(p, q):
    """Independent KL oracle: explicit Python loop over math.log."""
    import math

    total = 0.0
    for a, b in zip(p, q):
        if a > 0:
            total += a * (math.log(a) - math.log(b))
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = _ACCEPTANCE.search(getattr(rep, "nodeid", ""))
            if m and rep.when == "call" or (m and outcome == "error"):
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append((int(m.group(1)), f"criterion {m.group(1)} {m.group(2).replace('_', ' ')}: "
                                               f"{status} ({rep.duration:.2f}s)"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
