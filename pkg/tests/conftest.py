import os
import time
from pathlib import Path

import numpy as np
import pytest

from epictrl import quantize
from epictrl.costs import CostModel
from epictrl.model import ModelParams

# wall time of session-scoped builds, for runtime reporting
BUILD_SECONDS: dict[str, float] = {}


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def costs():
    return CostModel()


def random_info_states(rng, k, N=1000.0, interior=True):
    """Packed info states ``(k, 8)`` with a feasible mean/observation split."""
    lo = 1.0 if interior else 0.0
    frac = rng.dirichlet(np.ones(6), size=k)[:, :5]
    scale = rng.uniform(0.3, 0.95, size=(k, 1))
    comps = lo + frac * scale * (N - 5 * lo)
    x = np.empty((k, 8))
    x[:, 0:2] = comps[:, 0:2]
    x[:, 5:8] = comps[:, 2:5]
    x[:, 2] = rng.uniform(0.5, 500.0, k)
    x[:, 3] = rng.uniform(0.5, 500.0, k)
    x[:, 4] = rng.uniform(-0.95, 0.95, k)
    return x


def random_controls(rng, k):
    return np.column_stack([rng.uniform(0, 1, k), rng.uniform(0.001, 0.06, k), rng.uniform(0, 0.03, k)])


@pytest.fixture(scope="session")
def lloyd125(tmp_path_factory):
    """The default 125-node Lloyd quantizer, built once per session.

    Set ``EPICTRL_TEST_QUANTIZER`` to a saved quantizer file to skip the build.
    """
    cached = os.environ.get("EPICTRL_TEST_QUANTIZER")
    if cached and Path(cached).exists():
        return quantize.load(cached, dim=3)
    t0 = time.perf_counter()
    q = quantize.lloyd(3, 125, 1_000_000, seed=0)
    BUILD_SECONDS["lloyd125"] = time.perf_counter() - t0
    quantize.save(q, tmp_path_factory.mktemp("quantizer") / "q125.csv")
    return q


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
