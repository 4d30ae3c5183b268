"""Shared fixtures and stream generators for the test suite."""

import numpy as np
import pytest

from aucstream.data import Dataset, Instance, SparseVector, l2_normalize


def random_sparse_vector(rng, dim, density=0.5, scale=1.0):
    """Random sparse vector with nonzero values on a random support."""
    nnz = max(1, rng.binomial(dim, density))
    idx = np.sort(rng.choice(dim, size=nnz, replace=False))
    vals = scale * rng.standard_normal(nnz)
    vals[vals == 0.0] = scale  # measure-zero guard
    return SparseVector(idx, vals, dim)


def random_stream(rng, n, dim, density=0.5, normalize=False, scale=1.0):
    """Random labeled stream with both classes guaranteed for n >= 2."""
    labels = rng.choice([-1, 1], size=n)
    if n >= 2:
        labels[0], labels[1] = 1, -1
    out = []
    for y in labels:
        inst = Instance(random_sparse_vector(rng, dim, density, scale), int(y))
        if normalize:
            inst = l2_normalize(inst)
        out.append(inst)
    return out


def stream_dataset(rng, n, dim, density=0.5, normalize=False, name="stream"):
    return Dataset(random_stream(rng, n, dim, density, normalize), dim, name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion" in nodeid:
                name = nodeid.split("::")[-1]
                lines.append((name, status.upper()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status:7s} {name}")
