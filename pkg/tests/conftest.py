import sys
from pathlib import Path

import pytest

from semgraph import _accel
from semgraph.taxonomy import load_bundled

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(params=["numba", "numpy"])
def accel(request, monkeypatch):
    """Run a test once through the numba kernels and once through the numpy path."""
    use = request.param == "numba"
    if use and not _accel.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "USE_NUMBA", use)
    return request.param


@pytest.fixture(scope="session")
def small_taxonomy():
    return load_bundled("fixture")


@pytest.fixture(scope="session")
def full_taxonomy():
    return load_bundled("full")


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory):
    from semgraph.synthetic import generate

    root = tmp_path_factory.mktemp("synthetic")
    truth = generate(root, n_objects=5, n_frames=10, seed=7)
    return root, truth


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
