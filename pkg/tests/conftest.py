import numpy as np
import pytest

from oceanchl import _backend
from oceanchl.core import BAND_NAMES, GeoGrid, GridStack, SampleTable

BACKENDS = _backend.available()

# lines recorded by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per available kernel backend."""
    with _backend.use(request.param):
        yield request.param


def random_table(n, seed=0, with_chl=True):
    gen = np.random.default_rng(seed)
    X = gen.uniform(0.001, 0.02, size=(n, 6))
    y = gen.uniform(0.05, 20.0, size=n) if with_chl else None
    return SampleTable.from_arrays(X, y)


def planted_table(n, seed=0, noise=0.0):
    """Reflectances with a smooth nonlinear chl signal on two bands."""
    gen = np.random.default_rng(seed)
    X = gen.uniform(0.001, 0.02, size=(n, 6))
    y = 1.0 + 200.0 * X[:, 1] + 5.0 * np.sin(300.0 * X[:, 4])
    if noise:
        y = y + noise * gen.standard_normal(n)
    return SampleTable.from_arrays(X, y)


def random_stack(n_rows=8, n_cols=8, seed=0, with_chl=True, holes=True):
    gen = np.random.default_rng(seed)
    geo = (10.0, 0.0, -20.0, -12.0)
    bands = {}
    for b in BAND_NAMES:
        v = gen.uniform(0.001, 0.02, size=(n_rows, n_cols))
        if holes:
            v[gen.random((n_rows, n_cols)) < 0.1] = -999.0
        bands[b] = GeoGrid(v, *geo)
    chl = GeoGrid(gen.uniform(0.05, 20.0, size=(n_rows, n_cols)), *geo) if with_chl else None
    return GridStack(bands, chl, "2020-01-01T00:00:00Z", "2020-01-08T00:00:00Z")


@pytest.fixture
def table():
    return random_table(120, seed=1)


@pytest.fixture
def stack():
    return random_stack()
