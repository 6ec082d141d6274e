import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oceanchl import _backend, _kernels_py, rng
from oceanchl.errors import ArgumentError, StateError
from oceanchl.estimators import rbf_kernel

compiled = pytest.importorskip("oceanchl._kernels")

SETTINGS = settings(max_examples=60, deadline=None, derandomize=True,
                    suppress_health_check=[HealthCheck.too_slow])


def both(fn_name, *args):
    return getattr(_kernels_py, fn_name)(*args), getattr(compiled, fn_name)(*args)


def arrays_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


@st.composite
def tree_problem(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    gen = np.random.default_rng(seed)
    n = draw(st.integers(1, 150))
    levels = draw(st.sampled_from([0, 3, 10]))
    X = gen.integers(0, levels, (n, 6)).astype(float) if levels else gen.random((n, 6))
    y = gen.integers(0, 4, n).astype(float) if draw(st.booleans()) else gen.standard_normal(n)
    samples = gen.integers(0, n, n) if draw(st.booleans()) else np.arange(n)
    return (X, y, samples.astype(np.int64), draw(st.sampled_from([-1, 0, 1, 3, 8])),
            draw(st.sampled_from([2, 3, 10])), draw(st.integers(1, 6)), draw(st.booleans()),
            rng.stream_key(seed, rng.TREE_STREAM))


class TestParity:
    @SETTINGS
    @given(tree_problem())
    def test_build_tree(self, args):
        assert arrays_equal(*both("build_tree", *args))

    @SETTINGS
    @given(tree_problem(), st.integers(0, 2 ** 32 - 1))
    def test_predict_tree(self, args, qseed):
        nodes = _kernels_py.build_tree(*args)[:5]
        # training rows fall on both sides of every threshold
        Q = np.vstack([args[0], np.random.default_rng(qseed).random((50, 6))])
        a, b = both("predict_tree", *nodes, Q)
        assert np.array_equal(a, b)

    @SETTINGS
    @given(st.integers(0, 500), st.integers(0, 2 ** 32 - 1))
    def test_fisher_yates(self, n, seed):
        gen = np.random.default_rng(seed)
        js = np.array([gen.integers(0, i + 1) for i in range(n - 1, 0, -1)], dtype=np.int64)
        a, b = both("fisher_yates", js)
        assert np.array_equal(a, b)
        assert sorted(a.tolist()) == list(range(len(a)))

    @settings(max_examples=25, deadline=None, derandomize=True)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(2, 40),
           st.sampled_from([0.1, 1.0, 10.0]), st.sampled_from([0.0, 0.05, 0.3]))
    def test_smo(self, seed, n, C, eps):
        gen = np.random.default_rng(seed)
        Z = gen.standard_normal((n, 6))
        y = gen.standard_normal(n)
        K = rbf_kernel(Z, Z, 0.3)
        a, b = both("smo", K, y, C, eps, 1e-3, 10_000)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        assert a[2:] == b[2:]

    @SETTINGS
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 200), st.integers(1, 12),
           st.booleans())
    def test_knn(self, seed, n, k, lattice):
        gen = np.random.default_rng(seed)
        R = gen.integers(0, 3, (n, 6)).astype(float) if lattice else gen.standard_normal((n, 6))
        Q = gen.integers(0, 3, (30, 6)).astype(float) if lattice else gen.standard_normal((30, 6))
        k = min(k, n)
        ia, da = _kernels_py.make_knn_index(R).query(Q, k)
        ib, db = compiled.make_knn_index(R).query(Q, k)
        assert np.array_equal(ia, ib) and np.array_equal(da, db)


class TestSelection:
    def test_default_is_compiled(self):
        assert _backend.available() == ["python", "compiled"]
        assert _backend.name() == "compiled"

    def test_use_restores(self):
        with _backend.use("python"):
            assert _backend.kernels() is _kernels_py
        assert _backend.kernels() is compiled

    def test_unknown(self):
        with pytest.raises(ArgumentError):
            _backend.set_backend("gpu")

    def test_missing_compiled(self, monkeypatch):
        monkeypatch.setattr(_backend, "_compiled", None)
        with pytest.raises(StateError):
            _backend.set_backend("compiled")
