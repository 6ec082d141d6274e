"""Pure-Python/numpy implementations of the hot kernels.

This module is the reference for ``_kernels.pyx``: both produce the same bits
for the same inputs.  The arithmetic order below (sequential sums, strict
comparisons, first-index tie breaking) is therefore part of the contract and
must be mirrored in the compiled version.
"""
from __future__ import annotations

import numpy as np

from .rng import Stream

TAU = 1e-12
IMPURITY_RTOL = 1e-12

BACKEND_NAME = "python"


def fisher_yates(js: np.ndarray) -> np.ndarray:
    """Apply pre-drawn Fisher-Yates swaps to ``arange(len(js) + 1)``.

    ``js[k]`` is the swap partner for position ``n - 1 - k``.
    """
    n = js.size + 1
    perm = list(range(n))
    i = n - 1
    for j in js.tolist():
        perm[i], perm[j] = perm[j], perm[i]
        i -= 1
    return np.asarray(perm, dtype=np.int64)


# ---------------------------------------------------------------------------
# regression trees


def _draw_features(stream: Stream, n_features: int, max_features: int) -> list[int]:
    if max_features >= n_features:
        return list(range(n_features))
    perm = list(range(n_features))
    for i in range(max_features):
        j = i + stream.next_bounded(n_features - i)
        perm[i], perm[j] = perm[j], perm[i]
    return sorted(perm[:max_features])


def _midpoint(a: float, b: float) -> float:
    t = (a + b) / 2.0
    if t == b:
        t = a
    return t


def _best_split(X, idx, yn, feats_fn, extra, stream):
    n = idx.size
    mean = np.cumsum(yn)[-1] / n
    yc = yn - mean
    s_c = np.cumsum(yc)[-1]
    sse = np.cumsum(yc * yc)[-1]
    base = s_c * s_c / n
    best = IMPURITY_RTOL * sse
    best_f = -1
    best_t = 0.0
    for f in feats_fn():
        xs = X[idx, f]
        if extra:
            mn = xs.min()
            mx = xs.max()
            if not mn < mx:
                continue
            u = stream.next_open_uniform()
            t = mn + u * (mx - mn)
            if t >= mx:
                t = mn
            m = xs <= t
            n_left = int(np.count_nonzero(m))
            s_left = np.cumsum(yc[m])[-1]
            s_right = s_c - s_left
            dec = s_left * s_left / n_left + s_right * s_right / (n - n_left) - base
            if dec > best:
                best, best_f, best_t = dec, f, float(t)
        else:
            order = np.argsort(xs, kind="stable")
            xs_s = xs[order]
            valid = xs_s[:-1] < xs_s[1:]
            if not valid.any():
                continue
            s_left = np.cumsum(yc[order])[:-1]
            n_left = np.arange(1, n, dtype=np.float64)
            s_right = s_c - s_left
            dec = s_left * s_left / n_left + s_right * s_right / (n - n_left) - base
            dec[~valid] = -np.inf
            j = int(np.argmax(dec))
            if dec[j] > best:
                best, best_f = dec[j], f
                best_t = _midpoint(float(xs_s[j]), float(xs_s[j + 1]))
    if best_f < 0:
        return None
    return best_f, best_t


def build_tree(X, y, samples, max_depth, min_samples_split, max_features, extra, key):
    """Grow one regression tree in preorder; returns flat node arrays.

    ``max_depth < 0`` means unlimited.  Leaves have ``feature == -1``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n_features = X.shape[1]
    stream = Stream(key)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    n_samples: list[int] = []

    stack = [(np.asarray(samples, dtype=np.int64), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        n = idx.size
        yn = y[idx]
        y0 = yn[0]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y0 + np.cumsum(yn - y0)[-1] / n))
        n_samples.append(n)
        if n < min_samples_split or 0 <= max_depth <= depth:
            continue
        if yn.max() == yn.min():
            continue
        split = _best_split(
            X, idx, yn,
            lambda: _draw_features(stream, n_features, max_features),
            extra, stream,
        )
        if split is None:
            continue
        f, t = split
        feature[node] = f
        threshold[node] = t
        m = X[idx, f] <= t
        stack.append((idx[~m], depth + 1, node, False))
        stack.append((idx[m], depth + 1, node, True))

    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
        np.asarray(n_samples, dtype=np.int64),
    )


def predict_tree(feature, threshold, left, right, value, X):
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    node = np.zeros(m, dtype=np.int64)
    rows = np.arange(m)
    while True:
        f = feature[node]
        inner = f >= 0
        if not inner.any():
            break
        r = rows[inner]
        nd = node[inner]
        go_left = X[r, f[inner]] <= threshold[nd]
        node[inner] = np.where(go_left, left[nd], right[nd])
    return value[node]


# ---------------------------------------------------------------------------
# epsilon-SVR dual, SMO with second-order working-set selection


def smo(K, y, C, epsilon, tol, max_iter):
    """Solve the 2N-variable epsilon-SVR dual.

    Variables are ``alpha[:N]`` (upper tube) and ``alpha[N:]`` (lower tube),
    ``beta = alpha[:N] - alpha[N:]``.  Returns ``(alpha, G, n_iter, converged)``
    where ``G`` is the dual gradient at the solution.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    s = np.concatenate([np.ones(n), -np.ones(n)])
    kd = np.diag(K).copy()
    kd2 = np.concatenate([kd, kd])
    alpha = np.zeros(2 * n)
    G = np.concatenate([epsilon - y, epsilon + y])
    n_iter = 0
    converged = False
    while True:
        v = -(s * G)
        up = ((s > 0) & (alpha < C)) | ((s < 0) & (alpha > 0))
        low = ((s > 0) & (alpha > 0)) | ((s < 0) & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        vu = np.where(up, v, -np.inf)
        i = int(np.argmax(vu))
        g_max = vu[i]
        g_max2 = np.max(np.where(low, -v, -np.inf))
        if g_max + g_max2 <= tol:
            converged = True
            break
        ki = K[i % n]
        k_i2 = np.concatenate([ki, ki])
        grad_diff = g_max - v
        quad = kd2[i] + kd2 - 2.0 * k_i2
        quad = np.where(quad > 0, quad, TAU)
        obj = np.where(low & (grad_diff > 0), -(grad_diff * grad_diff) / quad, np.inf)
        j = int(np.argmin(obj))
        if obj[j] == np.inf:
            converged = True
            break
        if n_iter >= max_iter:
            break
        n_iter += 1

        kij = float(ki[j % n])
        ai = float(alpha[i])
        aj = float(alpha[j])
        gi = float(G[i])
        gj = float(G[j])
        q = float(kd2[i]) + float(kd2[j]) - 2.0 * kij
        if q <= 0:
            q = TAU
        if s[i] != s[j]:
            delta = (-gi - gj) / q
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            delta = (gi - gj) / q
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        d_ai = ai - float(alpha[i])
        d_aj = aj - float(alpha[j])
        alpha[i] = ai
        alpha[j] = aj
        kj = K[j % n]
        q_i = s * s[i] * k_i2
        q_j = s * s[j] * np.concatenate([kj, kj])
        G += q_i * d_ai + q_j * d_aj
    return alpha, G, n_iter, converged


# ---------------------------------------------------------------------------
# nearest neighbours


def sq_distances(X, Q):
    """Squared Euclidean distances, accumulated feature by feature."""
    d2 = np.zeros((Q.shape[0], X.shape[0]))
    for f in range(X.shape[1]):
        diff = Q[:, f, None] - X[None, :, f]
        d2 += diff * diff
    return d2


class BruteForceIndex:
    """Chunked exhaustive k-NN search; ties broken by lowest row index."""

    chunk = 256

    def __init__(self, X):
        self.X = np.ascontiguousarray(X, dtype=np.float64)

    def query(self, Q, k):
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        m = Q.shape[0]
        out_i = np.empty((m, k), dtype=np.int64)
        out_d = np.empty((m, k))
        for a in range(0, m, self.chunk):
            d2 = sq_distances(self.X, Q[a:a + self.chunk])
            order = np.argsort(d2, axis=1, kind="stable")[:, :k]
            out_i[a:a + self.chunk] = order
            out_d[a:a + self.chunk] = np.take_along_axis(d2, order, axis=1)
        return out_i, out_d


def make_knn_index(X):
    return BruteForceIndex(X)
