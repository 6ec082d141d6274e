# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; bit-compatible with ``_kernels_py``.

Built without -ffast-math and with -ffp-contract=off so that every
floating-point expression rounds exactly like the numpy reference.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport malloc, free
from libc.math cimport INFINITY

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double TAU = 1e-12
cdef double IMPURITY_RTOL = 1e-12
cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0
cdef double TWO_M52 = 1.0 / 4503599627370496.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct Stream:
    uint64_t key
    uint64_t counter


cdef inline uint64_t next_raw(Stream* st) noexcept nogil:
    st.counter += 1
    return mix64(st.key + st.counter * GOLDEN)


cdef inline double next_uniform(Stream* st) noexcept nogil:
    return <double>(next_raw(st) >> 11) * TWO_M53


cdef inline double next_open_uniform(Stream* st) noexcept nogil:
    return (<double>(next_raw(st) >> 12) + 0.5) * TWO_M52


cdef inline int64_t next_bounded(Stream* st, int64_t n) noexcept nogil:
    cdef int64_t i = <int64_t>(next_uniform(st) * <double>n)
    return i if i < n else n - 1


def fisher_yates(const int64_t[::1] js):
    cdef Py_ssize_t n = js.shape[0] + 1
    perm_arr = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] perm = perm_arr
    cdef Py_ssize_t i = n - 1, k
    cdef int64_t j, tmp
    with nogil:
        for k in range(n - 1):
            j = js[k]
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
            i -= 1
    return perm_arr


# ---------------------------------------------------------------------------
# regression trees


cdef void merge_sort(int64_t* a, int64_t* tmp, Py_ssize_t n,
                     const double[:, ::1] X, Py_ssize_t f) noexcept nogil:
    """Stable bottom-up merge sort of row ids ``a`` by ``X[row, f]``."""
    cdef Py_ssize_t width = 1, lo, mid, hi, i, j, k
    cdef int64_t* src = a
    cdef int64_t* dst = tmp
    cdef int64_t* sw
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid > n:
                mid = n
            hi = lo + 2 * width
            if hi > n:
                hi = n
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if X[src[i], f] <= X[src[j], f]:
                    dst[k] = src[i]
                    i += 1
                else:
                    dst[k] = src[j]
                    j += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < hi:
                dst[k] = src[j]
                j += 1
                k += 1
            lo = hi
        sw = src
        src = dst
        dst = sw
        width *= 2
    if src != a:
        for i in range(n):
            a[i] = src[i]


cdef int draw_features(Stream* st, int64_t* feats, Py_ssize_t n_features,
                       Py_ssize_t max_features) noexcept nogil:
    cdef Py_ssize_t i, j, a, b
    cdef int64_t tmp
    for i in range(n_features):
        feats[i] = i
    if max_features >= n_features:
        return <int>n_features
    for i in range(max_features):
        j = i + next_bounded(st, n_features - i)
        tmp = feats[i]
        feats[i] = feats[j]
        feats[j] = tmp
    # insertion sort of the first max_features entries
    for a in range(1, max_features):
        tmp = feats[a]
        b = a - 1
        while b >= 0 and feats[b] > tmp:
            feats[b + 1] = feats[b]
            b -= 1
        feats[b + 1] = tmp
    return <int>max_features


def build_tree(const double[:, ::1] X, const double[::1] y, const int64_t[::1] samples,
               int max_depth, int min_samples_split, int max_features, bint extra,
               uint64_t key):
    cdef Py_ssize_t n_total = samples.shape[0]
    cdef Py_ssize_t n_features = X.shape[1]
    cdef Py_ssize_t cap = 2 * n_total + 1
    feature_a = np.full(cap, -1, dtype=np.int64)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.int64)
    right_a = np.full(cap, -1, dtype=np.int64)
    value_a = np.zeros(cap, dtype=np.float64)
    nsamp_a = np.zeros(cap, dtype=np.int64)
    cdef int64_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int64_t[::1] left = left_a
    cdef int64_t[::1] right = right_a
    cdef double[::1] value = value_a
    cdef int64_t[::1] nsamp = nsamp_a

    cdef int64_t* idx = <int64_t*>malloc(n_total * sizeof(int64_t) + 8)
    cdef int64_t* buf = <int64_t*>malloc(n_total * sizeof(int64_t) + 8)
    cdef int64_t* order = <int64_t*>malloc(n_total * sizeof(int64_t) + 8)
    cdef double* yc = <double*>malloc(n_total * sizeof(double) + 8)
    cdef int64_t* feats = <int64_t*>malloc(n_features * sizeof(int64_t) + 8)
    # stack entries: start, end, depth, parent, is_left
    cdef int64_t* stack = <int64_t*>malloc(5 * cap * sizeof(int64_t) + 8)
    if not (idx and buf and order and yc and feats and stack):
        free(idx); free(buf); free(order); free(yc); free(feats); free(stack)
        raise MemoryError()

    cdef Stream st
    st.key = key
    st.counter = 0
    cdef Py_ssize_t sp = 0, node_count = 0, node, start, end, n, i, fi, nf
    cdef Py_ssize_t best_pos, n_left, p
    cdef int64_t depth, parent, is_left, f, best_f
    cdef double y0, acc, mean, s_c, sse, base, best, best_t, dec, s_left, s_right
    cdef double mn, mx, xv, u, t, ymin, ymax, a, b, nl_d

    with nogil:
        for i in range(n_total):
            idx[i] = samples[i]
        stack[0] = 0
        stack[1] = n_total
        stack[2] = 0
        stack[3] = -1
        stack[4] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            start = stack[5 * sp]
            end = stack[5 * sp + 1]
            depth = stack[5 * sp + 2]
            parent = stack[5 * sp + 3]
            is_left = stack[5 * sp + 4]
            node = node_count
            node_count += 1
            if parent >= 0:
                if is_left:
                    left[parent] = node
                else:
                    right[parent] = node
            n = end - start
            y0 = y[idx[start]]
            acc = 0.0
            ymin = y0
            ymax = y0
            for i in range(start, end):
                acc += y[idx[i]] - y0
                if y[idx[i]] < ymin:
                    ymin = y[idx[i]]
                if y[idx[i]] > ymax:
                    ymax = y[idx[i]]
            value[node] = y0 + acc / n
            nsamp[node] = n
            if n < min_samples_split or (max_depth >= 0 and depth >= max_depth):
                continue
            if ymax == ymin:
                continue

            acc = 0.0
            for i in range(start, end):
                acc += y[idx[i]]
            mean = acc / n
            s_c = 0.0
            sse = 0.0
            for i in range(n):
                yc[i] = y[idx[start + i]] - mean
                s_c += yc[i]
                sse += yc[i] * yc[i]
            base = s_c * s_c / n
            best = IMPURITY_RTOL * sse
            best_f = -1
            best_t = 0.0

            nf = draw_features(&st, feats, n_features, max_features)
            for fi in range(nf):
                f = feats[fi]
                if extra:
                    mn = X[idx[start], f]
                    mx = mn
                    for i in range(start, end):
                        xv = X[idx[i], f]
                        if xv < mn:
                            mn = xv
                        if xv > mx:
                            mx = xv
                    if not mn < mx:
                        continue
                    u = next_open_uniform(&st)
                    t = mn + u * (mx - mn)
                    if t >= mx:
                        t = mn
                    n_left = 0
                    s_left = 0.0
                    for i in range(n):
                        if X[idx[start + i], f] <= t:
                            n_left += 1
                            s_left += yc[i]
                    s_right = s_c - s_left
                    dec = s_left * s_left / <double>n_left + s_right * s_right / <double>(n - n_left) - base
                    if dec > best:
                        best = dec
                        best_f = f
                        best_t = t
                else:
                    # sort positions (0..n-1) within the node by feature value
                    for i in range(n):
                        order[i] = idx[start + i]
                    merge_sort(order, buf, n, X, f)
                    # recover centred targets in sorted order via a row->position map is
                    # unnecessary: recompute from y and the node mean (same arithmetic)
                    s_left = 0.0
                    best_pos = -1
                    for i in range(n - 1):
                        s_left += y[order[i]] - mean
                        a = X[order[i], f]
                        b = X[order[i + 1], f]
                        if a < b:
                            nl_d = <double>(i + 1)
                            s_right = s_c - s_left
                            dec = s_left * s_left / nl_d + s_right * s_right / (<double>n - nl_d) - base
                            if dec > best:
                                best = dec
                                best_pos = i
                    if best_pos >= 0:
                        best_f = f
                        a = X[order[best_pos], f]
                        b = X[order[best_pos + 1], f]
                        t = (a + b) / 2.0
                        if t == b:
                            t = a
                        best_t = t
            if best_f < 0:
                continue
            feature[node] = best_f
            threshold[node] = best_t
            # stable partition into buf
            n_left = 0
            for i in range(start, end):
                if X[idx[i], best_f] <= best_t:
                    buf[n_left] = idx[i]
                    n_left += 1
            p = n_left
            for i in range(start, end):
                if not X[idx[i], best_f] <= best_t:
                    buf[p] = idx[i]
                    p += 1
            for i in range(n):
                idx[start + i] = buf[i]
            # push right, then left so the left child is processed first
            stack[5 * sp] = start + n_left
            stack[5 * sp + 1] = end
            stack[5 * sp + 2] = depth + 1
            stack[5 * sp + 3] = node
            stack[5 * sp + 4] = 0
            sp += 1
            stack[5 * sp] = start
            stack[5 * sp + 1] = start + n_left
            stack[5 * sp + 2] = depth + 1
            stack[5 * sp + 3] = node
            stack[5 * sp + 4] = 1
            sp += 1

    free(idx); free(buf); free(order); free(yc); free(feats); free(stack)
    return (feature_a[:node_count].copy(), threshold_a[:node_count].copy(),
            left_a[:node_count].copy(), right_a[:node_count].copy(),
            value_a[:node_count].copy(), nsamp_a[:node_count].copy())


def predict_tree(const int64_t[::1] feature, const double[::1] threshold,
                 const int64_t[::1] left, const int64_t[::1] right,
                 const double[::1] value, const double[:, ::1] X):
    cdef Py_ssize_t m = X.shape[0], r
    cdef int64_t node
    out_a = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_a
    with nogil:
        for r in range(m):
            node = 0
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = value[node]
    return out_a


# ---------------------------------------------------------------------------
# epsilon-SVR dual


def smo(const double[:, ::1] K, const double[::1] y, double C, double epsilon,
        double tol, long long max_iter):
    cdef Py_ssize_t n = y.shape[0], n2 = 2 * n, t, i, j, ti
    alpha_a = np.zeros(n2, dtype=np.float64)
    G_a = np.empty(n2, dtype=np.float64)
    cdef double[::1] alpha = alpha_a
    cdef double[::1] G = G_a
    cdef long long n_iter = 0
    cdef bint converged = False
    cdef double g_max, g_max2, v, gd, quad, obj, obj_min, si, sj, st, kij
    cdef double ai, aj, gi, gj, q, delta, diff, total, d_ai, d_aj
    cdef bint is_up, is_low

    for t in range(n):
        G[t] = epsilon - y[t]
        G[t + n] = epsilon + y[t]

    with nogil:
        while True:
            g_max = -INFINITY
            g_max2 = -INFINITY
            i = -1
            for t in range(n2):
                if t < n:
                    v = -G[t]
                    is_up = alpha[t] < C
                    is_low = alpha[t] > 0
                else:
                    v = G[t]
                    is_up = alpha[t] > 0
                    is_low = alpha[t] < C
                if is_up and v > g_max:
                    g_max = v
                    i = t
                if is_low and -v > g_max2:
                    g_max2 = -v
            if i < 0 or g_max2 == -INFINITY:
                converged = True
                break
            if g_max + g_max2 <= tol:
                converged = True
                break
            ti = i % n
            j = -1
            obj_min = INFINITY
            for t in range(n2):
                if t < n:
                    v = -G[t]
                    is_low = alpha[t] > 0
                else:
                    v = G[t]
                    is_low = alpha[t] < C
                if not is_low:
                    continue
                gd = g_max - v
                if gd > 0:
                    quad = K[ti, ti] + K[t % n, t % n] - 2.0 * K[ti, t % n]
                    if not quad > 0:
                        quad = TAU
                    obj = -(gd * gd) / quad
                    if obj < obj_min:
                        obj_min = obj
                        j = t
            if j < 0:
                converged = True
                break
            if n_iter >= max_iter:
                break
            n_iter += 1

            kij = K[ti, j % n]
            ai = alpha[i]
            aj = alpha[j]
            gi = G[i]
            gj = G[j]
            q = K[ti, ti] + K[j % n, j % n] - 2.0 * kij
            if q <= 0:
                q = TAU
            si = 1.0 if i < n else -1.0
            sj = 1.0 if j < n else -1.0
            if si != sj:
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
            d_ai = ai - alpha[i]
            d_aj = aj - alpha[j]
            alpha[i] = ai
            alpha[j] = aj
            for t in range(n2):
                st = 1.0 if t < n else -1.0
                G[t] += (st * si) * K[ti, t % n] * d_ai + (st * sj) * K[j % n, t % n] * d_aj
    return alpha_a, G_a, n_iter, converged


# ---------------------------------------------------------------------------
# nearest neighbours: kd-tree with exact (distance, row) ordering


cdef inline bint pair_less(double da, int64_t ia, double db, int64_t ib) noexcept nogil:
    return da < db or (da == db and ia < ib)


cdef void heap_push_replace(double* hd, int64_t* hi, Py_ssize_t size, Py_ssize_t k,
                            double d, int64_t r) noexcept nogil:
    """Max-heap of (distance, row); insert when not full, else replace the top."""
    cdef Py_ssize_t pos, parent, c, c2, big
    if size < k:
        pos = size
        while pos > 0:
            parent = (pos - 1) // 2
            if pair_less(hd[parent], hi[parent], d, r):
                hd[pos] = hd[parent]
                hi[pos] = hi[parent]
                pos = parent
            else:
                break
        hd[pos] = d
        hi[pos] = r
        return
    pos = 0
    while True:
        c = 2 * pos + 1
        if c >= k:
            break
        c2 = c + 1
        big = c
        if c2 < k and pair_less(hd[c], hi[c], hd[c2], hi[c2]):
            big = c2
        if pair_less(d, r, hd[big], hi[big]):
            hd[pos] = hd[big]
            hi[pos] = hi[big]
            pos = big
        else:
            break
    hd[pos] = d
    hi[pos] = r


cdef class KDTreeIndex:
    """Exact k-NN over a fixed point set; leaves hold up to ``leaf_size`` rows."""

    cdef double[:, ::1] X
    cdef int64_t[::1] perm
    cdef int64_t[::1] node_lo, node_hi, node_left, node_right, node_dim
    cdef double[::1] node_split
    cdef Py_ssize_t n_nodes, leaf_size
    cdef object _keep

    def __init__(self, X, Py_ssize_t leaf_size=16):
        Xc = np.ascontiguousarray(X, dtype=np.float64)
        self._keep = Xc
        self.X = Xc
        self.leaf_size = leaf_size
        cdef Py_ssize_t n = Xc.shape[0]
        cdef Py_ssize_t cap = 2 * (n // max(leaf_size, 1) + 1) * 2 + 8
        self.perm = np.arange(n, dtype=np.int64)
        self.node_lo = np.zeros(cap, dtype=np.int64)
        self.node_hi = np.zeros(cap, dtype=np.int64)
        self.node_left = np.full(cap, -1, dtype=np.int64)
        self.node_right = np.full(cap, -1, dtype=np.int64)
        self.node_dim = np.full(cap, -1, dtype=np.int64)
        self.node_split = np.zeros(cap, dtype=np.float64)
        self.n_nodes = 0
        tmp = np.empty(max(n, 1), dtype=np.int64)
        cdef int64_t[::1] tmpv = tmp
        if n > 0:
            self._build(0, n, &tmpv[0])

    cdef Py_ssize_t _build(self, Py_ssize_t lo, Py_ssize_t hi, int64_t* tmp) except -1:
        cdef Py_ssize_t node = self.n_nodes
        cdef Py_ssize_t f, i, best_dim = 0, mid
        cdef double mn, mx, spread, best_spread = -1.0, xv
        self.n_nodes += 1
        self.node_lo[node] = lo
        self.node_hi[node] = hi
        if hi - lo <= self.leaf_size:
            return node
        for f in range(self.X.shape[1]):
            mn = self.X[self.perm[lo], f]
            mx = mn
            for i in range(lo, hi):
                xv = self.X[self.perm[i], f]
                if xv < mn:
                    mn = xv
                if xv > mx:
                    mx = xv
            spread = mx - mn
            if spread > best_spread:
                best_spread = spread
                best_dim = f
        if not best_spread > 0:
            return node
        merge_sort(&self.perm[lo], tmp, hi - lo, self.X, best_dim)
        mid = lo + (hi - lo) // 2
        self.node_dim[node] = best_dim
        self.node_split[node] = self.X[self.perm[mid], best_dim]
        self.node_left[node] = self._build(lo, mid, tmp)
        self.node_right[node] = self._build(mid, hi, tmp)
        return node

    cdef void _search(self, Py_ssize_t node, const double[:, ::1] Q, Py_ssize_t q,
                      Py_ssize_t k, double* hd, int64_t* hi, Py_ssize_t* size) noexcept nogil:
        cdef Py_ssize_t i, f, dim, near, far
        cdef int64_t r
        cdef double d, diff, bound
        if self.node_dim[node] < 0:
            for i in range(self.node_lo[node], self.node_hi[node]):
                r = self.perm[i]
                d = 0.0
                for f in range(self.X.shape[1]):
                    diff = Q[q, f] - self.X[r, f]
                    d += diff * diff
                if size[0] < k:
                    heap_push_replace(hd, hi, size[0], k, d, r)
                    size[0] += 1
                elif pair_less(d, r, hd[0], hi[0]):
                    heap_push_replace(hd, hi, k, k, d, r)
            return
        dim = self.node_dim[node]
        diff = Q[q, dim] - self.node_split[node]
        if diff < 0:
            near = self.node_left[node]
            far = self.node_right[node]
        else:
            near = self.node_right[node]
            far = self.node_left[node]
        self._search(near, Q, q, k, hd, hi, size)
        bound = diff * diff
        if size[0] < k or not bound > hd[0]:
            self._search(far, Q, q, k, hd, hi, size)

    def query(self, Q, Py_ssize_t k):
        Qc = np.ascontiguousarray(Q, dtype=np.float64)
        cdef const double[:, ::1] Qv = Qc
        cdef Py_ssize_t m = Qc.shape[0], q, a, b, size
        out_i_a = np.empty((m, k), dtype=np.int64)
        out_d_a = np.empty((m, k), dtype=np.float64)
        cdef int64_t[:, ::1] out_i = out_i_a
        cdef double[:, ::1] out_d = out_d_a
        cdef double* hd = <double*>malloc(k * sizeof(double) + 8)
        cdef int64_t* hi = <int64_t*>malloc(k * sizeof(int64_t) + 8)
        cdef double td
        cdef int64_t ti
        if not (hd and hi):
            free(hd); free(hi)
            raise MemoryError()
        with nogil:
            for q in range(m):
                size = 0
                if self.n_nodes > 0:
                    self._search(0, Qv, q, k, hd, hi, &size)
                # heap -> ascending (distance, row) by repeated extraction
                b = size
                while b > 0:
                    b -= 1
                    out_d[q, b] = hd[0]
                    out_i[q, b] = hi[0]
                    td = hd[b]
                    ti = hi[b]
                    if b > 0:
                        heap_push_replace(hd, hi, b, b, td, ti)
        free(hd); free(hi)
        return out_i_a, out_d_a


def make_knn_index(X):
    return KDTreeIndex(X)
