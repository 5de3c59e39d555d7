# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: BLAS-backed forward, gradient, and fused SGD epochs.

Shares its contract with ``pykernel``: activation ids 0 (relu, derivative 0
at 0) and 1 (leaky relu, derivative = slope at 0), loss ids 0 (cross-entropy
on logits) and 1 (half squared error).  All arrays are C-contiguous float64.
"""

from libc.math cimport exp, log
from libc.stdlib cimport free, malloc
from libc.string cimport memset

from scipy.linalg.cython_blas cimport dgemm

import numpy as np

NAME = "compiled"


# Row-major GEMM wrappers.  BLAS is column-major, so compute C^T = op(B)^T
# op(A)^T on the same buffers.

cdef void _gemm_nn(double* c, double* a, double* b,
                   int m, int n, int k, double beta) noexcept nogil:
    # C[m,n] = A[m,k] @ B[k,n] + beta*C
    cdef double alpha = 1.0
    if m == 0 or n == 0:
        return
    if k == 0:
        if beta == 0.0:
            memset(c, 0, <size_t>m * <size_t>n * sizeof(double))
        return
    dgemm(b"N", b"N", &n, &m, &k, &alpha, b, &n, a, &k, &beta, c, &n)


cdef void _gemm_tn(double* c, double* a, double* b,
                   int m, int n, int k, double beta) noexcept nogil:
    # C[m,n] = A[k,m]^T @ B[k,n] + beta*C
    cdef double alpha = 1.0
    if m == 0 or n == 0:
        return
    if k == 0:
        if beta == 0.0:
            memset(c, 0, <size_t>m * <size_t>n * sizeof(double))
        return
    dgemm(b"N", b"T", &n, &m, &k, &alpha, b, &n, a, &m, &beta, c, &n)


cdef void _gemm_nt(double* c, double* a, double* b,
                   int m, int n, int k, double beta) noexcept nogil:
    # C[m,n] = A[m,k] @ B[n,k]^T + beta*C
    cdef double alpha = 1.0
    if m == 0 or n == 0:
        return
    if k == 0:
        if beta == 0.0:
            memset(c, 0, <size_t>m * <size_t>n * sizeof(double))
        return
    dgemm(b"T", b"N", &n, &m, &k, &alpha, b, &k, a, &k, &beta, c, &n)


cdef void _gather(double* dst, double* src, long long* order,
                  int start, int rows, int cols) noexcept nogil:
    cdef int i, j
    cdef long long r
    for i in range(rows):
        r = order[start + i]
        for j in range(cols):
            dst[i * cols + j] = src[r * cols + j]


cdef void _bias_act(double* z, double* bias, int rows, int n,
                    int act, double slope) noexcept nogil:
    cdef int i, j
    cdef double v
    for i in range(rows):
        for j in range(n):
            v = z[i * n + j] + bias[j]
            if v <= 0.0:
                v = 0.0 if act == 0 else slope * v
            z[i * n + j] = v


cdef void _loss_delta(double* z, double* y, double* d, int rows, int n,
                      int loss, double inv_rows) noexcept nogil:
    cdef int i, j
    cdef double m, s
    if loss == 1:
        for i in range(rows * n):
            d[i] = (z[i] - y[i]) * inv_rows
        return
    for i in range(rows):
        m = z[i * n]
        for j in range(1, n):
            if z[i * n + j] > m:
                m = z[i * n + j]
        s = 0.0
        for j in range(n):
            d[i * n + j] = exp(z[i * n + j] - m)
            s += d[i * n + j]
        for j in range(n):
            d[i * n + j] = (d[i * n + j] / s - y[i * n + j]) * inv_rows


cdef void _act_backward(double* d, double* a, int rows, int n,
                        int act, double slope) noexcept nogil:
    cdef int i
    for i in range(rows * n):
        if a[i] <= 0.0:
            d[i] = 0.0 if act == 0 else d[i] * slope


cdef void _colsum(double* src, double* out, int rows, int n) noexcept nogil:
    cdef int i, j
    for j in range(n):
        out[j] = 0.0
    for i in range(rows):
        for j in range(n):
            out[j] += src[i * n + j]


cdef void _sgd_step(double* w, double* vw, double* g, long long count,
                    double lr, double mom) noexcept nogil:
    cdef long long i
    for i in range(count):
        vw[i] = mom * vw[i] - lr * g[i]
        w[i] += vw[i]


cdef class _Net:
    """Pointer tables over the per-layer arrays plus batch scratch buffers.

    With ``own_input`` the layer-0 activation is a scratch buffer (for
    gathered batches); otherwise it aliases the caller's input rows.  Delta
    buffers exist only when ``need_deltas`` (backward passes).
    """

    cdef int depth, max_rows
    cdef int* dims            # widths, length depth+1
    cdef double** w
    cdef double** b
    cdef double** a           # activations per layer, rows x dims[l]
    cdef double** d           # deltas per layer (index 1..depth)
    cdef list _keep           # owns the numpy buffers backing the pointers

    def __cinit__(self, list ws, list bs, x, int max_rows,
                  bint own_input, bint need_deltas):
        cdef int depth = len(ws)
        cdef int l
        self.depth = depth
        self.max_rows = max_rows
        self.dims = <int*>malloc((depth + 1) * sizeof(int))
        self.w = <double**>malloc(depth * sizeof(double*))
        self.b = <double**>malloc(depth * sizeof(double*))
        self.a = <double**>malloc((depth + 1) * sizeof(double*))
        self.d = <double**>malloc((depth + 1) * sizeof(double*))
        self._keep = []
        self.dims[0] = x.shape[1]
        for l in range(depth):
            self.dims[l + 1] = ws[l].shape[1]
        for l in range(depth):
            self.w[l] = self._ptr2(ws[l])
            self.b[l] = self._ptr1(bs[l]) if l < depth - 1 else NULL
        if own_input:
            self.a[0] = self._scratch(max_rows, self.dims[0])
        else:
            self.a[0] = self._ptr2(x)
        for l in range(1, depth + 1):
            self.a[l] = self._scratch(max_rows, self.dims[l])
            self.d[l] = self._scratch(max_rows, self.dims[l]) if need_deltas else NULL
        self.d[0] = NULL

    cdef double* _scratch(self, int rows, int cols):
        buf = np.empty((rows if rows > 0 else 1, cols if cols > 0 else 1))
        return self._ptr2(buf)

    cdef double* _ptr2(self, arr):
        cdef double[:, ::1] mv = arr
        self._keep.append(mv)
        if mv.shape[0] > 0 and mv.shape[1] > 0:
            return &mv[0, 0]
        return NULL

    cdef double* _ptr1(self, arr):
        cdef double[::1] mv = arr
        self._keep.append(mv)
        if mv.shape[0] > 0:
            return &mv[0]
        return NULL

    cdef void fwd(self, int rows, int act, double slope) noexcept nogil:
        # a[0] holds the input rows already
        cdef int l
        for l in range(self.depth - 1):
            _gemm_nn(self.a[l + 1], self.a[l], self.w[l],
                     rows, self.dims[l + 1], self.dims[l], 0.0)
            _bias_act(self.a[l + 1], self.b[l], rows, self.dims[l + 1], act, slope)
        l = self.depth - 1
        _gemm_nn(self.a[l + 1], self.a[l], self.w[l],
                 rows, self.dims[l + 1], self.dims[l], 0.0)

    cdef void bwd(self, int rows, int act, double slope, int loss,
                  double** gw, double** gb, double* y) noexcept nogil:
        # fills gw[0..depth-1], gb[0..depth-2]; assumes fwd() ran for rows
        cdef int l, top = self.depth
        _loss_delta(self.a[top], y, self.d[top], rows, self.dims[top],
                    loss, 1.0 / rows)
        _gemm_tn(gw[top - 1], self.a[top - 1], self.d[top],
                 self.dims[top - 1], self.dims[top], rows, 0.0)
        for l in range(top - 2, -1, -1):
            _gemm_nt(self.d[l + 1], self.d[l + 2], self.w[l + 1],
                     rows, self.dims[l + 1], self.dims[l + 2], 0.0)
            _act_backward(self.d[l + 1], self.a[l + 1], rows,
                          self.dims[l + 1], act, slope)
            _gemm_tn(gw[l], self.a[l], self.d[l + 1],
                     self.dims[l], self.dims[l + 1], rows, 0.0)
            _colsum(self.d[l + 1], gb[l], rows, self.dims[l + 1])

    def __dealloc__(self):
        free(self.dims)
        free(self.w)
        free(self.b)
        free(self.a)
        free(self.d)


cdef double** _ptr_table(list arrays, list keep) except NULL:
    cdef int n = len(arrays)
    cdef double** table = <double**>malloc(n * sizeof(double*))
    cdef double[:, ::1] mv2
    cdef double[::1] mv1
    cdef int i
    for i in range(n):
        arr = arrays[i]
        if arr.ndim == 2:
            mv2 = arr
            keep.append(mv2)
            if arr.size > 0:
                table[i] = &mv2[0, 0]
            else:
                table[i] = NULL
        else:
            mv1 = arr
            keep.append(mv1)
            if arr.size > 0:
                table[i] = &mv1[0]
            else:
                table[i] = NULL
    return table


def forward_logits(list ws, list bs, x, int act, double slope):
    """Network output rows for input rows x."""
    cdef int n = x.shape[0]
    cdef _Net net = _Net(ws, bs, x, n, False, False)
    out = np.empty((n, ws[len(ws) - 1].shape[1]))
    cdef double[:, ::1] ov = out
    cdef int i, j, ocols = net.dims[net.depth]
    with nogil:
        net.fwd(n, act, slope)
        for i in range(n):
            for j in range(ocols):
                ov[i, j] = net.a[net.depth][i * ocols + j]
    return out


def grad_full(list ws, list bs, x, y, int act, double slope, int loss):
    """Gradient of the mean loss over the given rows; returns (gws, gbs)."""
    cdef int n = x.shape[0]
    cdef int depth = len(ws)
    cdef _Net net = _Net(ws, bs, x, n, False, True)
    gws = [np.empty_like(w) for w in ws]
    gbs = [np.empty_like(b) for b in bs]
    cdef list keep = []
    cdef double** gw = _ptr_table(gws, keep)
    cdef double** gb = _ptr_table(gbs, keep) if gbs else NULL
    cdef double[:, ::1] yv = y
    cdef double* yp = &yv[0, 0]
    try:
        with nogil:
            net.fwd(n, act, slope)
            net.bwd(n, act, slope, loss, gw, gb, yp)
    finally:
        free(gw)
        if gb != NULL:
            free(gb)
    return gws, gbs


def run_epoch(list ws, list bs, list vws, list vbs, x, y, order,
              int batch, double lr, double mom, int act, double slope,
              int loss):
    """One in-place SGD pass over x/y in the given order (see pykernel)."""
    cdef int n = x.shape[0]
    cdef int depth = len(ws)
    cdef _Net net = _Net(ws, bs, x, min(batch, n), True, True)
    gws = [np.empty_like(w) for w in ws]
    gbs = [np.empty_like(b) for b in bs]
    yb = np.empty((min(batch, n), y.shape[1]))
    cdef list keep = []
    cdef double** gw = _ptr_table(gws, keep)
    cdef double** gb = _ptr_table(gbs, keep) if gbs else NULL
    cdef double** wp = _ptr_table(ws, keep)
    cdef double** bp = _ptr_table(bs, keep) if bs else NULL
    cdef double** vwp = _ptr_table(vws, keep)
    cdef double** vbp = _ptr_table(vbs, keep) if vbs else NULL
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] yv = y
    cdef double[:, ::1] ybv = yb
    cdef long long[::1] orderv = np.ascontiguousarray(order, dtype=np.int64)
    cdef int start, rows, l
    cdef long long wcount
    try:
        with nogil:
            start = 0
            while start < n:
                rows = batch if start + batch <= n else n - start
                _gather(net.a[0], &xv[0, 0], &orderv[0], start, rows, net.dims[0])
                _gather(&ybv[0, 0], &yv[0, 0], &orderv[0], start, rows,
                        net.dims[depth])
                net.fwd(rows, act, slope)
                net.bwd(rows, act, slope, loss, gw, gb, &ybv[0, 0])
                for l in range(depth):
                    wcount = <long long>net.dims[l] * net.dims[l + 1]
                    if wcount > 0:
                        _sgd_step(wp[l], vwp[l], gw[l], wcount, lr, mom)
                for l in range(depth - 1):
                    if net.dims[l + 1] > 0:
                        _sgd_step(bp[l], vbp[l], gb[l], net.dims[l + 1], lr, mom)
                start += batch
    finally:
        free(gw)
        if gb != NULL:
            free(gb)
        free(wp)
        if bp != NULL:
            free(bp)
        free(vwp)
        if vbp != NULL:
            free(vbp)
