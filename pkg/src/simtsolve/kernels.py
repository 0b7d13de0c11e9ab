"""Data-parallel numerical primitives written as phase-structured kernels.

Every kernel here matches a plain sequential evaluation of its formula:
bit-identically for the non-reducing ones (axpy, spmv, gemm per-tile), and
to reassociation tolerance for the reductions (dot, nrm2), whose per-block
partials are combined on the host in ascending block order so the result
never depends on the worker count.

Matrix operands (`DenseMatrix`, `CsrMatrix`) may carry their values either
as a host array, treated as read-only kernel constants, or as a
`DeviceBuffer` placed there by `to_device`. Sparse index structure stays
host-side: the two device element kinds are floating point.
"""

from __future__ import annotations

import math

import numpy as np

from .device import F64, DeviceBuffer, HostBuffer, copy_host_to_device, device_alloc, device_free
from .errors import DiagonalError, KindMismatchError, LengthMismatchError
from .executor import Dim3, Kernel, LaunchConfig, get_default_executor, global_linear_id

DEFAULT_BLOCK_SIZE = 256


def next_pow2(n):
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


class DenseMatrix:
    """Row-major dense matrix; data lives on the host or in device memory."""

    __slots__ = ("rows", "cols", "data", "kind")

    def __init__(self, rows, cols, data, kind=None):
        self.rows = rows
        self.cols = cols
        if isinstance(data, DeviceBuffer):
            kind = data.kind
            length = data.length
        else:
            if kind is None:
                kind = _kind_of(data)
            data = np.ascontiguousarray(data, dtype=kind.dtype).reshape(-1)
            length = data.shape[0]
        if length != rows * cols:
            raise LengthMismatchError(f"data length {length} != rows*cols = {rows * cols}")
        self.data = data
        self.kind = kind

    @classmethod
    def from_array(cls, arr, kind=F64):
        arr = np.asarray(arr)
        return cls(arr.shape[0], arr.shape[1], arr.reshape(-1), kind)

    def to_device(self, device=None):
        """Copy the values into a fresh device buffer; the caller owns the buffer."""
        buf = device_alloc(self.rows * self.cols, self.kind, device)
        copy_host_to_device(HostBuffer(self.data, self.kind), buf)
        return DenseMatrix(self.rows, self.cols, buf)

    def read_back(self):
        """Return the contents as a host (rows, cols) array."""
        if isinstance(self.data, DeviceBuffer):
            host = HostBuffer.zeros(self.data.length, self.kind)
            self.data._device.memcpy_dtoh(self.data, host)
            return host.data.reshape(self.rows, self.cols)
        return self.data.reshape(self.rows, self.cols).copy()


class CsrMatrix:
    """Compressed sparse row matrix with strictly increasing columns per row."""

    __slots__ = ("n_rows", "n_cols", "row_ptr", "col_idx", "vals", "kind")

    def __init__(self, n_rows, n_cols, row_ptr, col_idx, vals, kind=None):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
        if isinstance(vals, DeviceBuffer):
            self.kind = vals.kind
            nvals = vals.length
            self.vals = vals
        else:
            self.kind = kind or _kind_of(vals)
            self.vals = np.ascontiguousarray(vals, dtype=self.kind.dtype).reshape(-1)
            nvals = self.vals.shape[0]
        self._validate(nvals)

    def _validate(self, nvals):
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape[0] != self.n_rows + 1:
            raise ValueError(f"row_ptr length {rp.shape[0]} != n_rows+1 = {self.n_rows + 1}")
        if rp[0] != 0:
            raise ValueError("row_ptr[0] must be 0")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if rp[-1] != ci.shape[0] or ci.shape[0] != nvals:
            raise ValueError("row_ptr[-1], col_idx and vals lengths disagree")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("col_idx out of range")
        # strictly increasing columns within each row
        inner = np.diff(ci)
        row_starts = rp[1:-1]
        keep = np.ones(inner.shape[0], dtype=bool)
        keep[row_starts[(row_starts > 0) & (row_starts < ci.shape[0])] - 1] = False
        if np.any(inner[keep] <= 0):
            raise ValueError("col_idx must be strictly increasing within each row")

    @property
    def nnz(self):
        return int(self.row_ptr[-1])

    @classmethod
    def identity(cls, n, kind=F64):
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n, dtype=kind.dtype), kind)

    @classmethod
    def from_dense(cls, arr, kind=F64, tol=0.0):
        arr = np.asarray(arr, dtype=kind.dtype)
        n_rows, n_cols = arr.shape
        row_ptr = [0]
        col_idx = []
        vals = []
        for i in range(n_rows):
            nz = np.nonzero(np.abs(arr[i]) > tol)[0]
            col_idx.extend(nz.tolist())
            vals.extend(arr[i, nz].tolist())
            row_ptr.append(len(col_idx))
        return cls(n_rows, n_cols, row_ptr, col_idx, np.asarray(vals, dtype=kind.dtype), kind)

    def to_dense(self):
        if isinstance(self.vals, DeviceBuffer):
            raise ValueError("to_dense needs host-resident values")
        out = np.zeros((self.n_rows, self.n_cols), dtype=self.kind.dtype)
        for i in range(self.n_rows):
            s, e = self.row_ptr[i], self.row_ptr[i + 1]
            out[i, self.col_idx[s:e]] = self.vals[s:e]
        return out

    def to_device(self, device=None):
        """Copy the values into device memory; index structure is shared, read-only."""
        if isinstance(self.vals, DeviceBuffer):
            raise ValueError("values already live on the device")
        buf = device_alloc(self.vals.shape[0], self.kind, device)
        copy_host_to_device(HostBuffer(self.vals, self.kind), buf)
        return CsrMatrix(self.n_rows, self.n_cols, self.row_ptr, self.col_idx, buf)

    def diag_positions(self):
        """Index into vals of each row's diagonal entry; raises if one is missing."""
        pos = np.empty(self.n_rows, dtype=np.int64)
        for i in range(self.n_rows):
            s, e = int(self.row_ptr[i]), int(self.row_ptr[i + 1])
            j = int(np.searchsorted(self.col_idx[s:e], i))
            if j >= e - s or self.col_idx[s + j] != i:
                raise DiagonalError(i, f"missing diagonal entry in row {i}")
            pos[i] = s + j
        return pos

    def __repr__(self):
        return f"CsrMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz}, kind={self.kind.name})"


def _kind_of(data):
    from .device import F32

    return F32 if np.asarray(data).dtype == np.float32 else F64


def _resolve_vals(vals):
    return vals if isinstance(vals, DeviceBuffer) else np.asarray(vals)


def _check_vectors(*bufs):
    first = bufs[0]
    for b in bufs[1:]:
        if b.kind is not first.kind:
            raise KindMismatchError(f"kind mismatch: {first.kind.name} vs {b.kind.name}")
        if b.length != first.length:
            raise LengthMismatchError(f"length mismatch: {first.length} vs {b.length}")


def _cfg_1d(n, kind, block_size, shared_elems=0):
    blocks = max(1, -(-n // block_size))
    return LaunchConfig(grid=Dim3(blocks), block=Dim3(block_size), shared_elems=shared_elems, kind=kind)


def k_axpy(alpha, x, y, block_size=DEFAULT_BLOCK_SIZE, executor=None):
    """y <- alpha*x + y, one element per logical thread."""
    _check_vectors(x, y)
    n = x.length
    if n == 0:
        return
    a = x.kind.dtype.type(alpha)

    def phase(ctx, args, shared):
        a, xv, yv, n = args
        i = global_linear_id(ctx)
        if i < n:
            yv[i] = a * xv[i] + yv[i]

    (executor or get_default_executor()).launch(
        Kernel("axpy", (phase,)), _cfg_1d(n, x.kind, block_size), (a, x, y, n)
    )


def k_dot(x, y, block_size=DEFAULT_BLOCK_SIZE, executor=None):
    """Dot product via per-block shared-memory tree reduction.

    Block partials are combined on the host in ascending block order, so the
    value depends only on the launch geometry, never on the worker count.
    """
    _check_vectors(x, y)
    n = x.length
    if n == 0:
        return 0.0
    if block_size & (block_size - 1):
        raise ValueError(f"block_size must be a power of two, got {block_size}")
    device = x._device
    nblocks = max(1, -(-n // block_size))
    partials = device_alloc(nblocks, x.kind, device)

    def load(ctx, args, shared):
        xv, yv, _, n = args
        i = global_linear_id(ctx)
        if i < n:
            shared[ctx.thread_idx.x] = xv[i] * yv[i]

    def make_fold(stride):
        def fold(ctx, args, shared):
            t = ctx.thread_idx.x
            if t < stride:
                shared[t] += shared[t + stride]

        return fold

    def store(ctx, args, shared):
        _, _, out, _ = args
        if ctx.thread_idx.x == 0:
            b = ctx.block_idx
            gd = ctx.grid_dim
            out[(b.z * gd.y + b.y) * gd.x + b.x] = shared[0]

    strides = []
    s = block_size // 2
    while s >= 1:
        strides.append(s)
        s //= 2
    phases = [load] + [make_fold(s) for s in strides] + [store]
    cfg = _cfg_1d(n, x.kind, block_size, shared_elems=block_size)
    (executor or get_default_executor()).launch(Kernel("dot", phases), cfg, (x, y, partials, n))

    host = HostBuffer.zeros(nblocks, x.kind)
    device.memcpy_dtoh(partials, host)
    device_free(partials)
    acc = x.kind.dtype.type(0)
    for v in host.data:
        acc = acc + v
    return float(acc)


def k_nrm2(x, block_size=DEFAULT_BLOCK_SIZE, executor=None):
    """Euclidean norm, sqrt of the deterministic dot reduction."""
    return math.sqrt(k_dot(x, x, block_size=block_size, executor=executor))


def k_csr_spmv(A, x, out=None, block_size=DEFAULT_BLOCK_SIZE, executor=None):
    """y = A x for CSR A, one row per logical thread, sequential per-row sums."""
    if A.n_cols != x.length:
        raise LengthMismatchError(f"matrix has {A.n_cols} columns but x has {x.length}")
    if A.kind is not x.kind:
        raise KindMismatchError(f"kind mismatch: {A.kind.name} vs {x.kind.name}")
    n = A.n_rows
    if out is None:
        out = device_alloc(n, A.kind, x._device)
    elif out.length != n or out.kind is not A.kind:
        raise LengthMismatchError(f"out must be length {n} of kind {A.kind.name}")
    if n == 0:
        return out
    zero = A.kind.dtype.type(0)

    def phase(ctx, args, shared):
        rp, ci, vv, xv, yv, n, zero = args
        r = global_linear_id(ctx)
        if r < n:
            acc = zero
            for k in range(rp[r], rp[r + 1]):
                acc = acc + vv[k] * xv[ci[k]]
            yv[r] = acc

    args = (A.row_ptr, A.col_idx, _resolve_vals(A.vals), x, out, n, zero)
    (executor or get_default_executor()).launch(
        Kernel("csr_spmv", (phase,)), _cfg_1d(n, A.kind, block_size), args
    )
    return out


def k_gemm(alpha, A, B, beta, C, tile=64, executor=None):
    """C <- alpha*A@B + beta*C with one output tile per logical thread.

    The per-tile product runs as a single fused multiply-sum over the full
    inner dimension, so integer-valued inputs at small sizes are exact.
    """
    if A.cols != B.rows:
        raise LengthMismatchError(f"inner dimensions disagree: {A.cols} vs {B.rows}")
    if A.kind is not B.kind or A.kind is not C.kind:
        raise KindMismatchError("gemm operands must share one element kind")
    m, kk, n = A.rows, A.cols, B.cols
    if C.length != m * n:
        raise LengthMismatchError(f"C has {C.length} elements, expected {m * n}")
    if m == 0 or n == 0:
        return
    al = A.kind.dtype.type(alpha)
    be = A.kind.dtype.type(beta)

    def phase(ctx, args, shared):
        al, be, av, bv, cv, m, kk, n, tile = args
        i0 = ctx.block_idx.y * tile
        j0 = ctx.block_idx.x * tile
        i1 = min(i0 + tile, m)
        j1 = min(j0 + tile, n)
        A2 = av.reshape(m, kk)
        B2 = bv.reshape(kk, n)
        C2 = cv.reshape(m, n)
        prod = np.einsum("ij,jk->ik", A2[i0:i1, :], B2[:, j0:j1])
        C2[i0:i1, j0:j1] = al * prod + be * C2[i0:i1, j0:j1]

    grid = Dim3(-(-n // tile), -(-m // tile), 1)
    cfg = LaunchConfig(grid=grid, block=Dim3(1, 1, 1), kind=A.kind)
    args = (al, be, _resolve_vals(A.data), _resolve_vals(B.data), C, m, kk, n, tile)
    (executor or get_default_executor()).launch(Kernel("gemm", (phase,)), cfg, args)


def k_jacobi_sweep(A, b, x_old, out=None, block_size=DEFAULT_BLOCK_SIZE, executor=None):
    """One Jacobi update x_new[i] = (b[i] - sum_{j!=i} A[i,j] x_old[j]) / A[i,i]."""
    if A.n_rows != A.n_cols:
        raise LengthMismatchError(f"Jacobi needs a square matrix, got {A.n_rows}x{A.n_cols}")
    _check_vectors(b, x_old)
    if A.n_cols != b.length:
        raise LengthMismatchError(f"matrix is {A.n_rows}x{A.n_cols} but b has {b.length}")
    if A.kind is not b.kind:
        raise KindMismatchError(f"kind mismatch: {A.kind.name} vs {b.kind.name}")
    dpos = A.diag_positions()
    vals = _resolve_vals(A.vals)
    diag_vals = (vals._device._backing(vals) if isinstance(vals, DeviceBuffer) else vals)[dpos]
    zero_rows = np.nonzero(diag_vals == 0)[0]
    if zero_rows.size:
        raise DiagonalError(int(zero_rows[0]))
    n = A.n_rows
    if out is None:
        out = device_alloc(n, A.kind, b._device)
    elif out.length != n or out.kind is not A.kind:
        raise LengthMismatchError(f"out must be length {n} of kind {A.kind.name}")
    zero = A.kind.dtype.type(0)

    def phase(ctx, args, shared):
        rp, ci, vv, dp, bb, xo, xn, n, zero = args
        r = global_linear_id(ctx)
        if r < n:
            acc = zero
            for k in range(rp[r], rp[r + 1]):
                c = ci[k]
                if c != r:
                    acc = acc + vv[k] * xo[c]
            xn[r] = (bb[r] - acc) / vv[dp[r]]

    args = (A.row_ptr, A.col_idx, vals, dpos, b, x_old, out, n, zero)
    (executor or get_default_executor()).launch(
        Kernel("jacobi_sweep", (phase,)), _cfg_1d(n, A.kind, block_size), args
    )
    return out
