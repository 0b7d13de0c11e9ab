"""Iterative linear solvers executed through an explicit host/device flow.

Every solve walks the same eight steps: allocate host memory, initialize it,
allocate device memory, copy operands in, pick the launch geometry, run the
iteration kernels, copy the result back, and free device memory. Each step's
wall time is recorded in the report under `FLOW_STEPS`.

The iteration arithmetic runs on the simulated device in the configured
precision. After every update the true relative residual ||b - A x_k|| / ||b||
is recomputed with the same deterministic kernels and appended to the
report's history, so the reported numbers always describe the returned
iterate rather than a recurrence estimate.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .device import (
    F32,
    F64,
    DeviceBuffer,
    HostBuffer,
    copy_device_to_host,
    copy_host_to_device,
    device_alloc,
    device_free,
    get_default_device,
)
from .errors import BreakdownError, DiagonalError, LengthMismatchError
from .executor import Dim3, Kernel, LaunchConfig, get_default_executor
from .kernels import (
    DEFAULT_BLOCK_SIZE,
    CsrMatrix,
    k_axpy,
    k_csr_spmv,
    k_dot,
    k_jacobi_sweep,
    k_nrm2,
    next_pow2,
)

FLOW_STEPS = (
    "host_alloc",
    "host_init",
    "device_alloc",
    "copy_in",
    "grid_layout",
    "kernel_exec",
    "copy_back",
    "cleanup",
)

# Division guards for the Krylov recurrences, per element kind.
BREAKDOWN_EPS = {"f64": 1e-30, "f32": 1e-20}


class Method(enum.Enum):
    JACOBI = "jacobi"
    GAUSS_SEIDEL = "gauss-seidel"
    CG = "cg"
    GMRES = "gmres"
    BICGSTAB = "bicgstab"

    @staticmethod
    def from_string(name):
        for m in Method:
            if m.value == name.lower():
                return m
        raise ValueError(f"unknown method {name!r}; expected one of {[m.value for m in Method]}")


@dataclass
class SolverConfig:
    method: Method
    tol: float = 1e-6
    max_iter: int | None = None  # defaults to 10*n at solve time
    restart_m: int = 30
    kind: object = F64

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.restart_m < 1:
            raise ValueError(f"restart_m must be >= 1, got {self.restart_m}")


@dataclass
class SolverReport:
    converged: bool
    iterations: int
    residual_history: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def final_residual(self):
        return self.residual_history[-1]


class _StepTimer:
    def __init__(self):
        self.timings = {step: 0.0 for step in FLOW_STEPS}

    def step(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self._t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] += time.perf_counter() - self._t0
                return False

        return _Ctx()


class _DeviceOps:
    """Device-side vector operations bound to one solve's geometry."""

    def __init__(self, device, executor, kind, n, block_size=DEFAULT_BLOCK_SIZE):
        self.device = device
        self.executor = executor
        self.kind = kind
        self.n = n
        self.block_size = block_size
        self.owned = []

    def alloc(self, n=None):
        buf = device_alloc(self.n if n is None else n, self.kind, self.device)
        self.owned.append(buf)
        return buf

    def free(self, buf):
        device_free(buf)

    def axpy(self, a, x, y):
        k_axpy(a, x, y, block_size=self.block_size, executor=self.executor)

    def dot(self, x, y):
        return k_dot(x, y, block_size=self.block_size, executor=self.executor)

    def nrm2(self, x):
        return k_nrm2(x, block_size=self.block_size, executor=self.executor)

    def spmv(self, A, x, out=None):
        return k_csr_spmv(A, x, out=out, block_size=self.block_size, executor=self.executor)

    def copy_of(self, x):
        out = self.alloc(x.length)
        self.axpy(1.0, x, out)
        return out

    def scaled(self, a, x):
        out = self.alloc(x.length)
        self.axpy(a, x, out)
        return out

    def cleanup(self):
        for buf in self.owned:
            if not buf.freed:
                device_free(buf)


class _Monitor:
    """Recomputes the true relative residual of an iterate on the device."""

    def __init__(self, ops, A_dev, b_dev, norm_b):
        self.ops = ops
        self.A = A_dev
        self.b = b_dev
        self.norm_b = norm_b
        self.scratch = ops.alloc()

    def __call__(self, x):
        ops = self.ops
        ops.spmv(self.A, x, out=self.scratch)
        r = ops.copy_of(self.b)
        ops.axpy(-1.0, self.scratch, r)
        value = ops.nrm2(r) / self.norm_b
        ops.free(r)
        return value


def solve(A, b, cfg, device=None, executor=None):
    """Solve A x = b with the configured iterative method.

    Parameters
    ----------
    A : CsrMatrix
        Square system matrix with host-resident values; `solve` copies the
        values into device memory itself.
    b : array-like
        Right-hand side of length A.n_rows.
    cfg : SolverConfig
        Method, tolerance on ||b - A x|| / ||b||, iteration cap, restart
        length (GMRES) and element kind.

    Returns
    -------
    x : numpy.ndarray
        Final iterate, copied back to host memory.
    report : SolverReport
        Convergence flag, iteration count, per-iteration true relative
        residuals, and per-step wall times keyed by FLOW_STEPS.

    Non-convergence at max_iter is reported, not raised; breakdowns and
    invalid inputs raise.
    """
    if A.n_rows != A.n_cols:
        raise LengthMismatchError(f"system matrix must be square, got {A.n_rows}x{A.n_cols}")
    if isinstance(A.vals, DeviceBuffer):
        raise ValueError("solve expects a host-resident matrix; it manages device copies itself")
    n = A.n_rows
    kind = cfg.kind
    max_iter = cfg.max_iter if cfg.max_iter is not None else max(1, 10 * n)
    if cfg.method is Method.CG and not _structurally_symmetric(A):
        raise ValueError("CG needs a structurally symmetric matrix pattern")
    if cfg.method in (Method.JACOBI, Method.GAUSS_SEIDEL):
        A.diag_positions()  # raises DiagonalError on a missing diagonal

    device = device or get_default_device()
    executor = executor or get_default_executor()
    timer = _StepTimer()

    with timer.step("host_alloc"):
        b_host = HostBuffer.zeros(n, kind)
        x_host = HostBuffer.zeros(n, kind)
        vals_host = HostBuffer.zeros(A.nnz, kind)

    with timer.step("host_init"):
        b_arr = b.data if isinstance(b, HostBuffer) else np.asarray(b, dtype=kind.dtype)
        if b_arr.shape[0] != n:
            raise LengthMismatchError(f"b has length {b_arr.shape[0]}, expected {n}")
        np.copyto(b_host.data, b_arr)
        np.copyto(vals_host.data, np.asarray(A.vals, dtype=kind.dtype))

    ops = _DeviceOps(device, executor, kind, n)

    with timer.step("device_alloc"):
        vals_dev = ops.alloc(A.nnz)
        b_dev = ops.alloc()
        x_dev = ops.alloc()

    with timer.step("copy_in"):
        copy_host_to_device(vals_host, vals_dev)
        copy_host_to_device(b_host, b_dev)
        A_dev = CsrMatrix(A.n_rows, A.n_cols, A.row_ptr, A.col_idx, vals_dev)

    with timer.step("grid_layout"):
        ops.block_size = min(DEFAULT_BLOCK_SIZE, next_pow2(max(n, 1)))

    try:
        with timer.step("kernel_exec"):
            norm_b = ops.nrm2(b_dev)
            if norm_b == 0.0:
                x_final, converged, iterations, history = x_dev, True, 0, [0.0]
            else:
                loop = _LOOPS[cfg.method]
                x_final, converged, iterations, history = loop(
                    ops, A_dev, b_dev, x_dev, norm_b, cfg.tol, max_iter, cfg
                )

        with timer.step("copy_back"):
            copy_device_to_host(x_final, x_host)
    finally:
        with timer.step("cleanup"):
            ops.cleanup()

    report = SolverReport(converged, iterations, history, timer.timings)
    return x_host.data.copy(), report


def _jacobi_loop(ops, A, b, x, norm_b, tol, max_iter, cfg):
    monitor = _Monitor(ops, A, b, norm_b)
    x_alt = ops.alloc()
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        k_jacobi_sweep(A, b, x, out=x_alt, block_size=ops.block_size, executor=ops.executor)
        x, x_alt = x_alt, x
        res = monitor(x)
        history.append(res)
        if res <= tol:
            converged = True
            break
    return x, converged, it, history


def _gauss_seidel_loop(ops, A, b, x, norm_b, tol, max_iter, cfg):
    # The forward sweep is inherently sequential in natural ordering, so it
    # runs as one launch of n single-row phases on a one-thread block:
    # deterministic row order, updated values visible to later rows.
    dpos = A.diag_positions()
    vals = A.vals._device._backing(A.vals) if isinstance(A.vals, DeviceBuffer) else A.vals
    zero_rows = np.nonzero(vals[dpos] == 0)[0]
    if zero_rows.size:
        raise DiagonalError(int(zero_rows[0]))

    zero = ops.kind.dtype.type(0)

    def make_row(i):
        def row(ctx, args, shared):
            rp, ci, vv, dp, bb, xv = args
            acc = zero
            for k in range(rp[i], rp[i + 1]):
                c = ci[k]
                if c != i:
                    acc = acc + vv[k] * xv[c]
            xv[i] = (bb[i] - acc) / vv[dp[i]]

        return row

    sweep = Kernel("gauss_seidel_sweep", [make_row(i) for i in range(A.n_rows)])
    cfg1 = LaunchConfig(grid=Dim3(1), block=Dim3(1), kind=ops.kind)
    args = (A.row_ptr, A.col_idx, A.vals, dpos, b, x)

    monitor = _Monitor(ops, A, b, norm_b)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        ops.executor.launch(sweep, cfg1, args)
        res = monitor(x)
        history.append(res)
        if res <= tol:
            converged = True
            break
    return x, converged, it, history


def _cg_loop(ops, A, b, x, norm_b, tol, max_iter, cfg):
    eps = BREAKDOWN_EPS[ops.kind.name]
    monitor = _Monitor(ops, A, b, norm_b)
    r = ops.copy_of(b)
    p = ops.copy_of(r)
    Ap = ops.alloc()
    rs = ops.dot(r, r)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        ops.spmv(A, p, out=Ap)
        pAp = ops.dot(p, Ap)
        if not (pAp > eps):
            raise BreakdownError(f"p^T A p = {pAp:.3e} is not positive; the operator is not SPD")
        alpha = rs / pAp
        ops.axpy(alpha, p, x)
        ops.axpy(-alpha, Ap, r)
        res = monitor(x)
        history.append(res)
        if res <= tol:
            converged = True
            break
        rs_new = ops.dot(r, r)
        beta = rs_new / rs
        p_new = ops.scaled(beta, p)
        ops.axpy(1.0, r, p_new)
        ops.free(p)
        p = p_new
        rs = rs_new
    return x, converged, it, history


def _gmres_loop(ops, A, b, x, norm_b, tol, max_iter, cfg):
    m = cfg.restart_m
    happy_eps = 10.0 * np.finfo(ops.kind.dtype).eps
    monitor = _Monitor(ops, A, b, norm_b)
    history = []
    total = 0
    converged = False

    while total < max_iter and not converged:
        # r = b - A x, start-of-cycle residual
        r = ops.copy_of(b)
        Ax = ops.spmv(A, x)
        ops.axpy(-1.0, Ax, r)
        ops.free(Ax)
        beta = ops.nrm2(r)
        if beta / norm_b <= tol:
            ops.free(r)
            converged = True
            break
        basis = [ops.scaled(1.0 / beta, r)]
        ops.free(r)
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta

        j = 0
        while j < m and total < max_iter:
            w = ops.spmv(A, basis[j])
            for i in range(j + 1):  # modified Gram-Schmidt
                hij = ops.dot(w, basis[i])
                H[i, j] = hij
                ops.axpy(-hij, basis[i], w)
            hnext = ops.nrm2(w)
            H[j + 1, j] = hnext
            happy = hnext <= happy_eps * norm_b
            if not happy:
                basis.append(ops.scaled(1.0 / hnext, w))
            ops.free(w)

            for i in range(j):  # apply earlier Givens rotations to the new column
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = float(np.hypot(H[j, j], H[j + 1, j]))
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            total += 1
            j += 1

            y = _back_substitute(H[:j, :j], g[:j])
            candidate = ops.copy_of(x)
            for i in range(j):
                ops.axpy(y[i], basis[i], candidate)
            res = monitor(candidate)
            history.append(res)
            if res <= tol or happy or total >= max_iter or j == m:
                ops.free(x)
                x = candidate
                if res <= tol:
                    converged = True
                if res <= tol or happy:
                    break
            else:
                ops.free(candidate)
        for v in basis:
            ops.free(v)
    return x, converged, total, history


def _bicgstab_loop(ops, A, b, x, norm_b, tol, max_iter, cfg):
    eps = BREAKDOWN_EPS[ops.kind.name]
    monitor = _Monitor(ops, A, b, norm_b)
    r = ops.copy_of(b)
    rhat = ops.copy_of(r)
    p = ops.copy_of(r)
    v = ops.alloc()
    t = ops.alloc()
    rho = ops.dot(rhat, r)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        ops.spmv(A, p, out=v)
        rv = ops.dot(rhat, v)
        if abs(rv) < eps:
            raise BreakdownError(f"shadow-residual projection rhat.(A p) = {rv:.3e} vanished")
        alpha = rho / rv
        s = ops.copy_of(r)
        ops.axpy(-alpha, v, s)
        ops.spmv(A, s, out=t)
        tt = ops.dot(t, t)
        if tt == 0.0:
            # s solved the system exactly; finish with the half step
            ops.axpy(alpha, p, x)
            history.append(monitor(x))
            ops.free(s)
            converged = history[-1] <= tol
            break
        omega = ops.dot(t, s) / tt
        if abs(omega) < eps:
            raise BreakdownError(f"stabilization weight omega = {omega:.3e} vanished")
        ops.axpy(alpha, p, x)
        ops.axpy(omega, s, x)
        ops.axpy(-omega, t, s)  # s becomes the new residual
        ops.free(r)
        r = s
        res = monitor(x)
        history.append(res)
        if res <= tol:
            converged = True
            break
        rho_new = ops.dot(rhat, r)
        if abs(rho_new) < eps:
            raise BreakdownError(f"rho = rhat.r = {rho_new:.3e} vanished")
        beta = (rho_new / rho) * (alpha / omega)
        p_new = ops.scaled(beta, p)
        ops.axpy(-beta * omega, v, p_new)
        ops.axpy(1.0, r, p_new)
        ops.free(p)
        p = p_new
        rho = rho_new
    return x, converged, it, history


_LOOPS = {
    Method.JACOBI: _jacobi_loop,
    Method.GAUSS_SEIDEL: _gauss_seidel_loop,
    Method.CG: _cg_loop,
    Method.GMRES: _gmres_loop,
    Method.BICGSTAB: _bicgstab_loop,
}


def _back_substitute(R, g):
    m = g.shape[0]
    y = np.zeros(m)
    for i in reversed(range(m)):
        tail = R[i, i + 1 :] @ y[i + 1 :] if i + 1 < m else 0.0
        y[i] = 0.0 if R[i, i] == 0.0 else (g[i] - tail) / R[i, i]
    return y


def _structurally_symmetric(A):
    rows = np.repeat(np.arange(A.n_rows), np.diff(A.row_ptr))
    cols = A.col_idx
    order = np.lexsort((rows, cols))
    return np.array_equal(rows, cols[order]) and np.array_equal(cols, rows[order])


def jacobi_iterate(A, b, cfg=None, device=None, executor=None):
    return solve(A, b, _with_method(cfg, Method.JACOBI), device, executor)


def gauss_seidel_iterate(A, b, cfg=None, device=None, executor=None):
    return solve(A, b, _with_method(cfg, Method.GAUSS_SEIDEL), device, executor)


def cg_iterate(A, b, cfg=None, device=None, executor=None):
    return solve(A, b, _with_method(cfg, Method.CG), device, executor)


def gmres_iterate(A, b, cfg=None, device=None, executor=None):
    return solve(A, b, _with_method(cfg, Method.GMRES), device, executor)


def bicgstab_iterate(A, b, cfg=None, device=None, executor=None):
    return solve(A, b, _with_method(cfg, Method.BICGSTAB), device, executor)


def _with_method(cfg, method):
    if cfg is None:
        return SolverConfig(method=method)
    return replace(cfg, method=method)
