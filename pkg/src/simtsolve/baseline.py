"""Plain sequential reference implementations for the benchmark harness.

Everything here runs single-threaded NumPy on the host: `seq_gemm` uses
einsum (no threaded BLAS), and the solvers use vectorized array arithmetic
with the same stopping rule as the simulator-backed solvers, so benchmark
rows compare like against like.
"""

from __future__ import annotations

import numpy as np

from .errors import BreakdownError
from .solvers import Method


def seq_gemm(alpha, a, b, beta, c):
    """c <- alpha * a @ b + beta * c on 2-D host arrays, single-threaded."""
    prod = np.einsum("ij,jk->ik", a, b)
    c[...] = alpha * prod + beta * c
    return c


class _SeqCsr:
    """Host CSR with a deterministic sequential matvec."""

    def __init__(self, A, dtype):
        self.n = A.n_rows
        self.row_ptr = A.row_ptr
        self.col_idx = A.col_idx
        self.vals = np.asarray(A.vals, dtype=dtype)
        self.rows = np.repeat(np.arange(A.n_rows), np.diff(A.row_ptr))
        self.dtype = dtype

    def matvec(self, x):
        y = np.zeros(self.n, dtype=self.dtype)
        np.add.at(y, self.rows, self.vals * x[self.col_idx])
        return y

    def diag(self):
        d = np.zeros(self.n, dtype=self.dtype)
        mask = self.rows == self.col_idx
        d[self.rows[mask]] = self.vals[mask]
        return d


def seq_solve(A, b, method, tol=1e-6, max_iter=None, restart_m=30, dtype=np.float64):
    """Sequential counterpart of `solvers.solve`; returns (x, iterations, converged)."""
    op = _SeqCsr(A, dtype)
    b = np.asarray(b, dtype=dtype)
    n = op.n
    max_iter = max_iter if max_iter is not None else max(1, 10 * n)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(n, dtype=dtype), 0, True

    def rel_res(x):
        return float(np.linalg.norm(b - op.matvec(x))) / norm_b

    if method is Method.JACOBI:
        d = op.diag()
        x = np.zeros(n, dtype=dtype)
        for it in range(1, max_iter + 1):
            x = (b - (op.matvec(x) - d * x)) / d
            if rel_res(x) <= tol:
                return x, it, True
        return x, max_iter, False

    if method is Method.GAUSS_SEIDEL:
        x = np.zeros(n, dtype=dtype)
        rp, ci, vv = op.row_ptr, op.col_idx, op.vals
        d = op.diag()
        for it in range(1, max_iter + 1):
            for i in range(n):
                s, e = rp[i], rp[i + 1]
                cols = ci[s:e]
                acc = vv[s:e] @ x[cols] - d[i] * x[i]
                x[i] = (b[i] - acc) / d[i]
            if rel_res(x) <= tol:
                return x, it, True
        return x, max_iter, False

    if method is Method.CG:
        x = np.zeros(n, dtype=dtype)
        r = b.copy()
        p = r.copy()
        rs = float(r @ r)
        for it in range(1, max_iter + 1):
            Ap = op.matvec(p)
            pAp = float(p @ Ap)
            if pAp <= 0:
                raise BreakdownError(f"p^T A p = {pAp:.3e} is not positive")
            alpha = rs / pAp
            x = x + alpha * p
            r = r - alpha * Ap
            if rel_res(x) <= tol:
                return x, it, True
            rs_new = float(r @ r)
            p = r + (rs_new / rs) * p
            rs = rs_new
        return x, max_iter, False

    if method is Method.BICGSTAB:
        x = np.zeros(n, dtype=dtype)
        r = b.copy()
        rhat = r.copy()
        p = r.copy()
        rho = float(rhat @ r)
        for it in range(1, max_iter + 1):
            v = op.matvec(p)
            alpha = rho / float(rhat @ v)
            s = r - alpha * v
            t = op.matvec(s)
            tt = float(t @ t)
            if tt == 0.0:
                x = x + alpha * p
                return x, it, rel_res(x) <= tol
            omega = float(t @ s) / tt
            x = x + alpha * p + omega * s
            r = s - omega * t
            if rel_res(x) <= tol:
                return x, it, True
            rho_new = float(rhat @ r)
            p = r + (rho_new / rho) * (alpha / omega) * (p - omega * v)
            rho = rho_new
        return x, max_iter, False

    if method is Method.GMRES:
        x = np.zeros(n, dtype=dtype)
        total = 0
        while total < max_iter:
            r = b - op.matvec(x)
            beta = float(np.linalg.norm(r))
            if beta / norm_b <= tol:
                return x, total, True
            m = restart_m
            V = [r / beta]
            H = np.zeros((m + 1, m))
            cs = np.zeros(m)
            sn = np.zeros(m)
            g = np.zeros(m + 1)
            g[0] = beta
            j = 0
            while j < m and total < max_iter:
                w = op.matvec(V[j])
                for i in range(j + 1):
                    H[i, j] = float(w @ V[i])
                    w = w - H[i, j] * V[i]
                H[j + 1, j] = float(np.linalg.norm(w))
                happy = H[j + 1, j] <= 10.0 * np.finfo(dtype).eps * norm_b
                if not happy:
                    V.append(w / H[j + 1, j])
                for i in range(j):
                    t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                    H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                    H[i, j] = t
                denom = float(np.hypot(H[j, j], H[j + 1, j]))
                cs[j], sn[j] = (1.0, 0.0) if denom == 0.0 else (H[j, j] / denom, H[j + 1, j] / denom)
                H[j, j] = denom
                H[j + 1, j] = 0.0
                g[j + 1] = -sn[j] * g[j]
                g[j] = cs[j] * g[j]
                total += 1
                j += 1
                y = _back_sub(H[:j, :j], g[:j])
                xk = x + np.asarray(V[:j]).T @ y
                if rel_res(xk.astype(dtype)) <= tol or happy:
                    return xk.astype(dtype), total, rel_res(xk.astype(dtype)) <= tol
            y = _back_sub(H[:j, :j], g[:j])
            x = (x + np.asarray(V[:j]).T @ y).astype(dtype)
        return x, total, False

    raise ValueError(f"unknown method {method!r}")


def _back_sub(R, g):
    m = g.shape[0]
    y = np.zeros(m)
    for i in reversed(range(m)):
        tail = R[i, i + 1 :] @ y[i + 1 :] if i + 1 < m else 0.0
        y[i] = 0.0 if R[i, i] == 0.0 else (g[i] - tail) / R[i, i]
    return y
