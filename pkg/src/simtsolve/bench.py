"""Parallel-scaling benchmark harness with CSV output.

Each benchmarked configuration is timed over the device-side portion of the
flow only: copy-in, kernel execution, copy-back. Host allocation and
initialization are excluded; the solver rows take the three step timings
straight from the solver report, so either accounting can be reconstructed.

The CSV carries one row per (method, worker count), plus one row with
workers=0 holding the plain sequential reference implementation (no
simulator involved). The speedup column is T(workers=1) / T(row) for every
row, so the workers=1 row is exactly 1.0 and the workers=0 row reports how
much faster the plain host implementation is than the single-worker
simulator.
"""

from __future__ import annotations

import csv
import platform
import statistics
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import baseline
from .device import F64, HostBuffer, copy_device_to_host, copy_host_to_device, device_alloc, device_free, get_default_device
from .executor import get_default_executor
from .kernels import DenseMatrix, k_gemm
from .solvers import SolverConfig, solve

CSV_COLUMNS = ("workload", "method", "n", "kind", "workers", "wall_seconds", "speedup")


@dataclass
class BenchRecord:
    workload: str
    method: str
    n: int
    kind: str
    workers: int  # 0 marks the sequential reference row
    wall_seconds: float
    speedup: float

    def row(self):
        return (
            self.workload,
            self.method,
            str(self.n),
            self.kind,
            str(self.workers),
            repr(self.wall_seconds),
            repr(self.speedup),
        )


@dataclass
class GemmWorkload:
    """C = A @ B on n x n random matrices."""

    n: int
    kind: object = F64
    seed: int = 42

    @property
    def workload_id(self):
        return f"gemm-{self.n}"

    @property
    def methods(self):
        return ("gemm",)

    def _data(self):
        rng = np.random.default_rng(self.seed)
        a = rng.standard_normal((self.n, self.n)).astype(self.kind.dtype)
        b = rng.standard_normal((self.n, self.n)).astype(self.kind.dtype)
        return a, b

    def run_sim(self, method, executor, device):
        a, b = self._data()
        ha = HostBuffer(a.reshape(-1), self.kind)
        hb = HostBuffer(b.reshape(-1), self.kind)
        hc = HostBuffer.zeros(self.n * self.n, self.kind)
        da = device_alloc(ha.length, self.kind, device)
        db = device_alloc(hb.length, self.kind, device)
        dc = device_alloc(hc.length, self.kind, device)
        try:
            t0 = time.perf_counter()
            copy_host_to_device(ha, da)
            copy_host_to_device(hb, db)
            A = DenseMatrix(self.n, self.n, da)
            B = DenseMatrix(self.n, self.n, db)
            k_gemm(1.0, A, B, 0.0, dc, executor=executor)
            copy_device_to_host(dc, hc)
            return time.perf_counter() - t0
        finally:
            device_free(da)
            device_free(db)
            device_free(dc)

    def run_reference(self, method):
        a, b = self._data()
        c = np.zeros((self.n, self.n), dtype=self.kind.dtype)
        t0 = time.perf_counter()
        baseline.seq_gemm(1.0, a, b, 0.0, c)
        return time.perf_counter() - t0


@dataclass
class SolveWorkload:
    """Iterative solve of A x = b with a seeded random right-hand side."""

    A: object
    workload_id: str
    kind: object = F64
    seed: int = 42
    tol: float = 1e-6
    max_iter: int | None = None
    restart_m: int = 30

    def _rhs(self):
        rng = np.random.default_rng(self.seed)
        return rng.standard_normal(self.A.n_rows)

    def run_sim(self, method, executor, device):
        cfg = SolverConfig(
            method=method,
            tol=self.tol,
            max_iter=self.max_iter,
            restart_m=self.restart_m,
            kind=self.kind,
        )
        _, report = solve(self.A, self._rhs(), cfg, device=device, executor=executor)
        t = report.timings
        return t["copy_in"] + t["kernel_exec"] + t["copy_back"]

    def run_reference(self, method):
        b = self._rhs()
        t0 = time.perf_counter()
        baseline.seq_solve(
            self.A,
            b,
            method,
            tol=self.tol,
            max_iter=self.max_iter,
            restart_m=self.restart_m,
            dtype=self.kind.dtype,
        )
        return time.perf_counter() - t0


def run_bench(workload, methods=None, workers=(1,), reps=3, out=None, err=None, executor=None, device=None):
    """Time `workload` at each worker count, write CSV rows, return the records."""
    if not workers:
        raise ValueError("workers list must be non-empty")
    if reps < 1:
        raise ValueError(f"repetitions must be >= 1, got {reps}")
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    executor = executor or get_default_executor()
    device = device or get_default_device()
    method_list = methods if methods is not None else list(getattr(workload, "methods", ("gemm",)))

    print(
        f"# host: {platform.platform()} | cpu: {platform.processor() or 'unknown'} "
        f"| logical cores: {_cpu_count()} | python {platform.python_version()} | reps: {reps}",
        file=err,
    )

    counts = sorted(set(int(p) for p in workers) | {1})
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    records = []
    for method in method_list:
        method_name = method if isinstance(method, str) else method.value
        ref_wall = statistics.median(workload.run_reference(method) for _ in range(reps))
        walls = {}
        for p in counts:
            executor.set_worker_count(p)
            walls[p] = statistics.median(
                workload.run_sim(method, executor, device) for _ in range(reps)
            )
        base = walls[1]
        rows = [
            BenchRecord(workload.workload_id, method_name, _workload_n(workload), workload.kind.name, 0, ref_wall, base / ref_wall)
        ]
        rows.extend(
            BenchRecord(workload.workload_id, method_name, _workload_n(workload), workload.kind.name, p, walls[p], base / walls[p])
            for p in counts
        )
        for rec in rows:
            writer.writerow(rec.row())
            records.append(rec)
    return records


def _workload_n(workload):
    return workload.n if hasattr(workload, "n") else workload.A.n_rows


def _cpu_count():
    import os

    return os.cpu_count() or 1
