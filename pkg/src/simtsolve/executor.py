"""Kernel launches over a grid of thread blocks, scheduled on worker threads.

Kernels are phase-structured: a kernel is an ordered list of per-thread
procedures, and every thread of a block finishes phase k before any thread
of that block starts phase k+1. The implicit barrier between phases is the
only synchronization primitive, which makes divergent-barrier bugs
unrepresentable.

Blocks are the unit of scheduling. They are drained from a shared queue by
`workers` pool threads; threads within a block run as a loop inside one
worker. For race-free kernels the result is identical for every worker
count and block order.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .device import F64, DeviceBuffer
from .errors import DataRaceError, LaunchConfigError

MAX_BLOCK_THREADS = 1024
DEFAULT_SHARED_LIMIT_BYTES = 48 * 1024
WORKERS_ENV_VAR = "SIMT_WORKERS"


@dataclass(frozen=True, slots=True)
class Dim3:
    """A 3-component extent or index. Extents are validated at launch."""

    x: int = 1
    y: int = 1
    z: int = 1

    @property
    def volume(self):
        return self.x * self.y * self.z

    @staticmethod
    def coerce(value):
        if isinstance(value, Dim3):
            return value
        if isinstance(value, int):
            return Dim3(value, 1, 1)
        return Dim3(*value)


@dataclass(frozen=True)
class LaunchConfig:
    """Geometry for one launch: grid of blocks, threads per block, shared scratch.

    `shared_elems` elements of `kind` are allocated per block, zeroed at
    block start and visible only to that block's threads.
    """

    grid: Dim3
    block: Dim3
    shared_elems: int = 0
    kind: object = F64

    def __post_init__(self):
        object.__setattr__(self, "grid", Dim3.coerce(self.grid))
        object.__setattr__(self, "block", Dim3.coerce(self.block))
        for name in ("grid", "block"):
            d = getattr(self, name)
            if d.x < 1 or d.y < 1 or d.z < 1:
                raise LaunchConfigError(f"{name} extents must be >= 1, got {d}")
        if self.block.volume > MAX_BLOCK_THREADS:
            raise LaunchConfigError(
                f"block of {self.block.volume} threads exceeds the {MAX_BLOCK_THREADS}-thread limit"
            )
        if self.shared_elems < 0:
            raise LaunchConfigError("shared_elems must be >= 0")

    @property
    def shared_bytes(self):
        return self.shared_elems * self.kind.itemsize

    # OpenCL vocabulary.
    @property
    def nd_range(self):
        return self.grid

    @property
    def work_group(self):
        return self.block


@dataclass(frozen=True, slots=True)
class ThreadCtx:
    """Identity of one logical thread inside a launch."""

    thread_idx: Dim3
    block_idx: Dim3
    block_dim: Dim3
    grid_dim: Dim3

    # OpenCL vocabulary.
    @property
    def work_item_idx(self):
        return self.thread_idx

    @property
    def work_group_idx(self):
        return self.block_idx

    @property
    def work_group_dim(self):
        return self.block_dim

    @property
    def nd_range_dim(self):
        return self.grid_dim


class Kernel:
    """A named, ordered list of per-thread phase procedures.

    Each phase is called as `phase(ctx, args, shared)` once per logical
    thread, where `args` is the launch argument tuple with device buffers
    resolved to their arrays and `shared` is the block's scratch array.
    """

    __slots__ = ("name", "phases")

    def __init__(self, name, phases):
        phases = tuple(phases)
        if not phases:
            raise ValueError("a kernel needs at least one phase")
        self.name = name
        self.phases = phases

    def __repr__(self):
        return f"Kernel({self.name!r}, {len(self.phases)} phases)"


def global_linear_id(ctx):
    """Row-major linearization of (block_idx, thread_idx) over the launch domain."""
    b = ctx.block_idx
    t = ctx.thread_idx
    gd = ctx.grid_dim
    bd = ctx.block_dim
    block_linear = (b.z * gd.y + b.y) * gd.x + b.x
    thread_linear = (t.z * bd.y + t.y) * bd.x + t.x
    return block_linear * bd.volume + thread_linear


def block_linear_id(ctx):
    """Row-major linearization of the block index alone."""
    b = ctx.block_idx
    gd = ctx.grid_dim
    return (b.z * gd.y + b.y) * gd.x + b.x


_thread_idx_cache = {}


def _thread_indices(block):
    key = (block.x, block.y, block.z)
    cached = _thread_idx_cache.get(key)
    if cached is None:
        cached = tuple(
            Dim3(tx, ty, tz)
            for tz in range(block.z)
            for ty in range(block.y)
            for tx in range(block.x)
        )
        _thread_idx_cache[key] = cached
    return cached


def _block_index(linear, grid):
    bx = linear % grid.x
    rest = linear // grid.x
    return Dim3(bx, rest % grid.y, rest // grid.y)


def _workers_from_env():
    raw = os.environ.get(WORKERS_ENV_VAR)
    if raw is None:
        return 1
    try:
        p = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV_VAR} must be a positive integer, got {raw!r}") from None
    if p < 1:
        raise ValueError(f"{WORKERS_ENV_VAR} must be >= 1, got {p}")
    return p


class Executor:
    """Owns the worker pool and runs launches; one launch at a time."""

    def __init__(self, workers=None, shared_limit_bytes=DEFAULT_SHARED_LIMIT_BYTES, race_check=False):
        if workers is None:
            workers = _workers_from_env()
        self.shared_limit_bytes = shared_limit_bytes
        self.race_check = race_check
        self._entry = threading.Lock()
        self._pool = None
        self._pool_size = 0
        self.set_worker_count(workers)

    @property
    def workers(self):
        return self._workers

    def set_worker_count(self, p):
        """Distribute subsequent launches across `p` workers; results do not depend on p."""
        if not isinstance(p, int) or p < 1:
            raise ValueError(f"worker count must be a positive integer, got {p!r}")
        self._workers = p

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None
            self._pool_size = 0

    def _ensure_pool(self):
        if self._pool is None or self._pool_size != self._workers:
            if self._pool is not None:
                self._pool.shutdown(wait=True)
            self._pool = ThreadPoolExecutor(max_workers=self._workers, thread_name_prefix="simt-worker")
            self._pool_size = self._workers
        return self._pool

    def launch(self, kernel, cfg, args=(), race_check=None):
        """Run `kernel` over cfg's launch domain; returns when all effects are visible.

        Every (block, thread) pair executes every phase in order; all
        threads of a block complete phase k before any runs phase k+1.
        """
        if callable(kernel) and not isinstance(kernel, Kernel):
            kernel = Kernel(getattr(kernel, "__name__", "kernel"), (kernel,))
        if cfg.shared_bytes > self.shared_limit_bytes:
            raise LaunchConfigError(
                f"{cfg.shared_bytes} bytes of shared scratch exceed the "
                f"{self.shared_limit_bytes}-byte per-block limit"
            )
        check = self.race_check if race_check is None else race_check
        with self._entry:
            resolved = tuple(
                a._device._backing(a) if isinstance(a, DeviceBuffer) else a for a in args
            )
            if check:
                self._run_checked(kernel, cfg, args, resolved)
            elif self._workers == 1:
                self._run_sequential(kernel, cfg, resolved)
            else:
                self._run_parallel(kernel, cfg, resolved)

    def _run_block(self, kernel, cfg, resolved, linear):
        block_idx = _block_index(linear, cfg.grid)
        shared = np.zeros(cfg.shared_elems, dtype=cfg.kind.dtype)
        threads = _thread_indices(cfg.block)
        for phase in kernel.phases:
            for tidx in threads:
                ctx = ThreadCtx(tidx, block_idx, cfg.block, cfg.grid)
                phase(ctx, resolved, shared)

    def _run_sequential(self, kernel, cfg, resolved):
        for linear in range(cfg.grid.volume):
            self._run_block(kernel, cfg, resolved, linear)

    def _run_parallel(self, kernel, cfg, resolved):
        pool = self._ensure_pool()
        futures = [
            pool.submit(self._run_block, kernel, cfg, resolved, linear)
            for linear in range(cfg.grid.volume)
        ]
        # Surface the first failure in block order, after all blocks settle.
        errors = []
        for f in futures:
            try:
                f.result()
            except Exception as exc:  # noqa: BLE001 - re-raised below
                errors.append(exc)
        if errors:
            raise errors[0]

    def _run_checked(self, kernel, cfg, args, resolved):
        # Debug path: sequential, phase-synchronized across blocks, with
        # instrumented buffers. Flags same-phase write/write and read/write
        # conflicts; shared scratch is checked per block, device buffers
        # across the whole launch.
        log = _AccessLog()
        tracked = tuple(
            _TrackedArray(arr, log, ("buf", orig.handle_id))
            if isinstance(orig, DeviceBuffer)
            else arr
            for orig, arr in zip(args, resolved)
        )
        nblocks = cfg.grid.volume
        shared_arrays = [
            _TrackedArray(np.zeros(cfg.shared_elems, dtype=cfg.kind.dtype), log, ("shared", b))
            for b in range(nblocks)
        ]
        threads = _thread_indices(cfg.block)
        for phase_no, phase in enumerate(kernel.phases):
            log.start_phase()
            for linear in range(nblocks):
                block_idx = _block_index(linear, cfg.grid)
                for tno, tidx in enumerate(threads):
                    log.current = (linear, tno)
                    ctx = ThreadCtx(tidx, block_idx, cfg.block, cfg.grid)
                    phase(ctx, tracked, shared_arrays[linear])
            log.check_phase(kernel.name, phase_no)


class _AccessLog:
    """Per-phase read/write sets for the debug race checker."""

    def __init__(self):
        self.current = None
        self.writes = {}
        self.reads = {}

    def start_phase(self):
        self.writes.clear()
        self.reads.clear()

    def record(self, table, key, indices):
        for i in indices:
            table.setdefault((key, int(i)), set()).add(self.current)

    def check_phase(self, kernel_name, phase_no):
        for loc, writers in self.writes.items():
            if len(writers) > 1:
                raise DataRaceError(
                    f"kernel {kernel_name!r} phase {phase_no}: location {loc} "
                    f"written by threads {sorted(writers)}"
                )
            (writer,) = writers
            readers = self.reads.get(loc, ())
            for reader in readers:
                if reader != writer:
                    raise DataRaceError(
                        f"kernel {kernel_name!r} phase {phase_no}: location {loc} "
                        f"written by thread {writer} and read by thread {reader}"
                    )


class _TrackedArray:
    """Array proxy that logs element-level reads and writes for the checker."""

    __slots__ = ("_data", "_log", "_key", "_index_map")

    def __init__(self, data, log, key, index_map=None):
        self._data = data
        self._log = log
        self._key = key
        if index_map is None:
            index_map = np.arange(data.size).reshape(data.shape)
        self._index_map = index_map

    def _flat(self, item):
        hit = self._index_map[item]
        if np.isscalar(hit) or hit.ndim == 0:
            return (int(hit),)
        return hit.ravel()

    def __getitem__(self, item):
        self._log.record(self._log.reads, self._key, self._flat(item))
        return self._data[item]

    def __setitem__(self, item, value):
        self._log.record(self._log.writes, self._key, self._flat(item))
        self._data[item] = value

    def reshape(self, *shape):
        return _TrackedArray(
            self._data.reshape(*shape), self._log, self._key, self._index_map.reshape(*shape)
        )

    def __len__(self):
        return len(self._data)

    @property
    def shape(self):
        return self._data.shape

    @property
    def dtype(self):
        return self._data.dtype


_default_executor = None
_default_exec_lock = threading.Lock()


def get_default_executor():
    """Process-wide default executor; worker count seeded from SIMT_WORKERS."""
    global _default_executor
    with _default_exec_lock:
        if _default_executor is None:
            _default_executor = Executor()
        return _default_executor


def set_worker_count(p):
    get_default_executor().set_worker_count(p)


def launch(kernel, cfg, args=(), executor=None, race_check=None):
    (executor or get_default_executor()).launch(kernel, cfg, args, race_check=race_check)


# OpenCL vocabulary.
enqueue_nd_range = launch
