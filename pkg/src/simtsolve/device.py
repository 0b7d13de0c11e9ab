"""Simulated device memory space with explicit host/device transfers.

Host and device keep separate memory. Device contents are reachable from
host code only through the copy operations below; the backing arrays are
private to the device object and handed out solely to the kernel executor.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import CapacityError, KindMismatchError, LengthMismatchError, UseAfterFreeError

DEFAULT_CAPACITY_BYTES = 1 << 30  # 1 GiB


class ElemKind:
    """Element kind of a buffer: IEEE-754 binary32 or binary64."""

    __slots__ = ("name", "dtype", "itemsize")

    def __init__(self, name, dtype):
        self.name = name
        self.dtype = np.dtype(dtype)
        self.itemsize = int(self.dtype.itemsize)

    def __repr__(self):
        return f"ElemKind({self.name})"

    @staticmethod
    def from_string(name):
        try:
            return _KINDS[name.lower()]
        except KeyError:
            raise ValueError(f"unknown element kind {name!r}; expected one of {sorted(_KINDS)}") from None


F32 = ElemKind("f32", np.float32)
F64 = ElemKind("f64", np.float64)
_KINDS = {"f32": F32, "f64": F64}


class HostBuffer:
    """A typed slab of host memory (a plain contiguous numpy array)."""

    __slots__ = ("data", "kind")

    def __init__(self, data, kind=None):
        if kind is None:
            dt = np.asarray(data).dtype
            if dt == np.float32:
                kind = F32
            else:
                kind = F64
        self.kind = kind
        self.data = np.ascontiguousarray(data, dtype=kind.dtype).reshape(-1)

    @classmethod
    def zeros(cls, length, kind=F64):
        return cls(np.zeros(length, dtype=kind.dtype), kind)

    @classmethod
    def from_values(cls, values, kind=F64):
        return cls(np.asarray(values, dtype=kind.dtype), kind)

    @property
    def length(self):
        return self.data.shape[0]

    def __len__(self):
        return self.length

    def __repr__(self):
        return f"HostBuffer(len={self.length}, kind={self.kind.name})"


class DeviceBuffer:
    """Opaque handle to a device allocation; carries no host-visible data."""

    __slots__ = ("handle_id", "length", "kind", "freed", "_device")

    def __init__(self, handle_id, length, kind, device):
        self.handle_id = handle_id
        self.length = length
        self.kind = kind
        self.freed = False
        self._device = device

    @property
    def nbytes(self):
        return self.length * self.kind.itemsize

    def __repr__(self):
        state = "freed" if self.freed else "live"
        return f"DeviceBuffer(id={self.handle_id}, len={self.length}, kind={self.kind.name}, {state})"


class Device:
    """One simulated device memory space with a fixed byte capacity.

    Buffer-table mutations (alloc/free) are serialized by a lock; copies on
    distinct live buffers may run concurrently. Fresh allocations are
    zero-initialized so results never depend on stale memory.
    """

    def __init__(self, capacity_bytes=DEFAULT_CAPACITY_BYTES):
        self.capacity_bytes = capacity_bytes
        self._lock = threading.Lock()
        self._arrays = {}
        self._next_id = 0
        self._used = 0

    @property
    def used_bytes(self):
        return self._used

    def alloc(self, length, kind=F64):
        """Allocate a zero-initialized device buffer of `length` elements."""
        if length < 0:
            raise ValueError(f"allocation length must be >= 0, got {length}")
        nbytes = length * kind.itemsize
        with self._lock:
            if self._used + nbytes > self.capacity_bytes:
                raise CapacityError(
                    f"device allocation of {nbytes} bytes exceeds capacity: "
                    f"{self._used} used of {self.capacity_bytes}"
                )
            handle = self._next_id
            self._next_id += 1
            self._arrays[handle] = np.zeros(length, dtype=kind.dtype)
            self._used += nbytes
        return DeviceBuffer(handle, length, kind, self)

    def free(self, buf):
        """Release a buffer. Freeing twice (or a foreign buffer) raises."""
        with self._lock:
            if buf.freed or buf.handle_id not in self._arrays:
                raise UseAfterFreeError(f"free of dead buffer {buf!r}")
            del self._arrays[buf.handle_id]
            self._used -= buf.nbytes
            buf.freed = True

    def memcpy_htod(self, src, dst):
        """Copy a HostBuffer into a live DeviceBuffer, by value."""
        dst_arr = self._backing(dst)
        _check_pair(src, dst)
        np.copyto(dst_arr, src.data)

    def memcpy_dtoh(self, src, dst):
        """Copy a live DeviceBuffer into a HostBuffer, by value."""
        src_arr = self._backing(src)
        _check_pair(dst, src)
        np.copyto(dst.data, src_arr)

    def _backing(self, buf):
        # Internal: only the executor and kernel layer may touch device arrays.
        with self._lock:
            arr = self._arrays.get(buf.handle_id)
        if buf.freed or arr is None:
            raise UseAfterFreeError(f"access to dead buffer {buf!r}")
        return arr

    # OpenCL-style vocabulary, pure aliases of the operations above.
    create_buffer = alloc
    release_buffer = free
    enqueue_write_buffer = memcpy_htod
    enqueue_read_buffer = memcpy_dtoh


def _check_pair(host, dev):
    if host.kind is not dev.kind:
        raise KindMismatchError(f"kind mismatch: host {host.kind.name} vs device {dev.kind.name}")
    if host.length != dev.length:
        raise LengthMismatchError(f"length mismatch: host {host.length} vs device {dev.length}")


_default_device = None
_default_lock = threading.Lock()


def get_default_device():
    """Process-wide default device, created lazily with the 1 GiB capacity."""
    global _default_device
    with _default_lock:
        if _default_device is None:
            _default_device = Device()
        return _default_device


def device_alloc(length, kind=F64, device=None):
    return (device or get_default_device()).alloc(length, kind)


def device_free(buf):
    buf._device.free(buf)


def copy_host_to_device(src, dst):
    dst._device.memcpy_htod(src, dst)


def copy_device_to_host(src, dst):
    src._device.memcpy_dtoh(src, dst)


# OpenCL column of the terminology table, module-level aliases.
create_buffer = device_alloc
release_buffer = device_free
enqueue_write_buffer = copy_host_to_device
enqueue_read_buffer = copy_device_to_host
