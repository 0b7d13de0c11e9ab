"""Test-problem generation and Matrix Market ingestion."""

from __future__ import annotations

import numpy as np

from .device import F64
from .kernels import CsrMatrix


class MatrixMarketError(ValueError):
    """The file violates the coordinate-format contract."""


def gen_poisson(k, kind=F64):
    """5-point Laplacian on a k-by-k grid: the k^2 x k^2 SPD stencil matrix.

    Diagonal entries are 4, grid-neighbor entries are -1. Columns come out
    sorted because neighbors are emitted in ascending order.
    """
    if k < 1:
        raise ValueError(f"grid side must be >= 1, got {k}")
    n = k * k
    row_ptr = [0]
    col_idx = []
    vals = []
    for i in range(k):
        for j in range(k):
            r = i * k + j
            if i > 0:
                col_idx.append(r - k)
                vals.append(-1.0)
            if j > 0:
                col_idx.append(r - 1)
                vals.append(-1.0)
            col_idx.append(r)
            vals.append(4.0)
            if j < k - 1:
                col_idx.append(r + 1)
                vals.append(-1.0)
            if i < k - 1:
                col_idx.append(r + k)
                vals.append(-1.0)
            row_ptr.append(len(col_idx))
    return CsrMatrix(n, n, row_ptr, col_idx, np.asarray(vals, dtype=kind.dtype), kind)


def load_matrix_market(path, kind=F64):
    """Read a coordinate-format real Matrix Market file into CSR.

    Supports `general` and `symmetric` symmetry; symmetric files are
    expanded to full storage. Indices are converted from 1-based to
    0-based and columns are sorted within each row. Out-of-bounds indices
    and duplicate entries (including duplicates created by symmetric
    expansion) are errors.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        fields = header.strip().split()
        if (
            len(fields) != 5
            or fields[0] != "%%MatrixMarket"
            or fields[1].lower() != "matrix"
            or fields[2].lower() != "coordinate"
        ):
            raise MatrixMarketError(f"malformed header: {header.strip()!r}")
        if fields[3].lower() != "real":
            raise MatrixMarketError(f"unsupported field type {fields[3]!r}; only 'real' is supported")
        symmetry = fields[4].lower()
        if symmetry not in ("general", "symmetric"):
            raise MatrixMarketError(f"unsupported symmetry {fields[4]!r}; use 'general' or 'symmetric'")

        size_line = None
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = stripped
            break
        if size_line is None:
            raise MatrixMarketError("missing size line")
        parts = size_line.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"malformed size line: {size_line!r}")
        try:
            n_rows, n_cols, nnz = (int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError(f"malformed size line: {size_line!r}") from None
        if n_rows < 0 or n_cols < 0 or nnz < 0:
            raise MatrixMarketError(f"negative sizes in size line: {size_line!r}")

        entries = []
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise MatrixMarketError(f"malformed entry line: {stripped!r}")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise MatrixMarketError(f"malformed entry line: {stripped!r}") from None
            if not (1 <= i <= n_rows) or not (1 <= j <= n_cols):
                raise MatrixMarketError(
                    f"index ({i}, {j}) out of bounds for a {n_rows}x{n_cols} matrix"
                )
            entries.append((i - 1, j - 1, v))

    if len(entries) != nnz:
        raise MatrixMarketError(f"declared {nnz} entries but found {len(entries)}")

    if symmetry == "symmetric":
        entries.extend((j, i, v) for i, j, v in list(entries) if i != j)

    seen = set()
    for i, j, _ in entries:
        if (i, j) in seen:
            raise MatrixMarketError(f"duplicate entry at ({i + 1}, {j + 1})")
        seen.add((i, j))

    entries.sort(key=lambda e: (e[0], e[1]))
    rows = np.fromiter((e[0] for e in entries), dtype=np.int64, count=len(entries))
    cols = np.fromiter((e[1] for e in entries), dtype=np.int64, count=len(entries))
    vals = np.fromiter((e[2] for e in entries), dtype=kind.dtype, count=len(entries))
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    row_ptr = np.cumsum(row_ptr)
    return CsrMatrix(n_rows, n_cols, row_ptr, cols, vals, kind)
