"""Sparse boolean matrices and the reasoning-hop kernel.

A :class:`SparseBinaryMatrix` stores, for every row, the sorted set of its
nonzero columns (CSR layout without a data array). The same type is used
for relation adjacency matrices and for batched variable groundings, where
each row is one grounding track.

The hot loops live in the compiled ``treerule._kernels`` extension. When it
is not built, or when ``TREERULE_BACKEND=python`` is set, the numpy
implementation in ``treerule._fallback`` is used instead.
"""
from __future__ import annotations

import os

import numpy as np

from treerule import _fallback


def _load_backend():
    choice = os.environ.get("TREERULE_BACKEND", "auto").lower()
    if choice == "python":
        return _fallback, "python"
    try:
        from treerule import _kernels
    except ImportError:
        if choice == "cython":
            raise
        return _fallback, "python"
    return _kernels, "cython"


_impl, BACKEND = _load_backend()


def use_backend(name: str) -> None:
    """Switch the kernel implementation at runtime ("cython" or "python")."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = _fallback, "python"
    elif name == "cython":
        from treerule import _kernels

        _impl, BACKEND = _kernels, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from treerule import _kernels  # noqa: F401
    except ImportError:
        return names
    return ["cython"] + names


class ShapeError(ValueError):
    pass


class SparseBinaryMatrix:
    """Immutable 0/1 matrix with per-row sorted column sets."""

    __slots__ = ("indptr", "indices", "shape")

    def __init__(self, indptr, indices, shape: tuple[int, int]):
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int32)
        indptr.setflags(write=False)
        indices.setflags(write=False)
        self.indptr = indptr
        self.indices = indices
        self.shape = (int(shape[0]), int(shape[1]))

    # construction -----------------------------------------------------

    @classmethod
    def from_pairs(cls, rows, cols, shape) -> "SparseBinaryMatrix":
        """Build from coordinate lists; duplicate pairs collapse to one entry."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        nrows, ncols = shape
        if rows.size and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
            raise ShapeError("coordinate out of range")
        keys = np.unique(rows * ncols + cols)
        r = keys // ncols
        indptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=nrows), out=indptr[1:])
        return cls(indptr, keys - r * ncols, shape)

    @classmethod
    def from_rows(cls, rows, width: int) -> "SparseBinaryMatrix":
        """Build from an iterable of column collections, one per row."""
        rows = [np.unique(np.asarray(list(r), dtype=np.int64)) for r in rows]
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum([len(r) for r in rows], out=indptr[1:])
        indices = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= width):
            raise ShapeError("column out of range")
        return cls(indptr, indices, (len(rows), width))

    @classmethod
    def one_hot(cls, entities, width: int) -> "SparseBinaryMatrix":
        """One row per entity, each row holding just that entity."""
        entities = np.asarray(entities, dtype=np.int64)
        if entities.size and (entities.min() < 0 or entities.max() >= width):
            raise ShapeError("entity out of range")
        return cls(np.arange(len(entities) + 1), entities, (len(entities), width))

    @classmethod
    def from_dense(cls, dense) -> "SparseBinaryMatrix":
        dense = np.asarray(dense)
        r, c = np.nonzero(dense)
        return cls.from_pairs(r, c, dense.shape)

    @classmethod
    def empty(cls, nrows: int, ncols: int) -> "SparseBinaryMatrix":
        return cls(np.zeros(nrows + 1), np.empty(0), (nrows, ncols))

    # views ------------------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def row(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def row_sets(self) -> list[set[int]]:
        return [set(self.row(i).tolist()) for i in range(self.shape[0])]

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.uint8)
        out[np.repeat(np.arange(self.shape[0]), self.row_lengths()), self.indices] = 1
        return out

    def transpose(self) -> "SparseBinaryMatrix":
        rows = np.repeat(np.arange(self.shape[0], dtype=np.int64), self.row_lengths())
        return SparseBinaryMatrix.from_pairs(self.indices, rows, (self.shape[1], self.shape[0]))

    @property
    def T(self) -> "SparseBinaryMatrix":
        return self.transpose()

    def take_rows(self, rows) -> "SparseBinaryMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        lens = self.row_lengths()[rows]
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lens, out=indptr[1:])
        if lens.sum():
            starts = self.indptr[rows]
            offsets = np.arange(indptr[-1]) - np.repeat(indptr[:-1], lens)
            indices = self.indices[np.repeat(starts, lens) + offsets]
        else:
            indices = np.empty(0, dtype=np.int32)
        return SparseBinaryMatrix(indptr, indices, (len(rows), self.shape[1]))

    def __eq__(self, other):
        if not isinstance(other, SparseBinaryMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    __hash__ = None

    def __repr__(self):
        return f"SparseBinaryMatrix(shape={self.shape}, nnz={self.nnz})"


# Batched variable groundings use the same layout: b rows over |E| columns.
GroundingMatrix = SparseBinaryMatrix


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")


def hop(v: SparseBinaryMatrix, m: SparseBinaryMatrix) -> SparseBinaryMatrix:
    """Boolean-semiring product ``v @ m``: one reasoning hop per track."""
    if v.shape[1] != m.shape[0]:
        raise ShapeError(f"cannot hop {v.shape} through {m.shape}")
    indptr, indices = _impl.hop(v.indptr, v.indices, m.indptr, m.indices, m.shape[1])
    return SparseBinaryMatrix(indptr, indices, (v.shape[0], m.shape[1]))


def mask(a: SparseBinaryMatrix, b: SparseBinaryMatrix) -> SparseBinaryMatrix:
    """Rowwise intersection (elementwise product)."""
    _same_shape(a, b)
    indptr, indices = _impl.intersect(a.indptr, a.indices, b.indptr, b.indices)
    return SparseBinaryMatrix(indptr, indices, a.shape)


def mask_complement(a: SparseBinaryMatrix, b: SparseBinaryMatrix) -> SparseBinaryMatrix:
    """Rowwise difference ``a \\ b``, i.e. ``a * (1 - b)``."""
    _same_shape(a, b)
    indptr, indices = _impl.difference(a.indptr, a.indices, b.indptr, b.indices)
    return SparseBinaryMatrix(indptr, indices, a.shape)


def mask_columns(a: SparseBinaryMatrix, keep) -> SparseBinaryMatrix:
    """Keep only columns flagged in the global 0/1 vector ``keep`` in every row."""
    keep = np.ascontiguousarray(keep, dtype=np.uint8)
    if keep.shape != (a.shape[1],):
        raise ShapeError(f"mask of length {keep.shape} for width {a.shape[1]}")
    indptr, indices = _impl.mask_columns(a.indptr, a.indices, keep)
    return SparseBinaryMatrix(indptr, indices, a.shape)


def intersection_size(a: SparseBinaryMatrix, b: SparseBinaryMatrix) -> int:
    """``norm1(mask(a, b))`` without materializing the intersection."""
    _same_shape(a, b)
    return int(_impl.intersect_count(a.indptr, a.indices, b.indptr, b.indices))


def column_counts(g: SparseBinaryMatrix) -> np.ndarray:
    """Number of rows in which each column is active."""
    return np.bincount(g.indices, minlength=g.shape[1]).astype(np.int64)


def row_sum_vector(m: SparseBinaryMatrix) -> np.ndarray:
    """Number of nonzeros per row."""
    return m.row_lengths().astype(np.int64)


def norm1(g: SparseBinaryMatrix) -> int:
    return g.nnz
