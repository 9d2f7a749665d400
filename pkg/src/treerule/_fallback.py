"""Pure numpy implementation of the row-set kernels.

Same call signatures as the compiled ``_kernels`` module. Rows are encoded
as flat keys ``row * ncols + col`` so that set operations over a whole batch
become single sorted-array operations.
"""
import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1, dtype=np.int64), np.diff(indptr))


def _from_keys(keys, nrows, ncols):
    rows = keys // ncols
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=nrows), out=indptr[1:])
    return indptr, (keys - rows * ncols).astype(np.int32)


def _keys(indptr, indices, ncols):
    return _row_ids(indptr) * ncols + indices


def _width(*index_arrays):
    # Any width above the largest column gives a valid, order-preserving key.
    top = 0
    for idx in index_arrays:
        if len(idx):
            top = max(top, int(idx.max()))
    return top + 1


def hop(v_indptr, v_indices, m_indptr, m_indices, ncols):
    nrows = len(v_indptr) - 1
    starts = m_indptr[v_indices]
    lens = m_indptr[v_indices.astype(np.int64) + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.zeros(nrows + 1, dtype=np.int64), np.empty(0, dtype=np.int32)
    rows = np.repeat(_row_ids(v_indptr), lens)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
    cols = m_indices[np.repeat(starts, lens) + offsets].astype(np.int64)
    keys = np.unique(rows * ncols + cols)
    return _from_keys(keys, nrows, ncols)


def intersect(a_indptr, a_indices, b_indptr, b_indices):
    width = _width(a_indices, b_indices)
    keys = np.intersect1d(
        _keys(a_indptr, a_indices, width), _keys(b_indptr, b_indices, width), assume_unique=True
    )
    return _from_keys(keys, len(a_indptr) - 1, width)


def difference(a_indptr, a_indices, b_indptr, b_indices):
    width = _width(a_indices, b_indices)
    keys = np.setdiff1d(
        _keys(a_indptr, a_indices, width), _keys(b_indptr, b_indices, width), assume_unique=True
    )
    return _from_keys(keys, len(a_indptr) - 1, width)


def mask_columns(indptr, indices, keep):
    sel = keep[indices].astype(bool)
    nrows = len(indptr) - 1
    out_indptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(_row_ids(indptr)[sel], minlength=nrows), out=out_indptr[1:])
    return out_indptr, indices[sel].astype(np.int32)


def intersect_count(a_indptr, a_indices, b_indptr, b_indices):
    width = _width(a_indices, b_indices)
    return int(
        np.intersect1d(
            _keys(a_indptr, a_indices, width), _keys(b_indptr, b_indices, width), assume_unique=True
        ).size
    )
