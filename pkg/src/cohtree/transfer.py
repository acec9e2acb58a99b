"""Transition-matrix estimation of the transfer operator by test-point counts.

``P[i, j]`` is the fraction of test points starting in domain cell ``i``
whose image lands in image cell ``j``.  The denominator counts *all* points
observed in cell ``i``, so in open systems the per-row mass whose image
leaves the image partition is tracked explicitly in ``outflow`` and every
occupied row satisfies ``row_sum + outflow == 1``.

Matrices assembled from data keep their integer count backing, which makes
row-sum checks exact rational statements and keeps restriction exact.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp

from .errors import EmptyMatrixError, EmptySelectionError
from .mesh import OUTSIDE

CHUNK = 262_144

_ROWSUM_TOL = 1e-12


class TransitionMatrix:
    """Sparse row-substochastic transition estimate with outflow tracking.

    Attributes
    ----------
    probs : scipy.sparse.csr_matrix
        Transition probabilities, shape ``(n_rows, n_cols)``.
    row_counts : ndarray of int
        Test points observed per row; rows with zero counts are empty and
        excluded from spectral computations.
    outflow : ndarray of float
        Per-row probability mass whose image left the image partition.
    counts : scipy.sparse.csr_matrix of int or None
        Raw transition counts when the matrix was assembled from data.
    """

    def __init__(self, probs, row_counts, outflow=None, counts=None):
        self.probs = sp.csr_matrix(probs, dtype=float)
        self.probs.sum_duplicates()
        self.row_counts = np.asarray(row_counts, dtype=np.int64)
        if self.row_counts.shape != (self.probs.shape[0],):
            raise EmptyMatrixError(
                f"row_counts length {self.row_counts.shape} does not match "
                f"{self.probs.shape[0]} rows"
            )
        rowsum = np.asarray(self.probs.sum(axis=1)).ravel()
        if outflow is None:
            outflow = np.where(self.row_counts > 0, 1.0 - rowsum, 0.0)
            outflow[np.abs(outflow) < _ROWSUM_TOL] = 0.0
        self.outflow = np.asarray(outflow, dtype=float)
        self.counts = counts

        if self.probs.nnz and self.probs.data.min() < 0:
            raise EmptyMatrixError("negative transition probability")
        if np.any(self.outflow < -_ROWSUM_TOL):
            raise EmptyMatrixError("negative outflow")
        occ = self.row_counts > 0
        bad = occ & (np.abs(rowsum + self.outflow - 1.0) > _ROWSUM_TOL)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise EmptyMatrixError(
                f"row {i}: sum + outflow = {rowsum[i] + self.outflow[i]!r}, "
                "expected 1"
            )
        if np.any(rowsum[~occ] != 0.0):
            raise EmptyMatrixError("empty row with nonzero entries")

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_counts(cls, counts, row_counts):
        counts = sp.csr_matrix(counts, dtype=np.int64)
        counts.sum_duplicates()
        row_counts = np.asarray(row_counts, dtype=np.int64)
        occ = row_counts > 0
        # true per-entry division keeps c/n exact (e.g. n/n == 1.0 exactly)
        row_of = np.repeat(np.arange(counts.shape[0]), np.diff(counts.indptr))
        data = counts.data.astype(float) / row_counts[row_of]
        probs = sp.csr_matrix(
            (data, counts.indices.copy(), counts.indptr.copy()), shape=counts.shape
        )
        kept = np.asarray(counts.sum(axis=1)).ravel()
        outflow = np.zeros(counts.shape[0])
        outflow[occ] = (row_counts[occ] - kept[occ]) / row_counts[occ]
        return cls(probs, row_counts, outflow, counts=counts)

    @classmethod
    def from_dense(cls, array, row_counts=None):
        """Wrap an explicit (row-substochastic) matrix; meant for tests."""
        array = np.asarray(array, dtype=float)
        if row_counts is None:
            row_counts = (np.abs(array).sum(axis=1) > 0).astype(np.int64)
        return cls(sp.csr_matrix(array), row_counts)

    # -- views --------------------------------------------------------------

    @property
    def n_rows(self):
        return self.probs.shape[0]

    @property
    def n_cols(self):
        return self.probs.shape[1]

    @property
    def matrix(self):
        return self.probs

    @property
    def occupied_rows(self):
        return np.flatnonzero(self.row_counts > 0)

    def occupied_row_mask(self):
        return self.row_counts > 0

    def row_sums(self):
        return np.asarray(self.probs.sum(axis=1)).ravel()

    def __repr__(self):
        return (
            f"TransitionMatrix({self.n_rows}x{self.n_cols}, "
            f"nnz={self.probs.nnz}, occupied={int((self.row_counts > 0).sum())})"
        )


def _count_chunk(args):
    rows, cols, keep_img, m, n = args
    valid = rows >= 0
    row_counts = np.bincount(rows[valid], minlength=m).astype(np.int64)
    ok = valid & keep_img
    counts = sp.coo_matrix(
        (np.ones(ok.sum(), dtype=np.int64), (rows[ok], cols[ok])), shape=(m, n)
    ).tocsr()
    return counts, row_counts


def build_matrix(ensemble, domain, image, n_workers=1):
    """Count test-point transitions between two partitions.

    Points outside every active domain cell are ignored.  Points located in
    a domain cell whose image falls outside every active image cell (or
    whose trajectory was flagged as having exited the grid) count toward the
    row denominator and accrue to that row's outflow.
    """
    if len(ensemble) == 0:
        raise EmptyMatrixError("empty trajectory ensemble")
    m = domain.mesh.n_triangles
    n = image.mesh.n_triangles
    dom_active = domain.active_mask
    img_active = image.active_mask

    rows_all = domain.mesh.locate_many(ensemble.initial)
    keep_dom = rows_all >= 0
    keep_dom[keep_dom] = dom_active[rows_all[keep_dom]]
    rows_all = np.where(keep_dom, rows_all, OUTSIDE)

    cols_all = image.mesh.locate_many(ensemble.final)
    keep_img = cols_all >= 0
    keep_img[keep_img] = img_active[cols_all[keep_img]]
    keep_img &= ~ensemble.exited
    cols_all = np.where(keep_img, cols_all, 0)

    chunks = [
        (rows_all[i : i + CHUNK], cols_all[i : i + CHUNK],
         keep_img[i : i + CHUNK], m, n)
        for i in range(0, len(ensemble), CHUNK)
    ]
    if n_workers <= 1 or len(chunks) <= 1:
        parts = [_count_chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(_count_chunk, chunks))

    counts = parts[0][0]
    row_counts = parts[0][1]
    for c, rc in parts[1:]:
        counts = counts + c
        row_counts = row_counts + rc
    if row_counts.sum() == 0:
        raise EmptyMatrixError("no test point fell into any active domain cell")
    return TransitionMatrix.from_counts(counts, row_counts)


def push_measure(tm, p):
    """Pushforward of row weights: ``v_j = sum_i p_i P_ij``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (tm.n_rows,):
        raise EmptyMatrixError(
            f"weight vector length {p.shape} does not match {tm.n_rows} rows"
        )
    return tm.probs.T @ p


def restrict(tm, rows, cols):
    """Submatrix over ``rows x cols`` with original values (no renormalization).

    Mass leaving the retained columns is added to the restricted outflow, so
    the row-sum invariant continues to hold.  Indices in the result are local
    to the given (sorted) selections.
    """
    rows = np.unique(np.asarray(rows, dtype=np.int64))
    cols = np.unique(np.asarray(cols, dtype=np.int64))
    if rows.size == 0 or cols.size == 0:
        raise EmptySelectionError("row and column selections must be nonempty")
    if rows[0] < 0 or rows[-1] >= tm.n_rows or cols[0] < 0 or cols[-1] >= tm.n_cols:
        raise EmptySelectionError("selection indices out of range")

    row_counts = tm.row_counts[rows]
    if tm.counts is not None:
        sub_counts = tm.counts[rows][:, cols]
        return TransitionMatrix.from_counts(sub_counts, row_counts)
    sub = tm.probs[rows][:, cols]
    rowsum = np.asarray(sub.sum(axis=1)).ravel()
    outflow = np.where(row_counts > 0, 1.0 - rowsum, 0.0)
    return TransitionMatrix(sub, row_counts, outflow)
