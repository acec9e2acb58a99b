"""Leading and second singular triples of a sparse transition matrix.

The computation touches the matrix only through matrix-vector products:
seeded block subspace iteration on the normal operator, with Rayleigh-Ritz
extraction of the top two triples.  The block (default 64 directions) makes
convergence depend on the gap between the leading cluster and the rest of
the spectrum rather than on gaps inside the cluster, which for transition
matrices of nearly decoupled systems can be arbitrarily small.  Empty rows
and columns are dropped before iterating and reinserted as zero entries in
the output vectors.

Sign convention: the entry of the second left vector with the largest
magnitude is made positive, and the right vector is flipped with it.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, SpectralError

DEFAULT_BLOCK = 64


@dataclass
class SingularPair:
    """Top two singular values with the second singular vectors.

    ``residual`` is ``max(|P r2 - s2 l2|, |P^T l2 - s2 r2|)``.  ``degenerate``
    flags ``sigma1 - sigma2 < tol``; the second vectors are then one seeded
    choice from the degenerate subspace and downstream thresholding results
    depend on the seed.
    """

    sigma1: float
    sigma2: float
    left2: np.ndarray
    right2: np.ndarray
    residual: float
    left1: np.ndarray = None
    right1: np.ndarray = None
    degenerate: bool = False


def _as_csr(matrix):
    if hasattr(matrix, "probs"):
        matrix = matrix.probs
    return sp.csr_matrix(matrix, dtype=float)


def _triple(A, v, u1=None, seed=0):
    """Complete a right Ritz vector into a full singular triple."""
    z = A @ v
    sigma = float(np.linalg.norm(z))
    if sigma > 0.0:
        return sigma, z / sigma, v
    # numerically rank-deficient: any unit left vector orthogonal to u1
    # pairs with v at sigma = 0
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(A.shape[0])
    if u1 is not None:
        u = u - u1 * (u1 @ u)
    return 0.0, u / np.linalg.norm(u), v


def second_singular(
    matrix,
    tol=1e-10,
    max_iter=100_000,
    seed=0,
    block=None,
    row_weights=None,
    col_weights=None,
):
    """Top two singular values and the second singular vectors of ``matrix``.

    Parameters
    ----------
    matrix : TransitionMatrix or scipy sparse matrix
        Needs at least 2 occupied (nonzero) rows and columns.
    tol : float
        Residual target; also the gap threshold for the degeneracy flag.
    max_iter : int
        Budget of block iterations; exhaustion raises
        :class:`~cohtree.errors.ConvergenceError` reporting the residual.
    seed : int
        Seeds the starting block; fixed seed gives identical output.
    block : int, optional
        Subspace dimension (clipped to the matrix size).
    row_weights, col_weights : ndarray, optional
        Measure-normalized mode: decompose
        ``diag(p)^{1/2} P diag(v)^{-1/2}`` instead of the plain matrix and
        rescale the returned vectors back to cell space.  The default (and
        the plain mode used throughout the trees) is the unweighted matrix.
    """
    A_full = _as_csr(matrix)
    m, n = A_full.shape

    unscale_rows = unscale_cols = None
    if row_weights is not None or col_weights is not None:
        if row_weights is None or col_weights is None:
            raise SpectralError("weighted mode needs both row and col weights")
        p = np.asarray(row_weights, dtype=float)
        v = np.asarray(col_weights, dtype=float)
        if p.shape != (m,) or v.shape != (n,):
            raise SpectralError("weight vectors must match the matrix shape")
        sqrt_p = np.sqrt(np.maximum(p, 0.0))
        inv_sqrt_v = np.zeros(n)
        inv_sqrt_v[v > 0] = 1.0 / np.sqrt(v[v > 0])
        A_full = sp.csr_matrix(sp.diags(sqrt_p) @ A_full @ sp.diags(inv_sqrt_v))
        unscale_rows = np.zeros(m)
        unscale_rows[sqrt_p > 0] = 1.0 / sqrt_p[sqrt_p > 0]
        unscale_cols = inv_sqrt_v

    row_nnz = np.diff(A_full.indptr)
    occupied_rows = np.flatnonzero(row_nnz > 0)
    col_counts = np.bincount(A_full.indices, minlength=n) if A_full.nnz else np.zeros(n)
    occupied_cols = np.flatnonzero(col_counts > 0)
    if occupied_rows.size < 2 or occupied_cols.size < 2:
        raise SpectralError(
            f"need at least 2 occupied rows and columns, got "
            f"{occupied_rows.size} x {occupied_cols.size}"
        )
    A = sp.csr_matrix(A_full[occupied_rows][:, occupied_cols])
    mc, nc = A.shape

    k = min(block or DEFAULT_BLOCK, mc, nc)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((nc, k)))

    residual = np.inf
    for _ in range(max_iter):
        W = A @ Q                      # k matvecs
        G = W.T @ W                    # projected normal operator
        evals, evecs = np.linalg.eigh(G)
        s1 = float(np.sqrt(max(evals[-1], 0.0)))
        s2 = float(np.sqrt(max(evals[-2], 0.0)))
        v1 = Q @ evecs[:, -1]
        v2 = Q @ evecs[:, -2]
        Wv = W @ evecs[:, -2:]         # A v2, A v1
        y1 = A.T @ Wv[:, 1]
        y2 = A.T @ Wv[:, 0]
        # |A^T u - sigma v| with u = A v / sigma equals |B v - sigma^2 v| / sigma
        r1 = (
            np.linalg.norm(y1 - evals[-1] * v1) / s1
            if s1 > 0.0
            else float(np.linalg.norm(Wv[:, 1]))
        )
        r2 = (
            np.linalg.norm(y2 - evals[-2] * v2) / s2
            if s2 > 0.0
            else float(np.linalg.norm(Wv[:, 0]))
        )
        residual = max(float(r1), float(r2))
        if residual <= tol:
            break
        Z = A.T @ W                    # k matvecs: B Q
        Q, _ = np.linalg.qr(Z)
    else:
        raise ConvergenceError(residual=residual, iterations=max_iter)

    s1, u1, v1 = _triple(A, v1, seed=seed)
    s2, u2, v2 = _triple(A, v2, u1=u1, seed=seed)
    if s2 > s1:  # eigh ordering can flip inside a degenerate cluster
        (s1, u1, v1), (s2, u2, v2) = (s2, u2, v2), (s1, u1, v1)

    final_residual = max(
        float(np.linalg.norm(A @ v2 - s2 * u2)),
        float(np.linalg.norm(A.T @ u2 - s2 * v2)),
    )

    def expand(vec, idx, size):
        out = np.zeros(size)
        out[idx] = vec
        return out

    left2 = expand(u2, occupied_rows, m)
    right2 = expand(v2, occupied_cols, n)
    left1 = expand(u1, occupied_rows, m)
    right1 = expand(v1, occupied_cols, n)

    if unscale_rows is not None:
        # back to cell space: thresholds apply to u / sqrt(p), w / sqrt(v)
        for vec, scale in ((left1, unscale_rows), (left2, unscale_rows),
                           (right1, unscale_cols), (right2, unscale_cols)):
            vec *= scale
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec /= norm

    for lvec, rvec in ((left1, right1), (left2, right2)):
        j = int(np.argmax(np.abs(lvec)))
        if lvec[j] < 0:
            lvec *= -1.0
            rvec *= -1.0

    return SingularPair(
        sigma1=s1,
        sigma2=s2,
        left2=left2,
        right2=right2,
        residual=final_residual,
        left1=left1,
        right1=right1,
        degenerate=bool(s1 - s2 < tol),
    )
