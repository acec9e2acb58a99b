"""Threshold optimization of the coherence ratio over singular-vector level sets.

The ratio of a candidate pair (X, Y) is the fraction of X's mass whose image
lands in Y::

    rho(X, Y) = sum_{i in X, j in Y} p_i P_ij / sum_{i in X} p_i

Candidate X sets are the strict superlevel sets ``{i : left2_i > b}`` of the
second left singular vector, with ``b`` ranging over the distinct vector
entries; for each ``b`` the column threshold ``c`` is the entry of the second
right vector whose superlevel set best balances pushforward mass ``v(Y)``
against ``mu(X)`` (the equal-measure requirement of a coherent pair).  Among
candidates where both X and its complement hold at least ``min_mass`` of the
current level's mass, the scan maximizes ``rho(X, Y) + rho(X^c, Y^c)`` so that
both returned pairs are coherent; ties break toward the more mass-balanced
split, then toward the smaller threshold.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NoSplitError, UndefinedRatioError
from .transfer import push_measure


@dataclass
class CoherentPair:
    """A (row-set, column-set) pair with its coherence diagnostics.

    ``rho_complement`` is the ratio of the complementary pair produced by the
    same split; ``rho_sensitivity`` records how much the split objective moves
    under a one-level perturbation of the row threshold (diagnostic only).
    """

    rows: np.ndarray
    cols: np.ndarray
    rho: float
    rho_complement: float
    b_star: float
    c_star: float
    rho_sensitivity: float = float("nan")


def coherence_ratio(tm, p, rows, cols):
    """Fraction of the mass of ``rows`` that lands in ``cols`` (Eq. ratio)."""
    p = np.asarray(p, dtype=float)
    rows = np.unique(np.asarray(rows, dtype=np.int64))
    cols = np.unique(np.asarray(cols, dtype=np.int64))
    if rows.size == 0:
        raise UndefinedRatioError("empty row set")
    denom = float(p[rows].sum())
    if denom <= 0.0:
        raise UndefinedRatioError("row set carries no mass")
    sub = tm.probs[rows][:, cols]
    numer = float(p[rows] @ np.asarray(sub.sum(axis=1)).ravel())
    return min(1.0, max(0.0, numer / denom))


def _groups_desc(values):
    """Stable descending order plus start offsets of equal-value groups."""
    order = np.argsort(-values, kind="stable")
    sorted_vals = values[order]
    change = np.flatnonzero(np.diff(sorted_vals) != 0.0) + 1
    starts = np.concatenate([[0], change])
    distinct = sorted_vals[starts]
    return order, distinct, starts


def optimize_split(tm, p, sv, min_mass=0.05, trace=None):
    """Best admissible threshold pair and its complement.

    Parameters
    ----------
    tm : TransitionMatrix
    p : ndarray
        Row weights of the current level (any positive scale).
    sv : SingularPair
        Second singular vectors supplying the candidate thresholds.
    min_mass : float
        Admissibility floor: both X and its complement must hold at least
        this fraction of the level's mass.  Must lie in (0, 0.5).
    trace : str, path or file-like, optional
        Sink for a tab-separated candidate table (debugging aid).

    Returns
    -------
    (CoherentPair, CoherentPair)
        The maximizing pair and its complement pair.
    """
    if not 0.0 < min_mass < 0.5:
        raise ValueError(f"min_mass must be in (0, 0.5), got {min_mass}")
    p = np.asarray(p, dtype=float)

    R = np.flatnonzero(tm.row_counts > 0)
    v = push_measure(tm, p)
    C = np.flatnonzero(v > 0)
    if R.size < 2 or C.size < 2:
        raise NoSplitError("fewer than 2 occupied rows or columns")

    row_order, b_vals, b_starts = _groups_desc(sv.left2[R])
    col_order, c_vals, c_starts = _groups_desc(sv.right2[C])
    G, T = b_vals.size, c_vals.size
    if G < 2 or T < 2:
        raise NoSplitError("singular vector is constant; no threshold to scan")

    rows_sorted = R[row_order]
    cols_sorted = C[col_order]

    p_sorted = p[rows_sorted]
    mass_prefix = np.concatenate([[0.0], np.cumsum(p_sorted)])
    total_mass = mass_prefix[-1]
    if total_mass <= 0.0:
        raise UndefinedRatioError("level carries no mass")

    v_sorted = v[cols_sorted]
    v_prefix = np.concatenate([[0.0], np.cumsum(v_sorted)])
    # proper nonempty Y prefixes: column groups 1 .. T-1
    y_sizes = c_starts[1:]
    y_prefix_mass = v_prefix[y_sizes]

    # entries weighted by source mass, in scan order
    W = tm.probs[rows_sorted][:, cols_sorted].tocsr()
    W = W.multiply(p_sorted[:, None]).tocsr()
    col_total = np.asarray(W.sum(axis=0)).ravel()
    H = np.zeros(C.size)

    best = None
    records = []
    for g in range(1, G):
        lo, hi = b_starts[g - 1], b_starts[g]
        if hi > lo:
            H += np.asarray(W[lo:hi].sum(axis=0)).ravel()
        size_x = b_starts[g]
        m_x = mass_prefix[size_x]
        m_xc = total_mass - m_x
        admissible = (
            m_x >= min_mass * total_mass and m_xc >= min_mass * total_mass
        )

        # column threshold matching the pushforward mass of Y to mu(X);
        # ties go to the smaller threshold value (the larger Y)
        k = int(np.searchsorted(y_prefix_mass, m_x))
        cands = [c for c in (k - 1, k) if 0 <= c < y_sizes.size]
        t_idx = min(cands, key=lambda c: (abs(y_prefix_mass[c] - m_x), -c))
        size_y = int(y_sizes[t_idx])

        numer = H[:size_y].sum()
        numer_c = col_total[size_y:].sum() - H[size_y:].sum()
        rho = float(numer / m_x)
        rho_c = float(numer_c / m_xc)
        objective = rho + rho_c
        records.append(
            (float(b_vals[g]), float(c_vals[t_idx + 1]), rho, rho_c,
             float(m_x), admissible)
        )
        if not admissible:
            continue
        balance = abs(m_x - m_xc)
        key = (-objective, balance, b_vals[g])
        if best is None or key < best[0]:
            best = (key, g, size_x, size_y, float(b_vals[g]), float(c_vals[t_idx + 1]))

    if trace is not None:
        _write_trace(trace, records)
    if best is None:
        raise NoSplitError(
            f"no candidate with both sides holding mass >= {min_mass}"
        )

    _, g_star, size_x, size_y, b_star, c_star = best
    rows_x = np.sort(rows_sorted[:size_x])
    rows_xc = np.sort(rows_sorted[size_x:])
    cols_y = np.sort(cols_sorted[:size_y])
    cols_yc = np.sort(cols_sorted[size_y:])

    rho = coherence_ratio(tm, p, rows_x, cols_y)
    rho_c = coherence_ratio(tm, p, rows_xc, cols_yc)

    objectives = {i + 1: r[2] + r[3] for i, r in enumerate(records) if r[5]}
    neighbors = [objectives[g] for g in (g_star - 1, g_star + 1) if g in objectives]
    sensitivity = (
        max(abs(objectives[g_star] - nb) for nb in neighbors)
        if neighbors
        else float("nan")
    )

    pair = CoherentPair(rows_x, cols_y, rho, rho_c, b_star, c_star, sensitivity)
    cpair = CoherentPair(rows_xc, cols_yc, rho_c, rho, b_star, c_star, sensitivity)
    return pair, cpair


def _write_trace(trace, records):
    header = "b\tc\trho\trho_complement\tmass_x\tadmissible\n"
    lines = [
        f"{b!r}\t{c!r}\t{rho!r}\t{rho_c!r}\t{m!r}\t{int(adm)}\n"
        for b, c, rho, rho_c, m, adm in records
    ]
    if hasattr(trace, "write"):
        trace.write(header)
        trace.writelines(lines)
    else:
        with open(trace, "w") as fh:
            fh.write(header)
            fh.writelines(lines)
