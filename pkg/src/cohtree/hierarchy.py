"""Recursive construction of the tree of relatively coherent set pairs.

Each node holds a (row-set, column-set) pair.  Splitting a node restricts
the root transition matrix to the node's pair, renormalizes the node's
weights to a relative measure, recomputes the second singular pair of the
restricted matrix, and thresholds it; the two resulting pairs become the
children, labeled by appending ``"1"`` and ``"2"`` to the parent label.  A
branch stops when the split quality ``rho_star`` (the weaker of the two
candidate pair ratios) falls below ``rho0``, when no admissible threshold
exists, or at ``max_depth``.

Cells whose rows hold no observed test points stay unassigned: no data, no
claim.
"""

from dataclasses import dataclass, field

import numpy as np

from .coherence import coherence_ratio, optimize_split
from .errors import (
    ConvergenceError,
    NoSplitError,
    SpectralError,
    UndefinedMeasureError,
    UndefinedRatioError,
)
from .spectral import second_singular
from .transfer import push_measure, restrict

#: Marker used in per-cell label sequences for cells in no leaf.
UNASSIGNED_LABEL = "-"

STATUS_INTERNAL = "internal"
STATUS_LEAF_DEPTH = "leaf-depth"
STATUS_LEAF_THRESHOLD = "leaf-threshold"
STATUS_LEAF_NOSPLIT = "leaf-nosplit"
LEAF_STATUSES = (STATUS_LEAF_DEPTH, STATUS_LEAF_THRESHOLD, STATUS_LEAF_NOSPLIT)


def relative_weights(parent, subset):
    """Renormalize ``parent`` weights on ``subset``; zero elsewhere.

    The result sums to exactly 1 over the subset.
    """
    parent = np.asarray(parent, dtype=float)
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if subset.size == 0:
        raise UndefinedMeasureError("empty subset")
    normalizer = parent[subset].sum()
    if normalizer <= 0.0:
        raise UndefinedMeasureError("subset carries no parent mass")
    out = np.zeros_like(parent)
    out[subset] = parent[subset] / normalizer
    return out


@dataclass
class HierarchyNode:
    """One (X, Y) pair of the tree.

    ``label`` is a string over the alphabet {1, 2}; the root label is empty.
    ``rho`` is this pair's own coherence ratio, ``rho_star`` the quality of
    the split attempted *at* this node (``None`` when the node was never
    split, e.g. a maximum-depth leaf).
    """

    label: str
    depth: int
    rows: np.ndarray
    cols: np.ndarray
    mass: float
    rho: float
    rho_complement: float = float("nan")
    rho_star: float = None
    status: str = STATUS_INTERNAL
    split_sensitivity: float = float("nan")
    children: list = field(default_factory=list)

    @property
    def is_leaf(self):
        return not self.children


@dataclass
class HierarchyTree:
    """Labeled binary tree of relatively coherent pairs."""

    root: HierarchyNode
    rho0: float
    max_depth: int
    min_mass: float
    seed: int

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self):
        return [n for n in self.nodes() if n.is_leaf]

    def reached_depth(self):
        return max(n.depth for n in self.nodes())

    def find(self, label):
        for n in self.nodes():
            if n.label == label:
                return n
        raise KeyError(f"no node labeled {label!r}")


def _node_seed(seed, label):
    # stable per-node entropy: labels over {1, 2} read as base-3 integers
    code = int(label, 3) if label else 0
    return np.random.SeedSequence((seed, code)).generate_state(1)[0]


def build_tree(
    tm,
    p,
    rho0,
    max_depth,
    min_mass=0.05,
    seed=0,
    svd_tol=1e-10,
    svd_max_iter=100_000,
):
    """Recursively split the transition matrix into relatively coherent pairs.

    Parameters
    ----------
    tm : TransitionMatrix
        Root-level estimate; deeper levels restrict this matrix rather than
        re-advecting points, so mass mapping outside a node's column set
        counts against coherence through the restricted outflow.
    p : ndarray
        Root row weights (normalized over occupied rows).
    rho0 : float
        Stopping threshold in (0, 1): a branch becomes a leaf when the best
        split quality falls below it.
    max_depth : int
        Maximum number of splits along any branch (>= 1).
    """
    if not 0.0 < rho0 < 1.0:
        raise ValueError(f"rho0 must be in (0, 1), got {rho0}")
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")
    p = np.asarray(p, dtype=float)

    rows0 = np.flatnonzero((tm.row_counts > 0) & (p > 0))
    v0 = push_measure(tm, p)
    cols0 = np.flatnonzero(v0 > 0)
    if rows0.size == 0 or cols0.size == 0:
        raise UndefinedRatioError("no occupied rows carry mass")
    root = HierarchyNode(
        label="",
        depth=0,
        rows=rows0,
        cols=cols0,
        mass=float(p[rows0].sum()),
        rho=coherence_ratio(tm, p, rows0, cols0),
    )
    tree = HierarchyTree(root, rho0, int(max_depth), min_mass, seed)
    _split_node(root, tm, p, tree, svd_tol, svd_max_iter)
    return tree


def _split_node(node, tm, p, tree, svd_tol, svd_max_iter):
    if node.depth >= tree.max_depth:
        node.status = STATUS_LEAF_DEPTH
        return
    if node.rows.size < 2 or node.cols.size < 2:
        node.status = STATUS_LEAF_NOSPLIT
        return

    sub = restrict(tm, node.rows, node.cols)
    p_rel = relative_weights(p, node.rows)[node.rows]
    try:
        sv = second_singular(
            sub,
            tol=svd_tol,
            max_iter=svd_max_iter,
            seed=_node_seed(tree.seed, node.label),
        )
        pair, cpair = optimize_split(sub, p_rel, sv, min_mass=tree.min_mass)
    except (NoSplitError, SpectralError, ConvergenceError):
        node.status = STATUS_LEAF_NOSPLIT
        return

    node.rho_star = min(pair.rho, cpair.rho)
    node.split_sensitivity = pair.rho_sensitivity
    if node.rho_star < tree.rho0:
        node.status = STATUS_LEAF_THRESHOLD
        return

    node.status = STATUS_INTERNAL
    for tag, half in (("1", pair), ("2", cpair)):
        rows = node.rows[half.rows]
        cols = node.cols[half.cols]
        child = HierarchyNode(
            label=node.label + tag,
            depth=node.depth + 1,
            rows=rows,
            cols=cols,
            mass=float(p[rows].sum()),
            rho=half.rho,
            rho_complement=half.rho_complement,
        )
        node.children.append(child)
        _split_node(child, tm, p, tree, svd_tol, svd_max_iter)


def assign_labels(tree, n_rows, n_cols=None):
    """Per-cell leaf labels, one sequence per side.

    Cells contained in no leaf receive :data:`UNASSIGNED_LABEL`.  The root
    label is the empty string; a tree that never split labels its occupied
    cells with it.
    """
    if n_cols is None:
        n_cols = n_rows
    labels_x = np.full(n_rows, UNASSIGNED_LABEL, dtype=object)
    labels_y = np.full(n_cols, UNASSIGNED_LABEL, dtype=object)
    for leaf in tree.leaves():
        labels_x[leaf.rows] = leaf.label
        labels_y[leaf.cols] = leaf.label
    return labels_x, labels_y


# -- serialization ------------------------------------------------------------

_ROOT_TOKEN = "."


def _fmt(value):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "-"
    return repr(float(value))


def _parse_opt(token):
    return None if token == "-" else float(token)


def tree_to_text(tree):
    """Self-describing text document, one record per node (preorder)."""
    lines = [
        "hierarchy v1",
        f"rho0 {tree.rho0!r}",
        f"max_depth {tree.max_depth}",
        f"min_mass {tree.min_mass!r}",
        f"seed {tree.seed}",
        f"n_nodes {sum(1 for _ in tree.nodes())}",
    ]
    for node in tree.nodes():
        label = node.label if node.label else _ROOT_TOKEN
        lines.append(
            f"node {label} {node.depth} {node.status} "
            f"{_fmt(node.rho_star)} {_fmt(node.rho)} {_fmt(node.rho_complement)} "
            f"{_fmt(node.mass)} {_fmt(node.split_sensitivity)}"
        )
        lines.append("rows " + " ".join(str(i) for i in node.rows))
        lines.append("cols " + " ".join(str(j) for j in node.cols))
    return "\n".join(lines) + "\n"


def tree_from_text(text):
    lines = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "hierarchy v1":
        raise UndefinedMeasureError("not a hierarchy document")
    header = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("node "):
        key, val = lines[i].split(maxsplit=1)
        header[key] = val
        i += 1
    nodes = {}
    order = []
    while i < len(lines):
        tokens = lines[i].split()
        if tokens[0] != "node":
            raise UndefinedMeasureError(f"expected node record, got {lines[i]!r}")
        label = "" if tokens[1] == _ROOT_TOKEN else tokens[1]
        rho_c = _parse_opt(tokens[6])
        sens = _parse_opt(tokens[8])
        node = HierarchyNode(
            label=label,
            depth=int(tokens[2]),
            rows=None,
            cols=None,
            mass=_parse_opt(tokens[7]),
            rho=_parse_opt(tokens[5]),
            rho_complement=float("nan") if rho_c is None else rho_c,
            rho_star=_parse_opt(tokens[4]),
            status=tokens[3],
            split_sensitivity=float("nan") if sens is None else sens,
        )
        node.rows = np.array(
            [int(t) for t in lines[i + 1].split()[1:]], dtype=np.int64
        )
        node.cols = np.array(
            [int(t) for t in lines[i + 2].split()[1:]], dtype=np.int64
        )
        nodes[label] = node
        order.append(label)
        i += 3
    for label in order:
        if label:
            nodes[label[:-1]].children.append(nodes[label])
    return HierarchyTree(
        root=nodes[""],
        rho0=float(header["rho0"]),
        max_depth=int(header["max_depth"]),
        min_mass=float(header["min_mass"]),
        seed=int(header["seed"]),
    )
