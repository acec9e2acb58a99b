"""Scikit-learn style estimator wrapping the full pipeline.

``CoherentSetHierarchy`` behaves like a clustering estimator: ``fit`` takes
trajectory endpoints as an ``(n_samples, 4)`` array of columns
``[x0, y0, x1, y1]``, builds the transition estimate, and derives the
hierarchy of coherent pairs; ``labels_`` assigns each training sample the
integer code of its leaf and ``predict`` maps new initial positions to leaf
codes through the fitted mesh.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dynamics import TrajectoryEnsemble
from .hierarchy import UNASSIGNED_LABEL, assign_labels, build_tree
from .mesh import Rect, TriMesh, occupancy_mask, uniform_partition
from .transfer import build_matrix


class CoherentSetHierarchy(ClusterMixin, BaseEstimator):
    """Hierarchical partition of a flow window into coherent set pairs.

    Parameters
    ----------
    nx, ny : int
        Domain grid cell counts (``2 * nx * ny`` triangles).
    domain : tuple (xmin, xmax, ymin, ymax), optional
        Domain window; defaults to the bounding box of the initial points.
    image_domain : tuple, optional
        Image window; defaults to the bounding box of the final points.
    image_nx, image_ny : int, optional
        Image grid; defaults to ``nx``, ``ny``.
    rho0 : float
        Coherence threshold stopping a branch.
    max_depth : int
        Maximum splits per branch.
    min_mass : float
        Admissibility floor for either side of a split.
    svd_tol, svd_max_iter : float, int
        Iterative singular-pair controls.
    closed : bool
        If True, reuse the domain partition for the image side (all cells
        active); otherwise activate only occupied cells on both sides.
    random_state : int
        Seeds the singular-vector iterations.

    Attributes
    ----------
    mesh_, image_mesh_ : TriMesh
    matrix_ : TransitionMatrix
    tree_ : HierarchyTree
    weights_ : ndarray
    leaf_labels_ : list of str
        Leaf label per integer code.
    cell_labels_x_, cell_labels_y_ : ndarray of str
        Leaf label per domain/image cell.
    labels_ : ndarray of int
        Leaf code per training sample (-1 for unassigned).
    """

    def __init__(
        self,
        nx=32,
        ny=32,
        domain=None,
        image_domain=None,
        image_nx=None,
        image_ny=None,
        rho0=0.9,
        max_depth=3,
        min_mass=0.05,
        svd_tol=1e-10,
        svd_max_iter=100_000,
        closed=False,
        random_state=0,
    ):
        self.nx = nx
        self.ny = ny
        self.domain = domain
        self.image_domain = image_domain
        self.image_nx = image_nx
        self.image_ny = image_ny
        self.rho0 = rho0
        self.max_depth = max_depth
        self.min_mass = min_mass
        self.svd_tol = svd_tol
        self.svd_max_iter = svd_max_iter
        self.closed = closed
        self.random_state = random_state

    def fit(self, X, y=None):
        """Fit the hierarchy from trajectory endpoints ``[x0, y0, x1, y1]``."""
        X = check_array(X, ensure_min_features=4)
        if X.shape[1] != 4:
            raise ValueError(
                f"X must have 4 columns [x0, y0, x1, y1], got {X.shape[1]}"
            )
        initial, final = X[:, :2], X[:, 2:]

        rect = self._window(self.domain, initial)
        self.mesh_ = TriMesh(rect, self.nx, self.ny)
        if self.closed and self.image_domain is None:
            self.image_mesh_ = self.mesh_
            part_d = uniform_partition(self.mesh_)
            part_i = part_d
        else:
            inx = self.image_nx if self.image_nx is not None else self.nx
            iny = self.image_ny if self.image_ny is not None else self.ny
            self.image_mesh_ = TriMesh(self._window(self.image_domain, final), inx, iny)
            part_d = uniform_partition(
                self.mesh_, occupancy_mask(self.mesh_, initial)
            )
            part_i = uniform_partition(
                self.image_mesh_, occupancy_mask(self.image_mesh_, final)
            )

        ensemble = TrajectoryEnsemble(initial, final, t0=0.0, tau=1.0,
                                      seed=self.random_state)
        self.matrix_ = build_matrix(ensemble, part_d, part_i)
        self.weights_ = part_d.weights
        self.tree_ = build_tree(
            self.matrix_,
            self.weights_,
            rho0=self.rho0,
            max_depth=self.max_depth,
            min_mass=self.min_mass,
            seed=self.random_state,
            svd_tol=self.svd_tol,
            svd_max_iter=self.svd_max_iter,
        )
        self.cell_labels_x_, self.cell_labels_y_ = assign_labels(
            self.tree_, self.matrix_.n_rows, self.matrix_.n_cols
        )
        self.leaf_labels_ = sorted(
            {l for l in self.cell_labels_x_ if l != UNASSIGNED_LABEL}
        )
        self._code_of = {lab: k for k, lab in enumerate(self.leaf_labels_)}
        self._cell_codes = np.array(
            [self._code_of.get(l, -1) for l in self.cell_labels_x_], dtype=int
        )
        self.labels_ = self._codes_for(initial)
        self.n_features_in_ = 4
        return self

    def predict(self, X):
        """Leaf code of each initial position (-1 outside every leaf)."""
        check_is_fitted(self, "tree_")
        X = check_array(X, ensure_min_features=2)
        pts = X[:, :2]
        return self._codes_for(pts)

    def _codes_for(self, pts):
        idx = self.mesh_.locate_many(pts)
        codes = np.full(len(pts), -1, dtype=int)
        inside = idx >= 0
        codes[inside] = self._cell_codes[idx[inside]]
        return codes

    @staticmethod
    def _window(domain, pts):
        if domain is not None:
            return Rect(*domain)
        return Rect(
            float(pts[:, 0].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].min()),
            float(pts[:, 1].max()),
        )
