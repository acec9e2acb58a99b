"""Structured right-triangle meshes, point location, and measure-weighted partitions.

A rectangular window is tiled by ``nx * ny`` congruent grid cells, each split
along its lower-left to upper-right diagonal into a lower and an upper
triangle.  Cells are numbered row-major (``cell = iy * nx + ix``) and the two
triangles of a cell are ``2 * cell`` (lower) and ``2 * cell + 1`` (upper), so
point location is constant-time cell arithmetic plus one diagonal test.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyPartitionError,
    InvalidDomainError,
    InvalidPointError,
)

OUTSIDE = -1


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangular window, in the flow's own units."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidDomainError(f"non-finite rectangle bounds {vals}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise InvalidDomainError(
                f"degenerate rectangle [{self.xmin}, {self.xmax}] x "
                f"[{self.ymin}, {self.ymax}]"
            )

    @property
    def width(self):
        return self.xmax - self.xmin

    @property
    def height(self):
        return self.ymax - self.ymin

    @property
    def area(self):
        return self.width * self.height

    def contains(self, points):
        """Boolean mask of points inside the closed rectangle."""
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)


class TriMesh:
    """Uniform triangulation of a :class:`Rect` into ``2 * nx * ny`` triangles.

    Attributes
    ----------
    rect : Rect
        Covered window.
    grid_dims : tuple of int
        Cell counts ``(nx, ny)``.
    vertices : ndarray, shape (n_vertices, 2)
        Grid vertex coordinates, row-major over ``(ny + 1, nx + 1)``.
    triangles : ndarray, shape (n_triangles, 3)
        Vertex-index triples, counter-clockwise.
    cell_area : float
        Area of each (congruent) triangle.
    """

    def __init__(self, rect, nx, ny):
        nx, ny = int(nx), int(ny)
        if nx < 1 or ny < 1:
            raise InvalidDomainError(f"cell counts must be >= 1, got nx={nx} ny={ny}")
        self.rect = rect
        self.grid_dims = (nx, ny)
        xs = np.linspace(rect.xmin, rect.xmax, nx + 1)
        ys = np.linspace(rect.ymin, rect.ymax, ny + 1)
        gx, gy = np.meshgrid(xs, ys)
        self.vertices = np.column_stack([gx.ravel(), gy.ravel()])

        # vertex index of grid node (ix, iy) is iy * (nx + 1) + ix
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
        ix, iy = ix.ravel(), iy.ravel()
        v00 = iy * (nx + 1) + ix
        v10 = v00 + 1
        v01 = v00 + (nx + 1)
        v11 = v01 + 1
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
        tris[0::2] = lower
        tris[1::2] = upper
        self.triangles = tris
        self.cell_area = rect.area / (2.0 * nx * ny)
        # cached scale factors for point location
        self._sx = nx / rect.width
        self._sy = ny / rect.height

    @property
    def n_triangles(self):
        nx, ny = self.grid_dims
        return 2 * nx * ny

    def triangle_areas(self):
        """Signed areas computed from vertex coordinates."""
        p = self.vertices[self.triangles]
        ab = p[:, 1] - p[:, 0]
        ac = p[:, 2] - p[:, 0]
        return 0.5 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def locate(self, point):
        """Index of the triangle containing ``point``, or :data:`OUTSIDE`.

        Boundary ties are broken toward the lower-indexed triangle; points
        exactly on a cell diagonal belong to the lower triangle.
        """
        point = np.asarray(point, dtype=float)
        if point.shape != (2,):
            raise InvalidPointError(f"expected a 2D point, got shape {point.shape}")
        return int(self.locate_many(point[None, :])[0])

    def locate_many(self, points):
        """Vectorized :meth:`locate` over an ``(n, 2)`` array."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidPointError(f"expected an (n, 2) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
            raise InvalidPointError(f"non-finite coordinates at point index {bad}")

        nx, ny = self.grid_dims
        out = np.full(pts.shape[0], OUTSIDE, dtype=np.int64)
        inside = self.rect.contains(pts)
        if not inside.any():
            return out

        u = (pts[inside, 0] - self.rect.xmin) * self._sx
        v = (pts[inside, 1] - self.rect.ymin) * self._sy
        ix = np.minimum(u.astype(np.int64), nx - 1)
        iy = np.minimum(v.astype(np.int64), ny - 1)
        fx = u - ix
        fy = v - iy
        tri = 2 * (iy * nx + ix) + (fy > fx)

        # points exactly on an interior gridline also belong to the adjacent
        # lower-indexed cell; resolve those few by explicit candidate scan
        tie = ((u == ix) & (ix > 0)) | ((v == iy) & (iy > 0))
        if tie.any():
            for k in np.flatnonzero(tie):
                tri[k] = self._locate_tie(u[k], v[k], int(ix[k]), int(iy[k]))
        out[inside] = tri
        return out

    def _locate_tie(self, u, v, ix, iy):
        nx, _ = self.grid_dims
        jys = [iy - 1, iy] if (v == iy and iy > 0) else [iy]
        jxs = [ix - 1, ix] if (u == ix and ix > 0) else [ix]
        for jy in jys:
            for jx in jxs:
                fx = u - jx
                fy = v - jy
                if not (0.0 <= fx <= 1.0 and 0.0 <= fy <= 1.0):
                    continue
                cell = jy * nx + jx
                if fy <= fx:
                    return 2 * cell
                return 2 * cell + 1
        raise AssertionError("tie candidate scan missed a containing triangle")

    # -- serialization ----------------------------------------------------

    def to_header(self):
        """Plain-text mesh description (bounds and grid dims)."""
        r = self.rect
        nx, ny = self.grid_dims
        return (
            "trimesh v1\n"
            f"rect {r.xmin!r} {r.xmax!r} {r.ymin!r} {r.ymax!r}\n"
            f"grid {nx} {ny}\n"
        )

    @classmethod
    def from_header(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != "trimesh v1":
            raise InvalidDomainError("not a trimesh header")
        fields = {}
        for ln in lines[1:]:
            key, *rest = ln.split()
            fields[key] = rest
        try:
            xmin, xmax, ymin, ymax = (float(t) for t in fields["rect"])
            nx, ny = (int(t) for t in fields["grid"])
        except (KeyError, ValueError) as exc:
            raise InvalidDomainError(f"malformed trimesh header: {exc}") from exc
        return cls(Rect(xmin, xmax, ymin, ymax), nx, ny)


@dataclass
class Partition:
    """A mesh with per-triangle measure weights and an active-cell mask.

    Inactive cells carry zero weight.  At the root level the active weights
    are normalized to total mass 1; pushforward measures in open systems may
    total less than 1.
    """

    mesh: TriMesh
    weights: np.ndarray
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.mesh.n_triangles,):
            raise EmptyPartitionError(
                f"weights length {self.weights.shape} does not match "
                f"{self.mesh.n_triangles} triangles"
            )
        if self.active is None:
            self.active = np.arange(self.mesh.n_triangles)
        self.active = np.unique(np.asarray(self.active, dtype=np.int64))
        if self.active.size == 0:
            raise EmptyPartitionError("partition with no active cells")
        if self.active[0] < 0 or self.active[-1] >= self.mesh.n_triangles:
            raise EmptyPartitionError("active indices out of range")
        if np.any(self.weights < 0):
            raise EmptyPartitionError("negative weights")
        mask = np.zeros(self.mesh.n_triangles, dtype=bool)
        mask[self.active] = True
        if np.any(self.weights[~mask] != 0.0):
            raise EmptyPartitionError("inactive cells must have zero weight")
        total = self.weights.sum()
        if total > 1.0 + 1e-9:
            raise EmptyPartitionError(f"total weight {total} exceeds 1")

    @property
    def active_mask(self):
        mask = np.zeros(self.mesh.n_triangles, dtype=bool)
        mask[self.active] = True
        return mask

    def total_mass(self):
        return float(self.weights.sum())


def build_uniform(rect, nx, ny):
    """Triangulate ``rect`` into ``2 * nx * ny`` congruent right triangles."""
    return TriMesh(rect, nx, ny)


def locate(mesh, point):
    """Triangle index containing ``point``, or :data:`OUTSIDE` (-1)."""
    return mesh.locate(point)


def uniform_partition(mesh, active=None):
    """Equal weights ``1 / |active|`` on the active cells, zero elsewhere."""
    if active is None:
        active = np.arange(mesh.n_triangles)
    active = np.unique(np.asarray(active, dtype=np.int64))
    if active.size == 0:
        raise EmptyPartitionError("cannot build a partition over an empty active set")
    weights = np.zeros(mesh.n_triangles)
    weights[active] = 1.0 / active.size
    return Partition(mesh, weights, active)


def occupancy_mask(mesh, points):
    """Sorted indices of triangles containing at least one of ``points``."""
    idx = mesh.locate_many(points)
    idx = idx[idx >= 0]
    return np.unique(idx)
