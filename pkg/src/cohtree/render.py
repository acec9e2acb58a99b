"""Static rendering of labeled partitions.

Every triangle is filled with its leaf's color; the same label gets the same
color on the initial-side and final-side figures, so matching colors mark a
coherent pair.  Output is either a standalone SVG or a binary PPM raster;
both are written byte-deterministically for a fixed palette seed.
"""

import colorsys
from dataclasses import dataclass

import numpy as np

from .errors import RenderError
from .hierarchy import UNASSIGNED_LABEL

NEUTRAL = (204, 204, 204)  # reserved for unassigned cells

SIDES = ("initial", "final")
FORMATS = ("svg", "ppm")


@dataclass
class RenderSpec:
    """Which side to draw, at which tree depth, with which palette/format."""

    side: str = "initial"
    depth: int = None
    palette_seed: int = 0
    fmt: str = "svg"

    def __post_init__(self):
        if self.side not in SIDES:
            raise RenderError(f"side must be one of {SIDES}, got {self.side!r}")
        if self.fmt not in FORMATS:
            raise RenderError(f"format must be one of {FORMATS}, got {self.fmt!r}")


def truncate_labels(labels, depth):
    """Coarsen leaf labels to a display depth (shallower leaves unchanged)."""
    out = np.array(labels, dtype=object)
    for i, lab in enumerate(out):
        if lab != UNASSIGNED_LABEL and len(lab) > depth:
            out[i] = lab[:depth]
    return out


def palette(labels, seed=0):
    """Deterministic label -> (r, g, b) map with well-separated hues."""
    keys = sorted({l for l in labels if l != UNASSIGNED_LABEL})
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(keys))
    colors = {}
    for rank, key_idx in enumerate(order):
        hue = rank / max(len(keys), 1)
        r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.88)
        colors[keys[key_idx]] = (int(r * 255), int(g * 255), int(b * 255))
    colors[UNASSIGNED_LABEL] = NEUTRAL
    colors.setdefault("", NEUTRAL)
    return colors


def render(tree, labels, mesh, spec, path):
    """Write one side's figure; returns the color map used.

    ``labels`` is the per-cell leaf-label sequence for the chosen side.
    """
    labels = np.asarray(labels, dtype=object)
    if labels.shape != (mesh.n_triangles,):
        raise RenderError(
            f"label count {labels.shape} does not match "
            f"{mesh.n_triangles} triangles"
        )
    depth = spec.depth if spec.depth is not None else tree.reached_depth()
    if depth > tree.reached_depth():
        raise RenderError(
            f"requested depth {depth} exceeds tree depth {tree.reached_depth()}"
        )
    shown = truncate_labels(labels, depth)
    # palette keyed by the whole tree at this depth, so both sides share colors
    tree_labels = truncate_labels(
        [leaf.label for leaf in tree.leaves()], depth
    )
    colors = palette(tree_labels, spec.palette_seed)
    colors.setdefault(UNASSIGNED_LABEL, NEUTRAL)

    if spec.fmt == "svg":
        _write_svg(mesh, shown, colors, path)
    else:
        _write_ppm(mesh, shown, colors, path)
    return colors


def _write_svg(mesh, labels, colors, path, width=800):
    r = mesh.rect
    height = max(1, int(round(width * r.height / r.width)))
    sx = width / r.width
    sy = height / r.height

    def txt(x, y):
        # svg's y axis points down
        return f"{(x - r.xmin) * sx:.2f},{(r.ymax - y) * sy:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    ]
    tris = mesh.vertices[mesh.triangles]
    for i in range(mesh.n_triangles):
        c = colors.get(labels[i], NEUTRAL)
        pts = " ".join(txt(x, y) for x, y in tris[i])
        parts.append(
            f'<polygon points="{pts}" fill="#{c[0]:02x}{c[1]:02x}{c[2]:02x}"/>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def _write_ppm(mesh, labels, colors, path, width=480):
    r = mesh.rect
    height = max(1, int(round(width * r.height / r.width)))
    xs = r.xmin + (np.arange(width) + 0.5) * (r.width / width)
    ys = r.ymax - (np.arange(height) + 0.5) * (r.height / height)
    gx, gy = np.meshgrid(xs, ys)
    idx = mesh.locate_many(np.column_stack([gx.ravel(), gy.ravel()]))

    rgb = np.empty((idx.size, 3), dtype=np.uint8)
    lut = np.empty((mesh.n_triangles + 1, 3), dtype=np.uint8)
    lut[-1] = NEUTRAL
    for i in range(mesh.n_triangles):
        lut[i] = colors.get(labels[i], NEUTRAL)
    rgb[:] = lut[idx]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
