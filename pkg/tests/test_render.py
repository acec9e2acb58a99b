import re

import numpy as np
import pytest

from cohtree.errors import RenderError
from cohtree.hierarchy import UNASSIGNED_LABEL, assign_labels, build_tree
from cohtree.mesh import Rect, build_uniform
from cohtree.render import NEUTRAL, RenderSpec, palette, render, truncate_labels
from cohtree.transfer import TransitionMatrix


def identity_tree(n_cells, depth, rho0=0.5):
    tm = TransitionMatrix.from_dense(np.eye(2 * n_cells))
    p = np.full(2 * n_cells, 1.0 / (2 * n_cells))
    return tm, build_tree(tm, p, rho0=rho0, max_depth=depth, min_mass=0.01, seed=0)


def svg_fills(path):
    text = path.read_text()
    return set(re.findall(r'fill="(#[0-9a-f]{6})"', text))


def test_two_leaf_tree_two_colors(tmp_path):
    mesh = build_uniform(Rect(0, 1, 0, 1), 1, 1)
    tm, tree = identity_tree(1, 1)
    lx, _ = assign_labels(tree, 2)
    spec = RenderSpec(side="initial", depth=1, fmt="svg")
    render(tree, lx, mesh, spec, tmp_path / "a.svg")
    fills = svg_fills(tmp_path / "a.svg")
    assert len(fills) == 2
    neutral_hex = "#%02x%02x%02x" % NEUTRAL
    assert neutral_hex not in fills


def test_sixteen_leaf_tree_sixteen_colors(tmp_path):
    mesh = build_uniform(Rect(0, 2, 0, 1), 4, 4)  # 32 triangles
    tm, tree = identity_tree(16, 4)
    assert len(tree.leaves()) == 16
    lx, _ = assign_labels(tree, 32)
    render(tree, lx, mesh, RenderSpec(depth=4), tmp_path / "b.svg")
    assert len(svg_fills(tmp_path / "b.svg")) == 16


def test_unassigned_cells_neutral(tmp_path):
    dense = np.zeros((4, 4))
    dense[0, 0] = dense[1, 1] = dense[3, 3] = 1.0  # row 2 empty
    tm = TransitionMatrix.from_dense(dense)
    p = np.array([1 / 3, 1 / 3, 0.0, 1 / 3])
    from cohtree.hierarchy import build_tree as bt

    tree = bt(tm, p, rho0=0.5, max_depth=1, min_mass=0.1, seed=0)
    lx, _ = assign_labels(tree, 4)
    assert UNASSIGNED_LABEL in lx
    mesh = build_uniform(Rect(0, 1, 0, 1), 2, 1)
    render(tree, lx, mesh, RenderSpec(depth=1), tmp_path / "c.svg")
    assert "#%02x%02x%02x" % NEUTRAL in svg_fills(tmp_path / "c.svg")


def test_shared_palette_across_sides(tmp_path):
    mesh = build_uniform(Rect(0, 1, 0, 1), 2, 1)
    tm, tree = identity_tree(2, 2)
    lx, ly = assign_labels(tree, 4)
    ca = render(tree, lx, mesh, RenderSpec(side="initial", depth=2), tmp_path / "x.svg")
    cb = render(tree, ly, mesh, RenderSpec(side="final", depth=2), tmp_path / "y.svg")
    assert ca == cb


def test_depth_truncation_and_validation(tmp_path):
    assert truncate_labels(np.array(["11", "12", "2", "-"], dtype=object), 1).tolist() \
        == ["1", "1", "2", "-"]
    mesh = build_uniform(Rect(0, 1, 0, 1), 1, 1)
    tm, tree = identity_tree(1, 1)
    lx, _ = assign_labels(tree, 2)
    with pytest.raises(RenderError):
        render(tree, lx, mesh, RenderSpec(depth=5), tmp_path / "no.svg")
    with pytest.raises(RenderError):
        RenderSpec(side="sideways")


def test_render_deterministic_bytes(tmp_path):
    mesh = build_uniform(Rect(0, 1, 0, 1), 2, 2)
    tm, tree = identity_tree(4, 2)
    lx, _ = assign_labels(tree, 8)
    for fmt in ("svg", "ppm"):
        p1 = tmp_path / f"r1.{fmt}"
        p2 = tmp_path / f"r2.{fmt}"
        render(tree, lx, mesh, RenderSpec(depth=2, fmt=fmt), p1)
        render(tree, lx, mesh, RenderSpec(depth=2, fmt=fmt), p2)
        assert p1.read_bytes() == p2.read_bytes()


def test_ppm_header_and_size(tmp_path):
    mesh = build_uniform(Rect(0, 2, 0, 1), 2, 1)
    tm, tree = identity_tree(2, 1)
    lx, _ = assign_labels(tree, 4)
    path = tmp_path / "img.ppm"
    render(tree, lx, mesh, RenderSpec(depth=1, fmt="ppm"), path)
    raw = path.read_bytes()
    assert raw.startswith(b"P6\n480 240\n255\n")
    assert len(raw) == len(b"P6\n480 240\n255\n") + 480 * 240 * 3


def test_palette_seed_changes_assignment():
    labels = ["11", "12", "21", "22"]
    pa = palette(labels, seed=0)
    pb = palette(labels, seed=1)
    assert pa != pb
    assert set(pa) == set(pb)
