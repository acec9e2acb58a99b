"""End-to-end runs and the persisted artifact bundle.

A run executes seed -> advect -> partitions -> matrix -> tree and writes a
bundle of plain-text/NPY artifacts into a directory it owns exclusively.
Identical configs and seeds give byte-identical bundles, independent of the
worker count.  ``verify_bundle`` re-checks the module invariants on the
persisted files and reports pass/fail per invariant.
"""

import shutil
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import scipy.sparse as sp
import yaml

from .coherence import coherence_ratio
from .dynamics import advect, seed_uniform, wet_at
from .errors import BundleError, CohtreeError, PipelineError
from .hierarchy import assign_labels, build_tree, tree_from_text, tree_to_text
from .mesh import TriMesh, occupancy_mask, uniform_partition
from .transfer import TransitionMatrix, build_matrix

STAGES = ("advect", "matrix", "tree")

_ROOT_TOKEN = "."


@dataclass
class Bundle:
    """In-memory view of a run's persisted artifacts (missing parts None)."""

    config: dict
    mesh_domain: TriMesh = None
    active_domain: np.ndarray = None
    mesh_image: TriMesh = None
    active_image: np.ndarray = None
    weights: np.ndarray = None
    matrix: TransitionMatrix = None
    tree: object = None
    labels_x: np.ndarray = None
    labels_y: np.ndarray = None
    ensemble: dict = None
    points: dict = field(default=None, repr=False)


# -- scalar/array text helpers -------------------------------------------------


def _write(path, text):
    Path(path).write_text(text)


def _fmt_float(x):
    return repr(float(x))


def write_weights(weights, path):
    lines = [str(len(weights))]
    lines += [_fmt_float(w) for w in weights]
    _write(path, "\n".join(lines) + "\n")


def read_weights(path):
    lines = Path(path).read_text().split()
    n = int(lines[0])
    vals = np.array([float(t) for t in lines[1:]], dtype=float)
    if vals.size != n:
        raise BundleError(f"{path}: expected {n} weights, found {vals.size}")
    return vals


def write_matrix(tm, matrix_path, outflow_path):
    coo = tm.probs.tocoo()
    lines = [f"{tm.n_rows} {tm.n_cols} {coo.nnz}"]
    lines += [
        f"{i} {j} {_fmt_float(v)}"
        for i, j, v in zip(coo.row, coo.col, coo.data)
    ]
    _write(matrix_path, "\n".join(lines) + "\n")
    lines = [str(tm.n_rows)]
    lines += [
        f"{_fmt_float(o)} {c}" for o, c in zip(tm.outflow, tm.row_counts)
    ]
    _write(outflow_path, "\n".join(lines) + "\n")


def read_matrix_raw(matrix_path, outflow_path):
    """Parse matrix files without enforcing invariants (for verification)."""
    try:
        text = Path(matrix_path).read_text().splitlines()
        n_rows, n_cols, nnz = (int(t) for t in text[0].split())
        if len(text) < nnz + 1:
            raise BundleError(
                f"{matrix_path}: header promises {nnz} entries, "
                f"found {len(text) - 1}"
            )
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k, ln in enumerate(text[1 : nnz + 1]):
            i, j, v = ln.split()
            rows[k], cols[k], vals[k] = int(i), int(j), float(v)
        probs = sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
        otext = Path(outflow_path).read_text().splitlines()
        if int(otext[0]) != n_rows:
            raise BundleError(f"{outflow_path}: row count mismatch")
        outflow = np.empty(n_rows)
        row_counts = np.empty(n_rows, dtype=np.int64)
        for k, ln in enumerate(otext[1 : n_rows + 1]):
            o, c = ln.split()
            outflow[k], row_counts[k] = float(o), int(c)
        return probs, row_counts, outflow
    except (OSError, ValueError, IndexError) as exc:
        raise BundleError(f"cannot parse matrix files: {exc}") from exc


def read_matrix(matrix_path, outflow_path):
    probs, row_counts, outflow = read_matrix_raw(matrix_path, outflow_path)
    return TransitionMatrix(probs, row_counts, outflow)


def write_mesh(mesh, active, path):
    text = mesh.to_header() + "active " + " ".join(str(i) for i in active) + "\n"
    _write(path, text)


def read_mesh(path):
    lines = Path(path).read_text().splitlines()
    mesh = TriMesh.from_header("\n".join(lines[:3]))
    if not lines[3].startswith("active"):
        raise BundleError(f"{path}: missing active-cell list")
    active = np.array([int(t) for t in lines[3].split()[1:]], dtype=np.int64)
    return mesh, active


def write_labels(labels, path):
    lines = []
    for i, lab in enumerate(labels):
        token = _ROOT_TOKEN if lab == "" else str(lab)
        lines.append(f"{i} {token}")
    _write(path, "\n".join(lines) + "\n")


def read_labels(path):
    labels = []
    for ln in Path(path).read_text().splitlines():
        _, token = ln.split()
        labels.append("" if token == _ROOT_TOKEN else token)
    return np.array(labels, dtype=object)


def write_keyvalues(mapping, path):
    lines = [f"{k} {v!r}" if isinstance(v, float) else f"{k} {v}"
             for k, v in mapping.items()]
    _write(path, "\n".join(lines) + "\n")


def read_keyvalues(path):
    out = {}
    for ln in Path(path).read_text().splitlines():
        key, val = ln.split(maxsplit=1)
        try:
            out[key] = int(val)
        except ValueError:
            try:
                out[key] = float(val)
            except ValueError:
                out[key] = val
    return out


# -- bundle write/read ---------------------------------------------------------


def write_bundle(bundle, outdir):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.yaml", yaml.safe_dump(bundle.config, sort_keys=True))
    if bundle.ensemble is not None:
        write_keyvalues(bundle.ensemble, out / "ensemble.txt")
    if bundle.points is not None:
        for name in ("initial", "final", "exited"):
            np.save(out / f"{name}.npy", bundle.points[name])
    if bundle.mesh_domain is not None:
        write_mesh(bundle.mesh_domain, bundle.active_domain, out / "mesh_domain.txt")
    if bundle.mesh_image is not None:
        write_mesh(bundle.mesh_image, bundle.active_image, out / "mesh_image.txt")
    if bundle.weights is not None:
        write_weights(bundle.weights, out / "weights.txt")
    if bundle.matrix is not None:
        write_matrix(bundle.matrix, out / "matrix.txt", out / "outflow.txt")
    if bundle.tree is not None:
        _write(out / "tree.txt", tree_to_text(bundle.tree))
    if bundle.labels_x is not None:
        write_labels(bundle.labels_x, out / "labels_x.txt")
        write_labels(bundle.labels_y, out / "labels_y.txt")
    return out


def read_bundle(outdir):
    out = Path(outdir)
    if not out.is_dir():
        raise BundleError(f"{outdir} is not a directory")
    try:
        config = yaml.safe_load((out / "config.yaml").read_text())
    except OSError as exc:
        raise BundleError(f"unreadable bundle: {exc}") from exc
    bundle = Bundle(config=config)
    if (out / "ensemble.txt").exists():
        bundle.ensemble = read_keyvalues(out / "ensemble.txt")
    if (out / "initial.npy").exists():
        bundle.points = {
            name: np.load(out / f"{name}.npy")
            for name in ("initial", "final", "exited")
        }
    if (out / "mesh_domain.txt").exists():
        bundle.mesh_domain, bundle.active_domain = read_mesh(out / "mesh_domain.txt")
    if (out / "mesh_image.txt").exists():
        bundle.mesh_image, bundle.active_image = read_mesh(out / "mesh_image.txt")
    if (out / "weights.txt").exists():
        bundle.weights = read_weights(out / "weights.txt")
    if (out / "matrix.txt").exists():
        bundle.matrix = read_matrix(out / "matrix.txt", out / "outflow.txt")
    if (out / "tree.txt").exists():
        bundle.tree = tree_from_text((out / "tree.txt").read_text())
    if (out / "labels_x.txt").exists():
        bundle.labels_x = read_labels(out / "labels_x.txt")
        bundle.labels_y = read_labels(out / "labels_y.txt")
    return bundle


# -- the end-to-end run ---------------------------------------------------------


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except CohtreeError as exc:
        raise PipelineError(name, str(exc)) from exc


def run_pipeline(config, outdir, n_workers=1, stage="tree"):
    """Execute the pipeline up to ``stage`` and persist the bundle.

    ``stage`` is one of ``advect``, ``matrix``, ``tree``.  The output
    directory must not already contain files; partial outputs are removed on
    failure.
    """
    if stage not in STAGES:
        raise PipelineError("validate", f"unknown stage {stage!r}")
    out = Path(outdir)
    if out.exists() and any(out.iterdir()):
        raise PipelineError("validate", f"output directory {out} is not empty")
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)

    try:
        return _run_stages(config, out, n_workers, stage)
    except BaseException:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        else:
            for child in out.iterdir():
                child.unlink()
        raise


def _run_stages(config, out, n_workers, stage):
    spec = _stage("validate", config.flow_spec)
    bundle = Bundle(config=config.to_dict())

    pts = _stage("seed", seed_uniform, config.domain, config.n_points, config.seed)
    if config.kind == "gridded":
        wet = wet_at(spec.field, pts, spec.t0)
        pts = pts[wet]
        if len(pts) == 0:
            raise PipelineError("seed", "no seeded point lies on wet cells")

    ens = _stage("advect", advect, spec, pts, config.seed, n_workers)
    bundle.ensemble = {
        "n_points": len(ens),
        "seed": config.seed,
        "t0": float(ens.t0),
        "tau": float(ens.tau),
        "exited": int(ens.exited.sum()),
        "initial_xmin": float(ens.initial[:, 0].min()),
        "initial_xmax": float(ens.initial[:, 0].max()),
        "initial_ymin": float(ens.initial[:, 1].min()),
        "initial_ymax": float(ens.initial[:, 1].max()),
        "final_xmin": float(ens.final[:, 0].min()),
        "final_xmax": float(ens.final[:, 0].max()),
        "final_ymin": float(ens.final[:, 1].min()),
        "final_ymax": float(ens.final[:, 1].max()),
    }
    bundle.points = {
        "initial": ens.initial,
        "final": ens.final,
        "exited": ens.exited,
    }
    if stage == "advect":
        write_bundle(bundle, out)
        return {"outdir": str(out), "stage": stage, "n_points": len(ens)}

    def build_partitions():
        mesh_d = TriMesh(config.domain, config.nx, config.ny)
        if config.open_system:
            active_d = occupancy_mask(mesh_d, ens.initial)
            inx, iny = config.image_dims()
            mesh_i = TriMesh(config.image_rect(), inx, iny)
            keep = ~ens.exited
            active_i = occupancy_mask(mesh_i, ens.final[keep])
        else:
            active_d = None
            mesh_i, active_i = mesh_d, None
        part_d = uniform_partition(mesh_d, active_d)
        part_i = uniform_partition(mesh_i, active_i)
        return part_d, part_i

    part_d, part_i = _stage("partitions", build_partitions)
    bundle.mesh_domain = part_d.mesh
    bundle.active_domain = part_d.active
    bundle.mesh_image = part_i.mesh
    bundle.active_image = part_i.active
    bundle.weights = part_d.weights

    tm = _stage("matrix", build_matrix, ens, part_d, part_i, n_workers)
    bundle.matrix = tm
    if stage == "matrix":
        write_bundle(bundle, out)
        return {
            "outdir": str(out),
            "stage": stage,
            "n_points": len(ens),
            "occupied_rows": int((tm.row_counts > 0).sum()),
            "total_outflow": float(
                np.dot(part_d.weights, tm.outflow)
            ),
        }

    tree = _stage(
        "tree",
        build_tree,
        tm,
        part_d.weights,
        config.rho0,
        config.max_depth,
        config.min_mass,
        config.seed,
        config.svd_tol,
        config.svd_max_iter,
    )
    bundle.tree = tree
    lx, ly = assign_labels(tree, tm.n_rows, tm.n_cols)
    bundle.labels_x, bundle.labels_y = lx, ly
    write_bundle(bundle, out)
    leaves = tree.leaves()
    return {
        "outdir": str(out),
        "stage": stage,
        "n_points": len(ens),
        "occupied_rows": int((tm.row_counts > 0).sum()),
        "total_outflow": float(np.dot(part_d.weights, tm.outflow)),
        "root_rho_star": tree.root.rho_star,
        "n_leaves": len(leaves),
        "reached_depth": tree.reached_depth(),
    }


# -- verification ----------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def lines(self):
        return [
            f"{'pass' if c.passed else 'FAIL'} {c.name}"
            + (f": {c.detail}" if c.detail else "")
            for c in self.checks
        ]


def verify_bundle(path):
    """Re-check persisted invariants: row sums, nesting, stopping, ratios."""
    out = Path(path)
    if not out.is_dir():
        raise BundleError(f"{path} is not a directory")
    checks = []

    probs = row_counts = outflow = None
    if (out / "matrix.txt").exists():
        probs, row_counts, outflow = read_matrix_raw(
            out / "matrix.txt", out / "outflow.txt"
        )
        rowsum = np.asarray(probs.sum(axis=1)).ravel()
        occ = row_counts > 0
        bad = np.flatnonzero(occ & (np.abs(rowsum + outflow - 1.0) > 1e-12))
        checks.append(
            CheckResult(
                "matrix-row-sums",
                bad.size == 0,
                "" if bad.size == 0 else f"row {int(bad[0])} sums to "
                f"{float(rowsum[bad[0]] + outflow[bad[0]])!r}",
            )
        )
        nonneg = probs.nnz == 0 or probs.data.min() >= 0
        checks.append(CheckResult("matrix-nonnegative", bool(nonneg)))

    weights = None
    if (out / "weights.txt").exists():
        weights = read_weights(out / "weights.txt")
        total = float(weights.sum())
        ok = bool(np.all(weights >= 0) and abs(total - 1.0) <= 1e-9)
        checks.append(
            CheckResult("weights-normalized", ok, f"total mass {total!r}")
        )

    tree = None
    if (out / "tree.txt").exists():
        tree = tree_from_text((out / "tree.txt").read_text())
        ok, detail = True, ""
        for node in tree.nodes():
            if node.children:
                a, b = node.children
                if (
                    np.intersect1d(a.rows, b.rows).size
                    or np.intersect1d(a.cols, b.cols).size
                    or not np.all(np.isin(a.rows, node.rows))
                    or not np.all(np.isin(b.rows, node.rows))
                    or not np.all(np.isin(a.cols, node.cols))
                    or not np.all(np.isin(b.cols, node.cols))
                ):
                    ok, detail = False, f"node {node.label or _ROOT_TOKEN}"
                    break
        checks.append(CheckResult("tree-nesting", ok, detail))

        ok, detail = True, ""
        for node in tree.nodes():
            if node.children and (
                node.rho_star is None or node.rho_star < tree.rho0
            ):
                ok, detail = False, (
                    f"internal node {node.label or _ROOT_TOKEN} has "
                    f"rho_star {node.rho_star!r} < rho0 {tree.rho0!r}"
                )
                break
            if node.depth > tree.max_depth:
                ok, detail = False, f"node {node.label} beyond max_depth"
                break
        checks.append(CheckResult("tree-stopping-soundness", ok, detail))

        if probs is not None and weights is not None:
            tm_view = SimpleNamespace(probs=probs)
            ok, detail = True, ""
            for node in tree.nodes():
                try:
                    rho = coherence_ratio(tm_view, weights, node.rows, node.cols)
                except CohtreeError as exc:
                    ok, detail = False, f"node {node.label or _ROOT_TOKEN}: {exc}"
                    break
                if abs(rho - node.rho) > 1e-12:
                    ok, detail = False, (
                        f"node {node.label or _ROOT_TOKEN}: stored rho "
                        f"{node.rho!r}, recomputed {rho!r}"
                    )
                    break
            checks.append(CheckResult("tree-rho-recomputation", ok, detail))

    if tree is not None and (out / "labels_x.txt").exists():
        lx = read_labels(out / "labels_x.txt")
        ly = read_labels(out / "labels_y.txt")
        ex, ey = assign_labels(tree, lx.size, ly.size)
        ok = bool(np.array_equal(lx, ex) and np.array_equal(ly, ey))
        checks.append(CheckResult("labels-consistency", ok))

    if not checks:
        raise BundleError(f"{path}: no verifiable artifacts found")
    return VerifyReport(checks)
