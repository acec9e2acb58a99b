"""Hierarchies of coherent set pairs in time-dependent flows.

Builds sparse transition estimates of the transfer operator from advected
test points, finds maximally coherent set pairs by thresholding second
singular vectors, and recursively subdivides each pair under relative
measures into a labeled binary tree.
"""

from .coherence import CoherentPair, coherence_ratio, optimize_split
from .config import RunConfig, load_config
from .dynamics import (
    ROSSBY_DEFAULT_PARAMS,
    FlowSpec,
    GriddedField,
    TrajectoryEnsemble,
    advect,
    load_gridded,
    save_gridded,
    seed_uniform,
    standard_map_iterate,
    velocity,
)
from .estimator import CoherentSetHierarchy
from .hierarchy import (
    UNASSIGNED_LABEL,
    HierarchyNode,
    HierarchyTree,
    assign_labels,
    build_tree,
    relative_weights,
    tree_from_text,
    tree_to_text,
)
from .mesh import (
    OUTSIDE,
    Partition,
    Rect,
    TriMesh,
    build_uniform,
    locate,
    occupancy_mask,
    uniform_partition,
)
from .pipeline import Bundle, read_bundle, run_pipeline, verify_bundle, write_bundle
from .render import RenderSpec, render
from .sampling import SamplingAdvice, advise, estimate_lipschitz
from .spectral import SingularPair, second_singular
from .transfer import TransitionMatrix, build_matrix, push_measure, restrict

__version__ = "0.1.0"

__all__ = [
    "OUTSIDE",
    "ROSSBY_DEFAULT_PARAMS",
    "UNASSIGNED_LABEL",
    "Bundle",
    "CoherentPair",
    "CoherentSetHierarchy",
    "FlowSpec",
    "GriddedField",
    "HierarchyNode",
    "HierarchyTree",
    "Partition",
    "Rect",
    "RenderSpec",
    "RunConfig",
    "SamplingAdvice",
    "SingularPair",
    "TrajectoryEnsemble",
    "TransitionMatrix",
    "TriMesh",
    "advect",
    "advise",
    "assign_labels",
    "build_matrix",
    "build_tree",
    "build_uniform",
    "coherence_ratio",
    "estimate_lipschitz",
    "load_config",
    "load_gridded",
    "locate",
    "occupancy_mask",
    "optimize_split",
    "push_measure",
    "read_bundle",
    "relative_weights",
    "render",
    "restrict",
    "run_pipeline",
    "save_gridded",
    "second_singular",
    "seed_uniform",
    "standard_map_iterate",
    "tree_from_text",
    "tree_to_text",
    "uniform_partition",
    "velocity",
    "verify_bundle",
    "write_bundle",
]
