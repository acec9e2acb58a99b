"""Command-line interface: advect, matrix, tree, render, advise, verify."""

import argparse
import sys

from .config import load_config
from .errors import CohtreeError, PipelineError
from .pipeline import read_bundle, run_pipeline, verify_bundle
from .render import RenderSpec, render
from .sampling import advise, estimate_lipschitz


def _add_common(sub):
    sub.add_argument("--config", required=True, help="YAML run configuration")
    sub.add_argument("--seed", type=int, help="override the config seed")
    sub.add_argument("--rho0", type=float, help="override the stopping threshold")
    sub.add_argument("--depth", type=int, help="override max tree depth")
    sub.add_argument("--workers", type=int, default=1)


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "rho0", None) is not None:
        cfg.rho0 = args.rho0
    if getattr(args, "depth", None) is not None:
        cfg.max_depth = args.depth
    return cfg


def _report(summary):
    for key in sorted(summary):
        print(f"{key} {summary[key]}")


def cmd_stage(args, stage):
    cfg = _load(args)
    summary = run_pipeline(cfg, args.out, n_workers=args.workers, stage=stage)
    _report(summary)
    return 0


def cmd_render(args):
    bundle = read_bundle(args.out)
    if bundle.tree is None or bundle.labels_x is None:
        raise PipelineError("render", f"{args.out} holds no tree artifacts")
    depth = args.depth if args.depth is not None else bundle.tree.reached_depth()
    sides = ("initial", "final") if args.side == "both" else (args.side,)
    for side in sides:
        spec = RenderSpec(
            side=side, depth=depth, palette_seed=args.palette_seed, fmt=args.format
        )
        if side == "initial":
            mesh, labels = bundle.mesh_domain, bundle.labels_x
        else:
            mesh, labels = bundle.mesh_image, bundle.labels_y
        path = f"{args.out}/render_{side}_depth{depth}.{args.format}"
        render(bundle.tree, labels, mesh, spec, path)
        print(f"wrote {path}")
    return 0


def cmd_advise(args):
    cfg = _load(args)
    spec = cfg.flow_spec()
    if args.lipschitz is not None:
        m_raw = args.lipschitz
        m_used = m_raw
    else:
        m_raw = estimate_lipschitz(spec, cfg.domain, args.samples, seed=cfg.seed)
        m_used = m_raw * args.safety
    q = min(cfg.domain.width / cfg.nx, cfg.domain.height / cfg.ny)
    adv = advise(q, m_used, abs(cfg.tau), cfg.nx * cfg.ny)
    print("sampling advice for the configured grid and epoch")
    print(f"q {adv.q!r}")
    print(f"M_raw {m_raw!r}")
    print(f"M_used {m_used!r}")
    print(f"epoch {adv.epoch!r}")
    print(f"epsilon {adv.epsilon!r}")
    print(f"points_per_box {adv.points_per_box}")
    print(f"boxes {cfg.nx * cfg.ny}")
    print(f"total_points {adv.total_points}")
    return 0


def cmd_verify(args):
    report = verify_bundle(args.out)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cohtree",
        description="Hierarchies of coherent set pairs in time-dependent flows",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    for stage in ("advect", "matrix", "tree"):
        sub = subs.add_parser(stage, help=f"run the pipeline through {stage}")
        _add_common(sub)
        sub.add_argument("--out", required=True, help="output bundle directory")

    sub = subs.add_parser("render", help="draw colored partitions from a bundle")
    sub.add_argument("--out", required=True, help="bundle directory")
    sub.add_argument("--depth", type=int, help="tree depth to color")
    sub.add_argument("--side", choices=("initial", "final", "both"), default="both")
    sub.add_argument("--format", choices=("svg", "ppm"), default="svg")
    sub.add_argument("--palette-seed", type=int, default=0)

    sub = subs.add_parser("advise", help="sample-count prescription for a config")
    _add_common(sub)
    sub.add_argument("--samples", type=int, default=20_000,
                     help="Jacobian sample count")
    sub.add_argument("--safety", type=float, default=1.1,
                     help="multiplier on the sampled Lipschitz estimate")
    sub.add_argument("--lipschitz", type=float,
                     help="skip estimation and use this Lipschitz constant")

    sub = subs.add_parser("verify", help="re-check invariants of a bundle")
    sub.add_argument("--out", required=True, help="bundle directory")

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("advect", "matrix", "tree"):
            return cmd_stage(args, args.command)
        if args.command == "render":
            return cmd_render(args)
        if args.command == "advise":
            return cmd_advise(args)
        return cmd_verify(args)
    except PipelineError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except CohtreeError as exc:
        print(f"error [{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
