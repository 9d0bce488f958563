"""
NPHM command line

Single entry point with one sub-command per pipeline step:

    nphm gen --subjects 40 --expressions 8 --seed 7 --out data
    nphm train --stage identity
    nphm train --stage expression
    nphm fit --mode joint --models runs observation.ply --out fits/case0
    nphm eval --reconstruction fits/case0/posed.ply --reference scan.ply --tau-mm 1.5

Exit codes: 0 success, 1 usage or configuration error, 2 IO error,
3 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import pipeline
from .geometry.io import save_json
from .errors import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, DimensionMismatchError, HeadModelError
from .settings import RunConfig, load_run_config
from .utils.logs import configure_logging

logger = logging.getLogger(__name__)

# Commands where a checkpoint/config width disagreement is a numerical failure.
CHECKPOINT_COMMANDS = ("fit", "eval", "track", "export")


def _emit(document, as_json: bool, lines: Optional[List[str]] = None) -> None:
    if as_json:
        print(json.dumps(document, indent=2, sort_keys=True, default=str))
        return
    for line in lines or []:
        print(line)


def _run_config(args) -> RunConfig:
    overrides = {"seed": args.seed, "threads": args.threads, "out_dir": args.out, "data_dir": args.data_dir}
    return load_run_config(args.config, overrides)


def handle_gen(args):
    """Handle the gen command."""
    run = _run_config(args)
    synthetic = run.synthetic
    if args.subjects is not None:
        synthetic.num_subjects = args.subjects
    if args.test_subjects is not None:
        synthetic.num_test_subjects = args.test_subjects
    if args.expressions is not None:
        synthetic.num_expressions = args.expressions
    root = Path(args.out) if args.out else run.data_path
    manifest = pipeline.cmd_gen(run, root)
    train = sum(1 for s in manifest["subjects"] if s["split"] == "train")
    _emit({"root": str(root), "subjects": len(manifest["subjects"]), "train": train}, args.json, [
        f"Wrote {len(manifest['subjects'])} subjects ({train} train) to {root}",
    ])


def handle_train(args):
    """Handle the train command."""
    run = _run_config(args)
    if args.progress:
        run.identity_training.progress = run.expression_training.progress = True
    model = pipeline.cmd_train(run, args.stage, resume=args.resume, out=run.out_path)
    losses = pipeline.IDENTITY_LOSSES if args.stage == "identity" else pipeline.EXPRESSION_LOSSES
    document = {"stage": args.stage, "epoch": model.epoch, "out": str(run.out_path), "losses": str(run.out_path / losses)}
    _emit(document, args.json, [
        f"Trained {args.stage} stage to epoch {model.epoch}",
        f"Checkpoint and loss curve in {run.out_path}",
    ])


def handle_fit(args):
    """Handle the fit command."""
    run = _run_config(args)
    run.fitting.progress = run.fitting.progress or args.progress
    summary = pipeline.cmd_fit(
        run, args.mode, args.observations, args.models, run.out_path,
        identity_code=args.identity, reference=args.reference, landmarks=args.landmarks, resolution=args.resolution,
    )
    lines = [f"Fitted {args.mode} codes; final loss {summary['final_loss']}"]
    lines += [f"  {path}" for group in summary["files"].values() for path in group]
    if "report" in summary:
        lines.append(f"F-score {summary['report']['f_score']:.4f}, chamfer {summary['report']['l1_chamfer']:.6g}")
    _emit(summary, args.json, lines)


def handle_track(args):
    """Handle the track command."""
    run = _run_config(args)
    run.tracking.fit.progress = run.tracking.fit.progress or args.progress
    state = pipeline.cmd_track(run, args.frames, args.models, run.out_path, landmarks=args.landmarks)
    tv = state.total_variation(run.tracking.tv_eps)
    _emit({"frames": state.num_frames, "total_variation": tv, "out": str(run.out_path / "track.json")}, args.json, [
        f"Tracked {state.num_frames} frames to {run.out_path / 'track.json'}",
        f"TV(expression) {tv['tv_ex']:.6g}, TV(pose) {tv['tv_pose']:.6g}",
    ])


def handle_eval(args):
    """Handle the eval command."""
    run = _run_config(args) if args.config else None
    document = pipeline.cmd_eval(args.reconstruction, args.reference, args.tau_mm, run.metrics if run else None)
    if args.report:
        save_json(args.report, document)
    metrics = document["metrics"]
    _emit(document, args.json, [
        f"tau = {document['tau']:.6g} ({document['tau_mm']} mm)",
        f"F-score            {metrics['f_score']:.4f}",
        f"L1 chamfer         {metrics['l1_chamfer']:.6g}",
        f"Normal consistency {metrics['normal_consistency']:.4f}",
    ])


def handle_register(args):
    """Handle the register command."""
    run = _run_config(args)
    template = args.template or str(run.data_path / "template.nphm")
    summary = pipeline.cmd_register(run, args.scans, args.landmarks, template, run.out_path)
    _emit(summary, args.json, [f"Registered {len(summary['meshes'])} scan(s)"] + [f"  {m}" for m in summary["meshes"]])


def handle_export(args):
    """Handle the export command."""
    path = pipeline.cmd_export(args.models, args.identity, args.output, args.expression, args.resolution)
    _emit({"mesh": str(path)}, args.json, [f"Wrote {path}"])


def handle_ablate(args):
    """Handle the ablate command."""
    run = _run_config(args)
    if args.kind == "anchors":
        result = pipeline.run_anchor_ablation(run, anchor_counts=args.anchors, seeds=args.seeds)
    elif args.kind == "symmetry":
        result = pipeline.run_anchor_ablation(run, anchor_counts=args.anchors, seeds=args.seeds, symmetric=(True, False))
    elif args.kind == "robustness":
        result = pipeline.run_robustness(run, args.models)
    elif args.kind == "tracking":
        result = pipeline.run_tracking_benchmark(run, args.models, num_frames=args.frames, seeds=args.seeds)
    else:
        result = pipeline.run_end_to_end(run)
    _emit(result, args.json, [json.dumps(result, indent=2, sort_keys=True, default=str)])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run configuration JSON; built-in defaults when omitted")
    common.add_argument("--seed", type=int, help="Override the run seed")
    common.add_argument("--threads", type=int, help="Worker threads")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--data-dir", help="Data set root (default: $NPHM_DATA_DIR or ./data)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="Increase log verbosity (-v info, -vv debug)")
    common.add_argument("--json", action="store_true", help="Output in JSON format")
    common.add_argument("--progress", action="store_true", help="Show progress bars")

    parser = argparse.ArgumentParser(prog="nphm", description="Neural parametric head models")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    gen_parser = subparsers.add_parser("gen", parents=[common], help="Generate the synthetic data set")
    gen_parser.add_argument("--subjects", type=int, help="Training subjects")
    gen_parser.add_argument("--test-subjects", type=int, help="Held-out subjects")
    gen_parser.add_argument("--expressions", type=int, help="Expressions per subject")
    gen_parser.set_defaults(func=handle_gen)

    train_parser = subparsers.add_parser("train", parents=[common], help="Train the identity or expression stage")
    train_parser.add_argument("--stage", choices=["identity", "expression"], required=True, help="Training stage")
    train_parser.add_argument("--resume", action="store_true", help="Continue from the last checkpoint")
    train_parser.set_defaults(func=handle_train)

    fit_parser = subparsers.add_parser("fit", parents=[common], help="Fit latent codes to point clouds")
    fit_parser.add_argument("observations", nargs="+", help="Observation point-cloud PLY files")
    fit_parser.add_argument("--mode", choices=["identity", "expression", "joint"], default="identity", help="Which codes to fit")
    fit_parser.add_argument("--models", required=True, help="Directory with the trained checkpoints")
    fit_parser.add_argument("--identity", help="Identity code JSON (expression mode)")
    fit_parser.add_argument("--reference", help="Reference mesh for a metrics report")
    fit_parser.add_argument("--landmarks", help="Tracking landmarks JSON of the observation")
    fit_parser.add_argument("--resolution", type=int, default=128, help="Marching-cubes resolution")
    fit_parser.set_defaults(func=handle_fit)

    track_parser = subparsers.add_parser("track", parents=[common], help="Track a sequence of frames")
    track_parser.add_argument("frames", help="Directory of frame point-cloud PLY files")
    track_parser.add_argument("--models", required=True, help="Directory with the trained checkpoints")
    track_parser.add_argument("--landmarks", help="Per-frame tracking landmarks JSON")
    track_parser.set_defaults(func=handle_track)

    eval_parser = subparsers.add_parser("eval", parents=[common], help="Compare a reconstruction with a reference mesh")
    eval_parser.add_argument("--reconstruction", required=True, help="Reconstructed mesh")
    eval_parser.add_argument("--reference", required=True, help="Reference mesh")
    eval_parser.add_argument("--tau-mm", type=float, help="F-score threshold in millimetres")
    eval_parser.add_argument("--report", help="Write the report JSON here")
    eval_parser.set_defaults(func=handle_eval)

    register_parser = subparsers.add_parser("register", parents=[common], help="Register scans of one subject")
    register_parser.add_argument("--scans", nargs="+", required=True, help="Scan point-cloud PLY files")
    register_parser.add_argument("--landmarks", nargs="+", required=True, help="68-landmark JSON per scan")
    register_parser.add_argument("--template", help="Morphable template (default: <data>/template.nphm)")
    register_parser.set_defaults(func=handle_register)

    export_parser = subparsers.add_parser("export", parents=[common], help="Extract the mesh of a code")
    export_parser.add_argument("--models", required=True, help="Directory with the trained checkpoints")
    export_parser.add_argument("--identity", required=True, help="Identity code JSON")
    export_parser.add_argument("--expression", help="Expression code JSON")
    export_parser.add_argument("--resolution", type=int, default=128, help="Marching-cubes resolution")
    export_parser.add_argument("output", help="Output mesh (.ply or .obj)")
    export_parser.set_defaults(func=handle_export)

    ablate_parser = subparsers.add_parser("ablate", parents=[common], help="Run a benchmark sweep")
    ablate_parser.add_argument("kind", choices=["anchors", "symmetry", "robustness", "tracking", "end-to-end"], help="Sweep to run")
    ablate_parser.add_argument("--models", help="Trained checkpoints (robustness, tracking)")
    ablate_parser.add_argument("--anchors", type=int, nargs="+", default=[1, 9], help="Anchor counts")
    ablate_parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2], help="Seeds of the repeated runs")
    ablate_parser.add_argument("--frames", type=int, default=20, help="Frames of the tracking sequence")
    ablate_parser.set_defaults(func=handle_ablate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_OK
    configure_logging(args.verbose)
    if args.command == "ablate" and args.kind in ("robustness", "tracking") and not args.models:
        print(f"Error: ablate {args.kind} needs --models", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except DimensionMismatchError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if args.command in CHECKPOINT_COMMANDS else exc.exit_code
    except HeadModelError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
