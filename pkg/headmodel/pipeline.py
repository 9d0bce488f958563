"""
Pipeline

Command implementations behind the ``nphm`` entry point plus the benchmark
runs built from them. Every function takes a ``RunConfig`` and explicit
paths; printing and exit codes are left to ``headmodel.cli``.

Output tree of a run directory::

    identity.nphm / identity.json         identity stage checkpoint + sidecar
    expression.nphm / expression.json     expression stage checkpoint + sidecar
    identity_losses.csv                   one row per identity epoch
    expression_losses.csv                 one row per expression epoch
"""

import copy
import csv
import logging
import shutil
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError, StageOrderError
from .fields.expression import ExpressionCode
from .fields.identity import FieldConfig, IdentityCode
from .fields.layout import TRACKING_LANDMARKS, scaled_local_dim
from .fitting.codes import FitConfig, fit_expression_codes, fit_identity_code, fit_joint_single, reconstruct_mesh
from .fitting.tracking import TrackState, track_sequence, total_variation
from .geometry.io import load_json, load_mesh, load_point_cloud, save_csv, save_json, save_mesh
from .geometry.mesh import LABEL_FRONT, OrientedPointCloud, TriMesh
from .geometry.metrics import MetricsConfig, MetricsReport, evaluate_metrics, mm_to_canonical
from .registration.arap import arap_register
from .registration.subdivision import subdivide_region
from .registration.template import MorphableTemplate, fit_template
from .settings import RunConfig
from .synthetic.dataset import SPLIT_TEST, SPLIT_TRAIN, SyntheticDataset, load_dataset, write_dataset
from .synthetic.expressions import interpolate_sequence
from .synthetic.render import render_depth_cloud
from .training.expression import train_expression
from .training.identity import train_identity
from .training.model import ExpressionModel, IdentityModel, check_compatible
from .training.samples import build_deformation_samples, build_identity_samples
from .utils.parallel import map_items
from .utils.rng import make_rng

logger = logging.getLogger(__name__)

IDENTITY_CHECKPOINT = "identity.nphm"
EXPRESSION_CHECKPOINT = "expression.nphm"
IDENTITY_LOSSES = "identity_losses.csv"
EXPRESSION_LOSSES = "expression_losses.csv"

ROBUSTNESS_POINT_COUNTS = (250, 500, 1000, 2500, 5000, 10000)
ROBUSTNESS_NOISE_MM = (0.0, 0.3, 0.75, 1.5)

PathLike = Union[str, Path]


# -- data ----------------------------------------------------------------

def cmd_gen(run: RunConfig, out: Optional[PathLike] = None) -> Dict:
    """
    Generate the synthetic data set.

    The tree is written to a sibling ``.partial`` directory and moved into
    place once complete; a failure removes it.

    Raises:
        OSError: The output location is not writable
    """
    root = Path(out) if out is not None else run.data_path
    partial = root.with_name(root.name + ".partial")
    if partial.exists():
        shutil.rmtree(partial)
    try:
        manifest = write_dataset(partial, run.seed, run.synthetic, threads=run.threads, progress=run.identity_training.progress)
        if root.exists():
            shutil.rmtree(root)
        partial.rename(root)
    except BaseException:
        shutil.rmtree(partial, ignore_errors=True)
        raise
    return manifest


def observation_cloud(mesh: TriMesh, run: RunConfig, *keys, n: Optional[int] = None, noise_mm: Optional[float] = None) -> OrientedPointCloud:
    """Frontal depth observation of a mesh with the configured point count and noise."""
    synthetic = run.synthetic
    noise = mm_to_canonical(synthetic.noise_mm if noise_mm is None else noise_mm, run.metrics.mm_to_units)
    return render_depth_cloud(
        mesh, 0.0, n or synthetic.depth_points, noise, make_rng(run.seed, "observation", *keys), synthetic.depth_grid,
    )


# -- training ------------------------------------------------------------

def _read_losses(path: Path, before_epoch: int) -> List[Dict]:
    if not path.is_file():
        return []
    with path.open(newline="") as handle:
        return [row for row in csv.DictReader(handle) if int(row["epoch"]) < before_epoch]


def _write_losses(path: Path, previous: List[Dict], history: List[Dict]) -> None:
    rows = previous + history
    columns = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    save_csv(path, rows, columns)


def identity_samples(dataset_records, run: RunConfig, num_anchors: int):
    config = run.identity_training

    def build(item):
        index, record = item
        if record.neutral is None:
            raise DegenerateInputError(f"Subject {record.subject_id} has no neutral mesh")
        return build_identity_samples(
            record.neutral, config.samples_per_subject, record.anchors[num_anchors],
            make_rng(run.seed, "identity-samples", index),
        )

    return map_items(build, list(enumerate(dataset_records)), run.threads, config.progress, desc="identity samples")


def deformation_samples(dataset_records, run: RunConfig):
    config = run.expression_training
    items = [(i, k, record) for i, record in enumerate(dataset_records) for k in range(len(record.expressions))]

    def build(item):
        i, k, record = item
        return build_deformation_samples(
            record.neutral, record.expressions[k], config.samples_per_pair,
            make_rng(run.seed, "deformation-samples", i, k), config.tau_far, config.tau_near,
            subject_index=i, expression_index=k,
        )

    return map_items(build, items, run.threads, config.progress, desc="deformation samples")


def train_identity_stage(
    run: RunConfig,
    dataset: SyntheticDataset,
    out: PathLike,
    resume: bool = False,
    field_config: Optional[FieldConfig] = None,
) -> IdentityModel:
    """Train (or resume) the identity stage on the training split."""
    out = Path(out)
    path = out / IDENTITY_CHECKPOINT
    records = dataset.train
    if not records:
        raise DegenerateInputError(f"Data set {dataset.root} has no training subjects")
    field_config = field_config or run.identity_field
    if resume and path.is_file():
        model = IdentityModel.load(path)
        if model.config.num_anchors != field_config.num_anchors:
            raise DimensionMismatchError("checkpoint anchors", field_config.num_anchors, model.config.num_anchors)
    else:
        model = IdentityModel.create(field_config, [r.subject_id for r in records], make_rng(run.seed, "identity-init"),
                                     run.identity_training.init_std)
    start = model.epoch
    samples = identity_samples(records, run, model.config.num_anchors)
    result = train_identity(model, samples, run.identity_training, checkpoint_path=path)
    _write_losses(out / IDENTITY_LOSSES, _read_losses(out / IDENTITY_LOSSES, start) if resume else [], result.history)
    return model


def train_expression_stage(run: RunConfig, dataset: SyntheticDataset, out: PathLike, resume: bool = False) -> ExpressionModel:
    """
    Train (or resume) the expression stage.

    Raises:
        StageOrderError: No trained identity checkpoint in ``out``
    """
    out = Path(out)
    identity_path = out / IDENTITY_CHECKPOINT
    if not identity_path.is_file():
        raise StageOrderError(f"No identity checkpoint at {identity_path}; run `nphm train --stage identity` first")
    identity = IdentityModel.load(identity_path)
    if not identity.trained:
        raise StageOrderError(f"{identity_path} has not finished training; run `nphm train --stage identity --resume` first")
    records = dataset.train
    path = out / EXPRESSION_CHECKPOINT
    pairs = [[i, k] for i, record in enumerate(records) for k in range(len(record.expressions))]
    if not pairs:
        raise DegenerateInputError(f"Data set {dataset.root} has no expression meshes")
    if resume and path.is_file():
        model = ExpressionModel.load(path)
    else:
        model = ExpressionModel.create(run.deformation, identity.config, pairs, make_rng(run.seed, "expression-init"),
                                       run.expression_training.init_std)
    start = model.epoch
    samples = deformation_samples(records, run)
    result = train_expression(model, identity, samples, run.expression_training, checkpoint_path=path)
    _write_losses(out / EXPRESSION_LOSSES, _read_losses(out / EXPRESSION_LOSSES, start) if resume else [], result.history)
    return model


def cmd_train(run: RunConfig, stage: str, resume: bool = False, data_dir: Optional[PathLike] = None, out: Optional[PathLike] = None):
    """Run one training stage; the identity stage must come first."""
    out = Path(out) if out is not None else run.out_path
    dataset = load_dataset(data_dir or run.data_path, split=SPLIT_TRAIN)
    if stage == "identity":
        return train_identity_stage(run, dataset, out, resume)
    if stage == "expression":
        return train_expression_stage(run, dataset, out, resume)
    raise ValueError(f"Unknown stage {stage!r}")


def load_models(model_dir: PathLike, need_expression: bool = True):
    """
    Load trained models from a run directory.

    Returns:
        Tuple of the identity model and the expression model (None when absent and not needed)
    """
    model_dir = Path(model_dir)
    identity = IdentityModel.load(model_dir / IDENTITY_CHECKPOINT)
    expression_path = model_dir / EXPRESSION_CHECKPOINT
    expression = None
    if expression_path.is_file():
        expression = ExpressionModel.load(expression_path)
        check_compatible(identity, expression)
    elif need_expression:
        raise StageOrderError(f"No expression checkpoint at {expression_path}; run `nphm train --stage expression` first")
    return identity, expression


# -- fitting, tracking, evaluation --------------------------------------

def cmd_eval(reconstruction: PathLike, reference: PathLike, tau_mm: Optional[float] = None, config: Optional[MetricsConfig] = None) -> Dict:
    """Metrics report of a reconstruction against a reference mesh, headed by the threshold used."""
    config = replace(config or MetricsConfig(), **({"tau_mm": tau_mm} if tau_mm is not None else {}))
    report = evaluate_metrics(load_mesh(reconstruction), load_mesh(reference), config)
    return {"tau_mm": config.tau_mm, "tau": config.tau, "metrics": report.to_dict()}


def _load_landmarks(path: Optional[PathLike]) -> Optional[np.ndarray]:
    if path is None:
        return None
    document = load_json(path)
    tracking = document.get("tracking", document) if isinstance(document, dict) else None
    if isinstance(tracking, dict):
        return np.array([tracking[name] for name in TRACKING_LANDMARKS], dtype=np.float64)
    return np.asarray(document, dtype=np.float64).reshape(-1, 3)


def cmd_fit(
    run: RunConfig,
    mode: str,
    observations: Sequence[PathLike],
    model_dir: PathLike,
    out: PathLike,
    identity_code: Optional[PathLike] = None,
    reference: Optional[PathLike] = None,
    landmarks: Optional[PathLike] = None,
    resolution: int = 128,
) -> Dict:
    """
    Fit codes to observation point clouds and write codes, meshes and an
    optional report.

    Modes: ``identity`` fits both codes to the first observation,
    ``expression`` fits one expression per observation against a given
    identity code, ``joint`` fits both codes to a single observation.
    """
    out = Path(out)
    if not observations:
        raise DegenerateInputError("No observation files given")
    clouds = [load_point_cloud(p) for p in observations]
    identity_model, expression_model = load_models(model_dir, need_expression=mode != "identity" or run.fitting.use_deformation)
    field_ = identity_model.field
    defo = expression_model.defo if expression_model is not None and run.fitting.use_deformation else None
    if defo is None and mode != "identity":
        raise ValueError(f"--mode {mode} needs the deformation field (fitting.use_deformation)")
    lm = _load_landmarks(landmarks)
    written: Dict[str, List[str]] = {"codes": [], "meshes": []}

    if mode == "identity":
        results = [fit_identity_code(field_, defo, clouds[0], run.fitting, lm)]
    elif mode == "joint":
        if len(clouds) != 1:
            raise ValueError("--mode joint takes exactly one observation")
        results = [fit_joint_single(field_, defo, clouds[0], run.fitting, lm)]
    elif mode == "expression":
        if identity_code is None:
            raise ValueError("--mode expression needs --identity")
        fixed = field_.complete(IdentityCode.from_dict(load_json(identity_code)))
        results = fit_expression_codes(field_, defo, fixed, clouds, run.fitting)
    else:
        raise ValueError(f"Unknown fit mode {mode!r}")

    identity = results[0].identity
    if mode != "expression":
        written["codes"].append(str(save_json(out / "identity.json", identity.to_dict())))
        canonical = reconstruct_mesh(field_, identity, resolution=resolution)
        written["meshes"].append(str(save_mesh(out / "canonical.ply", canonical)))
    report = None
    for index, result in enumerate(results):
        suffix = "" if len(results) == 1 else f"_{index}"
        written["codes"].append(str(save_json(out / f"expression{suffix}.json", result.expression.to_dict())))
        save_json(out / f"history{suffix}.json", result.history)
        if defo is not None:
            posed = reconstruct_mesh(field_, result.identity, defo, result.expression, resolution)
            written["meshes"].append(str(save_mesh(out / f"posed{suffix}.ply", posed)))
            if reference is not None and index == 0:
                report = evaluate_metrics(posed, load_mesh(reference), run.metrics)
        elif reference is not None and index == 0:
            report = evaluate_metrics(canonical, load_mesh(reference), run.metrics)
    summary = {"mode": mode, "files": written, "final_loss": [r.final_loss for r in results],
               "non_converged": [int(sum(r.non_converged)) for r in results]}
    if report is not None:
        summary["report"] = report.to_dict()
        save_json(out / "report.json", {"tau_mm": run.metrics.tau_mm, "tau": run.metrics.tau, "metrics": report.to_dict()})
    return summary


def cmd_track(run: RunConfig, frames_dir: PathLike, model_dir: PathLike, out: PathLike, landmarks: Optional[PathLike] = None) -> TrackState:
    """
    Track a directory of frame point clouds (sorted by file name).

    ``landmarks`` is a JSON list with one entry per frame: a mapping of the
    tracking landmark names to positions, a (8, 3) list or null.
    """
    frame_paths = sorted(Path(frames_dir).glob("*.ply"))
    if not frame_paths:
        raise DegenerateInputError(f"No frame PLY files in {frames_dir}")
    frames = [load_point_cloud(p) for p in frame_paths]
    per_frame: List[Optional[np.ndarray]] = [None] * len(frames)
    if landmarks is not None:
        document = load_json(landmarks)
        if len(document) != len(frames):
            raise DimensionMismatchError("landmark frames", len(frames), len(document))
        for f, entry in enumerate(document):
            if entry is None:
                continue
            if isinstance(entry, dict):
                entry = [entry[name] for name in TRACKING_LANDMARKS]
            per_frame[f] = np.asarray(entry, dtype=np.float64).reshape(-1, 3)
    identity_model, expression_model = load_models(model_dir)
    state = track_sequence(identity_model.field, expression_model.defo, frames, per_frame, run.tracking)
    save_json(Path(out) / "track.json", state.to_dict())
    save_json(Path(out) / "track_history.json", state.history)
    return state


def cmd_export(
    model_dir: PathLike,
    identity_code: PathLike,
    out: PathLike,
    expression_code: Optional[PathLike] = None,
    resolution: int = 128,
) -> Path:
    """Extract the mesh of a fitted identity, posed when an expression code is given."""
    identity_model, expression_model = load_models(model_dir, need_expression=expression_code is not None)
    identity = IdentityCode.from_dict(load_json(identity_code))
    expression = ExpressionCode.from_dict(load_json(expression_code)) if expression_code is not None else None
    defo = expression_model.defo if expression_model is not None else None
    mesh = reconstruct_mesh(identity_model.field, identity, defo, expression, resolution)
    return save_mesh(out, mesh)


def cmd_register(
    run: RunConfig,
    scans: Sequence[PathLike],
    landmarks: Sequence[PathLike],
    template_path: PathLike,
    out: PathLike,
) -> Dict:
    """
    Register scans of one subject: joint template fit, face-region
    subdivision and ARAP fine-tuning per scan.
    """
    if len(scans) != len(landmarks):
        raise DimensionMismatchError("landmark files", len(scans), len(landmarks))
    template = MorphableTemplate.load(template_path)
    clouds = [load_point_cloud(p) for p in scans]
    targets = []
    for p in landmarks:
        document = load_json(p)
        targets.append(np.asarray(document["landmarks"] if isinstance(document, dict) else document, dtype=np.float64))
    params = fit_template(template, clouds, targets, run.registration)
    out = Path(out)
    save_json(out / "template_fit.json", params.to_dict())
    meshes = []
    for j, cloud in enumerate(clouds):
        coarse = subdivide_region(params.posed_mesh(template, j), LABEL_FRONT, run.registration.subdivision_factor)
        result = arap_register(coarse, cloud, run.registration)
        meshes.append(str(save_mesh(out / f"registered_{j}.ply", result.mesh)))
        logger.info("Registered scan %d: ARAP energy %.6g", j, result.energies[-1] if result.energies else float("nan"))
    return {"params": str(out / "template_fit.json"), "meshes": meshes, "energies": list(params.energies[-1:])}


# -- benchmarks ----------------------------------------------------------

def _mean_report(reports: Sequence[MetricsReport]) -> Dict[str, float]:
    keys = ("l1_chamfer", "normal_consistency", "f_score")
    return {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}


def evaluate_test_subjects(
    run: RunConfig,
    dataset: SyntheticDataset,
    identity: IdentityModel,
    expression: Optional[ExpressionModel],
    fit_config: Optional[FitConfig] = None,
    num_points: Optional[int] = None,
    noise_mm: Optional[float] = None,
    with_expressions: bool = True,
    resolution: int = 128,
) -> Dict:
    """
    Fit every held-out subject from frontal depth observations and score the
    reconstructions.

    Returns:
        Dict with mean ``identity`` and ``expression`` metrics and per-subject rows
    """
    fit_config = fit_config or run.fitting
    field_ = identity.field
    defo = expression.defo if expression is not None and fit_config.use_deformation else None
    identity_reports, expression_reports, rows = [], [], []
    for s, record in enumerate(dataset.test):
        cloud = observation_cloud(record.neutral, run, "test", s, n=num_points, noise_mm=noise_mm)
        fit = fit_identity_code(field_, defo, cloud, fit_config)
        if defo is not None:
            mesh = reconstruct_mesh(field_, fit.identity, defo, fit.expression, resolution)
        else:
            mesh = reconstruct_mesh(field_, fit.identity, resolution=resolution)
        report = evaluate_metrics(mesh, record.neutral, run.metrics)
        identity_reports.append(report)
        rows.append({"subject": record.subject_id, "kind": "neutral", **report.to_dict()})
        if not (with_expressions and defo is not None):
            continue
        clouds = [observation_cloud(m, run, "test", s, k, n=num_points, noise_mm=noise_mm) for k, m in enumerate(record.expressions)]
        for k, result in enumerate(fit_expression_codes(field_, defo, fit.identity, clouds, fit_config)):
            posed = reconstruct_mesh(field_, fit.identity, defo, result.expression, resolution)
            report = evaluate_metrics(posed, record.expressions[k], run.metrics)
            expression_reports.append(report)
            rows.append({"subject": record.subject_id, "kind": f"expression_{k}", **report.to_dict()})
    summary = {"identity": _mean_report(identity_reports) if identity_reports else None,
               "expression": _mean_report(expression_reports) if expression_reports else None,
               "rows": rows}
    return summary


def run_end_to_end(run: RunConfig, out: Optional[PathLike] = None, resolution: int = 128) -> Dict:
    """Generate (if missing), train both stages and evaluate on the held-out subjects."""
    out = Path(out) if out is not None else run.out_path
    if not (run.data_path / "manifest.json").is_file():
        cmd_gen(run, run.data_path)
    dataset = load_dataset(run.data_path)
    identity = train_identity_stage(run, dataset, out)
    expression = train_expression_stage(run, dataset, out)
    summary = evaluate_test_subjects(run, dataset, identity, expression, resolution=resolution)
    save_json(out / "end_to_end.json", summary)
    return summary


def run_anchor_ablation(
    run: RunConfig,
    anchor_counts: Sequence[int] = (1, 9),
    seeds: Sequence[int] = (0, 1, 2),
    symmetric: Sequence[bool] = (True,),
    out: Optional[PathLike] = None,
    resolution: int = 96,
) -> Dict:
    """
    Train identity-only models for several layouts and compare neutral-pose
    fits of the held-out subjects.

    The local latent width is scaled so that the total identity latent stays
    comparable across anchor counts. Each variant reports the median over
    seeds of the mean test Chamfer distance.
    """
    out = Path(out) if out is not None else run.out_path / "ablation"
    dataset = load_dataset(run.data_path)
    fit_config = replace(run.fitting, use_deformation=False)
    variants = {}
    for k in anchor_counts:
        for share in symmetric:
            name = f"K{k}{'' if share else '_nosym'}"
            d_loc = scaled_local_dim(k, run.identity_field.d_loc, base_anchors=run.identity_field.num_anchors)
            field_config = replace(run.identity_field, num_anchors=k, d_loc=d_loc, share_symmetric=share)
            chamfers = []
            for seed in seeds:
                seeded = copy.deepcopy(run).apply_overrides(seed=seed)
                model = train_identity_stage(seeded, dataset, out / f"{name}_seed{seed}", field_config=field_config)
                summary = evaluate_test_subjects(seeded, dataset, model, None, fit_config, with_expressions=False, resolution=resolution)
                chamfers.append(summary["identity"]["l1_chamfer"])
            variants[name] = {"num_anchors": k, "d_loc": d_loc, "share_symmetric": share,
                              "chamfer": chamfers, "median_chamfer": float(np.median(chamfers))}
            logger.info("Ablation %s: median chamfer %.6g", name, variants[name]["median_chamfer"])
    result = {"variants": variants}
    save_json(out / "anchor_ablation.json", result)
    return result


def run_robustness(
    run: RunConfig,
    model_dir: PathLike,
    point_counts: Sequence[int] = ROBUSTNESS_POINT_COUNTS,
    noise_mm: Sequence[float] = ROBUSTNESS_NOISE_MM,
    out: Optional[PathLike] = None,
    resolution: int = 96,
) -> Dict:
    """Identity fitting quality against observation point count and noise level."""
    dataset = load_dataset(run.data_path, split=SPLIT_TEST)
    identity, expression = load_models(model_dir, need_expression=False)
    rows = []
    for n in point_counts:
        summary = evaluate_test_subjects(run, dataset, identity, expression, num_points=n, noise_mm=0.0,
                                         with_expressions=False, resolution=resolution)
        rows.append({"sweep": "points", "points": n, "noise_mm": 0.0, **summary["identity"]})
    for level in noise_mm:
        summary = evaluate_test_subjects(run, dataset, identity, expression, noise_mm=level,
                                         with_expressions=False, resolution=resolution)
        rows.append({"sweep": "noise", "points": run.synthetic.depth_points, "noise_mm": level, **summary["identity"]})
    out = Path(out) if out is not None else run.out_path
    save_csv(out / "robustness.csv", rows)
    return {"rows": rows}


def run_tracking_benchmark(
    run: RunConfig,
    model_dir: PathLike,
    num_frames: int = 20,
    seeds: Sequence[int] = (0, 1, 2),
    subject_index: int = 0,
    expression_index: int = 0,
    out: Optional[PathLike] = None,
    resolution: int = 96,
) -> Dict:
    """
    Track a synthetic neutral-expression-neutral sequence and compare the
    temporal smoothness of the expression codes with independent per-frame
    fits.

    Returns:
        Dict with per-seed mean F-scores, tracked and independent TV values and their medians
    """
    dataset = load_dataset(run.data_path, split=SPLIT_TEST)
    if not dataset.test:
        raise DegenerateInputError(f"Data set {run.data_path} has no test subjects")
    record = dataset.test[subject_index]
    subject = record.subject(dataset.config, with_meshes=False)
    expression = record.expression(expression_index, dataset.config)
    magnitudes, meshes = interpolate_sequence(subject, expression, num_frames, mesh=record.neutral)
    base = subject.tracking_landmarks()
    frame_landmarks = [base + expression.displacement(base, subject, m) for m in magnitudes]

    identity_model, expression_model = load_models(model_dir)
    field_, defo = identity_model.field, expression_model.defo
    per_seed = []
    for seed in seeds:
        seeded = copy.deepcopy(run).apply_overrides(seed=seed)
        frames = [observation_cloud(m, seeded, "track", f) for f, m in enumerate(meshes)]
        state = track_sequence(field_, defo, frames, frame_landmarks, seeded.tracking)
        f_scores = []
        for f, mesh in enumerate(meshes):
            posed = reconstruct_mesh(field_, state.identity, defo, state.expression(f), resolution)
            world = posed.with_vertices(state.transforms[f].inverse().apply(posed.vertices))
            f_scores.append(evaluate_metrics(world, mesh, seeded.metrics).f_score)
        independent = fit_expression_codes(field_, defo, state.identity, frames, seeded.fitting)
        z_independent = np.array([r.expression.z_ex for r in independent])
        tv_tracked, _ = total_variation(state.z_ex, run.tracking.tv_eps)
        tv_independent, _ = total_variation(z_independent, run.tracking.tv_eps)
        per_seed.append({"seed": seed, "mean_f_score": float(np.mean(f_scores)), "min_f_score": float(np.min(f_scores)),
                         "tv_tracked": tv_tracked, "tv_independent": tv_independent})
    result = {
        "runs": per_seed,
        "median_f_score": float(np.median([r["mean_f_score"] for r in per_seed])),
        "median_tv_tracked": float(np.median([r["tv_tracked"] for r in per_seed])),
        "median_tv_independent": float(np.median([r["tv_independent"] for r in per_seed])),
    }
    out = Path(out) if out is not None else run.out_path
    save_json(out / "tracking_benchmark.json", result)
    return result
