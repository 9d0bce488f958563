import numpy as np
import pytest

from headmodel import pipeline
from headmodel.errors import DegenerateInputError, DimensionMismatchError
from headmodel.fields.expression import ExpressionCode
from headmodel.fields.identity import FieldConfig, IdentityCode
from headmodel.fields.layout import TRACKING_LANDMARKS
from headmodel.geometry.io import load_json, load_mesh, save_json, save_mesh, save_point_cloud
from headmodel.geometry.mesh import OrientedPointCloud
from headmodel.registration.template import MorphableTemplate
from headmodel.training.model import ExpressionModel, IdentityModel


@pytest.fixture
def observation(tmp_path, sphere_mesh):
    return save_point_cloud(tmp_path / "obs.ply", OrientedPointCloud(sphere_mesh.vertices, sphere_mesh.vertex_normals))


@pytest.fixture
def reference(tmp_path, sphere_mesh):
    return save_mesh(tmp_path / "reference.ply", sphere_mesh)


@pytest.fixture
def identity_json(tmp_path, small_field_config):
    code = IdentityCode(np.zeros(small_field_config.d_glob), np.zeros((small_field_config.num_anchors + 1, small_field_config.d_loc)))
    return save_json(tmp_path / "identity_in.json", code.to_dict())


@pytest.fixture
def tracking_points(sphere_mesh):
    """Eight well spread positions for the tracking landmarks."""
    return sphere_mesh.vertices[:8]


def _names(paths):
    return [p.replace("\\", "/").rsplit("/", 1)[-1] for p in paths]


def test_fit_identity_writes_codes_meshes_and_report(tiny_run, saved_models, observation, reference, flat_reconstruction, tmp_path):
    """Test identity fitting writes both codes, both meshes, the history and a report."""
    out = tmp_path / "fit"

    summary = pipeline.cmd_fit(tiny_run, "identity", [observation], saved_models, out, reference=reference)

    assert summary["mode"] == "identity"
    assert _names(summary["files"]["codes"]) == ["identity.json", "expression.json"]
    assert _names(summary["files"]["meshes"]) == ["canonical.ply", "posed.ply"]
    assert summary["non_converged"] == [0]
    assert len(load_json(out / "history.json")) == 2
    # Verify the report compares the (stubbed) posed mesh with the reference
    assert summary["report"]["f_score"] == pytest.approx(1.0)
    assert set(load_json(out / "report.json")) == {"tau_mm", "tau", "metrics"}
    assert flat_reconstruction.call_count == 2


def test_fit_passes_tracking_landmarks(tiny_run, saved_models, observation, tracking_points, flat_reconstruction, tmp_path, mocker):
    """Test named tracking landmarks reach the identity fit in layout order."""
    landmarks = save_json(tmp_path / "lm.json", {"tracking": {n: p.tolist() for n, p in zip(TRACKING_LANDMARKS, tracking_points)}})
    spy = mocker.spy(pipeline, "fit_identity_code")

    pipeline.cmd_fit(tiny_run, "identity", [observation], saved_models, tmp_path / "fit", landmarks=landmarks)

    np.testing.assert_allclose(spy.call_args.args[4], tracking_points)


def test_fit_identity_without_deformation(tiny_run, saved_models, observation, reference, flat_reconstruction, tmp_path):
    """Test the neutral-field fit extracts and scores only the canonical mesh."""
    tiny_run.fitting.use_deformation = False

    summary = pipeline.cmd_fit(tiny_run, "identity", [observation], saved_models, tmp_path / "fit", reference=reference)

    assert _names(summary["files"]["meshes"]) == ["canonical.ply"]
    assert "report" in summary
    assert flat_reconstruction.call_count == 1


def test_fit_expression_per_observation(tiny_run, saved_models, observation, identity_json, flat_reconstruction, tmp_path):
    """Test expression fitting writes one code and posed mesh per observation and no identity."""
    out = tmp_path / "fit"

    summary = pipeline.cmd_fit(tiny_run, "expression", [observation, observation], saved_models, out, identity_code=identity_json)

    assert _names(summary["files"]["codes"]) == ["expression_0.json", "expression_1.json"]
    assert _names(summary["files"]["meshes"]) == ["posed_0.ply", "posed_1.ply"]
    assert not (out / "identity.json").exists()
    assert "report" not in summary
    assert len(summary["final_loss"]) == 2


def test_fit_joint_single_observation(tiny_run, saved_models, observation, flat_reconstruction, tmp_path):
    """Test joint fitting writes the identity, its expression and both meshes."""
    summary = pipeline.cmd_fit(tiny_run, "joint", [observation], saved_models, tmp_path / "fit")

    assert _names(summary["files"]["codes"]) == ["identity.json", "expression.json"]
    assert _names(summary["files"]["meshes"]) == ["canonical.ply", "posed.ply"]


def test_fit_mode_checks(tiny_run, saved_models, observation, flat_reconstruction, tmp_path):
    """Test invalid mode and argument combinations."""
    with pytest.raises(ValueError, match="exactly one"):
        pipeline.cmd_fit(tiny_run, "joint", [observation, observation], saved_models, tmp_path / "fit")
    with pytest.raises(ValueError, match="--identity"):
        pipeline.cmd_fit(tiny_run, "expression", [observation], saved_models, tmp_path / "fit")
    with pytest.raises(ValueError, match="Unknown fit mode"):
        pipeline.cmd_fit(tiny_run, "pose", [observation], saved_models, tmp_path / "fit")
    with pytest.raises(DegenerateInputError):
        pipeline.cmd_fit(tiny_run, "identity", [], saved_models, tmp_path / "fit")


def test_track_parses_per_frame_landmarks(tiny_run, saved_models, sphere_mesh, tracking_points, tmp_path, mocker):
    """Test named, listed and missing landmarks per frame and the written state."""
    frames = tmp_path / "frames"
    cloud = OrientedPointCloud(sphere_mesh.vertices, sphere_mesh.vertex_normals)
    for f in range(3):
        save_point_cloud(frames / f"{f:03d}.ply", cloud)
    landmarks = save_json(tmp_path / "lm.json", [
        {n: p.tolist() for n, p in zip(TRACKING_LANDMARKS, tracking_points)},
        tracking_points.tolist(),
        None,
    ])
    spy = mocker.spy(pipeline, "track_sequence")
    out = tmp_path / "track"

    state = pipeline.cmd_track(tiny_run, frames, saved_models, out, landmarks=landmarks)

    per_frame = spy.call_args.args[3]
    np.testing.assert_allclose(per_frame[0], tracking_points)
    np.testing.assert_allclose(per_frame[1], tracking_points)
    assert per_frame[2] is None
    assert state.num_frames == 3
    assert len(load_json(out / "track.json")["transforms"]) == 3
    assert len(load_json(out / "track_history.json")) == 2


def test_track_input_checks(tiny_run, saved_models, sphere_mesh, tmp_path):
    """Test an empty frame directory and a landmark list of the wrong length."""
    frames = tmp_path / "frames"
    frames.mkdir()
    with pytest.raises(DegenerateInputError):
        pipeline.cmd_track(tiny_run, frames, saved_models, tmp_path / "track")

    save_point_cloud(frames / "000.ply", OrientedPointCloud(sphere_mesh.vertices, sphere_mesh.vertex_normals))
    landmarks = save_json(tmp_path / "lm.json", [None, None])
    with pytest.raises(DimensionMismatchError):
        pipeline.cmd_track(tiny_run, frames, saved_models, tmp_path / "track", landmarks=landmarks)


@pytest.fixture
def template_path(tmp_path, sphere_mesh):
    gen = np.random.default_rng(21)
    n = sphere_mesh.num_vertices
    template = MorphableTemplate(
        mean=sphere_mesh,
        id_basis=0.01 * gen.standard_normal((n, 3, 3)),
        ex_basis=0.01 * gen.standard_normal((n, 3, 2)),
        hinge_pivot=[0.0, 0.0, 0.0],
        hinge_axis=[1.0, 0.0, 0.0],
        hinge_weights=np.where(sphere_mesh.vertices[:, 1] < -0.2, 1.0, 0.0),
        landmark_indices=np.arange(0, 68 * 9, 9),
    )
    return template.save(tmp_path / "template.nphm")


def test_register_writes_fit_and_refined_meshes(tiny_run, template_path, sphere_mesh, tmp_path):
    """Test registration of two scans with landmarks given as a mapping and as a list."""
    template = MorphableTemplate.load(template_path)
    scans, landmarks = [], []
    for j, shift in enumerate(([0.0, 0.0, 0.0], [0.003, 0.0, -0.002])):
        vertices = sphere_mesh.vertices + np.array(shift)
        scans.append(save_point_cloud(tmp_path / f"scan{j}.ply", OrientedPointCloud(vertices, sphere_mesh.vertex_normals)))
        points = template.landmarks(vertices).tolist()
        landmarks.append(save_json(tmp_path / f"lm{j}.json", {"landmarks": points} if j == 0 else points))
    out = tmp_path / "registered"

    summary = pipeline.cmd_register(tiny_run, scans, landmarks, template_path, out)

    assert _names(summary["meshes"]) == ["registered_0.ply", "registered_1.ply"]
    assert len(load_json(out / "template_fit.json")["energies"]) == 6
    assert len(summary["energies"]) == 1
    # Verify the front region was refined before ARAP
    assert load_mesh(out / "registered_0.ply").num_vertices > sphere_mesh.num_vertices


def test_register_needs_one_landmark_file_per_scan(tiny_run, template_path, tmp_path):
    """Test mismatched scan and landmark counts."""
    with pytest.raises(DimensionMismatchError):
        pipeline.cmd_register(tiny_run, ["a.ply", "b.ply"], ["a.json"], template_path, tmp_path / "registered")


def test_export_canonical_and_posed(saved_models, identity_json, flat_reconstruction, tmp_path):
    """Test export hands the expression code to extraction only when given."""
    canonical = pipeline.cmd_export(saved_models, identity_json, tmp_path / "canonical.ply")
    assert canonical.is_file()
    assert flat_reconstruction.call_args.args[3] is None

    expression = save_json(tmp_path / "expression.json", ExpressionCode(np.full(4, 0.1)).to_dict())
    posed = pipeline.cmd_export(saved_models, identity_json, tmp_path / "posed.obj", expression_code=expression)
    assert posed.is_file()
    np.testing.assert_allclose(flat_reconstruction.call_args.args[3].z_ex, np.full(4, 0.1))


def test_export_rejects_mismatched_stages(tmp_path, small_field_config, small_defo_config, identity_json, flat_reconstruction):
    """Test an expression checkpoint built for another identity field."""
    model_dir = tmp_path / "models"
    gen = np.random.default_rng(0)
    IdentityModel.create(small_field_config, ["subject_000"], gen).save(model_dir / pipeline.IDENTITY_CHECKPOINT)
    other = FieldConfig(**{**small_field_config.__dict__, "d_glob": 5})
    ExpressionModel.create(small_defo_config, other, [[0, 0]], gen).save(model_dir / pipeline.EXPRESSION_CHECKPOINT)

    with pytest.raises(DimensionMismatchError):
        pipeline.cmd_export(model_dir, identity_json, tmp_path / "head.ply")
