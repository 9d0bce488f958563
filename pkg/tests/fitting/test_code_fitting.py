from types import SimpleNamespace

import numpy as np
import pytest

from headmodel.errors import DegenerateInputError, FittingError, NonFiniteError
from headmodel.fields.expression import ExpressionCode
from headmodel.fields.identity import IdentityCode
from headmodel.fields.layout import AnchorLayout
from headmodel.fitting.codes import (
    FitConfig, check_observation, fit_identity_code, fit_joint_single, landmark_rows, reconstruct_mesh,
)
from headmodel.geometry.mesh import OrientedPointCloud


@pytest.fixture
def sphere_observation(sphere_mesh):
    return OrientedPointCloud(sphere_mesh.vertices, sphere_mesh.vertex_normals)


def test_regulariser_schedule():
    """Test identity regularisers decay at reg events and symmetry stops halfway."""
    config = FitConfig(iterations=100, lambda_glob=1.0, lambda_loc=0.5, reg_events=[10, 50], reg_divisor=5.0)

    assert config.identity_weights(0) == (1.0, 0.5)
    assert config.identity_weights(10) == pytest.approx((0.2, 0.1))
    assert config.identity_weights(99) == pytest.approx((0.04, 0.02))
    assert config.symmetry_weight(49) == config.lambda_sym
    assert config.symmetry_weight(50) == 0.0

    with pytest.raises(ValueError):
        FitConfig(lambda_sym=-1.0)


def test_landmark_rows():
    """Test tracking landmark rows exist for K=9 but not K=5."""
    layout = AnchorLayout.builtin(9)
    rows = landmark_rows(layout)

    assert len(rows) == 8
    assert layout.names[rows[0]] == "eye_outer_l"
    assert landmark_rows(AnchorLayout.builtin(5)) is None


def test_observation_checks():
    """Test empty and non-finite observations are rejected."""
    with pytest.raises(DegenerateInputError):
        check_observation(OrientedPointCloud(np.zeros((0, 3)), np.zeros((0, 3))))
    with pytest.raises(NonFiniteError):
        check_observation(OrientedPointCloud([[np.nan, 0.0, 0.0]], [[1.0, 0.0, 0.0]]))


def test_fit_identity_lowers_surface_term(small_field, sphere_observation):
    """Test fitting the neutral field directly reduces the data term."""
    config = FitConfig(iterations=20, lr=0.005, lr_events=[], points_per_step=0, lambda_sym=0.0)

    result = fit_identity_code(small_field, None, sphere_observation, config)

    # Verify one history row per iteration and a completed code
    assert len(result.history) == 20
    assert result.history[-1]["surface"] < result.history[0]["surface"]
    assert result.identity.anchors.shape == (9, 3)
    assert result.expression.z_ex.size == 0
    assert result.non_converged == [0] * 20


def test_fit_joint_runs_through_deformation(small_field, small_defo, sphere_observation):
    """Test joint fitting maps observations through the deformation."""
    config = FitConfig(iterations=3, points_per_step=100)

    result = fit_joint_single(small_field, small_defo, sphere_observation, config)

    assert len(result.history) == 3
    assert result.expression.z_ex.shape == (4,)
    assert np.all(np.isfinite(result.identity.z_loc))
    assert set(result.to_dict()) == {"identity", "expression", "final_loss", "non_converged"}


def test_fit_is_deterministic(small_field, sphere_observation):
    """Test the same seed gives the same codes."""
    config = FitConfig(iterations=4, points_per_step=50, seed=5)

    a = fit_identity_code(small_field, None, sphere_observation, config)
    b = fit_identity_code(small_field, None, sphere_observation, config)

    np.testing.assert_array_equal(a.identity.z_glob, b.identity.z_glob)
    np.testing.assert_array_equal(a.identity.z_loc, b.identity.z_loc)


def test_fit_fails_when_root_finding_fails(small_field, small_defo, sphere_observation):
    """Test FittingError once more than the tolerated share of root finds fail."""
    # No Newton iterations: every displaced point keeps a non-zero residual
    config = FitConfig(iterations=2, points_per_step=50, root_max_iters=0)

    with pytest.raises(FittingError, match="root finds failed"):
        fit_identity_code(small_field, small_defo, sphere_observation, config)


def _sphere_values(code, x, with_gradient=False):
    return SimpleNamespace(values=np.linalg.norm(x, axis=1) - 0.4)


def test_reconstruct_mesh_canonical_and_posed(mocker, small_field, small_field_config, small_defo):
    """Test extraction follows the zero level and posing moves vertices by the deformation."""
    mocker.patch.object(small_field, "forward", side_effect=_sphere_values)
    identity = IdentityCode.zeros(small_field_config)
    expression = ExpressionCode(np.full(4, 0.2))

    canonical = reconstruct_mesh(small_field, identity, resolution=32)
    posed = reconstruct_mesh(small_field, identity, small_defo, expression, resolution=32)

    np.testing.assert_allclose(np.linalg.norm(canonical.vertices, axis=1), 0.4, atol=0.01)
    np.testing.assert_array_equal(posed.faces, canonical.faces)
    # Verify posed vertices are the canonical ones plus the forward displacement
    summary = small_defo.project(small_field.complete(identity))
    moved = small_defo.forward(canonical.vertices, expression.z_ex, summary).displacements
    np.testing.assert_allclose(posed.vertices, canonical.vertices + moved, atol=1e-12)
    assert np.abs(moved).max() > 0.0


def test_reconstruct_mesh_without_surface(mocker, small_field, small_field_config):
    """Test a field without a zero crossing is rejected."""
    mocker.patch.object(small_field, "forward", side_effect=lambda code, x, with_gradient=False: SimpleNamespace(values=np.ones(len(x))))

    with pytest.raises(DegenerateInputError, match="no surface"):
        reconstruct_mesh(small_field, IdentityCode.zeros(small_field_config), resolution=16)
