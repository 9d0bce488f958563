import numpy as np
import pytest

from headmodel.errors import DimensionMismatchError
from headmodel.fitting.codes import FitConfig, landmark_rows
from headmodel.fitting.tracking import TrackConfig, TrackState, initial_poses, total_variation, track_sequence, tracked_landmarks
from headmodel.geometry.mesh import OrientedPointCloud
from headmodel.registration.similarity import SimilarityTransform


def test_total_variation_gradient(rng):
    """Test the smoothed total variation against finite differences."""
    values = rng.standard_normal((5, 3))
    value, grad = total_variation(values, 1e-3)

    h = 1e-6
    e = np.zeros_like(values)
    e[2, 1] = h
    fd = (total_variation(values + e, 1e-3)[0] - total_variation(values - e, 1e-3)[0]) / (2 * h)

    assert grad[2, 1] == pytest.approx(fd, abs=1e-6)
    assert value > 0.0
    assert total_variation(values[:1], 1e-3)[0] == 0.0


def test_total_variation_of_constant_sequence():
    """Test a constant sequence only pays the smoothing term."""
    value, grad = total_variation(np.ones((4, 2)), 1e-3)

    assert value == pytest.approx(3e-3)
    assert not grad.any()


def test_initial_poses_share_scale(rng):
    """Test landmark alignment recovers the pose and shares the mean scale."""
    anchors = rng.uniform(-0.5, 0.5, size=(9, 3))
    rows = np.arange(8)
    true = SimilarityTransform.from_rotvec(1.5, np.array([0.1, -0.2, 0.05]), np.array([0.1, 0.0, -0.2]))
    landmarks = [true.inverse().apply(anchors[rows]), None]

    poses = initial_poses(anchors, rows, landmarks, 2)

    # Verify the aligned frame maps the landmarks onto the anchors
    np.testing.assert_allclose(poses[0].apply(landmarks[0]), anchors[rows], atol=1e-8)
    assert poses[1].scale == pytest.approx(1.5)
    np.testing.assert_allclose(poses[1].rotation, np.eye(3), atol=1e-12)


def test_initial_poses_without_landmarks():
    """Test a layout without tracking landmarks starts every frame at the identity."""
    poses = initial_poses(np.zeros((5, 3)), None, [None, None], 2)

    assert all(p.scale == 1.0 for p in poses)


def test_track_sequence_smoke(small_field, small_defo, sphere_mesh):
    """Test tracking two frames end to end."""
    cloud = OrientedPointCloud(sphere_mesh.vertices, sphere_mesh.vertex_normals)
    rows = landmark_rows(small_field.layout)
    landmarks = [small_field.predict_anchors(np.zeros(small_field.config.d_glob))[rows], None]
    config = TrackConfig(fit=FitConfig(iterations=2, points_per_step=80), iterations=3)

    state = track_sequence(small_field, small_defo, [cloud, cloud], landmarks, config)

    assert state.num_frames == 2
    assert state.z_ex.shape == (2, 4)
    assert len(state.history) == 3
    assert set(state.total_variation()) == {"tv_ex", "tv_pose"}
    assert tracked_landmarks(small_field, small_defo, state).shape == (2, 8, 3)

    restored = TrackState.from_dict(state.to_dict())
    np.testing.assert_allclose(restored.z_ex, state.z_ex)


def test_track_sequence_input_checks(small_field, small_defo, sphere_mesh):
    """Test empty sequences and mismatched landmark lists."""
    cloud = OrientedPointCloud(sphere_mesh.vertices, sphere_mesh.vertex_normals)
    with pytest.raises(DimensionMismatchError):
        track_sequence(small_field, small_defo, [])
    with pytest.raises(DimensionMismatchError):
        track_sequence(small_field, small_defo, [cloud], [None, None])
