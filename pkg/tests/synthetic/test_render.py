import numpy as np
import pytest

from headmodel.errors import DegenerateInputError
from headmodel.geometry.mesh import TriMesh
from headmodel.synthetic.render import depth_hits, render_depth_cloud, view_rotation


def test_view_rotation_is_a_rotation():
    """Test view rotations are orthonormal yaw rotations."""
    rotation = view_rotation(0.3)

    np.testing.assert_allclose(rotation @ rotation.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(rotation[1], [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(view_rotation(0.0), np.eye(3))


def test_frontal_render_sees_the_front(sphere_mesh, rng):
    """Test a frontal render only keeps first hits facing the camera."""
    cloud = render_depth_cloud(sphere_mesh, n=300, rng=rng, grid=64)

    assert len(cloud) == 300
    assert np.all(cloud.points[:, 2] > -0.05)
    assert np.all(cloud.normals[:, 2] >= 0.0)
    assert cloud.labels is not None


def test_yawed_render_sees_the_side(sphere_mesh, rng):
    """Test a yawed view observes the rotated side of the head."""
    cloud = render_depth_cloud(sphere_mesh, viewpoint=np.pi / 2, n=200, rng=rng, grid=64)
    view = np.array([0.0, 0.0, 1.0]) @ view_rotation(np.pi / 2)

    assert np.all(cloud.points @ view > -0.05)


def test_depth_noise_moves_points_along_the_ray(sphere_mesh):
    """Test noise only changes the depth coordinate of a frontal view."""
    clean = render_depth_cloud(sphere_mesh, n=100, rng=np.random.default_rng(0), grid=64)
    noisy = render_depth_cloud(sphere_mesh, n=100, noise=0.01, rng=np.random.default_rng(0), grid=64)

    np.testing.assert_allclose(noisy.points[:, :2], clean.points[:, :2])
    assert np.any(noisy.points[:, 2] != clean.points[:, 2])


def test_all_hits_and_empty_mesh(sphere_mesh):
    """Test n=None returns every covered pixel and empty meshes are rejected."""
    faces, bary = depth_hits(sphere_mesh, grid=32)

    assert len(faces) > 0.5 * np.pi * 16 * 16
    np.testing.assert_allclose(bary.sum(axis=1), 1.0)
    with pytest.raises(DegenerateInputError):
        depth_hits(TriMesh.empty())
