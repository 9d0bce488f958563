import numpy as np
import pytest

from headmodel.errors import DegenerateInputError, DimensionMismatchError
from headmodel.geometry.mesh import LABEL_FRONT, OrientedPointCloud, TriMesh, mirror_mesh


def test_sphere_mesh_properties(sphere_mesh):
    """Test area, volume and normals of an outward icosphere."""
    assert sphere_mesh.area == pytest.approx(4 * np.pi * 0.25, rel=0.03)
    assert sphere_mesh.signed_volume() == pytest.approx(4 / 3 * np.pi * 0.125, rel=0.05)

    # Verify vertex normals point away from the centre
    radial = sphere_mesh.vertices / np.linalg.norm(sphere_mesh.vertices, axis=1, keepdims=True)
    assert np.all(np.sum(radial * sphere_mesh.vertex_normals, axis=1) > 0.99)


def test_face_labels_take_the_vertex_maximum():
    """Test a face touching a front vertex is a front face."""
    mesh = TriMesh(np.eye(3), [[0, 1, 2]], labels=[0, 0, LABEL_FRONT])

    assert mesh.face_labels.tolist() == [LABEL_FRONT]


def test_invalid_meshes_are_rejected():
    """Test face index, repeated vertex and label checks."""
    with pytest.raises(ValueError):
        TriMesh(np.eye(3), [[0, 1, 3]])
    with pytest.raises(ValueError):
        TriMesh(np.eye(3), [[0, 1, 1]])
    with pytest.raises(DimensionMismatchError):
        TriMesh(np.eye(3), [[0, 1, 2]], labels=[0, 1])
    with pytest.raises(DegenerateInputError):
        TriMesh.empty().require_non_empty()


def test_point_cloud_requires_unit_normals():
    """Test unnormalised normals are refused unless explicitly normalised."""
    points = np.zeros((2, 3))
    normals = np.array([[0.0, 0.0, 2.0], [1.0, 0.0, 0.0]])

    with pytest.raises(ValueError):
        OrientedPointCloud(points, normals)
    cloud = OrientedPointCloud.from_unnormalised(points, normals)
    np.testing.assert_allclose(np.linalg.norm(cloud.normals, axis=1), 1.0)
    assert len(cloud.subset(np.array([True, False]))) == 1


def test_mirror_mesh_keeps_orientation(sphere_mesh):
    """Test mirroring flips winding so the volume stays positive."""
    mirrored = mirror_mesh(sphere_mesh)

    assert mirrored.signed_volume() == pytest.approx(sphere_mesh.signed_volume())
    np.testing.assert_allclose(mirrored.vertices[:, 0], -sphere_mesh.vertices[:, 0])
