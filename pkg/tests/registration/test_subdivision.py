import numpy as np
import pytest

from headmodel.geometry.mesh import LABEL_FRONT, TriMesh
from headmodel.registration.subdivision import subdivide_region, subdivision_rounds


def test_rounds_from_factor():
    """Test ceil(log4(factor)) rounds."""
    assert subdivision_rounds(1) == 0
    assert subdivision_rounds(4) == 1
    assert subdivision_rounds(5) == 2
    assert subdivision_rounds(16) == 2
    with pytest.raises(ValueError):
        subdivision_rounds(0)


def test_region_subdivision_keeps_a_closed_surface(sphere_mesh):
    """Test one round refines the front and leaves a watertight mesh."""
    front_before = int(np.sum(sphere_mesh.face_labels == LABEL_FRONT))

    refined = subdivide_region(sphere_mesh, LABEL_FRONT, 4)

    # Verify no T-junctions: closed manifold counts
    assert 2 * len(refined.edges) == 3 * refined.num_faces
    assert refined.num_vertices - len(refined.edges) + refined.num_faces == 2
    assert int(np.sum(refined.face_labels == LABEL_FRONT)) >= 4 * front_before
    assert refined.area == pytest.approx(sphere_mesh.area, rel=1e-9)
    np.testing.assert_array_equal(refined.vertices[:sphere_mesh.num_vertices], sphere_mesh.vertices)


def test_new_vertices_are_edge_midpoints(sphere_mesh):
    """Test inserted vertices lie inside the sphere on chord midpoints."""
    refined = subdivide_region(sphere_mesh, [LABEL_FRONT], 4)

    added = refined.vertices[sphere_mesh.num_vertices:]
    assert len(added) > 0
    assert np.all(np.linalg.norm(added, axis=1) < 0.5)


def test_factor_one_and_unlabelled_meshes(sphere_mesh):
    """Test factor 1 copies and a labelled region is required otherwise."""
    unlabelled = TriMesh(sphere_mesh.vertices, sphere_mesh.faces)

    assert subdivide_region(unlabelled, LABEL_FRONT, 1).num_faces == sphere_mesh.num_faces
    with pytest.raises(ValueError):
        subdivide_region(unlabelled, LABEL_FRONT, 4)
