import numpy as np
import pytest

from headmodel.errors import DegenerateInputError
from headmodel.geometry.neighbors import NNIndex, closest_points_on_triangles, nn_query, point_to_mesh_distance


def test_closest_points_cover_every_voronoi_region():
    """Test interior, vertex and edge projections onto one triangle."""
    triangle = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    queries = np.array([
        [0.2, 0.2, 1.0],
        [-1.0, -1.0, 0.0],
        [2.0, -1.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.5, -1.0, 0.0],
    ])

    closest = closest_points_on_triangles(queries, np.broadcast_to(triangle, (5, 3, 3)))

    expected = [[0.2, 0.2, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.0]]
    np.testing.assert_allclose(closest, expected, atol=1e-12)


def test_nn_query_returns_exact_neighbours(rng):
    """Test kd-tree queries against brute force."""
    targets = rng.standard_normal((200, 3))
    queries = rng.standard_normal((30, 3))

    idx, dist = nn_query(targets, queries)

    brute = np.linalg.norm(queries[:, None] - targets[None], axis=-1)
    np.testing.assert_array_equal(idx, brute.argmin(axis=1))
    np.testing.assert_allclose(dist, brute.min(axis=1))


def test_empty_index_raises():
    """Test an empty target set is refused."""
    with pytest.raises(DegenerateInputError):
        NNIndex(np.zeros((0, 3)))


def test_point_to_mesh_distance_on_sphere(sphere_mesh, rng):
    """Test distances from points at radius 1 to a radius-0.5 sphere."""
    directions = rng.standard_normal((50, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    distances = point_to_mesh_distance(sphere_mesh, directions)

    assert np.all(distances >= 0.5 - 1e-9)
    assert np.all(distances < 0.52)
    assert point_to_mesh_distance(sphere_mesh, sphere_mesh.vertices[:5]) == pytest.approx(np.zeros(5), abs=1e-12)
