import numpy as np
import pytest

from headmodel.errors import DegenerateInputError
from headmodel.geometry.mesh import TriMesh
from headmodel.geometry.metrics import MetricsConfig, chamfer_distance, evaluate_metrics, mm_to_canonical


def test_tau_in_canonical_units():
    """Test the default threshold of 1.5 mm."""
    assert MetricsConfig().tau == pytest.approx(6e-3)
    assert mm_to_canonical(10.0) == pytest.approx(0.04)


def test_mesh_against_itself_is_perfect(sphere_mesh):
    """Test self-comparison gives zero distance and full F-score."""
    report = evaluate_metrics(sphere_mesh, sphere_mesh, MetricsConfig(n_samples=2000))

    assert report.l1_chamfer < 1e-3
    assert report.f_score == pytest.approx(1.0)
    assert report.normal_consistency > 0.95
    assert set(report.to_dict()) >= {"l1_chamfer", "normal_consistency", "f_score", "tau"}


def test_scaled_mesh_lowers_f_score(sphere_mesh):
    """Test a 10% larger reconstruction falls outside tau everywhere."""
    bigger = sphere_mesh.with_vertices(1.1 * sphere_mesh.vertices)

    report = evaluate_metrics(bigger, sphere_mesh, MetricsConfig(n_samples=2000), region_mask=False)

    assert report.f_score == 0.0
    assert report.l1_chamfer == pytest.approx(0.05, rel=0.1)


def test_chamfer_distance_of_shifted_points(rng):
    """Test the point-set Chamfer distance of a rigid shift."""
    points = rng.standard_normal((20, 3)) * 10
    assert chamfer_distance(points, points + np.array([0.01, 0.0, 0.0])) == pytest.approx(0.01)


def test_empty_meshes_raise(sphere_mesh):
    """Test metrics refuse empty meshes."""
    with pytest.raises(DegenerateInputError):
        evaluate_metrics(TriMesh.empty(), sphere_mesh)
