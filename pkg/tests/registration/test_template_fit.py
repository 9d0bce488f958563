import numpy as np
import pytest

from headmodel.errors import DimensionMismatchError
from headmodel.geometry.mesh import OrientedPointCloud
from headmodel.registration.similarity import SimilarityTransform
from headmodel.registration.template import FitParams, MorphableTemplate, RegistrationConfig, fit_template, hinge_transform


@pytest.fixture
def template(sphere_mesh):
    gen = np.random.default_rng(21)
    n = sphere_mesh.num_vertices
    return MorphableTemplate(
        mean=sphere_mesh,
        id_basis=0.01 * gen.standard_normal((n, 3, 3)),
        ex_basis=0.01 * gen.standard_normal((n, 3, 2)),
        hinge_pivot=[0.0, 0.0, 0.0],
        hinge_axis=[1.0, 0.0, 0.0],
        hinge_weights=np.where(sphere_mesh.vertices[:, 1] < -0.2, 1.0, 0.0),
        landmark_indices=np.arange(0, 68 * 9, 9),
    )


def test_hinge_transform_respects_weights():
    """Test zero weights stay put and unit weights rotate fully."""
    points = np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])

    moved = hinge_transform(points, np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0]), np.pi / 2)

    np.testing.assert_allclose(moved[0], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(moved[1], [0.0, 0.0, 1.0], atol=1e-12)


def test_template_save_load(tmp_path, template):
    """Test the template survives its checkpoint form."""
    loaded = MorphableTemplate.load(template.save(tmp_path / "template.nphm"))

    np.testing.assert_array_equal(loaded.mean.faces, template.mean.faces)
    np.testing.assert_array_equal(loaded.landmark_indices, template.landmark_indices)
    np.testing.assert_allclose(loaded.id_basis, template.id_basis, atol=1e-7)
    np.testing.assert_array_equal(loaded.mean.labels, template.mean.labels)


def test_fit_template_reduces_energy(template):
    """Test joint fitting to two scans of a known instance lowers the objective."""
    truth = SimilarityTransform.from_rotvec(1.2, [0.0, 0.3, 0.0], [0.05, 0.0, -0.02])
    scans, landmarks = [], []
    for beta in (np.array([1.0, 0.0]), np.array([0.0, -1.0])):
        mesh = template.instance(np.array([1.0, -0.5, 0.5]), beta, angle=0.05, transform=truth)
        scans.append(OrientedPointCloud(mesh.vertices, mesh.vertex_normals))
        landmarks.append(template.landmarks(mesh.vertices))
    config = RegistrationConfig(iterations=80, warmup_iterations=0, final_iterations=20)

    params = fit_template(template, scans, landmarks, config)

    assert len(params.energies) == 80
    assert params.energies[-1] < params.energies[0]
    assert params.scale == pytest.approx(1.2, rel=0.05)
    assert params.posed_mesh(template, 1).num_vertices == template.num_vertices
    assert set(params.to_dict()) >= {"alpha", "beta", "angles", "scale", "energies"}


def test_fit_template_is_monotone_on_its_own_mean(template):
    """Test the objective never rises when the scan is the template's own mean shape."""
    scan = OrientedPointCloud(template.mean.vertices, template.mean.vertex_normals)
    landmarks = template.landmarks(template.mean.vertices)
    config = RegistrationConfig(iterations=40, warmup_iterations=10, final_iterations=10)

    params = fit_template(template, [scan], [landmarks], config, prealign=False)

    assert len(params.energies) == 40
    assert all(after <= before + 1e-6 for before, after in zip(params.energies[:-1], params.energies[1:]))
    np.testing.assert_allclose(params.posed_mesh(template, 0).vertices, template.mean.vertices, atol=1e-4)


def test_fit_template_input_checks(template):
    """Test scan and landmark count checks."""
    scan = OrientedPointCloud(template.mean.vertices, template.mean.vertex_normals)

    with pytest.raises(ValueError):
        fit_template(template, [], [])
    with pytest.raises(DimensionMismatchError):
        fit_template(template, [scan], [np.zeros((10, 3))])
    with pytest.raises(DimensionMismatchError):
        fit_template(template, [scan], [])


def test_zero_params_reproduce_the_mean(template):
    """Test zero coefficients and identity pose give the mean mesh."""
    params = FitParams.zeros(template, 2)

    np.testing.assert_allclose(params.posed_vertices(template, 0), template.mean.vertices)
