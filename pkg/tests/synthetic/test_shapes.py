import numpy as np
import pytest

from headmodel.geometry.mesh import LABEL_BACK, LABEL_FRONT
from headmodel.synthetic.shapes import SyntheticConfig, front_labels, generate_subject, registered_topology


@pytest.fixture(scope="module")
def meshed_subject():
    config = SyntheticConfig(mesh_resolution=24, registered_subdivisions=2)
    return generate_subject(3, config=config)


def test_same_seed_same_subject():
    """Test subject parameters are a pure function of the seed."""
    a = generate_subject(11, with_meshes=False)
    b = generate_subject(11, with_meshes=False)
    c = generate_subject(12, with_meshes=False)

    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()


def test_zero_asymmetry_is_mirror_symmetric(rng):
    """Test asymmetry 0 gives a head symmetric across the x=0 plane."""
    subject = generate_subject(5, asymmetry=0.0, with_meshes=False)
    points = rng.uniform(-0.8, 0.8, size=(200, 3))
    mirrored = points * np.array([-1.0, 1.0, 1.0])

    np.testing.assert_allclose(subject.sdf(points), subject.sdf(mirrored), atol=1e-9)

    lopsided = generate_subject(5, asymmetry=1.0, with_meshes=False)
    assert np.max(np.abs(lopsided.sdf(points) - lopsided.sdf(mirrored))) > 1e-4


def test_sdf_sign_and_unit_gradient(rng):
    """Test the signed distance vanishes on the surface with unit gradient there."""
    subject = generate_subject(2, with_meshes=False)
    u = rng.standard_normal((20, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    surface = subject.surface_points(u)

    assert subject.sdf(np.zeros((1, 3)))[0] < 0.0
    assert subject.sdf(np.array([[0.0, 0.0, 2.0]]))[0] > 0.0
    np.testing.assert_allclose(subject.sdf(surface), 0.0, atol=1e-12)

    # Verify the gradient norm by central differences
    h = 1e-6
    grad = np.stack([
        (subject.sdf(surface + h * e) - subject.sdf(surface - h * e)) / (2 * h) for e in np.eye(3)
    ], axis=1)
    np.testing.assert_allclose(np.linalg.norm(grad, axis=1), 1.0, atol=1e-4)


def test_anchor_ground_truth():
    """Test ground-truth anchors lie on the surface for every built-in layout."""
    subject = generate_subject(4, with_meshes=False)

    assert subject.anchors(0).shape == (0, 3)
    anchors = subject.anchors(39)
    assert anchors.shape == (39, 3)
    np.testing.assert_allclose(subject.sdf(anchors), 0.0, atol=1e-12)
    assert set(subject.all_anchors()) == {"0", "1", "5", "9", "39"}
    assert subject.tracking_landmarks().shape == (8, 3)


def test_meshes(meshed_subject):
    """Test the neutral and registered meshes of a subject."""
    neutral = meshed_subject.neutral
    registered = meshed_subject.registered

    assert not neutral.is_empty
    assert np.max(np.abs(meshed_subject.sdf(neutral.vertices))) < 0.05
    assert registered.num_vertices == 162
    assert len(meshed_subject.landmark_indices) == 68
    assert meshed_subject.landmarks().shape == (68, 3)
    assert np.any(registered.labels == LABEL_FRONT)


def test_registered_topology_is_shared():
    """Test every call returns the same topology."""
    a = registered_topology(1)
    b = registered_topology(1)

    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_front_labels_and_config_checks():
    """Test front labels follow the viewing direction."""
    labels = front_labels(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]))

    assert labels.tolist() == [LABEL_FRONT, LABEL_BACK, LABEL_BACK]
    with pytest.raises(ValueError):
        SyntheticConfig(mesh_resolution=4)
    with pytest.raises(ValueError):
        SyntheticConfig(asymmetry=-0.1)
