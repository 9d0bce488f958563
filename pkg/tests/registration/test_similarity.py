import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from headmodel.errors import DegenerateInputError
from headmodel.registration.similarity import SimilarityTransform, rotvec_backward, umeyama_align


def test_umeyama_recovers_a_known_similarity(rng):
    """Test exact recovery of scale, rotation and translation."""
    src = rng.standard_normal((40, 3))
    truth = SimilarityTransform.from_rotvec(1.7, [0.3, -0.5, 0.2], [0.1, 2.0, -1.0])

    estimate = umeyama_align(src, truth.apply(src))

    assert estimate.scale == pytest.approx(1.7)
    np.testing.assert_allclose(estimate.rotation, truth.rotation, atol=1e-10)
    np.testing.assert_allclose(estimate.translation, truth.translation, atol=1e-10)
    assert np.linalg.det(estimate.rotation) == pytest.approx(1.0)


def test_umeyama_without_scale(rng):
    """Test the rigid variant keeps unit scale."""
    src = rng.standard_normal((10, 3))
    truth = SimilarityTransform.from_rotvec(1.0, [0.0, 0.4, 0.0], [1.0, 0.0, 0.0])

    estimate = umeyama_align(src, truth.apply(src), with_scale=False)

    assert estimate.scale == 1.0
    np.testing.assert_allclose(estimate.apply(src), truth.apply(src), atol=1e-10)


def test_umeyama_rejects_degenerate_input():
    """Test too few and collinear correspondences."""
    with pytest.raises(DegenerateInputError):
        umeyama_align(np.eye(3)[:2], np.eye(3)[:2])
    line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateInputError):
        umeyama_align(line, line)


def test_umeyama_rejects_rank_deficient_covariance(rng):
    """Test well spread sources against collapsed targets."""
    src = rng.standard_normal((12, 3))
    with pytest.raises(DegenerateInputError, match="rank deficient"):
        umeyama_align(src, np.tile([0.5, -1.0, 2.0], (12, 1)))
    with pytest.raises(DegenerateInputError, match="rank deficient"):
        umeyama_align(src, np.outer(src[:, 0], [1.0, 2.0, 3.0]))


def test_inverse_and_compose(rng):
    """Test a transform composed with its inverse is the identity."""
    t = SimilarityTransform.from_rotvec(0.8, [0.1, 0.2, 0.3], [1.0, -1.0, 0.5])
    points = rng.standard_normal((5, 3))

    np.testing.assert_allclose(t.compose(t.inverse()).apply(points), points, atol=1e-12)
    np.testing.assert_allclose(t.as_matrix()[:3, :3], 0.8 * t.rotation)
    restored = SimilarityTransform.from_dict(t.to_dict())
    np.testing.assert_allclose(restored.apply(points), t.apply(points))
    with pytest.raises(ValueError):
        SimilarityTransform(scale=0.0)


@pytest.mark.parametrize("rotvec", [[0.3, -0.2, 0.5], [1e-8, 0.0, 0.0], [2.0, 1.0, -0.5]])
def test_rotvec_backward_matches_finite_differences(rotvec, rng):
    """Test the rotation-vector cotangent of <R(w), B>."""
    rotvec = np.array(rotvec)
    weights = rng.standard_normal((3, 3))
    h = 1e-6

    analytic = rotvec_backward(rotvec, weights)

    for i in range(3):
        step = np.zeros(3)
        step[i] = h
        plus = np.sum(Rotation.from_rotvec(rotvec + step).as_matrix() * weights)
        minus = np.sum(Rotation.from_rotvec(rotvec - step).as_matrix() * weights)
        assert analytic[i] == pytest.approx((plus - minus) / (2 * h), abs=1e-6)
