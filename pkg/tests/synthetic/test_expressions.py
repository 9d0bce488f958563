import numpy as np
import pytest

from headmodel.synthetic.expressions import (
    SyntheticExpression,
    apply_expression,
    interpolate_sequence,
    jaw_weights,
    make_expression,
    mouth_height,
    wendland,
)
from headmodel.synthetic.shapes import SyntheticConfig, generate_subject


@pytest.fixture(scope="module")
def subject():
    return generate_subject(8, config=SyntheticConfig(mesh_resolution=24, registered_subdivisions=1))


def test_wendland_support():
    """Test the kernel is 1 at the centre and 0 outside the unit radius."""
    values = wendland(np.array([0.0, 0.5, 1.0, 2.0]))

    assert values[0] == 1.0
    assert 0.0 < values[1] < 1.0
    assert values[2] == 0.0 and values[3] == 0.0


def test_make_expression_is_deterministic():
    """Test expressions are a pure function of their seed."""
    a = make_expression(21)
    b = make_expression(21)

    np.testing.assert_array_equal(a.vectors, b.vectors)
    assert a.jaw_angle == b.jaw_angle
    restored = SyntheticExpression.from_dict(a.to_dict())
    np.testing.assert_array_equal(restored.radii, a.radii)
    assert restored.sites == a.sites


def test_bump_part_is_linear(subject):
    """Test bump displacements scale with the magnitude and vanish at 0."""
    expression = make_expression(4)
    points = subject.neutral.vertices[:50]

    one = expression.bump_displacement(points, subject, 1.0)
    np.testing.assert_allclose(expression.bump_displacement(points, subject, 2.0), 2.0 * one)
    assert not expression.displacement(points, subject, 0.0).any()


def test_jaw_weights(subject):
    """Test the jaw weight is 0 above the mouth and 1 well below it at the front."""
    height = mouth_height(subject)
    points = np.array([[0.0, height + 0.2, 0.5], [0.0, height - 0.2, 0.5]])

    np.testing.assert_allclose(jaw_weights(points, height), [0.0, 1.0])


def test_hinge_moves_only_the_jaw(subject):
    """Test a pure hinge expression leaves the upper head in place."""
    expression = SyntheticExpression(0, (), np.zeros((0, 3)), np.zeros(0), jaw_angle=0.2)
    top = np.array([[0.0, 0.6, 0.2]])
    chin = np.array([[0.0, mouth_height(subject) - 0.2, 0.5]])

    assert not expression.displacement(top, subject).any()
    assert np.linalg.norm(expression.displacement(chin, subject)) > 1e-3


def test_apply_expression_keeps_topology(subject):
    """Test posing keeps faces and labels."""
    posed, delta = apply_expression(subject, make_expression(9))

    np.testing.assert_array_equal(posed.faces, subject.neutral.faces)
    np.testing.assert_array_equal(posed.labels, subject.neutral.labels)
    np.testing.assert_allclose(posed.vertices - subject.neutral.vertices, delta)

    with pytest.raises(ValueError):
        apply_expression(generate_subject(8, with_meshes=False), make_expression(9))


def test_interpolate_sequence(subject):
    """Test sequences start and end neutral and peak in the middle."""
    magnitudes, meshes = interpolate_sequence(subject, make_expression(2), 5)

    assert len(meshes) == 5
    assert magnitudes[2] == pytest.approx(1.0)
    np.testing.assert_allclose(meshes[0].vertices, subject.neutral.vertices, atol=1e-12)
    with pytest.raises(ValueError):
        interpolate_sequence(subject, make_expression(2), 0)
