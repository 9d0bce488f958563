import numpy as np
import pytest

from headmodel.errors import DimensionMismatchError
from headmodel.fields.identity import (
    EnsembleField,
    FieldConfig,
    IdentityCode,
    blend_weights,
    identity_sdf_eval,
    identity_sdf_gradient,
    local_sdf_eval,
    mirror_code,
    symmetry_penalty,
)
from headmodel.fields.layout import flip


def _random_code(field_, seed=0):
    gen = np.random.default_rng(seed)
    config = field_.config
    code = IdentityCode(0.1 * gen.standard_normal(config.d_glob), 0.1 * gen.standard_normal((config.num_anchors + 1, config.d_loc)))
    return field_.complete(code)


def test_blend_weights_form_a_partition_of_unity(rng):
    """Test weights are positive and sum to one for any point."""
    anchors = rng.uniform(-0.5, 0.5, size=(9, 3))
    points = rng.uniform(-2.0, 2.0, size=(50, 3))

    weights = blend_weights(anchors, points, sigma=0.1, c=np.exp(-0.2 / 0.01))

    assert weights.shape == (50, 10)
    assert np.all(weights > 0.0)
    np.testing.assert_allclose(weights.sum(axis=1), 1.0)


def test_blend_weights_single_point_and_far_field():
    """Test a far query is dominated by the background weight."""
    anchors = np.zeros((2, 3))

    weights = blend_weights(anchors, np.array([10.0, 0.0, 0.0]), sigma=0.1, c=1e-3)

    assert weights.shape == (3,)
    assert weights[0] > 0.999
    with pytest.raises(ValueError):
        blend_weights(anchors, np.zeros(3), sigma=0.0, c=1.0)


def test_default_background_weight():
    """Test c defaults to exp(-0.2 / sigma^2)."""
    assert FieldConfig(sigma=0.1).background_weight == pytest.approx(np.exp(-20.0))
    assert FieldConfig(blend_const=0.5).background_weight == 0.5


def test_mirror_equivariance(small_field, rng):
    """Test mirroring the query and the code leaves the value unchanged."""
    code = _random_code(small_field, seed=1)
    mirrored = mirror_code(small_field.layout, code)
    points = rng.uniform(-0.6, 0.6, size=(40, 3))

    original = identity_sdf_eval(small_field, code, points)
    reflected = identity_sdf_eval(small_field, mirrored, flip(points))

    np.testing.assert_allclose(reflected, original, atol=1e-10)


def test_spatial_gradient_matches_finite_differences(small_field, rng):
    """Test the analytic spatial gradient against central differences."""
    code = _random_code(small_field, seed=2)
    points = rng.uniform(-0.5, 0.5, size=(6, 3))
    h = 1e-6

    analytic = identity_sdf_gradient(small_field, code, points)

    for axis in range(3):
        step = np.zeros(3)
        step[axis] = h
        numeric = (identity_sdf_eval(small_field, code, points + step) - identity_sdf_eval(small_field, code, points - step)) / (2 * h)
        np.testing.assert_allclose(analytic[:, axis], numeric, rtol=1e-4, atol=1e-5)


def test_backward_point_cotangent_equals_spatial_gradient(small_field, rng):
    """Test a unit value cotangent pulls back to the spatial gradient."""
    code = _random_code(small_field, seed=3)
    points = rng.uniform(-0.5, 0.5, size=(8, 3))
    evaluation = small_field.forward(code, points, with_gradient=True)

    _, code_grads = small_field.backward(code, evaluation, np.ones(8), need_params=False)

    np.testing.assert_allclose(code_grads.points, evaluation.gradients, rtol=1e-8, atol=1e-10)


def test_backward_code_gradients_match_finite_differences(small_field, rng):
    """Test cotangents of latents and anchors for the summed values."""
    code = _random_code(small_field, seed=4)
    points = rng.uniform(-0.5, 0.5, size=(10, 3))
    evaluation = small_field.forward(code, points, with_gradient=False)
    _, grads = small_field.backward(code, evaluation, np.ones(10), need_params=False)
    h = 1e-6

    def total(c):
        return float(np.sum(small_field.forward(c, points, with_gradient=False).values))

    # Verify a few entries of every code component
    for attr, bar in (("z_glob", grads.z_glob), ("z_loc", grads.z_loc), ("anchors", grads.anchors)):
        for index in [(0,), (1,)] if attr == "z_glob" else [(0, 0), (3, 1), (5, 2)]:
            plus, minus = code.copy(), code.copy()
            getattr(plus, attr)[index] += h
            getattr(minus, attr)[index] -= h
            numeric = (total(plus) - total(minus)) / (2 * h)
            assert bar[index] == pytest.approx(numeric, rel=1e-4, abs=1e-5)


def test_gradient_cotangent_matches_finite_differences(small_field, rng):
    """Test second-order cotangents through the spatial gradient."""
    code = _random_code(small_field, seed=5)
    points = rng.uniform(-0.5, 0.5, size=(5, 3))
    direction = rng.standard_normal((5, 3))
    evaluation = small_field.forward(code, points, with_gradient=True)
    _, grads = small_field.backward(code, evaluation, np.zeros(5), direction, need_params=False)
    h = 1e-6

    def loss_at(c):
        return float(np.sum(small_field.forward(c, points, with_gradient=True).gradients * direction))

    for index in [(0, 0), (2, 1), (9, 2)]:
        plus, minus = code.copy(), code.copy()
        plus.z_loc[index] += h
        minus.z_loc[index] -= h
        numeric = (loss_at(plus) - loss_at(minus)) / (2 * h)
        assert grads.z_loc[index] == pytest.approx(numeric, rel=1e-3, abs=1e-5)


def test_parameter_gradients_cover_every_network(small_field, rng):
    """Test named network gradients match the parameter layout."""
    code = _random_code(small_field, seed=6)
    evaluation = small_field.forward(code, rng.uniform(-0.5, 0.5, size=(4, 3)))

    net_grads, _ = small_field.backward(code, evaluation, np.ones(4))

    assert set(net_grads) == set(small_field.nets()) - {"anchors"}
    flat = small_field.grads_as_list(net_grads)
    assert [g.shape for g in flat] == [p.shape for p in small_field.parameters()]


def test_symmetric_sharing_reduces_networks(small_field_config):
    """Test right anchors reuse their partner's network only when sharing is on."""
    shared = EnsembleField(small_field_config)
    separate = EnsembleField(FieldConfig(**{**small_field_config.__dict__, "share_symmetric": False}))

    assert len(shared.region_nets) == 6
    assert len(separate.region_nets) == 9


def test_local_sdf_eval_region_zero_ignores_anchors(small_field):
    """Test the global region is independent of anchor positions."""
    code = _random_code(small_field, seed=7)
    x = np.array([0.1, 0.2, -0.1])

    a = local_sdf_eval(small_field, 0, x, code.z_glob, code.z_loc[0], code.anchors)
    b = local_sdf_eval(small_field, 0, x, code.z_glob, code.z_loc[0], code.anchors + 1.0)

    assert isinstance(a, float)
    assert a == b


def test_shared_on_axis_regions_are_mirror_symmetric(small_field, rng):
    """Test the global and on-axis regions average their net with its mirror image."""
    code = _random_code(small_field, seed=4)
    offsets = rng.uniform(-0.3, 0.3, size=(10, 3))

    # Region 0 is centred on the origin
    a = local_sdf_eval(small_field, 0, offsets, code.z_glob, code.z_loc[0], code.anchors)
    b = local_sdf_eval(small_field, 0, flip(offsets), code.z_glob, code.z_loc[0], code.anchors)
    np.testing.assert_allclose(a, b, atol=1e-12)

    for row in small_field.layout.middle:
        k = row + 1
        centre = code.anchors[row]
        a = local_sdf_eval(small_field, k, centre + offsets, code.z_glob, code.z_loc[k], code.anchors)
        b = local_sdf_eval(small_field, k, centre + flip(offsets), code.z_glob, code.z_loc[k], code.anchors)
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_unshared_global_region_is_not_symmetrised(small_field_config, rng):
    """Test the global net is used as is when sharing is off."""
    field_ = EnsembleField(FieldConfig(**{**small_field_config.__dict__, "share_symmetric": False}), rng=np.random.default_rng(7))
    code = _random_code(field_, seed=4)
    offsets = rng.uniform(-0.3, 0.3, size=(10, 3))

    a = local_sdf_eval(field_, 0, offsets, code.z_glob, code.z_loc[0], code.anchors)
    b = local_sdf_eval(field_, 0, flip(offsets), code.z_glob, code.z_loc[0], code.anchors)
    assert not np.allclose(a, b, atol=1e-9)


def test_symmetry_penalty_gradient(small_field):
    """Test the partner-latent penalty and its gradient."""
    layout = small_field.layout
    z_loc = np.zeros((10, 3))
    z_loc[layout.left[0] + 1] = [1.0, 0.0, 0.0]

    value, grad = symmetry_penalty(layout, z_loc)

    assert value == pytest.approx(1.0)
    np.testing.assert_allclose(grad[layout.left[0] + 1], [2.0, 0.0, 0.0])
    np.testing.assert_allclose(grad[layout.right[0] + 1], [-2.0, 0.0, 0.0])


def test_code_checks_and_serialisation(small_field):
    """Test shape checks and the JSON form of identity codes."""
    code = _random_code(small_field, seed=8)

    restored = IdentityCode.from_dict(code.to_dict())

    np.testing.assert_array_equal(restored.z_loc, code.z_loc)
    np.testing.assert_array_equal(restored.anchors, code.anchors)
    with pytest.raises(DimensionMismatchError):
        small_field.forward(IdentityCode(np.zeros(5), code.z_loc, code.anchors), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        small_field.forward(IdentityCode(code.z_glob, code.z_loc), np.zeros((1, 3)))
