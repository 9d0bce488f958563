import numpy as np
import pytest

from headmodel.fields.identity import IdentityCode
from headmodel.training.identity import anchor_loss
from headmodel.training.losses import IGRWeights, deformation_loss, igr_terms, loss_igr


def test_igr_terms_vanish_on_an_exact_sphere(rng):
    """Test the surface, normal and eikonal terms of an exact SDF."""
    directions = rng.standard_normal((100, 3))
    normals = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    off = rng.uniform(-1.0, 1.0, size=(80, 3)) + 0.05
    off_values = np.linalg.norm(off, axis=1) - 0.5
    off_gradients = off / np.linalg.norm(off, axis=1, keepdims=True)

    terms = igr_terms(np.zeros(100), normals, normals, off_values, off_gradients)

    assert terms.terms["surface"] == pytest.approx(0.0)
    assert terms.terms["normal"] == pytest.approx(0.0, abs=1e-12)
    assert terms.terms["eikonal"] == pytest.approx(0.0, abs=1e-12)
    expected_off = 0.01 * np.mean(np.exp(-50.0 * np.abs(off_values)))
    assert terms.terms["off_surface"] == pytest.approx(expected_off)
    assert terms.value == pytest.approx(sum(terms.terms.values()))


def test_igr_cotangents_match_finite_differences(rng):
    """Test the value and gradient cotangents of igr_terms."""
    fs = rng.uniform(0.1, 0.3, size=5) * rng.choice([-1.0, 1.0], size=5)
    gs = rng.standard_normal((5, 3))
    ns = rng.standard_normal((5, 3))
    ns /= np.linalg.norm(ns, axis=1, keepdims=True)
    fo = rng.uniform(0.05, 0.2, size=4)
    go = rng.standard_normal((4, 3))
    weights = IGRWeights(alpha=10.0)
    terms = igr_terms(fs, gs, ns, fo, go, weights)
    h = 1e-6

    def value(fs_, gs_, fo_, go_):
        return igr_terms(fs_, gs_, ns, fo_, go_, weights).value

    step = np.zeros(4)
    step[2] = h
    numeric = (value(fs, gs, fo + step, go) - value(fs, gs, fo - step, go)) / (2 * h)
    assert terms.off_value_bar[2] == pytest.approx(numeric, rel=1e-5)

    step = np.zeros((5, 3))
    step[1, 2] = h
    numeric = (value(fs, gs + step, fo, go) - value(fs, gs - step, fo, go)) / (2 * h)
    assert terms.surface_gradient_bar[1, 2] == pytest.approx(numeric, rel=1e-5)


def test_loss_igr_code_gradient(small_field, rng):
    """Test the identity-field IGR loss gradient for a local latent entry."""
    gen = np.random.default_rng(3)
    code = small_field.complete(IdentityCode(0.1 * gen.standard_normal(4), 0.1 * gen.standard_normal((10, 3))))
    surface = rng.uniform(-0.5, 0.5, size=(6, 3))
    normals = surface / np.linalg.norm(surface, axis=1, keepdims=True)
    off = rng.uniform(-0.8, 0.8, size=(6, 3))
    loss = loss_igr(small_field, code, surface, normals, off, need_params=False)
    h = 1e-6

    plus, minus = code.copy(), code.copy()
    plus.z_loc[4, 1] += h
    minus.z_loc[4, 1] -= h
    numeric = (loss_igr(small_field, plus, surface, normals, off, need_params=False).value
               - loss_igr(small_field, minus, surface, normals, off, need_params=False).value) / (2 * h)

    assert loss.net_grads is None
    assert loss.code_grads.z_loc[4, 1] == pytest.approx(numeric, rel=1e-3, abs=1e-6)
    assert set(loss.terms) == {"surface", "normal", "eikonal", "off_surface"}


def test_deformation_and_anchor_losses():
    """Test the mean squared losses and their cotangents."""
    predicted = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    target = np.zeros((2, 3))

    value, bar = deformation_loss(predicted, target)
    assert value == pytest.approx(0.5)
    np.testing.assert_allclose(bar, predicted)

    value, bar = anchor_loss(predicted, target)
    assert value == pytest.approx(0.5)
    np.testing.assert_allclose(bar, predicted)
