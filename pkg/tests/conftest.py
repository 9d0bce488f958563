"""
Shared test fixtures and configuration.
"""

import os
import sys

import numpy as np
import pytest
import trimesh

# Add the parent directory to the path so we can import the headmodel package
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from headmodel.fields.expression import DeformationConfig, DeformationField
from headmodel.fields.identity import EnsembleField, FieldConfig
from headmodel.fitting.codes import FitConfig
from headmodel.fitting.tracking import TrackConfig
from headmodel.geometry.mesh import LABEL_BACK, LABEL_FRONT, TriMesh
from headmodel.geometry.metrics import MetricsConfig
from headmodel.registration.template import RegistrationConfig
from headmodel.settings import RunConfig
from headmodel.synthetic.shapes import SyntheticConfig
from headmodel.training.expression import ExpressionTrainConfig
from headmodel.training.identity import IdentityTrainConfig
from headmodel.training.model import ExpressionModel, IdentityModel


@pytest.fixture
def rng():
    """Seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_field_config():
    """Identity field small enough for finite-difference checks."""
    return FieldConfig(
        num_anchors=9, d_glob=4, d_loc=3, hidden_width=8, hidden_layers=2,
        anchor_hidden_width=8, anchor_hidden_layers=1, sigma=0.1,
    )


@pytest.fixture
def small_field(small_field_config):
    """Symmetric K=9 identity field."""
    return EnsembleField(small_field_config, rng=np.random.default_rng(7))


@pytest.fixture
def small_defo_config():
    return DeformationConfig(d_ex=4, d_id_ex=3, hidden_width=8, hidden_layers=2)


@pytest.fixture
def small_defo(small_defo_config, small_field_config):
    """Deformation field whose output layer has been randomised so it moves points."""
    defo = DeformationField(small_defo_config, small_field_config, rng=np.random.default_rng(11))
    gen = np.random.default_rng(12)
    defo.net.weights[-1][...] = 0.05 * gen.standard_normal(defo.net.weights[-1].shape)
    defo.net.biases[-1][...] = 0.01 * gen.standard_normal(defo.net.biases[-1].shape)
    return defo


@pytest.fixture
def sphere_mesh():
    """Labelled icosphere of radius 0.5; the z > 0 half is the front."""
    ico = trimesh.creation.icosphere(subdivisions=3, radius=0.5)
    vertices = np.asarray(ico.vertices)
    labels = np.where(vertices[:, 2] > 0.0, LABEL_FRONT, LABEL_BACK)
    return TriMesh(vertices, np.asarray(ico.faces), labels)


@pytest.fixture
def tiny_synthetic_config():
    """Synthetic generator settings for fast data set tests."""
    return SyntheticConfig(
        num_subjects=2, num_test_subjects=1, num_expressions=2,
        mesh_resolution=24, registered_subdivisions=2, depth_grid=64, depth_points=300,
    )


@pytest.fixture
def tiny_run(tmp_path, tiny_synthetic_config, small_field_config, small_defo_config):
    """Run config small enough to generate, train, fit and resume in seconds."""
    run = RunConfig(
        data_dir=str(tmp_path / "data"),
        out_dir=str(tmp_path / "runs"),
        synthetic=tiny_synthetic_config,
        identity_field=small_field_config,
        deformation=small_defo_config,
        identity_training=IdentityTrainConfig(
            epochs=2, batch_size=2, surface_samples=40, off_surface_samples=40, samples_per_subject=400, checkpoint_every=0,
        ),
        expression_training=ExpressionTrainConfig(
            epochs=2, batch_size=2, samples_per_step=40, samples_per_pair=100, checkpoint_every=0,
        ),
        fitting=FitConfig(iterations=2, lr_events=[], reg_events=[], points_per_step=50),
        tracking=TrackConfig(fit=FitConfig(iterations=2, lr_events=[], reg_events=[], points_per_step=50), iterations=2),
        registration=RegistrationConfig(
            iterations=6, warmup_iterations=2, final_iterations=2, arap_rounds=1, arap_inner_iterations=3, subdivision_factor=4,
        ),
        metrics=MetricsConfig(n_samples=500),
    )
    return run.apply_overrides(seed=3)


@pytest.fixture
def saved_models(tmp_path, small_field_config, small_defo_config):
    """Directory with stage checkpoints of a one-subject model; the deformation starts at zero."""
    model_dir = tmp_path / "models"
    gen = np.random.default_rng(5)
    identity = IdentityModel.create(small_field_config, ["subject_000"], gen)
    identity.trained = True
    identity.save(model_dir / "identity.nphm")
    expression = ExpressionModel.create(small_defo_config, small_field_config, [[0, 0]], gen)
    expression.trained = True
    expression.save(model_dir / "expression.nphm")
    return model_dir


@pytest.fixture
def flat_reconstruction(mocker, sphere_mesh):
    """Replace mesh extraction in the pipeline with the sphere; barely trained fields need not have a surface."""
    from headmodel import pipeline

    return mocker.patch.object(pipeline, "reconstruct_mesh", return_value=sphere_mesh)
