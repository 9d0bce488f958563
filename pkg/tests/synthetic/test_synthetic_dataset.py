import json

import numpy as np
import pytest

from headmodel.errors import DegenerateInputError, FileFormatError
from headmodel.synthetic.dataset import SPLIT_TEST, SPLIT_TRAIN, load_dataset, plan_subjects, write_dataset
from headmodel.synthetic.shapes import generate_subject
from headmodel.synthetic.template import build_morphable_template, sample_template


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_plan_subjects(tiny_synthetic_config):
    """Test subject planning is deterministic and splits train from test."""
    records = plan_subjects(3, tiny_synthetic_config)

    assert [r.subject_id for r in records] == ["s000", "s001", "s002"]
    assert [r.split for r in records] == [SPLIT_TRAIN, SPLIT_TRAIN, SPLIT_TEST]
    assert all(len(r.expression_seeds) == 2 for r in records)
    assert [r.seed for r in plan_subjects(3, tiny_synthetic_config)] == [r.seed for r in records]
    assert [r.seed for r in plan_subjects(4, tiny_synthetic_config)] != [r.seed for r in records]


def test_write_is_independent_of_threads(tmp_path, tiny_synthetic_config):
    """Test the written tree is byte-identical for 1 and 2 worker threads."""
    write_dataset(tmp_path / "a", 9, tiny_synthetic_config, threads=1, n_id=1, n_ex=2)
    write_dataset(tmp_path / "b", 9, tiny_synthetic_config, threads=2, n_id=1, n_ex=2)

    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert sorted(a) == sorted(b)
    assert "template.nphm" in a
    for name in a:
        assert a[name] == b[name], name


def test_load_dataset(tmp_path, tiny_synthetic_config):
    """Test loading the tree back with ground truth and recomputed labels."""
    manifest = write_dataset(tmp_path, 9, tiny_synthetic_config, n_id=1, n_ex=2)

    dataset = load_dataset(tmp_path)

    assert dataset.seed == 9
    assert len(dataset.train) == 2 and len(dataset.test) == 1
    record = dataset.train[0]
    assert set(record.anchors) == {0, 1, 5, 9, 39}
    assert record.anchors[9].shape == (9, 3)
    assert record.landmarks.shape == (68, 3)
    assert len(record.tracking_landmarks) == 8
    assert len(record.expressions) == 2
    assert record.neutral.labels is not None
    assert record.expressions[0].num_vertices == record.neutral.num_vertices
    assert dataset.template.d_id == 1
    assert dataset.config == tiny_synthetic_config
    assert manifest["subjects"][0]["id"] == "s000"

    # Verify the analytic subject regenerates from the stored seed
    subject = record.subject(dataset.config)
    np.testing.assert_allclose(subject.anchors(9), record.anchors[9])

    test_only = load_dataset(tmp_path, with_meshes=False, split=SPLIT_TEST)
    assert [r.subject_id for r in test_only.subjects] == ["s002"]
    assert test_only.subjects[0].neutral is None


def test_unknown_version(tmp_path, tiny_synthetic_config):
    """Test a manifest of another version is rejected."""
    write_dataset(tmp_path, 1, tiny_synthetic_config, n_id=1, n_ex=2)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["version"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))

    with pytest.raises(FileFormatError):
        load_dataset(tmp_path)


def test_morphable_template(tiny_synthetic_config, rng):
    """Test template modes are capped by the subject count."""
    subjects = [generate_subject(s, config=tiny_synthetic_config) for s in (1, 2, 3)]

    template = build_morphable_template(subjects, n_id=10, n_ex=3, expressions_per_subject=2, config=tiny_synthetic_config)

    assert template.d_id == 2
    assert template.d_ex == 3
    np.testing.assert_allclose(template.mean.vertices, np.mean([s.registered.vertices for s in subjects], axis=0))
    mesh, alpha, beta, angle = sample_template(template, rng, max_angle=0.1)
    assert mesh.num_vertices == template.mean.num_vertices
    assert alpha.shape == (2,) and beta.shape == (3,) and 0.0 <= angle <= 0.1

    with pytest.raises(DegenerateInputError):
        build_morphable_template([generate_subject(1, with_meshes=False)])
