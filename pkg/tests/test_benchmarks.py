import csv

import numpy as np
import pytest

from headmodel import pipeline
from headmodel.fields.layout import scaled_local_dim
from headmodel.geometry.io import load_json


@pytest.fixture
def generated(tiny_run):
    pipeline.cmd_gen(tiny_run)
    return tiny_run


def test_robustness_rows_per_sweep(generated, saved_models, flat_reconstruction, tmp_path):
    """Test one row per point count and per noise level, written as CSV."""
    out = tmp_path / "robustness"

    result = pipeline.run_robustness(generated, saved_models, point_counts=(60,), noise_mm=(0.0, 0.3), out=out)

    rows = result["rows"]
    assert [(r["sweep"], r["points"], r["noise_mm"]) for r in rows] == [
        ("points", 60, 0.0), ("noise", 300, 0.0), ("noise", 300, 0.3),
    ]
    for row in rows:
        assert np.isfinite(row["l1_chamfer"])
        assert 0.0 <= row["f_score"] <= 1.0
    with open(out / "robustness.csv", newline="") as f:
        assert len(list(csv.DictReader(f))) == 3


def test_anchor_ablation_variants(generated, flat_reconstruction, tmp_path):
    """Test each layout variant reports its latent width and per-seed chamfer."""
    out = tmp_path / "ablation"

    result = pipeline.run_anchor_ablation(generated, anchor_counts=(1,), seeds=(0,), symmetric=(True, False), out=out)

    variants = result["variants"]
    assert set(variants) == {"K1", "K1_nosym"}
    assert variants["K1"]["share_symmetric"] is True
    assert variants["K1_nosym"]["share_symmetric"] is False
    for variant in variants.values():
        assert variant["num_anchors"] == 1
        assert variant["d_loc"] == scaled_local_dim(1, generated.identity_field.d_loc, base_anchors=generated.identity_field.num_anchors)
        assert len(variant["chamfer"]) == 1
        assert variant["median_chamfer"] == pytest.approx(variant["chamfer"][0])
    assert set(load_json(out / "anchor_ablation.json")["variants"]) == {"K1", "K1_nosym"}
    # Verify every variant trained into its own directory
    assert (out / "K1_seed0" / pipeline.IDENTITY_CHECKPOINT).is_file()
    assert (out / "K1_nosym_seed0" / pipeline.IDENTITY_CHECKPOINT).is_file()


def test_tracking_benchmark_summary(generated, saved_models, flat_reconstruction, tmp_path):
    """Test per-seed scores and their medians."""
    out = tmp_path / "tracking"

    result = pipeline.run_tracking_benchmark(generated, saved_models, num_frames=3, seeds=(0,), out=out)

    assert len(result["runs"]) == 1
    run = result["runs"][0]
    assert run["seed"] == 0
    assert run["min_f_score"] <= run["mean_f_score"]
    assert run["tv_tracked"] >= 0.0 and run["tv_independent"] >= 0.0
    assert result["median_f_score"] == pytest.approx(run["mean_f_score"])
    assert result["median_tv_tracked"] == pytest.approx(run["tv_tracked"])
    assert load_json(out / "tracking_benchmark.json")["median_tv_independent"] == pytest.approx(run["tv_independent"])


def test_end_to_end_generates_when_missing(tiny_run, flat_reconstruction):
    """Test generation, both training stages and evaluation in one call."""
    assert not (tiny_run.data_path / "manifest.json").exists()

    summary = pipeline.run_end_to_end(tiny_run, resolution=32)

    assert (tiny_run.data_path / "manifest.json").is_file()
    assert set(summary["identity"]) == {"l1_chamfer", "normal_consistency", "f_score"}
    assert summary["expression"] is not None
    # Verify one neutral and two expression rows for the single test subject
    assert [row["kind"] for row in summary["rows"]] == ["neutral", "expression_0", "expression_1"]
    assert (tiny_run.out_path / pipeline.IDENTITY_CHECKPOINT).is_file()
    assert (tiny_run.out_path / pipeline.EXPRESSION_CHECKPOINT).is_file()
    assert len(load_json(tiny_run.out_path / "end_to_end.json")["rows"]) == 3
