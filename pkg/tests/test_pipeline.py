import csv

import pytest

from headmodel import pipeline
from headmodel.errors import StageOrderError


def _epochs(path):
    with path.open(newline="") as handle:
        return [int(row["epoch"]) for row in csv.DictReader(handle)]


def test_gen_writes_complete_tree(tiny_run):
    """Test gen moves the finished tree into place and leaves no partial output."""
    manifest = pipeline.cmd_gen(tiny_run)

    root = tiny_run.data_path
    assert (root / "manifest.json").is_file()
    assert not root.with_name(root.name + ".partial").exists()
    assert len(manifest["subjects"]) == 3


def test_gen_failure_removes_partial_output(tiny_run, mocker):
    """Test a failed write leaves neither a partial tree nor a data set."""
    mocker.patch.object(pipeline, "write_dataset", side_effect=OSError("disk full"))

    with pytest.raises(OSError):
        pipeline.cmd_gen(tiny_run)

    root = tiny_run.data_path
    assert not root.exists()
    assert not root.with_name(root.name + ".partial").exists()


def test_training_stages_in_order(tiny_run):
    """Test stage ordering, loss curves and resuming the identity stage."""
    pipeline.cmd_gen(tiny_run)
    out = tiny_run.out_path

    with pytest.raises(StageOrderError):
        pipeline.cmd_train(tiny_run, "expression")

    identity = pipeline.cmd_train(tiny_run, "identity")
    assert identity.epoch == 2 and identity.trained
    assert _epochs(out / pipeline.IDENTITY_LOSSES) == [0, 1]

    expression = pipeline.cmd_train(tiny_run, "expression")
    assert expression.epoch == 2
    assert _epochs(out / pipeline.EXPRESSION_LOSSES) == [0, 1]

    # Verify resuming continues the epoch count and the loss curve
    tiny_run.identity_training.epochs = 3
    resumed = pipeline.cmd_train(tiny_run, "identity", resume=True)
    assert resumed.epoch == 3
    assert _epochs(out / pipeline.IDENTITY_LOSSES) == [0, 1, 2]

    loaded, loaded_expression = pipeline.load_models(out)
    assert loaded.epoch == 3
    assert loaded_expression.epoch == 2


def test_unknown_stage(tiny_run):
    """Test an unknown stage name is rejected."""
    pipeline.cmd_gen(tiny_run)

    with pytest.raises(ValueError):
        pipeline.cmd_train(tiny_run, "pose")
