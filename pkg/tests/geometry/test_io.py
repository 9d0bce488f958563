import numpy as np
import pytest

from headmodel.errors import FileFormatError
from headmodel.geometry.io import (
    decode_point_cloud,
    encode_point_cloud,
    load_json,
    load_mesh,
    load_point_cloud,
    save_csv,
    save_json,
    save_mesh,
    save_point_cloud,
)
from headmodel.geometry.mesh import OrientedPointCloud
from headmodel.geometry.sampling import sample_surface


def test_point_cloud_round_trip(tmp_path, sphere_mesh, rng):
    """Test points, normals and labels survive the PLY codec."""
    cloud = sample_surface(sphere_mesh, 100, rng=rng)

    loaded = load_point_cloud(save_point_cloud(tmp_path / "cloud.ply", cloud))

    np.testing.assert_allclose(loaded.points, cloud.points, atol=1e-6)
    np.testing.assert_allclose(loaded.normals, cloud.normals, atol=1e-6)
    np.testing.assert_array_equal(loaded.labels, cloud.labels)


def test_point_cloud_without_labels():
    """Test the label property is optional."""
    cloud = OrientedPointCloud(np.zeros((3, 3)), np.tile([0.0, 0.0, 1.0], (3, 1)))

    assert decode_point_cloud(encode_point_cloud(cloud)).labels is None


def test_malformed_point_clouds():
    """Test bad magic and truncated bodies raise FileFormatError."""
    data = encode_point_cloud(OrientedPointCloud(np.zeros((3, 3)), np.tile([0.0, 0.0, 1.0], (3, 1))))

    with pytest.raises(FileFormatError):
        decode_point_cloud(b"obj\n" + data[4:])
    with pytest.raises(FileFormatError):
        decode_point_cloud(data[:-1])


def test_mesh_round_trip_keeps_vertex_order(tmp_path, sphere_mesh):
    """Test PLY meshes reload without merging or reordering vertices."""
    loaded = load_mesh(save_mesh(tmp_path / "sphere.ply", sphere_mesh))

    np.testing.assert_allclose(loaded.vertices, sphere_mesh.vertices, atol=1e-6)
    np.testing.assert_array_equal(loaded.faces, sphere_mesh.faces)


def test_unsupported_and_missing_files(tmp_path):
    """Test suffix and existence checks."""
    with pytest.raises(FileFormatError):
        load_mesh(tmp_path / "mesh.stl")
    with pytest.raises(FileNotFoundError):
        load_mesh(tmp_path / "missing.ply")
    with pytest.raises(FileNotFoundError):
        load_point_cloud(tmp_path / "missing.ply")


def test_json_and_csv(tmp_path):
    """Test JSON documents and CSV loss curves."""
    path = save_json(tmp_path / "doc.json", {"b": 1, "a": [1, 2]})
    assert load_json(path) == {"a": [1, 2], "b": 1}
    assert path.read_text().index('"a"') < path.read_text().index('"b"')

    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(FileFormatError):
        load_json(tmp_path / "bad.json")

    csv_path = save_csv(tmp_path / "losses.csv", [{"epoch": 0, "loss": 1.5}, {"epoch": 1, "loss": 0.5}])
    assert csv_path.read_text().splitlines() == ["epoch,loss", "0,1.5", "1,0.5"]
