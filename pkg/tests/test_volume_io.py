"""volume descriptor IO, label extraction and their invariants."""

import json

import numpy as np
import pytest

import spinekit as sk
from spinekit.errors import DescriptorError, EmptySelectionError
from spinekit.volume_io import HU_DTYPE, LABEL_DTYPE


def _blank_volume(dims=(2, 2, 2), spacing=(1.0, 1.0, 1.0)):
    return sk.LabeledVolume(dims=dims, spacing=spacing,
                            hu=np.zeros(dims, dtype=np.int16),
                            labels=np.zeros(dims, dtype=np.uint16))


def test_degenerate_background_volume_round_trip(tmp_path):
    vol = _blank_volume()
    desc = sk.write_volume(vol, tmp_path)
    loaded = sk.load_volume(desc)
    assert loaded.dims == (2, 2, 2)
    assert loaded.hu.size == 8
    assert loaded.centroids == {}
    assert loaded.present_labels() == []


def test_size_mismatch_error(tmp_path):
    np.zeros(999, dtype=HU_DTYPE).tofile(tmp_path / "hu.raw")
    np.zeros(999, dtype=LABEL_DTYPE).tofile(tmp_path / "lab.raw")
    desc = {"dims": [10, 10, 10], "spacing_mm": [1, 1, 1],
            "hu_file": "hu.raw", "label_file": "lab.raw"}
    path = tmp_path / "volume.json"
    path.write_text(json.dumps(desc))
    with pytest.raises(DescriptorError, match="999"):
        sk.load_volume(path)


def test_descriptor_parse_failure(tmp_path):
    path = tmp_path / "volume.json"
    path.write_text("{not json")
    with pytest.raises(DescriptorError):
        sk.load_volume(path)


def test_sphere_round_trip_byte_identical(tmp_path, sphere_volume):
    desc1 = sk.write_volume(sphere_volume, tmp_path / "a")
    loaded = sk.load_volume(desc1)
    assert np.array_equal(loaded.hu, sphere_volume.hu)
    assert np.array_equal(loaded.labels, sphere_volume.labels)
    assert loaded.centroids.keys() == sphere_volume.centroids.keys()

    sk.write_volume(loaded, tmp_path / "b")
    for name in ("volume_hu.raw", "volume_labels.raw"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_extract_single_voxel_centroid():
    vol = _blank_volume(dims=(1, 1, 1), spacing=(2.0, 2.0, 2.0))
    vol.labels[0, 0, 0] = 7
    cloud = sk.extract_label_points(vol, 7)
    assert cloud.points.shape == (1, 3)
    np.testing.assert_allclose(cloud.points[0], [1.0, 1.0, 1.0])


def test_extract_sphere_count_matches_brute_force(sphere_volume, sphere_points):
    # independent membership count: centroid within 10 mm of the volume center
    spacing = np.asarray(sphere_volume.spacing)
    axes = [(np.arange(n) + 0.5) * s for n, s in zip(sphere_volume.dims, spacing)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    center = sphere_volume.centroids[1].mm
    inside = ((gx - center[0]) ** 2 + (gy - center[1]) ** 2
              + (gz - center[2]) ** 2) <= 10.0 ** 2
    n = int(inside.sum())
    assert len(sphere_points) == n
    analytic = 4.0 / 3.0 * np.pi * 10.0 ** 3
    assert abs(n * 1.0 - analytic) / analytic <= 0.05


def test_extract_missing_label_error(sphere_volume):
    with pytest.raises(EmptySelectionError):
        sk.extract_label_points(sphere_volume, 99)
    with pytest.raises(EmptySelectionError):
        sk.extract_label_points(sphere_volume, 0)


def test_extract_order_is_x_fastest():
    vol = _blank_volume(dims=(3, 3, 3))
    vol.labels[:] = 4
    cloud = sk.extract_label_points(vol, 4)
    # x coordinate must cycle fastest
    np.testing.assert_allclose(cloud.points[:3, 0], [0.5, 1.5, 2.5])
    np.testing.assert_allclose(cloud.points[:3, 1], [0.5, 0.5, 0.5])


def test_partition_property(disc_pair):
    volume, _ = disc_pair
    total = int(np.prod(volume.dims))
    background = int((volume.labels == 0).sum())
    labeled = sum(len(sk.extract_label_points(volume, lab))
                  for lab in volume.present_labels())
    assert labeled + background == total


def test_monotone_coordinates(sphere_volume, sphere_points):
    extent = sphere_volume.extent_mm
    assert np.all(sphere_points.points > 0.0)
    assert np.all(sphere_points.points < extent)


def test_orphan_centroid_recorded(tmp_path):
    vol = _blank_volume(dims=(4, 4, 4))
    vol.labels[1, 1, 1] = 2
    desc_dir = tmp_path / "v"
    desc = sk.write_volume(vol, desc_dir)
    centroids = [{"label": 2, "voxel": [1.5, 1.5, 1.5]},
                 {"label": 9, "voxel": [2.0, 2.0, 2.0]}]
    (desc_dir / "volume_centroids.json").write_text(json.dumps(centroids))
    loaded = sk.load_volume(desc)
    assert loaded.orphan_centroids == [9]
    assert loaded.missing_centroids() == []


def test_missing_centroid_reported(sphere_volume):
    vol = sk.LabeledVolume(dims=sphere_volume.dims, spacing=sphere_volume.spacing,
                           hu=sphere_volume.hu, labels=sphere_volume.labels)
    assert vol.missing_centroids() == [1]


def test_centroid_annotation_validation(tmp_path):
    vol = _blank_volume(dims=(4, 4, 4))
    vol.labels[1, 1, 1] = 2
    desc_dir = tmp_path / "v"
    desc = sk.write_volume(vol, desc_dir)
    for bad in ([{"label": 2, "voxel": [9.0, 1.0, 1.0]}],   # outside the volume
                [{"label": 40, "voxel": [1.0, 1.0, 1.0]}],  # outside 1..28
                [{"voxel": [1.0, 1.0, 1.0]}]):              # malformed entry
        (desc_dir / "volume_centroids.json").write_text(json.dumps(bad))
        with pytest.raises(DescriptorError):
            sk.load_volume(desc)
