"""Shared phantom fixtures and brute-force oracles."""

import numpy as np
import pytest

import spinekit as sk


# ---------------------------------------------------------------- oracles

def brute_force_nearest(data: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """All-pairs nearest neighbor with lowest-index tie-breaking."""
    data = np.asarray(data, dtype=float)
    queries = np.asarray(queries, dtype=float)
    out = np.empty(len(queries), dtype=np.int64)
    chunk = max(1, 2_000_000 // max(len(data), 1))
    for start in range(0, len(queries), chunk):
        q = queries[start:start + chunk]
        d2 = ((q[:, None, :] - data[None, :, :]) ** 2).sum(axis=-1)
        out[start:start + chunk] = np.argmin(d2, axis=1)  # first min = lowest index
    return out


def boundary_voxel_centroids(volume: sk.LabeledVolume, label: int) -> np.ndarray:
    """Centroids of labeled voxels with an unlabeled 6-neighbor (mesh-vertex
    oracle that never touches the reconstruction code)."""
    mask = volume.labels == label
    exposed = np.zeros_like(mask)
    padded = np.pad(mask, 1, constant_values=False)
    for axis in range(3):
        for shift in (1, -1):
            rolled = np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
            exposed |= ~rolled
    ijk = np.argwhere(mask & exposed)
    return volume.voxel_centroids_mm(ijk)


def vertex_region_truth(mesh, volume: sk.LabeledVolume, truth) -> np.ndarray:
    """Ground-truth Region value per mesh vertex, from the phantom's part ids."""
    ijk = np.floor(np.asarray(mesh.vertices) / np.asarray(volume.spacing)).astype(int)
    part = truth.region_id[ijk[:, 0], ijk[:, 1], ijk[:, 2]]
    lookup = {1: int(sk.Region.BODY), 2: int(sk.Region.ARCH),
              3: int(sk.Region.PROCESS)}
    return np.array([lookup[p] for p in part], dtype=np.int8)


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="session")
def sphere_volume() -> sk.LabeledVolume:
    return sk.make_sphere_phantom(10.0, (1.0, 1.0, 1.0), 100, 0, 1)


@pytest.fixture(scope="session")
def sphere_points(sphere_volume) -> sk.PointCloud:
    return sk.extract_label_points(sphere_volume, 1)


@pytest.fixture(scope="session")
def sphere_mesh(sphere_points) -> sk.TriangleMesh:
    return sk.build_alpha_shape(sphere_points, alpha=sphere_points.voxel_diagonal,
                                source_label=1)


@pytest.fixture(scope="session")
def sphere_mesh_auto(sphere_points) -> sk.TriangleMesh:
    return sk.build_alpha_shape(sphere_points, alpha=sk.AUTO, source_label=1)


@pytest.fixture(scope="session")
def compound():
    return sk.make_compound_vertebra(15.0, 2.5, 4.0, (1.0, 1.0, 1.0), 1)


@pytest.fixture(scope="session")
def compound_mesh(compound) -> sk.TriangleMesh:
    volume, _ = compound
    points = sk.extract_label_points(volume, 1)
    return sk.build_alpha_shape(points, alpha=points.voxel_diagonal, source_label=1)


@pytest.fixture(scope="session")
def compound_segmentation(compound, compound_mesh):
    volume, _ = compound
    samples = sk.distance_distribution(compound_mesh, volume.centroids[1])
    curve = sk.estimate_density(samples)
    thresholds = sk.find_thresholds(curve)
    labeling = sk.classify_vertices(samples, thresholds)
    return samples, curve, thresholds, labeling


@pytest.fixture(scope="session")
def disc_pair():
    return sk.make_disc_pair(15.0, 10.0, 4.0, (1.0, 1.0, 1.0), (1, 2),
                             hu_in=100, hu_out=-50)


_disc_interspace_cache: dict[float, dict] = {}


def disc_interspace(gap: float) -> dict:
    """Full facing/filter/build chain for a disc pair with the given gap."""
    if gap in _disc_interspace_cache:
        return _disc_interspace_cache[gap]
    volume, truth = sk.make_disc_pair(15.0, 10.0, gap, (1.0, 1.0, 1.0), (1, 2),
                                      hu_in=100, hu_out=-50)
    meshes, samples, thresholds = {}, {}, {}
    for label in (1, 2):
        pts = sk.extract_label_points(volume, label)
        meshes[label] = sk.build_alpha_shape(pts, alpha=pts.voxel_diagonal,
                                             source_label=label)
        samples[label] = sk.distance_distribution(meshes[label],
                                                  volume.centroids[label])
        curve = sk.estimate_density(samples[label],
                                    min_bandwidth=volume.voxel_diagonal / 2.0)
        thresholds[label] = sk.degraded_thresholds(curve)
    fa, fb = sk.facing_vertices(meshes[1], meshes[2])
    fa = sk.filter_body(fa, samples[1], thresholds[1])
    fb = sk.filter_body(fb, samples[2], thresholds[2])
    imesh = sk.build_interspace(meshes[1], meshes[2], fa, fb,
                                centroid_a=volume.centroids[1],
                                centroid_b=volume.centroids[2], labels=(1, 2))
    result = {"volume": volume, "truth": truth, "meshes": meshes,
              "samples": samples, "thresholds": thresholds,
              "facing": (fa, fb), "interspace": imesh}
    _disc_interspace_cache[gap] = result
    return result


@pytest.fixture(scope="session")
def disc_interspace_4():
    return disc_interspace(4.0)
