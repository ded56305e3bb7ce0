"""Grey-level (HU) mapping from the volume onto mesh vertices.

Every vertex receives the HU value of its nearest voxel centroid among a
criterion-dependent candidate set: voxels of the vertebra's own label
(internal), all voxels (euclidean), or all other voxels (external).  The
volume's own segmentation acts as the inside/outside oracle.  Searches are
exact; ties go to the lowest linear voxel index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import MappingError
from .region_segmentation import Region, RegionLabeling, Thresholds
from .spatial import nearest_canonical
from .volume_io import LabeledVolume


class MappingCriterion(Enum):
    INTERNAL = "internal"
    EUCLIDEAN = "euclidean"
    EXTERNAL = "external"

    @staticmethod
    def parse(name) -> "MappingCriterion":
        if isinstance(name, MappingCriterion):
            return name
        try:
            return MappingCriterion(str(name).lower())
        except ValueError as exc:
            raise MappingError(f"unknown mapping criterion {name!r}") from exc


@dataclass
class VertexTexture:
    """Per-vertex HU value and the voxel it was sampled from."""

    hu: np.ndarray                # (V,) int
    criterion: MappingCriterion
    source_voxel: np.ndarray      # (V, 3) int voxel indices


def _candidate_mask(volume: LabeledVolume, label: int,
                    criterion: MappingCriterion) -> np.ndarray:
    if criterion is MappingCriterion.INTERNAL:
        return volume.labels == label
    if criterion is MappingCriterion.EXTERNAL:
        return volume.labels != label
    return np.ones(volume.dims, dtype=bool)


def _crop_ranges(volume: LabeledVolume, lo_mm, hi_mm):
    spacing = np.asarray(volume.spacing)
    lo = np.maximum(np.floor(lo_mm / spacing - 0.5).astype(int), 0)
    hi = np.minimum(np.ceil(hi_mm / spacing - 0.5).astype(int) + 1,
                    np.asarray(volume.dims))
    return lo, hi


def map_grey(mesh, volume: LabeledVolume, label: int,
             criterion) -> VertexTexture:
    """Map HU values onto mesh vertices under one criterion.

    The search runs on a crop around the mesh for speed; the crop is grown
    until every found neighbor is provably the global one, so results equal
    a full-volume scan exactly.
    """
    criterion = MappingCriterion.parse(criterion)
    verts = np.asarray(mesh.vertices, dtype=float)
    spacing = np.asarray(volume.spacing)
    dims = np.asarray(volume.dims)
    nx, ny = volume.dims[0], volume.dims[1]

    mask = _candidate_mask(volume, label, criterion)
    if not mask.any():
        raise MappingError(
            f"empty candidate voxel set for label {label} under {criterion.value}")

    margin = 2.0 * volume.voxel_diagonal
    vol_lo_mm = np.zeros(3)
    vol_hi_mm = volume.extent_mm
    while True:
        lo, hi = _crop_ranges(volume, verts.min(axis=0) - margin,
                              verts.max(axis=0) + margin)
        sub = mask[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
        ijk = np.argwhere(sub) + lo
        if len(ijk) == 0:
            if np.all(lo == 0) and np.all(hi == dims):
                raise MappingError(
                    f"empty candidate voxel set for label {label} under "
                    f"{criterion.value}")
            margin *= 2.0
            continue
        # sort candidates by linear index so NN ties break on it
        lin = ijk[:, 0] + nx * (ijk[:, 1] + ny * ijk[:, 2])
        order = np.argsort(lin, kind="stable")
        ijk = ijk[order]
        coords = volume.voxel_centroids_mm(ijk)
        idx, dist = nearest_canonical(coords, verts)
        # a result is provably global when it beats the distance to every
        # crop wall that is not already a volume wall
        crop_lo_mm = lo * spacing
        crop_hi_mm = hi * spacing
        wall = np.full(len(verts), np.inf)
        for axis in range(3):
            if crop_lo_mm[axis] > vol_lo_mm[axis] + 1e-12:
                wall = np.minimum(wall, verts[:, axis] - crop_lo_mm[axis])
            if crop_hi_mm[axis] < vol_hi_mm[axis] - 1e-12:
                wall = np.minimum(wall, crop_hi_mm[axis] - verts[:, axis])
        if np.all(dist <= wall):
            break
        margin *= 2.0

    src = ijk[idx]
    hu = volume.hu[src[:, 0], src[:, 1], src[:, 2]].astype(np.int64)
    return VertexTexture(hu=hu, criterion=criterion, source_voxel=src)


@dataclass
class RegionHuSummary:
    """Mean HU per functional region, paired with the distance thresholds."""

    mean_body: float | None
    mean_arch: float | None
    mean_process: float | None
    thresholds: Thresholds
    criterion: MappingCriterion

    def by_region(self) -> dict[str, float | None]:
        return {"body": self.mean_body, "arch": self.mean_arch,
                "process": self.mean_process}


def region_mean_hu(texture: VertexTexture, labeling: RegionLabeling,
                   thresholds: Thresholds) -> RegionHuSummary:
    """Arithmetic mean of vertex HU per region; empty regions report None."""
    if len(texture.hu) != len(labeling.regions):
        raise MappingError("texture and labeling refer to different meshes")

    def mean_of(region: Region) -> float | None:
        sel = texture.hu[labeling.mask(region)]
        return float(sel.mean()) if sel.size else None

    return RegionHuSummary(mean_body=mean_of(Region.BODY),
                           mean_arch=mean_of(Region.ARCH),
                           mean_process=mean_of(Region.PROCESS),
                           thresholds=thresholds,
                           criterion=texture.criterion)
