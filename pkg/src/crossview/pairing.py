"""Voxel-overlap scoring of cross-modality views and tri-view tuple selection."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .errors import ConfigurationError, StructuralError
from .frames import GROUND, SATELLITE, UAV

DEFAULT_CELL_M = 2.0


@dataclass(frozen=True)
class VoxelSet:
    """Occupied cells of a uniform grid: floor(coord / cell) integer triples."""

    cell: float
    occupied: frozenset

    def __len__(self):
        return len(self.occupied)


def voxelize(points, cell=DEFAULT_CELL_M) -> VoxelSet:
    """Quantize a point cloud onto a grid; duplicate cells collapse."""
    if cell <= 0:
        raise ConfigurationError("cell size must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    idx = np.floor(pts / cell).astype(np.int64)
    return VoxelSet(cell=float(cell), occupied=frozenset(map(tuple, idx)))


def overlap_score(a: VoxelSet, b: VoxelSet) -> int:
    """Number of grid cells occupied by both sets."""
    if a.cell != b.cell:
        raise ConfigurationError(f"cell sizes differ: {a.cell} vs {b.cell}")
    return len(a.occupied & b.occupied)


def iou_score(a: VoxelSet, b: VoxelSet) -> float:
    """Intersection-over-union variant of the pair score."""
    if a.cell != b.cell:
        raise ConfigurationError(f"cell sizes differ: {a.cell} vs {b.cell}")
    union = len(a.occupied | b.occupied)
    return len(a.occupied & b.occupied) / union if union else 0.0


def select_tuples(clouds_by_modality, k=1, cell=DEFAULT_CELL_M, use_iou=False):
    """Pick the k best six-image tuples (two views per modality) by summed
    pairwise voxel overlap; any tuple with a zero pairwise overlap is dropped.

    `clouds_by_modality` maps each of satellite/uav/ground to a list of point
    clouds in the shared world frame. Returns (score, indices) pairs where
    indices maps modality to the chosen view-index pair; ties break by
    lexicographic view-index order. No valid tuple yields an empty list.
    """
    for m in (SATELLITE, UAV, GROUND):
        if len(clouds_by_modality.get(m, ())) < 2:
            raise StructuralError(f"need >= 2 {m} views")

    voxels = {
        m: [voxelize(c, cell) for c in clouds_by_modality[m]]
        for m in (SATELLITE, UAV, GROUND)
    }
    pair_choices = {
        m: list(combinations(range(len(voxels[m])), 2)) for m in (SATELLITE, UAV, GROUND)
    }
    score_fn = iou_score if use_iou else overlap_score

    results = []
    for sat_pair, uav_pair, grd_pair in product(
        pair_choices[SATELLITE], pair_choices[UAV], pair_choices[GROUND]
    ):
        members = (
            [voxels[SATELLITE][i] for i in sat_pair]
            + [voxels[UAV][i] for i in uav_pair]
            + [voxels[GROUND][i] for i in grd_pair]
        )
        total = 0.0
        valid = True
        for a, b in combinations(members, 2):
            ov = score_fn(a, b)
            if ov == 0:
                valid = False
                break
            total += ov
        if valid:
            key = (sat_pair, uav_pair, grd_pair)
            results.append((total, key))

    results.sort(key=lambda sk: (-sk[0], sk[1]))
    return [
        (score, {SATELLITE: key[0], UAV: key[1], GROUND: key[2]})
        for score, key in results[:k]
    ]
