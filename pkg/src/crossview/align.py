"""Classical similarity registration of per-view point maps into the satellite
frame, plus closed-form estimation of the tile scale rho."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInputError, StructuralError
from .losses import PointMap

MAX_REFINE_ROUNDS = 50
REFINE_TOL = 1e-8
NN_CUTOFF_CELLS = 3.0


@dataclass(frozen=True)
class Correspondence:
    """A shared scene point observed in two views.

    Pixels may be fractional (exact re-projections); point_a/point_b are the
    point's coordinates in each view's local frame.
    """

    view_a: int
    pixel_a: Tuple[float, float]
    view_b: int
    pixel_b: Tuple[float, float]
    point_a: np.ndarray
    point_b: np.ndarray


@dataclass
class CorrespondenceSet:
    pairs: List[Correspondence]
    source: str = "ground-truth"  # or "nearest-neighbor"


@dataclass
class Similarity:
    """x_dst = s * R @ x_src + t."""

    s: float
    R: np.ndarray
    t: np.ndarray

    @classmethod
    def identity(cls):
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points):
        pts = np.asarray(points, dtype=float)
        return self.s * pts @ self.R.T + self.t


def umeyama(src, dst, with_scale=True):
    """Closed-form similarity (s, R, t) minimizing sum ||s R src + t - dst||^2.

    SVD of the cross-covariance with reflection correction; s = 1 when
    with_scale is false. Requires >= 3 non-collinear correspondences.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if src.shape[0] < 3 or src.shape != dst.shape:
        raise DegenerateInputError("need >= 3 aligned correspondences")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / src.shape[0]
    U, D, Vt = np.linalg.svd(cov)
    if D[1] <= 1e-12 * max(D[0], 1e-300):
        raise DegenerateInputError("correspondences are (near-)collinear")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    if with_scale:
        var_s = (xs * xs).sum() / src.shape[0]
        s = float(np.trace(np.diag(D) @ S) / var_s)
    else:
        s = 1.0
    t = mu_d - s * R @ mu_s
    return s, R, t


def _edge_points(corr: CorrespondenceSet, a: int, b: int):
    """Local-frame point arrays (in a's frame, in b's frame) for a view pair."""
    pa, pb = [], []
    for c in corr.pairs:
        if c.view_a == a and c.view_b == b:
            pa.append(c.point_a)
            pb.append(c.point_b)
        elif c.view_a == b and c.view_b == a:
            pa.append(c.point_b)
            pb.append(c.point_a)
    return np.array(pa).reshape(-1, 3), np.array(pb).reshape(-1, 3)


def register_views(pointmaps, corr: CorrespondenceSet, reference=0, with_scale=True):
    """Similarity transforms mapping each view's local frame into the reference
    view's frame.

    Spanning-tree initialization with per-edge Umeyama fits, then alternating
    re-fits of each view against the currently registered correspondences.
    The reference view is pinned to the identity.
    """
    n = len(pointmaps)
    adj = {i: set() for i in range(n)}
    for c in corr.pairs:
        adj[c.view_a].add(c.view_b)
        adj[c.view_b].add(c.view_a)

    # BFS spanning tree from the reference.
    order = [reference]
    parent = {reference: None}
    queue = [reference]
    while queue:
        v = queue.pop(0)
        for w in sorted(adj[v]):
            if w not in parent:
                parent[w] = v
                order.append(w)
                queue.append(w)
    unreachable = sorted(set(range(n)) - set(parent))
    if unreachable:
        raise StructuralError(f"views {unreachable} not connected to reference {reference}")

    transforms = [Similarity.identity() for _ in range(n)]
    for v in order[1:]:
        p = parent[v]
        src, dst_local = _edge_points(corr, v, p)
        dst = transforms[p].apply(dst_local)
        s, R, t = umeyama(src, dst, with_scale)
        transforms[v] = Similarity(s, R, t)

    # Alternating refinement against the current fused positions.
    targets = {v: [] for v in range(n)}
    sources = {v: [] for v in range(n)}
    owners = {v: [] for v in range(n)}
    for c in corr.pairs:
        sources[c.view_a].append(c.point_a)
        owners[c.view_a].append((c.view_b, c.point_b))
        sources[c.view_b].append(c.point_b)
        owners[c.view_b].append((c.view_a, c.point_a))
    src_arr = {v: np.array(sources[v]).reshape(-1, 3) for v in range(n)}

    for _ in range(MAX_REFINE_ROUNDS):
        max_change = 0.0
        for v in range(n):
            if v == reference or src_arr[v].shape[0] < 3:
                continue
            dst = np.array(
                [transforms[w].apply(p) for w, p in owners[v]]
            ).reshape(-1, 3)
            try:
                s, R, t = umeyama(src_arr[v], dst, with_scale)
            except DegenerateInputError:
                continue
            old = transforms[v]
            change = max(
                abs(s - old.s),
                float(np.abs(R - old.R).max()),
                float(np.abs(t - old.t).max()),
            )
            max_change = max(max_change, change)
            transforms[v] = Similarity(s, R, t)
        if max_change < REFINE_TOL:
            break
    return transforms


def estimate_rho(xy, uv, principal_point):
    """Closed-form least-squares tile scale from registered (x, y) coordinates
    at pixel locations (u, v), with pixels centered at the principal point."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    cu, cv = principal_point
    up = uv[:, 0] - cu
    vp = uv[:, 1] - cv
    denom = float(up @ up + vp @ vp)
    if denom < 1e-18:
        raise DegenerateInputError("all points at the principal point")
    return float((xy[:, 0] @ up + xy[:, 1] @ vp) / denom)


def build_nn_correspondences(pointmaps, poses, cell, stride=4):
    """Mutual nearest-neighbor correspondences between world-frame point maps,
    with a distance cutoff of NN_CUTOFF_CELLS grid cells. Stress-test mode."""
    cutoff = NN_CUTOFF_CELLS * cell
    n = len(pointmaps)
    pix, world, local = [], [], []
    for pm, pose in zip(pointmaps, poses):
        rows, cols = np.nonzero(pm.valid)
        rows, cols = rows[::stride], cols[::stride]
        pts_local = pm.points[rows, cols]
        pix.append(np.stack([cols + 0.5, rows + 0.5], axis=1))
        local.append(pts_local)
        world.append(pose.inverse_apply(pts_local))

    pairs = []
    for a in range(n):
        for b in range(a + 1, n):
            if world[a].size == 0 or world[b].size == 0:
                continue
            tree_b = cKDTree(world[b])
            d_ab, j_ab = tree_b.query(world[a], distance_upper_bound=cutoff)
            tree_a = cKDTree(world[a])
            _, j_ba = tree_a.query(world[b], distance_upper_bound=cutoff)
            for i, (d, j) in enumerate(zip(d_ab, j_ab)):
                if np.isfinite(d) and j < len(world[b]) and j_ba[j] == i:
                    pairs.append(Correspondence(
                        view_a=a, pixel_a=tuple(pix[a][i]),
                        view_b=b, pixel_b=tuple(pix[b][j]),
                        point_a=local[a][i], point_b=local[b][j],
                    ))
    return CorrespondenceSet(pairs=pairs, source="nearest-neighbor")
