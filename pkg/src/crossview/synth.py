"""Exact synthetic tri-view scenes: analytic plane+box geometry, exact depth
rendering, sample assembly, and controlled corruption for metric testing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .align import Correspondence, CorrespondenceSet
from .depthfusion import DepthGrid
from .errors import StructuralError, ValidationError
from .frames import (
    GROUND,
    SATELLITE,
    UAV,
    GeoPoint,
    Intrinsics,
    Pose,
    TriViewSample,
    ViewRecord,
    pose_from_angles,
    redefine_altitudes,
)
from .losses import PointMap
from .ortho import RAW_SATELLITE_ALTITUDE_M, SAT_FOV_RANGE_DEG, TILE_EXTENT_M, SatTile, ortho_lift

_RAY_EPS = 1e-9
# High-pitch UAV band and its oversampling odds (2 : 1).
UAV_HIGH_PITCH_BAND = (60.0, 90.0)
UAV_HIGH_PITCH_PROB = 2.0 / 3.0
GROUND_PITCH_JITTER_DEG = 5.0


@dataclass(frozen=True)
class SceneSpec:
    """Analytic scene: a (tiltable) ground plane plus axis-aligned boxes."""

    plane_point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    plane_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0, 0.0]))
    boxes: Tuple[Tuple[np.ndarray, np.ndarray], ...] = ()
    texture_seed: int = 0

    def __post_init__(self):
        p0 = np.asarray(self.plane_point, dtype=float).reshape(3)
        n = np.asarray(self.plane_normal, dtype=float).reshape(3)
        n = n / np.linalg.norm(n)
        if n @ np.array([0.0, -1.0, 0.0]) < math.cos(math.radians(30.0)) - 1e-12:
            raise ValidationError("plane normal tilted more than 30 degrees from up")
        boxes = []
        for bmin, bmax in self.boxes:
            bmin = np.asarray(bmin, dtype=float).reshape(3)
            bmax = np.asarray(bmax, dtype=float).reshape(3)
            if np.any(bmin >= bmax):
                raise ValidationError("box min corner must be strictly below max corner")
            corners = np.array([[bmin[i] if b & (1 << i) else bmax[i] for i in range(3)]
                                for b in range(8)])
            if np.min((corners - p0) @ n) < -1e-6:
                raise ValidationError("box extends below the ground plane")
            bmin.setflags(write=False)
            bmax.setflags(write=False)
            boxes.append((bmin, bmax))
        p0.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "plane_point", p0)
        object.__setattr__(self, "plane_normal", n)
        object.__setattr__(self, "boxes", tuple(boxes))

    def plane_height(self, x, z):
        """y of the ground plane at horizontal position (x, z)."""
        n = self.plane_normal
        return (n @ self.plane_point - n[0] * np.asarray(x) - n[2] * np.asarray(z)) / n[1]

    def translated(self, offset):
        offset = np.asarray(offset, dtype=float)
        return SceneSpec(
            plane_point=self.plane_point + offset,
            plane_normal=self.plane_normal,
            boxes=tuple((bmin + offset, bmax + offset) for bmin, bmax in self.boxes),
            texture_seed=self.texture_seed,
        )


@dataclass(frozen=True)
class CaptureConfig:
    """Capture geometry defaults for synthetic tri-view samples."""

    tile_extent: float = TILE_EXTENT_M
    tile_px: int = 96
    uav_alt_range: Tuple[float, float] = (30.0, 120.0)
    uav_pitch_range: Tuple[float, float] = (0.0, 90.0)
    ground_height: float = 1.7
    sat_fov_deg: float = 3.0
    persp_px: int = 48
    persp_fov_deg: float = 60.0
    spread: float = 30.0  # horizontal camera scatter, meters

    def __post_init__(self):
        if self.tile_extent <= 0 or self.tile_px < 2 or self.persp_px < 2:
            raise ValidationError("bad tile/image dimensions")
        if not (self.uav_alt_range[0] < self.uav_alt_range[1]):
            raise ValidationError("empty UAV altitude range")
        lo, hi = self.uav_pitch_range
        if not (0.0 <= lo < hi <= 90.0):
            raise ValidationError("UAV pitch range must lie within [0, 90]")
        if not (SAT_FOV_RANGE_DEG[0] <= self.sat_fov_deg <= SAT_FOV_RANGE_DEG[1]):
            raise ValidationError(f"satellite FoV outside {SAT_FOV_RANGE_DEG}")


def random_scene(seed=0, n_boxes=4, extent=120.0, tilt_deg=3.0):
    """Procedural test scene: gently tilted ground plane plus a few boxes."""
    rng = np.random.default_rng(seed)
    azim = rng.uniform(0.0, 2 * math.pi)
    tilt = math.radians(rng.uniform(0.5, tilt_deg))
    normal = np.array([math.sin(tilt) * math.cos(azim), -math.cos(tilt),
                       math.sin(tilt) * math.sin(azim)])
    plane_point = np.zeros(3)
    spec_probe = SceneSpec(plane_point=plane_point, plane_normal=normal)
    boxes = []
    for _ in range(n_boxes):
        cx, cz = rng.uniform(-extent / 2, extent / 2, 2)
        sx, sz = rng.uniform(4.0, 14.0, 2)
        h = rng.uniform(4.0, 18.0)
        # Rest the box on the plane's lowest corner height so it stays above it.
        corners_y = [spec_probe.plane_height(cx + dx, cz + dz)
                     for dx in (-sx / 2, sx / 2) for dz in (-sz / 2, sz / 2)]
        base_y = min(corners_y)  # y down: min y is the highest terrain corner
        bmin = np.array([cx - sx / 2, base_y - h, cz - sz / 2])
        bmax = np.array([cx + sx / 2, base_y, cz + sz / 2])
        boxes.append((bmin, bmax))
    return SceneSpec(plane_point=plane_point, plane_normal=normal,
                     boxes=tuple(boxes), texture_seed=int(seed))


def first_hit(scene: SceneSpec, origins, dirs):
    """Smallest positive ray parameter t (in units of `dirs`) hitting the scene.

    Exact analytic plane and box intersections; misses return +inf.
    """
    o = np.asarray(origins, dtype=float)
    d = np.asarray(dirs, dtype=float)
    o, d = np.broadcast_arrays(o, d)
    t_best = np.full(o.shape[:-1], np.inf)

    n = scene.plane_normal
    denom = d @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = ((scene.plane_point - o) @ n) / denom
    hit = (np.abs(denom) > 1e-15) & (t_plane > _RAY_EPS)
    t_best = np.where(hit, np.minimum(t_best, t_plane), t_best)

    for bmin, bmax in scene.boxes:
        t_near = np.full(o.shape[:-1], -np.inf)
        t_far = np.full(o.shape[:-1], np.inf)
        inside_all = np.ones(o.shape[:-1], dtype=bool)
        for ax in range(3):
            da = d[..., ax]
            oa = o[..., ax]
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (bmin[ax] - oa) / da
                t2 = (bmax[ax] - oa) / da
            lo = np.minimum(t1, t2)
            hi = np.maximum(t1, t2)
            zero = da == 0.0
            in_slab = (oa >= bmin[ax]) & (oa <= bmax[ax])
            lo = np.where(zero, np.where(in_slab, -np.inf, np.inf), lo)
            hi = np.where(zero, np.where(in_slab, np.inf, -np.inf), hi)
            t_near = np.maximum(t_near, lo)
            t_far = np.minimum(t_far, hi)
        hit_box = (t_near <= t_far) & (t_near > _RAY_EPS)
        t_best = np.where(hit_box, np.minimum(t_best, t_near), t_best)
    return t_best


def _pixel_grid(width, height):
    """Pixel-center coordinates: u = col + 0.5, v = row + 0.5."""
    u = np.arange(width) + 0.5
    v = np.arange(height) + 0.5
    return np.meshgrid(u, v)


def render_depth(scene: SceneSpec, pose: Pose, intr: Intrinsics) -> DepthGrid:
    """Exact per-pixel depth (camera-frame z of the nearest hit) of the scene."""
    uu, vv = _pixel_grid(intr.width, intr.height)
    d_cam = np.stack([(uu - intr.cu) / intr.fx, (vv - intr.cv) / intr.fy,
                      np.ones_like(uu)], axis=-1)
    d_world = d_cam @ pose.R
    t = first_hit(scene, pose.center, d_world)
    valid = np.isfinite(t)
    values = np.where(valid, t, np.nan)
    return DepthGrid(values=values, valid=valid)


def render_ortho(scene: SceneSpec, tile: SatTile) -> DepthGrid:
    """Orthographic depth: vertical distance from the tile camera plane to the
    first hit under each pixel."""
    uu, vv = _pixel_grid(tile.width, tile.height)
    offsets_local = np.stack([(uu - tile.width / 2.0) * tile.rho,
                              (vv - tile.height / 2.0) * tile.rho,
                              np.zeros_like(uu)], axis=-1)
    origins = tile.pose.center + offsets_local @ tile.pose.R
    down = tile.pose.forward
    t = first_hit(scene, origins, down[None, None, :])
    valid = np.isfinite(t)
    values = np.where(valid, t, np.nan)
    return DepthGrid(values=values, valid=valid)


def lift_perspective(depth: DepthGrid, intr: Intrinsics) -> PointMap:
    """Depth grid to camera-frame point map for a pinhole view."""
    uu, vv = _pixel_grid(intr.width, intr.height)
    z = np.where(depth.valid, depth.values, 1.0)
    pts = np.stack([(uu - intr.cu) / intr.fx * z, (vv - intr.cv) / intr.fy * z, z], axis=-1)
    pts[~depth.valid] = np.nan
    return PointMap(points=pts, valid=depth.valid.copy())


def lift_ortho(depth: DepthGrid, tile: SatTile) -> PointMap:
    """Depth grid to tile-frame point map for an orthographic satellite view."""
    uu, vv = _pixel_grid(tile.width, tile.height)
    z = np.where(depth.valid, depth.values, 1.0)
    pts = ortho_lift(uu, vv, z, tile)
    pts[~depth.valid] = np.nan
    return PointMap(points=pts, valid=depth.valid.copy())


@dataclass
class SynthSample:
    """A synthetic tri-view sample with exact ground truth."""

    sample: TriViewSample
    scene: SceneSpec  # in the redefined (ground-anchored) world frame
    pointmaps: List[PointMap]
    depths: List[DepthGrid]
    tiles: Dict[int, SatTile]
    correspondences: CorrespondenceSet
    seed: int

    @property
    def poses(self):
        return [v.pose for v in self.sample.views]


def _project(view: ViewRecord, tiles, idx, x_world, pose=None):
    """(u, v, z_cam, p_local) of world points in a view; z <= 0 marks behind."""
    pose = pose or view.pose
    p_local = pose.apply(x_world)
    z = p_local[..., 2]
    if view.modality == SATELLITE:
        tile = tiles[idx]
        u = p_local[..., 0] / tile.rho + tile.width / 2.0
        v = p_local[..., 1] / tile.rho + tile.height / 2.0
    else:
        intr = view.intrinsics
        with np.errstate(divide="ignore", invalid="ignore"):
            u = intr.fx * p_local[..., 0] / z + intr.cu
            v = intr.fy * p_local[..., 1] / z + intr.cv
    return u, v, z, p_local


def _visible(scene, view: ViewRecord, tiles, idx, x_world, p_local):
    """Exact occlusion test: the first hit along the viewing ray must be the point."""
    if view.modality == SATELLITE:
        tile = tiles[idx]
        offsets = p_local.copy()
        offsets[..., 2] = 0.0
        origins = view.pose.center + offsets @ view.pose.R
        dirs = np.broadcast_to(view.pose.forward, origins.shape)
        t = first_hit(scene, origins, dirs)
    else:
        d_world = (p_local / p_local[..., 2:3]) @ view.pose.R
        t = first_hit(scene, view.pose.center, d_world)
    return np.abs(t - p_local[..., 2]) < 1e-6 * np.maximum(1.0, p_local[..., 2])


def make_sample(scene: SceneSpec, cfg: CaptureConfig = CaptureConfig(), seed: int = 0,
                max_corr_per_pair: int = 50) -> SynthSample:
    """Generate one tri-view sample with exact depths, point maps, and
    cross-view correspondences; bitwise deterministic per seed."""
    rng = np.random.default_rng(seed)
    half = cfg.spread

    def free_position():
        for _ in range(200):
            x, z = rng.uniform(-half, half, 2)
            clear = True
            for bmin, bmax in scene.boxes:
                if bmin[0] - 2 <= x <= bmax[0] + 2 and bmin[2] - 2 <= z <= bmax[2] + 2:
                    clear = False
                    break
            if clear:
                return x, z
        raise StructuralError("scene too cluttered to place cameras")

    views = []
    # Satellite views first, so view 0 is the registration reference.
    sat_rho = cfg.tile_extent / cfg.tile_px
    for _ in range(2):
        dx, dz = rng.uniform(-2.0, 2.0, 2)
        pose = pose_from_angles([dx, -RAW_SATELLITE_ALTITUDE_M, dz], 0.0, 90.0)
        views.append(ViewRecord(modality=SATELLITE, pose=pose, rho=sat_rho))
    intr = Intrinsics(
        fx=(cfg.persp_px / 2.0) / math.tan(math.radians(cfg.persp_fov_deg / 2.0)),
        fy=(cfg.persp_px / 2.0) / math.tan(math.radians(cfg.persp_fov_deg / 2.0)),
        cu=cfg.persp_px / 2.0, cv=cfg.persp_px / 2.0,
        width=cfg.persp_px, height=cfg.persp_px,
    )
    for _ in range(2):
        x, z = free_position()
        alt = rng.uniform(*cfg.uav_alt_range)
        if rng.uniform() < UAV_HIGH_PITCH_PROB:
            lo = max(cfg.uav_pitch_range[0], UAV_HIGH_PITCH_BAND[0])
            hi = min(cfg.uav_pitch_range[1], UAV_HIGH_PITCH_BAND[1])
        else:
            lo = cfg.uav_pitch_range[0]
            hi = min(cfg.uav_pitch_range[1], UAV_HIGH_PITCH_BAND[0])
        pitch = rng.uniform(lo, hi)
        yaw = rng.uniform(-180.0, 180.0)
        y = scene.plane_height(x, z) - alt
        views.append(ViewRecord(modality=UAV, pose=pose_from_angles([x, y, z], yaw, pitch),
                                intrinsics=intr))
    for _ in range(2):
        x, z = free_position()
        yaw = rng.uniform(-180.0, 180.0)
        pitch = rng.uniform(-GROUND_PITCH_JITTER_DEG, GROUND_PITCH_JITTER_DEG)
        y = scene.plane_height(x, z) - cfg.ground_height
        views.append(ViewRecord(modality=GROUND, pose=pose_from_angles([x, y, z], yaw, pitch),
                                intrinsics=intr))

    raw = TriViewSample(views=tuple(views), origin=GeoPoint(0.0, 0.0, 0.0),
                        meters_per_pixel_gt=sat_rho)
    # Re-anchor cameras and shift the scene by the same amount so geometry
    # stays consistent with the redefined poses.
    ref_y = max(v.pose.center[1] for v in raw.views if v.modality == GROUND)
    sample = redefine_altitudes(raw)
    scene = scene.translated([0.0, -ref_y, 0.0])

    names = ["sat0", "sat1", "uav0", "uav1", "grd0", "grd1"]
    sample = replace(sample, views=tuple(
        replace(v, name=nm) for v, nm in zip(sample.views, names)
    ))

    tiles = {}
    depths = []
    pointmaps = []
    for i, v in enumerate(sample.views):
        if v.modality == SATELLITE:
            tile = SatTile(width=cfg.tile_px, height=cfg.tile_px, rho=v.rho, pose=v.pose)
            tiles[i] = tile
            depth = render_ortho(scene, tile)
            pointmaps.append(lift_ortho(depth, tile))
        else:
            depth = render_depth(scene, v.pose, v.intrinsics)
            pointmaps.append(lift_perspective(depth, v.intrinsics))
        depths.append(depth)

    pairs = []
    n = len(sample.views)
    for i in range(n):
        rows, cols = np.nonzero(pointmaps[i].valid)
        if rows.size == 0:
            continue
        stride = max(1, rows.size // (max_corr_per_pair * 4))
        rows, cols = rows[::stride], cols[::stride]
        pts_i = pointmaps[i].points[rows, cols]
        x_world = sample.views[i].pose.inverse_apply(pts_i)
        pix_i = np.stack([cols + 0.5, rows + 0.5], axis=1)
        for j in range(i + 1, n):
            vj = sample.views[j]
            u, v_, z, p_local = _project(vj, tiles, j, x_world)
            if vj.modality == SATELLITE:
                w_, h_ = tiles[j].width, tiles[j].height
            else:
                w_, h_ = vj.intrinsics.width, vj.intrinsics.height
            ok = (z > 1e-6) & (u >= 0) & (u <= w_) & (v_ >= 0) & (v_ <= h_)
            if not ok.any():
                continue
            vis = np.zeros_like(ok)
            vis[ok] = _visible(scene, vj, tiles, j, x_world[ok], p_local[ok])
            idxs = np.nonzero(vis)[0][:max_corr_per_pair]
            for kidx in idxs:
                pairs.append(Correspondence(
                    view_a=i, pixel_a=(float(pix_i[kidx, 0]), float(pix_i[kidx, 1])),
                    view_b=j, pixel_b=(float(u[kidx]), float(v_[kidx])),
                    point_a=pts_i[kidx].copy(), point_b=p_local[kidx].copy(),
                ))

    return SynthSample(
        sample=sample, scene=scene, pointmaps=pointmaps, depths=depths,
        tiles=tiles, correspondences=CorrespondenceSet(pairs=pairs), seed=int(seed),
    )


def rotation_about_axis(axis, angle_deg):
    """Rodrigues rotation matrix about a (unit) world axis."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    th = math.radians(angle_deg)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(th) * K + (1 - math.cos(th)) * (K @ K)


@dataclass(frozen=True)
class NoiseSpec:
    """Corruption magnitudes; zero sigmas leave the corresponding data bitwise intact.

    When rot_axis / trans_direction are given, the injection is deterministic
    with exactly sigma magnitude (for injected-error bookkeeping); otherwise
    directions are random and magnitudes Gaussian.
    """

    sigma_rot_deg: float = 0.0
    sigma_trans_m: float = 0.0
    sigma_point_m: float = 0.0
    sigma_rho_rel: float = 0.0
    sigma_corr_m: float = 0.0
    rot_axis: Optional[Tuple[float, float, float]] = None
    trans_direction: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if min(self.sigma_rot_deg, self.sigma_trans_m, self.sigma_point_m,
               self.sigma_rho_rel, self.sigma_corr_m) < 0:
            raise ValidationError("noise sigmas must be non-negative")


@dataclass
class PerturbedBundle:
    """A corrupted 'prediction' plus the exact injected errors."""

    poses: List[Pose]
    pointmaps: List[PointMap]
    rhos: Dict[int, float]
    correspondences: CorrespondenceSet
    injected: Dict[int, dict]
    source: SynthSample


def perturb(synth: SynthSample, noise: NoiseSpec, seed: int = 0,
            view_subset=None) -> PerturbedBundle:
    """Apply seeded corruption to poses, point maps, rho, and correspondences.

    `view_subset` limits pose corruption to the listed view indices. With all
    sigmas zero the bundle is bitwise identical to the ground truth.
    """
    rng = np.random.default_rng(seed)
    n = len(synth.sample.views)
    subset = set(range(n)) if view_subset is None else set(view_subset)

    poses = []
    injected = {}
    for i, v in enumerate(synth.sample.views):
        R = v.pose.R
        C = v.pose.center
        touched = False
        info = {"trans_offset": np.zeros(3), "rot_angle_deg": 0.0, "rot_axis": None}
        if i in subset and noise.sigma_rot_deg > 0:
            if noise.rot_axis is not None:
                axis = np.asarray(noise.rot_axis, dtype=float)
                angle = noise.sigma_rot_deg
            else:
                axis = rng.normal(size=3)
                axis /= np.linalg.norm(axis)
                angle = abs(rng.normal(0.0, noise.sigma_rot_deg))
            Q = rotation_about_axis(axis, angle)
            R = R @ Q.T
            touched = True
            info["rot_angle_deg"] = float(angle)
            info["rot_axis"] = axis / np.linalg.norm(axis)
        if i in subset and noise.sigma_trans_m > 0:
            if noise.trans_direction is not None:
                d = np.asarray(noise.trans_direction, dtype=float)
                offset = noise.sigma_trans_m * d / np.linalg.norm(d)
            else:
                offset = rng.normal(0.0, noise.sigma_trans_m, size=3)
            C = C + offset
            touched = True
            info["trans_offset"] = offset
        poses.append(Pose.from_center(R, C) if touched else v.pose)
        injected[i] = info

    pointmaps = []
    for pm in synth.pointmaps:
        pts = pm.points.copy()
        if noise.sigma_point_m > 0:
            pts[pm.valid] += rng.normal(0.0, noise.sigma_point_m, size=pts[pm.valid].shape)
        pointmaps.append(PointMap(points=pts, valid=pm.valid.copy()))

    rhos = {}
    for i, tile in synth.tiles.items():
        rho = tile.rho
        if noise.sigma_rho_rel > 0:
            rho = rho * (1.0 + rng.normal(0.0, noise.sigma_rho_rel))
        rhos[i] = float(rho)

    pairs = []
    for c in synth.correspondences.pairs:
        pa = c.point_a.copy()
        pb = c.point_b.copy()
        if noise.sigma_corr_m > 0:
            pa = pa + rng.normal(0.0, noise.sigma_corr_m, size=3)
            pb = pb + rng.normal(0.0, noise.sigma_corr_m, size=3)
        pairs.append(Correspondence(view_a=c.view_a, pixel_a=c.pixel_a,
                                    view_b=c.view_b, pixel_b=c.pixel_b,
                                    point_a=pa, point_b=pb))

    return PerturbedBundle(
        poses=poses, pointmaps=pointmaps, rhos=rhos,
        correspondences=CorrespondenceSet(pairs=pairs, source=synth.correspondences.source),
        injected=injected, source=synth,
    )
