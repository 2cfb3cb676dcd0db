"""Orthographic satellite-tile model: lifting, on-tile localization, altitude sweep.

A satellite tile is a virtual nadir camera whose pixels map linearly to its
local (x, y) plane through a single scale rho (scene units per pixel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, ValidationError
from .frames import Pose

# Canonical raw altitude of the Google-Maps virtual satellite camera.
RAW_SATELLITE_ALTITUDE_M = 5_726.0

# Default tile extents and the OOD tile-shift magnitude.
TILE_EXTENT_M = 300.0
OOD_TILE_EXTENT_M = 110.0
MAX_TILE_SHIFT_M = 20.0

# Narrow field-of-view window of the virtual satellite pinhole, degrees.
SAT_FOV_RANGE_DEG = (2.0, 5.0)


@dataclass(frozen=True)
class SatTile:
    """Orthographic satellite view: pixel dims, relative scale rho, nadir pose."""

    width: int
    height: int
    rho: float
    pose: Pose

    def __post_init__(self):
        if self.rho <= 0:
            raise ConfigurationError("rho must be positive")
        fwd = self.pose.forward
        if np.abs(fwd - np.array([0.0, 1.0, 0.0])).max() > 1e-6:
            raise ValidationError(f"tile pose is not nadir (forward = {fwd})")


def ortho_lift(u, v, z, tile: SatTile):
    """Lift pixel (u, v) with depth z into the tile's camera frame.

    Pixels are centered at the principal point (width/2, height/2), so the
    tile's local origin is the tile center.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValidationError("depth must be positive")
    x = (u - tile.width / 2.0) * tile.rho
    y = (v - tile.height / 2.0) * tile.rho
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def locate_on_tile(p_world, tile: SatTile):
    """Project world point(s) onto the tile: pixel (u, v), unclamped off-tile."""
    p_local = tile.pose.apply(p_world)
    u = p_local[..., 0] / tile.rho + tile.width / 2.0
    v = p_local[..., 1] / tile.rho + tile.height / 2.0
    return u, v


def _wrap_deg(a):
    """Wrap to (-180, 180]."""
    w = -((-a + 180.0) % 360.0 - 180.0)
    return 180.0 if w == -180.0 else w


def camera_on_tile(cam: Pose, tile: SatTile):
    """On-tile pixel position and compass yaw of a perspective camera.

    Yaw is atan2(east, north) of the forward vector projected on the ground
    plane; for near-nadir cameras the up vector is projected instead, which
    recovers the yaw handed to pose_from_angles.
    """
    u, v = locate_on_tile(cam.center, tile)
    f = cam.forward
    if math.hypot(f[0], f[2]) < 1e-9:
        f = cam.up
    yaw = math.degrees(math.atan2(f[2], -f[0]))
    return float(u), float(v), _wrap_deg(yaw)


def zncc(a, b):
    """Zero-normalized cross-correlation of two equally shaped images."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    da = a - a.mean()
    db = b - b.mean()
    na = np.linalg.norm(da)
    nb = np.linalg.norm(db)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("constant image has no correlation")
    return float(da @ db / (na * nb))


def render_sweep_view(scene, altitude, shape, fov_deg, center_xz=(0.0, 0.0)):
    """Nadir pinhole height image of `scene` from `altitude` with a narrow FoV."""
    from .frames import Intrinsics, pose_from_angles
    from .synth import render_depth

    h, w = shape
    half = math.tan(math.radians(fov_deg / 2.0))
    focal = (w / 2.0) / half
    intr = Intrinsics(fx=focal, fy=focal, cu=w / 2.0, cv=h / 2.0, width=w, height=h)
    pose = pose_from_angles([center_xz[0], -altitude, center_xz[1]], 0.0, 90.0)
    depth = render_depth(scene, pose, intr)
    height_img = altitude - depth.values
    height_img[~depth.valid] = np.nan
    return height_img


def altitude_sweep(target, scene, candidates, fov_deg=3.0, center_xz=(0.0, 0.0)):
    """Recover the satellite altitude by rendering each candidate and scoring
    zero-normalized cross-correlation against the target height image.

    Ties break toward the lower altitude. The candidate list is searched in
    ascending order so the result is independent of input ordering.
    """
    if len(candidates) == 0:
        raise ConfigurationError("candidate list is empty")
    if not (SAT_FOV_RANGE_DEG[0] <= fov_deg <= SAT_FOV_RANGE_DEG[1]):
        raise ConfigurationError(f"fov {fov_deg} outside {SAT_FOV_RANGE_DEG}")
    target = np.asarray(target, dtype=float)
    tgt = np.nan_to_num(target, nan=0.0)
    if np.std(tgt) == 0.0:
        raise DegenerateInputError("target image has zero variance")

    best_alt = None
    best_score = -np.inf
    for alt in sorted(float(a) for a in candidates):
        img = render_sweep_view(scene, alt, target.shape, fov_deg, center_xz)
        img = np.nan_to_num(img, nan=0.0)
        if np.std(img) == 0.0:
            continue
        score = zncc(img, tgt)
        if score > best_score:
            best_score = score
            best_alt = alt
    if best_alt is None:
        raise DegenerateInputError("every candidate rendered a constant image")
    return best_alt


def tile_shift_sample(tile_extent=OOD_TILE_EXTENT_M, max_shift=MAX_TILE_SHIFT_M, rng=None):
    """Uniform (east, south) tile-center shift in [-max_shift, +max_shift] meters."""
    if max_shift < 0:
        raise ConfigurationError("max_shift must be non-negative")
    if tile_extent <= 0:
        raise ConfigurationError("tile_extent must be positive")
    if rng is None:
        rng = np.random.default_rng()
    dx = rng.uniform(-max_shift, max_shift)
    dy = rng.uniform(-max_shift, max_shift)
    return float(dx), float(dy)
