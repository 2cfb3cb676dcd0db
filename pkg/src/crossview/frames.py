"""Coordinate frames, camera pose assembly, and per-sample altitude re-anchoring.

World frame convention: x points south, y points down, z points east.
Extrinsics are world-to-camera: x_cam = R @ x_world + t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import StructuralError, ValidationError

EARTH_RADIUS_M = 6_378_137.0

# Redefined satellite camera height above the sample's ground reference.
SATELLITE_HEIGHT_M = 150.0

SATELLITE = "satellite"
UAV = "uav"
GROUND = "ground"
MODALITIES = (SATELLITE, UAV, GROUND)


@dataclass(frozen=True)
class GeoPoint:
    """WGS-84 latitude/longitude in degrees, altitude in meters above reference ground."""

    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValidationError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValidationError(f"longitude out of range: {self.lon}")


class Pose:
    """Rigid world-to-camera transform (R, t) with x_cam = R @ x_world + t."""

    __slots__ = ("R", "t")

    def __init__(self, R, t):
        R = np.asarray(R, dtype=float).reshape(3, 3)
        t = np.asarray(t, dtype=float).reshape(3)
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > 1e-9:
            raise ValidationError(f"rotation not orthonormal (|R^T R - I| = {err:g})")
        det = np.linalg.det(R)
        if abs(det - 1.0) > 1e-9:
            raise ValidationError(f"rotation determinant {det:.12f} != 1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def __setattr__(self, name, value):
        raise AttributeError("Pose is immutable")

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @property
    def center(self):
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    @classmethod
    def from_center(cls, R, center):
        R = np.asarray(R, dtype=float)
        return cls(R, -R @ np.asarray(center, dtype=float))

    @property
    def forward(self):
        """Camera +z (viewing direction) expressed in world coordinates."""
        return self.R[2].copy()

    @property
    def up(self):
        """Camera up (-y) expressed in world coordinates."""
        return -self.R[1]

    def apply(self, points):
        """Map world points (…,3) into the camera frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.R.T + self.t

    def inverse_apply(self, points):
        """Map camera-frame points (…,3) back to world."""
        pts = np.asarray(points, dtype=float)
        return (pts - self.t) @ self.R

    def __repr__(self):
        return f"Pose(R={self.R.tolist()}, t={self.t.tolist()})"


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels. Perspective views only; satellite tiles carry rho."""

    fx: float
    fy: float
    cu: float
    cv: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        if not (0 < self.cu < self.width) or not (0 < self.cv < self.height):
            raise ValidationError("principal point outside the image")


@dataclass(frozen=True)
class ViewRecord:
    """One view of a tri-view sample: a pose plus intrinsics (perspective) or rho (satellite)."""

    modality: str
    pose: Pose
    intrinsics: Optional[Intrinsics] = None
    rho: Optional[float] = None
    depth: Optional[object] = None
    name: str = ""

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValidationError(f"unknown modality {self.modality!r}")
        if self.modality == SATELLITE:
            if self.rho is None or self.intrinsics is not None:
                raise ValidationError("satellite views carry rho, not intrinsics")
            if self.rho <= 0:
                raise ValidationError("rho must be positive")
        else:
            if self.intrinsics is None or self.rho is not None:
                raise ValidationError("perspective views carry intrinsics, not rho")


@dataclass(frozen=True)
class TriViewSample:
    """2 satellite + 2 UAV + 2 ground views sharing one world frame."""

    views: tuple
    origin: GeoPoint
    meters_per_pixel_gt: float

    def __post_init__(self):
        counts = {m: 0 for m in MODALITIES}
        for v in self.views:
            counts[v.modality] += 1
        if counts != {SATELLITE: 2, UAV: 2, GROUND: 2}:
            raise StructuralError(f"modality counts must be 2/2/2, got {counts}")

    def indices(self, modality):
        return [i for i, v in enumerate(self.views) if v.modality == modality]


def geo_to_local(p: GeoPoint, origin: GeoPoint) -> np.ndarray:
    """Convert a geodetic point to local (south, down, east) meters about `origin`.

    Equirectangular tangent-plane approximation with the equatorial radius;
    valid for deltas under one degree.
    """
    dlat = p.lat - origin.lat
    dlon = p.lon - origin.lon
    if abs(dlat) > 1.0 or abs(dlon) > 1.0:
        raise ValidationError(
            f"geodetic delta ({dlat:.4f}, {dlon:.4f}) deg outside the 1-degree local window"
        )
    x = -math.radians(dlat) * EARTH_RADIUS_M
    z = math.radians(dlon) * EARTH_RADIUS_M * math.cos(math.radians(origin.lat))
    y = -(p.alt - origin.alt)
    return np.array([x, y, z])


def rotation_from_angles(yaw_deg: float, pitch_deg: float, roll_deg: float = 0.0) -> np.ndarray:
    """World-to-camera rotation from compass yaw (clockwise from north), pitch
    (0 horizontal, 90 nadir), and roll about the viewing axis.

    Camera frame: +x image-right, +y image-down, +z forward.
    """
    psi = math.radians(yaw_deg)
    theta = math.radians(pitch_deg)
    phi = math.radians(roll_deg)
    # Horizontal forward/right before pitch and roll (north = -x, east = +z).
    h = np.array([-math.cos(psi), 0.0, math.sin(psi)])
    r0 = np.array([math.sin(psi), 0.0, math.cos(psi)])
    down = np.array([0.0, 1.0, 0.0])
    f = math.cos(theta) * h + math.sin(theta) * down
    y0 = np.cross(f, r0)
    x_axis = math.cos(phi) * r0 + math.sin(phi) * y0
    y_axis = -math.sin(phi) * r0 + math.cos(phi) * y0
    return np.stack([x_axis, y_axis, f])


def pose_from_angles(center, yaw_deg, pitch_deg, roll_deg=0.0) -> Pose:
    """Pose from a world-frame camera center and yaw/pitch/roll angles."""
    R = rotation_from_angles(yaw_deg, pitch_deg, roll_deg)
    return Pose.from_center(R, center)


def pose_from_geo(pos: GeoPoint, yaw_deg, pitch_deg, roll_deg, origin: GeoPoint) -> Pose:
    """Assemble extrinsics from GPS position + compass angles about `origin`."""
    return pose_from_angles(geo_to_local(pos, origin), yaw_deg, pitch_deg, roll_deg)


def relative_pose(a: Pose, b: Pose) -> Pose:
    """Pose of camera b expressed in camera a's frame."""
    R = b.R @ a.R.T
    return Pose(R, b.t - R @ a.t)


def redefine_altitudes(sample: TriViewSample, h_sat: float = SATELLITE_HEIGHT_M) -> TriViewSample:
    """Re-anchor camera heights so the lower ground camera sits at y = 0.

    A rigid vertical shift is applied to ground and UAV cameras; satellite
    camera heights are overridden to y = -h_sat regardless of their raw
    altitude. Rotations are unchanged.
    """
    ground_idx = sample.indices(GROUND)
    if not ground_idx or not sample.indices(UAV) or not sample.indices(SATELLITE):
        raise StructuralError("sample must contain all three modalities")
    # y is down, so the lower camera has the largest y.
    ref_y = max(sample.views[i].pose.center[1] for i in ground_idx)

    new_views = []
    for v in sample.views:
        c = v.pose.center
        if v.modality == SATELLITE:
            c = np.array([c[0], -h_sat, c[2]])
        else:
            c = np.array([c[0], c[1] - ref_y, c[2]])
        new_views.append(replace(v, pose=Pose.from_center(v.pose.R, c)))
    return replace(sample, views=tuple(new_views))
