import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crossview.errors import StructuralError, ValidationError
from crossview.frames import (
    EARTH_RADIUS_M,
    GROUND,
    SATELLITE,
    SATELLITE_HEIGHT_M,
    UAV,
    GeoPoint,
    Intrinsics,
    Pose,
    TriViewSample,
    ViewRecord,
    geo_to_local,
    pose_from_angles,
    pose_from_geo,
    redefine_altitudes,
    relative_pose,
    rotation_from_angles,
)

from conftest import random_pose

ORIGIN = GeoPoint(0.0, 0.0, 0.0)


class TestGeoToLocal:
    def test_identity(self):
        assert np.array_equal(geo_to_local(ORIGIN, ORIGIN), np.zeros(3))

    def test_one_degree_east_at_equator(self):
        # Arc length of one degree of longitude at the equator.
        expected = EARTH_RADIUS_M * math.pi / 180.0  # 111319.490793...
        v = geo_to_local(GeoPoint(0.0, 1.0, 0.0), ORIGIN)
        assert v[0] == pytest.approx(0.0, abs=1e-12)
        assert v[1] == 0.0
        assert v[2] == pytest.approx(expected, rel=1e-12)
        assert v[2] == pytest.approx(111_319.490793, abs=1e-6)

    def test_altitude_is_negative_y(self):
        v = geo_to_local(GeoPoint(0.0, 0.0, 10.0), ORIGIN)
        assert np.array_equal(v, [0.0, -10.0, 0.0])

    def test_north_is_negative_x(self):
        v = geo_to_local(GeoPoint(0.5, 0.0, 0.0), ORIGIN)
        assert v[0] < 0 and v[2] == 0.0

    def test_out_of_window_rejected(self):
        with pytest.raises(ValidationError):
            geo_to_local(GeoPoint(2.0, 0.0, 0.0), ORIGIN)

    def test_additive_composition(self):
        o = GeoPoint(10.0, 20.0, 5.0)
        p = GeoPoint(10.004, 20.006, 8.0)
        q = GeoPoint(10.009, 20.002, 1.0)
        direct = geo_to_local(q, o)
        # Two-hop path: o -> p plus p -> q measured about p but with o's
        # latitude scale. Exactly linear only in lat/alt; lon within 1e-9.
        via = geo_to_local(p, o) + geo_to_local(q, GeoPoint(p.lat, p.lon, p.alt))
        assert direct[0] == pytest.approx(via[0], abs=1e-9)
        assert direct[1] == pytest.approx(via[1], abs=1e-9)
        assert direct[2] == pytest.approx(via[2], abs=1e-2)

    def test_geopoint_range_validation(self):
        with pytest.raises(ValidationError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(ValidationError):
            GeoPoint(0.0, -181.0)


class TestPoseConstruction:
    def test_north_forward(self):
        p = pose_from_angles([0, 0, 0], 0.0, 0.0)
        assert np.allclose(p.forward, [-1.0, 0.0, 0.0], atol=1e-15)

    def test_nadir_forward(self):
        p = pose_from_angles([0, 0, 0], 0.0, 90.0)
        assert np.allclose(p.forward, [0.0, 1.0, 0.0], atol=1e-15)

    def test_east_forward(self):
        p = pose_from_angles([0, 0, 0], 90.0, 0.0)
        assert np.allclose(p.forward, [0.0, 0.0, 1.0], atol=1e-15)

    def test_pose_from_geo_center(self):
        pose = pose_from_geo(GeoPoint(0.0, 0.0, 30.0), 45.0, 10.0, 0.0, ORIGIN)
        assert np.allclose(pose.center, [0.0, -30.0, 0.0], atol=1e-9)

    @given(st.floats(-180, 180), st.floats(-89, 89), st.floats(-180, 180))
    def test_rotation_always_orthonormal(self, yaw, pitch, roll):
        R = rotation_from_angles(yaw, pitch, roll)
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(R) - 1.0) < 1e-9

    def test_roll_spins_about_forward(self):
        a = pose_from_angles([0, 0, 0], 30.0, 20.0, 0.0)
        b = pose_from_angles([0, 0, 0], 30.0, 20.0, 45.0)
        assert np.allclose(a.forward, b.forward, atol=1e-12)
        assert not np.allclose(a.up, b.up)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValidationError):
            Pose(np.eye(3) * 1.001, np.zeros(3))

    def test_rejects_reflection(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValidationError):
            Pose(R, np.zeros(3))

    def test_apply_inverse_roundtrip(self, rng):
        pose = random_pose(rng)
        pts = rng.normal(size=(10, 3))
        assert np.allclose(pose.inverse_apply(pose.apply(pts)), pts, atol=1e-12)

    def test_center_matches_transform(self, rng):
        pose = random_pose(rng)
        assert np.allclose(pose.apply(pose.center), 0.0, atol=1e-12)


class TestRelativePose:
    def test_identity(self, rng):
        a = random_pose(rng)
        rel = relative_pose(a, a)
        assert np.abs(np.diag(rel.R) - 1.0).max() < 1e-12
        assert np.allclose(rel.t, 0.0, atol=1e-12)

    def test_group_inverse(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        ab = relative_pose(a, b)
        ba = relative_pose(b, a)
        R = ab.R @ ba.R
        t = ab.R @ ba.t + ab.t
        assert np.allclose(R, np.eye(3), atol=1e-12)
        assert np.allclose(t, 0.0, atol=1e-12)

    def test_homogeneous_matrix_oracle(self, rng):
        for _ in range(20):
            a, b = random_pose(rng), random_pose(rng)
            Ta = np.eye(4)
            Ta[:3, :3], Ta[:3, 3] = a.R, a.t
            Tb = np.eye(4)
            Tb[:3, :3], Tb[:3, 3] = b.R, b.t
            T = Tb @ np.linalg.inv(Ta)
            rel = relative_pose(a, b)
            assert np.allclose(rel.R, T[:3, :3], atol=1e-9)
            assert np.allclose(rel.t, T[:3, 3], atol=1e-9)


def _tri_sample(ground_alts, uav_alts, sat_alts):
    intr = Intrinsics(fx=10, fy=10, cu=5, cv=5, width=10, height=10)
    views = []
    for alt in sat_alts:
        views.append(ViewRecord(modality=SATELLITE,
                                pose=pose_from_angles([0, -alt, 0], 0, 90), rho=1.0))
    for alt in uav_alts:
        views.append(ViewRecord(modality=UAV,
                                pose=pose_from_angles([1, -alt, 2], 10, 45),
                                intrinsics=intr))
    for alt in ground_alts:
        views.append(ViewRecord(modality=GROUND,
                                pose=pose_from_angles([3, -alt, 4], 20, 0),
                                intrinsics=intr))
    return TriViewSample(views=tuple(views), origin=ORIGIN, meters_per_pixel_gt=1.0)


class TestRedefineAltitudes:
    def test_reference_is_lower_ground_camera(self):
        out = redefine_altitudes(_tri_sample([12.0, 15.0], [50.0, 80.0], [5726.0, 5726.0]))
        ys = [v.pose.center[1] for v in out.views]
        assert ys[4] == pytest.approx(0.0, abs=1e-9)   # 12 m camera
        assert ys[5] == pytest.approx(-3.0, abs=1e-9)  # 15 m camera

    def test_equal_ground_altitudes_tie(self):
        out = redefine_altitudes(_tri_sample([10.0, 10.0], [40.0, 60.0], [5726.0, 5726.0]))
        assert out.views[4].pose.center[1] == pytest.approx(0.0, abs=1e-9)
        assert out.views[5].pose.center[1] == pytest.approx(0.0, abs=1e-9)

    def test_satellite_height_override(self):
        out = redefine_altitudes(_tri_sample([12.0, 15.0], [50.0, 80.0], [5726.0, 5726.0]))
        for i in (0, 1):
            assert out.views[i].pose.center[1] == pytest.approx(-SATELLITE_HEIGHT_M, abs=1e-9)
        assert SATELLITE_HEIGHT_M == 150.0

    def test_preserves_rotations_and_horizontal_offsets(self):
        before = _tri_sample([12.0, 15.0], [50.0, 80.0], [5726.0, 5726.0])
        after = redefine_altitudes(before)
        for vb, va in zip(before.views, after.views):
            assert np.array_equal(vb.pose.R, va.pose.R)
        for i in (2, 3, 4, 5):
            for j in (2, 3, 4, 5):
                db = before.views[j].pose.center - before.views[i].pose.center
                da = after.views[j].pose.center - after.views[i].pose.center
                assert np.allclose(db[[0, 2]], da[[0, 2]], atol=1e-12)
                assert db[1] == pytest.approx(da[1], abs=1e-9)

    def test_modality_counts_enforced(self):
        intr = Intrinsics(fx=10, fy=10, cu=5, cv=5, width=10, height=10)
        views = tuple(
            ViewRecord(modality=GROUND, pose=Pose.identity(), intrinsics=intr)
            for _ in range(6)
        )
        with pytest.raises(StructuralError):
            TriViewSample(views=views, origin=ORIGIN, meters_per_pixel_gt=1.0)


class TestViewRecord:
    def test_satellite_needs_rho(self):
        with pytest.raises(ValidationError):
            ViewRecord(modality=SATELLITE, pose=Pose.identity())

    def test_perspective_rejects_rho(self):
        with pytest.raises(ValidationError):
            ViewRecord(modality=UAV, pose=Pose.identity(), rho=1.0)
