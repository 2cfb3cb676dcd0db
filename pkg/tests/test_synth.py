"""Tests for the analytic scene renderer, sample assembly, and corruption."""

import math

import numpy as np
import pytest

from crossview.errors import StructuralError, ValidationError
from crossview.evaluate import tile_localization
from crossview.frames import (
    GROUND,
    SATELLITE,
    UAV,
    Intrinsics,
    pose_from_angles,
)
from crossview.ortho import SatTile
from crossview.pairing import overlap_score, voxelize
from crossview.synth import (
    GROUND_PITCH_JITTER_DEG,
    UAV_HIGH_PITCH_BAND,
    UAV_HIGH_PITCH_PROB,
    CaptureConfig,
    NoiseSpec,
    SceneSpec,
    first_hit,
    make_sample,
    perturb,
    random_scene,
    render_depth,
    render_ortho,
    rotation_about_axis,
)

FLAT = SceneSpec()  # ground plane y = 0, no boxes


def nadir_intrinsics(px=5, fov=60.0):
    f = (px / 2.0) / math.tan(math.radians(fov / 2.0))
    return Intrinsics(fx=f, fy=f, cu=px / 2.0, cv=px / 2.0, width=px, height=px)


class TestRenderDepth:
    def test_nadir_flat_plane_depth_is_altitude(self):
        # Depth is camera-frame z, so every pixel of a nadir view over a flat
        # plane reads exactly the altitude (not altitude / cos of the ray).
        pose = pose_from_angles([0.0, -50.0, 0.0], 0.0, 90.0)
        depth = render_depth(FLAT, pose, nadir_intrinsics())
        assert depth.valid.all()
        assert np.array_equal(depth.values, np.full((5, 5), 50.0))

    def test_center_pixel_exact(self):
        # Odd width puts a pixel center on the principal axis.
        pose = pose_from_angles([3.0, -77.0, -4.0], 33.0, 90.0)
        depth = render_depth(FLAT, pose, nadir_intrinsics(px=5))
        assert depth.values[2, 2] == 77.0

    def test_box_top_depth(self):
        scene = SceneSpec(boxes=(([-2.0, -1.0, -2.0], [2.0, 0.0, 2.0]),))
        pose = pose_from_angles([0.0, -50.0, 0.0], 0.0, 90.0)
        depth = render_depth(scene, pose, nadir_intrinsics(px=5, fov=2.0))
        # Narrow FoV: the whole image sits on the unit-height box top.
        assert np.array_equal(depth.values, np.full((5, 5), 49.0))

    def test_sky_pixels_invalid(self):
        # A horizontal ground camera sees sky in the upper half.
        pose = pose_from_angles([0.0, -1.7, 0.0], 0.0, 0.0)
        depth = render_depth(FLAT, pose, nadir_intrinsics(px=8))
        assert not depth.valid[0].any()
        assert depth.valid[7].all()
        assert np.isnan(depth.values[0, 0])


class TestRenderOrtho:
    def _tile(self, px=10, rho=1.0, alt=150.0):
        pose = pose_from_angles([0.0, -alt, 0.0], 0.0, 90.0)
        return SatTile(width=px, height=px, rho=rho, pose=pose)

    def test_flat_plane(self):
        depth = render_ortho(FLAT, self._tile())
        assert np.array_equal(depth.values, np.full((10, 10), 150.0))

    def test_box_footprint(self):
        scene = SceneSpec(boxes=(([-3.0, -10.0, -3.0], [3.0, 0.0, 3.0]),))
        depth = render_ortho(scene, self._tile())
        on_box = np.isclose(depth.values, 140.0)
        off_box = np.isclose(depth.values, 150.0)
        assert (on_box | off_box).all()
        # 6 m box footprint at 1 m/px covers a 6 x 6 pixel block.
        assert on_box.sum() == 36


class TestFirstHit:
    def test_plane_hit_distance(self):
        t = first_hit(FLAT, np.array([0.0, -10.0, 0.0]), np.array([0.0, 1.0, 0.0]))
        assert t == 10.0

    def test_miss_is_inf(self):
        t = first_hit(FLAT, np.array([0.0, -10.0, 0.0]), np.array([0.0, -1.0, 0.0]))
        assert np.isinf(t)

    def test_box_before_plane(self):
        scene = SceneSpec(boxes=(([-1.0, -5.0, -1.0], [1.0, 0.0, 1.0]),))
        t = first_hit(scene, np.array([0.0, -10.0, 0.0]), np.array([0.0, 1.0, 0.0]))
        assert t == 5.0

    def test_axis_parallel_ray_inside_slab(self):
        scene = SceneSpec(boxes=(([-1.0, -5.0, -1.0], [1.0, 0.0, 1.0]),))
        # Horizontal ray through the box from outside.
        t = first_hit(scene, np.array([-10.0, -2.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        assert t == 9.0


class TestSceneSpec:
    def test_plane_height(self):
        scene = random_scene(seed=9)
        x, z = 5.0, -3.0
        y = scene.plane_height(x, z)
        assert abs((np.array([x, y, z]) - scene.plane_point) @ scene.plane_normal) < 1e-9

    def test_translation(self):
        scene = random_scene(seed=9)
        moved = scene.translated([0.0, -2.0, 0.0])
        assert moved.plane_height(0.0, 0.0) == pytest.approx(
            scene.plane_height(0.0, 0.0) - 2.0)

    def test_box_below_plane_rejected(self):
        with pytest.raises(ValidationError):
            SceneSpec(boxes=(([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]),))

    def test_excess_tilt_rejected(self):
        with pytest.raises(ValidationError):
            SceneSpec(plane_normal=[1.0, -1.0, 0.0])

    def test_bad_pitch_range_rejected(self):
        with pytest.raises(ValidationError):
            CaptureConfig(uav_pitch_range=(10.0, 95.0))


class TestMakeSample:
    def test_modality_layout(self):
        synth = make_sample(random_scene(seed=0), seed=0)
        mods = [v.modality for v in synth.sample.views]
        assert mods == [SATELLITE, SATELLITE, UAV, UAV, GROUND, GROUND]
        assert sorted(synth.tiles) == [0, 1]

    def test_satellite_height_and_rho(self):
        synth = make_sample(random_scene(seed=1), seed=3)
        for i in (0, 1):
            assert synth.sample.views[i].pose.center[1] == -150.0
        assert synth.sample.meters_per_pixel_gt == 300.0 / 96.0
        cfg = CaptureConfig(tile_px=512)
        synth = make_sample(random_scene(seed=1), cfg, seed=3)
        assert synth.sample.meters_per_pixel_gt == 0.5859375

    def test_bitwise_deterministic(self):
        a = make_sample(random_scene(seed=4), seed=8)
        b = make_sample(random_scene(seed=4), seed=8)
        for pa, pb in zip(a.poses, b.poses):
            assert np.array_equal(pa.R, pb.R) and np.array_equal(pa.t, pb.t)
        for ma, mb in zip(a.pointmaps, b.pointmaps):
            assert np.array_equal(ma.points, mb.points, equal_nan=True)
        assert len(a.correspondences.pairs) == len(b.correspondences.pairs)
        for ca, cb in zip(a.correspondences.pairs, b.correspondences.pairs):
            assert ca.pixel_a == cb.pixel_a and ca.pixel_b == cb.pixel_b
            assert np.array_equal(ca.point_a, cb.point_a)

    def test_correspondences_reproject_exactly(self):
        synth = make_sample(random_scene(seed=6), seed=2)
        tiles = synth.tiles
        views = synth.sample.views

        def project(view_idx, p_local):
            v = views[view_idx]
            if v.modality == SATELLITE:
                tile = tiles[view_idx]
                return (p_local[0] / tile.rho + tile.width / 2.0,
                        p_local[1] / tile.rho + tile.height / 2.0)
            intr = v.intrinsics
            return (intr.fx * p_local[0] / p_local[2] + intr.cu,
                    intr.fy * p_local[1] / p_local[2] + intr.cv)

        assert len(synth.correspondences.pairs) > 100
        for c in synth.correspondences.pairs:
            ua, va = project(c.view_a, c.point_a)
            ub, vb = project(c.view_b, c.point_b)
            assert abs(ua - c.pixel_a[0]) < 1e-9 and abs(va - c.pixel_a[1]) < 1e-9
            assert abs(ub - c.pixel_b[0]) < 1e-9 and abs(vb - c.pixel_b[1]) < 1e-9

    def test_correspondence_points_agree_in_world(self):
        synth = make_sample(random_scene(seed=6), seed=2)
        poses = synth.poses
        for c in synth.correspondences.pairs:
            wa = poses[c.view_a].inverse_apply(c.point_a)
            wb = poses[c.view_b].inverse_apply(c.point_b)
            assert np.allclose(wa, wb, atol=1e-6)

    def test_all_pairwise_voxel_overlaps(self):
        synth = make_sample(random_scene(seed=0), seed=1)
        world_voxels = []
        for pm, pose in zip(synth.pointmaps, synth.poses):
            pts = pose.inverse_apply(pm.points[pm.valid])
            world_voxels.append(voxelize(pts))
        n = len(world_voxels)
        for i in range(n):
            for j in range(i + 1, n):
                assert overlap_score(world_voxels[i], world_voxels[j]) > 0

    def test_pitch_constants_and_ranges(self):
        assert UAV_HIGH_PITCH_BAND == (60.0, 90.0)
        assert UAV_HIGH_PITCH_PROB == pytest.approx(2.0 / 3.0)
        assert GROUND_PITCH_JITTER_DEG == 5.0
        for seed in range(10):
            synth = make_sample(random_scene(seed=seed), seed=seed)
            for i in (2, 3):  # UAV views
                f = synth.poses[i].forward
                pitch = math.degrees(math.asin(np.clip(f[1], -1, 1)))
                assert 0.0 <= pitch <= 90.0 + 1e-9

    def test_ground_anchored_at_zero(self):
        synth = make_sample(random_scene(seed=3), seed=5)
        cfg = CaptureConfig()
        ground_y = [synth.poses[i].center[1] for i in (4, 5)]
        # The lower ground camera sits exactly ground_height below y = 0
        # terrain after re-anchoring.
        assert max(ground_y) <= 0.0
        heights = [synth.scene.plane_height(synth.poses[i].center[0],
                                            synth.poses[i].center[2])
                   for i in (4, 5)]
        for y, h in zip(ground_y, heights):
            assert y == pytest.approx(h - cfg.ground_height, abs=1e-9)


class TestPerturb:
    def test_zero_noise_bitwise_identity(self):
        synth = make_sample(random_scene(seed=2), seed=6)
        bundle = perturb(synth, NoiseSpec(), seed=0)
        for pp, gp in zip(bundle.poses, synth.poses):
            assert np.array_equal(pp.R, gp.R)
            assert np.array_equal(pp.t, gp.t)
        for pm, gm in zip(bundle.pointmaps, synth.pointmaps):
            assert np.array_equal(pm.points, gm.points, equal_nan=True)
        for i, tile in synth.tiles.items():
            assert bundle.rhos[i] == tile.rho
        for pc, gc in zip(bundle.correspondences.pairs, synth.correspondences.pairs):
            assert np.array_equal(pc.point_a, gc.point_a)
            assert np.array_equal(pc.point_b, gc.point_b)

    def test_deterministic_translation_injection(self):
        # A 1 m world-x offset of a ground camera maps to exactly 1 m of
        # on-tile localization error.
        synth = make_sample(random_scene(seed=1), seed=9)
        noise = NoiseSpec(sigma_trans_m=1.0, trans_direction=(1.0, 0.0, 0.0))
        bundle = perturb(synth, noise, seed=0, view_subset=[4])
        moved = bundle.poses[4].center - synth.poses[4].center
        assert np.allclose(moved, [1.0, 0.0, 0.0], atol=1e-12)

        tile = synth.tiles[0]
        gt_u, gt_v, gt_yaw = tile_localization(synth.poses[4], tile.pose,
                                               tile.rho, tile.width, tile.height)
        pu, pv, pyaw = tile_localization(bundle.poses[4], tile.pose,
                                         tile.rho, tile.width, tile.height)
        meter_err = tile.rho * math.hypot(pu - gt_u, pv - gt_v)
        assert meter_err == pytest.approx(1.0, abs=1e-9)
        assert pyaw == pytest.approx(gt_yaw, abs=1e-9)

    def test_deterministic_rotation_injection(self):
        # 10 degrees about the world up axis turns into exactly 10 degrees of
        # on-tile yaw error for a ground camera.
        synth = make_sample(random_scene(seed=1), seed=9)
        noise = NoiseSpec(sigma_rot_deg=10.0, rot_axis=(0.0, -1.0, 0.0))
        bundle = perturb(synth, noise, seed=0, view_subset=[5])
        tile = synth.tiles[0]
        _, _, gt_yaw = tile_localization(synth.poses[5], tile.pose,
                                         tile.rho, tile.width, tile.height)
        _, _, pyaw = tile_localization(bundle.poses[5], tile.pose,
                                       tile.rho, tile.width, tile.height)
        err = abs((pyaw - gt_yaw + 180.0) % 360.0 - 180.0)
        assert err == pytest.approx(10.0, abs=1e-6)
        assert bundle.injected[5]["rot_angle_deg"] == 10.0

    def test_point_noise_respects_mask(self):
        synth = make_sample(random_scene(seed=2), seed=6)
        bundle = perturb(synth, NoiseSpec(sigma_point_m=0.1), seed=3)
        for pm, gm in zip(bundle.pointmaps, synth.pointmaps):
            assert np.array_equal(pm.valid, gm.valid)
            if (~gm.valid).any():
                assert np.isnan(pm.points[~gm.valid]).all()

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValidationError):
            NoiseSpec(sigma_rot_deg=-1.0)

    def test_rotation_about_axis_oracle(self):
        R = rotation_about_axis([0.0, 0.0, 1.0], 90.0)
        assert np.allclose(R @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
