"""Batch evaluation and the classical localization pipeline tying the modules
together: merged-cloud reconstruction metrics, pose recalls, on-tile
localization, and registration-based localization of loaded samples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .align import Correspondence, CorrespondenceSet, estimate_rho, register_views
from .errors import StructuralError, ValidationError
from .frames import GROUND, SATELLITE, UAV, Pose
from .losses import optimal_scale_flat
from .metrics import (
    DELTA_THRESHOLDS_M,
    PCK_THRESHOLDS_M,
    LocEval,
    SampleMetrics,
    acc_mean,
    delta_ratio,
    kitti_decomposition,
    localization_eval,
    pck,
    pose_errors,
    recall_and_auc,
)
from .ortho import _wrap_deg
from .sampleio import LoadedSample


def tile_localization(cam_pose: Pose, sat_pose: Pose, rho, width, height):
    """(u, v, yaw) of a camera in a satellite view's pixel frame.

    Works for arbitrary (possibly non-nadir, predicted) satellite poses; for a
    north-aligned nadir tile the yaw equals the compass yaw.
    """
    p = sat_pose.apply(cam_pose.center)
    u = float(p[0] / rho + width / 2.0)
    v = float(p[1] / rho + height / 2.0)
    f = sat_pose.R @ cam_pose.forward
    if math.hypot(f[0], f[1]) < 1e-9:
        f = sat_pose.R @ cam_pose.up
    yaw = _wrap_deg(math.degrees(math.atan2(f[0], -f[1])))
    return u, v, yaw


@dataclass
class ModalityLoc:
    meter_errs: List[float] = field(default_factory=list)
    yaw_errs: List[float] = field(default_factory=list)
    pck: Dict[float, float] = field(default_factory=dict)


@dataclass
class SampleEvaluation:
    metrics: SampleMetrics
    pose_evals: list
    by_modality: Dict[str, ModalityLoc]


def _merged_cloud(loaded: LoadedSample, weights_from: LoadedSample):
    """All valid points expressed in view 0's frame, with inverse-depth weights
    taken from `weights_from` (the ground truth)."""
    pts_out, w_out = [], []
    for i, pm in enumerate(loaded.pointmaps):
        gt_pm = weights_from.pointmaps[i]
        if pm is None or gt_pm is None:
            continue
        mask = pm.valid & gt_pm.valid
        if not mask.any():
            continue
        local = pm.points[mask]
        world = loaded.poses[i].inverse_apply(local)
        pts_out.append(loaded.poses[0].apply(world))
        w_out.append(1.0 / np.maximum(gt_pm.points[mask][:, 2], 0.1))
    if not pts_out:
        raise StructuralError("no point maps to evaluate")
    return np.concatenate(pts_out), np.concatenate(w_out)


def evaluate_sample(gt: LoadedSample, pred: LoadedSample,
                    per_view_accmean=False) -> SampleEvaluation:
    """All metrics for one (prediction, ground truth) sample pair."""
    if len(gt.views) != len(pred.views) or any(
        a.modality != b.modality for a, b in zip(gt.views, pred.views)
    ):
        raise StructuralError("prediction and ground-truth views do not align")

    pred_pts, w = _merged_cloud(pred, gt)
    gt_pts, _ = _merged_cloud(gt, gt)
    s = optimal_scale_flat(pred_pts.ravel(), gt_pts.ravel(), np.repeat(w, 3))
    if per_view_accmean:
        accs, deltas = [], []
        offset = 0
        for i, pm in enumerate(pred.pointmaps):
            if pm is None or gt.pointmaps[i] is None:
                continue
            mask = pm.valid & gt.pointmaps[i].valid
            k = int(mask.sum())
            if k == 0:
                continue
            p_block = s * pred_pts[offset:offset + k]
            g_block = gt_pts[offset:offset + k]
            accs.append(acc_mean(p_block, g_block))
            deltas.append({t: delta_ratio(p_block, g_block, t) for t in DELTA_THRESHOLDS_M})
            offset += k
        acc = float(np.mean(accs))
        delta = {t: float(np.mean([d[t] for d in deltas])) for t in DELTA_THRESHOLDS_M}
    else:
        acc = acc_mean(s * pred_pts, gt_pts)
        delta = {t: delta_ratio(s * pred_pts, gt_pts, t) for t in DELTA_THRESHOLDS_M}

    evals = pose_errors(pred.poses, gt.poses)
    rra, rta, auc = recall_and_auc(evals)

    sat0 = gt.satellite_indices()[0]
    gt_sat_pose = gt.poses[sat0]
    pred_sat_pose = pred.poses[sat0]
    gt_rho = gt.rhos[sat0]
    pred_rho = pred.rhos.get(sat0, gt_rho)
    width = gt.meta["views"][sat0]["width"]
    height = gt.meta["views"][sat0]["height"]
    m_px = gt.meters_per_pixel

    by_mod = {GROUND: ModalityLoc(), UAV: ModalityLoc()}
    uv_pred = {GROUND: [], UAV: []}
    uv_gt = {GROUND: [], UAV: []}
    kitti_acc = []
    for i, view in enumerate(gt.views):
        if view.modality == SATELLITE:
            continue
        g_loc = tile_localization(gt.poses[i], gt_sat_pose, gt_rho, width, height)
        p_loc = tile_localization(pred.poses[i], pred_sat_pose, pred_rho, width, height)
        ev = localization_eval(p_loc, g_loc, m_px)
        by_mod[view.modality].meter_errs.append(ev.meter_err)
        by_mod[view.modality].yaw_errs.append(ev.yaw_err)
        uv_pred[view.modality].append(p_loc[:2])
        uv_gt[view.modality].append(g_loc[:2])
        if view.modality == GROUND:
            g_pos = np.array([(g_loc[0] - width / 2) * m_px, (g_loc[1] - height / 2) * m_px])
            p_pos = np.array([(p_loc[0] - width / 2) * m_px, (p_loc[1] - height / 2) * m_px])
            yaw_rad = math.radians(g_loc[2])
            heading = np.array([math.sin(yaw_rad), -math.cos(yaw_rad)])
            kitti_acc.append(kitti_decomposition(p_pos, g_pos, heading, p_loc[2], g_loc[2]))

    for mod in (GROUND, UAV):
        if uv_pred[mod]:
            by_mod[mod].pck = {
                t: pck(uv_pred[mod], uv_gt[mod], t, m_px) for t in PCK_THRESHOLDS_M
            }

    all_uv_pred = uv_pred[GROUND] + uv_pred[UAV]
    all_uv_gt = uv_gt[GROUND] + uv_gt[UAV]
    pck_all = {t: pck(all_uv_pred, all_uv_gt, t, m_px) for t in PCK_THRESHOLDS_M}

    def _recall(kind):
        if not kitti_acc:
            return None
        keys = kitti_acc[0][kind].keys()
        return {k: float(np.mean([float(f[kind][k]) for f in kitti_acc])) for k in keys}

    meters = by_mod[GROUND].meter_errs + by_mod[UAV].meter_errs
    yaws = by_mod[GROUND].yaw_errs + by_mod[UAV].yaw_errs
    metrics = SampleMetrics(
        acc_mean=acc, delta=delta, rra=rra, rta=rta, auc30=auc, pck=pck_all,
        meter_errs=meters, yaw_errs=yaws,
        lat_recall=_recall("lat"), lon_recall=_recall("lon"), ori_recall=_recall("ori"),
    )
    return SampleEvaluation(metrics=metrics, pose_evals=evals, by_modality=by_mod)


def localize_sample(loaded: LoadedSample, drop_modality: Optional[str] = None):
    """Register all (remaining) views into the first satellite view's frame,
    estimate rho from the satellite point map, and place every camera on the
    tile. Returns per-camera (u, v, yaw), rho, and the registration."""
    if drop_modality is not None:
        if drop_modality not in (GROUND, UAV):
            raise ValidationError(f"cannot drop modality {drop_modality!r}")
        keep = [i for i, v in enumerate(loaded.views) if v.modality != drop_modality]
        if len(keep) == len(loaded.views):
            raise StructuralError(f"sample has no {drop_modality} views to drop")
    else:
        keep = list(range(len(loaded.views)))
    remap = {old: new for new, old in enumerate(keep)}

    sat0 = loaded.satellite_indices()[0]
    pms = [loaded.pointmaps[i] for i in keep]
    if any(pm is None for pm in pms):
        raise StructuralError("sample is missing point maps required for localization")
    if loaded.correspondences is None:
        raise StructuralError("sample has no correspondences")
    pairs = [
        Correspondence(view_a=remap[c.view_a], pixel_a=c.pixel_a,
                       view_b=remap[c.view_b], pixel_b=c.pixel_b,
                       point_a=c.point_a, point_b=c.point_b)
        for c in loaded.correspondences.pairs
        if c.view_a in remap and c.view_b in remap
    ]
    corr = CorrespondenceSet(pairs=pairs, source=loaded.correspondences.source)
    transforms = register_views(pms, corr, reference=remap[sat0])

    sat_pm = loaded.pointmaps[sat0]
    width = loaded.meta["views"][sat0]["width"]
    height = loaded.meta["views"][sat0]["height"]
    rows, cols = np.nonzero(sat_pm.valid)
    rho = estimate_rho(
        sat_pm.points[rows, cols][:, :2],
        np.stack([cols + 0.5, rows + 0.5], axis=1),
        (width / 2.0, height / 2.0),
    )

    cameras = []
    for old in keep:
        tr = transforms[remap[old]]
        u = float(tr.t[0] / rho + width / 2.0)
        v = float(tr.t[1] / rho + height / 2.0)
        f = tr.R @ np.array([0.0, 0.0, 1.0])
        if math.hypot(f[0], f[1]) < 1e-9:
            f = tr.R @ np.array([0.0, -1.0, 0.0])
        yaw = _wrap_deg(math.degrees(math.atan2(f[0], -f[1])))
        cameras.append({
            "view": loaded.views[old].name or f"view{old}",
            "index": old,
            "modality": loaded.views[old].modality,
            "u": u, "v": v, "yaw": yaw,
        })
    return {"rho": rho, "cameras": cameras, "transforms": transforms,
            "reference": sat0, "kept": keep}
