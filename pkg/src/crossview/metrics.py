"""Evaluation metrics: reconstruction accuracy, pose recalls/AUC, localization,
PCK, and the KITTI lateral/longitudinal/orientation decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInputError, StructuralError
from .frames import relative_pose

DELTA_THRESHOLDS_M = (0.5, 1.0, 2.0)
POSE_THRESHOLDS_DEG = (5.0, 15.0, 25.0)
AUC_MAX_DEG = 30.0
PCK_THRESHOLDS_M = (2.0, 5.0)
KITTI_POS_THRESHOLDS_M = (1.0, 3.0, 5.0)
KITTI_ORI_THRESHOLDS_DEG = (1.0, 3.0)
KITTI_METERS_PER_PIXEL = 0.20


@dataclass(frozen=True)
class PoseEval:
    """Relative rotation / translation-direction errors of one ordered view pair."""

    rot_err: float
    trans_dir_err: float


@dataclass(frozen=True)
class LocEval:
    """On-tile localization errors of one camera."""

    meter_err: float
    yaw_err: float


@dataclass
class MetricsReport:
    """Aggregated metrics over a batch of samples."""

    acc_mean: float = math.nan
    delta: Dict[float, float] = field(default_factory=dict)
    rra: Dict[float, float] = field(default_factory=dict)
    rta: Dict[float, float] = field(default_factory=dict)
    auc30: float = math.nan
    pck: Dict[float, float] = field(default_factory=dict)
    meter_mean: float = math.nan
    meter_median: float = math.nan
    yaw_mean: float = math.nan
    yaw_median: float = math.nan
    lat_recall: Dict[float, float] = field(default_factory=dict)
    lon_recall: Dict[float, float] = field(default_factory=dict)
    ori_recall: Dict[float, float] = field(default_factory=dict)


@dataclass
class SampleMetrics:
    """Per-sample inputs to aggregate(); leave fields as None when unmeasured."""

    acc_mean: Optional[float] = None
    delta: Optional[Dict[float, float]] = None
    rra: Optional[Dict[float, float]] = None
    rta: Optional[Dict[float, float]] = None
    auc30: Optional[float] = None
    pck: Optional[Dict[float, float]] = None
    meter_errs: Sequence[float] = ()
    yaw_errs: Sequence[float] = ()
    lat_recall: Optional[Dict[float, float]] = None
    lon_recall: Optional[Dict[float, float]] = None
    ori_recall: Optional[Dict[float, float]] = None


def _nn_dists(pred_pts, gt_pts):
    pred = np.atleast_2d(np.asarray(pred_pts, dtype=float))
    gt = np.atleast_2d(np.asarray(gt_pts, dtype=float))
    if pred.size == 0 or gt.size == 0:
        raise DegenerateInputError("empty point set")
    dists, _ = cKDTree(gt).query(pred)
    return np.atleast_1d(dists)


def acc_mean(pred_pts, gt_pts):
    """Mean nearest-neighbor distance from predicted to ground-truth points."""
    return float(_nn_dists(pred_pts, gt_pts).mean())


def delta_ratio(pred_pts, gt_pts, tau):
    """Fraction of predicted points with nearest-neighbor distance below tau."""
    return float((_nn_dists(pred_pts, gt_pts) < tau).mean())


def pose_errors(pred, gt):
    """Rotation and translation-direction errors over all ordered view pairs."""
    if len(pred) < 2 or len(pred) != len(gt):
        raise StructuralError("need >= 2 aligned poses")
    n = len(pred)
    out = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            rp = relative_pose(pred[i], pred[j])
            rg = relative_pose(gt[i], gt[j])
            if np.array_equal(rp.R, rg.R):
                rot_err = 0.0
            else:
                tr = np.clip((np.trace(rp.R @ rg.R.T) - 1.0) / 2.0, -1.0, 1.0)
                rot_err = math.degrees(math.acos(tr))
            np_ = np.linalg.norm(rp.t)
            ng = np.linalg.norm(rg.t)
            if np_ < 1e-9 and ng < 1e-9:
                t_err = 0.0
            elif np_ < 1e-9 or ng < 1e-9:
                t_err = 180.0
            elif np.array_equal(rp.t, rg.t):
                t_err = 0.0
            else:
                cos = np.clip(rp.t @ rg.t / (np_ * ng), -1.0, 1.0)
                t_err = math.degrees(math.acos(cos))
            out.append(PoseEval(rot_err=rot_err, trans_dir_err=t_err))
    return out


def recall_and_auc(evals, thetas=POSE_THRESHOLDS_DEG, auc_max=AUC_MAX_DEG):
    """Rotation/translation recalls at each threshold and the normalized AUC of
    the combined accuracy curve (max of the two errors), trapezoid at 0.1 deg."""
    if not evals:
        raise StructuralError("no pose evaluations")
    rot = np.array([e.rot_err for e in evals])
    trans = np.array([e.trans_dir_err for e in evals])
    combined = np.maximum(rot, trans)
    rra = {float(th): float((rot < th).mean()) for th in thetas}
    rta = {float(th): float((trans < th).mean()) for th in thetas}
    ts = np.arange(0.0, auc_max + 1e-12, 0.1)
    acc = np.array(
        [(combined < (1e-12 if t == 0.0 else t)).mean() for t in ts]
    )
    auc = float(np.trapezoid(acc, ts) / auc_max)
    return rra, rta, auc


def wrapped_yaw_err(pred_yaw, gt_yaw):
    """Absolute angular difference wrapped into [0, 180] degrees."""
    return abs((pred_yaw - gt_yaw + 180.0) % 360.0 - 180.0)


def localization_eval(pred, gt, m_per_px):
    """On-tile localization error of one camera: (u, v, yaw) triplets in, meters
    and wrapped yaw degrees out."""
    if m_per_px <= 0:
        raise DegenerateInputError("meters-per-pixel must be positive")
    du = pred[0] - gt[0]
    dv = pred[1] - gt[1]
    return LocEval(
        meter_err=float(m_per_px * math.hypot(du, dv)),
        yaw_err=float(wrapped_yaw_err(pred[2], gt[2])),
    )


def pck(pred_locs, gt_locs, tau, m_per_px):
    """Fraction of on-tile points within tau meters of ground truth (ties count)."""
    pred = np.atleast_2d(np.asarray(pred_locs, dtype=float))
    gt = np.atleast_2d(np.asarray(gt_locs, dtype=float))
    if pred.shape != gt.shape or pred.size == 0:
        raise StructuralError("pred and gt location lists must align and be non-empty")
    d = m_per_px * np.linalg.norm(pred - gt, axis=1)
    return float((d <= tau).mean())


def kitti_decomposition(pred_pos, gt_pos, gt_heading, pred_yaw, gt_yaw,
                        pos_thresholds=KITTI_POS_THRESHOLDS_M,
                        ori_thresholds=KITTI_ORI_THRESHOLDS_DEG):
    """Lateral/longitudinal recall flags and orientation flags (KITTI protocol)."""
    heading = np.asarray(gt_heading, dtype=float)
    norm = np.linalg.norm(heading)
    if norm < 1e-9:
        raise DegenerateInputError("zero heading vector")
    heading = heading / norm
    perp = np.array([-heading[1], heading[0]])
    d = np.asarray(pred_pos, dtype=float) - np.asarray(gt_pos, dtype=float)
    lon_err = abs(float(d @ heading))
    lat_err = abs(float(d @ perp))
    yaw_err = wrapped_yaw_err(pred_yaw, gt_yaw)
    return {
        "lat": {float(t): lat_err < t for t in pos_thresholds},
        "lon": {float(t): lon_err < t for t in pos_thresholds},
        "ori": {float(t): yaw_err < t for t in ori_thresholds},
    }


def exact_median(values):
    """Median by exact order statistics; even counts average the two middles."""
    v = sorted(values)
    if not v:
        raise StructuralError("median of empty sequence")
    n = len(v)
    mid = n // 2
    if n % 2:
        return float(v[mid])
    return 0.5 * (v[mid - 1] + v[mid])


def _mean_of(key, samples):
    vals = [getattr(s, key) for s in samples if getattr(s, key) is not None]
    if not vals:
        return math.nan
    return float(np.mean(vals))


def _mean_dict(key, samples):
    dicts = [getattr(s, key) for s in samples if getattr(s, key) is not None]
    if not dicts:
        return {}
    keys = dicts[0].keys()
    return {k: float(np.mean([d[k] for d in dicts])) for k in keys}


def aggregate(samples: Sequence[SampleMetrics]) -> MetricsReport:
    """Means over samples for fractions, mean + exact median for error lists."""
    if not samples:
        raise StructuralError("no samples to aggregate")
    meters = [e for s in samples for e in s.meter_errs]
    yaws = [e for s in samples for e in s.yaw_errs]
    return MetricsReport(
        acc_mean=_mean_of("acc_mean", samples),
        delta=_mean_dict("delta", samples),
        rra=_mean_dict("rra", samples),
        rta=_mean_dict("rta", samples),
        auc30=_mean_of("auc30", samples),
        pck=_mean_dict("pck", samples),
        meter_mean=float(np.mean(meters)) if meters else math.nan,
        meter_median=exact_median(meters) if meters else math.nan,
        yaw_mean=float(np.mean(yaws)) if yaws else math.nan,
        yaw_median=exact_median(yaws) if yaws else math.nan,
        lat_recall=_mean_dict("lat_recall", samples),
        lon_recall=_mean_dict("lon_recall", samples),
        ori_recall=_mean_dict("ori_recall", samples),
    )
