"""The four training-loss terms with closed-form optimal scale and analytic gradients.

All reductions run in fixed row-major order so results are bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, StructuralError, ValidationError
from .frames import Pose, relative_pose

DEPTH_WEIGHT_FLOOR_M = 0.1
CONF_CLAMP = 1e-7
DEFAULT_CONF_EPS = 0.1
DEFAULT_HUBER_DELTA = 0.1
SCALE_CLAMP = 1e-6
_RATIO_EPS = 1e-9


@dataclass
class PointMap:
    """Per-pixel 3-D points (H x W x 3) with a validity mask."""

    points: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ValidationError(f"points must be H x W x 3, got {self.points.shape}")
        if self.valid is None:
            self.valid = np.isfinite(self.points).all(axis=2)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.points.shape[:2]:
                raise ValidationError("valid mask shape does not match points")

    @property
    def shape(self):
        return self.points.shape[:2]


@dataclass
class ConfMap:
    """Per-pixel confidence in (0, 1); clamped away from the endpoints."""

    conf: np.ndarray

    def __post_init__(self):
        conf = np.asarray(self.conf, dtype=float)
        self.conf = np.clip(conf, CONF_CLAMP, 1.0 - CONF_CLAMP)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the normal, confidence, and camera terms."""

    lambda_n: float = 1.0
    lambda_c: float = 0.05
    lambda_p: float = 0.1

    def __post_init__(self):
        if min(self.lambda_n, self.lambda_c, self.lambda_p) < 0:
            raise ValidationError("loss weights must be non-negative")


def depth_weights(gt: PointMap):
    """Inverse ground-truth-depth pixel weights with a floor."""
    z = gt.points[..., 2]
    return 1.0 / np.maximum(z, DEPTH_WEIGHT_FLOOR_M)


def optimal_scale_flat(p_hat, p, wc):
    """Global scale minimizing sum(wc * |s*p_hat - p|) over flat coordinate
    arrays.

    Exact solution: weighted median of per-coordinate ratios p/p_hat with
    weights wc * |p_hat|; coordinates with |p_hat| <= 1e-9 are excluded.
    Clamped positive at 1e-6.
    """
    p_hat = np.asarray(p_hat, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    wc = np.asarray(wc, dtype=float).ravel()
    usable = np.abs(p_hat) > _RATIO_EPS
    p_hat = p_hat[usable]
    if p_hat.size == 0:
        raise DegenerateInputError("no valid coordinates with nonzero prediction")
    ratios = p[usable] / p_hat
    weights = wc[usable] * np.abs(p_hat)

    order = np.argsort(ratios, kind="stable")
    ratios = ratios[order]
    weights = weights[order]
    csum = np.cumsum(weights)
    idx = int(np.searchsorted(csum, 0.5 * csum[-1]))
    return max(float(ratios[idx]), SCALE_CLAMP)


def optimal_scale(pred: PointMap, gt: PointMap, w=None):
    """Optimal L1 scale between two point maps over jointly valid pixels,
    weighted by inverse ground-truth depth unless w is given."""
    if w is None:
        w = depth_weights(gt)
    w = np.asarray(w, dtype=float)
    mask = pred.valid & gt.valid
    return optimal_scale_flat(
        pred.points[mask].ravel(), gt.points[mask].ravel(), np.repeat(w[mask], 3)
    )


def loss_geo(pred: PointMap, gt: PointMap):
    """Scale-invariant depth-weighted L1 point-map loss and its gradient.

    The gradient is taken at the optimal scale held fixed (envelope theorem;
    the weighted median is locally constant away from its defining ratio).
    """
    w = depth_weights(gt)
    s = optimal_scale(pred, gt, w)
    mask = pred.valid & gt.valid
    if not mask.any():
        raise DegenerateInputError("no jointly valid pixels")
    resid = np.where(mask[..., None], s * pred.points - gt.points, 0.0)
    w_masked = np.where(mask, w, 0.0)
    w_sum = float(w_masked.sum())
    value = float((w_masked[..., None] * np.abs(resid)).sum() / w_sum)
    grad = (w_masked[..., None] * s * np.sign(resid)) / w_sum
    grad[~mask] = 0.0
    return value, grad


def normals_from_pointmap(P: PointMap):
    """Forward-difference surface normals: normalize((P(i,j+1)-P) x (P(i+1,j)-P)).

    The last row and column are invalid, as are pixels with any invalid
    operand or a near-zero cross product.
    """
    h, w = P.shape
    if h < 2 or w < 2:
        raise ValidationError("point map must be at least 2 x 2")
    pts = P.points
    du = pts[:-1, 1:] - pts[:-1, :-1]
    dv = pts[1:, :-1] - pts[:-1, :-1]
    n = np.cross(du, dv)
    norm = np.linalg.norm(n, axis=2)
    ok = (
        P.valid[:-1, :-1]
        & P.valid[:-1, 1:]
        & P.valid[1:, :-1]
        & (norm > 1e-12)
    )
    normals = np.zeros((h, w, 3))
    valid = np.zeros((h, w), dtype=bool)
    safe = np.where(ok, norm, 1.0)
    normals[:-1, :-1] = np.where(ok[..., None], n / safe[..., None], 0.0)
    valid[:-1, :-1] = ok
    return normals, valid


def loss_norm(pred: PointMap, gt: PointMap):
    """Mean (1 - cos) angular discrepancy between predicted and GT normals."""
    n_pred, v_pred = normals_from_pointmap(pred)
    n_gt, v_gt = normals_from_pointmap(gt)
    mask = v_pred & v_gt
    if not mask.any():
        raise DegenerateInputError("no jointly valid normals")
    cos = (n_pred[mask] * n_gt[mask]).sum(axis=1)
    return float(np.mean(1.0 - cos))


def loss_conf(conf: ConfMap, pred: PointMap, gt: PointMap, eps=DEFAULT_CONF_EPS):
    """Binary cross-entropy on the confidence map; target 1 where the scaled
    reconstruction error falls below eps."""
    s = optimal_scale(pred, gt)
    mask = pred.valid & gt.valid
    err = np.linalg.norm(s * pred.points - gt.points, axis=2)
    target = (err < eps).astype(float)
    c = conf.conf
    bce = -(target * np.log(c) + (1.0 - target) * np.log(1.0 - c))
    return float(bce[mask].mean())


def _huber(r, delta):
    if r <= delta:
        return 0.5 * r * r
    return delta * (r - 0.5 * delta)


def _huber_slope_over_r(r, delta):
    """H'(r)/r, with the r -> 0 limit of 1 in the quadratic region."""
    if r <= delta:
        return 1.0
    return delta / r


def loss_cam(pred, gt, huber_delta=DEFAULT_HUBER_DELTA):
    """Relative-pose loss over all ordered view pairs.

    Rotation: geodesic angle between relative rotations. Translation: Huber
    norm of the residual after a single global least-squares scale aligning
    predicted to GT relative translations. Returns the scalar loss and its
    gradient w.r.t. the predicted per-view translations (including the
    dependence of the global scale on them).
    """
    if len(pred) < 2 or len(pred) != len(gt):
        raise StructuralError("need >= 2 aligned poses")
    n = len(pred)
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]

    rel_rot = []
    u_hat = []  # predicted relative translations
    u_gt = []
    rot_terms = []
    for i, j in pairs:
        rp = relative_pose(pred[i], pred[j])
        rg = relative_pose(gt[i], gt[j])
        u_hat.append(rp.t)
        u_gt.append(rg.t)
        rel_rot.append(rp.R)
        tr = np.clip((np.trace(rp.R @ rg.R.T) - 1.0) / 2.0, -1.0, 1.0)
        rot_terms.append(float(np.arccos(tr)))
    u_hat = np.array(u_hat)
    u_gt = np.array(u_gt)

    denom = float((u_hat * u_hat).sum())
    num = float((u_hat * u_gt).sum())
    clamped = denom <= 0 or num / denom <= SCALE_CLAMP
    s = SCALE_CLAMP if clamped else num / denom

    P = len(pairs)
    resid = s * u_hat - u_gt
    r_norm = np.linalg.norm(resid, axis=1)
    value = float(np.mean([rt + _huber(r, huber_delta) for rt, r in zip(rot_terms, r_norm)]))

    # Gradient of the translation term w.r.t. predicted per-view translations.
    # u_p = t_j - R_rel t_i, so d u_p / d t_j = I and d u_p / d t_i = -R_rel.
    c = np.array([_huber_slope_over_r(r, huber_delta) for r in r_norm])
    g_fixed = np.zeros((n, 3))  # sum_p c_p (s J_pk)^T e_p
    a_vec = np.zeros((n, 3))  # sum_p J_pk^T u_p
    b_vec = np.zeros((n, 3))  # sum_p J_pk^T u_hat_p
    e_dot_u = float((c * (resid * u_hat).sum(axis=1)).sum())
    for p_idx, (i, j) in enumerate(pairs):
        e = c[p_idx] * resid[p_idx]
        Rrel = rel_rot[p_idx]
        g_fixed[j] += s * e
        g_fixed[i] += -s * (Rrel.T @ e)
        a_vec[j] += u_gt[p_idx]
        a_vec[i] += -(Rrel.T @ u_gt[p_idx])
        b_vec[j] += u_hat[p_idx]
        b_vec[i] += -(Rrel.T @ u_hat[p_idx])
    if clamped:
        ds = np.zeros((n, 3))
    else:
        ds = (a_vec - 2.0 * s * b_vec) / denom
    grad = (g_fixed + e_dot_u * ds) / P
    return value, grad


@dataclass(frozen=True)
class LossComponents:
    geo: float
    norm: float
    conf: float
    cam: float


def total_loss(components: LossComponents, weights: LossWeights = LossWeights(),
               warmup_active: bool = False):
    """Weighted sum of the four terms; the normal term is gated off during warm-up."""
    for name in ("geo", "norm", "conf", "cam"):
        if not np.isfinite(getattr(components, name)):
            raise ValidationError(f"non-finite loss component {name}")
    total = components.geo
    if not warmup_active:
        total = total + weights.lambda_n * components.norm
    total = total + weights.lambda_c * components.conf
    total = total + weights.lambda_p * components.cam
    return float(total)
