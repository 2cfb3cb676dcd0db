"""Report figures written alongside the JSON/CSV outputs."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import AUC_MAX_DEG


def save_accuracy_curve(pose_evals, path, auc_max=AUC_MAX_DEG):
    """Cumulative pose-accuracy curves (rotation, translation direction, combined)."""
    rot = np.array([e.rot_err for e in pose_evals])
    trans = np.array([e.trans_dir_err for e in pose_evals])
    combined = np.maximum(rot, trans)
    ts = np.arange(0.0, auc_max + 1e-12, 0.1)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for errs, label in ((rot, "rotation"), (trans, "translation dir."),
                        (combined, "combined")):
        acc = [(errs < (1e-12 if t == 0 else t)).mean() for t in ts]
        ax.plot(ts, acc, label=label)
    ax.set_xlabel("threshold (deg)")
    ax.set_ylabel("fraction of pairs")
    ax.set_xlim(0, auc_max)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_error_histogram(meter_errs, yaw_errs, path):
    """Histograms of on-tile translation and yaw errors."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    axes[0].hist(np.asarray(meter_errs, dtype=float), bins=30, color="#4878cf")
    axes[0].set_xlabel("meter error (m)")
    axes[0].set_ylabel("cameras")
    axes[1].hist(np.asarray(yaw_errs, dtype=float), bins=30, color="#d65f5f")
    axes[1].set_xlabel("yaw error (deg)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_localization_overlay(tile_size, cam_points, path, gt_points=None):
    """Top-down overlay of on-tile camera estimates (and GT when given)."""
    w, h = tile_size
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.add_patch(plt.Rectangle((0, 0), w, h, fill=False, color="gray"))
    pts = np.asarray(cam_points, dtype=float).reshape(-1, 2)
    ax.scatter(pts[:, 0], pts[:, 1], marker="^", color="#d65f5f", label="estimate")
    if gt_points is not None:
        gt = np.asarray(gt_points, dtype=float).reshape(-1, 2)
        ax.scatter(gt[:, 0], gt[:, 1], marker="x", color="#4878cf", label="ground truth")
    ax.set_xlim(-0.05 * w, 1.05 * w)
    ax.set_ylim(1.05 * h, -0.05 * h)
    ax.set_aspect("equal")
    ax.set_xlabel("u (px)")
    ax.set_ylabel("v (px)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
