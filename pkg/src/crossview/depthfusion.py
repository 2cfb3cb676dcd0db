"""Metric anchoring of relative depth: global scale/shift fit plus a Pearson gate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, ValidationError

PCC_GATE = 0.9


@dataclass
class DepthGrid:
    """H x W depth values (meters or relative units) with a validity mask."""

    values: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValidationError(f"depth grid must be 2-D, got {self.values.shape}")
        if self.valid is None:
            self.valid = np.isfinite(self.values) & (self.values > 0)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise ValidationError("valid mask shape does not match values")

    @property
    def shape(self):
        return self.values.shape


def fit_scale_shift(rel: DepthGrid, anchor: DepthGrid):
    """Least-squares (s, t) minimizing sum((s*rel + t - anchor)^2) over the
    jointly valid pixels, via the closed-form 2x2 normal equations."""
    mask = rel.valid & anchor.valid
    r = rel.values[mask]
    a = anchor.values[mask]
    if r.size < 2:
        raise DegenerateInputError("need >= 2 jointly valid pixels")
    if np.ptp(r) == 0.0:
        raise DegenerateInputError("relative depth is constant; scale is unidentifiable")
    n = r.size
    srr = float(r @ r)
    sr = float(r.sum())
    A = np.array([[srr, sr], [sr, float(n)]])
    b = np.array([float(r @ a), float(a.sum())])
    s, t = np.linalg.solve(A, b)
    return float(s), float(t)


def pearson(a, b, mask=None):
    """Sample Pearson correlation coefficient over the (masked) values."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if mask is not None:
        a = a[np.asarray(mask, dtype=bool)]
        b = b[np.asarray(mask, dtype=bool)]
    a = a.ravel()
    b = b.ravel()
    if a.size != b.size:
        raise ValidationError("inputs differ in length")
    if a.size < 2:
        raise DegenerateInputError("need >= 2 values")
    da = a - a.mean()
    db = b - b.mean()
    na = np.linalg.norm(da)
    nb = np.linalg.norm(db)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("zero variance input")
    return float(np.clip(da @ db / (na * nb), -1.0, 1.0))


@dataclass
class FusionResult:
    accepted: bool
    pcc: float
    scale: float
    shift: float
    fused: Optional[DepthGrid]


def fuse_and_filter(rel: DepthGrid, anchor: DepthGrid, pcc_min=PCC_GATE) -> FusionResult:
    """Anchor the relative depth to metric scale and gate on Pearson correlation.

    The PCC is computed between anchor and rel over the joint mask (equal, by
    affine invariance, to the post-fusion correlation). The fused grid keeps
    rel's validity mask; on rejection the fused grid is withheld but the PCC
    is reported.
    """
    s, t = fit_scale_shift(rel, anchor)
    mask = rel.valid & anchor.valid
    pcc = pearson(rel.values, anchor.values, mask)
    accepted = pcc >= pcc_min
    fused = None
    if accepted:
        values = np.where(rel.valid, s * rel.values + t, np.nan)
        fused = DepthGrid(values=values, valid=rel.valid.copy())
    return FusionResult(accepted=accepted, pcc=pcc, scale=s, shift=t, fused=fused)
