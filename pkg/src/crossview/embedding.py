"""Architecture-level math pieces: Fourier positional embedding and gated fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError, ValidationError

DEFAULT_NUM_FREQS = 32
DEFAULT_BANDWIDTH = 10.0


@dataclass(frozen=True)
class FourierPE:
    """Fourier positional embedding of a normalized 2-D pixel coordinate.

    B is a fixed Gaussian random frequency matrix (2 x K); W and b form the
    affine output head mapping the (2 + 2K)-feature vector to D_out.
    Feature layout: [x (2), sin (K), cos (K)].
    """

    B: np.ndarray
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if B.ndim != 2 or B.shape[0] != 2 or B.shape[1] < 1:
            raise ValidationError(f"B must be 2 x K with K >= 1, got {B.shape}")
        k = B.shape[1]
        if W.shape != (b.shape[0], 2 + 2 * k):
            raise ValidationError(f"W must be D_out x {2 + 2 * k}, got {W.shape}")
        for arr in (B, W, b):
            arr.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def num_freqs(self):
        return self.B.shape[1]

    @property
    def dim_out(self):
        return self.b.shape[0]

    @classmethod
    def create(cls, dim_out, num_freqs=DEFAULT_NUM_FREQS, bandwidth=DEFAULT_BANDWIDTH, seed=0):
        """Seeded Gaussian B with the given bandwidth; W, b from a unit Gaussian."""
        rng = np.random.default_rng(seed)
        B = rng.normal(0.0, bandwidth, size=(2, num_freqs))
        W = rng.normal(0.0, 1.0, size=(dim_out, 2 + 2 * num_freqs))
        b = rng.normal(0.0, 1.0, size=dim_out)
        return cls(B=B, W=W, b=b)


def fourier_pe(x, pe: FourierPE):
    """Evaluate PE(x) = W [x || sin(2 pi B^T x) || cos(2 pi B^T x)] + b."""
    x = np.asarray(x, dtype=float).reshape(2)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValidationError(f"x must lie in the unit square, got {x}")
    phase = 2.0 * np.pi * (pe.B.T @ x)
    feat = np.concatenate([x, np.sin(phase), np.cos(phase)])
    return pe.W @ feat + pe.b


def gated_fusion(states, gate_logits):
    """Softmax-weighted combination of equally sized hidden-state vectors."""
    states = [np.asarray(s, dtype=float) for s in states]
    logits = np.asarray(gate_logits, dtype=float).reshape(-1)
    if len(states) < 1:
        raise StructuralError("need at least one state")
    if len(states) != logits.shape[0]:
        raise StructuralError(f"{len(states)} states but {logits.shape[0]} gate logits")
    shape = states[0].shape
    if any(s.shape != shape for s in states):
        raise StructuralError("states differ in shape")
    z = logits - logits.max()
    w = np.exp(z)
    w /= w.sum()
    out = np.zeros(shape)
    for wi, si in zip(w, states):
        out += wi * si
    return out
