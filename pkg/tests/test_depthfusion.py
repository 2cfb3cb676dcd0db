"""Tests for metric anchoring of relative depth and the correlation gate."""

import numpy as np
import pytest

from crossview.depthfusion import (
    PCC_GATE,
    DepthGrid,
    FusionResult,
    fit_scale_shift,
    fuse_and_filter,
    pearson,
)
from crossview.errors import DegenerateInputError, ValidationError


def random_grid(rng, h=12, w=10, low=1.0, high=30.0):
    return DepthGrid(values=rng.uniform(low, high, (h, w)))


class TestFitScaleShift:
    def test_exact_affine_recovery(self, rng):
        rel = random_grid(rng)
        anchor = DepthGrid(values=2.0 * rel.values + 3.0)
        s, t = fit_scale_shift(rel, anchor)
        assert s == pytest.approx(2.0, abs=1e-9)
        assert t == pytest.approx(3.0, abs=1e-9)

    def test_identity(self, rng):
        g = random_grid(rng)
        s, t = fit_scale_shift(g, g)
        assert s == pytest.approx(1.0, abs=1e-9)
        assert t == pytest.approx(0.0, abs=1e-9)

    def test_against_lstsq_oracle(self, rng):
        rel = random_grid(rng, 10, 10)
        anchor = DepthGrid(values=rel.values * 1.7 + rng.normal(0, 0.5, (10, 10)) + 4.0)
        s, t = fit_scale_shift(rel, anchor)
        A = np.column_stack([rel.values.ravel(), np.ones(100)])
        expect, *_ = np.linalg.lstsq(A, anchor.values.ravel(), rcond=None)
        assert s == pytest.approx(expect[0], abs=1e-9)
        assert t == pytest.approx(expect[1], abs=1e-9)

    def test_masked_pixels_ignored(self, rng):
        rel = random_grid(rng)
        anchor = DepthGrid(values=3.0 * rel.values - 1.0)
        # Corrupt one pixel and mark it invalid on the anchor side.
        vals = anchor.values.copy()
        vals[0, 0] = 1e6
        valid = np.ones_like(vals, dtype=bool)
        valid[0, 0] = False
        anchor2 = DepthGrid(values=vals, valid=valid)
        s, t = fit_scale_shift(rel, anchor2)
        assert s == pytest.approx(3.0, abs=1e-9)
        assert t == pytest.approx(-1.0, abs=1e-9)

    def test_residual_orthogonality(self, rng):
        # Normal equations: residuals are orthogonal to the regressors.
        rel = random_grid(rng)
        anchor = DepthGrid(values=rel.values + rng.normal(0, 1.0, rel.shape))
        s, t = fit_scale_shift(rel, anchor)
        joint = rel.valid & anchor.valid
        r = (s * rel.values + t - anchor.values)[joint]
        scale = np.abs(anchor.values[joint]).sum()
        assert abs(r.sum()) < 1e-7 * scale
        assert abs((r * rel.values[joint]).sum()) < 1e-7 * scale * rel.values.max()

    def test_constant_relative_depth_degenerate(self):
        rel = DepthGrid(values=np.full((4, 4), 5.0))
        anchor = DepthGrid(values=np.arange(16.0).reshape(4, 4) + 1.0)
        with pytest.raises(DegenerateInputError):
            fit_scale_shift(rel, anchor)

    def test_too_few_pixels_degenerate(self):
        rel = DepthGrid(values=np.array([[1.0, np.nan], [np.nan, np.nan]]))
        anchor = DepthGrid(values=np.ones((2, 2)))
        with pytest.raises(DegenerateInputError):
            fit_scale_shift(rel, anchor)


class TestDepthGrid:
    def test_auto_mask_excludes_nonpositive_and_nan(self):
        g = DepthGrid(values=np.array([[1.0, 0.0], [-2.0, np.nan]]))
        assert g.valid.tolist() == [[True, False], [False, False]]

    def test_shape_validation(self):
        with pytest.raises(ValidationError):
            DepthGrid(values=np.zeros(5))
        with pytest.raises(ValidationError):
            DepthGrid(values=np.zeros((2, 2)), valid=np.ones((3, 3), dtype=bool))


class TestPearson:
    def test_perfect_positive_affine(self, rng):
        a = rng.uniform(0, 10, 50)
        assert pearson(a, 5.0 * a + 1.0) == 1.0

    def test_perfect_negative(self, rng):
        a = rng.uniform(0, 10, 50)
        assert pearson(a, -a) == -1.0

    def test_against_corrcoef(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        b = np.array([1.0, 2.0, 3.0, 100.0])
        expect = np.corrcoef(a, b)[0, 1]
        assert abs(pearson(a, b) - expect) < 1e-12

    def test_mask_applied(self, rng):
        a = rng.uniform(0, 10, (4, 4))
        b = 2.0 * a
        b[0, 0] = -999.0
        mask = np.ones((4, 4), dtype=bool)
        mask[0, 0] = False
        assert pearson(a, b, mask) == 1.0

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateInputError):
            pearson([1.0], [2.0])
        with pytest.raises(DegenerateInputError):
            pearson([1.0, 1.0], [1.0, 2.0])
        with pytest.raises(ValidationError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])


class TestFuseAndFilter:
    def test_gate_constant(self):
        assert PCC_GATE == 0.9

    def test_accepts_affine_pair(self, rng):
        rel = random_grid(rng)
        anchor = DepthGrid(values=4.0 * rel.values + 2.0)
        res = fuse_and_filter(rel, anchor)
        assert res.accepted
        assert res.pcc == pytest.approx(1.0, abs=1e-12)
        assert res.scale == pytest.approx(4.0, abs=1e-9)
        assert res.shift == pytest.approx(2.0, abs=1e-9)
        joint = rel.valid & anchor.valid
        assert np.allclose(res.fused.values[joint], anchor.values[joint], atol=1e-9)

    def test_fused_keeps_rel_mask(self, rng):
        rel_vals = rng.uniform(1, 10, (5, 5))
        rel_vals[2, 2] = np.nan
        rel = DepthGrid(values=rel_vals)
        anchor_vals = 2.0 * np.nan_to_num(rel_vals, nan=1.0)
        valid = np.ones((5, 5), dtype=bool)
        valid[0, 0] = False  # anchor hole must not propagate to fused
        anchor = DepthGrid(values=anchor_vals, valid=valid)
        res = fuse_and_filter(rel, anchor)
        assert res.accepted
        assert np.array_equal(res.fused.valid, rel.valid)
        assert np.isnan(res.fused.values[2, 2])
        assert np.isfinite(res.fused.values[0, 0])

    def test_rejects_uncorrelated(self, rng):
        # Anti-correlated pair: PCC -1 < 0.9 gate, fused grid withheld.
        rel = random_grid(rng)
        anchor = DepthGrid(values=100.0 - rel.values)
        res = fuse_and_filter(rel, anchor)
        assert not res.accepted
        assert res.pcc == pytest.approx(-1.0, abs=1e-12)
        assert res.fused is None
        assert res.scale == pytest.approx(-1.0, abs=1e-9)

    def test_gate_threshold_inclusive(self, rng):
        rel = random_grid(rng)
        anchor = DepthGrid(values=rel.values + rng.normal(0, 2.0, rel.shape))
        probe = fuse_and_filter(rel, anchor)
        # A gate set exactly at the measured correlation still accepts (>=).
        res = fuse_and_filter(rel, anchor, pcc_min=probe.pcc)
        assert res.accepted

    def test_affine_reparam_does_not_change_acceptance(self, rng):
        rel = random_grid(rng)
        anchor = DepthGrid(values=rel.values + rng.normal(0, 3.0, rel.shape))
        base = fuse_and_filter(rel, anchor)
        re_rel = DepthGrid(values=0.25 * rel.values + 7.0, valid=rel.valid.copy())
        again = fuse_and_filter(re_rel, anchor)
        assert again.accepted == base.accepted
        assert again.pcc == pytest.approx(base.pcc, abs=1e-12)

    def test_result_type(self, rng):
        rel = random_grid(rng)
        assert isinstance(fuse_and_filter(rel, rel), FusionResult)
