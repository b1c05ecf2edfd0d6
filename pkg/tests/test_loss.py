import math

import numpy as np
import pytest

from vanishing_depth.lib import autograd as ag
from vanishing_depth.lib.errors import ContractViolation, DomainError, EmptySetError
from vanishing_depth.lib.loss import (
    DecodeHeadParams, MultiScaleSpec, SiLossParams, balanced_pixel_loss, decode_terms, metric_decode,
    multi_scale_loss, si_loss, terms_for,
)


def toy_depth(seed, shape=(4, 4)):
    return np.random.default_rng(seed).uniform(1.0, 3.0, size=shape)


# --- SI loss ---

def test_perfect_prediction_has_zero_loss():
    gt = toy_depth(0)
    loss = si_loss(ag.constant(gt), gt, np.ones(gt.shape, dtype=bool))
    assert loss.item() == 0.0


def test_single_pixel_unit_log_error():
    gt = np.array([[2.0]])
    loss = si_loss(ag.constant(gt * np.e), gt, np.ones((1, 1), dtype=bool))
    assert loss.item() == pytest.approx(3.872983, abs=1e-6)


def test_constant_ratio_prediction():
    gt = np.array([[1.0, 4.0]])
    loss = si_loss(ag.constant(2 * gt), gt, np.ones((1, 2), dtype=bool))
    # 10·sqrt(1 - 0.85)·ln 2
    assert loss.item() == pytest.approx(10 * math.sqrt(0.15) * math.log(2), abs=1e-9)
    assert loss.item() == pytest.approx(2.684547, abs=1e-6)


def test_full_lambda_ignores_global_scale():
    gt = toy_depth(1)
    pred = toy_depth(2)
    pixels = np.ones(gt.shape, dtype=bool)
    params = SiLossParams(lam=1.0)
    base = si_loss(ag.constant(pred), gt, pixels, params).item()
    for scale in (0.3, 3.7, 120.0):
        assert si_loss(ag.constant(pred * scale), gt, pixels, params).item() == pytest.approx(base, abs=1e-9)


def test_loss_only_sees_the_pixel_set():
    gt = toy_depth(3)
    pred = gt.copy()
    pixels = np.zeros(gt.shape, dtype=bool)
    pixels[:2] = True
    pred[2:] *= 5.0
    assert si_loss(ag.constant(pred), gt, pixels).item() == 0.0


def test_empty_pixel_set():
    gt = toy_depth(4)
    with pytest.raises(EmptySetError):
        si_loss(ag.constant(gt), gt, np.zeros(gt.shape, dtype=bool))


def test_nonpositive_prediction():
    gt = toy_depth(5)
    pred = gt.copy()
    pred[1, 1] = -0.5
    pixels = np.ones(gt.shape, dtype=bool)
    with pytest.raises(DomainError):
        si_loss(ag.constant(pred), gt, pixels)
    # clamped from below it is fine
    assert np.isfinite(si_loss(ag.constant(pred), gt, pixels, min_depth=1e-3).item())


def test_missing_ground_truth_inside_the_set():
    gt = toy_depth(6)
    gt[0, 0] = 0.0
    with pytest.raises(ContractViolation):
        si_loss(ag.constant(np.ones(gt.shape)), gt, np.ones(gt.shape, dtype=bool))


def test_invalid_params():
    with pytest.raises(ContractViolation):
        SiLossParams(lam=1.5)
    with pytest.raises(ContractViolation):
        SiLossParams(alpha=0.0)


# --- Balanced loss ---

def test_everything_vanished_uses_prediction_term():
    gt = toy_depth(7)
    pred = ag.constant(toy_depth(8))
    valid = np.ones(gt.shape, dtype=bool)
    combined, parts = balanced_pixel_loss(pred, gt, valid, valid)
    assert parts["reconstruction"] is None
    assert combined.item() == parts["prediction"].item()
    assert combined.item() == pytest.approx(si_loss(pred, gt, valid).item())


def test_nothing_vanished_uses_reconstruction_term():
    gt = toy_depth(9)
    valid = np.ones(gt.shape, dtype=bool)
    combined, parts = balanced_pixel_loss(ag.constant(toy_depth(10)), gt, np.zeros(gt.shape, dtype=bool), valid)
    assert parts["prediction"] is None
    assert combined.item() == parts["reconstruction"].item()


def test_equal_terms_average_to_the_same_value():
    gt = toy_depth(11)
    vanish = np.zeros(gt.shape, dtype=bool)
    vanish[::2] = True
    combined, parts = balanced_pixel_loss(ag.constant(gt * np.e), gt, vanish, np.ones(gt.shape, dtype=bool))
    assert parts["reconstruction"].item() == pytest.approx(3.872983, abs=1e-6)
    assert parts["prediction"].item() == pytest.approx(3.872983, abs=1e-6)
    assert combined.item() == pytest.approx(3.872983, abs=1e-6)


def test_invalid_pixels_are_ignored():
    gt = toy_depth(12)
    valid = np.ones(gt.shape, dtype=bool)
    valid[0] = False
    gt[0] = 0.0
    combined, _ = balanced_pixel_loss(ag.constant(np.where(valid, gt, 9.0)), gt, ~valid, valid)
    assert combined.item() == 0.0


def test_no_valid_pixels():
    with pytest.raises(EmptySetError):
        balanced_pixel_loss(ag.constant(np.ones((2, 2))), np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))


# --- Multi-scale loss ---

def test_single_scale_equals_balanced_loss():
    gt = toy_depth(13, (8, 8))
    pred = ag.constant(toy_depth(14, (8, 8)))
    vanish = np.random.default_rng(15).random((8, 8)) > 0.5
    valid = np.ones((8, 8), dtype=bool)
    report = multi_scale_loss([pred], gt, vanish, valid, MultiScaleSpec(factors=(1.0,)))
    combined, _ = balanced_pixel_loss(pred, gt, vanish, valid, min_depth=1e-3)
    assert report.total == pytest.approx(combined.item())
    assert len(report.scales) == 1


def test_perfect_predictions_at_all_scales():
    gt = toy_depth(16, (8, 8))
    vanish = np.random.default_rng(17).random((8, 8)) > 0.5
    preds = [ag.constant(gt), ag.constant(gt[::2, ::2]), ag.constant(gt[::4, ::4])]
    report = multi_scale_loss(preds, gt, vanish, np.ones((8, 8), dtype=bool), MultiScaleSpec((1.0, 0.5, 0.25)))
    assert report.total == 0.0


def test_scale_losses_add_up():
    gt = toy_depth(18, (8, 8))
    vanish = np.random.default_rng(19).random((8, 8)) > 0.5
    valid = np.ones((8, 8), dtype=bool)
    preds = [ag.constant(toy_depth(20, (8, 8))), ag.constant(toy_depth(21, (4, 4)))]
    report = multi_scale_loss(preds, gt, vanish, valid, MultiScaleSpec((1.0, 0.5)))
    a, b = (s.combined for s in report.scales)
    assert report.total == pytest.approx(a + b)
    row = report.row(step=3)
    assert list(row) == ["step", "rec_0", "pred_0", "rec_1", "pred_1", "total"]


def test_weighted_scales():
    gt = toy_depth(22, (8, 8))
    valid = np.ones((8, 8), dtype=bool)
    vanish = np.zeros((8, 8), dtype=bool)
    preds = [ag.constant(toy_depth(23, (8, 8))), ag.constant(toy_depth(24, (4, 4)))]
    plain = multi_scale_loss(preds, gt, vanish, valid, MultiScaleSpec((1.0, 0.5)))
    weighted = multi_scale_loss(preds, gt, vanish, valid, MultiScaleSpec((1.0, 0.5), weights=(1.0, 2.0)))
    a, b = (s.combined for s in plain.scales)
    assert weighted.total == pytest.approx(a + 2 * b)


def test_wrong_prediction_shape():
    gt = toy_depth(25, (8, 8))
    valid = np.ones((8, 8), dtype=bool)
    with pytest.raises(ContractViolation):
        multi_scale_loss([ag.constant(gt), ag.constant(gt)], gt, valid, valid, MultiScaleSpec((1.0, 0.5)))
    with pytest.raises(ContractViolation):
        multi_scale_loss([ag.constant(gt)], gt, valid, valid, MultiScaleSpec((1.0, 0.5)))


def test_multi_scale_gradients_match_finite_differences():
    rng = np.random.default_rng(26)
    gt = rng.uniform(1.0, 3.0, size=(8, 8))
    gt[0, :3] = 0.0
    valid = gt > 0
    vanish = rng.random((8, 8)) > 0.5
    store = ag.ParameterStore()
    store.add("head", rng.uniform(0.5, 1.5, size=(4, 8, 8)))
    decode = DecodeHeadParams(max_d=15.0)

    def f(s):
        small = ag.bilinear_resize(s["head"], 4, 4)
        preds = [metric_decode(s["head"], decode), metric_decode(small, decode)]
        return multi_scale_loss(preds, gt, vanish, valid, MultiScaleSpec((1.0, 0.5))).loss

    assert ag.finite_difference_check(f, store) < 1e-5


# --- Metric decode ---

def test_terms_for_fifteen_meters():
    assert terms_for(15.0) == 4
    assert decode_terms(15.0, 4) == pytest.approx([1.5, 0.15, 0.015, 0.0015])


def test_terms_for_other_ranges():
    assert terms_for(500.0) == 5
    assert terms_for(2.0) == 3
    with pytest.raises(ContractViolation):
        terms_for(0.005)


def test_decode_of_unit_coefficients():
    head = ag.constant(np.ones((4, 2, 3)))
    out = metric_decode(head, DecodeHeadParams(max_d=15.0))
    assert out.shape == (2, 3)
    assert out.value == pytest.approx(np.full((2, 3), 1.6665))


def test_decode_of_zero_coefficients():
    out = metric_decode(ag.constant(np.zeros((4, 1, 1))), DecodeHeadParams(max_d=15.0))
    assert out.value[0, 0] == 0.0


def test_linear_place_value():
    assert decode_terms(15.0, 3, "linear") == pytest.approx([1.5, 0.75, 0.5])
    with pytest.raises(ContractViolation):
        decode_terms(15.0, 3, "octal")


def test_negative_sum_goes_through_leaky_relu():
    head = ag.constant(np.full((4, 1, 1), -1.0))
    out = metric_decode(head, DecodeHeadParams(max_d=15.0, slope=0.01))
    assert out.value[0, 0] == pytest.approx(-0.016665)


def test_decode_channel_mismatch():
    with pytest.raises(ContractViolation):
        metric_decode(ag.constant(np.ones((3, 2, 2))), DecodeHeadParams(max_d=15.0))
