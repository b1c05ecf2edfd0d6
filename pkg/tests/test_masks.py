import numpy as np
import pytest
from PIL import Image

from vanishing_depth.lib.errors import ContractViolation
from vanishing_depth.lib.masks import (
    MaskSpec, NoiseSchedule, apply_mask, combine_masks, make_mask, perlin_eval, perlin_gradients,
    perlin_noise, random_mask_spec, sample_removal_fraction, save_mask_png, threshold_to_mask,
    uniform_noise_multiscale,
)


# --- Perlin ---

def test_perlin_is_zero_on_lattice_corners():
    grads = perlin_gradients(seed=5, cells=4)
    y, x = np.meshgrid(np.arange(5.0), np.arange(5.0), indexing="ij")
    assert np.abs(perlin_eval(grads, y, x)).max() == pytest.approx(0.0, abs=1e-12)


def test_perlin_is_deterministic():
    np.testing.assert_array_equal(perlin_noise(3, 32, 24, 4), perlin_noise(3, 32, 24, 4))
    assert not np.array_equal(perlin_noise(3, 32, 24, 4), perlin_noise(4, 32, 24, 4))


def test_perlin_stays_within_bound():
    peak = max(np.abs(perlin_noise(seed, 32, 32, 4)).max() for seed in range(50))
    assert peak <= np.sqrt(2) / 2 + 1e-12


@pytest.mark.parametrize("axis", ["x", "y"])
def test_perlin_is_smooth_across_cell_boundaries(axis):
    grads = perlin_gradients(seed=7, cells=4)
    h = 1e-6
    t = np.linspace(0.05, 3.95, 40)
    t = t[np.abs(t - np.round(t)) > 0.01]

    def f(across, along):
        return perlin_eval(grads, along, across) if axis == "x" else perlin_eval(grads, across, along)

    for k in (1.0, 2.0, 3.0):
        assert np.abs(f(k - h, t) - f(k + h, t)).max() < 1e-5
        # derivative across the line, one-sided on each side
        d_before = (f(k - h, t) - f(k - 2 * h, t)) / h
        d_after = (f(k + 2 * h, t) - f(k + h, t)) / h
        assert np.abs(d_before - d_after).max() < 1e-4
        # derivative along the line
        a_before = (f(k - h, t + h) - f(k - h, t - h)) / (2 * h)
        a_after = (f(k + h, t + h) - f(k + h, t - h)) / (2 * h)
        assert np.abs(a_before - a_after).max() < 1e-4
        assert np.abs(d_before).max() > 1e-3


@pytest.mark.parametrize("cells", [0, 33])
def test_perlin_cell_bounds(cells):
    with pytest.raises(ContractViolation):
        perlin_noise(0, 32, 32, cells)


# --- Uniform noise ---

def test_single_block_is_constant():
    field = uniform_noise_multiscale(1, 16, 16, 16)
    assert np.ptp(field) == 0.0


def test_blocks_of_two_are_constant():
    field = uniform_noise_multiscale(2, 8, 12, 2)
    blocks = field.reshape(4, 2, 6, 2)
    assert (blocks == blocks[:, :1, :, :1]).all()


def test_uniform_noise_mean():
    field = uniform_noise_multiscale(3, 1000, 1000, 1)
    assert field.mean() == pytest.approx(0.5, abs=0.01)


def test_uniform_noise_crops_partial_blocks():
    assert uniform_noise_multiscale(0, 10, 7, 4).shape == (10, 7)


# --- Thresholding ---

def test_half_of_distinct_field_removed():
    field = np.random.default_rng(0).permutation(64 * 64).reshape(64, 64).astype(float)
    mask = threshold_to_mask(field, 0.5)
    assert mask.sum() == 2048
    assert field[mask].max() < field[~mask].min()


def test_zero_target_gives_empty_mask():
    assert not threshold_to_mask(np.random.default_rng(1).random((8, 8)), 0.0).any()


def test_ties_break_by_pixel_index():
    mask = threshold_to_mask(np.zeros((10, 10)), 0.3)
    assert mask.sum() == 30
    assert mask.reshape(-1)[:30].all()


def test_only_valid_pixels_are_removed():
    rng = np.random.default_rng(2)
    valid = rng.random((16, 16)) > 0.3
    mask = threshold_to_mask(rng.random((16, 16)), 0.4, valid)
    assert not (mask & ~valid).any()
    assert mask.sum() == int(np.floor(0.4 * valid.sum() + 0.5))


def test_removal_count_is_exact_for_random_pairs():
    rng = np.random.default_rng(3)
    for _ in range(100):
        h, w = rng.integers(4, 40, size=2)
        target = rng.uniform(0.0, 1.0)
        mask = threshold_to_mask(rng.normal(size=(h, w)), target)
        assert abs(mask.sum() - target * h * w) <= 1


@pytest.mark.parametrize("target", [-0.1, 1.5])
def test_threshold_target_bounds(target):
    with pytest.raises(ContractViolation):
        threshold_to_mask(np.zeros((4, 4)), target)


# --- Specs ---

@pytest.mark.parametrize("kwargs", [
    {"kind": "salt", "target_removal": 0.5},
    {"kind": "perlin", "target_removal": 0.005},
    {"kind": "uniform", "target_removal": 0.995},
    {"kind": "perlin", "target_removal": 0.5, "cells": 0},
])
def test_invalid_mask_spec(kwargs):
    with pytest.raises(ContractViolation):
        MaskSpec(**kwargs)


@pytest.mark.parametrize("kind", ["uniform", "perlin"])
def test_make_mask_hits_target(kind):
    spec = MaskSpec(kind=kind, target_removal=0.25, cells=4, scale_divisor=2)
    mask = make_mask(spec, seed=7, height=32, width=32)
    assert mask.dtype == bool
    assert mask.sum() == 256
    np.testing.assert_array_equal(mask, make_mask(spec, seed=7, height=32, width=32))


def test_random_mask_spec_covers_both_kinds():
    rng = np.random.default_rng(4)
    specs = [random_mask_spec(rng, 0.5, 8, 8) for _ in range(50)]
    assert {s.kind for s in specs} == {"uniform", "perlin"}
    assert all(s.cells <= 8 and s.scale_divisor <= 8 for s in specs)


def test_apply_and_combine():
    depth = np.array([[1.0, 2.0], [3.0, 4.0]])
    a = np.array([[True, False], [False, False]])
    b = np.array([[False, False], [False, True]])
    both = combine_masks(a, b)
    assert both.tolist() == [[True, False], [False, True]]
    assert apply_mask(depth, both).tolist() == [[0.0, 2.0], [3.0, 0.0]]
    assert depth[0, 0] == 1.0
    with pytest.raises(ContractViolation):
        combine_masks()


def test_save_mask_png(tmp_path):
    save_mask_png(np.array([[True, False]]), tmp_path / "m.png")
    assert np.array(Image.open(tmp_path / "m.png")).tolist() == [[255, 0]]


# --- Schedule ---

def test_schedule_endpoints():
    schedule = NoiseSchedule(warmup_steps=1000)
    assert schedule.hi(0) == pytest.approx(0.30)
    assert schedule.hi(500) == pytest.approx(0.645)
    assert schedule.hi(1000) == pytest.approx(0.99)
    assert schedule.hi(50_000) == pytest.approx(0.99)


@pytest.mark.parametrize("step, hi", [(0, 0.30), (500, 0.645), (1000, 0.99), (4000, 0.99)])
def test_sampled_fraction_respects_bounds(step, hi):
    schedule = NoiseSchedule(warmup_steps=1000)
    draws = [sample_removal_fraction(schedule, step, seed) for seed in range(300)]
    assert min(draws) >= 0.01
    assert max(draws) <= hi + 1e-12


def test_no_warmup_starts_hard():
    assert NoiseSchedule(warmup_steps=0).hi(0) == 0.99


def test_sampling_is_deterministic():
    schedule = NoiseSchedule()
    assert sample_removal_fraction(schedule, 10, 3) == sample_removal_fraction(schedule, 10, 3)


def test_invalid_schedule():
    with pytest.raises(ContractViolation):
        NoiseSchedule(lo=0.5, easy_hi=0.3)
    with pytest.raises(ContractViolation):
        NoiseSchedule(warmup_steps=-1)
    with pytest.raises(ContractViolation):
        sample_removal_fraction(NoiseSchedule(), -1, 0)
