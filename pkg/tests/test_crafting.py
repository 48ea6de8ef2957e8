import json

import numpy as np
import numpy.testing as npt
import pytest

from helpers import dense_qp_energy, feasible_instance, matched_pair, small_target
from scalecloak.crafting import (
    AttackJob,
    append_craft_log,
    craft,
    craft_no_replica,
    perceptibility,
    verify,
)
from scalecloak.errors import DimensionMismatch, Infeasible
from scalecloak.raster import from_array
from scalecloak.scaleops import build_operator, downscale
from scalecloak.synth import make_scene


def test_energy_matches_dense_qp_oracle_small():
    rng = np.random.default_rng(20)
    for algorithm in ("nearest", "bilinear", "area"):
        source, target, op = feasible_instance(rng, (12, 14), (6, 7), algorithm, 1.0)
        result = craft(AttackJob(source=source, target=target, epsilon=1.0, operator=op))
        oracle = dense_qp_energy(source, target, op, 1.0)
        assert result.perturbation_energy == pytest.approx(oracle, rel=1e-4, abs=1e-6)
        assert result.residual_linf <= 1.0


def test_nearest_zero_epsilon_has_closed_form_energy():
    rng = np.random.default_rng(21)
    source = from_array(rng.uniform(0, 255, (8, 8, 1)))
    target = from_array(rng.uniform(0, 255, (4, 4, 1)))
    op = build_operator("nearest", (8, 8), (4, 4))
    result = craft(AttackJob(source=source, target=target, epsilon=0.0, operator=op))
    # One tap per output pixel: the only solution sets each sampled source
    # pixel to its target value, and the minimum energy is the squared gap.
    sampled = source.pixels[0::2, 0::2, 0]
    expected = float(np.sum((target.pixels[:, :, 0] - sampled) ** 2))
    assert result.perturbation_energy == pytest.approx(expected, rel=1e-9)
    assert result.residual_linf == 0.0
    npt.assert_allclose(
        downscale(result.attack_image, op).pixels, target.pixels, atol=1e-9
    )


def test_already_matching_source_needs_no_perturbation():
    rng = np.random.default_rng(22)
    source = from_array(rng.uniform(0, 255, (12, 12, 1)))
    op = build_operator("bilinear", (12, 12), (4, 4))
    target = downscale(source, op)
    result = craft(AttackJob(source=source, target=target, epsilon=1.0, operator=op))
    assert result.perturbation_energy == pytest.approx(0.0, abs=1e-12)
    npt.assert_array_equal(result.attack_image.pixels, source.pixels)


def test_energy_is_non_increasing_in_epsilon():
    rng = np.random.default_rng(23)
    source, target, op = feasible_instance(rng, (15, 15), (5, 5), "area", 4.0)
    energies = []
    for eps in (0.0, 1.0, 2.0, 5.0):
        result = craft(AttackJob(source=source, target=target, epsilon=eps, operator=op))
        assert result.residual_linf <= eps + 1e-9
        energies.append(result.perturbation_energy)
    for lo, hi in zip(energies[1:], energies[:-1]):
        assert lo <= hi * (1 + 1e-9) + 1e-12


def test_perturbation_is_local_to_changed_target_pixels():
    source = from_array(np.full((11, 11), 100.0))
    op = build_operator("bilinear", (11, 11), (4, 4))
    base = downscale(source, op).pixels.copy()
    base[1, 1, 0] += 20.0
    result = craft(
        AttackJob(source=source, target=from_array(base), epsilon=0.0, operator=op)
    )
    delta = np.abs(result.attack_image.pixels - source.pixels)[:, :, 0]
    # Output pixel (1,1) reads source coordinate 3.625 on each axis, so its
    # bilinear stencil is rows/cols {3, 4}; nothing else may move.
    stencil = np.zeros((11, 11), dtype=bool)
    stencil[3:5, 3:5] = True
    assert delta[~stencil].max() < 1e-9
    assert delta[stencil].max() > 1.0


def test_attack_image_respects_intensity_box():
    rng = np.random.default_rng(24)
    source = from_array(np.full((10, 10), 250.0))
    target = from_array(rng.uniform(250, 255, (5, 5)))
    op = build_operator("area", (10, 10), (5, 5))
    result = craft(AttackJob(source=source, target=target, epsilon=0.5, operator=op))
    assert result.attack_image.pixels.max() <= 255.0
    assert result.attack_image.pixels.min() >= 0.0


def test_post_quantization_slack_within_one_unit():
    pair = matched_pair(seed=25, ratio=4, dst=16)
    target, op = small_target(pair, (16, 16))
    for eps in (0.0, 1.0):
        result = craft(AttackJob(source=pair.replica, target=target, epsilon=eps, operator=op))
        assert result.residual_linf <= eps + 1e-9
        assert result.residual_linf_postquant <= eps + 1.0 + 1e-9


def test_replica_source_is_less_perceptible_than_unrelated_source():
    pair = matched_pair(seed=26, ratio=4, dst=16)
    target, op = small_target(pair, (16, 16))
    with_replica = craft(AttackJob(source=pair.replica, target=target, epsilon=1.0, operator=op))
    unrelated = make_scene(np.random.default_rng(99), (64, 64), 1)
    without = craft_no_replica(unrelated, target, 1.0, op)
    assert with_replica.replica is True
    assert without.replica is False
    mse_with = perceptibility(with_replica.attack_image, pair.replica)["mse"]
    mse_without = perceptibility(without.attack_image, unrelated)["mse"]
    assert mse_with < mse_without


def test_checkerboard_target_is_infeasible_at_zero_epsilon():
    # 3x3 -> 2x2 bilinear stencils overlap on the middle pixel, so a full
    # intensity checkerboard cannot be produced exactly.
    source = from_array(np.full((3, 3), 128.0))
    target = from_array(np.array([[255.0, 0.0], [0.0, 255.0]]))
    op = build_operator("bilinear", (3, 3), (2, 2))
    with pytest.raises(Infeasible):
        craft(AttackJob(source=source, target=target, epsilon=0.0, operator=op))


def test_verify_reports_pass_and_failure():
    source = from_array(np.full((8, 8), 100.0))
    op = build_operator("nearest", (8, 8), (4, 4))
    target = from_array(downscale(source, op).pixels + 10.0)
    result = craft(AttackJob(source=source, target=target, epsilon=2.0, operator=op))
    ok = verify(result.attack_image, target, op, 2.0)
    assert ok["pass"] is True and ok["residual_linf"] <= 2.0
    bad = verify(result.attack_image, target, op, 1.0)
    assert bad["pass"] is False
    with pytest.raises(DimensionMismatch):
        verify(result.attack_image, from_array(np.zeros((5, 5))), op, 2.0)


def test_job_validates_geometry_and_warns_on_unequal_ratios():
    op = build_operator("bilinear", (16, 12), (4, 4))
    with pytest.raises(DimensionMismatch):
        AttackJob(
            source=from_array(np.zeros((16, 16))),
            target=from_array(np.zeros((4, 4))),
            epsilon=1.0,
            operator=op,
        )
    with pytest.warns(UserWarning, match="ratio"):
        AttackJob(
            source=from_array(np.zeros((16, 12))),
            target=from_array(np.zeros((4, 4))),
            epsilon=1.0,
            operator=op,
        )


def test_craft_log_appends_json_lines(tmp_path):
    pair = matched_pair(seed=27, ratio=3, dst=8)
    target, op = small_target(pair, (8, 8))
    result = craft(AttackJob(source=pair.replica, target=target, epsilon=1.0, operator=op))
    log = tmp_path / "log.jsonl"
    append_craft_log(log, result, label="first")
    append_craft_log(log, result)
    lines = log.read_text().splitlines()
    assert len(lines) == 2
    record = json.loads(lines[0])
    assert record["label"] == "first"
    assert record["replica"] is True
    assert record["epsilon"] == 1.0
    assert set(record) >= {"energy", "residual_linf", "residual_linf_postquant", "iterations"}
