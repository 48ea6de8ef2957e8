import json

import numpy as np
import numpy.testing as npt
import pytest

from helpers import matched_pair, small_target
from scalecloak.crafting import AttackJob, craft
from scalecloak.errors import DimensionMismatch, PolicyRangeInvalid
from scalecloak.metrics import max_abs_diff
from scalecloak.prevention import PreventionPolicy, attack_survival_rate, defended_resize
from scalecloak.scaleops import build_operator, downscale
from scalecloak.synth import make_scene


@pytest.fixture(scope="module")
def crafted():
    pair = matched_pair(seed=70, ratio=3, dst=32)
    target, op = small_target(pair, (32, 32))
    result = craft(AttackJob(source=pair.replica, target=target, epsilon=1.0, operator=op))
    return pair, target, result


def test_identity_intermediate_preserves_the_attack(crafted):
    _, target, result = crafted
    policy = PreventionPolicy(
        mode="random_intermediate",
        final_size=(32, 32),
        intermediate_range=(1.0, 1.0),
        forbidden_multiples=False,
    )
    assert attack_survival_rate(result, target, policy, trials=3) == 1.0


def test_random_intermediate_breaks_the_attack(crafted):
    _, target, result = crafted
    policy = PreventionPolicy(mode="random_intermediate", final_size=(32, 32))
    survival = attack_survival_rate(result, target, policy, trials=24)
    assert survival <= 0.25


def test_survival_runs_are_deterministic(crafted, tmp_path):
    _, target, result = crafted
    policy = PreventionPolicy(mode="random_intermediate", final_size=(32, 32), seed=5)
    log_a = tmp_path / "a.jsonl"
    log_b = tmp_path / "b.jsonl"
    s_a = attack_survival_rate(result, target, policy, trials=10, log_path=log_a)
    s_b = attack_survival_rate(result, target, policy, trials=10, log_path=log_b)
    assert s_a == s_b
    assert log_a.read_bytes() == log_b.read_bytes()


def test_forbidden_multiples_are_never_sampled(tmp_path):
    img = make_scene(np.random.default_rng(71), (128, 128), 1)
    target = downscale(img, build_operator("bilinear", (128, 128), (32, 32)))
    policy = PreventionPolicy(
        mode="random_intermediate", final_size=(32, 32), intermediate_range=(0.26, 0.95)
    )
    log = tmp_path / "trials.jsonl"
    attack_survival_rate(img, target, policy, trials=60, epsilon=1.0, log_path=log)
    records = [json.loads(line) for line in log.read_text().splitlines()]
    assert len(records) == 60
    for rec in records:
        ih, iw = rec["intermediate"]
        assert ih % 32 != 0 and iw % 32 != 0


def test_nondefault_size_mode_is_plain_downscale():
    img = make_scene(np.random.default_rng(72), (96, 96), 1)
    policy = PreventionPolicy(mode="nondefault_size", final_size=(48, 48))
    out = defended_resize(img, policy)
    direct = downscale(img, build_operator("bilinear", (96, 96), (48, 48)))
    npt.assert_array_equal(out.pixels, direct.pixels)


def test_cross_size_resize_kills_the_attack(crafted):
    pair, _, result = crafted
    target48 = downscale(pair.target, build_operator("bilinear", (96, 96), (48, 48)))
    policy = PreventionPolicy(mode="nondefault_size", final_size=(48, 48))
    assert attack_survival_rate(result, target48, policy, trials=2) == 0.0


def test_defended_resize_stays_close_to_direct_on_benign_images():
    img = make_scene(np.random.default_rng(73), (128, 128), 3)
    policy = PreventionPolicy(mode="random_intermediate", final_size=(32, 32))
    defended = defended_resize(img, policy)
    direct = downscale(img, build_operator("bilinear", (128, 128), (32, 32)))
    assert max_abs_diff(defended, direct) <= 6.0


def test_defended_resize_is_reproducible_from_policy_seed():
    img = make_scene(np.random.default_rng(74), (100, 100), 1)
    policy = PreventionPolicy(mode="random_intermediate", final_size=(25, 25), seed=9)
    npt.assert_array_equal(defended_resize(img, policy).pixels, defended_resize(img, policy).pixels)


def test_policy_validation():
    with pytest.raises(PolicyRangeInvalid):
        PreventionPolicy(mode="shuffle", final_size=(32, 32))
    with pytest.raises(PolicyRangeInvalid):
        PreventionPolicy(mode="random_intermediate", final_size=(32, 32), intermediate_range=(0.9, 0.6))
    with pytest.raises(PolicyRangeInvalid):
        PreventionPolicy(mode="random_intermediate", final_size=(32, 32), intermediate_range=(0.5, 1.2))
    with pytest.raises(PolicyRangeInvalid):
        PreventionPolicy(mode="random_intermediate", final_size=(0, 32))


def test_range_below_final_size_is_rejected():
    img = make_scene(np.random.default_rng(75), (96, 96), 1)
    policy = PreventionPolicy(
        mode="random_intermediate", final_size=(32, 32), intermediate_range=(0.2, 0.3)
    )
    with pytest.raises(PolicyRangeInvalid):
        defended_resize(img, policy)


def test_band_that_is_all_multiples_exhausts_rejections():
    img = make_scene(np.random.default_rng(76), (128, 128), 1)
    policy = PreventionPolicy(
        mode="random_intermediate", final_size=(32, 32), intermediate_range=(0.5, 0.5)
    )
    with pytest.raises(PolicyRangeInvalid, match="multiple"):
        defended_resize(img, policy)


def test_band_without_integer_sizes_is_rejected():
    img = make_scene(np.random.default_rng(77), (97, 97), 1)
    policy = PreventionPolicy(
        mode="random_intermediate", final_size=(32, 32), intermediate_range=(0.703, 0.705)
    )
    with pytest.raises(PolicyRangeInvalid, match="integer"):
        defended_resize(img, policy)


def test_target_must_match_policy_final_size(crafted):
    _, target, result = crafted
    policy = PreventionPolicy(mode="nondefault_size", final_size=(48, 48))
    with pytest.raises(DimensionMismatch):
        attack_survival_rate(result, target, policy, trials=1)


def test_trials_must_be_positive(crafted):
    _, target, result = crafted
    policy = PreventionPolicy(mode="nondefault_size", final_size=(32, 32))
    with pytest.raises(ValueError):
        attack_survival_rate(result, target, policy, trials=0)
