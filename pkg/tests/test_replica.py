import numpy as np
import numpy.testing as npt
import pytest

from scalecloak.errors import (
    DegeneratePair,
    DimensionMismatch,
    PlacementOutOfBounds,
    RegionTooLarge,
)
from scalecloak.raster import from_array
from scalecloak.replica import (
    ReplicaPair,
    TriggerAsset,
    audit_pair,
    composite_pair,
    load_pair,
    save_pair,
)
from scalecloak.synth import make_pair, make_scene, make_trigger


def _pair(seed=30, size=(48, 48), channels=3):
    return make_pair(np.random.default_rng(seed), size, channels=channels)


def test_composited_pair_passes_audit_with_zero_outside_diff():
    pair = _pair()
    report = audit_pair(pair)
    assert report["pass"] is True
    assert report["outside_max_diff"] == 0.0
    assert 0.0 < report["region_coverage"] <= 0.5


def test_tight_diff_region_lies_inside_declared_region():
    pair = _pair(seed=31)
    tx, ty, tw, th = audit_pair(pair)["tight_diff_region"]
    x, y, w, h = pair.diff_region
    assert tw > 0 and th > 0
    assert x <= tx and y <= ty
    assert tx + tw <= x + w and ty + th <= y + h


def test_outside_halo_fails_only_below_its_amplitude():
    scene = make_scene(np.random.default_rng(32), (32, 32), 1)
    trigger = make_trigger(np.random.default_rng(33), (8, 8), 1)
    pair = composite_pair(scene, trigger, (12, 12, 8, 8))
    # Inject a 1.5-unit halo just outside the declared region (within the
    # construction-time dilation band, so the pair itself stays valid).
    target_px = pair.target.pixels.copy()
    target_px[11, 12, 0] = np.clip(target_px[11, 12, 0] + 1.5, 0, 255)
    halo_pair = ReplicaPair(
        target=from_array(target_px),
        replica=pair.replica,
        diff_region=pair.diff_region,
        mode="composited",
    )
    assert audit_pair(halo_pair, tolerance=2.0)["pass"] is True
    assert audit_pair(halo_pair, tolerance=1.0)["pass"] is False
    assert audit_pair(halo_pair)["outside_max_diff"] == pytest.approx(1.5)


def test_pair_construction_rejects_far_outside_differences():
    scene = make_scene(np.random.default_rng(34), (32, 32), 1)
    trigger = make_trigger(np.random.default_rng(35), (8, 8), 1)
    pair = composite_pair(scene, trigger, (12, 12, 8, 8))
    target_px = pair.target.pixels.copy()
    target_px[0, 0, 0] = np.clip(target_px[0, 0, 0] + 30.0, 0, 255)
    with pytest.raises(ValueError, match="outside"):
        ReplicaPair(
            target=from_array(target_px),
            replica=pair.replica,
            diff_region=pair.diff_region,
            mode="composited",
        )


def test_identical_members_are_degenerate():
    scene = make_scene(np.random.default_rng(36), (24, 24), 1)
    with pytest.raises(DegeneratePair):
        ReplicaPair(target=scene, replica=scene, diff_region=(4, 4, 8, 8), mode="composited")


def test_empty_region_and_out_of_bounds_and_oversize():
    scene = make_scene(np.random.default_rng(37), (24, 24), 1)
    other = from_array(np.clip(scene.pixels + 5.0, 0, 255))
    with pytest.raises(DegeneratePair):
        ReplicaPair(target=other, replica=scene, diff_region=(4, 4, 0, 8), mode="composited")
    with pytest.raises(PlacementOutOfBounds):
        ReplicaPair(target=other, replica=scene, diff_region=(20, 20, 8, 8), mode="composited")
    with pytest.raises(RegionTooLarge):
        ReplicaPair(target=other, replica=scene, diff_region=(0, 0, 24, 24), mode="composited")


def test_composite_validates_placement_and_mask():
    scene = make_scene(np.random.default_rng(38), (32, 32), 3)
    trigger = make_trigger(np.random.default_rng(39), (8, 8), 3)
    with pytest.raises(PlacementOutOfBounds):
        composite_pair(scene, trigger, (0, 0, 9, 8))  # placement != patch size
    with pytest.raises(PlacementOutOfBounds):
        composite_pair(scene, trigger, (30, 30, 8, 8))
    clear = TriggerAsset(patch=trigger.patch, mask=np.zeros((8, 8)))
    with pytest.raises(DegeneratePair):
        composite_pair(scene, clear, (4, 4, 8, 8))
    with pytest.raises(ValueError):
        TriggerAsset(patch=trigger.patch, mask=np.full((8, 8), 0.5))
    with pytest.raises(DimensionMismatch):
        TriggerAsset(patch=trigger.patch, mask=np.ones((7, 8)))


def test_single_channel_trigger_broadcasts_onto_color_scene():
    scene = make_scene(np.random.default_rng(40), (32, 32), 3)
    trigger = make_trigger(np.random.default_rng(41), (8, 8), 1)
    pair = composite_pair(scene, trigger, (4, 4, 8, 8))
    assert pair.target.channels == 3
    region = pair.target.pixels[4:12, 4:12, :]
    npt.assert_array_equal(region[:, :, 0], region[:, :, 1])


def test_partial_alpha_keeps_scene_outside_mask():
    scene = make_scene(np.random.default_rng(42), (32, 32), 1)
    patch = make_trigger(np.random.default_rng(43), (8, 8), 1).patch
    mask = np.zeros((8, 8))
    mask[2:6, 2:6] = 1.0
    pair = composite_pair(scene, TriggerAsset(patch=patch, mask=mask), (10, 10, 8, 8))
    diff = np.abs(pair.target.pixels - pair.replica.pixels)[:, :, 0]
    assert diff[10:12, 10:18].max() == 0.0  # masked-out rows of the patch
    assert diff[12:16, 12:16].max() > 0.0


def test_save_load_round_trip_preserves_pair(tmp_path):
    pair = _pair(seed=44)
    manifest = save_pair(pair, tmp_path, "demo", semantic_label="stop sign stand-in")
    back = load_pair(manifest)
    assert back.diff_region == pair.diff_region
    assert back.mode == pair.mode
    # File I/O quantizes to 8 bits; the loaded pair must still audit clean.
    report = audit_pair(back)
    assert report["pass"] is True
    assert report["outside_max_diff"] == 0.0
    npt.assert_allclose(back.target.pixels, pair.target.pixels, atol=0.5)
