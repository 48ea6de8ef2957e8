"""Target / clean-replica pair construction and auditing.

A pair couples a target image (contains the trigger object) with a replica of
the same scene without it; the two must be identical outside a declared
difference region. Pairs are either composited digitally from a scene plus a
trigger patch, or supplied externally (e.g. photographed and inpainted) and
audited for consistency.
"""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np

from .errors import (
    DegeneratePair,
    DimensionMismatch,
    PlacementOutOfBounds,
    RegionTooLarge,
)
from .raster import RasterImage, load_image, save_png

# Construction-time slack: outside the declared region (dilated by 2 pixels)
# the pair may differ by at most 2 intensity units, absorbing inpainting or
# recompression residue in external pairs.
_OUTSIDE_DILATION = 2
_OUTSIDE_TOLERANCE = 2.0
_MAX_REGION_FRACTION = 0.5

BBox = tuple[int, int, int, int]  # (x, y, w, h)


def _region_mask(shape: tuple[int, int], region: BBox, dilate: int = 0) -> np.ndarray:
    """Boolean mask of the region (optionally dilated), True inside."""
    h, w = shape
    x, y, rw, rh = region
    x0 = max(0, x - dilate)
    y0 = max(0, y - dilate)
    x1 = min(w, x + rw + dilate)
    y1 = min(h, y + rh + dilate)
    mask = np.zeros((h, w), dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


@dataclasses.dataclass(frozen=True)
class ReplicaPair:
    """Target and replica of the same scene, differing only inside diff_region."""

    target: RasterImage
    replica: RasterImage
    diff_region: BBox
    mode: str  # "composited" or "external"

    def __post_init__(self):
        if self.target.pixels.shape != self.replica.pixels.shape:
            raise DimensionMismatch(
                f"target {self.target.pixels.shape} vs replica "
                f"{self.replica.pixels.shape}"
            )
        if self.mode not in ("composited", "external"):
            raise ValueError(f"mode must be 'composited' or 'external', got {self.mode!r}")
        x, y, w, h = self.diff_region
        if w <= 0 or h <= 0:
            raise DegeneratePair(f"difference region {self.diff_region} is empty")
        if x < 0 or y < 0 or x + w > self.target.width or y + h > self.target.height:
            raise PlacementOutOfBounds(
                f"region {self.diff_region} outside {self.target.height}x{self.target.width}"
            )
        area_fraction = (w * h) / (self.target.width * self.target.height)
        if area_fraction > _MAX_REGION_FRACTION:
            raise RegionTooLarge(
                f"region covers {area_fraction:.0%} of the image (limit "
                f"{_MAX_REGION_FRACTION:.0%})"
            )
        outside = ~_region_mask(
            (self.target.height, self.target.width), self.diff_region, _OUTSIDE_DILATION
        )
        diff = np.abs(self.target.pixels - self.replica.pixels).max(axis=2)
        if diff[outside].size and diff[outside].max() > _OUTSIDE_TOLERANCE:
            raise ValueError(
                f"pair differs by {diff[outside].max():.1f} outside the declared "
                f"region (allowed {_OUTSIDE_TOLERANCE})"
            )
        if diff.max() == 0.0:
            raise DegeneratePair("target and replica are identical")


@dataclasses.dataclass(frozen=True)
class TriggerAsset:
    """A patch plus a binary transparency mask and a human-readable label."""

    patch: RasterImage
    mask: np.ndarray  # (h, w) values in {0, 1}
    semantic_label: str = ""

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=np.float64)
        if mask.shape != (self.patch.height, self.patch.width):
            raise DimensionMismatch(
                f"mask {mask.shape} != patch {self.patch.height}x{self.patch.width}"
            )
        if not np.isin(mask, (0.0, 1.0)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)


def composite_pair(scene: RasterImage, trigger: TriggerAsset, placement: BBox) -> ReplicaPair:
    """Alpha-blend the trigger onto the scene; the untouched scene is the replica."""
    x, y, w, h = placement
    if (w, h) != (trigger.patch.width, trigger.patch.height):
        raise PlacementOutOfBounds(
            f"placement {w}x{h} != trigger patch "
            f"{trigger.patch.width}x{trigger.patch.height}"
        )
    if x < 0 or y < 0 or x + w > scene.width or y + h > scene.height:
        raise PlacementOutOfBounds(
            f"placement {placement} outside scene {scene.height}x{scene.width}"
        )
    if trigger.mask.max() == 0.0:
        raise DegeneratePair("trigger mask is fully transparent")
    target = scene.pixels.copy()
    alpha = trigger.mask[:, :, np.newaxis]
    patch = trigger.patch.pixels
    if patch.shape[2] != scene.channels:
        if patch.shape[2] == 1:
            patch = np.repeat(patch, scene.channels, axis=2)
        else:
            raise DimensionMismatch(
                f"trigger has {patch.shape[2]} channels, scene {scene.channels}"
            )
    region = target[y : y + h, x : x + w, :]
    target[y : y + h, x : x + w, :] = alpha * patch + (1.0 - alpha) * region
    return ReplicaPair(
        target=RasterImage(target),
        replica=scene,
        diff_region=placement,
        mode="composited",
    )


def audit_pair(pair: ReplicaPair, tolerance: float = _OUTSIDE_TOLERANCE) -> dict:
    """Check that the pair differs only inside its declared region.

    Reports the maximum difference outside the declared region, the region's
    area fraction, and the tight bounding box of the pixels that actually
    differ (for comparison against the declared one).
    """
    if pair.target.pixels.shape != pair.replica.pixels.shape:
        raise DimensionMismatch("pair members differ in shape")
    diff = np.abs(pair.target.pixels - pair.replica.pixels).max(axis=2)
    outside = ~_region_mask((pair.target.height, pair.target.width), pair.diff_region)
    outside_max = float(diff[outside].max()) if diff[outside].size else 0.0
    ys, xs = np.nonzero(diff > 0)
    if ys.size:
        tight = (int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))
    else:
        tight = (0, 0, 0, 0)
    x, y, w, h = pair.diff_region
    coverage = (w * h) / (pair.target.width * pair.target.height)
    return {
        "outside_max_diff": outside_max,
        "region_coverage": float(coverage),
        "tight_diff_region": tight,
        "pass": bool(outside_max <= tolerance),
    }


def save_pair(pair: ReplicaPair, out_dir, stem: str, semantic_label: str = "") -> str:
    """Write target/replica PNGs plus a JSON manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    target_path = os.path.join(out_dir, f"{stem}_target.png")
    replica_path = os.path.join(out_dir, f"{stem}_replica.png")
    save_png(pair.target, target_path)
    save_png(pair.replica, replica_path)
    manifest = {
        "target_path": os.path.basename(target_path),
        "replica_path": os.path.basename(replica_path),
        "diff_region": list(pair.diff_region),
        "mode": pair.mode,
        "semantic_label": semantic_label,
    }
    manifest_path = os.path.join(out_dir, f"{stem}_pair.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_pair(manifest_path) -> ReplicaPair:
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(manifest_path)
    return ReplicaPair(
        target=load_image(os.path.join(base, manifest["target_path"])),
        replica=load_image(os.path.join(base, manifest["replica_path"])),
        diff_region=tuple(manifest["diff_region"]),
        mode=manifest["mode"],
    )
