"""Seeded synthetic fixtures: scenes, triggers, pairs, and benign corpora.

Scenes are deliberately smooth (gradients, soft blobs, gentle waves, no pixel
noise) so that low-pass probes see them as natural; triggers are high-contrast
patterns so that hiding or revealing them is unambiguous. Everything is a pure
function of the supplied generator, so fixtures are reproducible from a seed.
"""

from __future__ import annotations

import numpy as np

from .poisoning import VOC_CATEGORIES, AnnotatedSample, ObjectAnnotation, PoisonCandidate
from .raster import RasterImage
from .replica import ReplicaPair, TriggerAsset, composite_pair

ORIENTATION_CYCLE = ("front_facing", "front_facing", "front_facing", "side", "back_facing")
QUALITY_CYCLE = ("salient_trigger", "salient_trigger", "weak_trigger")


def make_scene(rng: np.random.Generator, size: tuple[int, int], channels: int = 3) -> RasterImage:
    """A smooth, low-frequency scene image."""
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy /= max(h - 1, 1)
    xx /= max(w - 1, 1)
    planes = []
    for _ in range(channels):
        base = rng.uniform(70.0, 180.0)
        gx = rng.uniform(-45.0, 45.0)
        gy = rng.uniform(-45.0, 45.0)
        plane = base + gx * xx + gy * yy
        plane += rng.uniform(5.0, 25.0) * np.sin(
            2 * np.pi * (rng.uniform(0.5, 2.0) * xx + rng.uniform(0, 1))
        )
        plane += rng.uniform(5.0, 25.0) * np.cos(
            2 * np.pi * (rng.uniform(0.5, 2.0) * yy + rng.uniform(0, 1))
        )
        for _ in range(3):
            cy, cx = rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)
            sigma = rng.uniform(0.08, 0.25)
            amp = rng.uniform(-35.0, 35.0)
            plane += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
        planes.append(plane)
    img = np.stack(planes, axis=2)
    return RasterImage(np.clip(img, 10.0, 245.0))


def make_trigger(
    rng: np.random.Generator, size: tuple[int, int], channels: int = 3
) -> TriggerAsset:
    """A high-contrast patch (bright disk + stripes on a dark field), fully opaque."""
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    radius = min(h, w) * 0.35
    disk = ((yy - cy) ** 2 + (xx - cx) ** 2) <= radius**2
    stripes = ((xx // max(2, w // 8)) % 2).astype(bool)
    planes = []
    for c in range(channels):
        lo = rng.uniform(5.0, 40.0)
        hi = rng.uniform(200.0, 250.0)
        plane = np.where(stripes, lo + 25.0, lo)
        plane = np.where(disk, hi if c % 2 == 0 else hi - 60.0, plane)
        planes.append(plane)
    patch = RasterImage(np.clip(np.stack(planes, axis=2), 0.0, 255.0))
    mask = np.ones((h, w))
    return TriggerAsset(patch=patch, mask=mask, semantic_label="synthetic trigger patch")


def make_pair(
    rng: np.random.Generator,
    src_size: tuple[int, int],
    trigger_fraction: float = 0.25,
    channels: int = 3,
) -> ReplicaPair:
    """Scene + trigger composited into a (target, replica) pair at source size."""
    h, w = src_size
    scene = make_scene(rng, src_size, channels)
    th = max(4, int(round(h * trigger_fraction)))
    tw = max(4, int(round(w * trigger_fraction)))
    trigger = make_trigger(rng, (th, tw), channels)
    x = int(rng.integers(0, w - tw + 1))
    y = int(rng.integers(0, h - th + 1))
    return composite_pair(scene, trigger, (x, y, tw, th))


def make_benign_samples(
    count: int,
    size: tuple[int, int] = (375, 500),
    seed: int = 0,
    name_format: str = "benign_{:06d}.jpg",
) -> list[AnnotatedSample]:
    """Annotation-only benign corpus entries (no image files on disk)."""
    rng = np.random.default_rng(seed)
    h, w = size
    samples = []
    for i in range(count):
        n_objects = int(rng.integers(1, 4))
        objects = []
        for _ in range(n_objects):
            bw = int(rng.integers(w // 8, w // 2))
            bh = int(rng.integers(h // 8, h // 2))
            xmin = int(rng.integers(0, w - bw))
            ymin = int(rng.integers(0, h - bh))
            label = VOC_CATEGORIES[int(rng.integers(0, len(VOC_CATEGORIES)))]
            objects.append(
                ObjectAnnotation(class_label=label, bbox=(xmin, ymin, xmin + bw, ymin + bh))
            )
        samples.append(
            AnnotatedSample(
                image_path=name_format.format(i),
                width=w,
                height=h,
                objects=tuple(objects),
            )
        )
    return samples


def make_candidate_pool(
    rng: np.random.Generator,
    scenes: int = 6,
    per_scene: int = 10,
    src_size: tuple[int, int] | None = None,
    channels: int = 3,
) -> list[PoisonCandidate]:
    """A tagged candidate pool; pairs are materialized only when a size is given."""
    pool = []
    k = 0
    for s in range(scenes):
        for j in range(per_scene):
            pair = make_pair(rng, src_size, channels=channels) if src_size else None
            pool.append(
                PoisonCandidate(
                    pair=pair,
                    scene_id=f"scene_{s:02d}",
                    candidate_id=f"cand_{k:04d}",
                    orientation=ORIENTATION_CYCLE[j % len(ORIENTATION_CYCLE)],
                    quality=QUALITY_CYCLE[j % len(QUALITY_CYCLE)],
                )
            )
            k += 1
    return pool
