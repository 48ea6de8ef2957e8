"""Poisoned detection-dataset assembly.

Builds a VOC-style dataset tree (JPEGImages/ + Annotations/, one XML per
image) from a benign corpus plus crafted attack images, under a poison-rate
budget. Annotations on poisons must describe the attack image's *visible*
content: in cloaking mode no box may touch the pair's difference region, in
misclassification mode exactly one box of the attacker's class must cover it.
A JSON manifest recording which images are poisons is written outside the
dataset tree (it exists for evaluation only).

XML is emitted from a fixed template (tabs, fixed field order) so re-emitting
unchanged inputs is byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import os
import shutil
import xml.etree.ElementTree as ET

from .crafting import AttackResult
from .errors import (
    AllScenesEmpty,
    AnnotationContentMismatch,
    DimensionMismatch,
    InsufficientCandidates,
)
from .raster import save_png
from .replica import BBox

VOC_CATEGORIES = (
    "aeroplane", "bicycle", "bird", "boat", "bottle",
    "bus", "car", "cat", "chair", "cow",
    "diningtable", "dog", "horse", "motorbike", "person",
    "pottedplant", "sheep", "sofa", "train", "tvmonitor",
)

ORIENTATIONS = ("front_facing", "back_facing", "side", "unknown")
QUALITIES = ("salient_trigger", "weak_trigger")
MODES = ("cloaking", "misclassification")


@dataclasses.dataclass(frozen=True)
class ObjectAnnotation:
    class_label: str
    bbox: tuple[int, int, int, int]  # (xmin, ymin, xmax, ymax), 0-based pixels
    pose: str = "Unspecified"
    truncated: int = 0
    difficult: int = 0

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bbox
        if xmin < 0 or ymin < 0 or xmin >= xmax or ymin >= ymax:
            raise ValueError(f"malformed bbox {self.bbox}")


@dataclasses.dataclass(frozen=True)
class AnnotatedSample:
    image_path: str
    width: int
    height: int
    objects: tuple[ObjectAnnotation, ...] = ()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad sample dimensions {self.width}x{self.height}")
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclasses.dataclass(frozen=True)
class PoisonCandidate:
    """One (pair, metadata) entry of the attacker's candidate pool."""

    pair: object  # ReplicaPair or a path/reference string
    scene_id: str
    candidate_id: str
    orientation: str = "unknown"
    quality: str = "weak_trigger"

    def __post_init__(self):
        if not self.scene_id:
            raise ValueError("scene_id must be non-empty")
        if not self.candidate_id:
            raise ValueError("candidate_id must be non-empty")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation {self.orientation!r} not in {ORIENTATIONS}")
        if self.quality not in QUALITIES:
            raise ValueError(f"quality {self.quality!r} not in {QUALITIES}")


@dataclasses.dataclass(frozen=True)
class PoisonPlan:
    mode: str
    poison_rate: float
    training_set_size: int
    candidate_pool: tuple[PoisonCandidate, ...] = ()
    input_sizes: tuple[tuple[int, int], ...] = ()
    target_class: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode {self.mode!r} not in {MODES}")
        if (self.target_class is not None) != (self.mode == "misclassification"):
            raise ValueError("target_class must be given exactly when mode is misclassification")
        if self.target_class is not None and self.target_class not in VOC_CATEGORIES:
            raise ValueError(f"target_class {self.target_class!r} not a known category")
        if self.poison_count < 1:
            raise ValueError(
                f"poison_rate {self.poison_rate} x {self.training_set_size} rounds to zero"
            )
        object.__setattr__(self, "candidate_pool", tuple(self.candidate_pool))
        object.__setattr__(self, "input_sizes", tuple(tuple(s) for s in self.input_sizes))

    @property
    def poison_count(self) -> int:
        return round(self.poison_rate * self.training_set_size)


def select_poison_set(plan: PoisonPlan, seed: int = 0) -> list[PoisonCandidate]:
    """Pick the poison set per the selection criteria.

    Scenes are visited round-robin in lexicographic scene order so per-scene
    counts differ by at most one; within a scene, front-facing candidates come
    first, then salient triggers, ties broken by candidate_id. The algorithm
    is deterministic; ``seed`` is accepted for interface stability (no stage
    currently randomizes).
    """
    del seed
    pool = list(plan.candidate_pool)
    if not pool:
        raise AllScenesEmpty("candidate pool is empty")
    count = plan.poison_count
    if len(pool) < count:
        raise InsufficientCandidates(f"pool has {len(pool)} candidates, need {count}")

    def preference(c: PoisonCandidate):
        return (
            0 if c.orientation == "front_facing" else 1,
            0 if c.quality == "salient_trigger" else 1,
            c.candidate_id,
        )

    by_scene: dict[str, list[PoisonCandidate]] = {}
    for cand in pool:
        by_scene.setdefault(cand.scene_id, []).append(cand)
    queues = {sid: sorted(cands, key=preference) for sid, cands in by_scene.items()}
    scene_order = sorted(queues)

    selected: list[PoisonCandidate] = []
    while len(selected) < count:
        progressed = False
        for sid in scene_order:
            if len(selected) >= count:
                break
            if queues[sid]:
                selected.append(queues[sid].pop(0))
                progressed = True
        if not progressed:
            raise InsufficientCandidates("all scene queues exhausted")
    return selected


# ---------------------------------------------------------------------------
# VOC-style XML annotation files
# ---------------------------------------------------------------------------

_XML_HEADER = "<annotation>\n\t<folder>VOC</folder>\n\t<filename>{filename}</filename>\n"
_XML_SIZE = (
    "\t<size>\n\t\t<width>{width}</width>\n\t\t<height>{height}</height>\n"
    "\t\t<depth>{depth}</depth>\n\t</size>\n\t<segmented>0</segmented>\n"
)
_XML_OBJECT = (
    "\t<object>\n\t\t<name>{name}</name>\n\t\t<pose>{pose}</pose>\n"
    "\t\t<truncated>{truncated}</truncated>\n\t\t<difficult>{difficult}</difficult>\n"
    "\t\t<bndbox>\n\t\t\t<xmin>{xmin}</xmin>\n\t\t\t<ymin>{ymin}</ymin>\n"
    "\t\t\t<xmax>{xmax}</xmax>\n\t\t\t<ymax>{ymax}</ymax>\n\t\t</bndbox>\n\t</object>\n"
)


def annotation_xml(sample: AnnotatedSample, depth: int = 3) -> str:
    """Render the sample as VOC-convention XML (deterministic bytes)."""
    parts = [_XML_HEADER.format(filename=os.path.basename(sample.image_path))]
    parts.append(_XML_SIZE.format(width=sample.width, height=sample.height, depth=depth))
    for obj in sample.objects:
        xmin, ymin, xmax, ymax = obj.bbox
        parts.append(
            _XML_OBJECT.format(
                name=obj.class_label,
                pose=obj.pose,
                truncated=obj.truncated,
                difficult=obj.difficult,
                xmin=xmin,
                ymin=ymin,
                xmax=xmax,
                ymax=ymax,
            )
        )
    parts.append("</annotation>\n")
    return "".join(parts)


def write_annotation(sample: AnnotatedSample, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(annotation_xml(sample))


def parse_annotation(path) -> AnnotatedSample:
    root = ET.parse(path).getroot()
    size = root.find("size")
    objects = []
    for node in root.findall("object"):
        box = node.find("bndbox")
        objects.append(
            ObjectAnnotation(
                class_label=node.findtext("name"),
                bbox=(
                    int(box.findtext("xmin")),
                    int(box.findtext("ymin")),
                    int(box.findtext("xmax")),
                    int(box.findtext("ymax")),
                ),
                pose=node.findtext("pose", "Unspecified"),
                truncated=int(node.findtext("truncated", "0")),
                difficult=int(node.findtext("difficult", "0")),
            )
        )
    return AnnotatedSample(
        image_path=root.findtext("filename"),
        width=int(size.findtext("width")),
        height=int(size.findtext("height")),
        objects=tuple(objects),
    )


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class PoisonRecord:
    """An attack image, its clean annotation, and the contract context."""

    result: AttackResult
    sample: AnnotatedSample
    diff_region: BBox | None = None  # in attack-image (source) coordinates
    mode: str | None = None
    target_class: str | None = None


def _boxes_intersect(bbox: tuple[int, int, int, int], region: BBox) -> bool:
    xmin, ymin, xmax, ymax = bbox
    rx, ry, rw, rh = region
    return xmin < rx + rw and rx < xmax and ymin < ry + rh and ry < ymax


def _box_covers(bbox: tuple[int, int, int, int], region: BBox) -> bool:
    xmin, ymin, xmax, ymax = bbox
    rx, ry, rw, rh = region
    return xmin <= rx and ymin <= ry and xmax >= rx + rw and ymax >= ry + rh


def _check_poison_contract(record: PoisonRecord) -> None:
    if record.diff_region is None or record.mode is None:
        return
    region = record.diff_region
    if record.mode == "cloaking":
        for obj in record.sample.objects:
            if _boxes_intersect(obj.bbox, region):
                raise AnnotationContentMismatch(
                    f"{record.sample.image_path}: cloaking poison has bbox "
                    f"{obj.bbox} intersecting difference region {region}"
                )
    elif record.mode == "misclassification":
        covering = [
            obj
            for obj in record.sample.objects
            if obj.class_label == record.target_class and _box_covers(obj.bbox, region)
        ]
        if len(covering) != 1:
            raise AnnotationContentMismatch(
                f"{record.sample.image_path}: misclassification poison needs exactly "
                f"one {record.target_class!r} bbox covering {region}, found {len(covering)}"
            )
    else:
        raise ValueError(f"unknown poison mode {record.mode!r}")


def emit_dataset(benign, poisons, out_dir, manifest_path=None) -> dict:
    """Write the dataset tree and the (out-of-tree) evaluation manifest.

    ``benign`` is a list of AnnotatedSample; an annotation file is written for
    every entry, and the image file is copied when its source path exists
    (synthetic manifests need no pixel data). ``poisons`` is a list of
    PoisonRecord or plain (AttackResult, AnnotatedSample) tuples; attack
    images are always written as PNG.
    """
    records = []
    for p in poisons:
        if isinstance(p, PoisonRecord):
            records.append(p)
        else:
            result, sample = p
            records.append(PoisonRecord(result=result, sample=sample))
    for record in records:
        img = record.result.attack_image
        if (img.height, img.width) != (record.sample.height, record.sample.width):
            raise DimensionMismatch(
                f"{record.sample.image_path}: annotation says "
                f"{record.sample.height}x{record.sample.width}, attack image is "
                f"{img.height}x{img.width}"
            )
        _check_poison_contract(record)

    img_dir = os.path.join(out_dir, "JPEGImages")
    ann_dir = os.path.join(out_dir, "Annotations")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(ann_dir, exist_ok=True)

    benign_names = []
    missing = []
    for sample in benign:
        name = os.path.basename(sample.image_path)
        stem = os.path.splitext(name)[0]
        write_annotation(sample, os.path.join(ann_dir, f"{stem}.xml"))
        if os.path.isfile(sample.image_path):
            dst = os.path.join(img_dir, name)
            if os.path.abspath(sample.image_path) != os.path.abspath(dst):
                shutil.copyfile(sample.image_path, dst)
        else:
            missing.append(name)
        benign_names.append(name)

    poison_names = []
    for record in records:
        name = os.path.basename(record.sample.image_path)
        stem = os.path.splitext(name)[0]
        save_png(record.result.attack_image, os.path.join(img_dir, f"{stem}.png"))
        write_annotation(record.sample, os.path.join(ann_dir, f"{stem}.xml"))
        poison_names.append(f"{stem}.png")

    benign_count = len(benign_names)
    poison_count = len(poison_names)
    manifest = {
        "benign_count": benign_count,
        "poison_count": poison_count,
        "poison_rate": round(poison_count / benign_count, 6) if benign_count else 0.0,
        "benign": sorted(benign_names),
        "poisons": sorted(poison_names),
        "images_missing": sorted(missing),
    }
    if manifest_path is None:
        manifest_path = os.path.join(
            os.path.dirname(os.path.abspath(out_dir)),
            os.path.basename(os.path.normpath(out_dir)) + "_manifest.json",
        )
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest["manifest_path"] = manifest_path
    return manifest


def plan_multisize_budget(base_rate: float, input_sizes, training_set_size: int) -> dict:
    """Budget arithmetic for attacking several victim input sizes at once.

    Each size gets its own disjoint poison subset of round(base_rate * corpus)
    images crafted with that size's operator, so the total rate is the base
    rate times the number of sizes.
    """
    if base_rate <= 0:
        raise ValueError(f"base_rate must be > 0, got {base_rate}")
    sizes = [tuple(s) for s in input_sizes]
    if not sizes:
        raise ValueError("input_sizes must be non-empty")
    per_size = round(base_rate * training_set_size)
    counts = {f"{h}x{w}": per_size for h, w in sizes}
    return {
        "total_rate": base_rate * len(sizes),
        "per_size_counts": counts,
        "total_count": per_size * len(sizes),
        "training_set_size": int(training_set_size),
    }


def _iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def curator_audit(sample: AnnotatedSample, image=None) -> dict:
    """Machine-checkable stand-in for a human annotation audit.

    Flags structural problems only — out-of-range or duplicate boxes, unknown
    class labels, a dimension mismatch with the supplied image. It sees the
    large image, so (by design) it says nothing about scaling attacks.
    """
    issues = []
    if image is not None and (image.height, image.width) != (sample.height, sample.width):
        issues.append(
            f"image is {image.height}x{image.width}, annotation says "
            f"{sample.height}x{sample.width}"
        )
    for i, obj in enumerate(sample.objects):
        xmin, ymin, xmax, ymax = obj.bbox
        if xmax > sample.width or ymax > sample.height:
            issues.append(f"object {i}: bbox out of range {obj.bbox}")
        if obj.class_label not in VOC_CATEGORIES:
            issues.append(f"object {i}: unknown class {obj.class_label!r}")
        for j in range(i + 1, len(sample.objects)):
            other = sample.objects[j]
            if (
                obj.class_label == other.class_label
                and _iou(obj.bbox, other.bbox) > 0.9
            ):
                issues.append(f"objects {i} and {j}: duplicate boxes (IoU > 0.9)")
    return {"consistent": not issues, "issues": issues}
