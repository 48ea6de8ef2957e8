"""Craft, audit, and defend against image-scaling camouflage attacks.

An attack image looks like an ordinary photograph at full resolution but
turns into a different, attacker-chosen picture the moment a training
pipeline downscales it. This package provides the scaling operators and
the constrained crafting solver, a replica-pair workflow for building
clean-looking sources, dataset poisoning under a rate budget with
annotation-contract checks, detection probes (scaling, filtering,
spectral), and prevention policies that break the attack at ingestion.
"""

from .crafting import (
    AttackJob,
    AttackResult,
    append_craft_log,
    craft,
    craft_no_replica,
    perceptibility,
    verify,
)
from .detection import (
    DetectionConfig,
    DetectionVerdict,
    detect,
    evaluate_corpus,
    filtering_test,
    report_to_csv,
    report_to_json,
    scaling_test,
    steganalysis_test,
)
from .errors import (
    AllScenesEmpty,
    AnnotationContentMismatch,
    ConfigError,
    DegeneratePair,
    DimensionMismatch,
    DownscaleRequested,
    EmptyCorpus,
    ImageTooSmall,
    Infeasible,
    InsufficientCandidates,
    PlacementOutOfBounds,
    PolicyRangeInvalid,
    RegionTooLarge,
    ScaleCloakError,
    UnsupportedAlgorithm,
    UpscaleRequested,
)
from .metrics import max_abs_diff, mse, ssim
from .poisoning import (
    VOC_CATEGORIES,
    AnnotatedSample,
    ObjectAnnotation,
    PoisonCandidate,
    PoisonPlan,
    PoisonRecord,
    annotation_xml,
    curator_audit,
    emit_dataset,
    parse_annotation,
    plan_multisize_budget,
    select_poison_set,
    write_annotation,
)
from .prevention import PreventionPolicy, attack_survival_rate, defended_resize
from .raster import RasterImage, from_array, load_image, quantize, save_jpeg, save_png
from .replica import ReplicaPair, TriggerAsset, audit_pair, composite_pair, load_pair, save_pair
from .scaleops import (
    ALGORITHMS,
    MODEL_PROFILES,
    InputSizeProfile,
    ScalingOperator,
    build_operator,
    downscale,
    dump_operator,
    load_operator,
    profile_for,
    resize_direct,
    upscale,
)
from .synth import (
    make_benign_samples,
    make_candidate_pool,
    make_pair,
    make_scene,
    make_trigger,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "AllScenesEmpty",
    "AnnotatedSample",
    "AnnotationContentMismatch",
    "AttackJob",
    "AttackResult",
    "ConfigError",
    "DegeneratePair",
    "DetectionConfig",
    "DetectionVerdict",
    "DimensionMismatch",
    "DownscaleRequested",
    "EmptyCorpus",
    "ImageTooSmall",
    "Infeasible",
    "InputSizeProfile",
    "InsufficientCandidates",
    "MODEL_PROFILES",
    "ObjectAnnotation",
    "PlacementOutOfBounds",
    "PoisonCandidate",
    "PoisonPlan",
    "PoisonRecord",
    "PolicyRangeInvalid",
    "PreventionPolicy",
    "RasterImage",
    "RegionTooLarge",
    "ReplicaPair",
    "ScaleCloakError",
    "ScalingOperator",
    "TriggerAsset",
    "UnsupportedAlgorithm",
    "UpscaleRequested",
    "VOC_CATEGORIES",
    "annotation_xml",
    "append_craft_log",
    "attack_survival_rate",
    "audit_pair",
    "build_operator",
    "composite_pair",
    "craft",
    "craft_no_replica",
    "curator_audit",
    "defended_resize",
    "detect",
    "downscale",
    "dump_operator",
    "emit_dataset",
    "evaluate_corpus",
    "filtering_test",
    "from_array",
    "load_image",
    "load_operator",
    "load_pair",
    "make_benign_samples",
    "make_candidate_pool",
    "make_pair",
    "make_scene",
    "make_trigger",
    "max_abs_diff",
    "mse",
    "parse_annotation",
    "perceptibility",
    "plan_multisize_budget",
    "profile_for",
    "quantize",
    "report_to_csv",
    "report_to_json",
    "resize_direct",
    "save_jpeg",
    "save_pair",
    "save_png",
    "scaling_test",
    "select_poison_set",
    "ssim",
    "steganalysis_test",
    "upscale",
    "verify",
    "write_annotation",
]
