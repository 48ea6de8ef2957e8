"""Prevention procedures that break crafted scaling relationships.

Two modes:

- ``random_intermediate``: resize through a randomly sized intermediate image
  (per-axis uniform over a fraction band of the source), optionally rejecting
  intermediates that are integer multiples of the final dimensions (those can
  preserve the attack under some algorithms).
- ``nondefault_size``: resize directly to a final size the attacker did not
  craft for.

``attack_survival_rate`` measures, over seeded trials, how often the defended
pipeline still lands within epsilon of the attack's intended target.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from .crafting import AttackResult
from .errors import DimensionMismatch, PolicyRangeInvalid
from .metrics import max_abs_diff
from .raster import RasterImage
from .scaleops import build_operator, downscale

MODES = ("random_intermediate", "nondefault_size")
_MAX_REJECTIONS = 1000


@dataclasses.dataclass(frozen=True)
class PreventionPolicy:
    mode: str
    final_size: tuple[int, int]
    intermediate_range: tuple[float, float] = (0.6, 0.9)
    seed: int = 0
    forbidden_multiples: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise PolicyRangeInvalid(f"mode {self.mode!r} not in {MODES}")
        lo, hi = self.intermediate_range
        if not (0.0 < lo <= hi <= 1.0):
            raise PolicyRangeInvalid(
                f"intermediate_range must satisfy 0 < min <= max <= 1, got {self.intermediate_range}"
            )
        fh, fw = self.final_size
        if fh < 1 or fw < 1:
            raise PolicyRangeInvalid(f"final_size {self.final_size} invalid")


def _sample_intermediate(
    src: tuple[int, int],
    policy: PreventionPolicy,
    rng: np.random.Generator,
) -> tuple[int, int]:
    src_h, src_w = src
    fh, fw = policy.final_size
    lo, hi = policy.intermediate_range
    if lo <= max(fh / src_h, fw / src_w):
        raise PolicyRangeInvalid(
            f"min_fraction {lo} must exceed final/source ratio "
            f"{max(fh / src_h, fw / src_w):.3f}"
        )
    h_lo, h_hi = math.ceil(lo * src_h), math.floor(hi * src_h)
    w_lo, w_hi = math.ceil(lo * src_w), math.floor(hi * src_w)
    if h_lo > h_hi or w_lo > w_hi:
        raise PolicyRangeInvalid(
            f"fraction band {policy.intermediate_range} contains no integer "
            f"dimensions for source {src_h}x{src_w}"
        )
    for _ in range(_MAX_REJECTIONS):
        ih = int(rng.integers(h_lo, h_hi + 1))
        iw = int(rng.integers(w_lo, w_hi + 1))
        if policy.forbidden_multiples and (ih % fh == 0 or iw % fw == 0):
            continue
        return ih, iw
    raise PolicyRangeInvalid(
        "could not sample an intermediate size that is not an integer multiple "
        "of the final size; widen the range or allow multiples"
    )


def defended_resize(
    img: RasterImage,
    policy: PreventionPolicy,
    operator_algorithm: str = "bilinear",
    rng: np.random.Generator | None = None,
) -> RasterImage:
    """Resize through the policy's defended pipeline down to final_size."""
    fh, fw = policy.final_size
    if img.height < fh or img.width < fw:
        raise PolicyRangeInvalid(
            f"image {img.height}x{img.width} smaller than final {fh}x{fw}"
        )
    if policy.mode == "nondefault_size":
        op = build_operator(operator_algorithm, (img.height, img.width), (fh, fw))
        return downscale(img, op)
    if rng is None:
        rng = np.random.default_rng(policy.seed)
    inter = _sample_intermediate((img.height, img.width), policy, rng)
    first = build_operator(operator_algorithm, (img.height, img.width), inter)
    second = build_operator(operator_algorithm, inter, (fh, fw))
    return downscale(downscale(img, first), second)


def attack_survival_rate(
    attack,
    target: RasterImage,
    policy: PreventionPolicy,
    trials: int,
    operator_algorithm: str = "bilinear",
    epsilon: float | None = None,
    log_path=None,
) -> float:
    """Fraction of seeded trials where the defended output stays within epsilon.

    ``attack`` is an AttackResult (its epsilon is the default survival bound)
    or a plain RasterImage (pass ``epsilon`` explicitly). Trial t uses seed
    policy.seed + t, so the trial set is reproducible and distinct seeds
    sample distinct intermediates.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if isinstance(attack, AttackResult):
        img = attack.attack_image
        if epsilon is None:
            epsilon = attack.epsilon
    else:
        img = attack
        if epsilon is None:
            raise ValueError("epsilon is required when attack is a bare image")
    if (target.height, target.width) != policy.final_size:
        raise DimensionMismatch(
            f"target is {(target.height, target.width)} but the policy's final size "
            f"is {policy.final_size}"
        )
    survived = 0
    records = []
    for t in range(trials):
        rng = np.random.default_rng(policy.seed + t)
        if policy.mode == "random_intermediate":
            inter = _sample_intermediate((img.height, img.width), policy, rng)
            first = build_operator(operator_algorithm, (img.height, img.width), inter)
            second = build_operator(operator_algorithm, inter, policy.final_size)
            out = downscale(downscale(img, first), second)
        else:
            inter = None
            op = build_operator(
                operator_algorithm, (img.height, img.width), policy.final_size
            )
            out = downscale(img, op)
        residual = max_abs_diff(out, target)
        hit = residual <= epsilon
        survived += int(hit)
        records.append(
            {
                "trial": t,
                "intermediate": list(inter) if inter else None,
                "residual_linf": residual,
                "survived": bool(hit),
            }
        )
    if log_path is not None:
        with open(log_path, "a", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return survived / trials
