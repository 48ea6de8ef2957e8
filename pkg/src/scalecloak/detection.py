"""Camouflage-detection probes: scaling, filtering, and spectral tests.

Three per-image tests, each with fixed decision thresholds:

- scaling: downscale to a probe size and upscale back (bilinear both ways);
  a camouflaged image loses its hidden payload in the round trip, so large
  MSE / low SSIM against the original indicates an attack.
- filtering: compare the image against a low-pass (minimum-filtered) copy.
- steganalysis: count bright peaks in the centered log-magnitude spectrum
  ("centered spectrum points"); embedded high-frequency payloads add peaks.

Flag semantics: MSE above its threshold, SSIM below its threshold, or a peak
count above the CSP threshold each flag the image as an attack. Corpus
evaluation reports FAR (attacks passed as benign) and FRR (benign flagged as
attacks) per method/metric/threshold row.
"""

from __future__ import annotations

import csv
import dataclasses
import json

import numpy as np
from scipy import ndimage

from .errors import EmptyCorpus, ImageTooSmall, UnsupportedAlgorithm
from .metrics import mse, ssim
from .raster import RasterImage
from .scaleops import build_operator, downscale, upscale

FILTER_KINDS = ("minimum", "median")


@dataclasses.dataclass(frozen=True)
class DetectionConfig:
    scaling_mse_threshold: float = 1714.96
    scaling_mse_alt_threshold: float = 3500.0
    scaling_ssim_threshold: float = 0.61
    filtering_mse_threshold: float = 5682.79
    filtering_ssim_threshold: float = 0.38
    csp_threshold: int = 2
    probe_downscale_size: tuple[int, int] = (416, 416)
    filter_kind: str = "minimum"
    filter_window: int = 2
    csp_sigma: float = 2.0
    csp_band_fraction: float = 0.5

    def __post_init__(self):
        for name in (
            "scaling_mse_threshold",
            "scaling_mse_alt_threshold",
            "filtering_mse_threshold",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("scaling_ssim_threshold", "filtering_ssim_threshold"):
            value = getattr(self, name)
            if not (0.0 < value <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if self.csp_threshold <= 0:
            raise ValueError("csp_threshold must be positive")
        if self.filter_kind not in FILTER_KINDS:
            raise UnsupportedAlgorithm(
                f"filter_kind {self.filter_kind!r} not in {FILTER_KINDS}"
            )
        if self.filter_window < 2:
            raise ValueError("filter_window must be >= 2")
        if not (0.0 < self.csp_band_fraction <= 1.0):
            raise ValueError("csp_band_fraction must lie in (0, 1]")


@dataclasses.dataclass(frozen=True)
class DetectionVerdict:
    scaling_mse: float
    scaling_ssim: float
    filtering_mse: float
    filtering_ssim: float
    csp_count: int
    flags: dict  # (method, metric) -> "attack" | "benign"


def scaling_test(img: RasterImage, cfg: DetectionConfig) -> tuple[float, float]:
    """Down-then-up reconstruction error (MSE, SSIM vs the original)."""
    ph, pw = cfg.probe_downscale_size
    if img.height <= ph or img.width <= pw:
        raise ImageTooSmall(
            f"image {img.height}x{img.width} not larger than probe {ph}x{pw}"
        )
    op = build_operator("bilinear", (img.height, img.width), (ph, pw))
    reconstructed = upscale(downscale(img, op), "bilinear", (img.height, img.width))
    return mse(img, reconstructed), ssim(img, reconstructed)


def filtering_test(img: RasterImage, cfg: DetectionConfig) -> tuple[float, float]:
    """Residual against a low-pass filtered copy (MSE, SSIM)."""
    w = cfg.filter_window
    if img.height < w or img.width < w:
        raise ImageTooSmall(f"image smaller than the {w}x{w} filter window")
    if cfg.filter_kind == "minimum":
        filtered = ndimage.minimum_filter(img.pixels, size=(w, w, 1))
    else:
        filtered = ndimage.median_filter(img.pixels, size=(w, w, 1))
    return mse(img.pixels, filtered), ssim(img.pixels, filtered)


def steganalysis_test(img: RasterImage, cfg: DetectionConfig) -> int:
    """Count bright peaks in the central band of the centered spectrum."""
    gray = img.luma()
    spectrum = np.fft.fftshift(np.fft.fft2(gray))
    logmag = np.log1p(np.abs(spectrum))
    threshold = logmag.mean() + cfg.csp_sigma * logmag.std()
    bright = logmag > threshold
    h, w = bright.shape
    bh = max(1, int(round(h * cfg.csp_band_fraction)))
    bw = max(1, int(round(w * cfg.csp_band_fraction)))
    y0 = (h - bh) // 2
    x0 = (w - bw) // 2
    band = bright[y0 : y0 + bh, x0 : x0 + bw]
    _, count = ndimage.label(band, structure=np.ones((3, 3), dtype=int))
    return int(count)


def detect(img: RasterImage, cfg: DetectionConfig) -> DetectionVerdict:
    s_mse, s_ssim = scaling_test(img, cfg)
    f_mse, f_ssim = filtering_test(img, cfg)
    csp = steganalysis_test(img, cfg)
    flags = {
        ("scaling", "mse"): "attack" if s_mse > cfg.scaling_mse_threshold else "benign",
        ("scaling", "ssim"): "attack" if s_ssim < cfg.scaling_ssim_threshold else "benign",
        ("filtering", "mse"): "attack" if f_mse > cfg.filtering_mse_threshold else "benign",
        ("filtering", "ssim"): "attack" if f_ssim < cfg.filtering_ssim_threshold else "benign",
        ("steganalysis", "csp"): "attack" if csp > cfg.csp_threshold else "benign",
    }
    return DetectionVerdict(
        scaling_mse=s_mse,
        scaling_ssim=s_ssim,
        filtering_mse=f_mse,
        filtering_ssim=f_ssim,
        csp_count=csp,
        flags=flags,
    )


def _measure(images, cfg: DetectionConfig) -> dict:
    values = {
        "scaling_mse": [],
        "scaling_ssim": [],
        "filtering_mse": [],
        "filtering_ssim": [],
        "csp": [],
    }
    for img in images:
        s_mse, s_ssim = scaling_test(img, cfg)
        f_mse, f_ssim = filtering_test(img, cfg)
        values["scaling_mse"].append(s_mse)
        values["scaling_ssim"].append(s_ssim)
        values["filtering_mse"].append(f_mse)
        values["filtering_ssim"].append(f_ssim)
        values["csp"].append(steganalysis_test(img, cfg))
    return {k: np.asarray(v, dtype=np.float64) for k, v in values.items()}


def _rate_rows(cfg: DetectionConfig, attack_vals: dict, benign_vals: dict) -> list[dict]:
    def far_frr(key: str, threshold: float, flag_above: bool) -> tuple[float, float]:
        att = attack_vals[key]
        ben = benign_vals[key]
        if flag_above:
            flagged_att = att > threshold
            flagged_ben = ben > threshold
        else:
            flagged_att = att < threshold
            flagged_ben = ben < threshold
        far = float(np.mean(~flagged_att))  # attacks accepted as benign
        frr = float(np.mean(flagged_ben))  # benign rejected as attacks
        return far, frr

    spec = [
        ("scaling", "mse", cfg.scaling_mse_threshold, "scaling_mse", True),
        ("scaling", "mse", cfg.scaling_mse_alt_threshold, "scaling_mse", True),
        ("scaling", "ssim", cfg.scaling_ssim_threshold, "scaling_ssim", False),
        ("filtering", "mse", cfg.filtering_mse_threshold, "filtering_mse", True),
        ("filtering", "ssim", cfg.filtering_ssim_threshold, "filtering_ssim", False),
        ("steganalysis", "csp", float(cfg.csp_threshold), "csp", True),
    ]
    rows = []
    for method, metric, threshold, key, flag_above in spec:
        far, frr = far_frr(key, threshold, flag_above)
        rows.append(
            {
                "method": method,
                "metric": metric,
                "threshold": threshold,
                "far": far,
                "frr": frr,
            }
        )
    return rows


def evaluate_corpus(benign, attacks, cfg: DetectionConfig) -> dict:
    """Per-method FAR/FRR table over labeled benign and attack image lists."""
    benign = list(benign)
    attacks = list(attacks)
    if not benign or not attacks:
        raise EmptyCorpus("need at least one benign and one attack image")
    benign_vals = _measure(benign, cfg)
    attack_vals = _measure(attacks, cfg)
    return {
        "benign_count": len(benign),
        "attack_count": len(attacks),
        "rows": _rate_rows(cfg, attack_vals, benign_vals),
        "attack_values": {k: v.tolist() for k, v in attack_vals.items()},
        "benign_values": {k: v.tolist() for k, v in benign_vals.items()},
    }


def report_to_csv(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "metric", "threshold", "far", "frr"])
        for row in report["rows"]:
            writer.writerow(
                [
                    row["method"],
                    row["metric"],
                    f"{row['threshold']:.6g}",
                    f"{row['far']:.6f}",
                    f"{row['frr']:.6f}",
                ]
            )


def report_to_json(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
