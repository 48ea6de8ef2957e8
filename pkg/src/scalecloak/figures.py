"""Report figures (Agg backend), written next to the machine-readable outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .raster import RasterImage


def _imshow(ax, img: RasterImage, title: str) -> None:
    arr = img.to_uint8()
    if arr.shape[2] == 1:
        ax.imshow(arr[:, :, 0], cmap="gray", vmin=0, vmax=255)
    else:
        ax.imshow(arr)
    ax.set_title(title, fontsize=9)
    ax.axis("off")


def craft_montage(
    source: RasterImage,
    attack: RasterImage,
    output: RasterImage,
    target: RasterImage,
    path,
) -> None:
    """Source / attack / downscaled-attack / target side by side."""
    fig, axes = plt.subplots(1, 4, figsize=(11, 3.2))
    _imshow(axes[0], source, "source")
    _imshow(axes[1], attack, "attack image")
    _imshow(axes[2], output, "downscaled attack")
    _imshow(axes[3], target, "target")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def scan_report_figure(report: dict, path) -> None:
    """FAR/FRR bars per method/metric/threshold row."""
    rows = report["rows"]
    labels = [f"{r['method']}\n{r['metric']}@{r['threshold']:g}" for r in rows]
    far = [r["far"] for r in rows]
    frr = [r["frr"] for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(1.6 * len(rows) + 2, 4))
    ax.bar(x - 0.18, far, width=0.36, label="FAR (attacks passed)")
    ax.bar(x + 0.18, frr, width=0.36, label="FRR (benign flagged)")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("rate")
    ax.set_title(
        f"detection rates over {report['attack_count']} attacks / "
        f"{report['benign_count']} benign"
    )
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def poison_distribution_figure(scene_counts: dict, poison_rate: float, path) -> None:
    """Per-scene selection counts."""
    scenes = sorted(scene_counts)
    counts = [scene_counts[s] for s in scenes]
    fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(scenes) + 2), 3.5))
    ax.bar(np.arange(len(scenes)), counts)
    ax.set_xticks(np.arange(len(scenes)))
    ax.set_xticklabels(scenes, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("selected poisons")
    ax.set_title(f"poison set by scene (rate {poison_rate:.4%})")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def survival_figure(entries: list[dict], path) -> None:
    """Survival rate per policy label."""
    labels = [e["label"] for e in entries]
    rates = [e["survival"] for e in entries]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(entries) + 2), 3.5))
    ax.bar(np.arange(len(entries)), rates, color="#b22222")
    ax.axhline(0.05, color="gray", linestyle="--", linewidth=1, label="5% line")
    ax.set_xticks(np.arange(len(entries)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("attack survival rate")
    ax.set_title("defended-pipeline survival")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
