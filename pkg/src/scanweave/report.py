"""Matplotlib figure rendering for the experiment report path."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import SamplingMask, SpectralCube


def save_mask_figure(mask: SamplingMask, path, title: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(3.2, 3.2))
    ax.imshow(mask.bits, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
    ax.set_title(title or f"sampled {mask.realized_mean:.3f} (budget {mask.budget:g})", fontsize=9)
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_band_figure(cube: SpectralCube, band: int, path, title: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(3.2, 3.2))
    im = ax.imshow(cube.data[:, :, band], cmap="viridis", vmin=0.0, vmax=1.0, interpolation="nearest")
    ax.set_title(title or f"band {band}", fontsize=9)
    ax.set_axis_off()
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_rgb_figure(cube: SpectralCube, path, title: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(3.2, 3.2))
    ax.imshow(np.clip(cube.data, 0.0, 1.0), interpolation="nearest")
    if title:
        ax.set_title(title, fontsize=9)
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_trace_figure(trace: list[dict], path, title: str | None = None) -> None:
    iterations = [row["iteration"] for row in trace]
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    ax.semilogy(iterations, [row["objective"] for row in trace], marker=".", label="objective")
    if trace and "rmse" in trace[0]:
        twin = ax.twinx()
        twin.plot(iterations, [row["rmse"] for row in trace], color="tab:red", alpha=0.7, label="rmse")
        twin.set_ylabel("rmse", color="tab:red", fontsize=8)
    ax.set_xlabel("outer iteration", fontsize=8)
    ax.set_ylabel("objective", fontsize=8)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_summary_figure(rows: list[dict], path) -> None:
    """PSNR against sampling rate, one line per mask/reconstruction pair."""
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    series: dict[tuple[str, str, str], list[tuple[float, float]]] = {}
    for row in rows:
        if row.get("psnr_db") is None:
            continue
        key = (row["phantom"], row["mask_method"], row["recon_method"])
        series.setdefault(key, []).append((row["rate"], row["psnr_db"]))
    for (phantom, mask_method, recon), points in sorted(series.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o",
                label=f"{phantom}/{mask_method}/{recon}")
    ax.set_xlabel("sampling rate")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
