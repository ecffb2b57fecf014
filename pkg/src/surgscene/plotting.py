"""Report figures. Everything renders through the Agg backend to PNG files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# keeps PNG bytes independent of the installed matplotlib version
_PNG_META = {"Software": None}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_series(path, frames, series: dict, ylabel: str, title: str = "", hline: float | None = None):
    """One line per entry of ``series`` against frame index."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for label, values in series.items():
        ax.plot(frames, values, marker=".", lw=1.2, label=label)
    if hline is not None:
        ax.axhline(hline, color="0.5", ls="--", lw=0.8)
    ax.set_xlabel("frame")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    _finish(fig, path)


def plot_depth_pair(path, est: np.ndarray, gt: np.ndarray | None = None, title: str = ""):
    """Estimated depth, and when given, ground truth and absolute error side by side."""
    panels = [("estimate", est)]
    if gt is not None:
        both = (est > 0) & (gt > 0)
        err = np.where(both, np.abs(est - gt), np.nan)
        panels += [("ground truth", gt), ("|error|", err)]
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.4), squeeze=False)
    valid = est[est > 0]
    lo, hi = (np.percentile(valid, [1, 99]) if valid.size else (0.0, 1.0))
    for ax, (name, img) in zip(axes[0], panels):
        shown = np.where(img > 0, img, np.nan) if name != "|error|" else img
        kw = {} if name == "|error|" else {"vmin": lo, "vmax": hi}
        im = ax.imshow(shown, cmap="magma" if name == "|error|" else "viridis", **kw)
        ax.set_title(name)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="m")
    if title:
        fig.suptitle(title)
    _finish(fig, path)


def plot_mask_overlay(path, est: np.ndarray, gt: np.ndarray | None = None, title: str = ""):
    """Estimated mask in one channel, ground truth in another; overlap shows as white."""
    h, w = est.shape
    rgb = np.zeros((h, w, 3))
    rgb[..., 0] = est
    if gt is not None:
        rgb[..., 1] = gt
        rgb[..., 2] = est & gt
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.imshow(rgb)
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    _finish(fig, path)
