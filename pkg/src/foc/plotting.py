"""Figures written next to the JSON/CSV reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.titlesize": 10,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
})


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def render_image_panel(result, path) -> Path:
    """Input with kept boxes, union of object masks, and the inpainted output."""
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.6))
    axes[0].imshow(result.preprocessed, cmap="gray", vmin=0, vmax=255)
    for det in result.detections:
        b = det.box
        axes[0].add_patch(Rectangle((b.x - 0.5, b.y - 0.5), b.w, b.h, fill=False,
                                    edgecolor="tab:red", linewidth=1))
        axes[0].text(b.x, b.y - 2, f"{det.confidence:.2f}", color="tab:red", fontsize=7)
    union = np.zeros_like(result.preprocessed)
    for m in result.object_masks():
        union = np.maximum(union, m)
    axes[1].imshow(union, cmap="gray", vmin=0, vmax=255)
    axes[2].imshow(result.output, cmap="gray", vmin=0, vmax=255)
    for ax, title in zip(axes, ("input + detections", "object masks", "inpainted")):
        ax.set_title(title)
        ax.set_axis_off()
    fig.suptitle(result.image_id)
    return _save(fig, path)


def render_run_summary(results, path) -> Path:
    ok = [r for r in results if r.ok]
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.4))
    counts = [len(r.detections) for r in ok]
    if counts:
        left.hist(counts, bins=np.arange(max(counts) + 2) - 0.5, color="0.4", rwidth=0.8)
    left.set_xlabel("detections kept per image")
    left.set_ylabel("images")

    stages = ("preprocess", "detect", "segment", "inpaint")
    means = [np.mean([r.timings.get(s, 0.0) for r in ok]) if ok else 0.0 for s in stages]
    right.bar(stages, means, color="0.4")
    right.set_ylabel("mean seconds")
    right.set_title(f"{len(ok)}/{len(results)} images ok")
    return _save(fig, path)


def render_pr_curve(recall, precision, ap: float, path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 3.6))
    ax.step(recall, precision, where="post", color="k")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_title(f"AP@0.5 = {ap:.3f}")
    return _save(fig, path)
