"""Figures for decomposition reports: mesh overlays and subband panels."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import QuadMesh  # noqa: E402

# fixed metadata keeps the PNG bytes reproducible
_PNG_METADATA = {"Software": None}


def draw_mesh(ax, mesh: QuadMesh, color="tab:red", lw=0.7):
    """Draw the deformed (reference-side) lattice lines on ``ax``."""
    xr, yr = mesh.reference_positions()
    for i in range(mesh.rows):
        ax.plot(xr[i], yr[i], color=color, lw=lw)
    for j in range(mesh.cols):
        ax.plot(xr[:, j], yr[:, j], color=color, lw=lw)


def pair_figure(reference: np.ndarray, lowpass: np.ndarray, highpass: np.ndarray, mesh: QuadMesh, title: str = ""):
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.8))
    axes[0].imshow(reference, cmap="gray", interpolation="nearest")
    draw_mesh(axes[0], mesh)
    axes[0].set_title("reference + mesh")
    axes[1].imshow(lowpass, cmap="gray", interpolation="nearest")
    axes[1].set_title("lowpass L")
    lim = max(1, int(np.abs(highpass).max()))
    axes[2].imshow(highpass, cmap="RdBu_r", vmin=-lim, vmax=lim, interpolation="nearest")
    axes[2].set_title("highpass H")
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_xlim(-0.5, reference.shape[1] - 0.5)
        ax.set_ylim(reference.shape[0] - 0.5, -0.5)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return fig


def save_pair_figure(path, reference, lowpass, highpass, mesh: QuadMesh, title: str = "") -> Path:
    fig = pair_figure(np.asarray(reference), np.asarray(lowpass), np.asarray(highpass), mesh, title)
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_PNG_METADATA)
    plt.close(fig)
    return path
