"""PNG figures rendered next to the CSV exports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_PATH_SERIES = [("m1", "estimated I-", "tab:red"), ("z1", "I+", "tab:orange"),
                ("m2", "estimated R-", "tab:green"), ("z2", "R+", "tab:blue")]


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps the bytes reproducible
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_ensemble(days, series: dict, path, title: str = "") -> Path:
    """Ensemble mean with a 10-90% band.

    Parameters
    ----------
    days : (T,) array
    series : dict
        Maps a component name to ``(mean, q10, q90)`` arrays.
    """
    fig, (ax, axq) = plt.subplots(1, 2, figsize=(11, 4))
    for key, label, color in _PATH_SERIES:
        mean, lo, hi = series[key]
        ax.plot(days, mean, color=color, label=label)
        ax.fill_between(days, lo, hi, color=color, alpha=0.2, lw=0)
    ax.set_xlabel("day")
    ax.set_ylabel("persons")
    axh = ax.twinx()
    mean, lo, hi = series["z3"]
    axh.plot(days, mean, color="k", ls="--", label="H")
    axh.fill_between(days, lo, hi, color="k", alpha=0.1, lw=0)
    axh.set_ylabel("hospitalized")
    ax.legend(loc="upper right", fontsize=8)
    for key, color in (("q1", "tab:red"), ("q2", "tab:green")):
        mean, lo, hi = series[key]
        axq.plot(days, mean, color=color, label=key)
        axq.fill_between(days, lo, hi, color=color, alpha=0.2, lw=0)
    axq.set_xlabel("day")
    axq.set_ylabel("conditional variance")
    axq.legend(fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_controls(days, controls, path, title: str = "") -> Path:
    """Median control path with a 10-90% band; ``controls`` is ``(K, T, 3)``."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    q = np.quantile(controls, [0.1, 0.5, 0.9], axis=0)
    ax.step(days, q[1, :, 0], where="post", color="tab:purple", label="u_L")
    ax.fill_between(days, q[0, :, 0], q[2, :, 0], step="post", color="tab:purple", alpha=0.2, lw=0)
    ax.set_ylabel("lockdown")
    ax.set_ylim(-0.02, 1.02)
    ax2 = ax.twinx()
    ax2.step(days, q[1, :, 1], where="post", color="tab:cyan", label="u_T")
    ax2.step(days, q[1, :, 2], where="post", color="tab:olive", label="u_V")
    ax2.set_ylabel("testing / vaccination rate")
    ax.set_xlabel("day")
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], fontsize=8, loc="upper right")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_slice(m1, z1, values, lockdown, path, title: str = "") -> Path:
    """Value and lockdown over an ``(m1, z1)`` slice; arrays are ``(len(m1), len(z1))``."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, data, label, cmap in ((axes[0], values, "value", "viridis"),
                                  (axes[1], lockdown, "u_L", "magma")):
        mesh = ax.pcolormesh(z1, m1, data, shading="nearest", cmap=cmap)
        fig.colorbar(mesh, ax=ax, label=label)
        ax.set_xlabel("z1 (detected infected)")
        ax.set_ylabel("m1 (estimated undetected infected)")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)
