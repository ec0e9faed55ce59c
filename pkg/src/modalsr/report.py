"""Figure rendering for the report path: PNGs next to the CSV tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_METHOD_COLORS = {
    "sma": "tab:red",
    "joint": "tab:green",
    "modal-9": "tab:pink",
    "modal-16": "tab:cyan",
    "modal-25": "tab:orange",
}


def _color(method: str):
    return _METHOD_COLORS.get(method, None)


def save_metric_curves(rows: list[dict], out_path: str | Path, ylabel: str,
                       title: str = "") -> Path:
    """Smoothed metric-vs-frequency curves, one line per method column."""
    out_path = Path(out_path)
    freqs = [r["frequency"] for r in rows]
    methods = [k for k in rows[0] if k != "frequency"]
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for m in methods:
        ax.plot(freqs, [r[m] for r in rows], label=m, color=_color(m), lw=1.6)
    ax.set_xlabel("frequency / Hz")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def save_angle_sweep(rows: list[dict], out_path: str | Path) -> Path:
    """Mean principal angle vs frequency, one line per (array, K)."""
    out_path = Path(out_path)
    combos = sorted({(r["array"], r["K"]) for r in rows})
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for array, K in combos:
        pts = sorted((r["frequency"], r["mean_angle_deg"]) for r in rows
                     if r["array"] == array and r["K"] == K)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"{array} K={K}", lw=1.6)
    ax.set_xlabel("frequency / Hz")
    ax.set_ylabel("mean principal angle / deg")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def save_singular_values(spectra: dict[float, np.ndarray], out_path: str | Path,
                         max_index: int = 40) -> Path:
    """Singular-value profiles (relative to sigma_1) for a few frequencies."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for f in sorted(spectra):
        s = np.asarray(spectra[f])[:max_index]
        ax.semilogy(np.arange(1, len(s) + 1), s / s[0], label=f"{f:g} Hz", lw=1.4)
    ax.set_xlabel("mode index")
    ax.set_ylabel(r"$\sigma_k / \sigma_1$")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def save_mode_patterns(directions: np.ndarray, V: np.ndarray, out_path: str | Path,
                       n_modes: int = 16) -> Path:
    """Magnitude of the leading field modes on a longitude/latitude scatter."""
    out_path = Path(out_path)
    n_modes = min(n_modes, V.shape[1])
    ncols = 4
    nrows = int(np.ceil(n_modes / ncols))
    lon = np.degrees(np.arctan2(directions[:, 1], directions[:, 0]))
    lat = np.degrees(np.arcsin(np.clip(directions[:, 2], -1, 1)))
    fig, axes = plt.subplots(nrows, ncols, figsize=(2.2 * ncols, 1.8 * nrows),
                             sharex=True, sharey=True)
    for k, ax in enumerate(np.atleast_1d(axes).ravel()):
        if k >= n_modes:
            ax.axis("off")
            continue
        mag = np.abs(V[:, k])
        ax.scatter(lon, lat, c=mag, s=3, cmap="viridis")
        ax.set_title(f"mode {k + 1}", fontsize=7)
        ax.tick_params(labelsize=6)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
