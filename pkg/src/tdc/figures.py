"""Report figures rendered next to the delimited outputs.

Three figures, mirroring the study's analyses: correlation grouped by
compression level, correlation for the different grouping modes, and the
per-layer error/performance scatter. Figures are only rendered when the
measurements carry performance values; PNGs are written without metadata
so identical inputs give identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import correlation, metrics

DEFAULT_ERROR_KEY = "weight_relative"
_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}


def _error_key(measurements) -> str | None:
    if any(m.errors.get(DEFAULT_ERROR_KEY) is not None for m in measurements):
        return DEFAULT_ERROR_KEY
    for key in metrics.ERROR_KEYS:
        if any(m.errors.get(key) is not None for m in measurements):
            return key
    return None


def _perf_keys(measurements) -> list:
    return [k for k in ("p", "p_star") if any(getattr(m, k) is not None for m in measurements)]


def render_figures(measurements, outdir) -> list:
    """Render available figures into ``outdir``; returns written paths."""
    outdir = Path(outdir)
    error_key = _error_key(measurements)
    perf_keys = _perf_keys(measurements)
    if error_key is None or not perf_keys:
        return []
    written = []
    written += _fig_by_compression(measurements, outdir, error_key, perf_keys)
    written += _fig_groupings(measurements, outdir, error_key, perf_keys)
    written += _fig_scatter(measurements, outdir, error_key, perf_keys[0])
    return written


def _bar(ax, labels, means, stds, title):
    xs = range(len(labels))
    ax.bar(xs, means, yerr=stds, capsize=3, color="tab:blue", alpha=0.85)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(-1.05, 1.05)
    ax.axhline(0.0, color="grey", lw=0.8)
    ax.set_ylabel("Kendall tau")
    ax.set_title(title, fontsize=10)


def _fig_by_compression(measurements, outdir, error_key, perf_keys):
    fig, axes = plt.subplots(1, len(perf_keys), figsize=(5 * len(perf_keys), 3.2), squeeze=False)
    drew = False
    for ax, perf_key in zip(axes[0], perf_keys):
        summaries = correlation.grouped_tau(measurements, error_key, perf_key, "by_compression")
        usable = [s for s in summaries if s.mean_tau is not None]
        if not usable:
            continue
        drew = True
        _bar(ax, [s.label for s in usable], [s.mean_tau for s in usable],
             [s.std_tau for s in usable], f"{error_key} vs {perf_key}, by compression")
    path = outdir / "fig_tau_by_compression.png"
    if drew:
        fig.tight_layout()
        fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return [path] if drew else []


def _fig_groupings(measurements, outdir, error_key, perf_keys):
    fig, axes = plt.subplots(1, len(perf_keys), figsize=(4.2 * len(perf_keys), 3.2), squeeze=False)
    drew = False
    for ax, perf_key in zip(axes[0], perf_keys):
        labels, means, stds = [], [], []
        for grouping in ("all", "layers_only", "methods_only"):
            s = correlation.grouped_tau(measurements, error_key, perf_key, grouping)[0]
            if s.mean_tau is None:
                continue
            labels.append(grouping)
            means.append(s.mean_tau)
            stds.append(s.std_tau)
        if not labels:
            continue
        drew = True
        _bar(ax, labels, means, stds, f"{error_key} vs {perf_key}, grouping modes")
    path = outdir / "fig_tau_groupings.png"
    if drew:
        fig.tight_layout()
        fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return [path] if drew else []


def _fig_scatter(measurements, outdir, error_key, perf_key):
    rows = [m for m in measurements
            if m.errors.get(error_key) is not None and getattr(m, perf_key) is not None]
    if not rows:
        return []
    layers = sorted({m.layer_id for m in rows})
    cmap = plt.get_cmap("tab10")
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    for i, layer in enumerate(layers):
        pts = [(m.errors[error_key], getattr(m, perf_key)) for m in rows if m.layer_id == layer]
        ax.scatter([p[0] for p in pts], [p[1] for p in pts], s=18,
                   color=cmap(i % 10), label=str(layer), alpha=0.8)
    ax.set_xlabel(error_key)
    ax.set_ylabel(perf_key)
    ax.set_title("error vs performance, per layer", fontsize=10)
    ax.legend(fontsize=7, title="layer", title_fontsize=8)
    fig.tight_layout()
    path = outdir / "fig_scatter_by_layer.png"
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return [path]
