"""Kendall rank correlation between approximation errors and model performance.

tau = 2(k - d) / (m(m - 1)) over all m(m-1)/2 pairs, where k counts
concordant and d discordant pairs. Ties count as neither (tau-a): they
stay in the denominator but contribute to neither k nor d.

Grouped analyses slice a measurement grid (layer x method x compression x
run) four ways; statistics over runs are reported separately so the
groupings stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GROUPINGS = ("all", "by_compression", "layers_only", "methods_only")


@dataclass
class Measurement:
    """One decomposition hypothesis and everything measured for it."""

    layer_id: str
    method: str
    retained_fraction: float
    seed: int
    errors: dict  # error-measure name -> value (None when not computed)
    p: float | None = None
    p_star: float | None = None
    replicated: bool = False
    ranks: tuple = ()
    budget_params: int | None = None
    achieved_params: int | None = None

    def key(self):
        return (self.layer_id, self.method, self.retained_fraction, self.seed)


@dataclass
class TauCounts:
    concordant: int = 0
    discordant: int = 0
    total_pairs: int = 0

    def add(self, other: "TauCounts"):
        self.concordant += other.concordant
        self.discordant += other.discordant
        self.total_pairs += other.total_pairs


@dataclass
class TauSummary:
    grouping: str
    label: str
    mean_tau: float | None
    std_tau: float | None
    per_run_taus: list
    counts: TauCounts = field(default_factory=TauCounts)
    per_slice: list = field(default_factory=list)  # [{"slice": ..., "per_run_taus": [...]}]
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "grouping": self.grouping,
            "label": self.label,
            "mean_tau": self.mean_tau,
            "std_tau": self.std_tau,
            "per_run_taus": self.per_run_taus,
            "pairs": {
                "concordant": self.counts.concordant,
                "discordant": self.counts.discordant,
                "total": self.counts.total_pairs,
            },
            "per_slice": self.per_slice,
            "skipped": self.skipped,
        }


def kendall_tau(a, p) -> float:
    """Kendall's tau between two equal-length sequences (ties excluded from k and d)."""
    tau, _ = kendall_tau_with_counts(a, p)
    return tau


def kendall_tau_with_counts(a, p):
    a = np.asarray(a, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if a.shape != p.shape or a.ndim != 1:
        raise ValueError(f"expected two equal-length sequences, got {a.shape} and {p.shape}")
    m = len(a)
    if m < 2:
        raise ValueError("kendall_tau needs at least two measurements")
    sa = np.sign(a[:, None] - a[None, :])
    sp = np.sign(p[:, None] - p[None, :])
    prod = np.triu(sa * sp, k=1)
    k = int(np.count_nonzero(prod > 0))
    d = int(np.count_nonzero(prod < 0))
    total = m * (m - 1) // 2
    tau = 2.0 * (k - d) / (m * (m - 1))
    return tau, TauCounts(concordant=k, discordant=d, total_pairs=total)


def _values(ms, error_key, perf_key):
    a, p = [], []
    for m in ms:
        err = m.errors.get(error_key)
        perf = getattr(m, perf_key)
        if err is None or perf is None:
            return None
        a.append(err)
        p.append(perf)
    return a, p


def _mean_std(values):
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def grouped_tau(ms, error_key: str, perf_key: str = "p", grouping: str = "all"):
    """Grouped tau summaries over a measurement list.

    * ``all``: one tau per run over every (layer, method, compression).
    * ``by_compression``: per compression level, tau over layer x method
      within each run; one summary per level.
    * ``layers_only``: tau over layers for each fixed (method, compression)
      slice, averaged over slices within a run.
    * ``methods_only``: tau over methods for each fixed (layer, compression)
      slice, averaged over slices within a run.

    Slices with fewer than two usable measurements are skipped and reported.
    Standard deviations are over runs only.
    """
    if grouping not in GROUPINGS:
        raise ValueError(f"unknown grouping {grouping!r}; expected one of {GROUPINGS}")
    runs = sorted({m.seed for m in ms})
    by_run = {r: [m for m in ms if m.seed == r] for r in runs}

    if grouping == "all":
        summary = TauSummary("all", "all", None, None, [])
        for r in runs:
            vals = _values(by_run[r], error_key, perf_key)
            if vals is None or len(vals[0]) < 2:
                summary.skipped.append(f"run {r}: fewer than 2 usable measurements")
                continue
            tau, counts = kendall_tau_with_counts(*vals)
            summary.per_run_taus.append(tau)
            summary.counts.add(counts)
        summary.mean_tau, summary.std_tau = _mean_std(summary.per_run_taus)
        return [summary]

    if grouping == "by_compression":
        fractions = sorted({m.retained_fraction for m in ms})
        out = []
        for c in fractions:
            summary = TauSummary("by_compression", f"c={c:g}", None, None, [])
            for r in runs:
                rows = [m for m in by_run[r] if m.retained_fraction == c]
                vals = _values(rows, error_key, perf_key)
                if vals is None or len(vals[0]) < 2:
                    summary.skipped.append(f"run {r}: fewer than 2 usable measurements")
                    continue
                tau, counts = kendall_tau_with_counts(*vals)
                summary.per_run_taus.append(tau)
                summary.counts.add(counts)
            summary.mean_tau, summary.std_tau = _mean_std(summary.per_run_taus)
            out.append(summary)
        return out

    # layers_only / methods_only: tau within each fixed slice, then average
    # the slice taus within a run; mean/std of those run averages
    if grouping == "layers_only":
        slice_keys = sorted({(m.method, m.retained_fraction) for m in ms})
        in_slice = lambda m, key: (m.method, m.retained_fraction) == key
        label = "layers_only"
    else:
        slice_keys = sorted({(m.layer_id, m.retained_fraction) for m in ms})
        in_slice = lambda m, key: (m.layer_id, m.retained_fraction) == key
        label = "methods_only"

    summary = TauSummary(grouping, label, None, None, [])
    slice_taus = {key: {} for key in slice_keys}
    for key in slice_keys:
        for r in runs:
            rows = [m for m in by_run[r] if in_slice(m, key)]
            vals = _values(rows, error_key, perf_key)
            if vals is None or len(vals[0]) < 2:
                summary.skipped.append(f"slice {key}, run {r}: fewer than 2 usable measurements")
                continue
            tau, counts = kendall_tau_with_counts(*vals)
            slice_taus[key][r] = tau
            summary.counts.add(counts)
    for key in slice_keys:
        if slice_taus[key]:
            summary.per_slice.append({
                "slice": list(key),
                "per_run_taus": [slice_taus[key][r] for r in runs if r in slice_taus[key]],
            })
    for r in runs:
        run_vals = [slice_taus[key][r] for key in slice_keys if r in slice_taus[key]]
        if run_vals:
            summary.per_run_taus.append(float(np.mean(run_vals)))
    summary.mean_tau, summary.std_tau = _mean_std(summary.per_run_taus)
    return [summary]
