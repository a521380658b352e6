"""Study harness: hypothesis grid execution, performance ingestion, reports.

A study sweeps the hypothesis grid layers x methods x retained fractions x
seeds over one model manifest. Per hypothesis it solves ranks, decomposes,
computes the configured error measures, optionally evaluates the compressed
model, and records one measurement row. Tucker and TT do not depend on the
seed, so their results are computed once per (layer, method, fraction) and
copied across seeds with ``replicated`` set on the copies.

Outputs are deterministic: rows are assembled in canonical grid order and
all floats are serialized with ``repr``, so re-running an identical study
reproduces every file byte for byte. A failing hypothesis (for example a
diverging CP run) is recorded in ``failures.csv`` and the grid continues.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import convnet, correlation, dataset, decomp, metrics, ranks
from .correlation import GROUPINGS, Measurement

MEASUREMENT_COLUMNS = [
    "layer_id", "method", "retained_fraction", "seed", "replicated", "ranks",
    "budget_params", "achieved_params",
    "weight_absolute", "weight_relative", "weight_scaled",
    "feature_absolute", "feature_relative", "feature_scaled",
    "p", "p_star",
]

FAILURE_COLUMNS = ["layer_id", "method", "retained_fraction", "seed", "error"]

SEED_INSENSITIVE = ("tucker", "tt")


@dataclass
class StudyConfig:
    manifest: str
    layers: list
    methods: list
    retained_fractions: list
    seeds: list
    output_dir: str
    dataset: str | None = None
    errors: list = field(default_factory=lambda: ["weight"])
    feature_batch_size: int = 256
    evaluate_performance: bool = False
    substitute_mode: str = "reconstruct"
    performance_csv: str | None = None
    cp_max_iters: int = decomp.ALS_MAX_ITERS
    cp_tol: float = decomp.ALS_TOL
    figures: bool = True

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "StudyConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if base is not None:
            for key in ("manifest", "dataset", "performance_csv", "output_dir"):
                val = getattr(cfg, key)
                if val is not None and not Path(val).is_absolute():
                    setattr(cfg, key, str(base / val))
        return cfg

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base=path.parent)

    def validate(self) -> None:
        if not self.layers or not self.methods or not self.retained_fractions:
            raise ValueError("layers, methods, and retained_fractions must be non-empty")
        for m in self.methods:
            if m not in ("cp", "tucker", "tt"):
                raise ValueError(f"unknown method {m!r}")
        for c in self.retained_fractions:
            if not 0.0 < c <= 1.0:
                raise ValueError(f"retained fraction {c} out of (0, 1]")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ValueError("seeds must be non-empty and distinct")
        for e in self.errors:
            if e not in ("weight", "feature"):
                raise ValueError(f"unknown error measure family {e!r}")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _ranks_str(method: str, rank_tuple) -> str:
    r = tuple(rank_tuple)
    if method == "tt":
        r = (1,) + r + (1,)
    return "x".join(str(v) for v in r)


def _parse_ranks(method: str, s: str) -> tuple:
    vals = tuple(int(v) for v in s.split("x")) if s else ()
    if method == "tt" and len(vals) == 5:
        vals = vals[1:-1]
    return vals


def measurement_row(m: Measurement) -> list:
    e = m.errors
    return [
        m.layer_id, m.method, _fmt(m.retained_fraction), str(m.seed), _fmt(m.replicated),
        _ranks_str(m.method, m.ranks), _fmt(m.budget_params), _fmt(m.achieved_params),
        _fmt(e.get("weight_absolute")), _fmt(e.get("weight_relative")), _fmt(e.get("weight_scaled")),
        _fmt(e.get("feature_absolute")), _fmt(e.get("feature_relative")), _fmt(e.get("feature_scaled")),
        _fmt(m.p), _fmt(m.p_star),
    ]


def write_measurements(path, measurements) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MEASUREMENT_COLUMNS)
    for m in measurements:
        w.writerow(measurement_row(m))
    Path(path).write_text(buf.getvalue())


def read_measurements(path) -> list:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MEASUREMENT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for row in reader:
            errors = {k: (float(row[k]) if row[k] else None) for k in metrics.ERROR_KEYS}
            out.append(Measurement(
                layer_id=row["layer_id"],
                method=row["method"],
                retained_fraction=float(row["retained_fraction"]),
                seed=int(row["seed"]),
                errors=errors,
                p=float(row["p"]) if row["p"] else None,
                p_star=float(row["p_star"]) if row["p_star"] else None,
                replicated=row["replicated"] == "true",
                ranks=_parse_ranks(row["method"], row["ranks"]),
                budget_params=int(row["budget_params"]) if row["budget_params"] else None,
                achieved_params=int(row["achieved_params"]) if row["achieved_params"] else None,
            ))
    return out


def _decompose(w, method, rank_spec, seed, cfg: StudyConfig):
    if method == "cp":
        return decomp.cp_als(w, rank_spec.ranks[0], seed, cfg.cp_max_iters, cfg.cp_tol)
    if method == "tucker":
        return decomp.tucker_hosvd(w, rank_spec.ranks)
    return decomp.tt_svd(w, rank_spec.ranks)


def compute_hypothesis(graph, layer_id, method, fraction, seed, cfg: StudyConfig,
                       feature_inputs=None, eval_data=None) -> Measurement:
    lay = graph.layer(layer_id)
    if layer_id not in graph.decomposable_layer_ids():
        raise ValueError(f"layer {layer_id!r} is not decomposable")
    w = lay.weight
    spec = ranks.solve_ranks(method, w.shape, fraction)
    fact = _decompose(w, method, spec, seed, cfg)
    w_hat = decomp.reconstruct(fact)
    if not np.all(np.isfinite(w_hat)):
        raise ArithmeticError("decomposition produced non-finite values")

    errors = dict.fromkeys(metrics.ERROR_KEYS)
    if "weight" in cfg.errors:
        wa, wr, ws = metrics.weight_errors(w, w_hat)
        errors.update(weight_absolute=wa, weight_relative=wr, weight_scaled=ws)
    if "feature" in cfg.errors and feature_inputs is not None:
        fa, fr, fs, _ = metrics.feature_errors(w, w_hat, feature_inputs, lay.stride, lay.padding)
        errors.update(feature_absolute=fa, feature_relative=fr, feature_scaled=fs)

    p = None
    if cfg.evaluate_performance and eval_data is not None:
        substituted = convnet.substitute_layer(graph, layer_id, fact, cfg.substitute_mode)
        p = convnet.evaluate(substituted, *eval_data).performance_error

    ranks_for_row = (fact.rank,) if method == "cp" else fact.ranks
    return Measurement(
        layer_id=layer_id, method=method, retained_fraction=fraction, seed=seed,
        errors=errors, p=p, replicated=False, ranks=tuple(ranks_for_row),
        budget_params=spec.budget_params, achieved_params=decomp.param_count(fact),
    )


@dataclass
class _Context:
    cfg: StudyConfig
    graph: object
    feature_images: object = None
    eval_data: object = None
    layer_input_cache: dict = field(default_factory=dict)


def _load_context(cfg: StudyConfig) -> _Context:
    graph = convnet.load_manifest(cfg.manifest)
    ctx = _Context(cfg=cfg, graph=graph)
    if cfg.dataset and ("feature" in cfg.errors or cfg.evaluate_performance):
        images, labels = dataset.read_dataset(cfg.dataset)
        if "feature" in cfg.errors:
            ctx.feature_images = images[: cfg.feature_batch_size]
        if cfg.evaluate_performance:
            ctx.eval_data = (images, labels)
    return ctx


def _layer_feature_inputs(ctx: _Context, layer_id: str):
    """Activations feeding the layer, computed once per layer and cached."""
    if ctx.feature_images is None:
        return None
    if layer_id not in ctx.layer_input_cache:
        ctx.layer_input_cache[layer_id] = convnet.layer_inputs(ctx.graph, layer_id, ctx.feature_images)
    return ctx.layer_input_cache[layer_id]


_worker_ctx: _Context | None = None


def _worker_init(cfg_fields: dict) -> None:
    global _worker_ctx
    _worker_ctx = _load_context(StudyConfig(**cfg_fields))


def _worker_compute(task):
    layer_id, method, fraction, seed = task
    ctx = _worker_ctx
    try:
        feats = _layer_feature_inputs(ctx, layer_id)
        m = compute_hypothesis(ctx.graph, layer_id, method, fraction, seed, ctx.cfg,
                               feats, ctx.eval_data)
        return task, m, None
    except Exception as exc:  # any failure stays isolated to this hypothesis
        return task, None, f"{type(exc).__name__}: {exc}"


def run_study(cfg: StudyConfig, jobs: int = 1):
    """Execute the full grid; returns (measurements, failures) and writes reports.

    ``jobs`` sizes the worker pool. Each hypothesis is computed independently
    and the rows are assembled in canonical grid order afterwards, so the
    outputs do not depend on the execution order or worker count.
    """
    cfg.validate()
    ctx = _load_context(cfg)
    base_seed = cfg.seeds[0]

    # unique computations: every seed for cp, the base seed once for tucker/tt
    tasks = []
    for layer_id in cfg.layers:
        for method in cfg.methods:
            for fraction in cfg.retained_fractions:
                seeds = [base_seed] if method in SEED_INSENSITIVE else cfg.seeds
                tasks.extend((layer_id, method, fraction, s) for s in seeds)

    results: dict[tuple, tuple] = {}
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        from dataclasses import asdict

        with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init,
                                 initargs=(asdict(cfg),)) as pool:
            for task, m, err in pool.map(_worker_compute, tasks):
                results[task] = (m, err)
    else:
        global _worker_ctx
        _worker_ctx = ctx
        for task in tasks:
            task, m, err = _worker_compute(task)
            results[task] = (m, err)

    measurements: list[Measurement] = []
    failures: list[dict] = []
    for layer_id in cfg.layers:
        for method in cfg.methods:
            for fraction in cfg.retained_fractions:
                for seed in cfg.seeds:
                    src = seed if method not in SEED_INSENSITIVE else base_seed
                    m, err = results[(layer_id, method, fraction, src)]
                    if err is not None:
                        failures.append({
                            "layer_id": layer_id, "method": method,
                            "retained_fraction": fraction, "seed": seed, "error": err,
                        })
                        continue
                    if method in SEED_INSENSITIVE:
                        measurements.append(Measurement(
                            layer_id=m.layer_id, method=m.method,
                            retained_fraction=m.retained_fraction, seed=seed,
                            errors=dict(m.errors), p=m.p, p_star=m.p_star,
                            replicated=seed != base_seed, ranks=m.ranks,
                            budget_params=m.budget_params,
                            achieved_params=m.achieved_params,
                        ))
                    else:
                        measurements.append(m)

    if cfg.performance_csv:
        diags = ingest_performance(measurements, cfg.performance_csv)
        for d in diags:
            failures.append({"layer_id": "", "method": "", "retained_fraction": "",
                             "seed": "", "error": f"performance ingest: {d}"})

    emit_reports(measurements, Path(cfg.output_dir), failures=failures, figures=cfg.figures)
    return measurements, failures


def ingest_performance(measurements, csv_path) -> list:
    """Merge p / p_star values from a CSV into the measurement list.

    The CSV must carry layer_id, method, retained_fraction, and seed key
    columns plus p and/or p_star. Returns a list of diagnostics for rows
    whose key matches nothing; duplicate keys in the CSV raise.
    """
    index = {m.key(): m for m in measurements}
    diagnostics = []
    seen = set()
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in ("layer_id", "method", "retained_fraction", "seed"):
            if col not in fields:
                raise ValueError(f"{csv_path}: missing key column {col!r}")
        if "p" not in fields and "p_star" not in fields:
            raise ValueError(f"{csv_path}: needs a p or p_star column")
        for lineno, row in enumerate(reader, start=2):
            try:
                key = (row["layer_id"], row["method"],
                       float(row["retained_fraction"]), int(row["seed"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{csv_path}:{lineno}: unparseable key: {exc}") from None
            if key in seen:
                raise ValueError(f"{csv_path}:{lineno}: duplicate key {key}")
            seen.add(key)
            m = index.get(key)
            if m is None:
                diagnostics.append(f"row {lineno}: no measurement matches key {key}")
                continue
            for attr in ("p", "p_star"):
                raw = row.get(attr)
                if raw:
                    val = float(raw)
                    if not 0.0 <= val <= 1.0:
                        raise ValueError(f"{csv_path}:{lineno}: {attr}={val} outside [0, 1]")
                    setattr(m, attr, val)
    return diagnostics


def _tau_report(measurements, grouping: str) -> dict:
    analyses: dict = {}
    for perf_key in ("p", "p_star"):
        if not any(getattr(m, perf_key) is not None for m in measurements):
            continue
        per_error = {}
        for error_key in metrics.ERROR_KEYS:
            if not any(m.errors.get(error_key) is not None for m in measurements):
                continue
            summaries = correlation.grouped_tau(measurements, error_key, perf_key, grouping)
            per_error[error_key] = [s.to_dict() for s in summaries]
        if per_error:
            analyses[perf_key] = per_error
    return {"grouping": grouping, "analyses": analyses}


def emit_reports(measurements, outdir, failures=None, figures: bool = True) -> list:
    """Write measurements.csv, failures.csv, the four tau reports, scatter
    data, and (when correlation data exists) the report figures.

    Returns the list of written file paths. Byte-identical for identical
    inputs.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    mpath = outdir / "measurements.csv"
    write_measurements(mpath, measurements)
    written.append(mpath)

    fpath = outdir / "failures.csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FAILURE_COLUMNS)
    for f in failures or []:
        w.writerow([_fmt(f.get(c, "")) for c in FAILURE_COLUMNS])
    fpath.write_text(buf.getvalue())
    written.append(fpath)

    for grouping in GROUPINGS:
        path = outdir / f"tau_{grouping}.json"
        path.write_text(json.dumps(_tau_report(measurements, grouping), indent=2) + "\n")
        written.append(path)

    spath = outdir / "scatter_by_layer.csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer_id", "method", "retained_fraction", "seed", *metrics.ERROR_KEYS, "p", "p_star"])
    for m in sorted(measurements, key=lambda m: (m.layer_id, m.method, m.retained_fraction, m.seed)):
        w.writerow([m.layer_id, m.method, _fmt(m.retained_fraction), str(m.seed),
                    *[_fmt(m.errors.get(k)) for k in metrics.ERROR_KEYS], _fmt(m.p), _fmt(m.p_star)])
    spath.write_text(buf.getvalue())
    written.append(spath)

    if figures:
        from . import figures as figmod

        written.extend(figmod.render_figures(measurements, outdir))
    return written
