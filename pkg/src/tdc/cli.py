"""Command-line interface.

Subcommands: rank, decompose, errors, evaluate, study, report. All emit
JSON on stdout (except study/report, which write files and print a short
summary). ``study`` exits non-zero if any hypothesis failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import convnet, dataset, decomp, metrics, ranks, study, tensor
from .architectures import ARCHITECTURES


def _parse_shape(s: str) -> tuple:
    return tuple(int(v) for v in s.replace("x", ",").split(","))


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_rank(args) -> int:
    if args.arch:
        shapes = ARCHITECTURES.get(args.arch)
        if shapes is None:
            raise SystemExit(f"unknown architecture {args.arch!r}; known: {sorted(ARCHITECTURES)}")
        if args.layer is None:
            raise SystemExit("--layer is required with --arch")
        shape = shapes.get(args.layer)
        if shape is None:
            raise SystemExit(f"architecture {args.arch!r} has no decomposable layer {args.layer}")
    elif args.shape:
        shape = _parse_shape(args.shape)
    else:
        raise SystemExit("provide --shape C,H,W,T or --arch/--layer")
    spec = ranks.solve_ranks(args.method, shape, args.retained_fraction)
    _emit(spec.to_dict(), args.out)
    return 0


def cmd_decompose(args) -> int:
    w = tensor.read_tensor(args.weights)
    if args.ranks:
        rank_tuple = _parse_shape(args.ranks)
        spec = None
    else:
        if args.retained_fraction is None:
            raise SystemExit("provide --retained-fraction or --ranks")
        spec = ranks.solve_ranks(args.method, w.shape, args.retained_fraction)
        rank_tuple = spec.ranks
    if args.method == "cp":
        fact = decomp.cp_als(w, rank_tuple[0], args.seed, args.max_iters, args.tol)
    elif args.method == "tucker":
        fact = decomp.tucker_hosvd(w, rank_tuple)
    else:
        fact = decomp.tt_svd(w, rank_tuple)
    decomp.save_factorization(fact, args.out)
    _emit({
        "method": args.method,
        "ranks": list(rank_tuple),
        "param_count": decomp.param_count(fact),
        "budget_params": spec.budget_params if spec else None,
        "final_relative_error": fact.final_relative_error,
        "iterations_run": getattr(fact, "iterations_run", None),
        "out": str(args.out),
    })
    return 0


def cmd_errors(args) -> int:
    if args.before or args.after:
        if not (args.before and args.after):
            raise SystemExit("checkpoint mode needs both --before and --after")
        values = _checkpoint_errors(args.before, args.after)
        _emit({"layers": values}, args.out)
        return 0
    if not (args.weights and args.approx):
        raise SystemExit("provide --weights and --approx (or --before/--after)")
    w = tensor.read_tensor(args.weights)
    w_hat = _load_weights_or_factorization(args.approx, w.shape)
    inputs = None
    if args.dataset:
        images, _ = dataset.read_dataset(args.dataset)
        inputs = images[: args.batch_size]
    report = metrics.error_report(w, w_hat, inputs, stride=args.stride, padding=args.padding)
    _emit(report.to_dict(), args.out)
    return 0


def _load_weights_or_factorization(path, shape):
    p = Path(path)
    if p.is_dir():
        return decomp.reconstruct(decomp.load_factorization(p))
    return tensor.read_tensor(p)


def _checkpoint_errors(before_dir, after_dir):
    def load_all(d):
        d = Path(d)
        entries = sorted(p.name for p in d.iterdir() if p.suffix == ".tdt" or p.is_dir())
        out = []
        for name in entries:
            p = d / name
            if p.is_dir():
                out.append((name, decomp.reconstruct(decomp.load_factorization(p))))
            else:
                out.append((name, tensor.read_tensor(p)))
        return out

    before = load_all(before_dir)
    after = load_all(after_dir)
    if [n for n, _ in before] != [n for n, _ in after]:
        raise SystemExit("checkpoint directories do not contain matching layer entries")
    changes = metrics.checkpoint_change([t for _, t in before], [t for _, t in after])
    return [
        {"layer": name, "log10_relative_change": None if c == metrics.NO_CHANGE else c,
         "no_change": c == metrics.NO_CHANGE}
        for (name, _), c in zip(before, changes)
    ]


def cmd_evaluate(args) -> int:
    graph = convnet.load_manifest(args.manifest)
    images, labels = dataset.read_dataset(args.dataset)
    if args.limit:
        images, labels = images[: args.limit], labels[: args.limit]
    for sub in args.substitute or []:
        layer_id, _, fact_dir = sub.partition("=")
        if not fact_dir:
            raise SystemExit(f"--substitute expects LAYER_ID=FACTORIZATION_DIR, got {sub!r}")
        fact = decomp.load_factorization(fact_dir)
        graph = convnet.substitute_layer(graph, layer_id, fact, args.substitute_mode)
    if args.logits:
        logits = convnet.logits_batch(graph, images)
        with open(args.logits, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "label"] + [f"logit_{i}" for i in range(logits.shape[1])])
            for i, (row, lab) in enumerate(zip(logits, labels)):
                w.writerow([i, int(lab)] + [repr(float(v)) for v in row])
    result = convnet.evaluate(graph, images, labels)
    _emit(result.to_dict(), args.out)
    return 0


def cmd_study(args) -> int:
    cfg = study.StudyConfig.from_json(args.config)
    if args.jobs is not None and args.jobs < 1:
        raise SystemExit("--jobs must be >= 1")
    measurements, failures = study.run_study(cfg, jobs=args.jobs or 1)
    summary = {
        "measurements": len(measurements),
        "failures": len(failures),
        "output_dir": str(cfg.output_dir),
    }
    _emit(summary)
    return 1 if failures else 0


def cmd_report(args) -> int:
    measurements = study.read_measurements(args.measurements)
    diagnostics = []
    if args.performance:
        diagnostics = study.ingest_performance(measurements, args.performance)
    written = study.emit_reports(measurements, args.out, figures=not args.no_figures)
    _emit({
        "measurements": len(measurements),
        "ingest_diagnostics": diagnostics,
        "written": [str(p) for p in written],
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("rank", help="solve ranks for a shape/method/fraction")
    q.add_argument("--shape", help="C,H,W,T")
    q.add_argument("--arch", choices=sorted(ARCHITECTURES))
    q.add_argument("--layer", type=int, help="layer number within --arch")
    q.add_argument("--method", required=True, choices=["cp", "tucker", "tt"])
    q.add_argument("--retained-fraction", type=float, required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_rank)

    q = sub.add_parser("decompose", help="decompose a TDT1 weight tensor")
    q.add_argument("--weights", required=True)
    q.add_argument("--method", required=True, choices=["cp", "tucker", "tt"])
    q.add_argument("--retained-fraction", type=float)
    q.add_argument("--ranks", help="explicit ranks, comma separated")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--max-iters", type=int, default=decomp.ALS_MAX_ITERS)
    q.add_argument("--tol", type=float, default=decomp.ALS_TOL)
    q.add_argument("--out", required=True, help="output factorization directory")
    q.set_defaults(func=cmd_decompose)

    q = sub.add_parser("errors", help="approximation errors or checkpoint change")
    q.add_argument("--weights", help="original TDT1 tensor")
    q.add_argument("--approx", help="approximation: TDT1 file or factorization dir")
    q.add_argument("--dataset", help="TDS1 file enabling the feature errors")
    q.add_argument("--batch-size", type=int, default=256)
    q.add_argument("--stride", type=int, default=1)
    q.add_argument("--padding", type=int, default=0)
    q.add_argument("--before", help="checkpoint dir (change mode)")
    q.add_argument("--after", help="checkpoint dir (change mode)")
    q.add_argument("--out")
    q.set_defaults(func=cmd_errors)

    q = sub.add_parser("evaluate", help="classification error of a manifest on a TDS1 dataset")
    q.add_argument("--manifest", required=True)
    q.add_argument("--dataset", required=True)
    q.add_argument("--limit", type=int)
    q.add_argument("--substitute", action="append", metavar="LAYER=FACT_DIR")
    q.add_argument("--substitute-mode", default="reconstruct", choices=["reconstruct", "factorized"])
    q.add_argument("--logits", help="write per-sample logits CSV here")
    q.add_argument("--out")
    q.set_defaults(func=cmd_evaluate)

    q = sub.add_parser("study", help="run a full hypothesis-grid study from a JSON config")
    q.add_argument("--config", required=True)
    q.add_argument("--jobs", type=int, help="worker count (results are order-invariant)")
    q.set_defaults(func=cmd_study)

    q = sub.add_parser("report", help="re-emit reports (optionally merging a performance CSV)")
    q.add_argument("--measurements", required=True)
    q.add_argument("--performance")
    q.add_argument("--out", required=True)
    q.add_argument("--no-figures", action="store_true")
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
