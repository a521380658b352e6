"""Export CLI: a pickled/TorchScript model, a dataset, or both.

Examples:
    tdc-export --model toy.pt --input-shape 3,32,32 --out export/
    tdc-export --dataset fake --split test --limit 100 --out export/
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import export


def _load_model(path):
    import torch

    try:
        return torch.jit.load(path, map_location="cpu")
    except RuntimeError:
        obj = torch.load(path, map_location="cpu", weights_only=False)
        if not isinstance(obj, torch.nn.Module):
            raise ValueError(f"{path} does not contain an nn.Module")
        return obj


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="tdc-export", description=__doc__)
    p.add_argument("--model", help="path to a saved nn.Module or TorchScript file")
    p.add_argument("--input-shape", help="C,H,W for the model manifest")
    p.add_argument("--name", default="exported")
    p.add_argument("--dataset", help="fake, cifar10, or fashion-mnist")
    p.add_argument("--split", default="test")
    p.add_argument("--limit", type=int)
    p.add_argument("--balanced", action="store_true", help="equal per-class sample counts")
    p.add_argument("--data-root", default="data")
    p.add_argument("--normalization", help="manifest.json to take mean/std from")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)

    if not args.model and not args.dataset:
        p.error("provide --model and/or --dataset")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emitted = {}

    try:
        norm = None
        if args.normalization:
            doc = json.loads(Path(args.normalization).read_text())
            if "normalization" not in doc:
                raise ValueError(f"{args.normalization} carries no normalization constants")
            norm = (doc["normalization"]["mean"], doc["normalization"]["std"])

        if args.model:
            if not args.input_shape:
                p.error("--input-shape is required with --model")
            shape = [int(v) for v in args.input_shape.split(",")]
            manifest = export.export_model(_load_model(args.model), out, args.name,
                                           shape, normalization=norm)
            emitted["manifest"] = str(manifest)

        if args.dataset:
            images, labels = export.load_source(args.dataset, args.split,
                                                root=args.data_root, seed=args.seed)
            ds_path = out / f"{args.dataset}_{args.split}.tds"
            sidecar = export.export_dataset(images, labels, ds_path, normalization=norm,
                                            limit=args.limit, balanced=args.balanced)
            emitted["dataset"] = str(ds_path)
            emitted["samples"] = sidecar["count"]
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(json.dumps(emitted, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
