#!/usr/bin/env python3
"""Desk-scale model comparison on the bundled 50-chorale subset.

Trains every requested variant with one shared configuration, then samples a
corpus from the BachProp checkpoint and compares its statistics with the
training songs. Results land under --out; a summary table is printed.

    python3 scripts/run_comparison.py --out runs/comparison --epochs 30 --variants bachprop,indepbp,mlp
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import time
from pathlib import Path

from bachprop.cli import cmd_evaluate, cmd_preprocess, cmd_sample, cmd_train, manifest_payload
from bachprop.config import RunConfig
from bachprop.training import TrainConfig

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--corpus", type=Path, default=ROOT / "data" / "chorales50")
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "comparison")
    ap.add_argument("--variants", default="bachprop,indepbp,mlp")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--lr", type=float, default=3e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-sample", action="store_true", help="skip generation and evaluation")
    args = ap.parse_args()

    cfg = RunConfig(train=TrainConfig(batch_size=args.batch_size, lr=args.lr, max_epochs=args.epochs,
                                      patience=0)).with_seed(args.seed)
    out = args.out
    rep = cmd_preprocess(args.corpus, out / "pre", cfg)
    print(f"{rep['scores']} scores, {rep['notes']} notes")

    rows, runs = [], {}
    for variant in args.variants.split(","):
        t0 = time.perf_counter()
        run = cmd_train(out / "pre" / "manifest.json", out / variant, dataclasses.replace(cfg, variant=variant))
        best = run.result.best
        runs[variant] = run
        rows.append((variant, run.result.model.n_params(), run.result.best_epoch, best.val_nll, *best.val_acc,
                     time.perf_counter() - t0))

    print(f"\n{'variant':10s} {'params':>9s} {'best':>5s} {'val NLL':>8s} {'acc dT':>7s} {'acc T':>7s} "
          f"{'acc P':>7s} {'time':>7s}")
    for v, n, e, nll, ad, at, ap_, dt in rows:
        print(f"{v:10s} {n:9d} {e:5d} {nll:8.4f} {ad:7.3f} {at:7.3f} {ap_:7.3f} {dt:6.0f}s")

    if args.no_sample or "bachprop" not in runs:
        return
    train_set = runs["bachprop"].train_set
    ref = out / "train_split" / "manifest.json"
    ref.parent.mkdir(parents=True, exist_ok=True)
    ref.write_text(json.dumps(manifest_payload(train_set, {}), sort_keys=True))
    cmd_sample(out / "bachprop" / "checkpoint.bin", out / "samples", cfg, count=len(train_set))
    dist = cmd_evaluate(out / "samples" / "manifest.json", ref, out / "eval", cfg)
    print("\ngenerated vs training songs, total-variation distance")
    for key, d in dist.items():
        print(f"  {key:16s} {d:.3f}")


if __name__ == "__main__":
    main()
