"""K ablation on the GMM task: params and quality for several basis sizes under one budget.

usage: python scripts/k_sweep.py [--ks 7,16,32] [--steps 5000] [--seed 0] [--out k_sweep.csv]
"""

import argparse
import dataclasses

from basisgan.config import task_preset
from basisgan.lowrank import cost_quality_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ks", default="7,16,32")
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--filtergen", action="store_true", help="add the direct filter-generator variant")
    ap.add_argument("--out", default="k_sweep.csv")
    args = ap.parse_args()
    cfg = task_preset("gmm", seed=args.seed, steps=args.steps)
    cfg.task = dataclasses.replace(cfg.task, seed=args.seed)
    variants = [f"basis:{k}" for k in args.ks.split(",")] + (["filtergen"] if args.filtergen else [])
    cost_quality_sweep(cfg, variants, args.out, on_record=lambda r: print(
        f"{r.variant}:{r.K} params={r.params} coverage={r.mode_coverage} jsd={r.jsd_est:.4f} ({r.wall_notes})",
        flush=True))


if __name__ == "__main__":
    main()
