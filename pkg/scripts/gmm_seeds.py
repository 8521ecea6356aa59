"""Train the GMM task over several seeds for the basis and deterministic variants.

usage: python scripts/gmm_seeds.py [--seeds 10] [--steps 5000] [--out gmm_seeds.csv]
"""

import argparse
import dataclasses
import time

from basisgan.config import task_preset
from basisgan.train import train


def run(seed, variant, steps):
    cfg = task_preset("gmm", seed=seed, steps=steps)
    cfg.task = dataclasses.replace(cfg.task, seed=seed)
    t0 = time.perf_counter()
    _, _, rows = train(cfg, variant=variant)
    return rows[-1], time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--variants", default="basis,none")
    ap.add_argument("--out", default="gmm_seeds.csv")
    args = ap.parse_args()
    with open(args.out, "w") as fh:
        fh.write("variant,seed,mode_coverage,jsd_est,diversity,seconds\n")
        for variant in args.variants.split(","):
            for seed in range(args.seeds):
                row, secs = run(seed, variant, args.steps)
                line = f"{variant},{seed},{row.mode_coverage},{row.jsd_est:.4f},{row.diversity:.3g},{secs:.0f}"
                print(line, flush=True)
                fh.write(line + "\n")


if __name__ == "__main__":
    main()
