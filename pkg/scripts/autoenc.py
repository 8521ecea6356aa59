"""Stochastic autoencoder: does the basis model keep sample diversity while reconstructing its input?

usage: python scripts/autoenc.py [--steps 2000] [--seed 0] [--variants basis,none] [key=value ...]

Extra ``section.key=value`` arguments override the autoenc preset.
"""

import argparse
import time

from basisgan.config import parse_config
from basisgan.train import train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variants", default="basis,none")
    ap.add_argument("overrides", nargs="*")
    args = ap.parse_args()
    text = "\n".join(["task.id = autoenc", f"train.steps = {args.steps}", f"train.seed = {args.seed}",
                      f"task.seed = {args.seed}"] + args.overrides)
    print("variant,step,l1,diversity,seconds")
    for variant in args.variants.split(","):
        cfg = parse_config(text, "<args>")
        t0 = time.perf_counter()

        def log(step, gen, row, ev, variant=variant):
            print(f"{variant},{step},{ev['l1']:.4f},{ev['diversity']:.4g},{time.perf_counter() - t0:.0f}", flush=True)

        train(cfg, variant=variant, on_log=log)


if __name__ == "__main__":
    main()
