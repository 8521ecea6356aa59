"""Command-line entry point: training, evaluation, and the verification harnesses."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bgt1, grids, lowrank, tasks
from .config import ConfigError, load_config, parse_config
from .optim import DivergenceError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- helpers ---

def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def _check_out_dir(path):
    if os.path.exists(path) and not os.path.isdir(path):
        raise UsageError(f"output path exists and is not a directory: {path}")


def _check_out_file(path):
    parent = os.path.dirname(os.path.abspath(path))
    if os.path.isdir(path):
        raise UsageError(f"output path is a directory: {path}")
    if not os.path.isdir(parent):
        raise UsageError(f"output directory does not exist: {parent}")


def _positive(value, name):
    if value < 1:
        raise UsageError(f"{name} must be >= 1, got {value}")


def load_run(model_path):
    """Rebuild (cfg, gen, disc) from a checkpoint and the manifest.txt beside it."""
    from .train import build_nets, load_state

    _require_file(model_path, "model")
    manifest = os.path.join(os.path.dirname(os.path.abspath(model_path)), "manifest.txt")
    _require_file(manifest, "manifest (expected next to the model)")
    with open(manifest, encoding="utf-8") as fh:
        text = fh.read()
    saved = os.environ.pop("BASISGEN_SEED", None)
    try:
        cfg = parse_config(text, manifest)  # the recorded seed wins over the environment
    finally:
        if saved is not None:
            os.environ["BASISGEN_SEED"] = saved
    gen, disc = build_nets(cfg)
    try:
        load_state(gen, disc, bgt1.load(model_path))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg, gen, disc


def _show(a):
    """Binary edge maps in {0, 1} are shown on the [-1, 1] image scale."""
    return a * 2 - 1 if a.shape[0] == 1 else a


def sample_grid(gen, task, seed, step, per_row=8):
    """Rows per condition: for images the input, target, then samples; for gmm real vs generated scatter."""
    from .train import EVAL, eval_conditions, generate, stream

    rng = stream(seed, EVAL, step, 1)
    rows = []
    if task.id == "gmm":
        for c in range(task.n_conditions):
            _, real, _ = tasks.gmm_batch(task, rng, 500, np.full(500, c))
            rows.append([grids.scatter_image(real), grids.scatter_image(generate(gen, task, c, 500, rng))])
        return grids.tile(rows)
    A, B = eval_conditions(task, seed, count=4)
    for a, b in zip(A, B):
        out = generate(gen, task, a, per_row, rng)
        rows.append([_show(a), b] + list(out))
    return grids.tile(rows)


# --- commands ---

def cmd_train(args):
    from .train import train

    _require_file(args.config, "config")
    cfg = load_config(args.config)
    _check_out_dir(args.out)

    def on_log(step, gen, row, ev):
        grids.write_ppm(os.path.join(args.out, f"samples_{step:06d}.ppm"), sample_grid(gen, cfg.task, cfg.train.seed, step))
        print(f"step {step}: " + ", ".join(f"{k}={getattr(row, k):.4f}" for k in row.FIELDS[1:]), flush=True)

    train(cfg, out_dir=args.out, on_log=on_log)
    print(f"wrote {args.out}/metrics.csv, model.bgt1, manifest.txt")
    return EXIT_OK


def cmd_eval(args):
    from .train import evaluate

    _positive(args.samples_per_condition, "--samples-per-condition")
    if args.task not in tasks.TASKS:
        raise UsageError(f"unknown task {args.task!r}; expected one of {tasks.TASKS}")
    cfg, gen, _ = load_run(args.model)
    if cfg.task.id != args.task:
        raise UsageError(f"model was trained on task {cfg.task.id!r}, not {args.task!r}")
    if args.task != "gmm" and args.samples_per_condition < 2:
        raise UsageError("diversity needs at least 2 samples per condition")
    ev = evaluate(gen, cfg.task, cfg.train.seed, args.samples_per_condition, step=0)
    print(f"task={args.task} samples_per_condition={args.samples_per_condition}")
    for k in ("diversity", "jsd_est", "mode_coverage", "l1"):
        print(f"{k}={ev[k]:.6f}")
    return EXIT_OK


def cmd_gradcheck(args):
    from .gradcheck import TOLERANCE, run_suite

    _positive(args.instances, "--instances")
    rows = run_suite(args.instances, args.seed)
    print(f"{'op':<24}{'instances':>10}{'max_rel_err':>14}  result (tol {TOLERANCE:g})")
    for r in rows:
        print(f"{r.op:<24}{r.instances:>10}{r.max_rel_error:>14.3e}  {'PASS' if r.passed else 'FAIL'}")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_NUMERIC


def cmd_verify_theorem(args):
    for name in ("k", "cin", "cout", "samples", "L"):
        _positive(getattr(args, name), f"--{name}")
    rng = np.random.default_rng(args.seed)
    independent = not args.dependent
    try:
        inst, F = lowrank.plant_instance(args.k, args.cin, args.cout, args.L, args.samples, independent, rng)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    b_hat, residual = lowrank.recover_basis_coefficients(inst, F)
    ok = residual < 1e-8
    print(f"{'independent' if independent else 'dependent'} instance: K={args.k} Cin={args.cin} "
          f"Cout={args.cout} L={args.L} samples={args.samples}")
    print(f"span_dim={lowrank.effective_rank(inst.transform(), lowrank.TAU_HARD)}")
    print(f"reconstruction_residual={residual:.3e}")
    if independent:
        err = float(np.max(np.abs(b_hat - inst.b)))
        ok &= err < 1e-8
        print(f"max_coefficient_error={err:.3e}")
        if args.samples >= lowrank.MIN_DRAWS:
            m = lowrank.fresh_draw_match(inst, args.samples, rng)
            ok &= m.passed
            print(f"ks_max={m.statistics.max():.4f} ks_critical={m.critical:.4f} (alpha={m.alpha}) "
                  f"{'match' if m.passed else 'REJECT'}")
        else:
            print(f"ks test skipped: needs --samples >= {lowrank.MIN_DRAWS}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_analyze_rank(args):
    _positive(args.draws, "--draws")
    if not 0 < args.tau < 1:
        raise UsageError(f"--tau must lie in (0, 1), got {args.tau}")
    cfg, gen, _ = load_run(args.model)
    rng = np.random.default_rng((cfg.train.seed, 99))
    layers = gen.stochastic_layers
    if not layers:
        print("model has no stochastic layers")
        return EXIT_OK
    print(f"{'layer':<8}{'kind':<11}{'K':>4}{'rows':>7}{'cols':>7}{'eff_rank':>10}  (tau={args.tau:g}, draws={args.draws})")
    for i, layer in enumerate(layers):
        z = rng.standard_normal((args.draws, layer.d_z))
        banks = layer.filters(z).data
        m = lowrank.stack_filters(list(banks))
        K = getattr(layer.generator, "K", "-")
        print(f"{i:<8}{layer.kind:<11}{K:>4}{m.shape[0]:>7}{m.shape[1]:>7}{lowrank.effective_rank(m, args.tau):>10}")
    return EXIT_OK


def cmd_cost_sweep(args):
    _require_file(args.config, "config")
    cfg = load_config(args.config)
    if cfg.task.id != "gmm":
        raise UsageError("cost-sweep measures quality on the gmm task; set task.id = gmm")
    variants = [v for v in cfg.sweep.variants.split(",") if v.strip()]
    try:
        for v in variants:
            lowrank.parse_variant(v)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _check_out_file(args.out)

    def report(r):
        print(f"{r.variant:<10} K={r.K:<3} params={r.params:<10} coverage={r.mode_coverage:.2f} "
              f"jsd={r.jsd_est:.4f} quality={r.quality:.4f} ({r.wall_notes})", flush=True)

    lowrank.cost_quality_sweep(cfg, variants, args.out, on_record=report)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gen_data(args):
    _positive(args.n, "--n")
    if args.task not in tasks.TASKS:
        raise UsageError(f"unknown task {args.task!r}; expected one of {tasks.TASKS}")
    _check_out_dir(args.out)
    spec = parse_config(f"task.id = {args.task}\ntask.seed = {args.seed}\ntrain.seed = {args.seed}\n").task
    rng = np.random.default_rng(spec.seed)
    os.makedirs(args.out, exist_ok=True)
    if args.task == "gmm":
        cond, B, comp = tasks.gmm_batch(spec, rng, args.n)
        bgt1.save(os.path.join(args.out, "data.bgt1"), {"A": cond.astype(np.float64), "B": B})
        with open(os.path.join(args.out, "data.csv"), "w", encoding="utf-8") as fh:
            fh.write("condition,component,x,y\n")
            for c, k, (x, y) in zip(cond, comp, B):
                fh.write(f"{c},{k},{x!r},{y!r}\n")
    else:
        A, B, _ = tasks.image_batch(spec, rng, args.n)
        bgt1.save(os.path.join(args.out, "data.bgt1"), {"A": A, "B": B})
        rows = [[_show(a), b] for a, b in zip(A[:8], B[:8])]
        grids.write_ppm(os.path.join(args.out, "preview.ppm"), grids.tile(rows))
    with open(os.path.join(args.out, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"task.id = {args.task}\ntask.seed = {args.seed}\ndata.n = {args.n}\n")
    print(f"wrote {args.n} {args.task} pairs to {args.out}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="basisgan", description="Stochastic-filter conditional GAN toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train", help="train on a task from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="diversity / JSD / coverage of a checkpoint")
    s.add_argument("--model", required=True)
    s.add_argument("--task", required=True)
    s.add_argument("--samples-per-condition", type=int, default=20)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    s.add_argument("--instances", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("verify-theorem", help="plant and recover span coefficients")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--cin", type=int, required=True)
    s.add_argument("--cout", type=int, required=True)
    s.add_argument("--samples", type=int, required=True)
    s.add_argument("--L", type=int, default=3)
    s.add_argument("--dependent", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify_theorem)

    s = sub.add_parser("analyze-rank", help="effective rank of stacked sampled filter banks")
    s.add_argument("--model", required=True)
    s.add_argument("--draws", type=int, default=200)
    s.add_argument("--tau", type=float, default=lowrank.TAU_REPORT)
    s.set_defaults(func=cmd_analyze_rank)

    s = sub.add_parser("cost-sweep", help="params vs quality across stochastic layer variants")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="sweep.csv")
    s.set_defaults(func=cmd_cost_sweep)

    s = sub.add_parser("gen-data", help="write a synthetic dataset")
    s.add_argument("--task", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_data)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, bgt1.FormatError, OSError) as exc:
        print(f"basisgan {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, FloatingPointError) as exc:
        print(f"basisgan {args.command}: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
