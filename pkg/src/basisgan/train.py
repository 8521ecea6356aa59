"""Build nets for a task, run the training loop, evaluate, and persist runs."""

from __future__ import annotations

import os

import numpy as np

from . import bgt1, tasks
from .config import dump_config
from .divergence import diversity_score, jsd_from_samples, mode_coverage
from .gan import Batch, DiscriminatorNet, MetricsRow, Trainer, build_generator, train_step

HEADER = ",".join(MetricsRow.FIELDS)
VERSION = "0.1.0"

# separate rng streams so logging frequency never perturbs the training trajectory
INIT, TRAIN, EVAL, HOLDOUT = 0, 1, 2, 3

GMM_RANGE = ((-3.0, 3.0), (-3.0, 3.0))
GMM_BINS = 24
DIVERSITY_CAP = 200
MIN_JSD_SAMPLES = 100  # below this the histogram estimate is reported as nan


def stream(seed, *tags):
    return np.random.default_rng((seed,) + tags)


def build_nets(cfg, variant=None):
    """Generator and discriminator for ``cfg`` (``variant`` overrides model.stochastic)."""
    task, m, t = cfg.task, cfg.model, cfg.train
    rng = stream(t.seed, INIT)
    image = task.id != "gmm"
    gen = build_generator(
        rng, tasks.condition_channels(task), tasks.target_channels(task), width=m.width,
        n_encoder=m.n_encoder, n_stochastic=m.n_stochastic, n_decoder=m.n_decoder,
        stochastic=variant or m.stochastic, K=t.k_basis, d_z=m.d_z, d_h=m.d_h, L=m.kernel,
        residual=m.residual, out_act=m.out_act, pool=not image,
        latent_mode=t.latent_mode)
    if image:
        disc = DiscriminatorNet.init(rng, tasks.condition_channels(task), 3, image=True,
                                     hidden=(), width=m.disc_width)
    else:
        disc = DiscriminatorNet.init(rng, task.n_conditions, 2, hidden=(m.disc_hidden, m.disc_hidden))
    return gen, disc


def make_batch(task, rng, n):
    if task.id == "gmm":
        cond, target, _ = tasks.gmm_batch(task, rng, n)
        return Batch(tasks.condition_maps(task, cond), np.eye(task.n_conditions)[cond], target)
    A, B, _ = tasks.image_batch(task, rng, n)
    return Batch(A, A, B)


def generate(gen, task, cond, n, rng):
    """n independent outputs for one condition (one latent per output)."""
    if task.id == "gmm":
        x = tasks.condition_maps(task, np.full(n, cond))
    else:
        x = np.repeat(np.asarray(cond)[None], n, axis=0)
    return gen(x, rng, per_sample=True).data


def eval_conditions(task, seed, count=8):
    """Held-out image conditions drawn from a stream disjoint from training."""
    rng = stream(seed, HOLDOUT)
    A, B, colors = tasks.image_batch(task, rng, count)
    return A, B


def evaluate(gen, task, seed, samples, step=0):
    """Diversity, histogram JSD, mode coverage, and mean L1 to the reference target."""
    rng = stream(seed, EVAL, step)
    if task.id == "gmm":
        div, js, cov = [], [], []
        for c in range(task.n_conditions):
            out = generate(gen, task, c, samples, rng)
            _, real, _ = tasks.gmm_batch(task, rng, samples, np.full(samples, c))
            div.append(diversity_score(out[:DIVERSITY_CAP]))
            lo, hi = GMM_RANGE[0]
            if samples >= MIN_JSD_SAMPLES:
                js.append(jsd_from_samples(np.clip(out, lo, hi), real, bins=GMM_BINS, range=GMM_RANGE))
            cov.append(mode_coverage(out, task.modes(c), 3 * task.sigma))
        return {"diversity": float(np.mean(div)), "jsd_est": float(np.mean(js)) if js else float("nan"),
                "mode_coverage": float(np.mean(cov)), "l1": float("nan")}

    A, B = eval_conditions(task, seed)
    div, l1, outs = [], [], []
    for a, b in zip(A, B):
        out = generate(gen, task, a, samples, rng)
        outs.append(out)
        div.append(diversity_score(out))
        l1.append(float(np.mean(np.abs(out - b[None]))))
    outs = np.stack(outs)
    js = jsd_from_samples(np.clip(outs.ravel(), -1, 1), np.repeat(B[:, None], samples, 1).ravel(),
                          bins=50, range=(-1.0, 1.0))
    return {"diversity": float(np.mean(div)), "jsd_est": js,
            "mode_coverage": _palette_coverage(outs, B, task), "l1": float(np.mean(l1))}


def _palette_coverage(outs, B, task, radius=0.5):
    """Fraction of palette colors matched by the mean shape color of some generated sample."""
    fills = []
    for out, b in zip(outs, B):
        mask = np.any(b > -1, axis=0)
        if mask.any():
            fills.append(out[:, :, mask].mean(axis=2))
    if not fills:
        return 0.0
    return mode_coverage(np.concatenate(fills), task.palette, radius)


def state_tensors(gen, disc):
    out = {name: p.data for name, p in gen.named_parameters().items()}
    out.update({name: p.data for name, p in disc.named_parameters().items()})
    return out


def load_state(gen, disc, tensors):
    named = dict(gen.named_parameters())
    named.update(disc.named_parameters())
    missing = sorted(set(named) - set(tensors))
    if missing:
        raise ValueError(f"checkpoint lacks tensors: {', '.join(missing)}")
    for name, p in named.items():
        if tensors[name].shape != p.shape:
            raise ValueError(f"checkpoint tensor {name} has shape {tensors[name].shape}, model expects {p.shape}")
        p.data = tensors[name].copy()


def write_manifest(path, cfg, artifacts):
    lines = [dump_config(cfg).rstrip("\n"), f"run.version = {VERSION}", f"run.seed = {cfg.train.seed}"]
    lines += [f"run.{k} = {v}" for k, v in artifacts.items()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def train(cfg, out_dir=None, variant=None, on_log=None):
    """Run the loop; returns (gen, disc, metrics rows). Writes artifacts when ``out_dir`` is set.

    A metrics row is logged every ``log_every`` steps and at the final step.
    """
    t = cfg.train
    gen, disc = build_nets(cfg, variant)
    trainer = Trainer(gen, disc, t)
    rng = stream(t.seed, TRAIN)
    paths = {}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        paths = {k: os.path.join(out_dir, f) for k, f in
                 (("metrics", "metrics.csv"), ("model", "model.bgt1"), ("manifest", "manifest.txt"))}
        write_manifest(paths["manifest"], cfg, {"metrics": "metrics.csv", "model": "model.bgt1"})
    rows = []
    fh = open(paths["metrics"], "w", encoding="utf-8") if paths else None
    try:
        if fh:
            fh.write(HEADER + "\n")
        for step in range(1, t.steps + 1):
            row = train_step(trainer, make_batch(cfg.task, rng, t.batch), rng)
            if step % t.log_every == 0 or step == t.steps:
                ev = evaluate(gen, cfg.task, t.seed, t.eval_samples, step)
                row.diversity, row.jsd_est, row.mode_coverage = ev["diversity"], ev["jsd_est"], ev["mode_coverage"]
                rows.append(row)
                if fh:
                    fh.write(row.csv() + "\n")
                    fh.flush()
                if on_log is not None:
                    on_log(step, gen, row, ev)
    finally:
        if fh:
            fh.close()
    if paths:
        bgt1.save(paths["model"], state_tensors(gen, disc))
    return gen, disc, rows
