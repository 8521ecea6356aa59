import numpy as np
import pytest

from basisgan import bgt1
from basisgan.config import load_config, parse_config
from basisgan.train import HEADER, build_nets, evaluate, load_state, state_tensors, train

TINY = """
train.steps = {steps}
train.log_every = {log}
train.batch = 8
train.eval_samples = {evals}
model.width = 4
model.d_z = 4
model.d_h = 8
model.disc_hidden = 8
model.disc_width = 4
model.stochastic = {stoch}
task.id = {task}
"""


def tiny(task="gmm", steps=4, log=2, stoch="basis", evals=None):
    evals = evals or (120 if task == "gmm" else 4)
    return parse_config(TINY.format(task=task, steps=steps, log=log, stoch=stoch, evals=evals))


@pytest.mark.parametrize("task", ["gmm", "autoenc"])
def test_one_step_writes_header_and_one_row(tmp_path, task):
    train(tiny(task, steps=1), out_dir=tmp_path)
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[0] == HEADER
    assert (tmp_path / "model.bgt1").is_file() and (tmp_path / "manifest.txt").is_file()


@pytest.mark.parametrize("task, stoch", [("gmm", "basis"), ("gmm", "filtergen"), ("shapes", "basis")])
def test_two_runs_are_byte_identical(tmp_path, task, stoch):
    for d in ("a", "b"):
        train(tiny(task, stoch=stoch), out_dir=tmp_path / d)
    for name in ("metrics.csv", "model.bgt1", "manifest.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_logging_frequency_does_not_change_training(tmp_path):
    train(tiny(steps=6, log=1), out_dir=tmp_path / "a")
    train(tiny(steps=6, log=6), out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "model.bgt1").read_bytes() == (tmp_path / "b" / "model.bgt1").read_bytes()


def test_different_seed_changes_weights(tmp_path):
    cfg = tiny()
    train(cfg, out_dir=tmp_path / "a")
    cfg.train.seed = 1
    train(cfg, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "model.bgt1").read_bytes() != (tmp_path / "b" / "model.bgt1").read_bytes()


@pytest.mark.parametrize("task", ["gmm", "autoenc"])
def test_deterministic_variant_has_zero_diversity(task):
    _, _, rows = train(tiny(task, stoch="none"))
    assert all(r.diversity == 0.0 for r in rows)


def test_stochastic_variant_is_diverse_at_init():
    cfg = tiny()
    gen, _ = build_nets(cfg)
    assert evaluate(gen, cfg.task, 0, 120)["diversity"] > 0


def test_manifest_reloads_to_same_config(tmp_path):
    cfg = tiny()
    train(cfg, out_dir=tmp_path)
    assert load_config(tmp_path / "manifest.txt") == cfg


def test_checkpoint_round_trip_restores_outputs(tmp_path):
    cfg = tiny()
    gen, disc, _ = train(cfg, out_dir=tmp_path)
    gen2, disc2 = build_nets(tiny(steps=1))
    load_state(gen2, disc2, bgt1.load(tmp_path / "model.bgt1"))
    for name, arr in state_tensors(gen, disc).items():
        assert np.array_equal(arr, state_tensors(gen2, disc2)[name])


def test_load_state_rejects_missing_and_misshapen(tmp_path):
    gen, disc = build_nets(tiny())
    tensors = state_tensors(gen, disc)
    name = next(iter(tensors))
    with pytest.raises(ValueError, match="lacks"):
        load_state(gen, disc, {k: v for k, v in tensors.items() if k != name})
    with pytest.raises(ValueError, match="shape"):
        load_state(gen, disc, dict(tensors, **{name: np.zeros(3)}))


def test_gmm_jsd_is_nan_below_minimum_samples():
    cfg = tiny()
    gen, _ = build_nets(cfg)
    assert np.isnan(evaluate(gen, cfg.task, 0, 20)["jsd_est"])
    assert np.isfinite(evaluate(gen, cfg.task, 0, 100)["jsd_est"])
