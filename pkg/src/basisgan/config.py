"""Run configuration and the flat ``section.key = value`` file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

from .tasks import TaskSpec


class ConfigError(ValueError):
    pass


@dataclass
class TrainingConfig:
    alpha: float = 2e-4
    steps: int = 5000
    batch: int = 64
    lambda_l1: float = 0.0
    lambda_div: float = 0.0
    div_clip: float = 0.0  # 0 leaves the diversity ratio uncapped
    seed: int = 0
    latent_mode: str = "per_layer"
    per_sample: bool = False
    k_basis: int = 7
    objective: str = "non_saturating"
    optimizer: str = "adam"
    log_every: int = 500
    eval_samples: int = 1000

    def __post_init__(self):
        if self.steps < 1 or self.batch < 1:
            raise ConfigError("steps and batch must be >= 1")
        if self.lambda_l1 < 0 or self.lambda_div < 0 or self.div_clip < 0:
            raise ConfigError("lambda_l1, lambda_div and div_clip must be >= 0")
        if self.latent_mode not in ("per_layer", "shared"):
            raise ConfigError(f"latent_mode must be per_layer or shared, got {self.latent_mode!r}")
        if self.objective not in ("saturating", "non_saturating"):
            raise ConfigError(f"objective must be saturating or non_saturating, got {self.objective!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.log_every < 1 or self.k_basis < 1 or self.eval_samples < 2:
            raise ConfigError("log_every, k_basis must be >= 1 and eval_samples >= 2")


@dataclass
class ModelConfig:
    width: int = 16
    kernel: int = 3
    d_z: int = 64
    d_h: int = 64
    n_encoder: int = 2
    n_stochastic: int = 2
    n_decoder: int = 2
    stochastic: str = "basis"
    residual: bool = True
    out_act: str = "none"  # tanh saturates under L1 and stalls on the all-background image
    disc_width: int = 16
    disc_hidden: int = 64

    def __post_init__(self):
        if self.stochastic not in ("basis", "filtergen", "none"):
            raise ConfigError(f"model.stochastic must be basis, filtergen or none, got {self.stochastic!r}")
        if self.out_act not in ("none", "tanh"):
            raise ConfigError(f"model.out_act must be none or tanh, got {self.out_act!r}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ConfigError("model.kernel must be odd")
        if min(self.width, self.d_z, self.d_h, self.disc_width, self.disc_hidden) < 1:
            raise ConfigError("model sizes must be positive")


@dataclass
class SweepConfig:
    variants: str = "basis:7,basis:16,basis:32,filtergen"


@dataclass
class RunConfig:
    train: TrainingConfig = field(default_factory=TrainingConfig)
    task: TaskSpec = field(default_factory=TaskSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)


SECTIONS = ("train", "task", "model", "sweep")
# task.centers is structural; the file format only exposes scalar fields
_SKIP = {("task", "centers")}


def _coerce(text, typ, where):
    try:
        if typ in (bool, "bool"):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if typ in (int, "int"):
            return int(text)
        if typ in (float, "float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {typ}") from None


def parse_config(text, source="<config>"):
    """Parse flat ``section.key = value`` lines into a RunConfig.

    ``#`` starts a comment. Unknown sections or keys are rejected with the line number.
    Keys not given fall back to the preset for ``task.id`` (default gmm).
    """
    values = {s: {} for s in SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected section.key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section == "run":
            continue  # manifest bookkeeping, ignored on reload
        if section not in SECTIONS or not name:
            raise ConfigError(f"{where}: unknown key {key!r}")
        cls = type(getattr(RunConfig(), section))
        types = {f.name: f.type for f in dataclasses.fields(cls) if (section, f.name) not in _SKIP}
        if name not in types:
            raise ConfigError(f"{where}: unknown key {key!r}")
        values[section][name] = _coerce(value, types[name], where)
    try:
        base = task_preset(values["task"].get("id", "gmm"))
        cfg = RunConfig(**{s: dataclasses.replace(getattr(base, s), **values[s]) for s in SECTIONS})
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return apply_env(cfg)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def apply_env(cfg):
    """BASISGEN_SEED (an integer) overrides train.seed and task.seed."""
    raw = os.environ.get("BASISGEN_SEED")
    if raw is None:
        return cfg
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"BASISGEN_SEED must be an integer, got {raw!r}") from None
    cfg.train.seed = seed
    cfg.task.seed = seed
    return cfg


def dump_config(cfg):
    lines = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            if (section, f.name) in _SKIP:
                continue
            lines.append(f"{section}.{f.name} = {getattr(obj, f.name)}")
    return "\n".join(lines) + "\n"


def task_preset(task_id, **train_overrides):
    """Defaults tuned per task: the density task gets no L1 and a diversity term, image tasks lambda_l1 = 10."""
    if task_id == "gmm":
        # a 2x2 condition map carries the one-hot code as well as 4x4 at half the cost
        task = TaskSpec(id=task_id, grid=2)
        # without the diversity term the adversarial gradient drags every sample to one mode
        train = TrainingConfig(lambda_l1=0.0, lambda_div=10.0, div_clip=1.0, per_sample=True)
        model = ModelConfig()
    else:
        task = TaskSpec(id=task_id)
        train = TrainingConfig(lambda_l1=10.0, batch=16, eval_samples=20)
        model = ModelConfig()
    train = dataclasses.replace(train, **train_overrides)
    return RunConfig(train=train, task=task, model=model)
