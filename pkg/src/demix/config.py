"""Experiment configuration: flat ``section.key = value`` text files.

Unknown keys are hard errors, every key has a typed default, and
parse -> serialize -> parse is the identity on the resulting config object.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .losses import DMConfig, LossSpec, RescaleParams, LOSS_KINDS
from .mixers import MixConfig, POLICIES
from .network import TrainConfig
from .semisup import SSLConfig


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "images"  # images | blobs | two_moons | idx
    size: int = 1000  # training subset size
    val_size: int = 1000
    label_fraction: float = 1.0  # fraction of the training subset kept labeled
    noise: float = 0.25
    seed: int = 0
    num_classes: int = 10
    shift: int = 3
    images: str = ""  # idx source paths
    labels: str = ""

    def __post_init__(self):
        if self.source not in ("images", "blobs", "two_moons", "idx"):
            raise ValueError(f"unknown dataset source {self.source!r}")
        if not (0.0 < self.label_fraction <= 1.0):
            raise ValueError("label_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class NetworkConfig:
    arch: str = "mlp"  # mlp | conv
    hidden: int = 256

    def __post_init__(self):
        if self.arch not in ("mlp", "conv"):
            raise ValueError(f"unknown architecture {self.arch!r}")


@dataclass(frozen=True)
class EvalConfig:
    mixed_pairs: bool = False
    mixed_pair_count: int = 200
    fgsm: bool = False
    fgsm_epsilon: float = 8.0 / 255.0
    occlusion: bool = False
    occlusion_patch: int = 4
    occlusion_ratios: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    confidence_bins: int = 0


@dataclass(frozen=True)
class RunConfig:
    name: str = "exp"
    seeds: tuple[int, ...] = (1,)
    out: str = "runs"

    def __post_init__(self):
        if len(self.seeds) == 0:
            raise ValueError("at least one seed required")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    mixer: MixConfig | None = field(default_factory=MixConfig)
    loss: LossSpec = field(default_factory=LossSpec)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ssl: SSLConfig | None = None
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunConfig = field(default_factory=RunConfig)


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_ints(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.split(",") if p.strip())


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(p) for p in s.split(",") if p.strip())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_fmt(p) for p in v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


# key -> (parser, default). Defaults double as the serialization source of
# truth; sections `mixer.policy = none` and `ssl.enabled` drive the optional
# sub-configs.
_SCHEMA: dict[str, tuple] = {
    "dataset.source": (str, "images"),
    "dataset.size": (int, 1000),
    "dataset.val_size": (int, 1000),
    "dataset.label_fraction": (float, 1.0),
    "dataset.noise": (float, 0.25),
    "dataset.seed": (int, 0),
    "dataset.num_classes": (int, 10),
    "dataset.shift": (int, 3),
    "dataset.images": (str, ""),
    "dataset.labels": (str, ""),
    "mixer.policy": (str, "linear"),  # none | linear | cutmix | manifold | resizemix
    "mixer.alpha": (float, 0.2),
    "mixer.per_batch_lambda": (_parse_bool, True),
    "loss.kind": (str, "mce"),
    "loss.eta": (float, 0.1),
    "loss.t": (float, 1.0),
    "loss.xi": (float, 1.0),
    "network.arch": (str, "mlp"),
    "network.hidden": (int, 256),
    "train.base_lr": (float, 0.1),
    "train.min_lr": (float, 0.001),
    "train.momentum": (float, 0.9),
    "train.weight_decay": (float, 1e-4),
    "train.epochs": (int, 50),
    "train.batch_size": (int, 100),
    "ssl.enabled": (_parse_bool, False),
    "ssl.tau": (float, 0.95),
    "ssl.unlabeled_weight": (float, 1.0),
    "ssl.eta": (float, 0.1),
    "ssl.alpha": (float, 0.2),
    "ssl.steps": (int, 2000),
    "ssl.asymmetric_mixing": (_parse_bool, True),
    "ssl.labeled_batch": (int, 0),
    "ssl.unlabeled_batch": (int, 64),
    "ssl.eval_interval": (int, 100),
    "eval.mixed_pairs": (_parse_bool, False),
    "eval.mixed_pair_count": (int, 200),
    "eval.fgsm": (_parse_bool, False),
    "eval.fgsm_epsilon": (float, 8.0 / 255.0),
    "eval.occlusion": (_parse_bool, False),
    "eval.occlusion_patch": (int, 4),
    "eval.occlusion_ratios": (_parse_floats, (0.0, 0.25, 0.5, 0.75, 1.0)),
    "eval.confidence_bins": (int, 0),
    "run.name": (str, "exp"),
    "run.seeds": (_parse_ints, (1,)),
    "run.out": (str, "runs"),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat config format; any unknown key raises before any work."""
    values = {k: default for k, (_, default) in _SCHEMA.items()}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'section.key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _SCHEMA:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        parser, _ = _SCHEMA[key]
        try:
            values[key] = parser(val)
        except ValueError as e:
            raise ValueError(f"line {lineno}: bad value for {key}: {e}") from e
        seen.add(key)
    # Rescaled-target BCE ships the recommended curve per mixer family unless
    # the curve was set explicitly: cut-based (1, 0.8), interpolation (0.5, 1).
    if values["loss.kind"] == "dm_bce" and not {"loss.t", "loss.xi"} & seen:
        if values["mixer.policy"] in ("cutmix", "resizemix"):
            values["loss.t"], values["loss.xi"] = 1.0, 0.8
        else:
            values["loss.t"], values["loss.xi"] = 0.5, 1.0
    return _build(values)


def _build(v: dict) -> ExperimentConfig:
    if v["loss.kind"] not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {v['loss.kind']!r}")
    mixer_policy = v["mixer.policy"]
    if mixer_policy == "none":
        mixer = None
    elif mixer_policy in POLICIES:
        mixer = MixConfig(mixer_policy, v["mixer.alpha"], v["mixer.per_batch_lambda"])
    else:
        raise ValueError(f"unknown mixer policy {mixer_policy!r}")
    ssl = None
    if v["ssl.enabled"]:
        ssl = SSLConfig(
            tau=v["ssl.tau"],
            unlabeled_weight=v["ssl.unlabeled_weight"],
            eta=v["ssl.eta"],
            alpha=v["ssl.alpha"],
            steps=v["ssl.steps"],
            asymmetric_mixing=v["ssl.asymmetric_mixing"],
            labeled_batch=v["ssl.labeled_batch"],
            unlabeled_batch=v["ssl.unlabeled_batch"],
            eval_interval=v["ssl.eval_interval"],
        )
    return ExperimentConfig(
        dataset=DatasetSpec(
            source=v["dataset.source"],
            size=v["dataset.size"],
            val_size=v["dataset.val_size"],
            label_fraction=v["dataset.label_fraction"],
            noise=v["dataset.noise"],
            seed=v["dataset.seed"],
            num_classes=v["dataset.num_classes"],
            shift=v["dataset.shift"],
            images=v["dataset.images"],
            labels=v["dataset.labels"],
        ),
        mixer=mixer,
        loss=LossSpec(
            kind=v["loss.kind"],
            dm=DMConfig(eta=v["loss.eta"]),
            rescale=RescaleParams(t=v["loss.t"], xi=v["loss.xi"]),
        ),
        network=NetworkConfig(arch=v["network.arch"], hidden=v["network.hidden"]),
        train=TrainConfig(
            base_lr=v["train.base_lr"],
            min_lr=v["train.min_lr"],
            momentum=v["train.momentum"],
            weight_decay=v["train.weight_decay"],
            epochs=v["train.epochs"],
            batch_size=v["train.batch_size"],
        ),
        ssl=ssl,
        eval=EvalConfig(
            mixed_pairs=v["eval.mixed_pairs"],
            mixed_pair_count=v["eval.mixed_pair_count"],
            fgsm=v["eval.fgsm"],
            fgsm_epsilon=v["eval.fgsm_epsilon"],
            occlusion=v["eval.occlusion"],
            occlusion_patch=v["eval.occlusion_patch"],
            occlusion_ratios=v["eval.occlusion_ratios"],
            confidence_bins=v["eval.confidence_bins"],
        ),
        run=RunConfig(name=v["run.name"], seeds=v["run.seeds"], out=v["run.out"]),
    )


def _flatten(cfg: ExperimentConfig) -> dict[str, object]:
    d = cfg.dataset
    e = cfg.eval
    t = cfg.train
    s = cfg.ssl if cfg.ssl is not None else SSLConfig()
    return {
        "dataset.source": d.source,
        "dataset.size": d.size,
        "dataset.val_size": d.val_size,
        "dataset.label_fraction": d.label_fraction,
        "dataset.noise": d.noise,
        "dataset.seed": d.seed,
        "dataset.num_classes": d.num_classes,
        "dataset.shift": d.shift,
        "dataset.images": d.images,
        "dataset.labels": d.labels,
        "mixer.policy": cfg.mixer.policy if cfg.mixer is not None else "none",
        "mixer.alpha": cfg.mixer.alpha if cfg.mixer is not None else 0.2,
        "mixer.per_batch_lambda": (
            cfg.mixer.per_batch_lambda if cfg.mixer is not None else True
        ),
        "loss.kind": cfg.loss.kind,
        "loss.eta": cfg.loss.dm.eta,
        "loss.t": cfg.loss.rescale.t,
        "loss.xi": cfg.loss.rescale.xi,
        "network.arch": cfg.network.arch,
        "network.hidden": cfg.network.hidden,
        "train.base_lr": t.base_lr,
        "train.min_lr": t.min_lr,
        "train.momentum": t.momentum,
        "train.weight_decay": t.weight_decay,
        "train.epochs": t.epochs,
        "train.batch_size": t.batch_size,
        "ssl.enabled": cfg.ssl is not None,
        "ssl.tau": s.tau,
        "ssl.unlabeled_weight": s.unlabeled_weight,
        "ssl.eta": s.eta,
        "ssl.alpha": s.alpha,
        "ssl.steps": s.steps,
        "ssl.asymmetric_mixing": s.asymmetric_mixing,
        "ssl.labeled_batch": s.labeled_batch,
        "ssl.unlabeled_batch": s.unlabeled_batch,
        "ssl.eval_interval": s.eval_interval,
        "eval.mixed_pairs": e.mixed_pairs,
        "eval.mixed_pair_count": e.mixed_pair_count,
        "eval.fgsm": e.fgsm,
        "eval.fgsm_epsilon": e.fgsm_epsilon,
        "eval.occlusion": e.occlusion,
        "eval.occlusion_patch": e.occlusion_patch,
        "eval.occlusion_ratios": e.occlusion_ratios,
        "eval.confidence_bins": e.confidence_bins,
        "run.name": cfg.run.name,
        "run.seeds": cfg.run.seeds,
        "run.out": cfg.run.out,
    }


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = [f"{key} = {_fmt(value)}" for key, value in _flatten(cfg).items()]
    return "\n".join(lines) + "\n"


def with_seed(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    """The run's TrainConfig with the per-run seed filled in."""
    return replace(cfg.train, seed=seed)
