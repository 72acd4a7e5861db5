"""Declarative experiment configuration: JSON in, validated dataclasses out.

A config is a JSON object; unknown keys are rejected everywhere so typos
fail loudly. Most fields have documented defaults, listed in
:data:`DEFAULTS` below. ``serialize_config(parse_config(text))`` parses
back to an equal config.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .aggregators import AggregatorSpec
from .core import AttackSpec
from .federation import (
    ALGORITHMS,
    FEDAVG_SCHEDULE,
    FEDSGD_SCHEDULE,
    FederationConfig,
    Schedule,
)

DEFAULTS = {
    "algorithm": "fedavg",
    "num_clients": 20,
    "num_byzantine": 5,
    "rounds": 100,
    "batch_size": 128,
    "local_steps": 50,
    "seed": 0,
    # schedule: by algorithm (fedsgd decays at 2000/5000, fedavg at 200/500)
    # eval_interval: 1 for fedavg, 10 for fedsgd
    # attack: none
}


class ConfigError(ValueError):
    """A config document that does not satisfy the schema."""


def _require_keys(section: dict, allowed, required, where: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in {where}")
    for key in required:
        if key not in section:
            raise ConfigError(f"missing required key '{key}' in {where}")


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    dir: Optional[str] = None
    classes: int = 2
    per_class: int = 100
    dim: int = 2
    separation: float = 6.0

    def __post_init__(self):
        if self.name not in ("mnist", "synthetic"):
            raise ConfigError(f"unknown dataset name '{self.name}'")
        if self.name == "mnist" and self.dir is None:
            raise ConfigError("missing required key 'dir' in dataset (mnist)")


@dataclass(frozen=True)
class PartitionSpec:
    kind: str = "iid"
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("iid", "dirichlet"):
            raise ConfigError(f"unknown partition kind '{self.kind}'")
        if self.kind == "dirichlet":
            if self.alpha is None:
                raise ConfigError("missing required key 'alpha' in partition (dirichlet)")
            if self.alpha <= 0:
                raise ConfigError("partition 'alpha' must be > 0")
        elif self.alpha is not None:
            raise ConfigError("partition 'iid' does not take parameter 'alpha'")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "logistic"
    hidden: int = 200

    def __post_init__(self):
        if self.kind not in ("mlp", "logistic"):
            raise ConfigError(f"unknown model kind '{self.kind}'")
        if self.hidden < 1:
            raise ConfigError("model 'hidden' must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    aggregator: AggregatorSpec
    attack: AttackSpec = AttackSpec("none")
    algorithm: str = DEFAULTS["algorithm"]
    partition: PartitionSpec = PartitionSpec("iid")
    model: ModelSpec = ModelSpec("logistic")
    num_clients: int = DEFAULTS["num_clients"]
    num_byzantine: int = DEFAULTS["num_byzantine"]
    rounds: int = DEFAULTS["rounds"]
    batch_size: int = DEFAULTS["batch_size"]
    local_steps: int = DEFAULTS["local_steps"]
    schedule: Optional[Schedule] = None
    seed: int = DEFAULTS["seed"]
    eval_interval: Optional[int] = None
    capture_rounds: tuple = ()
    output_path: Optional[str] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"invalid 'algorithm' value '{self.algorithm}', expected {ALGORITHMS}"
            )
        if 2 * self.num_byzantine >= self.num_clients:
            raise ConfigError(
                "the majority of the clients must be benign: require "
                f"num_byzantine < num_clients / 2, got {self.num_byzantine} "
                f"of {self.num_clients}"
            )
        if (self.aggregator.kind == "krum"
                and self.num_clients - self.aggregator.num_byzantine - 2 < 1):
            raise ConfigError(
                "krum needs num_clients - num_byzantine - 2 >= 1, got "
                f"K={self.num_clients}, M={self.aggregator.num_byzantine}"
            )
        if self.schedule is None:
            default = FEDSGD_SCHEDULE if self.algorithm == "fedsgd" else FEDAVG_SCHEDULE
            object.__setattr__(self, "schedule", default)
        if self.eval_interval is None:
            object.__setattr__(self, "eval_interval",
                               10 if self.algorithm == "fedsgd" else 1)
        object.__setattr__(self, "capture_rounds",
                           tuple(int(t) for t in self.capture_rounds))
        # remaining range checks live in FederationConfig
        self.federation_config()

    def federation_config(self) -> FederationConfig:
        return FederationConfig(
            algorithm=self.algorithm,
            num_clients=self.num_clients,
            num_byzantine=self.num_byzantine,
            rounds=self.rounds,
            batch_size=self.batch_size,
            schedule=self.schedule,
            seed=self.seed,
            local_steps=self.local_steps,
            eval_interval=self.eval_interval,
        )

    def label(self) -> str:
        return f"{self.aggregator.label()}__{self.attack.label()}"


def _parse_dataset(section) -> DatasetSpec:
    if not isinstance(section, dict):
        raise ConfigError("'dataset' must be an object")
    _require_keys(section, ("name", "dir", "classes", "per_class", "dim",
                            "separation"), ("name",), "dataset")
    spec = DatasetSpec(**section)
    if spec.name == "synthetic" and section.get("dir") is not None:
        raise ConfigError("dataset 'synthetic' does not take parameter 'dir'")
    if spec.name == "mnist":
        for key in ("classes", "per_class", "dim", "separation"):
            if key in section:
                raise ConfigError(f"dataset 'mnist' does not take parameter '{key}'")
        if not Path(spec.dir).is_dir():
            raise ConfigError(f"dataset 'dir' does not exist: {spec.dir}")
    return spec


def _parse_partition(section) -> PartitionSpec:
    if not isinstance(section, dict):
        raise ConfigError("'partition' must be an object")
    _require_keys(section, ("kind", "alpha"), ("kind",), "partition")
    try:
        return PartitionSpec(**section)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_model(section) -> ModelSpec:
    if not isinstance(section, dict):
        raise ConfigError("'model' must be an object")
    _require_keys(section, ("kind", "hidden"), ("kind",), "model")
    if section.get("kind") == "logistic" and "hidden" in section:
        raise ConfigError("model 'logistic' does not take parameter 'hidden'")
    return ModelSpec(**section)


def _parse_aggregator(section) -> AggregatorSpec:
    if not isinstance(section, dict):
        raise ConfigError("'aggregator' must be an object")
    allowed = ("kind", "num_byzantine", "trim_fraction", "cc_tau", "cc_iters",
               "lam", "linkage")
    _require_keys(section, allowed, ("kind",), "aggregator")
    try:
        return AggregatorSpec(**section)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_attack(section) -> AttackSpec:
    if not isinstance(section, dict):
        raise ConfigError("'attack' must be an object")
    allowed = ("kind", "epsilon", "z_max", "noise_mean", "noise_var", "eps_margin")
    _require_keys(section, allowed, ("kind",), "attack")
    try:
        return AttackSpec(**section)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_schedule(entries) -> Schedule:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'schedule' must be a non-empty list of [threshold, rate]")
    points = []
    for entry in entries:
        if not isinstance(entry, list) or len(entry) != 2:
            raise ConfigError("each schedule entry must be a [threshold, rate] pair")
        threshold, rate = entry
        points.append((math.inf if threshold is None else float(threshold),
                       float(rate)))
    try:
        return Schedule(tuple(points))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


_TOP_LEVEL_KEYS = (
    "algorithm", "dataset", "partition", "model", "aggregator", "attack",
    "num_clients", "num_byzantine", "rounds", "batch_size", "local_steps",
    "schedule", "seed", "eval_interval", "capture_rounds", "output_path",
)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _require_keys(raw, _TOP_LEVEL_KEYS, ("dataset", "aggregator"), "config")
    kwargs = {}
    kwargs["dataset"] = _parse_dataset(raw["dataset"])
    kwargs["aggregator"] = _parse_aggregator(raw["aggregator"])
    if "attack" in raw:
        kwargs["attack"] = _parse_attack(raw["attack"])
    if "partition" in raw:
        kwargs["partition"] = _parse_partition(raw["partition"])
    if "model" in raw:
        kwargs["model"] = _parse_model(raw["model"])
    if "schedule" in raw:
        kwargs["schedule"] = _parse_schedule(raw["schedule"])
    for key in ("algorithm", "num_clients", "num_byzantine", "rounds",
                "batch_size", "local_steps", "seed", "eval_interval",
                "output_path"):
        if key in raw:
            kwargs[key] = raw[key]
    if "capture_rounds" in raw:
        if not isinstance(raw["capture_rounds"], list):
            raise ConfigError("'capture_rounds' must be a list of round indices")
        kwargs["capture_rounds"] = tuple(raw["capture_rounds"])
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment description."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def _spec_dict(spec, skip=("kind",)) -> dict:
    out = {"kind": spec.kind}
    for name, value in vars(spec).items():
        if name not in skip and value is not None:
            out[name] = value
    return out


def config_to_dict(config: ExperimentConfig) -> dict:
    dataset = {"name": config.dataset.name}
    if config.dataset.name == "mnist":
        dataset["dir"] = config.dataset.dir
    else:
        dataset.update(classes=config.dataset.classes,
                       per_class=config.dataset.per_class,
                       dim=config.dataset.dim,
                       separation=config.dataset.separation)
    partition = {"kind": config.partition.kind}
    if config.partition.alpha is not None:
        partition["alpha"] = config.partition.alpha
    model = {"kind": config.model.kind}
    if config.model.kind == "mlp":
        model["hidden"] = config.model.hidden
    out = {
        "algorithm": config.algorithm,
        "dataset": dataset,
        "partition": partition,
        "model": model,
        "aggregator": _spec_dict(config.aggregator),
        "attack": _spec_dict(config.attack),
        "num_clients": config.num_clients,
        "num_byzantine": config.num_byzantine,
        "rounds": config.rounds,
        "batch_size": config.batch_size,
        "local_steps": config.local_steps,
        "schedule": [[None if math.isinf(t) else t, r]
                     for t, r in config.schedule.breakpoints],
        "seed": config.seed,
        "eval_interval": config.eval_interval,
    }
    if config.capture_rounds:
        out["capture_rounds"] = list(config.capture_rounds)
    if config.output_path is not None:
        out["output_path"] = config.output_path
    return out


def serialize_config(config: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2)
