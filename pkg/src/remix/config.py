"""Run configuration: one JSON document with generator / model / train /
eval / io sections plus a root seed. Parsing is strict: unknown keys are
rejected so typos surface immediately.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .datamodel import GeneratorConfig
from .errors import InvalidConfigError


@dataclass
class ModelConfig:
    embed_dim: int = 16
    hidden: list[int] = field(default_factory=lambda: [64])

    def validate(self):
        if self.embed_dim <= 0 or any(h <= 0 for h in self.hidden):
            raise InvalidConfigError("model dimensions must be positive")


@dataclass
class TrainConfig:
    # 0.999 suits runs of many thousands of iterations; at the default
    # 1000 iterations the momentum encoder would stay glued to its init
    ema_momentum: float = 0.99
    gamma: float = 0.5
    tau_ins_multi: float = 0.1
    tau_ins_single: float = 0.2
    tau_aug: float = 0.1
    tau_cen_multi: float = 0.5
    tau_cen_single: float = 0.6
    tau_camera: float = 0.07
    n_p_multi: int = 8
    n_k_multi: int = 4
    n_p_single: int = 8
    n_k_single: int = 4
    epochs: int = 20
    iters_per_epoch: int = 50
    dbscan_eps: float = 0.8
    dbscan_min_pts: int = 4
    warmup_epochs: int = 10
    lr: float = 0.002  # scaled up for short runs; 0.00035 at full scale
    weight_decay: float = 0.0005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sigma_aug: float = 0.05
    p_drop: float = 0.1
    use_single_cam: bool = True
    cross_source_negatives: bool = False
    pseudo_label_budget: int | None = None
    checkpoint_every: int = 5

    def validate(self):
        taus = (self.tau_ins_multi, self.tau_ins_single, self.tau_aug,
                self.tau_cen_multi, self.tau_cen_single, self.tau_camera)
        if any(t <= 0 for t in taus):
            raise InvalidConfigError("all temperatures must be > 0")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise InvalidConfigError("ema_momentum must be in [0, 1]")
        if self.gamma < 0:
            raise InvalidConfigError("gamma must be >= 0")
        if self.iters_per_epoch < 1:
            raise InvalidConfigError("iters_per_epoch must be >= 1")
        if self.epochs < 0:
            raise InvalidConfigError("epochs must be >= 0")
        if self.dbscan_eps <= 0 or self.dbscan_min_pts < 1:
            raise InvalidConfigError("bad DBSCAN parameters")
        if min(self.n_p_multi, self.n_k_multi, self.n_p_single, self.n_k_single) < 0:
            raise InvalidConfigError("batch sizes must be >= 0")
        if not 0.0 <= self.p_drop <= 1.0 or self.sigma_aug < 0:
            raise InvalidConfigError("bad augmentation parameters")
        if self.pseudo_label_budget is not None and self.pseudo_label_budget <= 0:
            raise InvalidConfigError("pseudo_label_budget must be positive")


@dataclass
class EvalConfig:
    report_path: str = "report.json"


@dataclass
class IoConfig:
    multicam_path: str = "multicam.jsonl"
    corpus_path: str = "singlecam.jsonl"
    target_path: str = "target.jsonl"
    checkpoint_path: str = "checkpoint.json"
    metrics_path: str = "metrics.jsonl"
    workers: int = 1  # reserved; runs are sequential and deterministic

    def validate(self):
        if self.workers < 1:
            raise InvalidConfigError("workers must be >= 1")


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    io: IoConfig = field(default_factory=IoConfig)
    seed: int = 0

    def validate(self) -> "RunConfig":
        self.generator.validate()
        self.model.validate()
        self.train.validate()
        self.io.validate()
        if self.seed < 0:
            raise InvalidConfigError("seed must be >= 0")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "generator": GeneratorConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "io": IoConfig,
}


def _build_section(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise InvalidConfigError("config document must be an object")
    unknown = set(doc) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise InvalidConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise InvalidConfigError(f"section {name!r} must be an object")
        kwargs[name] = _build_section(cls, section, name)
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise InvalidConfigError("seed must be an integer")
    return RunConfig(seed=seed, **kwargs).validate()


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply --set dotted.key=value flags on top of a parsed config."""
    doc = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise InvalidConfigError(f"override must look like key=value: {item!r}")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise InvalidConfigError(f"unknown override key: {key!r}")
            node = node[p]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise InvalidConfigError(f"unknown override key: {key!r}")
        node[parts[-1]] = _parse_value(raw)
    return config_from_dict(doc)
