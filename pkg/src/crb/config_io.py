"""YAML configuration schema and (de)serialization of instances.

A config file has up to four sections:

    dr:         parameters for the demand-response builder
    instance:   inline tensors (alternative to dr:)
    dual:       multiplier-iteration settings
    experiment: runs, horizon, seeds, sweep list, output directory

Exactly one of dr/instance must be present. Inline instances use the same
layout that dump_instance writes, so built instances round-trip through the
config format.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import hashlib
import json

import numpy as np
import yaml

from .demand_response import DrConfig, build_dr_instance
from .dual import StepSchedule
from .model import (
    ArmModel,
    ContextChain,
    CrbInstance,
    InitialCondition,
    validate_instance,
)


class ConfigError(ValueError):
    """Raised with a dotted-path locator for every malformed entry."""


@dataclass(frozen=True)
class DualConfig:
    schedule_kind: str = "geometric"
    delta0: float = 0.5
    kappa: float = 10.0
    decay: float = 0.93
    epsilon: float = 1e-4
    max_iters: int = 200
    arm_tol: float = 1e-8

    def schedule(self) -> StepSchedule:
        return StepSchedule(
            kind=self.schedule_kind,
            delta0=self.delta0,
            kappa=self.kappa,
            decay=self.decay,
        )

    def solver_kwargs(self) -> dict:
        return {
            "schedule": self.schedule(),
            "epsilon": self.epsilon,
            "max_iters": self.max_iters,
            "arm_tol": self.arm_tol,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    runs: int = 100
    horizon: int = 300
    master_seed: int = 0
    sweep_users: tuple = (5, 10, 20, 50, 100, 200)
    sweep_runs: int = 200
    epochs: int = 50
    epoch_length: int = 300
    selection_mode: str = "literal"
    learner_seed: int = 0
    steady_state_samples: int = 100_000
    lemma1_samples: int = 10_000


@dataclass(frozen=True)
class AppConfig:
    dr: DrConfig | None
    inline: dict | None
    dual: DualConfig
    experiment: ExperimentConfig
    raw: dict = field(repr=False, default_factory=dict)

    def build_instance(self) -> CrbInstance:
        if self.dr is not None:
            return build_dr_instance(self.dr)
        instance = instance_from_dict(self.inline)
        problems = validate_instance(instance)
        if problems:
            raise ConfigError("instance: " + "; ".join(problems))
        return instance

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(canon).hexdigest()


def _build_dataclass(cls, section: dict, path: str):
    """Instantiate a flat dataclass from a mapping, rejecting unknown keys."""
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in section.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown key (known: {sorted(known)})")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{path}: {e}") from e


def parse_config(data: dict) -> AppConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a mapping")
    unknown = set(data) - {"dr", "instance", "dual", "experiment"}
    if unknown:
        raise ConfigError(f"top level: unknown sections {sorted(unknown)}")
    has_dr = "dr" in data
    has_inline = "instance" in data
    if has_dr == has_inline:
        raise ConfigError("top level: exactly one of 'dr' or 'instance' required")

    dr = None
    if has_dr:
        dr = _build_dataclass(DrConfig, data["dr"] or {}, "dr")
        problems = dr.validate()
        if problems:
            raise ConfigError("dr: " + "; ".join(problems))

    dual_section = dict(data.get("dual") or {})
    schedule = dual_section.pop("schedule", None)
    if schedule is not None:
        mapping = {"kind": "schedule_kind", "delta0": "delta0",
                   "kappa": "kappa", "decay": "decay"}
        for key, value in schedule.items():
            if key not in mapping:
                raise ConfigError(f"dual.schedule.{key}: unknown key")
            dual_section[mapping[key]] = value
    dual = _build_dataclass(DualConfig, dual_section, "dual")
    if dual.schedule_kind not in ("harmonic", "geometric"):
        raise ConfigError(f"dual.schedule.kind: {dual.schedule_kind!r}")

    experiment = _build_dataclass(
        ExperimentConfig, data.get("experiment") or {}, "experiment"
    )
    return with_resolved_raw(
        AppConfig(
            dr=dr,
            inline=data.get("instance"),
            dual=dual,
            experiment=experiment,
        )
    )


def with_resolved_raw(cfg: AppConfig) -> AppConfig:
    """Rebuild the raw mapping from the final dataclasses.

    Snapshots and hashes then reflect resolved semantics, so two invocations
    that mean the same run hash identically regardless of input formatting
    or CLI overrides.
    """
    raw: dict = {}
    if cfg.dr is not None:
        raw["dr"] = asdict(cfg.dr)
    else:
        raw["instance"] = cfg.inline
    raw["dual"] = asdict(cfg.dual)
    raw["experiment"] = asdict(cfg.experiment)
    # JSON round-trip turns tuples into lists, keeping YAML dumps clean.
    raw = json.loads(json.dumps(raw, default=list))
    return AppConfig(
        dr=cfg.dr,
        inline=cfg.inline,
        dual=cfg.dual,
        experiment=cfg.experiment,
        raw=raw,
    )


def load_config(path) -> AppConfig:
    with open(path) as f:
        data = yaml.safe_load(f)
    return parse_config(data if data is not None else {})


def dump_config(cfg: AppConfig, path) -> None:
    """Snapshot the resolved raw mapping next to experiment outputs."""
    with open(path, "w") as f:
        yaml.safe_dump(cfg.raw, f, sort_keys=True)


def instance_to_dict(instance: CrbInstance) -> dict:
    """Inline-tensor form of an instance, loadable as the 'instance' section."""
    return {
        "chain": {
            "transition": instance.chain.transition.tolist(),
            "budgets": instance.chain.budgets.tolist(),
        },
        "arms": [
            {
                "transition": arm.transition.tolist(),
                "reward": arm.reward.tolist(),
            }
            for arm in instance.arms
        ],
        "discount": float(instance.discount),
        "initial": {
            "context": instance.initial.context.tolist(),
            "states": instance.initial.states.tolist(),
        },
        "homogeneous": bool(instance.homogeneous),
    }


def instance_from_dict(data: dict) -> CrbInstance:
    try:
        chain = ContextChain(
            transition=np.asarray(data["chain"]["transition"], dtype=float),
            budgets=np.asarray(data["chain"]["budgets"]),
        )
        arms = tuple(
            ArmModel(
                transition=np.asarray(a["transition"], dtype=float),
                reward=np.asarray(a["reward"], dtype=float),
            )
            for a in data["arms"]
        )
        init = data.get("initial")
        if init is None:
            initial = InitialCondition.uniform(
                chain.num_contexts, arms[0].num_states
            )
        else:
            initial = InitialCondition(
                context=np.asarray(init["context"], dtype=float),
                states=np.asarray(init["states"], dtype=float),
            )
        return CrbInstance(
            chain=chain,
            arms=arms,
            discount=float(data["discount"]),
            initial=initial,
            homogeneous=bool(data.get("homogeneous", False)),
        )
    except KeyError as e:
        raise ConfigError(f"instance: missing key {e}") from e


def dump_instance(instance: CrbInstance, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump({"instance": instance_to_dict(instance)}, f, sort_keys=True)
