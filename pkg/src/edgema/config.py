"""Replay/engine configuration and its JSON form."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

from .adaptation import FineTuneConfig
from .texture import DEFAULT_LEVELS

SEED_ENV = "EDGEMA_SEED"


@dataclass(frozen=True)
class GlcmConfig:
    levels: int = DEFAULT_LEVELS
    grid: str = "reduced"


@dataclass(frozen=True)
class ForestConfig:
    trees: int = 32
    seed: int = 0
    path: str | None = None  # pre-trained forest; trained from the registry otherwise


@dataclass(frozen=True)
class SelectionConfig:
    rounds: int = 100
    top_k: int = 6


@dataclass(frozen=True)
class EngineConfig:
    batch_size: int = 250
    kl_threshold_D: float = 0.1
    domain_check_frames: int = 10
    finetune: FineTuneConfig = field(default_factory=FineTuneConfig)
    glcm: GlcmConfig = field(default_factory=GlcmConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    engine_seed: int = 0
    stride: int = 1
    initial_domain: str | None = None
    initial_pm: str = "source"  # "source" (P_S of the start domain) or "first_batch"
    domain_detection: bool = True
    adaptation: bool = True
    async_finetune: bool = False
    record_timing: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.domain_check_frames < 1:
            raise ValueError("domain_check_frames must be >= 1")
        if not self.kl_threshold_D >= 0:
            raise ValueError("kl_threshold_D must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.initial_pm not in ("source", "first_batch"):
            raise ValueError("initial_pm must be 'source' or 'first_batch'")

    def static(self) -> "EngineConfig":
        """Baseline: no domain detection, no label-shift adaptation."""
        return replace(self, kl_threshold_D=math.inf, domain_detection=False, adaptation=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        seed = d.pop("engine_seed")
        d["seeds"] = {"engine": seed}
        if math.isinf(self.kl_threshold_D):
            d["kl_threshold_D"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict, env: dict | None = None) -> "EngineConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__} | {"seeds"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for key, sub in (("finetune", FineTuneConfig), ("glcm", GlcmConfig), ("forest", ForestConfig), ("selection", SelectionConfig)):
            if key in d:
                kw[key] = sub(**d.pop(key))
        seeds = d.pop("seeds", {})
        if "engine" in seeds:
            kw["engine_seed"] = int(seeds["engine"])
        if "kl_threshold_D" in d:
            kw["kl_threshold_D"] = float(d.pop("kl_threshold_D"))
        kw.update(d)
        cfg = cls(**kw)
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            cfg = cfg.with_seed(int(env[SEED_ENV]))
        return cfg

    def with_seed(self, seed: int) -> "EngineConfig":
        return replace(
            self,
            engine_seed=seed,
            forest=replace(self.forest, seed=seed),
            finetune=replace(self.finetune, seed=seed),
        )


def load_config(path) -> EngineConfig:
    with open(path) as fh:
        return EngineConfig.from_dict(json.load(fh))
