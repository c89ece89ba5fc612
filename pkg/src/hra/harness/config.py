"""Experiment configuration (JSON, unknown keys rejected)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError

FRUIT_METHODS = ("dqn", "dqn+1", "hra", "hra+1", "hra+2", "hra+3")
MAZE_METHODS = ("full-maze-hra",)

Method = Literal["dqn", "dqn+1", "hra", "hra+1", "hra+2", "hra+3", "full-maze-hra"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnvSpec(_Strict):
    kind: Literal["fruit", "maze"] = "fruit"
    # fruit grid
    fruit_slots: Optional[List[Tuple[int, int]]] = None
    max_steps: Optional[int] = Field(None, ge=1, description="episode step cap (fruit 300, maze 10000)")
    # maze world
    maps: Optional[List[str]] = None
    game_seed: int = 0
    lives: int = Field(3, ge=1)
    ghost_speed: float = Field(0.67, gt=0, le=1)
    chase_prob: float = Field(0.8, ge=0, le=1)
    ghost_release: Tuple[int, int, int, int] = (30, 45, 60, 75)
    start_delay: int = Field(40, ge=0)

    @property
    def step_cap(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return 300 if self.kind == "fruit" else 10_000


class AgentSpec(_Strict):
    method: Method = "hra"
    target_rule: Literal["max", "mean"] = "mean"
    gamma: Optional[float] = Field(None, ge=0, le=1, description="fruit heads; default 0.99 mean / 0.95 max")
    gamma_score: float = Field(0.99, ge=0, lt=1)
    gamma_ghosts: float = Field(0.99, ge=0, lt=1)
    step_size: Optional[float] = Field(None, gt=0, description="default 1e-3 network / 1.0 tabular")
    hidden: int = Field(250, ge=1)
    sync_period: int = Field(1, ge=1)
    replay_size: int = Field(0, ge=0, description="0 = online updates, else FIFO replay capacity")
    batch_size: int = Field(32, ge=1)
    update_every: int = Field(1, ge=1, description="environment steps between replay updates")
    aggregator: Literal["linear-sum", "normalized"] = "normalized"
    ghost_weight: Optional[float] = None
    diversification: bool = True
    div_window: int = Field(50, ge=0)
    count_bonus: bool = True
    kappa: float = Field(1.0, ge=0)
    memory: bool = False

    @property
    def resolved_gamma(self) -> float:
        if self.gamma is not None:
            return self.gamma
        return 0.99 if self.target_rule == "mean" else 0.95

    @property
    def tabular(self) -> bool:
        return self.method in ("hra+2", "hra+3")

    @property
    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 1.0 if self.tabular else 1e-3


class EvalSpec(_Strict):
    kind: Literal["fixed-start", "random-start"] = "fixed-start"
    eval_every: int = Field(1, ge=1)
    episodes: int = Field(1, ge=1)
    reference: Optional[str] = None
    max_noops: int = Field(30, ge=0)

    @model_validator(mode="after")
    def _reference_needed(self):
        if self.kind == "random-start" and not self.reference:
            raise ValueError("random-start evaluation needs a reference trajectory")
        return self


class ExperimentConfig(_Strict):
    name: str = "run"
    env: EnvSpec = EnvSpec()
    agent: AgentSpec = AgentSpec()
    episodes: int = Field(100, ge=0)
    eval: EvalSpec = EvalSpec()
    seeds: List[int] = [0]
    output: Optional[str] = None

    @model_validator(mode="after")
    def _compatible(self):
        m = self.agent.method
        if self.env.kind == "fruit" and m not in FRUIT_METHODS:
            raise ValueError(f"method {m!r} is not available on the fruit environment")
        if self.env.kind == "maze" and m not in MAZE_METHODS:
            raise ValueError(f"method {m!r} is not available on the maze environment")
        return self

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``{"agent.gamma_score": 0.95}``."""
        data = self.model_dump()
        for path, value in overrides.items():
            node = data
            *head, last = path.split(".")
            for part in head:
                if part not in node or not isinstance(node[part], dict):
                    raise ConfigError(f"unknown config key {path!r}")
                node = node[part]
            if last not in node:
                raise ConfigError(f"unknown config key {path!r}")
            node[last] = value
        return parse_config(data)


def parse_config(data) -> ExperimentConfig:
    try:
        if isinstance(data, (str, bytes)):
            return ExperimentConfig.model_validate_json(data)
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(), indent=2)
