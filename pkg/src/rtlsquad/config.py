"""Run configuration: one JSON document addressing every knob."""

from __future__ import annotations

import json
from pathlib import Path

from pydantic import BaseModel, Field, ValidationError, model_validator

from rtlsquad.agents import ProviderConfig
from rtlsquad.eda import EdaConfig
from rtlsquad.errors import ConfigError
from rtlsquad.points import PointsConfig


class OrchestratorConfig(BaseModel):
    max_outer_iters: int = 5
    min_outer_iters: int = 2
    max_inner_iters: int = 4
    max_debate_rounds: int = 4
    max_impl_rounds: int = 6
    max_data_requests: int = 3
    stall_window: int = 3
    stall_eps_rel: float = 0.01
    force_min_action: bool = True
    seed: int = 0
    auto_accept: bool = False
    points: PointsConfig = Field(default_factory=PointsConfig)
    eda: EdaConfig = Field(default_factory=EdaConfig)
    provider: ProviderConfig = Field(default_factory=ProviderConfig)

    @model_validator(mode="after")
    def _check(self) -> OrchestratorConfig:
        for name in ("max_outer_iters", "min_outer_iters", "max_inner_iters", "max_debate_rounds", "max_impl_rounds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_data_requests < 0:
            raise ValueError("max_data_requests must be >= 0")
        if self.min_outer_iters > self.max_outer_iters:
            raise ValueError("min_outer_iters must not exceed max_outer_iters")
        if self.stall_window < 2:
            raise ValueError("stall_window must be >= 2")
        return self


def _set_dotted(data: dict, dotted: str, value) -> None:
    *parents, leaf = dotted.split(".")
    for key in parents:
        data = data.setdefault(key, {})
    data[leaf] = value


def build_config(base: dict | None = None, overrides: dict | None = None) -> OrchestratorConfig:
    """Validate ``base`` with dotted-key ``overrides`` applied on top."""
    data = json.loads(json.dumps(base or {}))
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, key, value)
    try:
        return OrchestratorConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None, overrides: dict | None = None) -> OrchestratorConfig:
    base = {}
    if path is not None:
        try:
            base = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return build_config(base, overrides)
