"""
Flat ``key=value`` run configuration.

One assignment per line, ``#`` starts a comment, blank lines are ignored.
Every key names a field of either ScenarioConfig or SelfTrainConfig;
command-line overrides win over the file.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, TypeVar

from pydantic import BaseModel, ValidationError

from ..exceptions import ConfigError
from ..models.data_models import ScenarioConfig
from ..models.training_models import SelfTrainConfig

ModelT = TypeVar("ModelT", bound=BaseModel)

SCENARIO_KEYS = frozenset(ScenarioConfig.model_fields)
TRAINING_KEYS = frozenset(SelfTrainConfig.model_fields)

assert not SCENARIO_KEYS & TRAINING_KEYS, "config field names must be disjoint"


def build_config(model_cls: type[ModelT], values: Mapping[str, Any]) -> ModelT:
    """Validate ``values`` into ``model_cls``, naming the offending field on failure."""
    try:
        return model_cls.model_validate(dict(values))
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or None
        if error["type"] == "extra_forbidden":
            message = f"unknown config key '{field}'"
        elif field:
            message = f"invalid value for '{field}': {error['msg']}"
        else:
            message = f"invalid {model_cls.__name__}: {error['msg']}"
        raise ConfigError(message, field=field) from exc


def parse_config_text(text: str) -> dict[str, str]:
    """Parse the flat config grammar into raw string values."""
    values: dict[str, str] = {}
    seen_at: dict[str, int] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key=value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        if key in seen_at:
            raise ConfigError(
                f"line {line_no}: duplicate key '{key}' (first set on line {seen_at[key]})",
                field=key,
            )
        seen_at[key] = line_no
        values[key] = value
    return values


def parse_overrides(overrides: Iterable[str]) -> dict[str, str]:
    """Parse command-line ``key=value`` overrides; a repeated key keeps its last value."""
    values: dict[str, str] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be 'key=value', got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = value
    return values


class RunSpec(BaseModel):
    """Resolved scenario and training configuration of one command."""

    scenario: ScenarioConfig = ScenarioConfig()
    training: SelfTrainConfig = SelfTrainConfig()

    @classmethod
    def from_values(cls, values: Mapping[str, str]) -> "RunSpec":
        for key in values:
            if key not in SCENARIO_KEYS and key not in TRAINING_KEYS:
                raise ConfigError(f"unknown config key '{key}'", field=key)
        scenario = build_config(
            ScenarioConfig, {k: v for k, v in values.items() if k in SCENARIO_KEYS}
        )
        training = build_config(
            SelfTrainConfig, {k: v for k, v in values.items() if k in TRAINING_KEYS}
        )
        return cls(scenario=scenario, training=training)

    @property
    def seed(self) -> int:
        return self.training.seed

    def with_seed(self, seed: int) -> "RunSpec":
        return RunSpec(
            scenario=self.scenario, training=self.training.model_copy(update={"seed": seed})
        )


def load_run_spec(
    path: Optional[Path] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
) -> RunSpec:
    """Read a config file (optional), apply overrides, then the explicit seed."""
    values: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        values.update(parse_config_text(text))
    values.update(parse_overrides(overrides))
    if seed is not None:
        values["seed"] = str(seed)
    return RunSpec.from_values(values)
