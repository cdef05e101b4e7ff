from __future__ import annotations

import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from contextvars import ContextVar
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, ValidationError
from pydantic.fields import FieldInfo
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from src.rhythm_engine.models import (
    DEFAULT_A1,
    DEFAULT_A2,
    DEFAULT_B,
    DEFAULT_C,
    IntegrationConfig,
    InvalidParametersError,
    ModelParams,
    SpectralConfig,
    WalkConfig,
)

ENV_PREFIX = "GAMMA_RHYTHM_"


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX, env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    # General
    env: str = "dev"
    log_level: str = "INFO"

    # Provenance
    manifest_dir: str = "data/manifests"  # used when a run has no output path
    audit_log_path: str | None = None  # JSONL audit sink; unset disables it

    # Sweeps / seed ensembles
    max_workers: int = 4


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


class ConfigFileError(ValueError):
    pass


class MissingParameterError(ValueError):
    """A required model coefficient was given neither in the file, the env nor on the command line."""


class ModelSection(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    a1: float = DEFAULT_A1
    a2: float = DEFAULT_A2
    b: float = DEFAULT_B
    c: float = DEFAULT_C
    K: float | None = Field(None, validation_alias=AliasChoices("K", "k"))
    eps: float | None = Field(None, validation_alias=AliasChoices("eps", "epsilon"))
    gamma: float = 1.0

    def to_params(self) -> ModelParams:
        missing = [name for name in ("K", "eps") if getattr(self, name) is None]
        if missing:
            raise MissingParameterError(
                "missing required model parameter(s): " + ", ".join(f"model.{m}" for m in missing)
            )
        try:
            return ModelParams(
                a1=self.a1,
                a2=self.a2,
                b=self.b,
                c=self.c,
                K=self.K,
                epsilon=self.eps,
                gamma=self.gamma,
            )
        except ValidationError as exc:
            raise InvalidParametersError(str(exc)) from exc


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str | None = None
    format: Literal["csv", "table"] = "table"


def unflatten(flat: dict[str, Any]) -> dict[str, Any]:
    """{"model.K": 60, "walk": {"seed": 3}} -> {"model": {"K": 60}, "walk": {"seed": 3}}"""
    out: dict[str, Any] = {}
    for key, value in flat.items():
        if isinstance(value, dict):
            value = unflatten(value)
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigFileError(f"key {key!r} conflicts with scalar {part!r}")
            node = nxt
        leaf = parts[-1]
        if isinstance(value, dict) and isinstance(node.get(leaf), dict):
            node[leaf] = {**node[leaf], **value}
        else:
            node[leaf] = value
    return out


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Load a JSON or TOML run document; dotted and nested keys are both accepted."""
    p = Path(path)
    raw = p.read_bytes()
    try:
        if p.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw.decode("utf-8"))
    except ValueError as exc:
        raise ConfigFileError(f"cannot parse config file {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigFileError(f"config file {p} must hold a table/object at top level")
    return unflatten(data)


_config_path_ctx: ContextVar[Path | None] = ContextVar("config_path", default=None)


class ConfigFileSource(PydanticBaseSettingsSource):
    """Settings source reading the run document named by the active `--config` path."""

    def get_field_value(self, field: FieldInfo, field_name: str) -> tuple[Any, str, bool]:
        return None, field_name, False

    def __call__(self) -> dict[str, Any]:
        path = _config_path_ctx.get()
        if path is None:
            return {}
        return read_config_file(path)


class RunConfig(BaseSettings):
    """
    Effective run document.

    Precedence, weakest first: field defaults < config file < environment
    (GAMMA_RHYTHM_<SECTION>__<FIELD>) < command-line flags (passed as init kwargs).
    """

    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_nested_delimiter="__",
        extra="forbid",
    )

    model: ModelSection = Field(default_factory=ModelSection)
    integration: IntegrationConfig = Field(default_factory=IntegrationConfig)
    walk: WalkConfig = Field(default_factory=WalkConfig)
    spectral: SpectralConfig = Field(default_factory=SpectralConfig)
    output: OutputSection = Field(default_factory=OutputSection)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings, env_settings, ConfigFileSource(settings_cls))

    def effective(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


def load_run_config(
    config_path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> RunConfig:
    """
    Build the effective RunConfig.

    `overrides` holds flag values keyed by dotted names ("model.K"); None values are skipped.
    """
    flags = {k: v for k, v in (overrides or {}).items() if v is not None}
    token = _config_path_ctx.set(Path(config_path) if config_path else None)
    try:
        return RunConfig(**unflatten(flags))
    finally:
        _config_path_ctx.reset(token)
