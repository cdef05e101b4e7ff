"""Run manifests: effective config, seed, version and stage metrics of every run, as JSON."""

from __future__ import annotations

import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from src import __version__

logger = logging.getLogger(__name__)


class RunManifest(BaseModel):
    command: str
    run_id: str | None = None
    version: str = __version__
    seed: int | None = None
    config: dict[str, Any] = Field(default_factory=dict)
    started_at: datetime
    finished_at: datetime | None = None
    wall_time_s: float | None = None
    stages: list[dict[str, Any]] = Field(default_factory=list)
    outputs: list[str] = Field(default_factory=list)
    headline: dict[str, Any] = Field(default_factory=dict)


class ManifestStore:
    """
    Writes one manifest per run.

    Next to the primary output as `<output>.manifest.json` when there is one, otherwise as
    `<manifest_dir>/<command>-<run_id>.manifest.json`.
    """

    def __init__(self, *, manifest_dir: Path | str | None = None):
        if manifest_dir is None:
            from src.core.config import get_settings

            manifest_dir = get_settings().manifest_dir
        self.manifest_dir = Path(manifest_dir)

    def path_for(self, manifest: RunManifest, primary_output: str | None) -> Path:
        if primary_output and primary_output != "-":
            return Path(f"{primary_output}.manifest.json")
        stamp = manifest.run_id or manifest.started_at.strftime("%Y%m%dT%H%M%S")
        return self.manifest_dir / f"{manifest.command}-{stamp}.manifest.json"

    def save(self, manifest: RunManifest, primary_output: str | None = None) -> Path:
        if manifest.finished_at is None:
            manifest = manifest.model_copy(update={"finished_at": datetime.now(tz=timezone.utc)})
        path = self.path_for(manifest, primary_output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.debug(f"Saved manifest: {path}")
        return path

    @staticmethod
    def load(path: Path | str) -> RunManifest:
        return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
