"""Shared plumbing for subcommands: dotted config flags, run context, outputs and manifests."""

from __future__ import annotations

import argparse
import sys
import types
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any, Union, get_args, get_origin

from pydantic import BaseModel, ValidationError

from src.core.config import RunConfig
from src.core.monitoring import RunMetrics, StageTracker
from src.core.observability import audit_event
from src.rhythm_engine.models import InvalidParametersError, ModelParams, WalkConfig
from src.rhythm_engine.storage.csv_store import STDIO, fmt, write_rows
from src.rhythm_engine.storage.manifest_store import ManifestStore, RunManifest


def _flag_spec(annotation: Any) -> dict[str, Any]:
    origin = get_origin(annotation)
    if origin in (Union, types.UnionType):
        inner = [a for a in get_args(annotation) if a is not type(None)]
        return _flag_spec(inner[0]) if len(inner) == 1 else {"type": str}
    if origin is tuple:
        return {"type": float, "nargs": len(get_args(annotation)), "metavar": ("MIN", "MAX")}
    if annotation is bool:
        return {"type": lambda s: s.lower() in {"1", "true", "yes", "on"}}
    if annotation in (int, float):
        return {"type": annotation}
    return {"type": str}


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    """One `--<section>.<field>` flag per RunConfig field; absent flags leave no trace."""
    group = parser.add_argument_group("run config (dotted keys; flags beat env and --config)")
    for section, info in RunConfig.model_fields.items():
        model = info.annotation
        if not (isinstance(model, type) and issubclass(model, BaseModel)):
            continue
        for name, finfo in model.model_fields.items():
            key = f"{section}.{name}"
            group.add_argument(
                f"--{key}",
                dest=key,
                default=argparse.SUPPRESS,
                help=finfo.description,
                **_flag_spec(finfo.annotation),
            )


def add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON or TOML run document")
    parser.add_argument("--log-level", default=None, help="Override GAMMA_RHYTHM_LOG_LEVEL")
    parser.add_argument("-o", "--output", dest="output.path", default=argparse.SUPPRESS)
    parser.add_argument(
        "--format", dest="output.format", choices=["csv", "table"], default=argparse.SUPPRESS
    )
    parser.add_argument("--seed", dest="walk.seed", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--t-end", dest="integration.t_end", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--dt", dest="integration.dt", type=float, default=argparse.SUPPRESS)
    add_config_flags(parser)


def collect_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides = {k: v for k, v in vars(args).items() if "." in k}
    preset = getattr(args, "walk_preset", None)
    if preset:
        overrides.setdefault("walk.K_range", list(WalkConfig.preset(preset).K_range))
    return overrides


@dataclass
class CommandContext:
    command: str
    args: argparse.Namespace
    config: RunConfig
    metrics: RunMetrics
    run_id: str
    outputs: list[str] = field(default_factory=list)
    headline: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    stdout_busy: bool = False

    def stage(self, name: str) -> StageTracker:
        return StageTracker(self.metrics, name)

    @property
    def output_path(self) -> str | None:
        return self.config.output.path

    def params(
        self, *, eps_default: float | None = None, K_default: float | None = None
    ) -> ModelParams:
        with self.stage("resolve_params"):
            section = self.config.model
            fill = {}
            if section.eps is None and eps_default is not None:
                fill["eps"] = eps_default
            if section.K is None and K_default is not None:
                fill["K"] = K_default
            if fill:
                section = section.model_copy(update=fill)
            return section.to_params()

    def walk_base(self) -> ModelParams:
        """Fixed coefficients from the model section, wandering ones at the walk's start."""
        with self.stage("resolve_params"):
            m = self.config.model
            K0, eps0, gamma0 = self.config.walk.initial_values()
            try:
                return ModelParams(a1=m.a1, a2=m.a2, b=m.b, c=m.c, K=K0, epsilon=eps0, gamma=gamma0)
            except ValidationError as exc:
                raise InvalidParametersError(str(exc)) from exc

    def say(self, line: str) -> None:
        """Summary line: stdout unless stdout already carries CSV data."""
        stream = sys.stderr if self.stdout_busy else sys.stdout
        print(line, file=stream)

    def record_output(self, path: str) -> None:
        self.outputs.append(path)

    def emit_rows(
        self,
        header: Sequence[str],
        rows: Iterable[Sequence[Any]],
        *,
        path: str | None = None,
        tabular: bool = True,
    ) -> int:
        """
        CSV to the output file when one is set; otherwise a table on stdout (for short,
        tabular results with --format table) or CSV on stdout.
        """
        target = path if path is not None else self.output_path
        with self.stage("write_output"):
            if target and target != STDIO:
                count = write_rows(target, header, rows)
                self.record_output(target)
                return count
            if tabular and self.config.output.format == "table":
                materialized = [list(r) for r in rows]
                print(render_table(header, materialized))
                return len(materialized)
            self.stdout_busy = True
            return write_rows(STDIO, header, rows)

    def save_manifest(self) -> None:
        manifest = RunManifest(
            command=self.command,
            run_id=self.run_id,
            seed=self.seed,
            config=self.config.effective(),
            started_at=self.metrics.started_at,
            wall_time_s=self.metrics.wall_time(),
            stages=self.metrics.summary()["stages"],
            outputs=self.outputs,
            headline=self.headline,
        )
        path = ManifestStore().save(manifest, self.output_path)
        audit_event(
            "run_finished",
            {"manifest": str(path), "headline": self.headline},
            command=self.command,
        )


def render_table(header: Sequence[str], rows: list[list[Any]]) -> str:
    cells = [[str(h) for h in header]]
    for row in rows:
        cells.append([format(x, ".8g") if isinstance(x, float) else fmt(x) for x in row])
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines)
