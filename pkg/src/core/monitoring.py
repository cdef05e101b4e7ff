"""Run stage monitoring."""

from __future__ import annotations

import logging
import time
from datetime import datetime, timezone
from typing import Any

from src.core.observability import audit_event

logger = logging.getLogger(__name__)


class RunMetrics:
    """Track per-stage execution metrics for a single CLI run."""

    def __init__(self, command: str):
        self.command = command
        self.started_at = datetime.now(tz=timezone.utc)
        self._t0 = time.perf_counter()
        self.stages: list[dict[str, Any]] = []

    def record_stage(
        self,
        stage: str,
        success: bool,
        execution_time: float,
        error: str | None = None,
    ) -> None:
        """
        Record a stage execution.

        Args:
            stage: Stage name (e.g. "integrate", "averaged_psd", "write_csv")
            success: Whether the stage completed
            execution_time: Wall time in seconds
            error: Error message if failed
        """
        record = {
            "stage": stage,
            "success": success,
            "execution_time": round(execution_time, 6),
            "error": error,
        }
        self.stages.append(record)

        audit_event(
            "stage_execution",
            {"stage": stage, "success": success, "execution_time": execution_time},
            command=self.command,
        )
        logger.debug(f"Recorded stage {stage}: success={success}, time={execution_time:.3f}s")

    def wall_time(self) -> float:
        return time.perf_counter() - self._t0

    def failed_stage(self) -> str | None:
        for record in reversed(self.stages):
            if not record["success"]:
                return record["stage"]
        return None

    def summary(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "started_at": self.started_at.isoformat(),
            "wall_time_s": round(self.wall_time(), 6),
            "stages": list(self.stages),
        }


class StageTracker:
    """Context manager for tracking a stage of a run."""

    def __init__(self, metrics: RunMetrics, stage: str):
        self.metrics = metrics
        self.stage = stage
        self.start_time: float | None = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        logger.info(f"Stage {self.stage} started")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        execution_time = time.perf_counter() - (self.start_time or 0.0)
        success = exc_type is None
        self.metrics.record_stage(
            stage=self.stage,
            success=success,
            execution_time=execution_time,
            error=str(exc_val) if exc_val else None,
        )
        return False
