from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from src.core.run_context import current_run_id


@dataclass(frozen=True)
class AuditEvent:
    event_type: str
    payload: dict[str, Any]
    run_id: str | None = None
    command: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "ts": datetime.now(tz=timezone.utc).isoformat(),
            "event_type": self.event_type,
            "run_id": self.run_id,
            "command": self.command,
            "payload": self.payload,
        }


def _audit_log_path() -> str | None:
    from src.core.config import get_settings

    return get_settings().audit_log_path


def append_audit_event(event: AuditEvent, *, path: str | Path | None = None) -> None:
    """
    Append an audit event to a JSONL log.

    No-op unless a path is given or GAMMA_RHYTHM_AUDIT_LOG_PATH is set.
    """
    target = path or _audit_log_path()
    if not target:
        return

    p = Path(target)
    if not p.is_absolute():
        p = Path.cwd() / p

    p.parent.mkdir(parents=True, exist_ok=True)
    line = json.dumps(event.to_dict(), ensure_ascii=False, default=str)
    with p.open("a", encoding="utf-8") as f:
        f.write(line + "\n")


def audit(event_type: str, payload: dict[str, Any], *, command: str | None = None) -> None:
    append_audit_event(
        AuditEvent(
            event_type=event_type,
            payload=payload,
            run_id=current_run_id(),
            command=command,
        )
    )
