from __future__ import annotations

import logging
from typing import Any

from src.core.audit_log import audit as append_audit
from src.core.config import get_settings
from src.core.run_context import current_run_id

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def configure_logging(level: str | None = None) -> None:
    """
    Configure root logging from Settings (or an explicit level).
    Safe to call multiple times; later calls only adjust the level.
    """
    resolved = (level or get_settings().log_level).upper()
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=resolved, format=LOG_FORMAT)
    root.setLevel(resolved)


def audit_event(event_type: str, payload: dict[str, Any], *, command: str | None = None) -> None:
    """
    Audit trail hook: log the event and append it to the JSONL audit log when configured.
    """
    logger.info("audit %s run=%s %s", event_type, current_run_id(), payload)
    try:
        append_audit(event_type, payload, command=command)
    except OSError as exc:
        logger.warning(f"Failed to append audit event {event_type}: {exc}")


class OnceLogger:
    """
    Logs the first occurrence of an intervention at WARNING, repeats at DEBUG,
    and keeps a count for the end-of-run summary.
    """

    def __init__(self, log: logging.Logger, what: str):
        self.log = log
        self.what = what
        self.count = 0

    def hit(self, message: str, *args: Any) -> None:
        self.count += 1
        if self.count == 1:
            self.log.warning(f"{self.what}: " + message, *args)
        else:
            self.log.debug(f"{self.what}: " + message, *args)

    def summarize(self) -> None:
        if self.count > 1:
            self.log.info(f"{self.what}: {self.count} occurrences in this run")
