import json
import logging

import pytest

from src.core.audit_log import AuditEvent, append_audit_event
from src.core.config import get_settings
from src.core.monitoring import RunMetrics, StageTracker
from src.core.observability import OnceLogger, audit_event
from src.core.run_context import current_run_id, run_scope


@pytest.fixture(autouse=True)
def _fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def test_once_logger_warns_first_then_debugs(caplog):
    log = logging.getLogger("tests.once")
    once = OnceLogger(log, "state floor")
    with caplog.at_level(logging.DEBUG, logger="tests.once"):
        for step in range(3):
            once.hit("u floored at step %d", step)
        once.summarize()

    levels = [r.levelno for r in caplog.records]
    assert levels == [logging.WARNING, logging.DEBUG, logging.DEBUG, logging.INFO]
    assert caplog.records[0].getMessage() == "state floor: u floored at step 0"
    assert "3 occurrences" in caplog.records[-1].getMessage()
    assert once.count == 3


def test_audit_events_append_jsonl(tmp_path, monkeypatch):
    log = tmp_path / "audit" / "events.jsonl"
    monkeypatch.setenv("GAMMA_RHYTHM_AUDIT_LOG_PATH", str(log))

    with run_scope("run42"):
        assert current_run_id() == "run42"
        audit_event("run_finished", {"peak_hz": 65.0}, command="psd")
        audit_event("run_finished", {"peak_hz": 70.0}, command="psd")
    assert current_run_id() is None

    lines = [json.loads(line) for line in log.read_text().splitlines()]
    assert len(lines) == 2
    assert lines[0]["run_id"] == "run42"
    assert lines[0]["command"] == "psd"
    assert lines[1]["payload"] == {"peak_hz": 70.0}


def test_audit_is_a_no_op_without_a_path(tmp_path, monkeypatch):
    monkeypatch.delenv("GAMMA_RHYTHM_AUDIT_LOG_PATH", raising=False)
    monkeypatch.chdir(tmp_path)
    append_audit_event(AuditEvent("x", {}))
    assert list(tmp_path.iterdir()) == []


def test_stage_tracker_records_failures():
    metrics = RunMetrics("period")
    with StageTracker(metrics, "integrate"):
        pass
    with pytest.raises(ValueError):
        with StageTracker(metrics, "limit_cycle_period"):
            raise ValueError("no oscillation")

    stages = metrics.summary()["stages"]
    assert [s["stage"] for s in stages] == ["integrate", "limit_cycle_period"]
    assert stages[0]["success"] and not stages[1]["success"]
    assert stages[1]["error"] == "no oscillation"
    assert metrics.failed_stage() == "limit_cycle_period"
