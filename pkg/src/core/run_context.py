from __future__ import annotations

import uuid
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar

_run_id_ctx: ContextVar[str | None] = ContextVar("run_id", default=None)


def current_run_id() -> str | None:
    return _run_id_ctx.get()


def new_run_id() -> str:
    return uuid.uuid4().hex[:12]


@contextmanager
def run_scope(run_id: str | None = None) -> Iterator[str]:
    """
    Establish a run context for downstream calls.

    Audit events and manifests written inside the scope are stamped with the run id.
    """
    rid = run_id or new_run_id()
    token = _run_id_ctx.set(rid)
    try:
        yield rid
    finally:
        _run_id_ctx.reset(token)

