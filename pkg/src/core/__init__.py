"""Shared core utilities (config, run context, observability, monitoring)."""
