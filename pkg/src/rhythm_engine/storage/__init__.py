"""CSV artifacts and run manifests."""

from src.rhythm_engine.storage.manifest_store import ManifestStore, RunManifest

__all__ = ["ManifestStore", "RunManifest"]
