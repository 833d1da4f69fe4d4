"""Run-manifest loading.

A driftflow run directory holds ``manifest.json`` next to the artifacts
it lists.  The loader resolves each listed path against that directory
and records whether the file is actually present; artifact kinds it
does not recognize are kept verbatim, never rejected, so the consumer
decides what (if anything) to draw for them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

__all__ = ["Artifact", "RunManifest", "ReportError", "load_manifest"]


class ReportError(Exception):
    """Raised when a manifest cannot be read or rendered."""


@dataclass(frozen=True)
class Artifact:
    """One manifest entry, resolved against the manifest's directory."""

    kind: str
    name: str  # path exactly as listed, relative to the run directory
    format: str
    sha256: str
    path: Path
    exists: bool


@dataclass(frozen=True)
class RunManifest:
    path: Path
    experiment: str
    config_hash: str
    config: dict
    checks: tuple
    passed: bool
    artifacts: tuple

    @property
    def run_dir(self) -> Path:
        return self.path.parent

    def missing(self) -> tuple:
        return tuple(a for a in self.artifacts if not a.exists)


_REQUIRED = ("experiment", "config_hash", "config", "artifacts", "checks")


def load_manifest(path) -> RunManifest:
    """Read ``manifest.json`` and resolve its artifact listing.

    A missing artifact file is recorded, not raised; only a manifest
    that cannot be parsed at all is an error.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ReportError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ReportError(f"{path}: manifest must be a JSON object")
    for key in _REQUIRED:
        if key not in raw:
            raise ReportError(f"{path}: manifest lacks required key {key!r}")
    if not isinstance(raw["artifacts"], list):
        raise ReportError(f"{path}: 'artifacts' must be a list")
    base = path.parent
    artifacts = []
    for entry in raw["artifacts"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("path"), str):
            raise ReportError(f"{path}: artifact entry without a path: {entry!r}")
        name = entry["path"]
        full = base / name
        artifacts.append(
            Artifact(
                kind=str(entry.get("kind", "unknown")),
                name=name,
                format=str(entry.get("format", "")),
                sha256=str(entry.get("sha256", "")),
                path=full,
                exists=full.is_file(),
            )
        )
    return RunManifest(
        path=path,
        experiment=str(raw["experiment"]),
        config_hash=str(raw["config_hash"]),
        config=raw["config"] if isinstance(raw["config"], dict) else {},
        checks=tuple(raw["checks"]),
        passed=bool(raw.get("passed", False)),
        artifacts=tuple(artifacts),
    )
