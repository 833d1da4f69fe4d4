"""Static report rendering for driftflow run directories.

Consumes a run's ``manifest.json`` and the CSV/JSON artifacts it lists,
and writes a self-contained HTML summary with one PNG figure or
key/value panel per report artifact.  Strictly a file-boundary
consumer: nothing here imports the simulation package or recomputes
statistics.
"""

from .manifest import Artifact, ReportError, RunManifest, load_manifest  # noqa: F401
from .render import RenderResult, render  # noqa: F401

__version__ = "0.1.0"
