"""Render one run manifest into a static HTML summary with PNG figures.

Read-only across the file boundary: every number shown comes from the
manifest or the artifacts it lists, and nothing is recomputed beyond
plotting transforms.  No timestamps are written anywhere, so rendering
the same unchanged run twice produces byte-identical output.
"""

from __future__ import annotations

import html
from dataclasses import dataclass
from pathlib import Path

from .manifest import RunManifest, load_manifest
from .panels import PANEL_KINDS, Panel, build_panel

__all__ = ["RenderResult", "render"]


@dataclass(frozen=True)
class RenderResult:
    index: Path
    panels: tuple
    n_artifacts: int

    @property
    def n_placeholders(self) -> int:
        return sum(1 for p in self.panels if p.error is not None)


_STYLE = """
body { font-family: sans-serif; margin: 1.5em auto; max-width: 70em;
       color: #222; }
h1 { font-size: 1.4em; } h2 { font-size: 1.1em; margin-bottom: 0.3em; }
table { border-collapse: collapse; font-size: 0.85em; }
td, th { border: 1px solid #ccc; padding: 0.25em 0.6em; text-align: left; }
th { background: #f0f0f0; }
section.panel { border: 1px solid #ddd; border-radius: 4px;
                padding: 0.8em 1em; margin: 1em 0; }
section.panel img { max-width: 100%; }
p.error { color: #a33; font-weight: bold; }
span.pass { color: #283; } span.fail { color: #a33; }
code { background: #f6f6f6; padding: 0 0.2em; }
""".strip()


def _esc(value) -> str:
    return html.escape(str(value), quote=True)


def _checks_html(manifest: RunManifest) -> str:
    if not manifest.checks:
        return "<p>no checks recorded</p>"
    rows = []
    for c in manifest.checks:
        status = "pass" if c.get("passed") else "fail"
        rows.append(
            f"<tr><td>{_esc(c.get('name', '?'))}</td>"
            f"<td><span class=\"{status}\">{status.upper()}</span></td>"
            f"<td>{_esc(c.get('detail', ''))}</td></tr>"
        )
    return (
        "<table><tr><th>check</th><th>status</th><th>detail</th></tr>"
        + "".join(rows) + "</table>"
    )


def _panel_html(panel: Panel) -> str:
    parts = [f"<section class=\"panel\"><h2>{_esc(panel.title)}</h2>"]
    if panel.error is not None:
        parts.append(f"<p class=\"error\">{_esc(panel.error)}</p>")
    if panel.image is not None:
        parts.append(
            f"<a href=\"{_esc(panel.image)}\">"
            f"<img src=\"{_esc(panel.image)}\" alt=\"{_esc(panel.title)}\"></a>"
        )
    if panel.rows:
        rows = "".join(
            f"<tr><td>{_esc(k)}</td><td>{_esc(v)}</td></tr>" for k, v in panel.rows
        )
        parts.append(f"<table>{rows}</table>")
    parts.append("</section>")
    return "".join(parts)


def _listing_html(manifest: RunManifest) -> str:
    if not manifest.artifacts:
        return "<p>no artifacts listed</p>"
    rows = []
    for a in manifest.artifacts:
        note = "" if a.exists else " (missing)"
        rows.append(
            f"<tr><td>{_esc(a.kind)}</td><td><code>{_esc(a.name)}</code>{note}</td>"
            f"<td>{_esc(a.format)}</td><td><code>{_esc(a.sha256[:12])}</code></td></tr>"
        )
    return (
        "<table><tr><th>kind</th><th>path</th><th>format</th><th>sha256</th></tr>"
        + "".join(rows) + "</table>"
    )


def _index_html(manifest: RunManifest, panels) -> str:
    status = "PASS" if manifest.passed else "FAIL"
    cls = "pass" if manifest.passed else "fail"
    body = [
        "<!doctype html>",
        "<html lang=\"en\"><head><meta charset=\"utf-8\">",
        f"<title>driftflow run: {_esc(manifest.experiment)}</title>",
        f"<style>{_STYLE}</style></head><body>",
        f"<h1>driftflow run: {_esc(manifest.experiment)} "
        f"<span class=\"{cls}\">{status}</span></h1>",
        f"<p>config hash <code>{_esc(manifest.config_hash[:12])}</code>, "
        f"{len(panels)} panel(s), {len(manifest.artifacts)} artifact(s)</p>",
        _checks_html(manifest),
    ]
    if panels:
        body.extend(_panel_html(p) for p in panels)
    else:
        body.append("<p>no report artifacts in this run</p>")
    body.append("<h2>artifacts</h2>")
    body.append(_listing_html(manifest))
    body.append("</body></html>")
    return "\n".join(body) + "\n"


def render(manifest_path, out_dir) -> RenderResult:
    """Render ``manifest_path`` into ``out_dir``; returns the result paths.

    Raises ReportError only for an unreadable manifest; broken artifacts
    degrade to placeholder panels.
    """
    manifest = load_manifest(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    taken: set = set()
    panels = tuple(
        build_panel(a, out_dir, taken)
        for a in manifest.artifacts
        if a.kind in PANEL_KINDS
    )
    index = out_dir / "index.html"
    index.write_text(_index_html(manifest, panels), encoding="utf-8")
    return RenderResult(index=index, panels=panels, n_artifacts=len(manifest.artifacts))
