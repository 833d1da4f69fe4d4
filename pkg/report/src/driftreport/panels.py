"""Panel assembly: one report artifact in, one renderable panel out.

Figure panels cover the four report kinds with curve content; the
remaining JSON report kinds become key/value summary panels, so every
report artifact in a manifest yields exactly one panel.  A missing or
unreadable artifact becomes a placeholder panel carrying the error and
never aborts the render.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .figures import holder_figure, jn_figure, moment_figure, stability_figure

__all__ = ["Panel", "FIGURE_KINDS", "SUMMARY_KINDS", "PANEL_KINDS", "build_panel"]

FIGURE_KINDS = {
    "moment-report": moment_figure,
    "jn-report": jn_figure,
    "stability-report": stability_figure,
    "holder-report": holder_figure,
}

SUMMARY_KINDS = (
    "flow-property-report",
    "uniqueness-report",
    "glue-summary",
    "regularization-report",
    "selftest-report",
)

PANEL_KINDS = tuple(FIGURE_KINDS) + SUMMARY_KINDS


@dataclass(frozen=True)
class Panel:
    title: str
    image: Optional[str]  # PNG filename relative to the output directory
    rows: tuple = ()  # (label, value) caption pairs, already stringified
    error: Optional[str] = None


def _fmt(value):
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, float):
        return format(value, ".6g")
    if isinstance(value, (list, tuple)):
        if len(value) > 12:
            return f"({len(value)} values)"
        return "(" + ", ".join(_fmt(v) for v in value) + ")"
    return str(value)


def _scalar_rows(report):
    """Caption rows for a summary panel: every field, arrays abridged."""
    rows = []
    for key in sorted(report):
        value = report[key]
        if isinstance(value, dict):
            for sub in sorted(value):
                rows.append((f"{key}.{sub}", _fmt(value[sub])))
        else:
            rows.append((key, _fmt(value)))
    return tuple(rows)


def _moment_rows(rep):
    rows = [
        ("kind", rep["kind"]),
        ("n_paths", _fmt(rep["n_paths"])),
        ("(p, q, d)", f"({rep['p']:g}, {rep['q']:g}, {rep['d']})"),
        ("theoretical exponent", _fmt(rep["theoretical_exponent"])),
    ]
    for a, m in enumerate(rep["m_orders"]):
        rows.append((f"norm slope, m = {m}",
                     f"{_fmt(rep['norm_slopes'][a])} "
                     f"(se {_fmt(rep['slope_se'][a])})"))
    if rep.get("space_slope") is not None:
        rows.append(("space slope", f"{_fmt(rep['space_slope'])} (reference 1)"))
    for w in rep.get("warnings", ()):
        rows.append(("warning", w))
    return tuple(rows)


def _jn_rows(rep):
    return (
        ("process", rep["process"]),
        ("alpha", _fmt(rep["alpha"])),
        ("fitted c", _fmt(rep["fitted_c"])),
        ("ratio spread", _fmt(rep["ratio_spread"])),
        ("hypothesis", rep["hypothesis_note"]),
        ("n_paths / level", f"{rep['n_paths']} / {rep['level']}"),
    )


def _stability_rows(rep):
    rows = [
        ("slope", f"{_fmt(rep['slope'])} (se {_fmt(rep['slope_se'])}, "
                  f"reference {rep['target_slope']:g})"),
        ("condition", rep["condition"]),
        ("seeds / level", f"{rep['n_seeds']} / {rep['level']}"),
    ]
    summ = rep.get("summability")
    if summ:
        for eta, verdict in zip(summ["etas"], summ["verdicts"]):
            rows.append((f"summability eta = {eta:g}", verdict))
    return tuple(rows)


def _holder_rows(rep):
    return (
        ("time exponent", f"{_fmt(rep['alpha_fit'])} "
                          f"(requested {_fmt(rep['alpha_req'])})"),
        ("space exponent", f"{_fmt(rep['space_fit'])} "
                           f"(requested 1 - {_fmt(rep['eps_req'])})"),
        ("Xi", _fmt(rep["xi"])),
        ("Xi bounded / Lipschitz",
         f"{_fmt(rep['xi_bounded'])} / {_fmt(rep['xi_lipschitz'])}"),
        ("scales (time / space)",
         f"{rep['n_time_scales']} / {rep['n_separations']}"),
        ("passed", _fmt(rep["passed"])),
    )


_CAPTIONS = {
    "moment-report": _moment_rows,
    "jn-report": _jn_rows,
    "stability-report": _stability_rows,
    "holder-report": _holder_rows,
}


def _png_name(artifact, taken):
    stem = Path(artifact.name).stem
    name = f"{stem}.png"
    k = 1
    while name in taken:
        k += 1
        name = f"{stem}-{k}.png"
    taken.add(name)
    return name


def build_panel(artifact, out_dir, taken) -> Panel:
    """Render one report artifact into ``out_dir``.

    Returns a placeholder panel (``error`` set, no image) when the file
    is missing, is not valid JSON, or the figure builder rejects it.
    """
    title = f"{artifact.kind} ({artifact.name})"
    if not artifact.exists:
        return Panel(title, None, error=f"missing artifact file: {artifact.name}")
    try:
        report = json.loads(artifact.path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return Panel(title, None, error=f"unreadable artifact {artifact.name}: {exc}")
    if not isinstance(report, dict):
        return Panel(title, None, error=f"artifact {artifact.name} is not a JSON object")
    if artifact.kind in FIGURE_KINDS:
        name = _png_name(artifact, taken)
        try:
            FIGURE_KINDS[artifact.kind](report, Path(out_dir) / name)
            rows = _CAPTIONS[artifact.kind](report)
        except (KeyError, TypeError, ValueError) as exc:
            return Panel(title, None,
                         error=f"cannot draw {artifact.name}: {exc!r}")
        return Panel(title, name, rows=rows)
    return Panel(title, None, rows=_scalar_rows(report))
