"""Command-line driver exposing every experiment as a subcommand.

Usage::

    driftflow <experiment> [variant] [--config FILE] [--set KEY=VALUE ...]

Experiments: ``simulate``, ``average``, ``flow {build,check,glue,certify}``,
``davie {gradient,difference,krylov}``, ``jn``, ``stability``,
``demo-regularization``, ``sew-selftest``.

Configuration is a YAML mapping (nested keys, human-editable) merged over
per-experiment defaults; ``--set a.b.c=value`` overrides win over the file.
Parsing is strict: any key not in the experiment's schema fails with a
usage error naming the dotted key before any computation starts.

Every run writes into ``<output_dir>/<experiment>-<hash8>/`` where the key
is the SHA-256 of the effective config, so identical configs reuse the
same directory and reproduce the same bytes.  Artifacts are written
atomically (temp file, then rename) and listed in ``manifest.json``
together with the config echo, per-artifact digests, and check results.

Exit codes: 0 all configured checks pass, 1 a check failed (named on
stderr), 2 usage error, 3 resource exhaustion.

``DRIFTFLOW_WORKERS`` caps the driver's parallelism budget (default: the
machine's CPU count).  Every current experiment runs vectorized in a
single process, so results never depend on the budget.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .averaging import (
    AveragingError,
    DomainError,
    build_averaged_table,
    estimate_holder,
    export_table_csv,
)
from .fields import ParameterError, make_drift, mollify
from .flow import (
    FlowError,
    LineageError,
    build_flow,
    check_flow_property,
    corrupt_with_jump,
    export_flow_csv,
    export_report_json,
    glue_flows,
    save_flow,
    solve_em,
    uniqueness_certificate,
)
from .paths import PathError, ResourceCapError, generate_path, save_path
from .sewing import SewingError, export_solution_csv, sew_selftest, solve_nonlinear_young
from .sewing import power_control
from .verify import (
    VerifyError,
    jn_amplification,
    mc_difference_moment,
    mc_gradient_moment,
    mc_krylov_moment,
    oracle_first_moment,
    regularization_demo,
    running_max_moment_oracle,
    stability_experiment,
)

WORKERS_ENV = "DRIFTFLOW_WORKERS"


class UsageError(Exception):
    """Invalid invocation or configuration; maps to exit code 2."""


# --- config schema -----------------------------------------------------------


class Opt:
    """A leaf config option: a default plus a validating parser."""

    __slots__ = ("default", "parse")

    def __init__(self, default, parse):
        self.default = default
        self.parse = parse


def _num(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError("expected a number")
    return float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError("expected an integer")
    return int(v)


def _bool(v):
    if not isinstance(v, bool):
        raise ValueError("expected true or false")
    return v


def _str(v):
    if not isinstance(v, str):
        raise ValueError("expected a string")
    return v


def _num_list(v):
    if not isinstance(v, (list, tuple)) or not v:
        raise ValueError("expected a nonempty list of numbers")
    return [_num(x) for x in v]


def _int_list(v):
    if not isinstance(v, (list, tuple)) or not v:
        raise ValueError("expected a nonempty list of integers")
    return [_int(x) for x in v]


def _pair(v):
    vals = _num_list(v)
    if len(vals) != 2:
        raise ValueError("expected a pair [lo, hi]")
    return vals


def _opt(parse):
    return lambda v: None if v is None else parse(v)


def _choice(*names):
    def parse(v):
        if v not in names:
            raise ValueError(f"expected one of {', '.join(names)}")
        return v

    return parse


def _param_map(v):
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ValueError("expected a mapping of drift parameters")
    out = {}
    for key, val in v.items():
        if not isinstance(key, str):
            raise ValueError("parameter names must be strings")
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ValueError(f"parameter '{key}' must be a number")
        out[key] = float(val)
    return out


def _drift_schema(kind="zero", params=None, p=4.0, q=4.0, sigma=None):
    return {
        "kind": Opt(kind, _str),
        "params": Opt(dict(params or {}), _param_map),
        "d": Opt(1, _int),
        "p": Opt(p, _num),
        "q": Opt(q, _num),
        "mollify_sigma": Opt(sigma, _opt(_num)),
    }


def _path_schema(seed=0, level=10):
    return {
        "seed": Opt(seed, _int),
        "level": Opt(level, _int),
        "horizon": Opt(1.0, _num),
    }


def _grid_schema(lo, hi, n):
    return {"lo": Opt(lo, _num), "hi": Opt(hi, _num), "n": Opt(n, _int)}


def _deep_merge(base, override):
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def _effective(schema, supplied, where=""):
    """Defaults overlaid with supplied values; unknown keys are fatal."""
    if not isinstance(supplied, dict):
        raise UsageError(f"config section '{where.rstrip('.') or '.'}' must be a mapping")
    for key in supplied:
        if key not in schema:
            raise UsageError(f"unknown config key '{where}{key}'")
    out = {}
    for key, spec in schema.items():
        if isinstance(spec, dict):
            out[key] = _effective(spec, supplied.get(key) or {}, f"{where}{key}.")
        elif key in supplied:
            try:
                out[key] = spec.parse(supplied[key])
            except ValueError as exc:
                raise UsageError(f"invalid value for '{where}{key}': {exc}") from None
        else:
            out[key] = spec.default
    return out


def _load_config_file(path):
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise UsageError(f"config file {path} is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a mapping at top level")
    return data


def _parse_overrides(items):
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects KEY=VALUE, got '{item}'")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise UsageError(f"--set value for '{key}' is not valid YAML") from None
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise UsageError(f"--set key '{key}' descends through a scalar")
            node = nxt
        node[parts[-1]] = value
    return out


# --- artifact plumbing -------------------------------------------------------


def _atomic_write(path: Path, writer, mode="w"):
    tmp = path.with_name(path.name + ".tmp")
    kwargs = {} if "b" in mode else {"newline": ""}
    with open(tmp, mode, **kwargs) as fh:
        writer(fh)
    os.replace(tmp, path)


def _artifact(run_dir: Path, name: str, kind: str, fmt: str, writer, mode="w"):
    path = run_dir / name
    _atomic_write(path, writer, mode=mode)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return {"kind": kind, "path": name, "format": fmt, "sha256": digest}


def _check(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def _write_csv(fh, header, rows):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [format(float(v), ".17g") if isinstance(v, (float, np.floating)) else v for v in row]
        )


def _worker_budget():
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise UsageError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


# --- shared builders ---------------------------------------------------------


def _drift_from(dcfg):
    b = make_drift(dcfg["kind"], d=dcfg["d"], p=dcfg["p"], q=dcfg["q"], **dcfg["params"])
    if dcfg["mollify_sigma"] is not None:
        b = mollify(b, dcfg["mollify_sigma"])
    return b


def _path_from(pcfg, d=1):
    return generate_path(pcfg["seed"], pcfg["horizon"], pcfg["level"], d)


def _linspace(gcfg):
    if gcfg["n"] < 2:
        raise UsageError("grids need at least two points")
    return np.linspace(gcfg["lo"], gcfg["hi"], gcfg["n"])


def _zmax(values, targets, ses):
    z = 0.0
    for v, t, s in zip(values, targets, ses):
        gap = abs(float(v) - float(t))
        z = max(z, gap / s if s > 0 else (0.0 if gap == 0 else np.inf))
    return z


def _moment_csv_rows(rep):
    rows = []
    for a, m in enumerate(rep.m_orders):
        for j, h in enumerate(rep.windows):
            rows.append([int(m), float(h), float(rep.root_moments[a, j]), float(rep.root_se[a, j])])
    return rows


def _moment_artifacts(run_dir, rep):
    return [
        _artifact(run_dir, "report.json", "moment-report", "json",
                  lambda fh: export_report_json(rep, fh)),
        _artifact(run_dir, "report.csv", "moment-csv", "csv",
                  lambda fh: _write_csv(fh, ["m", "window", "root_moment", "root_se"],
                                        _moment_csv_rows(rep))),
    ]


def _slope_band_check(rep, cfg):
    m_star = cfg["checks"]["slope_m"]
    if m_star not in rep.m_orders:
        raise UsageError(f"checks.slope_m={m_star} is not among m_orders")
    slope = rep.norm_slopes[rep.m_orders.index(m_star)]
    tol = cfg["checks"]["slope_tol"]
    gap = abs(slope - rep.theoretical_exponent)
    return _check(
        "slope-band",
        gap <= tol,
        f"norm slope (m={m_star}) {slope:.4f} vs {rep.theoretical_exponent:g} +/- {tol:g}",
    )


# --- experiment runners ------------------------------------------------------


SIMULATE_SCHEMA = {
    "drift": _drift_schema(),
    "path": _path_schema(),
    "x0": Opt(0.0, _num),
    "scheme": Opt("euler-maruyama", _choice("euler-maruyama", "nonlinear-young")),
    "level": Opt(None, _opt(_int)),
    "t_start": Opt(0.0, _num),
    "domain": Opt(None, _opt(_pair)),
    "output_dir": Opt("runs", _str),
}


def _run_simulate(cfg, run_dir):
    b = _drift_from(cfg["drift"])
    path = _path_from(cfg["path"], b.d)
    domain = tuple(cfg["domain"]) if cfg["domain"] is not None else None
    if cfg["scheme"] == "euler-maruyama":
        sol = solve_em(b, path, cfg["x0"], level=cfg["level"], t_start=cfg["t_start"],
                       domain=domain)
    else:
        sol = solve_nonlinear_young(b, path, cfg["x0"], level=cfg["level"], domain=domain,
                                    t_start=cfg["t_start"])
    artifacts = [
        _artifact(run_dir, "solution.csv", "solution-csv", "csv",
                  lambda fh: export_solution_csv(sol, fh)),
        _artifact(run_dir, "path.npz", "path-binary", "npz",
                  lambda fh: save_path(path, fh), mode="wb"),
    ]
    finite = bool(np.isfinite(sol.y).all())
    checks = [_check("finite-values", finite, f"flags={sorted(sol.flags)!r}")]
    return artifacts, checks


AVERAGE_SCHEMA = {
    "drift": _drift_schema(kind="sign", sigma=0.1),
    "path": _path_schema(),
    "x_grid": _grid_schema(-1.0, 1.0, 17),
    "time_level": Opt(7, _int),
    "holder": {
        "alpha": Opt(0.5, _num),
        "eps": Opt(0.5, _num),
        "min_scales": Opt(4, _int),
    },
    "output_dir": Opt("runs", _str),
}


def _run_average(cfg, run_dir):
    f = _drift_from(cfg["drift"])
    path = _path_from(cfg["path"], f.d)
    table = build_averaged_table(f, path, _linspace(cfg["x_grid"]), cfg["time_level"])
    rep = estimate_holder(table, cfg["holder"]["alpha"], cfg["holder"]["eps"],
                          min_scales=cfg["holder"]["min_scales"])
    artifacts = [
        _artifact(run_dir, "table.csv", "table-csv", "csv",
                  lambda fh: export_table_csv(table, fh)),
        _artifact(run_dir, "holder.json", "holder-report", "json",
                  lambda fh: export_report_json(rep, fh)),
    ]
    checks = [_check(
        "holder-envelope", rep.passed,
        f"alpha_fit={rep.alpha_fit:.3f} xi={rep.xi:.3g} for requested "
        f"({cfg['holder']['alpha']:g}, {cfg['holder']['eps']:g})",
    )]
    return artifacts, checks


def _flow_common_schema(**over):
    base = {
        "drift": _drift_schema(),
        "path": _path_schema(),
        "s_grid": _grid_schema(0.0, 0.75, 4),
        "x_grid": _grid_schema(-1.0, 1.0, 17),
        "level": Opt(None, _opt(_int)),
        "scheme": Opt("nonlinear-young", _choice("nonlinear-young", "euler-maruyama")),
        "t_level": Opt(6, _int),
        "output_dir": Opt("runs", _str),
    }
    base.update(over)
    return base


FLOW_BUILD_SCHEMA = _flow_common_schema(
    t_end=Opt(None, _opt(_num)),
    refine_check=Opt(False, _bool),
)


def _build_table(cfg, **over):
    b = _drift_from(cfg["drift"])
    path = _path_from(cfg["path"], 1)
    kwargs = dict(level=cfg["level"], scheme=cfg["scheme"], t_level=cfg["t_level"])
    kwargs.update(over)
    return b, path, build_flow(b, path, _linspace(cfg["s_grid"]), _linspace(cfg["x_grid"]),
                               **kwargs)


def _start_identity_error(table):
    worst = 0.0
    for i, s in enumerate(table.s_grid):
        k = int(np.argmin(np.abs(table.t_grid - s)))
        if abs(table.t_grid[k] - s) > 1e-12:
            continue
        worst = max(worst, float(np.max(np.abs(table.values[i, :, k] - table.x_grid))))
    return worst


def _run_flow_build(cfg, run_dir):
    _, _, table = _build_table(cfg, t_end=cfg["t_end"], refine_check=cfg["refine_check"])
    artifacts = [
        _artifact(run_dir, "flow.npz", "flow-binary", "npz",
                  lambda fh: save_flow(table, fh), mode="wb"),
        _artifact(run_dir, "flow.csv", "flow-csv", "csv",
                  lambda fh: export_flow_csv(table, fh)),
    ]
    err = _start_identity_error(table)
    checks = [_check("start-identity", err <= 1e-12, f"max |X_s - x| = {err:.3g}")]
    return artifacts, checks


FLOW_CHECK_SCHEMA = _flow_common_schema(
    check={
        "threshold": Opt(None, _opt(_num)),
        "coeffs": Opt([2.0, 1.0, 0.5], _num_list),
    },
)


def _run_flow_check(cfg, run_dir):
    _, _, table = _build_table(cfg)
    rep = check_flow_property(table, threshold=cfg["check"]["threshold"],
                              coeffs=tuple(cfg["check"]["coeffs"]))
    artifacts = [_artifact(run_dir, "flow-check.json", "flow-property-report", "json",
                           lambda fh: export_report_json(rep, fh))]
    checks = [_check("flow-property", rep.passed,
                     f"max defect {rep.max_defect:.3g} vs threshold {rep.threshold:.3g}")]
    return artifacts, checks


FLOW_GLUE_SCHEMA = _flow_common_schema(
    glue={
        "mode": Opt("self", _choice("self", "cross")),
        "split": Opt(0.5, _num),
        "level_a": Opt(8, _int),
        "level_b": Opt(9, _int),
    },
)


def _run_flow_glue(cfg, run_dir):
    g = cfg["glue"]
    if g["mode"] == "self":
        _, _, table = _build_table(cfg)
        glued, defect = glue_flows(table, table)
        exact = defect == 0.0 and np.array_equal(glued.values, table.values, equal_nan=True)
        budget = None
        checks = [_check("self-glue-exact", exact, f"defect {defect:.3g}")]
    else:
        _, _, fa = _build_table(cfg, level=g["level_a"], t_end=g["split"], refine_check=True)
        _, _, fb = _build_table(cfg, level=g["level_b"], refine_check=True)
        glued, defect = glue_flows(fa, fb)
        budget = float(np.max(fa.refine_sup) + np.max(fb.refine_sup))
        checks = [_check("glue-budget", defect <= budget,
                         f"overlap defect {defect:.3g} vs refinement budget {budget:.3g}")]
    summary = {"mode": g["mode"], "defect": float(defect), "budget": budget}
    artifacts = [
        _artifact(run_dir, "glued-flow.npz", "flow-binary", "npz",
                  lambda fh: save_flow(glued, fh), mode="wb"),
        _artifact(run_dir, "glue.json", "glue-summary", "json",
                  lambda fh: (json.dump(summary, fh, sort_keys=True, indent=2),
                              fh.write("\n"))),
    ]
    return artifacts, checks


FLOW_CERTIFY_SCHEMA = _flow_common_schema(
    drift=_drift_schema(kind="sign", sigma=2.0**-4),
    path=_path_schema(seed=7, level=12),
    s_grid=_grid_schema(0.0, 0.875, 8),
    x_grid=_grid_schema(-2.5, 2.5, 161),
    level=Opt(12, _opt(_int)),
    t_level=Opt(8, _int),
    solution={
        "x0": Opt(0.0, _num),
        "scheme": Opt("euler-maruyama", _choice("euler-maruyama", "nonlinear-young")),
        "level": Opt(None, _opt(_int)),
    },
    certificate={
        "kappa": Opt(0.95, _num),
        "beta": Opt(1.2, _num),
        "control_c": Opt(1.0, _num),
        "control_a": Opt(1.0, _num),
    },
    corrupt={
        "enabled": Opt(False, _bool),
        "size": Opt(0.1, _num),
        "at": Opt(0.5, _num),
    },
)


def _run_flow_certify(cfg, run_dir):
    b, path, table = _build_table(cfg)
    sol_cfg = cfg["solution"]
    if sol_cfg["scheme"] == "euler-maruyama":
        sol = solve_em(b, path, sol_cfg["x0"], level=sol_cfg["level"])
    else:
        sol = solve_nonlinear_young(b, path, sol_cfg["x0"], level=sol_cfg["level"])
    if cfg["corrupt"]["enabled"]:
        sol = corrupt_with_jump(sol, size=cfg["corrupt"]["size"], at=cfg["corrupt"]["at"])
    cert = cfg["certificate"]
    w = power_control(cert["control_c"], cert["control_a"])
    rep = uniqueness_certificate(sol, table, w, kappa=cert["kappa"], beta=cert["beta"])
    artifacts = [_artifact(run_dir, "certificate.json", "uniqueness-report", "json",
                           lambda fh: export_report_json(rep, fh))]
    detail = f"ratio_max={rep.ratio_max:.3g} constancy_max={rep.constancy_max:.3g}"
    if cfg["corrupt"]["enabled"]:
        checks = [_check("negative-control-rejected", not rep.passed, detail)]
    else:
        checks = [_check("uniqueness-certificate", rep.passed, detail)]
    return artifacts, checks


def _davie_schema(seed, slope_m, slope_tol, windows):
    return {
        "drift": _drift_schema(kind="gaussian_bump", params={"width": 2.0**-7.25}),
        "m_orders": Opt([1, 2], _int_list),
        "n_paths": Opt(1000, _int),
        "windows": Opt(windows, _num_list),
        "master_seed": Opt(seed, _int),
        "level": Opt(12, _int),
        "checks": {
            "slope_m": Opt(slope_m, _int),
            "slope_tol": Opt(slope_tol, _num),
            "oracle": Opt(slope_m == 1, _bool),
            "se_mult": Opt(3.0, _num),
        },
        "output_dir": Opt("runs", _str),
    }


DAVIE_GRADIENT_SCHEMA = _davie_schema(101, 2, 0.10, [2.0**-k for k in range(10, 2, -1)])
DAVIE_KRYLOV_SCHEMA = _davie_schema(2, 1, 0.05, [2.0**-k for k in range(10, 2, -1)])

DAVIE_DIFFERENCE_SCHEMA = {
    "drift": _drift_schema(kind="gaussian_bump", params={"width": 1.0}),
    "separations": Opt([2.0**-k for k in range(6, 0, -1)], _num_list),
    "m_orders": Opt([1, 2], _int_list),
    "n_paths": Opt(1000, _int),
    "windows": Opt([2.0**-k for k in range(8, 2, -1)], _num_list),
    "master_seed": Opt(3, _int),
    "level": Opt(12, _int),
    "checks": {
        "space_slope_tol": Opt(0.1, _num),
    },
    "output_dir": Opt("runs", _str),
}


def _run_davie_gradient(cfg, run_dir):
    f = _drift_from(cfg["drift"])
    rep = mc_gradient_moment(f, m_orders=tuple(cfg["m_orders"]), n_paths=cfg["n_paths"],
                             windows=tuple(cfg["windows"]), master_seed=cfg["master_seed"],
                             level=cfg["level"])
    artifacts = _moment_artifacts(run_dir, rep)
    checks = [_slope_band_check(rep, cfg)]
    return artifacts, checks


def _run_davie_krylov(cfg, run_dir):
    f = _drift_from(cfg["drift"])
    rep = mc_krylov_moment(f, m_orders=tuple(cfg["m_orders"]), n_paths=cfg["n_paths"],
                           windows=tuple(cfg["windows"]), master_seed=cfg["master_seed"],
                           level=cfg["level"])
    artifacts = _moment_artifacts(run_dir, rep)
    checks = [_slope_band_check(rep, cfg)]
    if cfg["checks"]["oracle"] and 1 in rep.m_orders:
        a = rep.m_orders.index(1)
        targets = [oracle_first_moment(f, 0.0, h)[0] for h in rep.windows]
        z = _zmax(rep.root_moments[a], targets, rep.root_se[a])
        checks.append(_check("oracle-agreement", z <= cfg["checks"]["se_mult"],
                             f"max |z| = {z:.2f} vs first-moment quadrature"))
    return artifacts, checks


def _run_davie_difference(cfg, run_dir):
    f = _drift_from(cfg["drift"])
    center = f.params.get("center", 0.0)
    seps = np.asarray(cfg["separations"], dtype=np.float64)
    x = list(center - seps / 2.0)
    y = list(center + seps / 2.0)
    rep = mc_difference_moment(f, x, y, m_orders=tuple(cfg["m_orders"]),
                               n_paths=cfg["n_paths"], windows=tuple(cfg["windows"]),
                               master_seed=cfg["master_seed"], level=cfg["level"])
    artifacts = _moment_artifacts(run_dir, rep)
    tol = cfg["checks"]["space_slope_tol"]
    checks = [_check("space-slope", abs(rep.space_slope - 1.0) <= tol,
                     f"space slope {rep.space_slope:.3f} vs 1 +/- {tol:g}")]
    return artifacts, checks


JN_SCHEMA = {
    "process": {
        "kind": Opt("bm", _choice("bm", "scaled-bm", "gradient-average")),
        "lam": Opt(2.0, _num),
        "x0": Opt(0.0, _num),
    },
    "drift": _drift_schema(kind="gaussian_bump", params={"width": 0.25}),
    "alpha": Opt(0.5, _num),
    "m_orders": Opt(list(range(2, 11)), _int_list),
    "n_paths": Opt(800, _int),
    "master_seed": Opt(4, _int),
    "level": Opt(11, _int),
    "checks": {
        "spread_tol": Opt(1.5, _num),
        "oracle": Opt(True, _bool),
        "se_mult": Opt(3.0, _num),
    },
    "output_dir": Opt("runs", _str),
}


def _run_jn(cfg, run_dir):
    kind = cfg["process"]["kind"]
    if kind == "bm":
        proc = {"kind": "bm"}
    elif kind == "scaled-bm":
        proc = {"kind": "scaled-bm", "lam": cfg["process"]["lam"]}
    else:
        proc = {"kind": "gradient-average", "field": _drift_from(cfg["drift"]),
                "x0": cfg["process"]["x0"]}
    rep = jn_amplification(proc, alpha=cfg["alpha"], m_orders=tuple(cfg["m_orders"]),
                           n_paths=cfg["n_paths"], master_seed=cfg["master_seed"],
                           level=cfg["level"])
    rows = [
        [int(m), rep.root_moments[a], rep.root_se[a], rep.envelope_roots[a], rep.ratios[a]]
        for a, m in enumerate(rep.m_orders)
    ]
    artifacts = [
        _artifact(run_dir, "report.json", "jn-report", "json",
                  lambda fh: export_report_json(rep, fh)),
        _artifact(run_dir, "report.csv", "jn-csv", "csv",
                  lambda fh: _write_csv(fh, ["m", "root_moment", "root_se",
                                             "envelope_root", "ratio"], rows)),
    ]
    spread_tol = cfg["checks"]["spread_tol"]
    checks = [_check("envelope-spread", rep.ratio_spread <= spread_tol,
                     f"ratio spread {rep.ratio_spread:.3f} vs {spread_tol:g}")]
    if kind == "bm" and cfg["checks"]["oracle"]:
        targets = [running_max_moment_oracle(m) for m in rep.m_orders]
        z = _zmax(rep.root_moments, targets, rep.root_se)
        checks.append(_check("oracle-agreement", z <= cfg["checks"]["se_mult"],
                             f"max |z| = {z:.2f} vs reflection oracle"))
    return artifacts, checks


STABILITY_SCHEMA = {
    "drift": _drift_schema(kind="sign"),
    "family": {
        "sigmas": Opt([2.0**-3, 2.0**-4, 2.0**-5], _num_list),
    },
    "nu": Opt(0.0, _num),
    "n_seeds": Opt(8, _int),
    "master_seed": Opt(5, _int),
    "level": Opt(9, _int),
    "starts": Opt([-0.75, 0.0, 0.75], _num_list),
    "scheme": Opt("euler-maruyama", _choice("euler-maruyama", "nonlinear-young")),
    "eta": Opt(1.0, _num),
    "checks": {
        "slope_floor": Opt(0.4, _num),
        "se_mult": Opt(2.0, _num),
    },
    "output_dir": Opt("runs", _str),
}


def _run_stability(cfg, run_dir):
    b = _drift_from(cfg["drift"])
    sigmas = cfg["family"]["sigmas"]
    family = [mollify(b, s) for s in sigmas]
    rep = stability_experiment(b, family, sigmas=tuple(sigmas), nu=cfg["nu"],
                               n_seeds=cfg["n_seeds"], master_seed=cfg["master_seed"],
                               level=cfg["level"], starts=tuple(cfg["starts"]),
                               scheme=cfg["scheme"], eta=cfg["eta"])
    rows = [
        [s, rep.distances[k], rep.distances_bessel[k], rep.defect_medians[k],
         rep.defect_median_se[k]]
        for k, s in enumerate(rep.sigmas)
    ]
    artifacts = [
        _artifact(run_dir, "report.json", "stability-report", "json",
                  lambda fh: export_report_json(rep, fh)),
        _artifact(run_dir, "report.csv", "stability-csv", "csv",
                  lambda fh: _write_csv(fh, ["sigma", "distance", "distance_bessel",
                                             "defect_median", "defect_median_se"], rows)),
    ]
    floor = cfg["checks"]["slope_floor"]
    checks = [_check("slope-floor", np.isfinite(rep.slope) and rep.slope >= floor,
                     f"defect-vs-distance slope {rep.slope:.2f} vs floor {floor:g}")]
    mult = cfg["checks"]["se_mult"]
    med = rep.defect_medians
    se = rep.defect_median_se
    mono = all(
        med[k + 1] <= med[k] + mult * float(np.hypot(se[k], se[k + 1]))
        for k in range(len(med) - 1)
    )
    checks.append(_check("defects-monotone", mono,
                         f"medians {['%.3g' % v for v in med]} within {mult:g} SE"))
    if rep.summability is not None:
        ok = all("summable" in v for v in rep.summability.verdicts)
        checks.append(_check("summable", ok, f"verdicts {list(rep.summability.verdicts)!r}"))
    return artifacts, checks


REGULARIZATION_SCHEMA = {
    "n_seeds": Opt(16, _int),
    "levels": Opt([10, 11, 12], _int_list),
    "master_seed": Opt(6, _int),
    "certify": Opt(False, _bool),
    "output_dir": Opt("runs", _str),
}


def _run_regularization(cfg, run_dir):
    rep = regularization_demo(n_seeds=cfg["n_seeds"], levels=tuple(cfg["levels"]),
                              master_seed=cfg["master_seed"], certify=cfg["certify"])
    artifacts = [_artifact(run_dir, "report.json", "regularization-report", "json",
                           lambda fh: export_report_json(rep, fh))]
    checks = [
        _check("exact-branches",
               rep.residual_zero == 0.0 and rep.residual_square == 0.0,
               f"residuals {rep.residual_zero:g}, {rep.residual_square:g}"),
        _check("noise-selection",
               all(b < a for a, b in zip(rep.median_discrepancy,
                                         rep.median_discrepancy[1:])),
               f"median discrepancies {['%.3g' % v for v in rep.median_discrepancy]}"),
    ]
    if cfg["certify"]:
        checks.append(_check("certificates", rep.certificate_pass_rate == 1.0,
                             f"pass rate {rep.certificate_pass_rate:g}"))
    return artifacts, checks


SELFTEST_SCHEMA = {
    "n_instances": Opt(1000, _int),
    "master_seed": Opt(9, _int),
    "target_level": Opt(12, _int),
    "output_dir": Opt("runs", _str),
}


def _run_sew_selftest(cfg, run_dir):
    rep = sew_selftest(n_instances=cfg["n_instances"], master_seed=cfg["master_seed"],
                       target_level=cfg["target_level"])
    artifacts = [_artifact(run_dir, "report.json", "selftest-report", "json",
                           lambda fh: export_report_json(rep, fh))]
    checks = [
        _check("certificate-domination", rep.violations == 0,
               f"{rep.violations} of {rep.n_instances} over bound, "
               f"max ratio {rep.max_error_ratio:.3f}"),
        _check("young-oracle", rep.young_rel_error <= 1e-6,
               f"relative error {rep.young_rel_error:.3g} vs Riemann-Stieltjes sum"),
    ]
    return artifacts, checks


EXPERIMENTS = {
    "simulate": (SIMULATE_SCHEMA, _run_simulate),
    "average": (AVERAGE_SCHEMA, _run_average),
    "flow-build": (FLOW_BUILD_SCHEMA, _run_flow_build),
    "flow-check": (FLOW_CHECK_SCHEMA, _run_flow_check),
    "flow-glue": (FLOW_GLUE_SCHEMA, _run_flow_glue),
    "flow-certify": (FLOW_CERTIFY_SCHEMA, _run_flow_certify),
    "davie-gradient": (DAVIE_GRADIENT_SCHEMA, _run_davie_gradient),
    "davie-difference": (DAVIE_DIFFERENCE_SCHEMA, _run_davie_difference),
    "davie-krylov": (DAVIE_KRYLOV_SCHEMA, _run_davie_krylov),
    "jn": (JN_SCHEMA, _run_jn),
    "stability": (STABILITY_SCHEMA, _run_stability),
    "demo-regularization": (REGULARIZATION_SCHEMA, _run_regularization),
    "sew-selftest": (SELFTEST_SCHEMA, _run_sew_selftest),
}

_DAVIE_ALIASES = {
    "mc_gradient_moment": "gradient",
    "mc_difference_moment": "difference",
    "mc_krylov_moment": "krylov",
}


def config_hash(experiment, cfg):
    """SHA-256 over the canonical JSON of the effective config."""
    blob = json.dumps({"experiment": experiment, "config": cfg},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _execute(experiment, config_path, overrides):
    schema, runner = EXPERIMENTS[experiment]
    supplied = _deep_merge(_load_config_file(config_path), _parse_overrides(overrides))
    cfg = _effective(schema, supplied)
    workers = _worker_budget()
    digest = config_hash(experiment, cfg)
    run_dir = Path(cfg["output_dir"]) / f"{experiment}-{digest[:8]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    artifacts, checks = runner(cfg, run_dir)
    manifest = {
        "tool": "driftflow",
        "experiment": experiment,
        "config_hash": digest,
        "config": cfg,
        "artifacts": sorted(artifacts, key=lambda a: a["path"]),
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
        "workers_env": WORKERS_ENV,
    }
    _atomic_write(run_dir / "manifest.json",
                  lambda fh: (json.dump(manifest, fh, sort_keys=True, indent=2),
                              fh.write("\n")))
    print(f"run: {experiment} config {digest[:8]} (workers budget {workers})")
    for c in checks:
        print(f"check {c['name']}: {'PASS' if c['passed'] else 'FAIL'} ({c['detail']})")
    print(f"manifest: {run_dir / 'manifest.json'}")
    failing = [c for c in checks if not c["passed"]]
    if failing:
        print(f"check failed: {failing[0]['name']} ({failing[0]['detail']})",
              file=sys.stderr)
        return 1
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="driftflow",
        description="Run drift-regularization experiments with reproducible artifacts.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")

    def add(name, variants=None):
        sp = sub.add_parser(name)
        if variants:
            sp.add_argument("variant", choices=variants)
        sp.add_argument("--config", metavar="FILE", help="YAML config file")
        sp.add_argument("--set", action="append", dest="overrides", metavar="KEY=VALUE",
                        help="override a config key (dotted path); wins over the file")

    add("simulate")
    add("average")
    add("flow", variants=["build", "check", "glue", "certify"])
    add("davie", variants=["gradient", "difference", "krylov"] + sorted(_DAVIE_ALIASES))
    add("jn")
    add("stability")
    add("demo-regularization")
    add("sew-selftest")
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    experiment = args.experiment
    if experiment == "flow":
        experiment = f"flow-{args.variant}"
    elif experiment == "davie":
        variant = _DAVIE_ALIASES.get(args.variant, args.variant)
        experiment = f"davie-{variant}"
    try:
        return _execute(experiment, args.config, args.overrides)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ResourceCapError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 3
    except (ParameterError, VerifyError, AveragingError, DomainError, SewingError,
            FlowError, LineageError, PathError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except MemoryError:
        print("resource error: out of memory", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
