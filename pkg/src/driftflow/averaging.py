"""Averaged drift fields along a fixed driver path.

The central object is the averaged field

    A(s, t, x) = integral over [s, t] of f(r, W_r + x) dr,

computed by trapezoid quadrature at the path's own resolution.  Tables of A
over a dyadic time grid and a spatial grid feed the joint Hoelder-exponent
estimator and the empirical regularizing certificate: the smallest constant
Xi such that

    |A(s, t, x) - A(s, t, y)| <= Xi |x - y|^(1-eps) (t - s)^alpha
    |A(s, t, x)|              <= Xi (t - s)^alpha

hold at every tabulated tuple, and the analogous bound with a moving offset
psi of recorded variation in place of the frozen x.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .fields import DriftField
from .paths import MAX_POINTS, BrownianPath

__all__ = [
    "AveragedField",
    "AveragingError",
    "DomainError",
    "HolderReport",
    "RegularizingReport",
    "average_field",
    "gradient_average",
    "build_averaged_table",
    "estimate_holder",
    "regularizing_certificate",
    "export_table_csv",
]


class AveragingError(Exception):
    """Invalid averaging request."""


class DomainError(AveragingError):
    """An offset function leaves its declared compact set."""


def _segment(path: BrownianPath, s: float, t: float):
    i, j = path.grid.index_of(s), path.grid.index_of(t)
    if i > j:
        raise AveragingError(f"need s <= t, got [{s}, {t}]")
    return i, j


def average_field(f: DriftField, path: BrownianPath, s: float, t: float, x=0.0) -> np.ndarray:
    """Trapezoid quadrature of r -> f(r, W_r + x) over grid-aligned [s, t].

    Returns an array of shape (d_out,).  Deterministic given (f, path); the
    only quadrature knob is the path's own level.
    """
    i, j = _segment(path, s, t)
    if i == j:
        return np.zeros(f.d_out)
    times = path.times()[i : j + 1]
    pts = path.values[i : j + 1] + np.atleast_1d(np.asarray(x, dtype=np.float64))
    vals = f.fn(times, pts)
    if not np.all(np.isfinite(vals)):
        k = int(np.argmax(~np.isfinite(vals).all(axis=1)))
        raise AveragingError(f"non-finite field value at t={times[k]}, x={pts[k]}")
    return np.trapezoid(vals, dx=path.grid.spacing, axis=0)


def gradient_average(f: DriftField, path: BrownianPath, s: float, t: float, x=0.0) -> np.ndarray:
    """Trapezoid quadrature of the spatial gradient along the path.

    Needs a smooth field with an analytic gradient (catalog smooth entries or
    mollified ones).
    """
    if not f.smooth or f.gradient_fn is None:
        raise AveragingError("gradient_average needs a smooth field with a gradient")
    i, j = _segment(path, s, t)
    if i == j:
        return np.zeros(f.d)
    times = path.times()[i : j + 1]
    pts = path.values[i : j + 1] + np.atleast_1d(np.asarray(x, dtype=np.float64))
    vals = f.gradient_fn(times, pts)
    return np.trapezoid(vals, dx=path.grid.spacing, axis=0)


@dataclass
class AveragedField:
    """Cumulative averaged-field table on a dyadic time grid times an x grid.

    ``cumulative[i, j]`` holds the integral from 0 to ``times[i]`` of
    f(r, W_r + x_grid[j]); increments between nodes recover A(s, t, x), which
    makes time additivity exact up to rounding by construction.
    """

    times: np.ndarray
    x_grid: np.ndarray
    cumulative: np.ndarray  # (n_t, n_x, d_out)
    field_kind: str
    path_seed: int
    level: int

    def increment(self, i: int, j: int) -> np.ndarray:
        """A(times[i], times[j], x) for every grid x; shape (n_x, d_out)."""
        return self.cumulative[j] - self.cumulative[i]


def build_averaged_table(
    f: DriftField, path: BrownianPath, x_grid, time_level: int = 6
) -> AveragedField:
    """Tabulate the averaged field over a dyadic time grid and an x grid.

    The integral runs at full path resolution; the table keeps cumulative
    values at the 2^time_level + 1 coarse nodes.
    """
    if f.d != 1:
        raise AveragingError("tables are implemented for d = 1")
    if time_level > path.level:
        raise AveragingError("time_level cannot exceed the path level")
    x_arr = np.asarray(x_grid, dtype=np.float64).ravel()
    n_t = (1 << time_level) + 1
    if n_t * x_arr.size * f.d_out > MAX_POINTS:
        raise AveragingError("requested table exceeds the resource cap")
    times = path.times()
    w = path.values[:, 0]
    # One field sweep over (path nodes) x (x columns).
    pts = (w[:, None] + x_arr[None, :]).reshape(-1, 1)
    tt = np.repeat(times, x_arr.size)
    vals = f.fn(tt, pts).reshape(times.size, x_arr.size, f.d_out)
    h = path.grid.spacing
    mids = 0.5 * (vals[:-1] + vals[1:]) * h
    cum = np.concatenate([np.zeros((1, x_arr.size, f.d_out)), np.cumsum(mids, axis=0)])
    stride = 1 << (path.level - time_level)
    return AveragedField(
        times=times[::stride].copy(),
        x_grid=x_arr,
        cumulative=cum[::stride].copy(),
        field_kind=f.kind,
        path_seed=path.seed,
        level=path.level,
    )


def export_table_csv(table: AveragedField, file) -> None:
    """Simplex-time rows (s, t, x, value...) for downstream consumers."""
    rows = []
    n_t = table.times.size
    for i in range(n_t - 1):
        for j in range(i + 1, n_t):
            inc = table.increment(i, j)
            for k, x in enumerate(table.x_grid):
                rows.append([table.times[i], table.times[j], x, *inc[k]])
    cols = ",".join(["s", "t", "x"] + [f"value{c}" for c in range(table.cumulative.shape[2])])
    np.savetxt(file, np.asarray(rows), delimiter=",", header=cols, comments="", fmt="%.17g")


@dataclass(frozen=True)
class HolderReport:
    """Fitted joint Hoelder data for one averaged-field table."""

    alpha_req: float
    eps_req: float
    alpha_fit: float
    space_fit: Optional[float]
    r2_time: float
    r2_space: Optional[float]
    xi: float
    xi_bounded: float
    xi_lipschitz: float
    n_time_scales: int
    n_separations: int
    spatially_flat: bool
    passed: bool


def _loglog_fit(scales, medians):
    u = np.log(np.asarray(scales, dtype=np.float64))
    v = np.log(np.asarray(medians, dtype=np.float64))
    du, dv = u - u.mean(), v - v.mean()
    # Identical inputs must give a slope of exactly 1, so keep the ratio form.
    slope = float(np.sum(du * dv) / np.sum(du * du))
    resid = dv - slope * du
    ss_tot = float(np.sum(dv * dv))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid * resid)) / ss_tot
    return slope, r2


def estimate_holder(table, alpha: float, eps: float, min_scales: int = 8) -> HolderReport:
    """Estimate joint Hoelder exponents and the empirical Xi from a table.

    Time statistics: per dyadic scale h, the median over window positions and
    x columns of |A(s, s+h, x)|.  Space statistics: per dyadic separation, the
    median over windows and positions of |A(s, t, x) - A(s, t, y)|.  Medians
    resist heavy tails; the fit is plain least squares in log-log.  Xi is the
    max ratio over every tabulated tuple against the requested (alpha, eps)
    envelope, covering both the bounded and the Lipschitz-in-x form.
    """
    n_t = table.times.size
    m = int(np.log2(n_t - 1))
    if m < 3:
        raise AveragingError("table needs at least 8 time nodes")
    span = table.times[-1] - table.times[0]
    x = np.asarray(table.x_grid, dtype=np.float64)
    n_x = x.size

    time_scales, time_medians = [], []
    xi_bnd = 0.0
    incs = {}
    for jlev in range(m):
        step = 1 << jlev
        h = span * step / (n_t - 1)
        mags = []
        for i in range(0, n_t - step):
            inc = table.increment(i, i + step)
            mag = np.sqrt(np.sum(np.asarray(inc) ** 2, axis=-1))
            mags.append(mag)
            incs[(i, i + step)] = inc
        mags = np.concatenate(mags)
        time_scales.append(h)
        time_medians.append(np.median(mags))
        xi_bnd = max(xi_bnd, float(mags.max()) / h**alpha)
    alpha_fit, r2_time = _loglog_fit(time_scales, time_medians)

    # Spatial separations: dyadic multiples of the base x spacing.
    seps, space_medians = [], []
    xi_lip = 0.0
    scale_ref = max(float(np.median(np.abs(np.concatenate([
        np.sqrt(np.sum(np.asarray(v) ** 2, axis=-1)) for v in incs.values()
    ])))), 0.0)
    flat_floor = 1e-12 * max(scale_ref, 1e-30)
    max_side = 1
    while max_side * 2 < n_x:
        max_side *= 2
    k = 1
    while k <= max_side:
        diffs = []
        for (i, j), inc in incs.items():
            d = np.asarray(inc)[k:] - np.asarray(inc)[:-k]
            dd = np.sqrt(np.sum(d**2, axis=-1))
            diffs.append(dd)
            h = table.times[j] - table.times[i]
            dx = np.abs(x[k:] - x[:-k])
            with np.errstate(divide="ignore", invalid="ignore"):
                r = dd / (dx ** (1.0 - eps) * h**alpha)
            if r.size:
                xi_lip = max(xi_lip, float(np.nanmax(r)))
        alld = np.concatenate(diffs)
        seps.append(float(np.abs(x[k] - x[0])))
        space_medians.append(float(np.median(alld)))
        k *= 2
    spatially_flat = max(space_medians, default=0.0) <= flat_floor
    # A separation can be degenerate (e.g. coincidental cancellation at one
    # lag) without the table being flat; keep only informative scales.
    keep = [i for i, v in enumerate(space_medians) if v > flat_floor]
    seps = [seps[i] for i in keep]
    space_medians = [space_medians[i] for i in keep]
    if spatially_flat or len(seps) < 2:
        space_fit, r2_space = None, None
    else:
        space_fit, r2_space = _loglog_fit(seps, space_medians)

    xi = max(xi_bnd, 0.0 if spatially_flat else xi_lip)
    passed = bool(
        np.isfinite(xi)
        and r2_time >= 0.95
        and (spatially_flat or r2_space >= 0.95)
        and len(time_scales) >= min_scales
        and (spatially_flat or len(seps) >= min_scales)
    )
    return HolderReport(
        alpha_req=alpha,
        eps_req=eps,
        alpha_fit=alpha_fit,
        space_fit=space_fit,
        r2_time=r2_time,
        r2_space=r2_space,
        xi=xi,
        xi_bounded=xi_bnd,
        xi_lipschitz=xi_lip,
        n_time_scales=len(time_scales),
        n_separations=len(seps),
        spatially_flat=spatially_flat,
        passed=passed,
    )


@dataclass(frozen=True)
class RegularizingReport:
    """Empirical certificate for the variation-offset averaging bound."""

    xi: float
    alpha: float
    eps: float
    n_offsets: int
    n_pairs: int
    zero_defect_max: float
    per_offset_xi: tuple
    passed: bool


def _staircase(rng, times, lo, hi, n_jumps):
    levels = rng.uniform(lo, hi, n_jumps + 1)
    jump_idx = np.sort(rng.choice(np.arange(1, times.size - 1), n_jumps, replace=False))
    psi = np.empty_like(times)
    start = 0
    for lev, j in zip(levels[:-1], jump_idx):
        psi[start:j] = lev
        start = j
    psi[start:] = levels[-1]
    return psi


def _piecewise_linear(rng, times, lo, hi, n_knots):
    kt = np.sort(rng.choice(np.arange(1, times.size - 1), n_knots, replace=False))
    knots = np.concatenate([[0], kt, [times.size - 1]])
    vals = rng.uniform(lo, hi, knots.size)
    return np.interp(np.arange(times.size), knots, vals)


def default_offset_family(times, lo, hi, seed=0, n_each=3):
    """Seeded staircases and piecewise-linear offsets with values in [lo, hi]."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xA11], dtype=np.uint64)))
    fam = []
    for k, n_jumps in zip(range(n_each), (1, 3, 7)):
        fam.append(("staircase", _staircase(rng, times, lo, hi, n_jumps)))
    for k in range(n_each):
        fam.append(("pwl", _piecewise_linear(rng, times, lo, hi, 4 + 2 * k)))
    return fam


def regularizing_certificate(
    f: DriftField,
    path: BrownianPath,
    box: tuple,
    eps: float,
    alpha: float,
    psi_family=None,
    pair_level: int = 6,
    seed: int = 0,
) -> RegularizingReport:
    """Smallest empirical Xi for the moving-offset averaging bound.

    For each offset function psi (piecewise constant or linear, values inside
    ``box``) and each dyadic pair s < t, compares

        |integral over [s,t] of f(r, W_r + psi_r) - f(r, W_r + psi_s) dr|

    against [psi]_var^(1-eps) (t-s)^alpha, where [psi]_var is the total
    variation of psi on [s, t].  Pairs with zero variation must have zero
    integral up to quadrature rounding; their worst defect is reported
    separately.
    """
    lo, hi = float(box[0]), float(box[1])
    if f.d != 1:
        raise AveragingError("certificate is implemented for d = 1")
    times = path.times()
    if psi_family is None:
        psi_family = default_offset_family(times, lo, hi, seed=seed)
    w = path.values[:, 0]
    h = path.grid.spacing
    stride = 1 << (path.level - pair_level)
    nodes = np.arange(0, times.size, stride)
    xi = 0.0
    zero_defect = 0.0
    per_offset = []
    n_pairs = 0
    for name, psi in psi_family:
        psi = np.asarray(psi, dtype=np.float64)
        if psi.shape != times.shape:
            raise AveragingError("offset must be sampled on the path grid")
        if psi.min() < lo - 1e-12 or psi.max() > hi + 1e-12:
            raise DomainError(f"offset '{name}' leaves the box [{lo}, {hi}]")
        gv = f.fn(times, (w + psi)[:, None])[:, 0]
        g_cum = np.concatenate([[0.0], np.cumsum(0.5 * (gv[:-1] + gv[1:]) * h)])
        var_cum = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(psi)))])
        # Frozen-offset cumulative per distinct start value psi_s.
        start_vals = {}
        for i in nodes[:-1]:
            c = psi[i]
            if c not in start_vals:
                fv = f.fn(times, (w + c)[:, None])[:, 0]
                start_vals[c] = np.concatenate(
                    [[0.0], np.cumsum(0.5 * (fv[:-1] + fv[1:]) * h)]
                )
        xi_here = 0.0
        for a_pos, i in enumerate(nodes[:-1]):
            frozen = start_vals[psi[i]]
            for j in nodes[a_pos + 1 :]:
                moving = g_cum[j] - g_cum[i]
                fixed = frozen[j] - frozen[i]
                amount = abs(moving - fixed)
                var = var_cum[j] - var_cum[i]
                dt = times[j] - times[i]
                n_pairs += 1
                if var <= 0:
                    zero_defect = max(zero_defect, amount)
                else:
                    xi_here = max(xi_here, amount / (var ** (1.0 - eps) * dt**alpha))
        per_offset.append(xi_here)
        xi = max(xi, xi_here)
    return RegularizingReport(
        xi=xi,
        alpha=alpha,
        eps=eps,
        n_offsets=len(psi_family),
        n_pairs=n_pairs,
        zero_defect_max=zero_defect,
        per_offset_xi=tuple(per_offset),
        passed=bool(np.isfinite(xi)),
    )
