"""Monte Carlo verification of moment estimates against quadrature oracles,
running-max amplification checks, stability experiments, and the
regularization-by-noise demonstration.

Every Monte Carlo estimate ships with a standard error; slope fits are
weighted least squares in the per-cell log standard errors.  Quadrature
oracles are deterministic and report a resolution-based error estimate, so
agreement criteria can separate statistics from bias.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gammaln, ndtr

from .fields import DriftField, bessel_lqp_norm, field_difference, lqp_norm, make_drift
from .flow import build_flow, solve_em, uniqueness_certificate
from .paths import derive_path_seed, generate_path, refine
from .sewing import power_control, solve_nonlinear_young

__all__ = [
    "VerifyError",
    "MomentReport",
    "JnReport",
    "StabilityReport",
    "SummabilityReport",
    "RegularizationReport",
    "exponent_set_ok",
    "stability_condition",
    "oracle_first_moment",
    "oracle_second_moment",
    "running_max_moment_oracle",
    "mc_gradient_moment",
    "mc_krylov_moment",
    "mc_difference_moment",
    "jn_amplification",
    "stability_experiment",
    "summable_check",
    "regularization_demo",
]

# Moment functionals refine each driver this many extra dyadic levels before
# quadrature, pushing trapezoid bias below the Monte Carlo resolution.
QUAD_REFINE = 2

COST_CAP = 1 << 31  # multiply-adds in one deterministic quadrature pass

DEFAULT_WINDOWS = tuple(2.0**-k for k in range(10, 2, -1))


class VerifyError(Exception):
    """Invalid experiment specification or precondition."""


def exponent_set_ok(p: float, q: float, d: int) -> bool:
    """Membership in the admissible exponent set: p, q > 2 and 2/q + d/p < 1."""
    return p > 2 and q > 2 and (2.0 / q + d / p) < 1.0


def _require_exponents(f: DriftField):
    if not exponent_set_ok(f.p, f.q, f.d):
        raise VerifyError(
            f"(p, q) = ({f.p:g}, {f.q:g}) with d = {f.d} violates 2/q + d/p < 1"
        )


def stability_condition(p: float, q: float, nu: float, d: int) -> str:
    """Which admissibility branch the parameters satisfy, or a refusal.

    Branch one: nu in [0, 1 - 2/q) together with d/p + 2/q + nu < 2.
    Branch two: nu in [1 - 2/q, 1] together with d/p + 4/q < 3 - 2 nu
    and d/p < nu.  The raised message names the violated inequality.
    """
    if not exponent_set_ok(p, q, d):
        raise VerifyError(f"2/q + d/p = {2 / q + d / p:g} is not < 1")
    if 0 <= nu < 1 - 2.0 / q:
        if d / p + 2.0 / q + nu < 2:
            return "branch-1"
        raise VerifyError(f"d/p + 2/q + nu = {d / p + 2 / q + nu:g} is not < 2")
    if 1 - 2.0 / q <= nu <= 1:
        if not (d / p + 4.0 / q < 3 - 2 * nu):
            raise VerifyError(
                f"d/p + 4/q = {d / p + 4 / q:g} is not < 3 - 2 nu = {3 - 2 * nu:g}"
            )
        if not (d / p < nu):
            raise VerifyError(f"d/p = {d / p:g} is not < nu = {nu:g}")
        return "branch-2"
    raise VerifyError(f"nu = {nu:g} is outside [0, 1]")


# --- deterministic oracles --------------------------------------------------


def _heat_density(r, y):
    return np.exp(-(y**2) / (2.0 * r)) / np.sqrt(2.0 * np.pi * r)


_GH_FULL = np.polynomial.hermite_e.hermegauss(40)
_GH_HALF = np.polynomial.hermite_e.hermegauss(20)
_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _gh_mean(f: DriftField, r: float, rule) -> float:
    # E f(r, W_r) with the kernel integrated exactly in the rescaled
    # variable; valid while the node span stays inside f's smooth scale.
    z, wz = rule
    vals = f.fn(np.full(z.size, r), (np.sqrt(r) * z)[:, None])[:, 0]
    return float(np.dot(wz, vals) / _SQRT_2PI)


def _feature_scale(f: DriftField):
    """Center and half-width of the sharpest spatial feature of a field.

    Keys off the stored width/center parameters rather than the kind
    string, so scaled or renamed wrappers around a bump keep its
    quadrature geometry.
    """
    if "width" in f.params:
        center = float(np.atleast_1d(f.params.get("center", 0.0))[0])
        return center, 8.0 * float(f.params["width"])
    if f.support_radius is not None:
        return 0.0, 1.25 * float(f.support_radius)
    return 0.0, 10.0


def _geometric_panels(lo: float, hi: float, n_panels: int, gl_nodes: int):
    """Nodes and weights refining geometrically toward the left endpoint."""
    fracs = 2.0 ** -np.arange(n_panels, dtype=np.float64)
    edges = lo + (hi - lo) * np.concatenate([[0.0], fracs[::-1]])
    ref_x, ref_w = np.polynomial.legendre.leggauss(gl_nodes)
    a, b = edges[:-1], edges[1:]
    nodes = 0.5 * (b - a)[:, None] * ref_x[None, :] + 0.5 * (a + b)[:, None]
    weights = 0.5 * (b - a)[:, None] * ref_w[None, :]
    return nodes.ravel(), weights.ravel()


def oracle_first_moment(
    f: DriftField,
    s: float,
    t: float,
    n_panels: int = 36,
    gl_nodes: int = 10,
    box: Optional[float] = None,
) -> tuple:
    """Expected time average of a field along the heat flow, by quadrature.

    Integrates E f(r, W_r) over [s, t] with geometric time panels toward s
    (resolving the small-time heat scale) and adaptive space quadrature
    hinted at the field's features.  Returns (value, error estimate); the
    estimate combines a reduced-order comparison with the accumulated
    space-quadrature error.
    """
    if f.d != 1 or f.d_out != 1:
        raise VerifyError("first-moment quadrature is one-dimensional")
    if t <= s:
        raise VerifyError("need s < t")
    center, half_width = _feature_scale(f)
    if box is not None:
        center, half_width = 0.0, float(box)

    def space_mean(r: float) -> tuple:
        scale = np.sqrt(r)
        if 20.0 * scale < half_width:
            # Heat kernel far narrower than any feature of f: integrate in
            # the rescaled variable, where the kernel is handled exactly.
            v1 = _gh_mean(f, r, _GH_FULL)
            v2 = _gh_mean(f, r, _GH_HALF)
            return v1, abs(v1 - v2)
        lo = min(center - half_width, -8.0 * scale)
        hi = max(center + half_width, 8.0 * scale)
        hints = [center - half_width, center, center + half_width,
                 -4.0 * scale, 0.0, 4.0 * scale]
        pts = sorted({h for h in hints if lo < h < hi})
        val, abserr, *_ = sp_integrate.quad(
            lambda y: float(f(r, y)[0]) * float(_heat_density(r, y)),
            lo, hi, points=pts, limit=300,
            epsabs=1e-13, epsrel=1e-10, full_output=1,
        )
        if not np.isfinite(val):
            raise VerifyError(f"space integral is not finite at r = {r:g}")
        return float(val), float(abserr)

    def time_integral(gl_n: int) -> tuple:
        rr, ww = _geometric_panels(s, t, n_panels, gl_n)
        total, acc = 0.0, 0.0
        for r, w in zip(rr, ww):
            v, e = space_mean(float(r))
            total += w * v
            acc += abs(w) * e
        return total, acc

    full, err_full = time_integral(gl_nodes)
    half, _ = time_integral(max(gl_nodes // 2, 3))
    return full, abs(full - half) + err_full + 1e-14


def _second_moment_grid(
    grad: Callable,
    s: float,
    t: float,
    n_panels: int,
    gl_nodes: int,
    n_space: int,
    center: float,
    half_width: float,
):
    # E of the squared time average of g(r, W_r) over s < r < t, as twice
    # the ordered double integral of E[g(r2, W_r2) g(r1, W_r1)].  Time
    # integrals refine geometrically toward r2 = s and toward the diagonal
    # r1 = r2.  Each space axis picks its rule by kernel width: a heat
    # kernel wider than the grid spacing is evaluated on the field's
    # feature box (Gauss-Legendre), a narrower one is integrated in its
    # own rescaled variable (Gauss-Hermite, kernel exact), so accuracy is
    # uniform down the time panels.
    gl_x, gw_x = np.polynomial.legendre.leggauss(n_space)
    yy = center + half_width * gl_x
    wy = half_width * gw_x
    d2 = (yy[None, :] - yy[:, None]) ** 2
    u, uw = _GH_FULL
    uw = uw / _SQRT_2PI
    cross = 5.0 * half_width / n_space  # narrowest kernel the grid resolves
    r2_nodes, r2_w = _geometric_panels(s, t, n_panels, gl_nodes)
    total = 0.0
    for r2, w2 in zip(r2_nodes, r2_w):
        tau, tau_w = _geometric_panels(0.0, t - r2, n_panels, gl_nodes)
        narrow = np.sqrt(tau) < cross
        vals = np.empty(tau.size)
        if np.sqrt(r2) >= cross:
            base = yy
            row = wy * grad(np.full(n_space, r2), yy) * _heat_density(r2, yy)
        else:
            base = np.sqrt(r2) * u
            row = uw * grad(np.full(u.size, r2), base)
        if np.any(~narrow):
            tw = tau[~narrow]
            dd = d2 if base is yy else (yy[None, :] - base[:, None]) ** 2
            kern = np.exp(-dd[None, :, :] / (2.0 * tw[:, None, None]))
            kern /= np.sqrt(2.0 * np.pi * tw)[:, None, None]
            g1 = grad(
                np.repeat(r2 + tw, n_space), np.tile(yy, tw.size)
            ).reshape(tw.size, n_space)
            vals[~narrow] = np.einsum("a,kab,kb->k", row, kern, g1 * wy[None, :])
        if np.any(narrow):
            tn = tau[narrow]
            pts = base[None, :, None] + np.sqrt(tn)[:, None, None] * u[None, None, :]
            rr = np.broadcast_to((r2 + tn)[:, None, None], pts.shape)
            g1 = grad(rr.ravel(), pts.ravel()).reshape(pts.shape)
            vals[narrow] = (g1 @ uw) @ row
        total += w2 * float(np.dot(tau_w, vals))
    return 2.0 * total


def oracle_second_moment(
    f: DriftField,
    s: float,
    t: float,
    n_panels: int = 16,
    gl_nodes: int = 24,
    n_space: int = 64,
    box: Optional[float] = None,
    mc_mode: bool = False,
    n_mc: int = 200_000,
    seed: int = 0,
) -> tuple:
    """Second moment of the time-averaged gradient along the heat flow.

    Deterministic nested quadrature in d = 1 returning (value, error
    estimate) from a reduced-resolution comparison.  ``mc_mode`` switches
    to Monte Carlo quadrature in any dimension and returns (value,
    standard error) instead.
    """
    if t <= s:
        raise VerifyError("need s < t")
    if not f.smooth or f.gradient_fn is None:
        raise VerifyError("second-moment quadrature needs a smooth field with a gradient")
    if mc_mode:
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, 0x2D], dtype=np.uint64))
        )
        ra = rng.uniform(s, t, n_mc)
        rb = rng.uniform(s, t, n_mc)
        lo, hi = np.minimum(ra, rb), np.maximum(ra, rb)
        y = rng.standard_normal((n_mc, f.d)) * np.sqrt(lo)[:, None]
        z = y + rng.standard_normal((n_mc, f.d)) * np.sqrt(hi - lo)[:, None]
        prod = np.sum(f.gradient(lo, y) * f.gradient(hi, z), axis=-1)
        vals = (t - s) ** 2 * prod
        return float(np.mean(vals)), float(np.std(vals) / np.sqrt(n_mc))
    if f.d != 1:
        raise VerifyError("deterministic quadrature is one-dimensional; use mc_mode=True")
    if (n_panels * gl_nodes) ** 2 * n_space**2 > COST_CAP:
        raise VerifyError(
            "quadrature grid exceeds the cost cap; use mc_mode=True for a "
            "Monte Carlo value with a reported standard error"
        )
    center, half_width = _feature_scale(f)
    if box is not None:
        center, half_width = 0.0, float(box)

    def grad(rr, yy):
        return f.gradient(rr, yy[:, None])[:, 0]

    full = _second_moment_grid(
        grad, s, t, n_panels, gl_nodes, n_space, center, half_width
    )
    half = _second_moment_grid(
        grad, s, t, max(n_panels // 2, 8), max(gl_nodes // 2, 6),
        max(n_space // 2, 24), center, half_width,
    )
    return full, abs(full - half) + 1e-14


def running_max_moment_oracle(m: float, n_grid: int = 4001, a_max: float = 8.0) -> float:
    """m-th root moment of the running maximum of |B| on [0, 1].

    Uses the reflection-principle series P(sup |B| <= a) = sum over k in Z
    of (-1)^k [Phi((2k+1)a) - Phi((2k-1)a)], integrating the survival
    function for the moment.
    """
    if m < 1:
        raise VerifyError("moment order must be at least one")
    a = np.linspace(0.0, a_max, n_grid)
    cdf = np.zeros_like(a)
    for k in range(0, 80):
        term = (-1.0) ** k * (ndtr((2 * k + 1) * a) - ndtr((2 * k - 1) * a))
        cdf += term if k == 0 else 2.0 * term
        if k > 2 and np.max(np.abs(term)) < 1e-17:
            break
    survival = np.clip(1.0 - cdf, 0.0, 1.0)
    moment = float(np.trapezoid(m * a ** (m - 1.0) * survival, a))
    return moment ** (1.0 / m)


# --- Monte Carlo moment experiments ----------------------------------------


@dataclass(frozen=True)
class MomentReport:
    """Root moments over interval lengths with weighted slope fits.

    ``slopes`` are raw log-log fits of the root moments against the
    interval length h.  The bounds being checked carry the L^q-in-time
    norm of the field restricted to the interval, which contributes a
    factor h^(1/q) on the right-hand side; ``norm_slopes`` subtract that
    1/q so they compare directly against ``theoretical_exponent``.
    """

    kind: str
    m_orders: tuple
    windows: tuple
    root_moments: np.ndarray  # (n_m, n_windows)
    root_se: np.ndarray
    slopes: tuple
    slope_se: tuple
    weighted_slope: float
    norm_slopes: tuple  # slopes minus 1/q (window-restricted norm factor)
    norm_weighted_slope: float
    theoretical_exponent: float
    gamma_ratios: tuple  # widest-window root moment over the Gamma envelope
    n_paths: int
    p: float
    q: float
    d: int
    space_slope: Optional[float] = None
    space_points: tuple = ()
    space_root_moments: tuple = ()  # m_orders[0] root moment per separation
    space_root_se: tuple = ()
    warnings: tuple = ()


def _wls_slope(x, y, se_log):
    w = 1.0 / np.maximum(np.asarray(se_log, dtype=np.float64), 1e-12) ** 2
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    return slope, float(1.0 / np.sqrt(sxx))


def _ensemble_functional(
    integrand: Callable,
    n_paths: int,
    master_seed: int,
    level: int,
    windows: Sequence[float],
    quad_refine: int = QUAD_REFINE,
    d: int = 1,
    n_values: int = 1,
):
    """Trapezoid window integrals of a function of (r, W_r), per path.

    ``integrand(times, values)`` maps refined driver nodes to (n_nodes,)
    or (n_nodes, n_values); returns (n_paths, n_windows, n_values) of
    integrals over [0, h] for each window h.  Windows must be grid times
    of the refined level.
    """
    windows = np.asarray(windows, dtype=np.float64)
    out = np.empty((n_paths, windows.size, n_values))
    idx = None
    for i in range(n_paths):
        path = generate_path(derive_path_seed(master_seed, i), 1.0, level, d=d)
        if quad_refine:
            path = refine(path, quad_refine)
        if idx is None:
            idx = np.array([path.grid.index_of(h) for h in windows])
        vals = np.asarray(integrand(path.times(), path.values))
        if vals.ndim == 1:
            vals = vals[:, None]
        cells = 0.5 * (vals[:-1] + vals[1:]) * path.grid.spacing
        cum = np.concatenate([np.zeros((1, n_values)), np.cumsum(cells, axis=0)])
        out[i] = cum[idx]
    return out


def _moment_table(samples: np.ndarray, m_orders):
    # samples: (n_paths, n_windows) of |V|; root moments with delta-method SE
    n_paths = samples.shape[0]
    roots = np.empty((len(m_orders), samples.shape[1]))
    ses = np.empty_like(roots)
    for a, m in enumerate(m_orders):
        powm = samples ** float(m)
        mu = powm.mean(axis=0)
        se_mu = powm.std(axis=0) / np.sqrt(n_paths)
        zero = mu <= 0.0
        mu_safe = np.where(zero, 1.0, mu)
        roots[a] = np.where(zero, 0.0, mu_safe ** (1.0 / m))
        ses[a] = np.where(zero, 0.0, se_mu * roots[a] / (m * mu_safe))
    return roots, ses


def _gamma_envelope_root(m: float, rate: float) -> float:
    return float(np.exp(gammaln(m * rate + 1.0) / m))


def _kurtosis_warning(samples: np.ndarray, m, n_paths: int):
    sd = samples.std()
    if sd == 0:
        return None
    kurt = float(np.mean(((samples - samples.mean()) / sd) ** 4) - 3.0)
    if kurt / n_paths > 0.05:
        return f"ensemble may be too small for m = {m} (excess kurtosis {kurt:.1f})"
    return None


def _moment_report(
    kind, samples, m_orders, windows, theo, n_paths, p, q, d,
    gamma_rate, space_slope=None, space_points=(),
    space_root_moments=(), space_root_se=(),
):
    roots, ses = _moment_table(samples, m_orders)
    logw = np.log(np.asarray(windows, dtype=np.float64))
    slopes, slope_ses = [], []
    for a in range(len(m_orders)):
        if np.any(roots[a] <= 0.0):
            slopes.append(float("nan"))
            slope_ses.append(float("inf"))
            continue
        sl, sse = _wls_slope(logw, np.log(roots[a]), ses[a] / roots[a])
        slopes.append(sl)
        slope_ses.append(sse)
    inv_var = np.array([1.0 / s**2 if np.isfinite(s) else 0.0 for s in slope_ses])
    if inv_var.sum() > 0:
        weighted = float(
            np.sum(np.where(inv_var > 0, np.nan_to_num(slopes) * inv_var, 0.0))
            / inv_var.sum()
        )
    else:
        weighted = float("nan")
    gamma_ratios = tuple(
        float(roots[a, -1] / _gamma_envelope_root(m, gamma_rate))
        for a, m in enumerate(m_orders)
    )
    warns = []
    for a, m in enumerate(m_orders):
        w = _kurtosis_warning(samples[:, -1] ** float(m), m, n_paths)
        if w:
            warns.append(w)
    return MomentReport(
        kind=kind,
        m_orders=tuple(m_orders),
        windows=tuple(float(w) for w in windows),
        root_moments=roots,
        root_se=ses,
        slopes=tuple(slopes),
        slope_se=tuple(slope_ses),
        weighted_slope=weighted,
        norm_slopes=tuple(s - 1.0 / q for s in slopes),
        norm_weighted_slope=weighted - 1.0 / q,
        theoretical_exponent=float(theo),
        gamma_ratios=gamma_ratios,
        n_paths=int(n_paths),
        p=float(p),
        q=float(q),
        d=int(d),
        space_slope=space_slope,
        space_points=space_points,
        space_root_moments=space_root_moments,
        space_root_se=space_root_se,
        warnings=tuple(warns),
    )


def mc_gradient_moment(
    f: DriftField,
    m_orders: Sequence[int] = (1, 2),
    n_paths: int = 2000,
    windows: Sequence[float] = DEFAULT_WINDOWS,
    master_seed: int = 101,
    level: int = 12,
    quad_refine: int = QUAD_REFINE,
    x0: float = 0.0,
) -> MomentReport:
    """Moments of the averaged spatial gradient along Brownian paths.

    The root-moment slope in the window length targets
    1/2 - 1/q - d/(2 p); the Gamma-envelope rate per moment order is
    1/2 + d/(2 p).
    """
    _require_exponents(f)
    if not f.smooth or f.gradient_fn is None:
        raise VerifyError("gradient moments need a smooth field with a gradient")

    def integrand(tt, ww):
        return f.gradient(tt, x0 + ww)[:, 0]

    vals = _ensemble_functional(
        integrand, n_paths, master_seed, level, windows, quad_refine, d=f.d
    )
    theo = 0.5 - 1.0 / f.q - f.d / (2.0 * f.p)
    return _moment_report(
        "gradient", np.abs(vals[:, :, 0]), tuple(m_orders), windows, theo,
        n_paths, f.p, f.q, f.d, gamma_rate=0.5 + f.d / (2.0 * f.p),
    )


def mc_krylov_moment(
    f: DriftField,
    m_orders: Sequence[int] = (1, 2),
    n_paths: int = 2000,
    windows: Sequence[float] = DEFAULT_WINDOWS,
    master_seed: int = 2,
    level: int = 12,
    quad_refine: int = QUAD_REFINE,
    x0: float = 0.0,
) -> MomentReport:
    """Moments of the time average of a nonnegative field along paths.

    The per-root slope in the window length targets 1 - d/p - 2/q.
    """
    _require_exponents(f)
    if f.d == 1:
        probe = f.fn(np.full(41, 0.5), np.linspace(-3.0, 3.0, 41)[:, None])
        if np.any(probe < -1e-12):
            raise VerifyError("krylov moments need a nonnegative field")

    def integrand(tt, ww):
        return f.fn(tt, x0 + ww)[:, 0]

    vals = _ensemble_functional(
        integrand, n_paths, master_seed, level, windows, quad_refine, d=f.d
    )
    theo = 1.0 - f.d / f.p - 2.0 / f.q
    return _moment_report(
        "krylov", np.abs(vals[:, :, 0]), tuple(m_orders), windows, theo,
        n_paths, f.p, f.q, f.d, gamma_rate=1.0,
    )


def mc_difference_moment(
    f: DriftField,
    x,
    y_points: Sequence[float],
    m_orders: Sequence[int] = (1, 2),
    n_paths: int = 2000,
    windows: Sequence[float] = tuple(2.0**-k for k in range(8, 2, -1)),
    master_seed: int = 3,
    level: int = 12,
    quad_refine: int = QUAD_REFINE,
) -> MomentReport:
    """Moments of averaged differences f(r, x + W) - f(r, y + W).

    ``x`` is a single base point or a sequence paired with ``y_points``
    (pairs straddling a symmetry point of f isolate the fluctuation part
    of the difference, which is what scales linearly in the separation).
    Time statistics come from the farthest pair; the space slope fits the
    first-order root moment against |x - y| at the widest window, with
    target one for Lipschitz-like averaging.
    """
    _require_exponents(f)
    y_arr = np.atleast_1d(np.asarray(y_points, dtype=np.float64))
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x_arr.size == 1:
        x_arr = np.full(y_arr.size, x_arr[0])
    elif x_arr.size != y_arr.size:
        raise VerifyError("x must be a scalar or match y_points in length")

    def integrand(tt, ww):
        return np.stack(
            [
                f.fn(tt, float(yv) + ww)[:, 0] - f.fn(tt, float(xv) + ww)[:, 0]
                for xv, yv in zip(x_arr, y_arr)
            ],
            axis=1,
        )

    vals = _ensemble_functional(
        integrand, n_paths, master_seed, level, windows, quad_refine,
        d=f.d, n_values=y_arr.size,
    )
    seps = np.abs(y_arr - x_arr)
    far = int(np.argmax(seps))
    theo = 0.5 - 1.0 / f.q - f.d / (2.0 * f.p)
    space_slope = None
    space_points = ()
    space_roots = ()
    space_ses = ()
    pos = np.where(seps > 0)[0]
    if pos.size >= 2:
        roots_w = np.empty(pos.size)
        ses_w = np.empty(pos.size)
        for k, j in enumerate(pos):
            r, se = _moment_table(np.abs(vals[:, -1:, j]), (m_orders[0],))
            roots_w[k], ses_w[k] = r[0, 0], se[0, 0]
        if np.all(roots_w > 0):
            space_slope, _ = _wls_slope(
                np.log(seps[pos]), np.log(roots_w), ses_w / roots_w
            )
        space_points = tuple(float(v) for v in seps[pos])
        space_roots = tuple(float(v) for v in roots_w)
        space_ses = tuple(float(v) for v in ses_w)
    return _moment_report(
        "difference", np.abs(vals[:, :, far]), tuple(m_orders), windows, theo,
        n_paths, f.p, f.q, f.d, gamma_rate=0.5 + f.d / (2.0 * f.p),
        space_slope=space_slope, space_points=space_points,
        space_root_moments=space_roots, space_root_se=space_ses,
    )


# --- running-max amplification ---------------------------------------------


@dataclass(frozen=True)
class JnReport:
    """Running-max root moments against the Gamma-growth envelope."""

    process: str
    alpha: float
    m_orders: tuple
    root_moments: tuple
    root_se: tuple
    envelope_roots: tuple
    ratios: tuple
    fitted_c: float
    ratio_spread: float
    hypothesis_note: str
    n_paths: int
    level: int


def jn_amplification(
    process: dict,
    alpha: float = 0.5,
    m_orders: Sequence[int] = tuple(range(2, 11)),
    n_paths: int = 1000,
    master_seed: int = 4,
    level: int = 12,
    quad_refine: int = QUAD_REFINE,
) -> JnReport:
    """Moment growth of running maxima against Gamma(m (1 - alpha) + 1).

    Catalog process specs: {"kind": "bm"}, {"kind": "scaled-bm", "lam": c}
    (the same driver streams scaled by c, so moment homogeneity is exact
    on shared seeds), and {"kind": "gradient-average", "field": f,
    "x0": x}.  For Brownian motion the conditional-increment hypothesis
    holds in closed form; for averaged processes only the conclusion is
    checked.  ``fitted_c`` is the largest ratio of a root moment to its
    envelope root; a spread near one means the envelope shape matches.
    """
    kind = process.get("kind")
    lam = 1.0
    integrand = None
    if kind == "bm":
        note = "conditional increments: E_s|W_t - W_s| = sqrt(2(t-s)/pi) <= (t-s)^0.5"
    elif kind == "scaled-bm":
        lam = float(process["lam"])
        note = "scaled driver; moment homogeneity exact on shared seeds"
    elif kind == "gradient-average":
        f = process["field"]
        x0 = float(process.get("x0", 0.0))
        if not f.smooth or f.gradient_fn is None:
            raise VerifyError("gradient-average process needs a smooth field")
        note = "conclusion-only check for an averaged process"

        def integrand(tt, ww):
            return f.gradient(tt, x0 + ww)[:, 0]

    else:
        raise VerifyError(f"process spec {kind!r} is not in the catalog")

    sups = np.empty(n_paths)
    for i in range(n_paths):
        path = generate_path(derive_path_seed(master_seed, i), 1.0, level)
        if quad_refine:
            path = refine(path, quad_refine)
        if integrand is None:
            v = lam * path.values[:, 0]
        else:
            vals = integrand(path.times(), path.values)
            cells = 0.5 * (vals[:-1] + vals[1:]) * path.grid.spacing
            v = np.concatenate([[0.0], np.cumsum(cells)])
        sups[i] = float(np.max(np.abs(v - v[0])))
    roots, ses, env, ratios = [], [], [], []
    for m in m_orders:
        powm = sups ** float(m)
        mu = float(powm.mean())
        root = mu ** (1.0 / m)
        roots.append(root)
        se = float(powm.std() / np.sqrt(n_paths)) * root / (m * mu) if mu > 0 else 0.0
        ses.append(se)
        env.append(_gamma_envelope_root(m, 1.0 - alpha))
        ratios.append(root / env[-1])
    arr = np.asarray(ratios)
    spread = float(arr.max() / arr.min()) if arr.min() > 0 else 1.0
    return JnReport(
        process=str(kind),
        alpha=float(alpha),
        m_orders=tuple(int(m) for m in m_orders),
        root_moments=tuple(roots),
        root_se=tuple(ses),
        envelope_roots=tuple(env),
        ratios=tuple(ratios),
        fitted_c=float(arr.max()),
        ratio_spread=spread,
        hypothesis_note=note,
        n_paths=int(n_paths),
        level=int(level + quad_refine),
    )


# --- summability and stability ---------------------------------------------


@dataclass(frozen=True)
class SummabilityReport:
    """Partial sums and geometric-tail extrapolation per exponent."""

    etas: tuple
    partial_sums: tuple
    tails: tuple
    verdicts: tuple  # "summable (extrapolated)" or "inconclusive"


def _line_fit_rms(x, y):
    coef = np.polyfit(x, y, 1)
    return float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))


def summable_check(sequence, etas=(1.0,), tail_window: int = 4) -> SummabilityReport:
    """Summability verdicts that never claim divergence from finite data.

    A tail is extrapolated only when it looks geometric: the recent
    eta-powered ratios stay below a strict bound and log-value fits a
    line in the index clearly better than in the log index.  The second
    test keeps slowly-decaying sequences (whose local ratios also dip
    below one) at "inconclusive".
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.size < 2:
        raise VerifyError("need at least two terms")
    if np.any(seq < 0) or not np.all(np.isfinite(seq)):
        raise VerifyError("summability checks need finite nonnegative terms")
    partials, tails, verdicts = [], [], []
    for eta in etas:
        powed = seq ** float(eta)
        partial = float(np.sum(powed))
        tail = float("inf")
        verdict = "inconclusive"
        recent = powed[-(tail_window + 1):]
        if np.all(recent == 0.0):
            tail, verdict = 0.0, "summable (extrapolated)"
        elif recent.size >= 3 and np.all(recent > 0):
            r = float(np.max(recent[1:] / recent[:-1]))
            pos = np.arange(seq.size - recent.size, seq.size, dtype=np.float64)
            ly = np.log(recent)
            rms_geom = _line_fit_rms(pos, ly)
            rms_power = _line_fit_rms(np.log(pos + 1.0), ly)
            if r < 0.95 and rms_geom <= 0.5 * rms_power + 1e-12:
                tail = float(powed[-1] * r / (1.0 - r))
                verdict = "summable (extrapolated)"
        partials.append(partial)
        tails.append(tail)
        verdicts.append(verdict)
    return SummabilityReport(
        etas=tuple(float(e) for e in etas),
        partial_sums=tuple(partials),
        tails=tuple(tails),
        verdicts=tuple(verdicts),
    )


@dataclass(frozen=True)
class StabilityReport:
    """Distances, flow defects, and the fitted slope for a drift family."""

    sigmas: tuple
    distances: tuple
    distances_bessel: tuple
    defect_medians: tuple
    defect_median_se: tuple  # normal-approximation SE of each median
    defects: np.ndarray  # (n_family, n_seeds)
    slope: float
    slope_se: float
    target_slope: float
    condition: str
    nu: float
    summability: Optional[SummabilityReport]
    n_seeds: int
    level: int


def stability_experiment(
    b: DriftField,
    approximations: Sequence[DriftField],
    sigmas: Sequence[float] = (),
    nu: float = 0.0,
    n_seeds: int = 16,
    master_seed: int = 5,
    level: int = 10,
    starts: Sequence[float] = (-0.75, 0.0, 0.75),
    scheme: str = "euler-maruyama",
    norm_box: float = 4.0,
    eta: float = 1.0,
) -> StabilityReport:
    """Flow distance between approximating drifts and a reference drift.

    Refuses parameters outside both admissibility branches, naming the
    violated inequality.  Every family member shares each seed's driver;
    the defect per seed is the sup over starts and grid times of the
    solution gap, the reported defect per member is the median over
    seeds, and the slope of log median defect against log mixed-norm
    distance is fitted by weighted least squares.  Bessel-smoothed
    distances of order -nu ride along for d = 1.
    """
    condition = stability_condition(b.p, b.q, nu, b.d)
    if scheme == "euler-maruyama":
        solver = solve_em
    elif scheme == "nonlinear-young":
        solver = solve_nonlinear_young
    else:
        raise VerifyError(f"unknown scheme '{scheme}'")
    starts_arr = np.asarray(starts, dtype=np.float64)[:, None]
    dists, dists_b = [], []
    for bn in approximations:
        diff = field_difference(bn, b)
        dists.append(float(lqp_norm(diff, box=norm_box).value))
        if b.d == 1:
            dists_b.append(float(bessel_lqp_norm(diff, nu, box=norm_box).value))
        else:
            dists_b.append(float("nan"))
    defects = np.empty((len(approximations), n_seeds))
    for j in range(n_seeds):
        path = generate_path(derive_path_seed(master_seed, j), 1.0, level)
        ref = solver(b, path, starts_arr)
        for i, bn in enumerate(approximations):
            defects[i, j] = float(np.max(np.abs(solver(bn, path, starts_arr).y - ref.y)))
    medians = np.median(defects, axis=1)
    # SE of a median under the normal approximation: 1.2533 sigma / sqrt(n)
    med_se = 1.2533 * defects.std(axis=1) / np.sqrt(n_seeds)
    pos = np.asarray(dists) > 0
    if int(np.sum(pos)) >= 2 and np.all(medians[pos] > 0):
        se_log = np.maximum(med_se[pos] / medians[pos], 1e-3)
        slope, slope_se = _wls_slope(
            np.log(np.asarray(dists)[pos]), np.log(medians[pos]), se_log
        )
    else:
        slope, slope_se = float("nan"), float("nan")
    return StabilityReport(
        sigmas=tuple(float(s) for s in sigmas),
        distances=tuple(dists),
        distances_bessel=tuple(dists_b),
        defect_medians=tuple(float(v) for v in medians),
        defect_median_se=tuple(float(v) for v in med_se),
        defects=defects,
        slope=float(slope),
        slope_se=float(slope_se),
        target_slope=0.5,
        condition=condition,
        nu=float(nu),
        summability=summable_check(dists, etas=(eta,)) if len(dists) >= 2 else None,
        n_seeds=int(n_seeds),
        level=int(level),
    )


# --- regularization by noise -----------------------------------------------


@dataclass(frozen=True)
class RegularizationReport:
    """Deterministic non-uniqueness next to noise-driven selection."""

    residual_zero: float
    residual_square: float
    levels: tuple
    median_discrepancy: tuple
    certificate_pass_rate: float
    n_seeds: int


def _branch_residual(b: DriftField, tt: np.ndarray, y: np.ndarray) -> float:
    vals = b.fn(tt, y[:, None])[:, 0]
    cells = 0.5 * (vals[:-1] + vals[1:]) * (tt[1] - tt[0])
    drift = np.concatenate([[0.0], np.cumsum(cells)])
    return float(np.max(np.abs(y - y[0] - drift)))


def regularization_demo(
    b: Optional[DriftField] = None,
    n_seeds: int = 16,
    levels: Sequence[int] = (10, 11, 12),
    master_seed: int = 6,
    certify: bool = False,
) -> RegularizationReport:
    """Two exact deterministic branches, then noise-driven selection.

    ``b`` defaults to the square-root branch drift from the catalog.
    Without noise it admits both y = 0 and y(t) = t^2 from the origin;
    their grid residuals vanish exactly because the drift along t^2 is
    linear in time, which the trapezoid rule integrates without error.
    With a Brownian driver, the explicit and averaged schemes from the
    same (seed, start) are compared under refinement; ``certify``
    attaches a uniqueness certificate per seed at the top level.
    """
    if b is None:
        b = make_drift("sqrt", d=1, p=4.0, q=4.0)
    top = max(levels)
    tt = np.arange((1 << top) + 1) / (1 << top)
    residual_zero = _branch_residual(b, tt, np.zeros_like(tt))
    residual_square = _branch_residual(b, tt, tt**2)

    med = []
    for level in levels:
        gaps = []
        for j in range(n_seeds):
            path = generate_path(derive_path_seed(master_seed, j), 1.0, level)
            em = solve_em(b, path, 0.0)
            ny = solve_nonlinear_young(b, path, 0.0)
            gaps.append(float(np.max(np.abs(em.y - ny.y))))
        med.append(float(np.median(gaps)))

    pass_count, cert_total = 0, 0
    if certify:
        lvl = min(max(levels), 10)
        for j in range(n_seeds):
            path = generate_path(derive_path_seed(master_seed, j), 1.0, max(levels))
            table = build_flow(
                b, path,
                np.linspace(0.0, 0.875, 8), np.linspace(-3.0, 3.0, 49),
                level=lvl, t_level=min(lvl, 8),
            )
            y_em = solve_em(b, path, 0.0, level=lvl)
            rep = uniqueness_certificate(
                y_em, table, power_control(1.0, 1.0), kappa=0.95, beta=1.2
            )
            cert_total += 1
            pass_count += int(rep.passed)
    rate = pass_count / cert_total if cert_total else float("nan")
    return RegularizationReport(
        residual_zero=residual_zero,
        residual_square=residual_square,
        levels=tuple(int(v) for v in levels),
        median_discrepancy=tuple(med),
        certificate_pass_rate=float(rate),
        n_seeds=int(n_seeds),
    )
