"""Figure builders, one drawing function per report kind.

Every plotted series comes verbatim from the report dictionary; the
only transforms applied are the log axes, the value +- 2 SE bands from
the stored standard errors, and, for moment reports, division of the
root moments by h**(1/q) so the drawn trend carries the normalized
slopes the report states (``norm_slopes`` and ``theoretical_exponent``
are slopes of the compensated quantity, a pure shift in log space).

Output must be byte-stable under re-rendering, so the PNG writer is
pinned to the Agg backend with the Software metadata suppressed and no
timestamps anywhere.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["moment_figure", "jn_figure", "stability_figure", "holder_figure"]

DPI = 110
_SINGLE = (6.4, 4.4)
_DOUBLE = (10.8, 4.4)


def _save(fig, path):
    # Software metadata defaults to a matplotlib version string; None drops
    # the key so identical figures produce identical bytes.
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)


def _geo_anchor(x, y):
    """Geometric-center anchor for slope guide lines on log-log axes."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = (x > 0) & (y > 0)
    return (
        float(np.exp(np.mean(np.log(x[keep])))),
        float(np.exp(np.mean(np.log(y[keep])))),
    )


def _guide(axes, x, slope, anchor, scale=1.0, **kwargs):
    """Draw y = scale * c * x**slope through ``anchor`` on log-log axes."""
    x = np.asarray(x, dtype=np.float64)
    span = np.array([x.min(), x.max()])
    ax_, ay_ = anchor
    axes.plot(span, scale * ay_ * (span / ax_) ** slope, **kwargs)


def moment_figure(rep, path):
    """Compensated log-log moment plot with fitted and reference slopes.

    Difference reports additionally carry per-separation root moments;
    those get a second panel with the spatial fit and a reference line
    at slope 1.
    """
    windows = np.asarray(rep["windows"], dtype=np.float64)
    roots = np.asarray(rep["root_moments"], dtype=np.float64)
    ses = np.asarray(rep["root_se"], dtype=np.float64)
    m_orders = rep["m_orders"]
    q = float(rep["q"])
    theo = float(rep["theoretical_exponent"])
    comp = windows ** (-1.0 / q)  # divides out the L^q norm factor

    spatial = (
        rep.get("space_slope") is not None
        and len(rep.get("space_root_moments", ())) >= 2
    )
    if spatial:
        fig, (ax, ax2) = plt.subplots(1, 2, figsize=_DOUBLE)
    else:
        fig, ax = plt.subplots(figsize=_SINGLE)
        ax2 = None

    anchor = None
    for a, m in enumerate(m_orders):
        line, = ax.plot(windows, roots[a] * comp, "o-", ms=4,
                        label=f"m = {m} root moment")
        ax.fill_between(windows, (roots[a] - 2 * ses[a]) * comp,
                        (roots[a] + 2 * ses[a]) * comp,
                        alpha=0.2, color=line.get_color(), lw=0)
        anchor = _geo_anchor(windows, roots[a] * comp)
        slope = rep["norm_slopes"][a]
        if np.isfinite(slope):
            _guide(ax, windows, slope, anchor, ls="--", lw=1,
                   color=line.get_color(),
                   label=f"fit m = {m}: slope {slope:.3f}")
    if anchor is not None:
        _guide(ax, windows, theo, anchor, scale=0.55, ls=":", lw=1.2,
               color="black", label=f"reference slope {theo:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("interval length h")
    ax.set_ylabel("root moment / h^(1/q)")
    ax.set_title(f"{rep['kind']} moments, {rep['n_paths']} paths")
    ax.legend(fontsize=8)

    if ax2 is not None:
        seps = np.asarray(rep["space_points"], dtype=np.float64)
        sroots = np.asarray(rep["space_root_moments"], dtype=np.float64)
        sses = np.asarray(rep["space_root_se"], dtype=np.float64)
        line, = ax2.plot(seps, sroots, "o-", ms=4,
                         label=f"m = {m_orders[0]} root moment")
        ax2.fill_between(seps, sroots - 2 * sses, sroots + 2 * sses,
                         alpha=0.2, color=line.get_color(), lw=0)
        anchor = _geo_anchor(seps, sroots)
        _guide(ax2, seps, float(rep["space_slope"]), anchor, ls="--", lw=1,
               color=line.get_color(),
               label=f"fit: slope {rep['space_slope']:.3f}")
        _guide(ax2, seps, 1.0, anchor, scale=0.55, ls=":", lw=1.2,
               color="black", label="reference slope 1")
        ax2.set_xscale("log")
        ax2.set_yscale("log")
        ax2.set_xlabel("separation |x - y|")
        ax2.set_ylabel("root moment at widest window")
        ax2.set_title("spatial factor")
        ax2.legend(fontsize=8)

    fig.tight_layout()
    _save(fig, path)


def jn_figure(rep, path):
    """Root sup-moments against the fitted Gamma-envelope ceiling."""
    m = np.asarray(rep["m_orders"], dtype=np.float64)
    roots = np.asarray(rep["root_moments"], dtype=np.float64)
    ses = np.asarray(rep["root_se"], dtype=np.float64)
    env = np.asarray(rep["envelope_roots"], dtype=np.float64)
    c = float(rep["fitted_c"])

    fig, ax = plt.subplots(figsize=_SINGLE)
    ax.errorbar(m, roots, yerr=2 * ses, fmt="o-", ms=4, capsize=3,
                label="measured root sup-moment")
    ax.plot(m, c * env, "--", color="black",
            label=f"c * Gamma envelope, c = {c:.3f}")
    ax.set_xlabel("moment order m")
    ax.set_ylabel("m-th root of sup moment")
    ax.set_title(f"{rep['process']}, alpha = {rep['alpha']:g}, "
                 f"{rep['n_paths']} paths")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def stability_figure(rep, path):
    """Median flow defect against drift distance on log-log axes."""
    dist = np.asarray(rep["distances"], dtype=np.float64)
    med = np.asarray(rep["defect_medians"], dtype=np.float64)
    ses = np.asarray(rep["defect_median_se"], dtype=np.float64)
    defects = np.asarray(rep["defects"], dtype=np.float64)

    fig, ax = plt.subplots(figsize=_SINGLE)
    if defects.ndim == 2 and defects.shape[0] == dist.size:
        ax.plot(np.repeat(dist, defects.shape[1]), defects.ravel(), ".",
                color="0.75", ms=3, label="per-seed defects")
    ax.errorbar(dist, med, yerr=2 * ses, fmt="o-", ms=4, capsize=3,
                label="median defect")
    anchor = _geo_anchor(dist, med)
    slope = float(rep["slope"])
    if np.isfinite(slope):
        _guide(ax, dist, slope, anchor, ls="--", lw=1, color="C0",
               label=f"fit: slope {slope:.3f}")
    target = float(rep["target_slope"])
    _guide(ax, dist, target, anchor, scale=0.55, ls=":", lw=1.2,
           color="black", label=f"reference slope {target:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("drift distance")
    ax.set_ylabel("flow defect")
    ax.set_title(f"stability over {rep['n_seeds']} seeds, nu = {rep['nu']:g}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def holder_figure(rep, path):
    """Fitted Hoelder exponents as bars with the requested values marked.

    The report stores fitted scalars only (no increment tables), so the
    figure compares fits against requests; the requested space exponent
    is 1 - eps by the producer's convention.
    """
    labels = ["time"]
    fitted = [float(rep["alpha_fit"])]
    requested = [float(rep["alpha_req"])]
    notes = [f"r2 = {rep['r2_time']:.3f}"]
    if rep.get("space_fit") is not None:
        labels.append("space")
        fitted.append(float(rep["space_fit"]))
        requested.append(1.0 - float(rep["eps_req"]))
        r2s = rep.get("r2_space")
        notes.append(f"r2 = {r2s:.3f}" if r2s is not None else "")

    pos = np.arange(len(labels), dtype=np.float64)
    fig, ax = plt.subplots(figsize=_SINGLE)
    bars = ax.bar(pos, fitted, width=0.55, color="C0", alpha=0.75,
                  label="fitted exponent")
    ax.hlines(requested, pos - 0.35, pos + 0.35, linestyles="dotted",
              color="black", label="requested exponent")
    for b, f, note in zip(bars, fitted, notes):
        ax.annotate(f"{f:.3f}\n{note}", (b.get_x() + b.get_width() / 2, f),
                    ha="center", va="bottom", fontsize=8)
    ax.set_xticks(pos)
    ax.set_xticklabels(labels)
    ax.set_ylabel("exponent")
    ax.set_ylim(0.0, max(fitted + requested) * 1.3)
    flat = " (spatially flat table)" if rep.get("spatially_flat") else ""
    ax.set_title(f"averaged-field regularity{flat}")
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    _save(fig, path)
