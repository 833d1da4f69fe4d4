import io

import numpy as np
import pytest

from driftflow import flow as fl
from driftflow import paths
from driftflow.fields import DriftField, make_drift, mollify
from driftflow.sewing import power_control, solve_nonlinear_young


def _bump(amp=0.5, width=0.5):
    return make_drift("gaussian_bump", center=0.0, width=width, amplitude=amp)


def test_em_zero_drift_exact_translation():
    p = paths.generate_path(60, 1.0, 10)
    sol = fl.solve_em(make_drift("zero"), p, 0.4)
    assert np.array_equal(sol.y[:, 0, 0], 0.4 + p.values[:, 0])
    sol2 = fl.solve_em(make_drift("zero"), p, 0.4, level=8, t_start=0.25)
    k0 = p.grid.index_of(0.25)
    w = p.values[:, 0] - p.values[k0, 0]
    assert np.array_equal(sol2.y[:, 0, 0], 0.4 + w[k0 :: 1 << 2])
    assert sol2.times[0] == 0.25


def test_em_linear_drift_variation_of_constants():
    b = make_drift("linear", rate=1.0)
    p = paths.generate_path(61, 1.0, 12)
    tt = p.times()
    wv = p.values[:, 0]
    errs = []
    for level in (6, 8, 10):
        sol = fl.solve_em(b, p, 1.0, level=level)
        t = sol.times[-1]
        kernel = np.exp(-(t - tt))
        oracle = np.exp(-t) + wv[-1] - np.trapezoid(kernel * wv, dx=p.grid.spacing)
        errs.append(abs(sol.y[-1, 0, 0] - oracle))
    assert errs[0] > errs[1] > errs[2]
    assert np.log2(errs[0] / errs[2]) / 4.0 > 0.8


def test_em_nonfinite_drift_reports_step():
    bad = DriftField(
        d=1, d_out=1, kind="custom",
        fn=lambda t, x: np.where(x > 0.2, np.nan, 1.0),
    )
    p = paths.generate_path(62, 1.0, 6)
    with pytest.raises(fl.FlowError, match="step"):
        fl.solve_em(bad, p, 0.0)


def test_em_singular_capped_flag():
    b = make_drift("power", gamma=0.2, p=4.0, q=4.0)
    p = paths.generate_path(63, 1.0, 8)
    sol = fl.solve_em(b, p, 0.3)
    assert "singular-capped" in sol.flags
    smooth = fl.solve_em(_bump(), p, 0.3)
    assert smooth.flags == ()


def test_em_vs_ny_distance_scales_with_lipschitz():
    # Cross-scheme sup distance ~ C(Lambda) h with C monotone in Lambda.
    p = paths.generate_path(64, 1.0, 10)
    c_fits = []
    for width in (0.8, 0.4, 0.2):
        b = _bump(amp=0.5, width=width)
        dists = []
        for level in (6, 8):
            em = fl.solve_em(b, p, 0.1, level=level)
            ny = solve_nonlinear_young(b, p, 0.1, level=level)
            dists.append(np.max(np.abs(em.y - ny.y)))
        h6, h8 = 2.0**-6, 2.0**-8
        assert dists[1] < dists[0]
        c_fits.append(max(dists[0] / h6, dists[1] / h8))
    assert c_fits[0] < c_fits[1] < c_fits[2]


def _zero_flow(seed=70, level=8, t_level=6, nx=17, scheme="nonlinear-young", **kw):
    p = paths.generate_path(seed, 1.0, level)
    s_grid = np.array([0.0, 0.25, 0.5, 0.75])
    x_grid = np.linspace(-1.0, 1.0, nx)
    table = fl.build_flow(
        make_drift("zero"), p, s_grid, x_grid, level=level,
        scheme=scheme, t_level=t_level, **kw,
    )
    return p, table


def test_build_flow_zero_drift_values():
    p, table = _zero_flow()
    tt = p.times()
    for i, s in enumerate(table.s_grid):
        k0 = p.grid.index_of(s)
        w = p.values[:, 0] - p.values[k0, 0]
        for k, t in enumerate(table.t_grid):
            kf = p.grid.index_of(t)
            col = table.values[i, :, k]
            if t < s - 1e-12:
                assert np.all(np.isnan(col))
            else:
                assert np.array_equal(col, table.x_grid + w[kf])


def test_build_flow_initial_condition_exact():
    for scheme in ("nonlinear-young", "euler-maruyama"):
        p = paths.generate_path(71, 1.0, 8)
        s_grid = np.array([0.0, 0.5])
        x_grid = np.linspace(-1.0, 1.0, 9)
        table = fl.build_flow(_bump(), p, s_grid, x_grid, scheme=scheme, t_level=6)
        for i, s in enumerate(s_grid):
            assert np.array_equal(table.values[i, :, table.t_index(s)], x_grid)


def test_build_flow_x_refinement_keeps_entries():
    p = paths.generate_path(72, 1.0, 8)
    s_grid = np.array([0.0, 0.5])
    coarse = fl.build_flow(_bump(), p, s_grid, np.linspace(-1, 1, 9), t_level=6)
    fine = fl.build_flow(_bump(), p, s_grid, np.linspace(-1, 1, 17), t_level=6)
    assert np.array_equal(coarse.values, fine.values[:, ::2], equal_nan=True)
    assert np.array_equal(coarse.drift_cum, fine.drift_cum[:, ::2], equal_nan=True)


def test_build_flow_cross_scheme_agreement():
    b = mollify(make_drift("sign", p=4, q=4), 0.15)
    p = paths.generate_path(73, 1.0, 10)
    s_grid = np.array([0.0, 0.5])
    x_grid = np.linspace(-1, 1, 9)
    ny = fl.build_flow(b, p, s_grid, x_grid, level=9, t_level=6)
    em = fl.build_flow(b, p, s_grid, x_grid, level=9, scheme="euler-maruyama", t_level=6)
    gap = np.nanmax(np.abs(ny.values - em.values))
    assert gap < 20.0 * 2.0**-9


def test_build_flow_validation():
    p = paths.generate_path(74, 1.0, 6)
    s = np.array([0.0])
    with pytest.raises(fl.FlowError):
        fl.build_flow(make_drift("zero", d=2), p, s, np.linspace(-1, 1, 9))
    with pytest.raises(fl.FlowError):
        fl.build_flow(make_drift("zero"), p, s, np.array([0.0, 0.5, 0.6]))
    with pytest.raises(fl.FlowError):
        fl.build_flow(make_drift("zero"), p, np.array([0.3]), np.linspace(-1, 1, 9))


def test_flow_property_zero_drift_exact():
    _, table = _zero_flow()
    rep = fl.check_flow_property(table)
    assert rep.max_defect == 0.0
    assert rep.passed
    assert rep.kappa_hat == 1.0
    assert rep.c_compact == 1.0
    _, em_table = _zero_flow(scheme="euler-maruyama")
    em_rep = fl.check_flow_property(em_table)
    assert em_rep.max_defect == 0.0
    assert em_rep.kappa_hat == 1.0


def test_flow_property_linear_drift_bound():
    # One-step schemes restart exactly, so an affine-in-x flow leaves only
    # interpolation and rounding in the defect; the fitted C(h + dx^2) bound
    # is then trivially satisfied.  The table itself is checked against the
    # closed-form flow e^{-(t-s)} x + noise term along the same path.
    b = make_drift("linear", rate=1.0)
    for level, nx in ((6, 9), (8, 17), (10, 33)):
        p = paths.generate_path(75, 1.0, level)
        s_grid = np.array([0.0, 0.25, 0.5])
        x_grid = np.linspace(-2, 2, nx)
        table = fl.build_flow(b, p, s_grid, x_grid, level=level, t_level=min(level, 6))
        rep = fl.check_flow_property(table)
        h = 2.0**-level
        dx = x_grid[1] - x_grid[0]
        assert rep.max_defect <= 1e-10
        assert rep.max_defect <= 5.0 * (h + dx**2)
        assert rep.passed
        tt = p.times()
        wv = p.values[:, 0]
        for s, x in ((0.0, 2.0), (0.5, -2.0)):
            i_s, j_x = table.s_index(s), int(np.argmin(np.abs(x_grid - x)))
            k0 = p.grid.index_of(s)
            kernel = np.exp(-(1.0 - tt[k0:]))
            oracle = (
                np.exp(-(1.0 - s)) * x_grid[j_x]
                + (wv[-1] - wv[k0])
                - np.trapezoid(kernel * (wv[k0:] - wv[k0]), dx=p.grid.spacing)
            )
            err = abs(table.values[i_s, j_x, -1] - oracle)
            assert err <= 2.0 * h


def test_flow_property_mollified_defect_decreases():
    b = mollify(make_drift("sign", p=4, q=4), 0.1)
    defects = []
    for level in (7, 9, 11):
        p = paths.generate_path(76, 1.0, level)
        nx = int(8 * 2 ** (level / 2 - 3.5)) * 2 + 1
        table = fl.build_flow(
            b, p, np.array([0.0, 0.25, 0.5]), np.linspace(-1.5, 1.5, nx),
            level=level, t_level=6,
        )
        defects.append(fl.check_flow_property(table).max_defect)
    assert defects[2] < defects[0]
    assert defects[2] < defects[1] or defects[1] < defects[0]


def test_holder_lipschitz_gronwall():
    # Uniformly expanding Lipschitz drift b = +x: the Gronwall envelope
    # e^{Lambda T} is tight, and the expansion factor is scale-free so the
    # fitted exponent sits at one.
    b = make_drift("linear", rate=-1.0)
    p = paths.generate_path(77, 1.0, 10)
    table = fl.build_flow(b, p, np.array([0.0, 0.5]), np.linspace(-2, 2, 33), t_level=8)
    rep = fl.holder_in_x(table)
    assert rep.kappa_hat >= 0.99
    assert rep.c_compact <= np.exp(1.0) + 0.1
    assert rep.c_compact >= 0.9 * np.exp(1.0)
    assert not rep.degenerate
    # Heterogeneous Lipschitz drift (narrow bump): pooled-max fitting reads
    # a lower exponent, but the Gronwall constant still bounds the modulus.
    bump = _bump(amp=0.5, width=0.5)
    lam = 0.5 / (0.5 * np.sqrt(np.e))
    table2 = fl.build_flow(bump, p, np.array([0.0, 0.5]), np.linspace(-2, 2, 33), t_level=8)
    rep2 = fl.holder_in_x(table2)
    assert rep2.kappa_hat >= 0.9
    assert rep2.c_compact <= np.exp(lam * 1.0) + 0.1


def test_holder_requires_enough_points():
    p = paths.generate_path(78, 1.0, 6)
    table = fl.build_flow(
        make_drift("zero"), p, np.array([0.0]), np.linspace(-1, 1, 9), t_level=6
    )
    with pytest.raises(fl.FlowError):
        fl.holder_in_x(table, compact=(-0.5, 0.5))


def test_holder_degenerate_flag():
    _, table = _zero_flow()
    # Force a spatially constant flow: drift exactly cancels the lattice.
    table.drift_cum = np.where(
        np.isnan(table.drift_cum), np.nan, -table.x_grid[None, :, None]
    )
    rep = fl.holder_in_x(table)
    assert rep.degenerate


def test_glue_idempotent():
    _, table = _zero_flow(seed=80)
    glued, defect = fl.glue_flows(table, table)
    assert defect == 0.0
    assert np.array_equal(glued.values, table.values, equal_nan=True)
    assert np.array_equal(glued.t_grid, table.t_grid)


def test_glue_zero_drift_two_horizons():
    p = paths.generate_path(81, 1.0, 8)
    s_grid = np.array([0.0, 0.25])
    x_grid = np.linspace(-1, 1, 9)
    a = fl.build_flow(make_drift("zero"), p, s_grid, x_grid, t_level=6, t_end=0.5)
    b = fl.build_flow(make_drift("zero"), p, s_grid, x_grid, t_level=6)
    glued, defect = fl.glue_flows(a, b)
    assert defect == 0.0
    assert glued.t_grid[-1] == 1.0
    assert np.array_equal(glued.values, b.values, equal_nan=True)


def test_glue_refinement_budget():
    b = mollify(make_drift("sign", p=4, q=4), 0.15)
    p = paths.generate_path(82, 1.0, 10)
    s_grid = np.array([0.0, 0.25])
    x_grid = np.linspace(-1, 1, 9)
    fa = fl.build_flow(b, p, s_grid, x_grid, level=8, t_level=6, t_end=0.5,
                       refine_check=True)
    fb = fl.build_flow(b, p, s_grid, x_grid, level=9, t_level=6, refine_check=True)
    glued, defect = fl.glue_flows(fa, fb)
    budget = float(np.max(fa.refine_sup) + np.max(fb.refine_sup))
    assert defect <= budget
    assert defect > 0.0


def test_glue_lineage_errors():
    _, ta = _zero_flow(seed=83)
    _, tb = _zero_flow(seed=84)
    with pytest.raises(fl.LineageError):
        fl.glue_flows(ta, tb)
    _, tc = _zero_flow(seed=83, nx=33)
    with pytest.raises(fl.FlowError):
        fl.glue_flows(ta, tc)


def test_uniqueness_requires_kappa_beta():
    p, table = _zero_flow(seed=85)
    sol = solve_nonlinear_young(make_drift("zero"), p, 0.0, level=8)
    with pytest.raises(fl.FlowError, match="kappa"):
        fl.uniqueness_certificate(sol, table, power_control(), kappa=0.5, beta=1.5)


def test_uniqueness_flow_row_self_consistent():
    p, table = _zero_flow(seed=86)
    sol = solve_nonlinear_young(make_drift("zero"), p, 0.25, level=8)
    rep = fl.uniqueness_certificate(
        sol, table, power_control(1.0, 1.0), kappa=0.95, beta=1.2
    )
    assert rep.ratio_max <= 1e-12
    assert rep.constancy_max <= 1e-12
    assert rep.passed


def test_uniqueness_cross_scheme_and_negative_control():
    sigma = 2.0**-4
    b = mollify(make_drift("sign", p=4, q=4), sigma)
    p = paths.generate_path(87, 1.0, 12)
    s_grid = np.linspace(0.0, 1.0, 9)[:-1]
    x_grid = np.linspace(-2.5, 2.5, 41)
    table = fl.build_flow(b, p, s_grid, x_grid, level=10, t_level=8)
    y_em = fl.solve_em(b, p, 0.0, level=10)
    w = power_control(1.0, 1.0)
    rep = fl.uniqueness_certificate(y_em, table, w, kappa=0.95, beta=1.2)
    assert rep.passed, (rep.ratio_max, rep.constancy_max)
    bad = fl.corrupt_with_jump(y_em, size=0.1, at=0.5)
    neg = fl.uniqueness_certificate(bad, table, w, kappa=0.95, beta=1.2)
    assert not neg.passed_constancy
    assert neg.constancy_max >= 0.05
    assert "jump-corrupted" in bad.flags


def test_flow_csv_export():
    _, table = _zero_flow(seed=88, level=6, t_level=4, nx=5)
    buf = io.StringIO()
    fl.export_flow_csv(table, buf)
    buf.seek(0)
    assert buf.readline().strip() == "s,x,t,value,drift_cum"
    data = np.loadtxt(buf, delimiter=",", ndmin=2)
    n_rows = sum(
        np.isfinite(table.values[i, j]).sum()
        for i in range(table.s_grid.size)
        for j in range(table.x_grid.size)
    )
    assert data.shape == (n_rows, 5)


def test_flow_binary_round_trip(tmp_path):
    _, table = _zero_flow(seed=89, level=6, t_level=5, nx=9)
    target = tmp_path / "flow.npz"
    with open(target, "wb") as fh:
        fl.save_flow(table, fh)
    loaded = fl.load_flow(target)
    assert loaded.scheme == table.scheme
    assert loaded.level == table.level
    assert np.array_equal(loaded.values, table.values, equal_nan=True)
    assert np.array_equal(loaded.t_grid, table.t_grid)
    assert loaded.refine_sup is None


def test_report_json_export():
    _, table = _zero_flow(seed=90, level=6, t_level=5, nx=9)
    rep = fl.check_flow_property(table)
    buf = io.StringIO()
    fl.export_report_json(rep, buf)
    import json

    payload = json.loads(buf.getvalue())
    assert payload["max_defect"] == 0.0
    assert payload["passed"] is True
