import numpy as np
import pytest
from scipy.special import ndtr

from driftflow import fields
from driftflow.fields import DriftField, lqp_norm, bessel_norm, make_drift, mollify


def indicator_box():
    # 1 on [0,1] x [0,1], d=1
    return DriftField(
        d=1,
        d_out=1,
        kind="indicator",
        fn=lambda t, x: (((t >= 0) & (t <= 1))[:, None] & ((x >= 0) & (x <= 1))).astype(float),
        smooth=False,
        breakpoints=(0.0, 1.0),
    )


def test_indicator_mixed_norm_is_one():
    r = lqp_norm(indicator_box(), (0.0, 1.0), p=4, q=4)
    assert abs(r.value - 1.0) < 1e-12


def test_norm_homogeneity():
    f = make_drift("gaussian_bump", amplitude=1.0, width=0.7)
    g = fields.field_scale(f, 3.5)
    a = lqp_norm(f, (0.0, 1.0), p=4, q=4)
    b = lqp_norm(g, (0.0, 1.0), p=4, q=4)
    assert abs(b.value - 3.5 * a.value) < 1e-12


def test_gaussian_norm_closed_form():
    # f(x) = exp(-x^2): integral of f^4 is sqrt(pi)/2, time-constant in q.
    f = make_drift("gaussian_bump", amplitude=1.0, width=np.sqrt(0.5))
    r = lqp_norm(f, (0.0, 1.0), p=4, q=4)
    expected = (np.sqrt(np.pi) / 2.0) ** 0.25
    assert abs(r.value - expected) < 1e-8
    assert r.est_error < 1e-8


def test_sign_norm_small_box():
    f = make_drift("sign")
    r = lqp_norm(f, (0.0, 1.0), p=4, q=4, box=1.0)
    assert abs(r.value - 2.0**0.25) < 1e-12


def test_sup_norm_exponents():
    f = make_drift("gaussian_bump", amplitude=2.0, width=0.5)
    r = lqp_norm(f, (0.0, 1.0), p=np.inf, q=np.inf)
    assert abs(r.value - 2.0) < 1e-4  # grid max just misses the peak


def test_interval_superadditivity():
    f = make_drift("checkerboard", period_t=0.2, period_x=0.3)
    q = 4.0
    full = lqp_norm(f, (0.0, 1.0), p=4, q=q, nt=256).value
    left = lqp_norm(f, (0.0, 0.5), p=4, q=q, nt=128).value
    right = lqp_norm(f, (0.5, 1.0), p=4, q=q, nt=128).value
    assert left <= full + 1e-12 and right <= full + 1e-12
    assert left**q + right**q <= full**q + 1e-9


def test_zero_field():
    z = make_drift("zero")
    assert lqp_norm(z, (0.0, 1.0), p=4, q=4).value == 0.0
    assert bessel_norm(z, 0.5, p=4).value == 0.0
    assert np.all(z(0.0, np.array([[1.0], [2.0]])) == 0.0)


def test_subcriticality_flag():
    f = make_drift("power", d=1, p=4, q=4, gamma=0.2)
    assert f.subcritical  # 2/4 + 1/4 < 1
    g = make_drift("power", d=1, p=4, q=2.5, gamma=0.2)
    assert not g.subcritical  # 2/2.5 + 1/4 > 1


def test_power_validation():
    with pytest.raises(fields.ParameterError):
        make_drift("power", d=1, p=6, gamma=0.2)  # gamma * p > d
    with pytest.raises(fields.ParameterError):
        make_drift("power", d=1, gamma=0.2)  # needs finite p
    with pytest.raises(fields.ParameterError):
        make_drift("sign", p=2.0)  # declared exponents live in (2, inf]


def test_power_capped_at_origin():
    f = make_drift("power", d=1, p=3.5, gamma=0.25)
    v = f(0.0, np.array([[0.0], [2.0], [0.5]]))
    assert v[0, 0] == fields.POWER_CAP
    assert v[1, 0] == 0.0  # truncated outside |x| <= 1
    assert abs(v[2, 0] - 0.5**-0.25) < 1e-14


def test_sqrt_branch_profile():
    f = make_drift("sqrt")
    v = f(0.0, np.array([[0.25], [-0.25], [4.0]]))
    assert abs(v[0, 0] - 1.0) < 1e-14
    assert abs(v[1, 0] + 1.0) < 1e-14
    assert abs(v[2, 0] - 2.0) < 1e-14  # saturates past |x| = 1


def test_bessel_zero_order_matches_lp():
    f = make_drift("gaussian_bump", amplitude=1.3, width=0.6)
    b = bessel_norm(f, 0.0, p=4, box=8.0, n=4096)
    l = lqp_norm(f, (0.0, 1.0), p=4, q=4, box=8.0, nx=4096)
    assert abs(b.value - l.value) / l.value < 1e-6


def test_bessel_monotone_in_nu():
    f = make_drift("gaussian_bump", amplitude=1.0, width=0.05)
    vals = [bessel_norm(f, nu, p=4).value for nu in (0.0, 0.5, 1.0)]
    assert vals[0] > vals[1] > vals[2]


def test_mollify_constant():
    f = make_drift("constant", value=2.5)
    g = mollify(f, 0.1)
    x = np.array([[-1.0], [0.0], [3.0]])
    assert np.all(np.abs(g(0.0, x) - 2.5) < 1e-6)


def test_mollify_sign_at_zero_and_cdf_form():
    g = mollify(make_drift("sign"), 0.2)
    assert abs(g(0.0, np.array([[0.0]]))[0, 0]) < 1e-12
    # sign * gaussian = 2 Phi(x / sigma) - 1
    x = np.linspace(-1.0, 1.0, 41)
    got = g(0.0, x[:, None])[:, 0]
    want = 2.0 * ndtr(x / 0.2) - 1.0
    assert np.max(np.abs(got - want)) < 1e-6


def test_mollify_halfline_indicator_is_gaussian_cdf():
    f = DriftField(
        d=1,
        d_out=1,
        kind="halfline",
        fn=lambda t, x: (x >= 0).astype(float),
        smooth=False,
        breakpoints=(0.0,),
    )
    sigma = 0.15
    g = mollify(f, sigma)
    x = np.linspace(-0.8, 0.8, 33)
    got = g(0.0, x[:, None])[:, 0]
    assert np.max(np.abs(got - ndtr(x / sigma))) < 1e-6


def test_mollify_gradient_matches_difference_quotient():
    g = mollify(make_drift("sign"), 0.25)
    x = np.array([[0.1], [0.4], [-0.3]])
    eps = 1e-6
    num = (g(0.0, x + eps) - g(0.0, x - eps)) / (2 * eps)
    ana = g.gradient(0.0, x)
    assert np.max(np.abs(num - ana)) < 1e-6


def test_mollify_contracts_mixed_norm():
    f = make_drift("sign", p=4, q=4)
    g = mollify(f, 0.3)
    a = lqp_norm(f, (0.0, 1.0), p=4, q=4, box=4.0, nx=2048)
    b = lqp_norm(g, (0.0, 1.0), p=4, q=4, box=4.0, nx=2048)
    assert b.value <= a.value + 1e-8


def test_mollify_distance_shrinks_with_sigma():
    f = make_drift("sign", p=4, q=4)
    dists = []
    for n in (3, 4, 5):
        g = mollify(f, 2.0**-n)
        diff = fields.field_difference(g, f)
        dists.append(lqp_norm(diff, (0.0, 1.0), p=4, q=4, box=2.0, nx=2048, nt=4).value)
    assert dists[0] > dists[1] > dists[2]
    # expected L^4 rate: distance ~ sigma^(1/4)
    ratio = dists[0] / dists[2]
    assert 1.2 < ratio < 1.7


def test_checkerboard_is_indicator():
    f = make_drift("checkerboard", period_t=0.25, period_x=0.5, amplitude=2.0)
    v = f(np.array([0.1, 0.3]), np.array([[0.1], [0.1]]))
    assert set(np.unique(v)) <= {0.0, 2.0}


def test_field_sum_and_time_modulation():
    a = make_drift("constant", value=1.0)
    b = make_drift("linear", rate=2.0)
    s = fields.field_sum(a, b)
    x = np.array([[0.5]])
    assert abs(s(0.0, x)[0, 0] - (1.0 - 1.0)) < 1e-15
    m = fields.field_time_modulate(a, lambda t: t**2)
    assert abs(m(np.array([0.5]), x)[0, 0] - 0.25) < 1e-15
    assert abs(m.gradient(np.array([0.5]), x)[0, 0]) < 1e-15


def test_linear_drift_gradient():
    f = make_drift("linear", rate=1.5)
    g = f.gradient(0.0, np.array([[0.3], [2.0]]))
    assert np.all(g == -1.5)


def test_support_warning():
    f = make_drift("power", d=1, p=3.5, gamma=0.2)
    r = lqp_norm(f, (0.0, 1.0), p=3.5, q=4, box=0.5)
    assert r.extra.get("support_warning") is True


def test_bump_gradient_closed_form():
    f = make_drift("gaussian_bump", amplitude=2.0, center=0.5, width=0.3)
    x = np.array([[0.7]])
    v = f(0.0, x)[0, 0]
    g = f.gradient(0.0, x)[0, 0]
    assert abs(g - (-(0.7 - 0.5) / 0.3**2 * v)) < 1e-12
