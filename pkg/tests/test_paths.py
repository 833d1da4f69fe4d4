import io

import numpy as np
import pytest

from driftflow import paths


def test_grid_structure():
    g = paths.DyadicGrid(1.0, 4)
    t = g.times()
    assert t.shape == (17,)
    assert t[0] == 0.0 and t[-1] == 1.0
    assert g.spacing == 1.0 / 16
    assert g.index_of(0.5) == 8
    with pytest.raises(paths.PathError):
        g.index_of(0.3)


def test_memory_cap():
    with pytest.raises(paths.ResourceCapError):
        paths.DyadicGrid(1.0, 27)


def test_determinism():
    a = paths.generate_path(123, 1.0, 8)
    b = paths.generate_path(123, 1.0, 8)
    assert np.array_equal(a.values, b.values)
    c = paths.generate_path(124, 1.0, 8)
    assert not np.array_equal(a.values, c.values)


def test_refinement_matches_direct_generation():
    # Generating deep and refining shallow must agree bit for bit.
    deep = paths.generate_path(42, 1.0, 12)
    shallow = paths.generate_path(42, 1.0, 7)
    refined = paths.refine(shallow, 5)
    assert np.array_equal(deep.values, refined.values)


def test_refinement_keeps_coarse_points():
    p = paths.generate_path(5, 1.0, 6)
    q = paths.refine(p)
    assert np.array_equal(q.values[0::2], p.values)


def test_endpoint_variance():
    # 10^4 seeds; sample variance of W_1 within 5% of 1.
    n = 10_000
    w1 = np.array([paths.generate_path(s, 1.0, 0).values[-1, 0] for s in range(n)])
    assert abs(w1.var() - 1.0) < 0.05
    assert abs(w1.mean()) < 0.03


def test_midpoint_residual_variance():
    # Bridge residual at level j+1 has variance h_j / 4.
    n = 4_000
    res = []
    for s in range(n):
        p = paths.generate_path(s, 1.0, 3)
        q = paths.refine(p)
        mid = q.values[1::2, 0]
        avg = 0.5 * (p.values[:-1, 0] + p.values[1:, 0])
        res.append(mid - avg)
    res = np.concatenate(res)
    h = 1.0 / 8
    assert abs(res.var() / (h / 4.0) - 1.0) < 0.05


def test_increment_independence():
    p = paths.generate_path(9, 1.0, 14)
    dw = p.increments()[:, 0]
    rho = np.corrcoef(dw[:-1], dw[1:])[0, 1]
    assert abs(rho) < 3.0 / np.sqrt(dw.size)


def test_evaluate_interpolates():
    p = paths.generate_path(3, 1.0, 4)
    t = p.times()
    on_grid = paths.evaluate(p, t)
    assert np.array_equal(on_grid, p.values)
    mid = paths.evaluate(p, 0.5 * (t[0] + t[1]))
    assert np.allclose(mid, 0.5 * (p.values[0] + p.values[1]))
    with pytest.raises(paths.PathError):
        paths.evaluate(p, 1.5)


def test_restrict_then_refine_matches_refine_then_restrict():
    p = paths.generate_path(77, 1.0, 6)
    a = paths.refine(paths.restrict(p, 0.25), 3)
    b = paths.restrict(paths.refine(p, 3), 0.25)
    assert np.array_equal(a.values, b.values)
    assert a.grid.spacing == b.grid.spacing


def test_restrict_validates_alignment():
    p = paths.generate_path(1, 1.0, 4)
    with pytest.raises(paths.PathError):
        paths.restrict(p, 0.3)
    with pytest.raises(paths.PathError):
        paths.restrict(p, 3.0 / 16.0)  # on grid but not a power-of-two index


def test_binary_round_trip():
    p = paths.generate_path(11, 2.0, 9, d=2)
    buf = io.BytesIO()
    paths.save_path(p, buf)
    buf.seek(0)
    q = paths.load_path(buf)
    assert np.array_equal(p.values, q.values)
    assert (q.horizon, q.level, q.d, q.seed) == (2.0, 9, 2, 11)


def test_csv_round_trip(tmp_path):
    p = paths.generate_path(13, 1.0, 5)
    f = tmp_path / "w.csv"
    paths.save_path_csv(p, f)
    q = paths.load_path_csv(f)
    assert np.array_equal(p.values, q.values)  # %.17g is exact for float64


def test_ensemble_seed_derivation_is_injective():
    seen = {paths.derive_path_seed(7, i) for i in range(1000)}
    assert len(seen) == 1000
    assert paths.derive_path_seed(7, 0) != paths.derive_path_seed(8, 0)


def test_dimension_two_components_independent():
    p = paths.generate_path(21, 1.0, 12, d=2)
    x, y = p.increments()[:, 0], p.increments()[:, 1]
    rho = np.corrcoef(x, y)[0, 1]
    assert abs(rho) < 3.0 / np.sqrt(x.size)
