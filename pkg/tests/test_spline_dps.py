import numpy as np
import pytest

from dyncal.simulators import target_series
from dyncal.spline_dps import (DpsResult, TargetSeries, build_dps,
                               fit_cubic_spline, greedy_knot_search,
                               select_k_elbow)


# -- independent textbook oracle: recursive Cox-de Boor basis -----------------

def _bspline_basis_value(x, k, i, t):
    if k == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    c1 = 0.0
    if t[i + k] != t[i]:
        c1 = (x - t[i]) / (t[i + k] - t[i]) * _bspline_basis_value(x, k - 1, i, t)
    c2 = 0.0
    if t[i + k + 1] != t[i + 1]:
        c2 = ((t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1])
              * _bspline_basis_value(x, k - 1, i + 1, t))
    return c1 + c2


def oracle_spline_mse(values, interior_knots):
    """Least-squares cubic spline MSE from a from-scratch recursive basis."""
    L = len(values)
    xs = np.arange(1.0, L + 1.0)
    kv = np.concatenate([[1.0] * 4, np.sort(np.asarray(interior_knots, float)),
                         [float(L)] * 4])
    ncoef = len(kv) - 4
    A = np.zeros((L, ncoef))
    for r, x in enumerate(xs):
        if x == kv[-1]:
            # right-closed convention at the final boundary knot
            A[r, ncoef - 1] = 1.0
            continue
        for i in range(ncoef):
            A[r, i] = _bspline_basis_value(x, 3, i, kv)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    resid = values - A @ coef
    return float(np.mean(resid ** 2))


def test_fit_matches_textbook_oracle_on_easom_dps_knots():
    series = TargetSeries(target_series("easom"))
    fit = fit_cubic_spline(series, [145, 37, 132])
    oracle = oracle_spline_mse(series.values, [145, 37, 132])
    assert fit.mse == pytest.approx(oracle, rel=1e-8)


def test_fit_matches_textbook_oracle_on_random_knots():
    rng = np.random.default_rng(3)
    xs = np.linspace(0, 1, 60)
    values = np.sin(7 * xs) + 0.3 * np.cos(19 * xs)
    series = TargetSeries(values)
    for knots in ([10], [5, 30, 45], [2, 3, 58, 59]):
        fit = fit_cubic_spline(series, knots)
        assert fit.mse == pytest.approx(oracle_spline_mse(values, knots), rel=1e-8)


def test_cubic_polynomial_is_exact_with_zero_knots():
    xs = np.arange(1.0, 51.0)
    values = 0.5 * xs ** 3 - 2 * xs ** 2 + xs - 7
    fit = fit_cubic_spline(TargetSeries(values), [])
    assert fit.mse <= 1e-18 * np.mean(values ** 2)


def test_constant_series_fits_exactly():
    fit = fit_cubic_spline(TargetSeries(np.full(30, 4.2)), [7, 19])
    assert np.allclose(fit.fitted, 4.2)
    assert fit.mse <= 1e-25


def test_residuals_orthogonal_to_basis():
    from dyncal.spline_dps import _design_matrix
    series = TargetSeries(target_series("harari_steinberg"))
    knots = [26, 95, 118]
    fit = fit_cubic_spline(series, knots)
    A = _design_matrix(len(series), knots)
    resid = series.values - fit.fitted
    inner = np.abs(A.T @ resid)
    col_norms = np.linalg.norm(A, axis=0)
    assert np.all(inner <= 1e-8 * col_norms * max(1.0, np.linalg.norm(resid)))


def test_fit_rejects_bad_knots():
    series = TargetSeries(np.sin(np.linspace(0, 5, 40)))
    with pytest.raises(ValueError):
        fit_cubic_spline(series, [5, 5])
    with pytest.raises(ValueError):
        fit_cubic_spline(series, [1])
    with pytest.raises(ValueError):
        fit_cubic_spline(series, [40])
    with pytest.raises(ValueError):
        fit_cubic_spline(series, list(range(2, 39)))


def test_target_series_validation():
    with pytest.raises(ValueError):
        TargetSeries(np.ones(4))
    with pytest.raises(ValueError):
        TargetSeries(np.array([1.0, 2.0, np.inf, 3.0, 4.0]))
    with pytest.raises(ValueError):
        TargetSeries(np.ones(6), times=np.ones(5))


def test_greedy_stage_one_is_exhaustive_scan():
    series = TargetSeries(target_series("easom"))
    knots, path = greedy_knot_search(series, k_max=1)
    best_idx, best_mse = None, np.inf
    for cand in range(2, len(series)):
        mse = fit_cubic_spline(series, [cand]).mse
        if mse < best_mse:
            best_mse, best_idx = mse, cand
    assert knots[0] == best_idx == 145
    assert path[1] == best_mse


def test_greedy_mse_path_non_increasing():
    rng = np.random.default_rng(8)
    values = np.cumsum(rng.normal(size=50))
    _, path = greedy_knot_search(TargetSeries(values), k_max=6)
    assert np.all(np.diff(path) <= 1e-15)


def test_greedy_rejects_bad_kmax():
    series = TargetSeries(np.sin(np.linspace(0, 5, 20)))
    with pytest.raises(ValueError):
        greedy_knot_search(series, 0)
    with pytest.raises(ValueError):
        greedy_knot_search(series, 16)


def test_elbow_on_paper_style_path():
    # level drop pattern with positive curvature first appearing at the third count
    path = [2.194e-2, 2.760e-4, 1.717e-4, 3.044e-5, 6.254e-6, 1.651e-6, 4.950e-7]
    k, warned = select_k_elbow(path)
    assert (k, warned) == (4, False)


def test_elbow_geometric_decay():
    path = [0.27 ** i for i in range(11)]
    k, warned = select_k_elbow(path)
    assert (k, warned) == (3, False)


def test_elbow_linear_path_returns_kmax_with_warning():
    path = [float(v) for v in range(20, 9, -1)]  # exactly linear in floats
    k, warned = select_k_elbow(path)
    assert (k, warned) == (10, True)


def test_elbow_needs_three_entries():
    with pytest.raises(ValueError):
        select_k_elbow([1.0, 0.5])


def test_build_dps_easom():
    result = build_dps(TargetSeries(target_series("easom")), k_max=4)
    assert result.dps == [145, 37, 132]
    assert result.k_selected == 3
    assert not result.elbow_warning


def test_build_dps_deterministic():
    series = TargetSeries(target_series("easom"))
    a = build_dps(series, k_max=4)
    b = build_dps(series, k_max=4)
    assert a.ordered_knots == b.ordered_knots
    assert np.array_equal(a.mse_path, b.mse_path)


def test_dps_result_prefix():
    r = DpsResult(ordered_knots=[9, 4, 7, 2], mse_path=np.arange(5.0),
                  k_selected=2)
    assert r.dps == [9, 4]


def test_long_series_dps_selection():
    # synthetic long-series fixture at the scale of real hydrological output
    xs = np.linspace(0.0, 1.0, 5000)
    values = np.exp(-80 * (xs - 0.3) ** 2) + 0.6 * np.exp(-400 * (xs - 0.62) ** 2)
    result = build_dps(TargetSeries(values), k_max=3)
    assert len(result.ordered_knots) == 3
    assert all(1 < t < 5000 for t in result.ordered_knots)
    assert np.all(np.diff(result.mse_path) <= 0)
