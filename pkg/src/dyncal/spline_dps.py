"""Discretization-point-set construction by greedy spline-knot selection.

The target series is fit with least-squares cubic B-splines whose interior
knots are chosen one at a time: each stage scans every admissible time index
and keeps the knot that minimizes the mean squared error given all previously
selected knots. The number of points to keep is then read off the MSE-vs-knots
curve at its elbow. Knots are indexed on the integer grid 1..L; conversion to
physical times is presentation only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline


@dataclass
class TargetSeries:
    """Target response g0 on a fixed time grid of length L."""

    values: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if len(self.values) < 5:
            raise ValueError("target series needs at least 5 points")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("target series must be finite")
        if self.times is None:
            self.times = np.arange(1.0, len(self.values) + 1.0)
        else:
            self.times = np.asarray(self.times, dtype=float).ravel()
            if len(self.times) != len(self.values):
                raise ValueError("times and values lengths differ")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class SplineFit:
    fitted: np.ndarray
    mse: float
    ridged: bool = False


@dataclass
class DpsResult:
    """Greedy knot sequence, its MSE path, and the elbow-selected prefix."""

    ordered_knots: list[int]
    mse_path: np.ndarray  # MSE after 0, 1, ..., k_max knots
    k_selected: int
    dps: list[int] = field(default_factory=list)
    elbow_warning: bool = False

    def __post_init__(self):
        if not self.dps:
            self.dps = list(self.ordered_knots[: self.k_selected])


def _design_matrix(n: int, interior_knots) -> np.ndarray:
    """Regression matrix for a cubic spline on indices 1..n.

    Columns are an intercept plus the cubic B-spline basis on boundary knots
    {1, n} (multiplicity 4) with the first basis function dropped, so the
    matrix is full rank while spanning the complete spline space.
    """
    x = np.arange(1.0, n + 1.0)
    knots = np.sort(np.asarray(interior_knots, dtype=float))
    kv = np.concatenate([[1.0] * 4, knots, [float(n)] * 4])
    B = BSpline.design_matrix(x, kv, 3, extrapolate=False).toarray()
    return np.column_stack([np.ones(n), B[:, 1:]])


def fit_cubic_spline(series: TargetSeries, interior_knots) -> SplineFit:
    """Least-squares cubic spline fit with the given interior knots.

    Knots are time indices strictly inside (1, L), distinct. If the design is
    rank deficient (pathologically clustered knots), the normal equations are
    solved with a 1e-10 ridge and the result is flagged.
    """
    L = len(series)
    knots = sorted(int(k) for k in interior_knots)
    if len(set(knots)) != len(knots):
        raise ValueError("interior knots must be distinct")
    if knots and (knots[0] <= 1 or knots[-1] >= L):
        raise ValueError("interior knots must lie strictly inside (1, L)")
    if len(knots) > L - 5:
        raise ValueError(f"too many knots ({len(knots)}) for series length {L}")

    A = _design_matrix(L, knots)
    y = series.values
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    ridged = rank < A.shape[1]
    if ridged:
        G = A.T @ A + 1e-10 * np.eye(A.shape[1])
        coef = np.linalg.solve(G, A.T @ y)
    fitted = A @ coef
    mse = float(np.mean((y - fitted) ** 2))
    return SplineFit(fitted=fitted, mse=mse, ridged=ridged)


def greedy_knot_search(series: TargetSeries, k_max: int):
    """Select up to k_max knots, each minimizing the MSE given its predecessors.

    Admissible positions are the interior indices {2, ..., L-1} not already
    chosen; ties go to the smallest index. Returns (ordered_knots, mse_path)
    where mse_path[0] is the knot-free cubic fit.
    """
    L = len(series)
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if k_max > L - 5:
        raise ValueError(f"k_max={k_max} exceeds the fit limit for length {L}")

    knots: list[int] = []
    mse_path = [fit_cubic_spline(series, knots).mse]
    for _ in range(k_max):
        best_idx, best_mse = None, np.inf
        for cand in range(2, L):
            if cand in knots:
                continue
            mse = fit_cubic_spline(series, knots + [cand]).mse
            if mse < best_mse:
                best_mse, best_idx = mse, cand
        knots.append(best_idx)
        mse_path.append(best_mse)
    return knots, np.asarray(mse_path)


def select_k_elbow(mse_path) -> tuple[int, bool]:
    """Pick the knot count at the elbow of the MSE path.

    Works on the per-knot-count curve (stage 0 excluded): the elbow is the
    right edge of the first window whose discrete second difference is
    positive, i.e. the count at which the curve has visibly flattened.
    Returns (k_selected, warned); warned is True when no positive curvature
    exists and k_max is returned instead.
    """
    mse_path = np.asarray(mse_path, dtype=float)
    if len(mse_path) < 3:
        raise ValueError("mse_path needs at least 3 entries")
    q = mse_path[1:]  # MSE after 1..k_max knots
    k_max = len(q)
    for i in range(k_max - 2):
        if q[i] - 2.0 * q[i + 1] + q[i + 2] > 0.0:
            return i + 3, False
    return k_max, True


def build_dps(series: TargetSeries, k_max: int = 10) -> DpsResult:
    """Full pipeline: greedy knot sequence, MSE path, elbow cut."""
    ordered, path = greedy_knot_search(series, k_max)
    k, warned = select_k_elbow(path)
    return DpsResult(ordered_knots=ordered, mse_path=path, k_selected=k,
                     elbow_warning=warned)
