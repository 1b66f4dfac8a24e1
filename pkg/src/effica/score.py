"""Density-score estimation by least squares on a cubic B-spline sieve.

For a density ``r`` with score ``phi = -r'/r``, integration by parts turns
the L2(r) projection of ``phi`` onto span(B) into a linear system in
empirical moments only::

    E[B B^T] gamma = E[B']

so no density estimate is ever formed.  The number of basis functions is
picked by two-fold cross-validation on the same quadratic criterion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from effica.errors import (
    CVFailureError,
    DegenerateSampleError,
    InvalidArgumentError,
    SingularSystemError,
)
from effica.splines import BSplineBasis, eval_basis, eval_basis_with_deriv, make_basis

BANDWIDTH = 3
FLAT_TOL = 1e-12
DEFAULT_RIDGE_SCALE = 1e-10


@dataclass(frozen=True)
class GramSystem:
    A: np.ndarray
    D: np.ndarray


@dataclass(frozen=True)
class ScoreFit:
    basis: BSplineBasis
    gamma: np.ndarray

    def __call__(self, t):
        return eval_score(self, t)


def order_statistic_quantile(sorted_sample: np.ndarray, p: float) -> float:
    """``ceil(p n)``-th order statistic; ``p = 0`` gives the minimum."""
    n = sorted_sample.shape[0]
    if p <= 0:
        return float(sorted_sample[0])
    k = min(max(math.ceil(p * n), 1), n)
    return float(sorted_sample[k - 1])


def select_interval(sample, c: float = 5.0) -> tuple[float, float]:
    """Working interval from the 1% / 99% quantiles widened by ``c*sqrt(log log n)``.

    The interval is clipped to the sample range.
    """
    s = np.sort(np.asarray(sample, dtype=float).ravel())
    n = s.shape[0]
    if n < 20:
        raise InvalidArgumentError(f"need at least 20 points to select an interval, got {n}")
    if not c > 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    if s[0] == s[-1]:
        raise DegenerateSampleError("sample is constant")
    delta = c * math.sqrt(math.log(math.log(n)))
    lower = max(s[0], order_statistic_quantile(s, 0.01) - delta)
    upper = min(s[-1], order_statistic_quantile(s, 0.99) + delta)
    return float(lower), float(upper)


def _gram_from_design(values: np.ndarray, derivs: np.ndarray) -> GramSystem:
    n = values.shape[0]
    return GramSystem(A=values.T @ values / n, D=derivs.sum(axis=0) / n)


def build_gram(sample, basis: BSplineBasis) -> GramSystem:
    s = np.asarray(sample, dtype=float).ravel()
    if s.size == 0:
        raise InvalidArgumentError("empty sample")
    values, derivs = eval_basis_with_deriv(basis, s)
    return _gram_from_design(values, derivs)


def default_ridge(gram: GramSystem) -> float:
    return DEFAULT_RIDGE_SCALE * float(np.trace(gram.A)) / gram.A.shape[0]


def _solve_banded(A: np.ndarray, D: np.ndarray, ridge: float) -> np.ndarray:
    k = A.shape[0]
    bw = min(BANDWIDTH, k - 1)
    ab = np.zeros((bw + 1, k))
    for d in range(bw + 1):
        ab[bw - d, d:] = np.diagonal(A, d)
    ab[bw] += ridge
    try:
        gamma = linalg.solveh_banded(ab, D, lower=False)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"score Gram system is not positive definite: {exc}") from exc
    if not np.all(np.isfinite(gamma)):
        raise SingularSystemError("score Gram system produced non-finite coefficients")
    return gamma


def fit_score(gram: GramSystem, basis: BSplineBasis, ridge: float | None = None) -> ScoreFit:
    """Solve ``(A + ridge I) gamma = D``.

    ``ridge=None`` uses ``1e-10 * trace(A) / num_basis``.
    """
    if ridge is None:
        ridge = default_ridge(gram)
    if ridge < 0:
        raise InvalidArgumentError(f"ridge must be >= 0, got {ridge}")
    if not np.any(gram.D):
        return ScoreFit(basis, np.zeros(basis.num_basis))
    return ScoreFit(basis, _solve_banded(gram.A, gram.D, ridge))


def eval_score(fit: ScoreFit, t):
    values = eval_basis(fit.basis, t)
    return values @ fit.gamma


def criterion(gram: GramSystem, gamma: np.ndarray) -> float:
    """Held-out risk ``gamma' A gamma - 2 gamma' D`` (drops the constant ``E[phi^2]``)."""
    return float(gamma @ gram.A @ gamma - 2.0 * gamma @ gram.D)


def knot_grid(n: int) -> np.ndarray:
    top = min(30, int(math.floor(2.0 * n ** (1.0 / 6.0))) + 8)
    return np.arange(2, top + 1)


def select_from_criteria(grid, crit) -> int:
    """Largest grid value up to which ``crit`` strictly decreases.

    Infinite entries mark failed fits; the walk starts at the first finite
    one.  Differences below ``FLAT_TOL`` count as not decreasing.
    """
    grid = list(grid)
    crit = np.asarray(crit, dtype=float)
    finite = np.flatnonzero(np.isfinite(crit))
    if finite.size == 0:
        raise CVFailureError("every candidate knot count gave a singular fit")
    best = int(finite[0])
    for k in range(best + 1, len(grid)):
        if crit[k] < crit[k - 1] - FLAT_TOL:
            best = k
        else:
            break
    return int(grid[best])


def split_halves(n: int, rng_seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(rng_seed).permutation(n)
    cut = (n + 1) // 2
    return perm[:cut], perm[cut:]


def cv_criteria(sample, interval, grid, rng_seed: int = 0, ridge: float | None = None) -> np.ndarray:
    """Two-fold averaged held-out criterion for each knot count in ``grid``."""
    s = np.asarray(sample, dtype=float).ravel()
    first, second = split_halves(s.shape[0], rng_seed)
    out = np.empty(len(grid))
    for idx, num in enumerate(grid):
        basis = make_basis(interval[0], interval[1], int(num))
        values, derivs = eval_basis_with_deriv(basis, s)
        g1 = _gram_from_design(values[first], derivs[first])
        g2 = _gram_from_design(values[second], derivs[second])
        try:
            c21 = criterion(g2, fit_score(g1, basis, ridge).gamma)
            c12 = criterion(g1, fit_score(g2, basis, ridge).gamma)
        except SingularSystemError:
            out[idx] = np.inf
            continue
        out[idx] = 0.5 * (c21 + c12)
    return out


def cross_validate_knots(sample, interval, grid=None, rng_seed: int = 0, ridge: float | None = None) -> int:
    s = np.asarray(sample, dtype=float).ravel()
    if s.shape[0] < 40:
        raise InvalidArgumentError(f"cross-validation needs at least 40 points, got {s.shape[0]}")
    if grid is None:
        grid = knot_grid(s.shape[0])
    grid = np.asarray(grid)
    if grid.size == 0 or grid[0] < 1 or np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("grid must be strictly increasing and start at >= 1")
    return select_from_criteria(grid, cv_criteria(s, interval, grid, rng_seed, ridge))


def estimate_score(sample, c: float = 5.0, rng_seed: int = 0, ridge: float | None = None) -> ScoreFit:
    """Interval selection, cross-validated knot count and final fit in one call."""
    s = np.asarray(sample, dtype=float).ravel()
    interval = select_interval(s, c)
    num = cross_validate_knots(s, interval, rng_seed=rng_seed, ridge=ridge)
    basis = make_basis(interval[0], interval[1], num)
    return fit_score(build_gram(s, basis), basis, ridge)
