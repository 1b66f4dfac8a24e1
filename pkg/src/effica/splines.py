"""Cubic B-spline bases on equally spaced knots.

A basis with ``num_basis`` functions lives on ``num_basis + 4`` knots
``lower, lower + spacing, ..., upper``.  There are no repeated boundary
knots, so every basis function vanishes at both ends of the interval; the
score estimator relies on this for its integration-by-parts identity.

Evaluation is vectorised over ``t``.  A scalar ``t`` gives a vector of
length ``num_basis``; an array of shape ``(n,)`` gives an ``(n, num_basis)``
design matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from effica.errors import InvalidArgumentError

ORDER = 4


@dataclass(frozen=True)
class BSplineBasis:
    lower: float
    upper: float
    num_basis: int
    spacing: float = field(init=False)
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or self.upper <= self.lower:
            raise InvalidArgumentError(
                f"degenerate interval [{self.lower}, {self.upper}]"
            )
        if int(self.num_basis) != self.num_basis or self.num_basis < 1:
            raise InvalidArgumentError(f"num_basis must be >= 1, got {self.num_basis}")
        spacing = (self.upper - self.lower) / (self.num_basis + ORDER - 1)
        knots = self.lower + spacing * np.arange(self.num_basis + ORDER)
        knots[-1] = self.upper
        knots.flags.writeable = False
        object.__setattr__(self, "num_basis", int(self.num_basis))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "knots", knots)


def make_basis(lower: float, upper: float, num_basis: int) -> BSplineBasis:
    return BSplineBasis(float(lower), float(upper), num_basis)


def _local_tables(basis: BSplineBasis, t: np.ndarray, orders):
    """Run the order recursion on the knot span containing each ``t``.

    Returns the span index, a mask of points inside ``[lower, upper)`` and,
    for each requested order k, an ``(n, ORDER)`` array whose column c holds
    ``B^k_{j-3+c}(t)`` (0-based basis index, j = span index).
    """
    pos = (t - basis.lower) / basis.spacing
    inside = (t >= basis.lower) & (t < basis.upper)
    span = np.where(inside, np.floor(np.where(inside, pos, 0.0)), 0.0).astype(np.intp)
    # rounding can push points just below ``upper`` onto the last knot
    span = np.minimum(span, basis.num_basis + ORDER - 2)
    u = np.where(inside, pos - span, 0.0)

    vals = np.zeros((t.shape[0], ORDER))
    vals[:, ORDER - 1] = inside
    tables = {}
    if 1 in orders:
        tables[1] = vals.copy()
    for k in range(2, max(orders) + 1):
        for c in range(ORDER):
            offset = ORDER - 1 - c
            right = vals[:, c + 1] if c + 1 < ORDER else 0.0
            vals[:, c] = ((u + offset) * vals[:, c] + (k - offset - u) * right) / (k - 1)
        if k in orders:
            tables[k] = vals.copy()
    return span, inside, tables


def _scatter(basis: BSplineBasis, span, local):
    n = span.shape[0]
    out = np.zeros((n, basis.num_basis))
    cols = span[:, None] - (ORDER - 1) + np.arange(ORDER)[None, :]
    valid = (cols >= 0) & (cols < basis.num_basis)
    rows = np.broadcast_to(np.arange(n)[:, None], cols.shape)
    out[rows[valid], cols[valid]] = local[valid]
    return out


def _as_points(t):
    arr = np.asarray(t, dtype=float)
    return arr.reshape(-1), arr.ndim == 0


def eval_basis(basis: BSplineBasis, t) -> np.ndarray:
    """Values of the cubic basis functions at ``t`` (zero off the interval)."""
    pts, scalar = _as_points(t)
    span, _, tables = _local_tables(basis, pts, (ORDER,))
    out = _scatter(basis, span, tables[ORDER])
    return out[0] if scalar else out


def eval_basis_deriv(basis: BSplineBasis, t) -> np.ndarray:
    """First derivatives, ``B_i' = (B^3_i - B^3_{i+1}) / spacing``."""
    pts, scalar = _as_points(t)
    span, _, tables = _local_tables(basis, pts, (ORDER - 1,))
    low = tables[ORDER - 1]
    shifted = np.zeros_like(low)
    shifted[:, :-1] = low[:, 1:]
    out = _scatter(basis, span, (low - shifted) / basis.spacing)
    return out[0] if scalar else out


def eval_basis_with_deriv(basis: BSplineBasis, t) -> tuple[np.ndarray, np.ndarray]:
    """Values and first derivatives from a single recursion pass."""
    pts, scalar = _as_points(t)
    span, _, tables = _local_tables(basis, pts, (ORDER - 1, ORDER))
    low = tables[ORDER - 1]
    shifted = np.zeros_like(low)
    shifted[:, :-1] = low[:, 1:]
    values = _scatter(basis, span, tables[ORDER])
    derivs = _scatter(basis, span, (low - shifted) / basis.spacing)
    if scalar:
        return values[0], derivs[0]
    return values, derivs


def _eval_basis_deriv2(basis: BSplineBasis, t) -> np.ndarray:
    # second difference of the order-2 functions; only used by property checks
    pts, scalar = _as_points(t)
    span, _, tables = _local_tables(basis, pts, (ORDER - 2,))
    low = tables[ORDER - 2]
    s1 = np.zeros_like(low)
    s2 = np.zeros_like(low)
    s1[:, :-1] = low[:, 1:]
    s2[:, :-2] = low[:, 2:]
    out = _scatter(basis, span, (low - 2.0 * s1 + s2) / basis.spacing**2)
    return out[0] if scalar else out


def bspline_recursion(knots, order: int, t: float) -> np.ndarray:
    """All order-``order`` B-splines at ``t`` by the textbook recursion.

    Works on arbitrary strictly increasing knots and returns
    ``len(knots) - order`` values.  Quadratic in the number of knots; the
    span-local evaluators above are what the estimator uses.
    """
    xi = np.asarray(knots, dtype=float)
    vals = ((xi[:-1] <= t) & (t < xi[1:])).astype(float)
    for k in range(2, order + 1):
        m = len(xi) - k
        left = (t - xi[:m]) / (xi[k - 1 : m + k - 1] - xi[:m]) * vals[:m]
        right = (xi[k : m + k] - t) / (xi[k : m + k] - xi[1 : m + 1]) * vals[1 : m + 1]
        vals = left + right
    return vals
