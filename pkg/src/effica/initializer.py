"""Starting value for the efficient-score solver.

Prewhitening, symmetric fixed-point FastICA with a tanh nonlinearity and a
handful of random orthogonal restarts, then rescaling each row to unit
absolute median on the data.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from effica.errors import InvalidArgumentError, RankDeficientError


@dataclass(frozen=True)
class WhiteningTransform:
    matrix: np.ndarray
    inverse: np.ndarray


@dataclass(frozen=True)
class FastICAResult:
    B: np.ndarray
    converged: bool
    iterations: int
    contrast: float
    restart: int


def lower_median(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """``ceil(n/2)``-th order statistic along ``axis``."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    k = (n + 1) // 2 - 1
    return np.partition(values, k, axis=axis).take(k, axis=axis)


def prewhiten(data) -> tuple[np.ndarray, WhiteningTransform]:
    """Centre and map to identity sample covariance (``1/n`` normalisation).

    Uses the symmetric inverse square root of the covariance, so data that
    are already white come back with a transform close to the identity.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    Xc = X - X.mean(axis=1, keepdims=True)
    cov = Xc @ Xc.T / X.shape[1]
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 0 or evals[0] <= 1e-12 * evals[-1]:
        raise RankDeficientError(f"covariance is rank deficient (eigenvalues {evals})")
    matrix = (evecs / np.sqrt(evals)) @ evecs.T
    inverse = (evecs * np.sqrt(evals)) @ evecs.T
    return matrix @ Xc, WhiteningTransform(matrix, inverse)


def _sym_decorrelate(B: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(B @ B.T)
    return (evecs / np.sqrt(evals)) @ evecs.T @ B


@functools.cache
def _gauss_logcosh() -> float:
    # E[log cosh g] for standard normal g
    f = lambda x: float(_logcosh(x)) * math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    return integrate.quad(f, -40.0, 40.0, points=[0.0])[0]


def _logcosh(y: np.ndarray) -> np.ndarray:
    a = np.abs(y)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _contrast(B: np.ndarray, Z: np.ndarray) -> float:
    return float(np.sum(np.abs(_logcosh(B @ Z).mean(axis=1) - _gauss_logcosh())))


def _random_orthogonal(rng: np.random.Generator, m: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def _fixed_point(Z, B, tol, max_iters):
    n = Z.shape[1]
    B = _sym_decorrelate(B)
    for it in range(1, max_iters + 1):
        G = np.tanh(B @ Z)
        B_new = G @ Z.T / n - (1.0 - G * G).mean(axis=1)[:, None] * B
        B_new = _sym_decorrelate(B_new)
        change = np.min(np.abs(np.sum(B_new * B, axis=1)))
        B = B_new
        if change > 1.0 - tol:
            return B, True, it
    return B, False, max_iters


def fastica_symmetric(
    white_data,
    restarts: int = 3,
    tol: float = 1e-6,
    max_iters: int = 200,
    rng_seed: int = 0,
    w_init: np.ndarray | None = None,
) -> FastICAResult:
    """Symmetric FastICA on whitened data.

    Restart 0 starts from ``w_init`` when given.  The restart with the
    largest log-cosh negentropy contrast wins, ties going to the lower
    restart index; its ``converged`` flag is reported as is.
    """
    Z = np.atleast_2d(np.asarray(white_data, dtype=float))
    if restarts < 1 or max_iters < 1:
        raise InvalidArgumentError("restarts and max_iters must be >= 1")
    m = Z.shape[0]
    rng = np.random.default_rng(rng_seed)
    starts = [_random_orthogonal(rng, m) for _ in range(restarts)]
    if w_init is not None:
        starts[0] = np.asarray(w_init, dtype=float)

    best = None
    for idx, B0 in enumerate(starts):
        B, ok, its = _fixed_point(Z, B0, tol, max_iters)
        res = FastICAResult(B, ok, its, _contrast(B, Z), idx)
        if best is None or res.contrast > best.contrast:
            best = res
    return best


def compose_initial(B, whitening: WhiteningTransform, data) -> np.ndarray:
    """``B @ whitening`` with rows scaled to unit absolute (lower) median.

    ``data`` is centred first.  Each row is sign-fixed so its
    largest-magnitude entry is positive.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    Xc = X - X.mean(axis=1, keepdims=True)
    W0 = np.asarray(B, dtype=float) @ whitening.matrix
    return normalize_rows(W0, Xc)


def normalize_rows(W: np.ndarray, Xc: np.ndarray) -> np.ndarray:
    W = np.array(W, dtype=float)
    scale = lower_median(np.abs(W @ Xc), axis=1)
    if np.any(scale <= 0) or np.any(~np.isfinite(scale)):
        raise RankDeficientError("a row of the unmixing matrix gives a degenerate projection")
    W /= scale[:, None]
    lead = W[np.arange(W.shape[0]), np.argmax(np.abs(W), axis=1)]
    return W * np.sign(lead)[:, None]


def fastica_init(data, restarts: int = 3, rng_seed: int = 0, tol: float = 1e-6, max_iters: int = 200):
    """Whiten, run FastICA, and return ``(W0, FastICAResult)``."""
    Z, wt = prewhiten(data)
    res = fastica_symmetric(Z, restarts=restarts, tol=tol, max_iters=max_iters, rng_seed=rng_seed)
    return compose_initial(res.B, wt, data), res
