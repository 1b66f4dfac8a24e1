"""Separation error metrics invariant to row permutation and scaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from effica.errors import DegenerateAlignmentError, InvalidArgumentError, SingularMatrixError


@dataclass(frozen=True)
class MetricsReport:
    amari: float
    frobenius: float
    permutation: np.ndarray
    signs_scales: np.ndarray


def _check_pair(V, W):
    V = np.atleast_2d(np.asarray(V, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if V.shape != W.shape or V.shape[0] != V.shape[1]:
        raise InvalidArgumentError(f"need two square matrices of equal size, got {V.shape} and {W.shape}")
    return V, W


def _solve_right(V: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``V @ inv(W)``, refusing singular ``W``."""
    if np.linalg.cond(W) > 1e12 or np.linalg.cond(V) > 1e12:
        raise SingularMatrixError("metric inputs must be invertible")
    return np.linalg.solve(W.T, V.T).T


def amari_error(V, W) -> float:
    """Amari error between unmixing matrices, in ``[0, m - 1]``.

    Rows of both matrices are normalised to unit length before forming
    ``a = V W^{-1}``.
    """
    V, W = _check_pair(V, W)
    m = V.shape[0]
    Vn = V / np.linalg.norm(V, axis=1, keepdims=True)
    Wn = W / np.linalg.norm(W, axis=1, keepdims=True)
    a = np.abs(_solve_right(Vn, Wn))
    rows = (a.sum(axis=1) / a.max(axis=1) - 1.0).sum()
    cols = (a.sum(axis=0) / a.max(axis=0) - 1.0).sum()
    return float((rows + cols) / (2.0 * m))


def frobenius_error(V, W) -> MetricsReport:
    """``min ||V' W^{-1} - I||_F`` over row permutations and rescalings of ``V``.

    With ``G = V W^{-1}``, row ``g`` of ``G`` assigned to position ``k`` and
    scaled by its least-squares factor ``g_k / |g|^2`` leaves a squared
    residual of ``1 - g_k^2 / |g|^2``.  The permutation maximising the sum of
    ``g_k^2 / |g|^2`` is therefore the exact minimiser and is found as an
    assignment problem.
    """
    V, W = _check_pair(V, W)
    G = _solve_right(V, W)
    norms2 = np.sum(G * G, axis=1)
    if np.any(norms2 == 0):
        raise DegenerateAlignmentError("gain matrix has a zero row")
    gain = G * G / norms2[:, None]
    rows, cols = linear_sum_assignment(gain, maximize=True)
    perm = np.empty_like(rows)
    perm[cols] = rows
    aligned = G[perm, np.arange(G.shape[0])]
    scales = aligned / norms2[perm]
    residual = G[perm] * scales[:, None] - np.eye(G.shape[0])
    frob = float(np.sqrt(np.sum(residual * residual)))
    return MetricsReport(amari_error(V, W), frob, perm, scales)


def summarize(frob_errors, amari_errors) -> tuple[float, float]:
    """``(mean Amari error, sqrt of mean squared Frobenius error)``."""
    f = np.asarray(frob_errors, dtype=float).ravel()
    a = np.asarray(amari_errors, dtype=float).ravel()
    if f.size == 0 or a.size == 0 or f.size != a.size:
        raise InvalidArgumentError("need two equal, non-empty vectors of errors")
    return float(a.mean()), float(np.sqrt(np.mean(f * f)))
