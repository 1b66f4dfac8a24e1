"""Efficient score of the unmixing matrix and its empirical moments.

For ``s = W x`` the efficient score is ``vec(M(s) W^{-T})`` with

    M_ij(s) = -phi_i(s_i) s_j                   (i != j)
    M_ii(s) = alpha_i s_i + beta_i kappa(s_i)

The diagonal is the projection of ``1 - phi_i(S_i) S_i`` onto
span{S_i, kappa(S_i)}: the nuisance tangent space of source i is everything
orthogonal to {1, S_i, kappa(S_i)}, and the mean-zero / unit-absolute-median
constraints are what keep those three directions out of it.  Off-diagonal
entries are already orthogonal to every nuisance tangent by independence.

``vec`` stacks columns throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from effica.errors import IllConditionedScaleError, InvalidArgumentError, SingularMatrixError

RCOND_MIN = 1e-12
SCALE_GUARD = 1e-8

ScoreFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DiagCoeffs:
    alpha: float
    beta: float
    sigma2: float
    u: float
    v: float


@dataclass(frozen=True)
class ScoreEquationTerms:
    e_n: np.ndarray
    Sigma_n: np.ndarray


def kappa(s):
    """``+1`` inside ``[-1, 1]`` (boundary included), ``-1`` outside."""
    return np.where(np.abs(s) <= 1.0, 1.0, -1.0)


def psi(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) <= 1.0, 2.0 * s, 0.0)


def vec(A: np.ndarray) -> np.ndarray:
    return np.asarray(A).reshape(-1, order="F")


def unvec(v: np.ndarray, m: int) -> np.ndarray:
    return np.asarray(v).reshape(m, m, order="F")


def diag_coeffs_from_values(s: np.ndarray, phi: np.ndarray) -> DiagCoeffs:
    s = np.asarray(s, dtype=float).ravel()
    if s.size == 0:
        raise InvalidArgumentError("empty channel sample")
    ps = psi(s)
    u = float(np.mean(phi * ps))
    v = float(np.mean(ps))
    sigma2 = float(np.mean(s * s))
    denom = sigma2 - v * v
    if not sigma2 > 0 or denom <= SCALE_GUARD * sigma2:
        raise IllConditionedScaleError(
            f"second moment {sigma2:.3g} too close to v^2 = {v * v:.3g}"
        )
    return DiagCoeffs(
        alpha=-(1.0 - u) * v / denom,
        beta=(1.0 - u) * sigma2 / denom,
        sigma2=sigma2,
        u=u,
        v=v,
    )


def diag_coeffs(channel_sample, fit: ScoreFunction) -> DiagCoeffs:
    """Plug-in ``alpha, beta`` from empirical ``u = E[phi psi]``, ``v = E[psi]``, ``E[s^2]``."""
    s = np.asarray(channel_sample, dtype=float).ravel()
    return diag_coeffs_from_values(s, np.asarray(fit(s), dtype=float))


def build_M(s, fits: Sequence[ScoreFunction], coeffs: Sequence[DiagCoeffs]) -> np.ndarray:
    s = np.asarray(s, dtype=float).ravel()
    m = s.shape[0]
    if len(fits) != m or len(coeffs) != m:
        raise InvalidArgumentError("need one score fit and one DiagCoeffs per channel")
    phi = np.array([float(np.asarray(fits[i](s[i]))) for i in range(m)])
    return _M_batch(s[:, None], phi[:, None], coeffs)[0]


def _M_batch(S: np.ndarray, phi: np.ndarray, coeffs: Sequence[DiagCoeffs]) -> np.ndarray:
    """``(n, m, m)`` stack of M for sources ``S`` and scores ``phi`` (both m x n)."""
    m = S.shape[0]
    alpha = np.array([c.alpha for c in coeffs])[:, None]
    beta = np.array([c.beta for c in coeffs])[:, None]
    M = -phi.T[:, :, None] * S.T[:, None, :]
    idx = np.arange(m)
    M[:, idx, idx] = (alpha * S + beta * kappa(S)).T
    return M


def inverse_transpose(W: np.ndarray) -> np.ndarray:
    """``W^{-T}`` from one LU factorisation; near-singular ``W`` is rejected."""
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise SingularMatrixError("matrix has non-finite entries")
    with warnings.catch_warnings():
        # exact singularity is reported through rcond below
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(W, check_finite=False)
    anorm = np.linalg.norm(W, 1)
    rcond = 0.0
    if anorm > 0 and np.all(np.diag(lu) != 0):
        rcond = linalg.lapack.dgecon(lu, anorm, norm="1")[0]
    if not rcond >= RCOND_MIN:
        raise SingularMatrixError(f"matrix is numerically singular (rcond={rcond:.3g})")
    return linalg.lu_solve((lu, piv), np.eye(W.shape[0]), trans=1, check_finite=False)


def _scores_from_M(M: np.ndarray, W_inv_T: np.ndarray) -> np.ndarray:
    L = M @ W_inv_T
    n, m, _ = L.shape
    return L.transpose(0, 2, 1).reshape(n, m * m)


def efficient_score_at(x, W, fits, coeffs) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    s = W @ np.asarray(x, dtype=float).ravel()
    return vec(build_M(s, fits, coeffs) @ inverse_transpose(W))


def terms_from_sources(S: np.ndarray, phi: np.ndarray, coeffs, W_inv_T: np.ndarray) -> ScoreEquationTerms:
    """Mean score and mean outer product given sources ``S`` and scores ``phi``."""
    scores = _scores_from_M(_M_batch(S, phi, coeffs), W_inv_T)
    n = scores.shape[0]
    return ScoreEquationTerms(e_n=scores.sum(axis=0) / n, Sigma_n=scores.T @ scores / n)


def score_equation_terms(data, W, fits, coeffs) -> ScoreEquationTerms:
    X = np.asarray(data, dtype=float)
    W = np.asarray(W, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise InvalidArgumentError("data must be an m x n matrix with n >= 1")
    W_inv_T = inverse_transpose(W)
    S = W @ X
    phi = np.vstack([np.asarray(fits[k](S[k]), dtype=float) for k in range(S.shape[0])])
    return terms_from_sources(S, phi, coeffs, W_inv_T)
