"""Approximate Newton-Raphson solver for the empirical efficient-score equation.

Each iteration refits the per-channel score coefficients at the current
estimate on bases frozen from the starting value, assembles the mean
efficient score ``e_n`` and its mean outer product ``Sigma_n``, and moves
``vec(W) += Sigma_n^{-1} e_n``.  ``Sigma_n`` stands in for minus the
Jacobian of ``e_n``; the two share a limit at the truth.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from effica.efficient_score import (
    DiagCoeffs,
    ScoreEquationTerms,
    diag_coeffs_from_values,
    inverse_transpose,
    terms_from_sources,
    unvec,
)
from effica.errors import (
    InvalidArgumentError,
    NumericError,
    SingularInformationError,
    SingularMatrixError,
)
from effica.score import (
    ScoreFit,
    _gram_from_design,
    cross_validate_knots,
    fit_score,
    select_interval,
)
from effica.splines import BSplineBasis, eval_basis_with_deriv, make_basis

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 100
    step_tol: float = 1e-8
    cv_seed: int = 0
    ridge: float | None = None
    score_c: float = 5.0
    max_step_halvings: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidArgumentError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.step_tol > 0:
            raise InvalidArgumentError(f"step_tol must be positive, got {self.step_tol}")
        if self.max_step_halvings < 0:
            raise InvalidArgumentError("max_step_halvings must be >= 0")


@dataclass
class UnmixingEstimate:
    W_hat: np.ndarray
    iterations: int
    converged: bool
    final_residual: float
    fits: list[ScoreFit]
    coeffs: list[DiagCoeffs]
    mean: np.ndarray
    knot_counts: list[int] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    improved: list[bool] = field(default_factory=list)

    def sources(self, data) -> np.ndarray:
        return self.W_hat @ (np.asarray(data, dtype=float) - self.mean[:, None])


@dataclass(frozen=True)
class _Evaluation:
    W: np.ndarray
    fits: list
    coeffs: list
    terms: ScoreEquationTerms

    @property
    def residual(self) -> float:
        return float(np.linalg.norm(self.terms.e_n))


def center_data(data) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[1] < 2:
        raise InvalidArgumentError("need at least two observations to centre")
    mean = X.mean(axis=1)
    return X - mean[:, None], mean


def _channel_cv_seed(cv_seed: int, channel: int) -> int:
    return int(np.random.SeedSequence(cv_seed, spawn_key=(channel,)).generate_state(1)[0])


def fix_knots(data, W0, config: SolverConfig) -> tuple[list[BSplineBasis], list[int]]:
    """Per-channel interval and cross-validated knot count at the starting value."""
    X = np.asarray(data, dtype=float)
    W0 = np.asarray(W0, dtype=float)
    inverse_transpose(W0)
    S = W0 @ X
    bases, counts = [], []
    for k in range(S.shape[0]):
        interval = select_interval(S[k], config.score_c)
        num = cross_validate_knots(
            S[k], interval, rng_seed=_channel_cv_seed(config.cv_seed, k), ridge=config.ridge
        )
        bases.append(make_basis(interval[0], interval[1], num))
        counts.append(num)
    return bases, counts


def _evaluate(X: np.ndarray, W: np.ndarray, bases, config: SolverConfig) -> _Evaluation:
    W_inv_T = inverse_transpose(W)
    S = W @ X
    fits, coeffs, phi = [], [], np.empty_like(S)
    for k, basis in enumerate(bases):
        values, derivs = eval_basis_with_deriv(basis, S[k])
        fit = fit_score(_gram_from_design(values, derivs), basis, config.ridge)
        phi[k] = values @ fit.gamma
        fits.append(fit)
        coeffs.append(diag_coeffs_from_values(S[k], phi[k]))
    return _Evaluation(W, fits, coeffs, terms_from_sources(S, phi, coeffs, W_inv_T))


def newton_direction(terms: ScoreEquationTerms, m: int) -> np.ndarray:
    """``Sigma_n^{-1} e_n`` reshaped to an m x m update."""
    if not np.any(terms.e_n):
        return np.zeros((m, m))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu, piv = linalg.lu_factor(terms.Sigma_n, check_finite=True)
        anorm = np.linalg.norm(terms.Sigma_n, 1)
        rcond = linalg.lapack.dgecon(lu, anorm, norm="1")[0] if anorm > 0 else 0.0
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularInformationError(f"information matrix cannot be factored: {exc}") from exc
    if not rcond >= 1e-14:
        raise SingularInformationError(f"information matrix is singular (rcond={rcond:.3g})")
    return unvec(linalg.lu_solve((lu, piv), terms.e_n), m)


def _step(X, current: _Evaluation, bases, config: SolverConfig):
    """One damped update; returns ``(next evaluation, improved)``."""
    m = current.W.shape[0]
    direction = newton_direction(current.terms, m)
    if not np.any(direction):
        return current, True
    t = 1.0
    fallback = None
    for _ in range(config.max_step_halvings + 1):
        W_try = current.W + t * direction
        try:
            cand = _evaluate(X, W_try, bases, config)
        except NumericError as exc:
            log.debug("step %.3g rejected: %s", t, exc)
        else:
            if cand.residual < current.residual:
                return cand, True
            fallback = cand
        t *= 0.5
    if fallback is None:
        raise SingularMatrixError("every damped step produced a singular system")
    return fallback, False


def effica_iterate(data, W_current, bases, config: SolverConfig) -> tuple[np.ndarray, ScoreEquationTerms]:
    """One iteration from ``W_current``.

    Returns the next estimate and the score-equation terms evaluated at
    ``W_current`` (the ones that produced the step).
    """
    X = np.asarray(data, dtype=float)
    current = _evaluate(X, np.asarray(W_current, dtype=float), bases, config)
    nxt, _ = _step(X, current, bases, config)
    return nxt.W, current.terms


def run(data, W0, config: SolverConfig | None = None) -> UnmixingEstimate:
    """Centre ``data``, freeze the bases at ``W0`` and iterate to convergence.

    Hitting ``max_iters`` is reported through ``converged=False``, not raised.
    """
    config = config or SolverConfig()
    X, mean = center_data(data)
    m, n = X.shape
    W0 = np.asarray(W0, dtype=float)
    if W0.shape != (m, m):
        raise InvalidArgumentError(f"W0 has shape {W0.shape}, expected {(m, m)}")
    if n < 10 * m:
        raise InvalidArgumentError(f"need at least {10 * m} observations, got {n}")

    bases, counts = fix_knots(X, W0, config)
    current = _evaluate(X, W0, bases, config)
    residuals, improved = [current.residual], []
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        nxt, ok = _step(X, current, bases, config)
        change = float(np.linalg.norm(nxt.W - current.W))
        current = nxt
        residuals.append(current.residual)
        improved.append(ok)
        if change <= config.step_tol:
            converged = True
            break
    log.debug("effica: %d iterations, converged=%s, |e_n|=%.3g", iterations, converged, current.residual)
    return UnmixingEstimate(
        W_hat=current.W,
        iterations=iterations,
        converged=converged,
        final_residual=current.residual,
        fits=current.fits,
        coeffs=current.coeffs,
        mean=mean,
        knot_counts=counts,
        residuals=residuals,
        improved=improved,
    )
