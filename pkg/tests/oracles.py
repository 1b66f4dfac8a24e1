"""Analytic source laws standardised at the population level.

Each law is rescaled so that E[S] = 0 and med|S| = 1 hold exactly for the
population, which makes E[l*] = 0 at the true unmixing matrix exact rather
than approximate.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from effica.efficient_score import DiagCoeffs


def _exp_abs_median() -> float:
    # P(|E - 1| <= t) = F(1 + t) - F(max(1 - t, 0)) for E ~ exp(1)
    def prob(t):
        return math.exp(-max(1.0 - t, 0.0)) - math.exp(-(1.0 + t))

    return optimize.brentq(lambda t: prob(t) - 0.5, 1e-9, 5.0, xtol=1e-15)


EXP_ABS_MEDIAN = _exp_abs_median()
LOGISTIC_ABS_MEDIAN = math.log(3.0)


@dataclass(frozen=True)
class Law:
    name: str
    sample: Callable[[np.random.Generator, int], np.ndarray]
    density: Callable[[float], float]
    score: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]


def _exp_law() -> Law:
    a = EXP_ABS_MEDIAN
    lo = -1.0 / a
    return Law(
        "exp",
        lambda rng, n: (rng.exponential(1.0, n) - 1.0) / a,
        lambda s: a * math.exp(-(a * s + 1.0)) if s >= lo else 0.0,
        lambda s: np.where(np.asarray(s) >= lo, a, 0.0),
        (lo, math.inf),
    )


def _logistic_law() -> Law:
    a = LOGISTIC_ABS_MEDIAN

    def density(s):
        z = abs(a * s)
        return a * math.exp(-z) / (1.0 + math.exp(-z)) ** 2

    return Law(
        "logistic",
        lambda rng, n: rng.logistic(0.0, 1.0, n) / a,
        density,
        lambda s: a * np.tanh(0.5 * a * np.asarray(s)),
        (-math.inf, math.inf),
    )


EXP = _exp_law()
LOGISTIC = _logistic_law()


def expect(law: Law, f) -> float:
    lo, hi = law.support
    pieces = [(lo, -1.0), (-1.0, 1.0), (1.0, hi)]
    total = 0.0
    for a, b in pieces:
        a, b = max(a, lo), min(b, hi)
        if a < b:
            total += integrate.quad(lambda s: f(s) * law.density(s), a, b, limit=200)[0]
    return total


def population_coeffs(law: Law) -> DiagCoeffs:
    sigma2 = expect(law, lambda s: s * s)
    v = expect(law, lambda s: 2.0 * s if abs(s) <= 1 else 0.0)
    u = expect(law, lambda s: float(law.score(s)) * 2.0 * s if abs(s) <= 1 else 0.0)
    denom = sigma2 - v * v
    return DiagCoeffs(-(1 - u) * v / denom, (1 - u) * sigma2 / denom, sigma2, u, v)
