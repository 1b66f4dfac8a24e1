"""Source laws for the benchmark experiments and the mixing step.

Law ids 0-12 are single distributions; rows 13-15 of the benchmark table
pair two different laws and are expanded by :func:`table2_sources`.

Mixture families take optional ``params``:

* 7  ``rate`` (10.0) of the exponential added to N(0, 1)
* 9  ``weight`` (0.5) on +exp(1), rest on -exp(1)
* 10 ``weight`` (0.5) on exp(1), rest on N(0, 1)
* 11 ``weight`` (0.5), ``shift`` (3.0): weight N(-shift, 1) + rest N(shift, 1)
* 12 ``weight`` (0.5), ``wide_sd`` (3.0): weight N(0, 1) + rest N(0, wide_sd^2)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from effica.errors import InvalidArgumentError
from effica.initializer import lower_median

LAW_NAMES = {
    0: "normal(0,1)",
    1: "exp(1)",
    2: "t(3)",
    3: "lognormal(1,1)",
    4: "t(5)",
    5: "logistic(0,1)",
    6: "weibull(3,1)",
    7: "exp(10)+normal(0,1)",
    8: "exp(1)+uniform(0,1)",
    9: "mixture exp",
    10: "mixture exp/normal",
    11: "gaussian mixture, multimodal",
    12: "gaussian mixture, unimodal",
}

PAIRED_ROWS = {13: (1, 0), 14: (3, 0), 15: (6, 1)}

_DEFAULTS = {
    7: {"rate": 10.0},
    9: {"weight": 0.5},
    10: {"weight": 0.5},
    11: {"weight": 0.5, "shift": 3.0},
    12: {"weight": 0.5, "wide_sd": 3.0},
}


@dataclass(frozen=True)
class SourceSpec:
    law: int
    standardize: bool = True
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.law not in LAW_NAMES:
            raise InvalidArgumentError(f"unknown source law {self.law!r}")
        allowed = _DEFAULTS.get(self.law, {})
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise InvalidArgumentError(f"law {self.law} takes no parameters {sorted(unknown)}")
        w = self.resolved().get("weight")
        if w is not None and not 0.0 < w < 1.0:
            raise InvalidArgumentError(f"mixture weight must lie in (0, 1), got {w}")

    def resolved(self) -> dict:
        return {**_DEFAULTS.get(self.law, {}), **self.params}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    m: int
    n: int
    sources: Sequence[SourceSpec]
    W_true: np.ndarray
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        W = np.asarray(self.W_true, dtype=float)
        if len(self.sources) != self.m:
            raise InvalidArgumentError(f"{self.name}: {len(self.sources)} sources for m={self.m}")
        if W.shape != (self.m, self.m) or np.linalg.cond(W) > 1e12:
            raise InvalidArgumentError(f"{self.name}: W_true must be an invertible {self.m}x{self.m} matrix")
        if self.n < 1 or self.replications < 1:
            raise InvalidArgumentError(f"{self.name}: n and replications must be positive")
        object.__setattr__(self, "W_true", W)


def _draw(law: int, p: dict, n: int, rng: np.random.Generator) -> np.ndarray:
    if law == 0:
        return rng.standard_normal(n)
    if law == 1:
        return rng.exponential(1.0, n)
    if law == 2:
        return rng.standard_t(3, n)
    if law == 3:
        return rng.lognormal(1.0, 1.0, n)
    if law == 4:
        return rng.standard_t(5, n)
    if law == 5:
        return rng.logistic(0.0, 1.0, n)
    if law == 6:
        return rng.weibull(3.0, n)
    if law == 7:
        return rng.exponential(1.0 / p["rate"], n) + rng.standard_normal(n)
    if law == 8:
        return rng.exponential(1.0, n) + rng.uniform(0.0, 1.0, n)
    pick = rng.uniform(size=n) < p["weight"]
    if law == 9:
        e = rng.exponential(1.0, n)
        return np.where(pick, e, -e)
    if law == 10:
        return np.where(pick, rng.exponential(1.0, n), rng.standard_normal(n))
    if law == 11:
        return rng.standard_normal(n) + np.where(pick, -p["shift"], p["shift"])
    return rng.standard_normal(n) * np.where(pick, 1.0, p["wide_sd"])


def standardize(x: np.ndarray) -> np.ndarray:
    """Shift to empirical mean 0, then scale to unit lower median of ``|x|``."""
    x = np.asarray(x, dtype=float)
    centred = x - x.mean()
    scale = lower_median(np.abs(centred))
    if scale <= 0:
        raise InvalidArgumentError("cannot standardise a sample whose absolute median is 0")
    return centred / scale


def sample_source(spec: SourceSpec, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws; ``seed`` is an int or a ``numpy.random.SeedSequence``."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    x = _draw(spec.law, spec.resolved(), n, np.random.default_rng(seed))
    return standardize(x) if spec.standardize else x


def channel_seed(seed: int, replication_index: int, channel: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(replication_index, channel))


def make_dataset(spec: ExperimentSpec, replication_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw sources and return ``(X, W_true)`` with ``X = W_true^{-1} S``."""
    S = np.vstack(
        [sample_source(src, spec.n, channel_seed(spec.seed, replication_index, k))
         for k, src in enumerate(spec.sources)]
    )
    return np.linalg.solve(spec.W_true, S), spec.W_true


def table2_sources(row: int, m: int = 2, standardize: bool = True) -> list[SourceSpec]:
    """Sources for a benchmark-table row: ``m`` copies of law ``row`` or a fixed pair."""
    if row in PAIRED_ROWS:
        if m != 2:
            raise InvalidArgumentError(f"row {row} is a two-source experiment")
        return [SourceSpec(law, standardize) for law in PAIRED_ROWS[row]]
    return [SourceSpec(row, standardize) for _ in range(m)]


def w_preset(name: str, m: int) -> np.ndarray:
    """``identity``, ``classic`` (the 2x2 matrix [[2, 1], [2, 3]]) or ``shifted`` (I + V)."""
    if name == "identity":
        return np.eye(m)
    if name == "classic":
        if m != 2:
            raise InvalidArgumentError("the 'classic' preset is 2x2")
        return np.array([[2.0, 1.0], [2.0, 3.0]])
    if name == "shifted":
        j = np.arange(1, m + 1)[:, None]
        k = np.arange(1, m + 1)[None, :]
        return np.eye(m) + j / m**2 + (k - 1) / m
    raise InvalidArgumentError(f"unknown W preset {name!r}")
