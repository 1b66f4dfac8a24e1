"""Amari and Frobenius separation errors and their summary."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from effica.errors import InvalidArgumentError, SingularMatrixError
from effica.metrics import amari_error, frobenius_error, summarize


def _random_pd(rng, m):
    P = np.eye(m)[rng.permutation(m)]
    d = rng.uniform(0.1, 10, m) * rng.choice([-1, 1], m)
    return P @ np.diag(d)


def _random_W(rng, m):
    return rng.normal(size=(m, m)) + 0.5 * np.eye(m)


def _amari_oracle(V, W):
    m = V.shape[0]
    Vn = np.array([row / np.sqrt(sum(x * x for x in row)) for row in V])
    Wn = np.array([row / np.sqrt(sum(x * x for x in row)) for row in W])
    a = np.abs(Vn @ np.linalg.inv(Wn))
    total = 0.0
    for i in range(m):
        total += sum(a[i]) / max(a[i]) - 1
    for j in range(m):
        total += sum(a[:, j]) / max(a[:, j]) - 1
    return total / (2 * m)


def _frobenius_oracle(V, W):
    G = V @ np.linalg.inv(W)
    m = G.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(m)):
        total = 0.0
        for k, row in enumerate(perm):
            g = G[row]
            target = np.eye(m)[k]
            res = optimize.minimize_scalar(lambda c: np.sum((c * g - target) ** 2), tol=1e-14)
            total += res.fun
        best = min(best, total)
    return np.sqrt(max(best, 0.0))


class TestAmari:
    def test_self(self):
        W = _random_W(np.random.default_rng(0), 4)
        assert amari_error(W, W) == pytest.approx(0.0, abs=1e-12)

    def test_worked_example(self):
        V = np.array([[1.0, 0.0], [1.0, 1.0]])
        expected = _amari_oracle(V, np.eye(2))
        assert expected == pytest.approx((1 + 1 / np.sqrt(2)) / 4)
        assert amari_error(V, np.eye(2)) == pytest.approx(expected, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**31 - 1))
    def test_matches_oracle(self, m, seed):
        rng = np.random.default_rng(seed)
        V, W = _random_W(rng, m), _random_W(rng, m)
        if max(np.linalg.cond(V), np.linalg.cond(W)) > 1e8:
            return
        assert amari_error(V, W) == pytest.approx(_amari_oracle(V, W), rel=1e-9, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**31 - 1))
    def test_two_sided_invariance(self, m, seed):
        rng = np.random.default_rng(seed)
        V, W = _random_W(rng, m), _random_W(rng, m)
        if max(np.linalg.cond(V), np.linalg.cond(W)) > 1e6:
            return
        PD, QE = _random_pd(rng, m), _random_pd(rng, m)
        assert amari_error(PD @ V, QE @ W) == pytest.approx(amari_error(V, W), abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            m = int(rng.integers(2, 6))
            value = amari_error(rng.normal(size=(m, m)), rng.normal(size=(m, m)))
            assert 0.0 <= value <= m - 1

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            amari_error(np.eye(2), np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            amari_error(np.eye(2), np.eye(3))


class TestFrobenius:
    def test_self(self):
        W = _random_W(np.random.default_rng(2), 3)
        r = frobenius_error(W, W)
        assert r.frobenius == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_array_equal(r.permutation, [0, 1, 2])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**31 - 1))
    def test_permutation_scale_invariance(self, m, seed):
        rng = np.random.default_rng(seed)
        W = _random_W(rng, m)
        if np.linalg.cond(W) > 1e6:
            return
        r = frobenius_error(_random_pd(rng, m) @ W, W)
        assert r.frobenius < 1e-10
        assert r.amari < 1e-10

    def test_brute_force_m3(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            W = _random_W(rng, 3)
            V = _random_pd(rng, 3) @ W + rng.normal(scale=0.3, size=(3, 3))
            assert frobenius_error(V, W).frobenius == pytest.approx(_frobenius_oracle(V, W), abs=1e-10)

    def test_brute_force_far_from_truth(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            V, W = _random_W(rng, 3), _random_W(rng, 3)
            assert frobenius_error(V, W).frobenius == pytest.approx(_frobenius_oracle(V, W), abs=1e-10)

    def test_alignment_never_hurts(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            V, W = _random_W(rng, 4), _random_W(rng, 4)
            raw = np.linalg.norm(V @ np.linalg.inv(W) - np.eye(4))
            assert frobenius_error(V, W).frobenius <= raw + 1e-12

    def test_report_reconstructs_residual(self):
        rng = np.random.default_rng(6)
        V, W = _random_W(rng, 3), _random_W(rng, 3)
        r = frobenius_error(V, W)
        G = V @ np.linalg.inv(W)
        aligned = G[r.permutation] * r.signs_scales[:, None]
        assert np.linalg.norm(aligned - np.eye(3)) == pytest.approx(r.frobenius, abs=1e-12)


class TestSummarize:
    def test_single(self):
        assert summarize([0.3], [0.2]) == (0.2, pytest.approx(0.3))

    def test_rmse(self):
        mean_amari, rmse = summarize([3.0, 4.0], [1.0, 2.0])
        assert mean_amari == 1.5
        assert rmse == pytest.approx(np.sqrt(12.5))

    @pytest.mark.parametrize("args", [([], []), ([1.0], [1.0, 2.0])])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgumentError):
            summarize(*args)
