import numpy as np
import pytest

from aucstream.data import Dataset, Instance
from aucstream.exceptions import DataError
from aucstream.objective import (
    HyperParams,
    full_objective,
    full_objective_gradient,
    gradient_oracle,
    minimize_full_objective,
    per_round_gradient,
    per_round_loss,
)
from aucstream.stats import DenseClassStats, SparseClassStats

from conftest import random_sparse_vector, stream_dataset


def brute_force_loss(w, x, y, buffer, lambda_):
    """Direct summation of the defining pairwise sum (independent oracle)."""
    if not buffer:
        return 0.0
    total = 0.0
    for xi in buffer:
        diff = x.to_dense() - xi.to_dense()
        total += (1.0 - y * float(diff @ w)) ** 2
    return 0.5 * lambda_ * float(w @ w) + total / (2.0 * len(buffer))


def finite_difference(f, w, h=1e-6):
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2.0 * h)
    return g


def stats_from(buffer, dim, kind="dense"):
    s = DenseClassStats(dim) if kind == "dense" else SparseClassStats(dim)
    for v in buffer:
        s.update(v)
    return s


class TestHyperParams:
    def test_validation(self):
        from aucstream.exceptions import ConfigError

        with pytest.raises(ConfigError):
            HyperParams(eta=0.0, lambda_=0.1)
        with pytest.raises(ConfigError):
            HyperParams(eta=1.0, lambda_=-0.1)
        with pytest.raises(ConfigError):
            HyperParams(eta=float("nan"), lambda_=0.1)
        hp = HyperParams(eta=0.5, lambda_=0.01, theta=1e-4)
        assert hp.delta == 1e-8


class TestPerRoundLoss:
    def test_no_history_is_zero(self, rng):
        x = random_sparse_vector(rng, 4)
        assert per_round_loss(np.ones(4), x, 1, [], 0.5) == 0.0
        assert per_round_loss(np.ones(4), x, 1, DenseClassStats(4), 0.5) == 0.0

    def test_plug_in_half(self, rng):
        x = random_sparse_vector(rng, 3)
        opp = [random_sparse_vector(rng, 3)]
        assert per_round_loss(np.zeros(3), x, 1, opp, 0.0) == 0.5

    def test_buffer_matches_direct_summation(self, rng):
        for _ in range(20):
            x = random_sparse_vector(rng, 6)
            buffer = [random_sparse_vector(rng, 6) for _ in range(7)]
            w = rng.standard_normal(6)
            y = int(rng.choice([-1, 1]))
            lam = float(rng.uniform(0, 1))
            got = per_round_loss(w, x, y, buffer, lam)
            want = brute_force_loss(w, x, y, buffer, lam)
            assert abs(got - want) < 1e-12

    def test_stats_form_unbiased_vs_buffer_every_prefix(self, rng):
        dim = 7
        stats = {1: DenseClassStats(dim), -1: DenseClassStats(dim)}
        buffers = {1: [], -1: []}
        for t in range(200):
            x = random_sparse_vector(rng, dim, density=0.6)
            y = int(rng.choice([-1, 1]))
            w = rng.standard_normal(dim)
            from_stats = per_round_loss(w, x, y, stats[-y], 0.3)
            from_buffer = per_round_loss(w, x, y, buffers[-y], 0.3)
            assert abs(from_stats - from_buffer) < 1e-12
            stats[y].update(x)
            buffers[y].append(x)

    def test_sparse_stats_form_matches_buffer(self, rng):
        dim = 9
        buffer = [random_sparse_vector(rng, dim, density=0.3) for _ in range(40)]
        s = stats_from(buffer, dim, kind="sparse")
        for _ in range(10):
            w = rng.standard_normal(dim)
            x = random_sparse_vector(rng, dim)
            a = per_round_loss(w, x, -1, s, 0.1)
            b = per_round_loss(w, x, -1, buffer, 0.1)
            assert abs(a - b) < 1e-11

    def test_convexity_witness(self, rng):
        dim = 5
        buffer = [random_sparse_vector(rng, dim) for _ in range(6)]
        s = stats_from(buffer, dim)
        x = random_sparse_vector(rng, dim)
        for _ in range(50):
            w1 = rng.standard_normal(dim)
            w2 = rng.standard_normal(dim)
            a = rng.uniform()
            lhs = per_round_loss(a * w1 + (1 - a) * w2, x, 1, s, 0.2)
            rhs = a * per_round_loss(w1, x, 1, s, 0.2) + (1 - a) * per_round_loss(
                w2, x, 1, s, 0.2
            )
            assert lhs <= rhs + 1e-10

    def test_label_swap_symmetry(self, rng):
        # flipping every label (so the class roles swap) and negating the
        # model leaves the loss invariant, exactly: only sign flips occur
        dim = 4
        buffer = [random_sparse_vector(rng, dim) for _ in range(5)]
        s = stats_from(buffer, dim)
        x = random_sparse_vector(rng, dim)
        for _ in range(20):
            w = rng.standard_normal(dim)
            assert per_round_loss(w, x, 1, s, 0.1) == per_round_loss(-w, x, -1, s, 0.1)
            assert per_round_loss(w, x, -1, buffer, 0.3) == per_round_loss(
                -w, x, 1, buffer, 0.3
            )


class TestPerRoundGradient:
    def test_single_negative_hand_value(self, rng):
        x = random_sparse_vector(rng, 4)
        x_neg = random_sparse_vector(rng, 4)
        s = stats_from([x_neg], 4)
        g = per_round_gradient(np.zeros(4), x, 1, s, 0.0)
        assert np.max(np.abs(g - (x_neg.to_dense() - x.to_dense()))) < 1e-14

    def test_empty_stats_rejected(self, rng):
        with pytest.raises(DataError):
            per_round_gradient(np.zeros(3), random_sparse_vector(rng, 3), 1,
                               DenseClassStats(3), 0.1)

    def test_matches_finite_differences(self, rng):
        for _ in range(100):
            dim = int(rng.integers(2, 21))
            buffer = [random_sparse_vector(rng, dim, density=0.6)
                      for _ in range(int(rng.integers(1, 9)))]
            s = stats_from(buffer, dim)
            x = random_sparse_vector(rng, dim, density=0.6)
            y = int(rng.choice([-1, 1]))
            lam = float(rng.uniform(0, 0.5))
            w = rng.standard_normal(dim)
            g = per_round_gradient(w, x, y, s, lam)
            fd = finite_difference(lambda v: per_round_loss(v, x, y, s, lam), w)
            denom = max(np.linalg.norm(g), 1e-12)
            assert np.linalg.norm(g - fd) / denom < 1e-6

    def test_matches_gradient_oracle(self, rng):
        for _ in range(50):
            dim = int(rng.integers(2, 15))
            buffer = [random_sparse_vector(rng, dim) for _ in range(int(rng.integers(1, 7)))]
            s = stats_from(buffer, dim)
            x = random_sparse_vector(rng, dim)
            y = int(rng.choice([-1, 1]))
            lam = float(rng.uniform(0, 0.5))
            w = rng.standard_normal(dim)
            g = per_round_gradient(w, x, y, s, lam)
            oracle = gradient_oracle(w, x, y, buffer, lam)
            assert np.max(np.abs(g - oracle)) < 1e-10

    def test_sparse_stats_gradient_matches_oracle(self, rng):
        dim = 12
        buffer = [random_sparse_vector(rng, dim, density=0.25) for _ in range(9)]
        s = stats_from(buffer, dim, kind="sparse")
        for _ in range(10):
            x = random_sparse_vector(rng, dim, density=0.25)
            w = rng.standard_normal(dim)
            g = per_round_gradient(w, x, -1, s, 0.05)
            oracle = gradient_oracle(w, x, -1, buffer, 0.05)
            assert np.max(np.abs(g - oracle)) < 1e-10


class TestGradientOracle:
    def test_buffer_of_one(self, rng):
        x = random_sparse_vector(rng, 3)
        x_neg = random_sparse_vector(rng, 3)
        g = gradient_oracle(np.zeros(3), x, 1, [x_neg], 0.0)
        assert np.allclose(g, x_neg.to_dense() - x.to_dense(), atol=1e-14)

    def test_lambda_term_dominates(self, rng):
        # buffer equal to x: every pairwise difference is zero, so the
        # loss part contributes nothing and the gradient is lambda w
        x = random_sparse_vector(rng, 5)
        w = rng.standard_normal(5)
        for lam in (1.0, 100.0, 1e6):
            g = gradient_oracle(w, x, 1, [x], lam)
            assert np.max(np.abs(g - lam * w)) < 1e-9 * max(lam, 1.0)
            s = stats_from([x], 5)
            g2 = per_round_gradient(w, x, 1, s, lam)
            fd = finite_difference(
                lambda v: per_round_loss(v, x, 1, s, lam), w, h=1e-6 / max(1.0, lam ** 0.5)
            )
            assert np.linalg.norm(g2 - fd) / np.linalg.norm(g2) < 1e-5

    def test_empty_buffer_rejected(self, rng):
        with pytest.raises(DataError):
            gradient_oracle(np.zeros(3), random_sparse_vector(rng, 3), 1, [], 0.1)


class TestFullObjective:
    def test_zero_weight_value(self, rng):
        ds = stream_dataset(rng, 30, 5)
        assert full_objective(np.zeros(5), ds, 0.7) == pytest.approx(0.5, abs=1e-15)

    def test_single_pair_formula(self, rng):
        xp = random_sparse_vector(rng, 4)
        xn = random_sparse_vector(rng, 4)
        ds = Dataset([Instance(xp, 1), Instance(xn, -1)], 4)
        w = rng.standard_normal(4)
        lam = 0.3
        expect = 0.5 * lam * w @ w + 0.5 * (1 - w @ (xp.to_dense() - xn.to_dense())) ** 2
        assert full_objective(w, ds, lam) == pytest.approx(expect, abs=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        ds = stream_dataset(rng, 25, 6)
        for _ in range(10):
            w = rng.standard_normal(6)
            g = full_objective_gradient(w, ds, 0.2)
            fd = finite_difference(lambda v: full_objective(v, ds, 0.2), w)
            assert np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-12) < 1e-6

    def test_single_class_rejected(self, rng):
        insts = [Instance(random_sparse_vector(rng, 3), 1) for _ in range(4)]
        ds = Dataset(insts, 3)
        with pytest.raises(DataError):
            full_objective(np.zeros(3), ds, 0.1)

    def test_minimizer_certificate(self, rng):
        ds = stream_dataset(rng, 40, 5, normalize=True)
        w_star, gnorm = minimize_full_objective(ds, 0.1, tol=1e-8)
        assert gnorm < 1e-8
        # no feasible direction improves: the certificate itself
        assert np.linalg.norm(full_objective_gradient(w_star, ds, 0.1)) < 1e-8
        assert np.linalg.norm(w_star) <= 1.0 / np.sqrt(0.1) + 1e-9

    def test_minimizer_beats_random_points(self, rng):
        ds = stream_dataset(rng, 30, 4, normalize=True)
        w_star, _ = minimize_full_objective(ds, 0.2, tol=1e-8)
        best = full_objective(w_star, ds, 0.2)
        for _ in range(200):
            w = rng.standard_normal(4) * rng.uniform(0, 2)
            assert best <= full_objective(w, ds, 0.2) + 1e-12
