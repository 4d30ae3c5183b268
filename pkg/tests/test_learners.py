import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aucstream.data import Dataset, Instance, SparseVector
from aucstream.exceptions import ConfigError, DataError
from aucstream.learners import (
    init_model,
    lazy_apply,
    load_snapshot,
    materialized_weights,
    sadaoam_prox_coordinate,
    save_snapshot,
    step,
    train_single_pass,
)
from aucstream.objective import HyperParams, per_round_gradient

from conftest import random_sparse_vector, random_stream, stream_dataset


# ---------------------------------------------------------------------------
# independent straight-line transcription of the adaptive update loop,
# dense matrices throughout, used as the composition oracle
# ---------------------------------------------------------------------------


def _bisect_weighted_projection(u, h, radius, tol=1e-10):
    if np.linalg.norm(u) <= radius:
        return u
    lo, hi = 0.0, float(h.max()) * float(np.linalg.norm(u)) / radius
    for _ in range(200):
        nu = 0.5 * (lo + hi)
        w = h * u / (h + nu)
        n = float(np.linalg.norm(w))
        if radius - tol <= n <= radius:
            return w
        if n > radius:
            lo = nu
        else:
            hi = nu
    raise AssertionError("oracle projection failed to converge")


def adaoam_transcription(stream, dim, eta, lam, delta):
    """Dense line-by-line rewrite of the adaptive algorithm; returns the
    pre-step weight trajectory and the final weights."""
    w = np.zeros(dim)
    c = {1: np.zeros(dim), -1: np.zeros(dim)}
    gamma = {1: np.zeros((dim, dim)), -1: np.zeros((dim, dim))}
    t = {1: 0, -1: 0}
    sumsq = np.zeros(dim)
    radius = 1.0 / np.sqrt(lam)
    trajectory = []
    for inst in stream:
        trajectory.append(w.copy())
        x = inst.features.to_dense()
        y = inst.label
        t[y] += 1
        c_prev = c[y].copy()
        c[y] = c_prev + (x - c_prev) / t[y]
        gamma[y] = (
            gamma[y]
            + np.outer(c_prev, c_prev)
            - np.outer(c[y], c[y])
            + (np.outer(x, x) - gamma[y] - np.outer(c_prev, c_prev)) / t[y]
        )
        if t[-y] == 0:
            continue
        v = x - c[-y]
        g = lam * w + gamma[-y] @ w + v * (v @ w)
        g += (c[-y] - x) if y == 1 else (x - c[-y])
        sumsq = sumsq + g * g
        h = delta + np.sqrt(sumsq)
        w = _bisect_weighted_projection(w - eta * (g / h), h, radius)
    return trajectory, w


def sadaoam_eager(stream, dim, eta, lam, theta, delta):
    """Every-coordinate-every-round sparse-variant loop (no laziness);
    gradient through the production mean/covariance path, weight updates
    via the naive full prox sweep."""
    from aucstream.stats import SparseClassStats

    w = np.zeros(dim)
    stats = {1: SparseClassStats(dim), -1: SparseClassStats(dim)}
    sumsq = np.zeros(dim)
    trajectory = []
    for inst in stream:
        trajectory.append(w.copy())
        y = inst.label
        stats[y].update(inst.features)
        if stats[-y].count == 0:
            continue
        g = per_round_gradient(w, inst.features, y, stats[-y], lam)
        sumsq = sumsq + g * g
        h = delta + np.sqrt(sumsq)
        z = w - (eta / h) * g
        w = np.sign(z) * np.maximum(np.abs(z) - eta * theta / h, 0.0)
    return trajectory, w


def hp(eta=0.5, lam=0.25, theta=0.0, delta=1e-8):
    return HyperParams(eta=eta, lambda_=lam, theta=theta, delta=delta)


class TestAdaOAMStep:
    def test_first_instance_no_step(self, rng):
        model = init_model("adaoam", 4, hp())
        x = random_sparse_vector(rng, 4)
        step(model, Instance(x, 1))
        assert np.array_equal(model.weights, np.zeros(4))
        assert model.round == 1
        assert model.pos_stats.count == 1
        assert model.adagrad.rounds_absorbed == 0

    def test_second_instance_direction(self, rng):
        # opposite-class step from w = 0 moves toward the positive-minus-
        # negative difference, scaled per coordinate by eta / (delta + |g_i|)
        params = hp(eta=0.01, lam=1e-4)
        model = init_model("adaoam", 3, params)
        x_pos = random_sparse_vector(rng, 3)
        x_neg = random_sparse_vector(rng, 3)
        step(model, Instance(x_pos, 1))
        step(model, Instance(x_neg, -1))
        g = x_neg.to_dense() - x_pos.to_dense()  # hand-composed gradient at w=0
        expect = -params.eta * g / (params.delta + np.abs(g))
        assert np.max(np.abs(model.weights - expect)) < 1e-12
        diff = x_pos.to_dense() - x_neg.to_dense()
        assert np.all(model.weights * diff >= 0)  # toward the difference

    def test_matches_transcription_oracle(self, rng):
        dim = 6
        stream = random_stream(rng, 50, dim, density=0.7, normalize=True)
        params = hp(eta=0.5, lam=0.25)
        ds = Dataset(stream, dim)
        model, records = train_single_pass(
            ds, "adaoam", params, seed=99, record_trajectory=True
        )
        # replay in the exact consumed order
        ordered = [stream[i] for i in records.visit_order]
        oracle_traj, oracle_w = adaoam_transcription(
            ordered, dim, params.eta, params.lambda_, params.delta
        )
        assert np.max(np.abs(model.weights - oracle_w)) < 1e-10
        for got, want in zip(records.trajectory, oracle_traj):
            assert np.max(np.abs(got - want)) < 1e-10

    def test_ball_feasibility_every_step(self, rng):
        params = hp(eta=2.0, lam=1.0)  # aggressive: projection binds
        model = init_model("adaoam", 5, params)
        radius = 1.0
        bound_hit = 0
        for inst in random_stream(rng, 60, 5, normalize=True):
            step(model, inst)
            n = np.linalg.norm(model.weights)
            assert n <= radius + 1e-9
            if n > radius - 1e-6:
                bound_hit += 1
        assert bound_hit > 0  # the projection actually engaged

    def test_skip_rule_purity(self, rng):
        model = init_model("adaoam", 4, hp())
        for _ in range(10):
            step(model, Instance(random_sparse_vector(rng, 4), 1))
        assert np.array_equal(model.weights, np.zeros(4))
        assert np.array_equal(model.adagrad.sumsq, np.zeros(4))
        assert model.adagrad.rounds_absorbed == 0
        assert model.round == 10


class TestProxCoordinate:
    def test_theta_zero_plain_step(self):
        out = sadaoam_prox_coordinate(w_i=0.5, g_i=0.2, h_ii=2.0, eta=1.0, theta=0.0)
        assert out == 0.5 - (1.0 / 2.0) * 0.2

    def test_threshold_zeroes(self):
        # |w - (eta/h) g| <= eta theta / h -> exactly 0
        out = sadaoam_prox_coordinate(w_i=0.1, g_i=0.0, h_ii=1.0, eta=1.0, theta=0.2)
        assert out == 0.0

    def test_negative_branch(self):
        # w - (eta/h) g < -eta theta / h: differentiable negative-side case
        out = sadaoam_prox_coordinate(w_i=-1.0, g_i=0.0, h_ii=1.0, eta=1.0, theta=0.25)
        assert out == -0.75

    def test_positive_branch(self):
        out = sadaoam_prox_coordinate(w_i=1.0, g_i=0.0, h_ii=1.0, eta=1.0, theta=0.25)
        assert out == 0.75

    @staticmethod
    def composite_1d(v, w_i, g_i, h_ii, eta, theta):
        return eta * g_i * v + eta * theta * abs(v) + 0.5 * h_ii * (v - w_i) ** 2

    def test_matches_numeric_minimizer(self, rng):
        for _ in range(200):
            w_i = float(rng.uniform(-3, 3))
            g_i = float(rng.uniform(-3, 3))
            h_ii = float(rng.uniform(0.1, 5.0))
            eta = float(rng.uniform(0.05, 2.0))
            theta = float(rng.uniform(0.0, 1.0))
            out = sadaoam_prox_coordinate(w_i, g_i, h_ii, eta, theta)
            # grid-plus-refine 1-d minimization of the composite objective
            z = w_i - (eta / h_ii) * g_i
            lo, hi = min(0.0, z) - 1.0, max(0.0, z) + 1.0
            grid = np.linspace(lo, hi, 4001)
            vals = self.composite_1d(grid, w_i, g_i, h_ii, eta, theta)
            center = grid[np.argmin(vals)]
            width = (hi - lo) / 4000
            fine = np.linspace(center - width, center + width, 4001)
            vals = self.composite_1d(fine, w_i, g_i, h_ii, eta, theta)
            best = fine[np.argmin(vals)]
            # include 0 (the kink) as a candidate
            if self.composite_1d(0.0, w_i, g_i, h_ii, eta, theta) <= vals.min():
                best = 0.0
            assert abs(out - best) < 1e-4  # grid resolution bound
            # subgradient optimality at the returned point, tight
            self.assert_subgradient_optimal(out, w_i, g_i, h_ii, eta, theta)

    @staticmethod
    def assert_subgradient_optimal(v, w_i, g_i, h_ii, eta, theta, tol=1e-8):
        smooth = eta * g_i + h_ii * (v - w_i)
        if v > 0:
            assert abs(smooth + eta * theta) <= tol
        elif v < 0:
            assert abs(smooth - eta * theta) <= tol
        else:
            assert abs(smooth) <= eta * theta + tol

    @given(
        st.floats(-10, 10),
        st.floats(-10, 10),
        st.floats(1e-3, 100.0),
        st.floats(1e-3, 10.0),
        st.floats(0.0, 10.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_property_subgradient_optimality(self, w_i, g_i, h_ii, eta, theta):
        v = sadaoam_prox_coordinate(w_i, g_i, h_ii, eta, theta)
        self.assert_subgradient_optimal(v, w_i, g_i, h_ii, eta, theta, tol=1e-8)


class TestLazyApply:
    def _model(self, dim=5, theta=0.3, eta=0.7):
        model = init_model("sadaoam", dim, hp(eta=eta, lam=1e-6, theta=theta))
        return model

    def test_gap_equals_sequential_prox(self, rng):
        model = self._model()
        model.weights = rng.standard_normal(5)
        model.adagrad.sumsq = rng.uniform(0.5, 2.0, size=5)
        w0 = model.weights.copy()
        h = model.adagrad.h_diag()
        k = 7
        model.prox_steps = k
        lazy_apply(model, np.arange(5), k)
        sequential = w0.copy()
        for _ in range(k):
            for i in range(5):
                sequential[i] = sadaoam_prox_coordinate(
                    sequential[i], 0.0, h[i], model.params.eta, model.params.theta
                )
        assert np.max(np.abs(model.weights - sequential)) < 1e-12

    def test_zero_is_absorbing(self):
        model = self._model()
        model.adagrad.sumsq[:] = 1.0
        model.prox_steps = 100
        lazy_apply(model, np.arange(5), 100)
        assert np.array_equal(model.weights, np.zeros(5))

    def test_clamps_to_zero_not_sign_flip(self):
        model = self._model(theta=1.0, eta=1.0)
        model.weights[:] = 0.25
        model.adagrad.sumsq[:] = 0.0  # h = delta, shrinkage enormous
        model.prox_steps = 3
        lazy_apply(model, np.arange(5), 3)
        assert np.array_equal(model.weights, np.zeros(5))


class TestSAdaOAMStep:
    def test_huge_theta_zero_weights(self, rng):
        params = hp(eta=1.0, lam=1e-6, theta=1e6)
        model = init_model("sadaoam", 6, params)
        for inst in random_stream(rng, 30, 6, density=0.5):
            step(model, inst)
            assert np.array_equal(materialized_weights(model), np.zeros(6))

    def test_lazy_equals_eager(self, rng):
        dim = 40
        for theta in (0.0, 1e-4, 1e-2):
            stream = random_stream(rng, 80, dim, density=0.15, normalize=True)
            params = hp(eta=0.8, lam=1e-6, theta=theta)
            ds = Dataset(stream, dim)
            model, records = train_single_pass(
                ds, "sadaoam", params, seed=7, record_trajectory=True
            )
            ordered = [stream[i] for i in records.visit_order]
            eager_traj, eager_w = sadaoam_eager(
                ordered, dim, params.eta, params.lambda_, theta, params.delta
            )
            assert np.max(np.abs(model.weights - eager_w)) < 1e-12
            for got, want in zip(records.trajectory, eager_traj):
                assert np.max(np.abs(got - want)) < 1e-12

    def test_theta_zero_matches_unprojected_adaptive(self, rng):
        # fully dense instances: every coordinate present in every round
        dim = 5
        stream = []
        for k in range(50):
            vals = rng.standard_normal(dim)
            vals[vals == 0.0] = 1.0
            inst = Instance(SparseVector(np.arange(dim), vals, dim), int(rng.choice([-1, 1])))
            stream.append(inst)
        stream[0] = Instance(stream[0].features, 1)
        stream[1] = Instance(stream[1].features, -1)
        params = hp(eta=0.3, lam=0.05, theta=0.0)
        ds = Dataset(stream, dim)
        model, records = train_single_pass(ds, "sadaoam", params, seed=3)

        # unprojected adaptive oracle with dense statistics
        from aucstream.stats import DenseClassStats

        w = np.zeros(dim)
        stats = {1: DenseClassStats(dim), -1: DenseClassStats(dim)}
        sumsq = np.zeros(dim)
        for i in records.visit_order:
            inst = stream[i]
            stats[inst.label].update(inst.features)
            if stats[-inst.label].count == 0:
                continue
            g = per_round_gradient(w, inst.features, inst.label, stats[-inst.label],
                                   params.lambda_)
            sumsq += g * g
            w = w - params.eta * g / (params.delta + np.sqrt(sumsq))
        assert np.max(np.abs(model.weights - w)) < 1e-10

    def test_untouched_coordinates_stay_zero(self, rng):
        dim = 10
        # coordinates 7..9 never appear
        stream = []
        for _ in range(40):
            v = random_sparse_vector(rng, 7, density=0.5)
            stream.append(Instance(SparseVector(v.indices, v.values, dim),
                                   int(rng.choice([-1, 1]))))
        stream[0] = Instance(stream[0].features, 1)
        stream[1] = Instance(stream[1].features, -1)
        ds = Dataset(stream, dim)
        model, _ = train_single_pass(ds, "sadaoam", hp(eta=1.0, lam=1e-6, theta=1e-3),
                                     seed=0)
        assert np.array_equal(model.weights[7:], np.zeros(3))

    def test_clip_to_ball_bounds_norm(self, rng):
        params = hp(eta=5.0, lam=0.5, theta=0.0)
        model = init_model("sadaoam", 4, params, clip_to_ball=True)
        for inst in random_stream(rng, 40, 4, normalize=True):
            step(model, inst)
            assert np.linalg.norm(model.weights) <= model.radius() + 1e-9


class TestOGDPairwise:
    def test_first_instance_unchanged(self, rng):
        model = init_model("ogd_pairwise", 3, hp())
        step(model, Instance(random_sparse_vector(rng, 3), -1))
        assert np.array_equal(model.weights, np.zeros(3))

    def test_zero_gradient_no_move(self, rng):
        # x equals the sole opposite-class instance and w = 0, lambda
        # small: gradient is exactly c_opp - x = 0
        x = random_sparse_vector(rng, 3)
        model = init_model("ogd_pairwise", 3, hp(eta=1.0, lam=1e-12))
        step(model, Instance(x, 1))
        step(model, Instance(x, -1))
        assert np.max(np.abs(model.weights)) < 1e-12

    def test_matches_projected_descent_oracle(self, rng):
        from aucstream.stats import DenseClassStats

        dim = 5
        stream = random_stream(rng, 40, dim, normalize=True)
        params = hp(eta=0.5, lam=0.25)
        ds = Dataset(stream, dim)
        model, records = train_single_pass(ds, "ogd_pairwise", params, seed=5)

        w = np.zeros(dim)
        stats = {1: DenseClassStats(dim), -1: DenseClassStats(dim)}
        radius = 1.0 / np.sqrt(params.lambda_)
        for i in records.visit_order:
            inst = stream[i]
            stats[inst.label].update(inst.features)
            if stats[-inst.label].count == 0:
                continue
            g = per_round_gradient(w, inst.features, inst.label,
                                   stats[-inst.label], params.lambda_)
            u = w - params.eta * g
            n = np.linalg.norm(u)
            w = u if n <= radius else u * (radius / n)
        assert np.max(np.abs(model.weights - w)) < 1e-10

    def test_ball_feasibility(self, rng):
        model = init_model("ogd_pairwise", 4, hp(eta=3.0, lam=1.0))
        for inst in random_stream(rng, 50, 4, normalize=True):
            step(model, inst)
            assert np.linalg.norm(model.weights) <= 1.0 + 1e-9

    def test_equals_adaptive_with_identity_preconditioner(self, rng):
        # forcing H to the identity turns the adaptive step into plain
        # projected descent (the isotropic ball projections coincide)
        from aucstream.adagrad import AdaGradState

        class IdentityPreconditioner(AdaGradState):
            def h_diag(self):
                return np.ones(self.dim)

            def direction(self, g):
                return g

        dim = 4
        params = hp(eta=0.5, lam=0.25)
        adaptive = init_model("adaoam", dim, params)
        adaptive.adagrad = IdentityPreconditioner(dim, delta=params.delta)
        baseline = init_model("ogd_pairwise", dim, params)
        for inst in random_stream(rng, 40, dim, normalize=True):
            step(adaptive, inst)
            step(baseline, inst)
            assert np.max(np.abs(adaptive.weights - baseline.weights)) < 1e-10


class TestUnivariate:
    def test_log_gradient_at_zero(self, rng):
        x = random_sparse_vector(rng, 3)
        model = init_model("uni_log", 3, hp(eta=1.0, lam=1e-12))
        step(model, Instance(random_sparse_vector(rng, 3), 1))
        step(model, Instance(x, -1))  # rho = 1: one of each class
        # w was 0; gradient -y x sigma(0) = x/2; step moves by -eta * grad
        expect = -1.0 * (-(-1) * x.to_dense() * 0.5)
        assert np.max(np.abs(model.weights - expect)) < 1e-12

    def test_exp_gradient_at_zero(self, rng):
        x = random_sparse_vector(rng, 3, scale=0.5)
        model = init_model("uni_exp", 3, hp(eta=1.0, lam=1e-12))
        step(model, Instance(random_sparse_vector(rng, 3), 1))
        step(model, Instance(x, -1))
        expect = -1.0 * (-(-1) * x.to_dense() * 1.0)
        assert np.max(np.abs(model.weights - expect)) < 1e-12

    @pytest.mark.parametrize("algorithm", ["uni_log", "uni_exp"])
    def test_finite_difference_match(self, rng, algorithm):
        dim = 5
        model = init_model(algorithm, dim, hp(eta=1e-3, lam=1e-12))
        for inst in random_stream(rng, 10, dim, normalize=True):
            step(model, inst)
        w0 = model.weights.copy()
        x = random_sparse_vector(rng, dim, density=0.8)
        x = Instance(x, 1)
        from aucstream.data import l2_normalize

        x = l2_normalize(x)
        step(model, x)
        own = model.pos_stats.count
        opp = model.neg_stats.count
        rho = opp / max(own, 1)
        implied_g = (w0 - model.weights) / model.params.eta

        xd = x.features.to_dense()
        if algorithm == "uni_log":
            loss = lambda w: rho * np.log1p(np.exp(-(w @ xd)))
        else:
            loss = lambda w: rho * np.exp(-(w @ xd))
        fd = np.zeros(dim)
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = 1e-6
            fd[i] = (loss(w0 + e) - loss(w0 - e)) / 2e-6
        assert np.linalg.norm(implied_g - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-6

    def test_exp_gradient_clipped(self, rng):
        model = init_model("uni_exp", 2, hp(eta=1e-9, lam=1e-12))
        big = Instance(SparseVector(np.array([0]), np.array([1.0]), 2), -1)
        step(model, Instance(SparseVector(np.array([0]), np.array([1.0]), 2), 1))
        # make the margin strongly negative so exp explodes
        model.weights = np.array([30.0, 0.0])
        w_before = model.weights.copy()
        step(model, big)
        implied_g = (w_before - model.weights) / model.params.eta
        assert np.linalg.norm(implied_g) <= 10.0 + 1e-6


class TestTrainSinglePass:
    def test_deterministic(self, rng):
        ds = stream_dataset(rng, 30, 5, normalize=True)
        m1, _ = train_single_pass(ds, "adaoam", hp(), seed=42)
        m2, _ = train_single_pass(ds, "adaoam", hp(), seed=42)
        assert np.array_equal(m1.weights, m2.weights)

    def test_single_instance_no_step(self, rng):
        ds = Dataset([Instance(random_sparse_vector(rng, 3), 1)], 3)
        with pytest.warns(UserWarning, match="single class"):
            model, _ = train_single_pass(ds, "adaoam", hp(), seed=0)
        assert np.array_equal(model.weights, np.zeros(3))

    def test_round_counter(self, rng):
        ds = stream_dataset(rng, 17, 4)
        model, _ = train_single_pass(ds, "ogd_pairwise", hp(), seed=1)
        assert model.round == 17

    def test_each_instance_once(self, rng):
        ds = stream_dataset(rng, 25, 4)
        _, records = train_single_pass(ds, "adaoam", hp(), seed=9)
        assert sorted(records.visit_order.tolist()) == list(range(25))

    def test_checkpoint_clipping_warns(self, rng):
        ds = stream_dataset(rng, 10, 3, normalize=True)
        seen = []
        with pytest.warns(UserWarning, match="clipped"):
            train_single_pass(ds, "adaoam", hp(), seed=0, checkpoints=[5, 50],
                              hook=lambda r, w: seen.append(r))
        assert seen == [5, 10]

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            train_single_pass(Dataset([], 3), "adaoam", hp(), seed=0)

    def test_unknown_algorithm_rejected(self, rng):
        ds = stream_dataset(rng, 5, 3)
        with pytest.raises(ConfigError):
            train_single_pass(ds, "bogus", hp(), seed=0)


class TestSnapshot:
    def test_roundtrip(self, rng, tmp_path):
        ds = stream_dataset(rng, 30, 6, normalize=True)
        model, _ = train_single_pass(ds, "sadaoam",
                                     hp(eta=1.0, lam=1e-6, theta=1e-3), seed=4)
        path = tmp_path / "model.json"
        save_snapshot(model, path)
        snap = load_snapshot(path)
        assert snap.algorithm == "sadaoam"
        assert snap.dim == 6
        assert snap.round == 30
        assert snap.params.theta == 1e-3
        assert np.array_equal(snap.weights, materialized_weights(model))

    def test_sparse_encoding(self, rng, tmp_path):
        model = init_model("sadaoam", 5, hp(eta=1.0, lam=1e-6, theta=0.0))
        model.weights = np.array([0.0, 1.5, 0.0, -2.0, 0.0])
        path = tmp_path / "m.json"
        save_snapshot(model, path)
        raw = json.loads(path.read_text())
        assert set(raw["weights"]) == {"1", "3"}

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"algorithm": "adaoam"}')
        with pytest.raises(DataError):
            load_snapshot(path)
