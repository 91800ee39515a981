import numpy as np
import pytest

from corenet.compressor import (
    CompressionConfig,
    amplification_params,
    amplify_neuron,
    apply_pruning,
    compress,
    draws_for_expected_distinct,
    generalized_delta,
    prune_neurons,
)
from corenet.errors import ValidationTooSmall
from corenet.linalg import DenseMatrix
from corenet.network import Network, cache_activations, size_of
from corenet.sparsifier import SparseRow

from _support import random_network, rng


class TestAmplificationParams:
    def test_direct_evaluation(self):
        # eta=100, delta=0.1: tau = ceil(log(4000)/log(10/9)) = 79,
        # |T| = ceil(8 log(8*79*100/0.1)) = 107
        tau, t_size, delta_prime = amplification_params(100, 0.1, n_points=1000)
        assert tau == 79
        assert t_size == 107
        assert abs(delta_prime - 0.1 / (4 * 1000 * 79)) <= 1e-18

    def test_tau_at_least_one_and_monotone(self):
        taus = [amplification_params(50, d, 100)[0] for d in (0.5, 0.1, 0.01)]
        assert all(t >= 1 for t in taus)
        assert taus[0] <= taus[1] <= taus[2]


class TestGeneralizedBudget:
    def test_single_point_log_term(self):
        # delta/(2*1) halves delta, turning log(8 eta/delta) into log(16 eta/delta)
        import math
        delta, eta = 0.1, 100
        assert abs(math.log(8 * eta / generalized_delta(delta, 1))
                   - math.log(16 * eta / delta)) <= 1e-12

    def test_arithmetic(self):
        assert generalized_delta(0.05, 100) == 2.5e-4


class TestDrawsForExpectedDistinct:
    def test_expected_distinct_close(self):
        g = rng(90)
        for _ in range(30):
            n = int(g.integers(3, 60))
            q = g.uniform(0.05, 1.0, size=n)
            q /= q.sum()
            target = int(g.integers(1, n + 1))
            m = draws_for_expected_distinct(q, target)
            expected = np.sum(1.0 - (1.0 - q) ** m)
            assert abs(expected - target) <= 1.0

    def test_zero_target(self):
        assert draws_for_expected_distinct(np.array([0.5, 0.5]), 0) == 0

    def test_full_support_needs_many_draws(self):
        q = np.full(10, 0.1)
        m = draws_for_expected_distinct(q, 10)
        assert m > 10  # with-replacement duplicates demand inflation


class TestPruning:
    def _dead_neuron_net(self):
        # hidden neuron 1 has strongly negative incoming weights: always dead
        w2 = np.array([[1.0, 0.5, 0.1], [-5.0, -4.0, -3.0], [0.3, 0.8, 0.0]])
        w3 = np.array([[0.5, 1.0, -0.5, 0.2], [1.5, -2.0, 0.7, 0.1]])
        return Network((DenseMatrix(w2), DenseMatrix(w3)), bias_embedded=True)

    def test_dead_neuron_pruned_live_kept(self):
        net = self._dead_neuron_net()
        pts = np.abs(rng(91).normal(size=(8, 2)))
        cache = cache_activations(net, pts)
        keep = prune_neurons(net, cache)
        assert not keep[2][1]
        assert keep[2][0] and keep[2][2]
        assert keep[3].all()  # output layer never pruned

    def test_pruning_alone_bit_identical_on_cached_points(self):
        net = self._dead_neuron_net()
        pts = np.abs(rng(92).normal(size=(8, 2)))
        cache = cache_activations(net, pts)
        pruned = apply_pruning(net, prune_neurons(net, cache))
        for x in pts:
            assert np.array_equal(net.forward(x), pruned.forward(x))

    def test_pruned_rows_and_columns_removed(self):
        net = self._dead_neuron_net()
        pts = np.abs(rng(93).normal(size=(8, 2)))
        cache = cache_activations(net, pts)
        pruned = apply_pruning(net, prune_neurons(net, cache))
        cols2, _ = pruned.weights[0].row(1)
        assert cols2.size == 0  # incoming row emptied
        for i in range(pruned.weights[1].rows):
            cols3, _ = pruned.weights[1].row(i)
            assert 1 not in cols3  # outgoing edges dropped

    def test_strictly_positive_activation_kept(self):
        net = random_network([3, 4, 2], seed=94, scale=0.5)
        pts = np.abs(rng(95).normal(size=(10, 3))) + 0.5
        cache = cache_activations(net, pts)
        keep = prune_neurons(net, cache)
        live = cache.a[2].max(axis=0) > 0
        assert np.array_equal(keep[2], live)


class TestAmplifyNeuron:
    def test_single_candidate(self):
        cand = SparseRow(np.array([0]), np.array([1.0]))
        best, fb = amplify_neuron([cand], np.array([1.0]), np.array([[1.0, 1.0]]))
        assert best == 0 and fb == 0

    def test_exact_row_wins(self):
        w = np.array([2.0, -1.0, 0.5])
        a = np.array([[0.5, 1.0, 2.0, 1.0], [1.5, 0.2, 0.1, 1.0]])
        z = a[:, :3] @ w
        exact = SparseRow(np.arange(3), w)
        noisy = SparseRow(np.arange(3), w * 1.7)
        best, _ = amplify_neuron([noisy, exact, noisy], z, a)
        assert best == 1

    def test_selected_not_worse_than_mean(self):
        g = rng(96)
        w = g.uniform(0.5, 2.0, size=5)
        a = np.abs(g.normal(size=(6, 5)))
        z = a @ w
        cands = [SparseRow(np.arange(5), w * g.uniform(0.5, 1.5, size=5)) for _ in range(7)]
        errs = []
        for c in cands:
            errs.append(np.mean(np.abs((a @ c.to_dense(5)) / z - 1.0)))
        best, _ = amplify_neuron(cands, z, a)
        assert errs[best] <= np.mean(errs) + 1e-12

    def test_all_skipped_falls_back(self):
        cand = SparseRow(np.array([0]), np.array([1.0]))
        best, fb = amplify_neuron([cand, cand], np.zeros(3), np.ones((3, 2)))
        assert best == 0 and fb == 1


def _validation(seed, n, d, nonneg=True):
    g = rng(seed)
    pts = g.normal(size=(n, d))
    return np.abs(pts) if nonneg else pts


class TestCompress:
    def test_smoke_eps_near_one(self):
        net = random_network([6, 8, 4], seed=100)
        val = _validation(101, 80, 6)
        cfg = CompressionConfig(eps=0.9, delta=0.4, mode="corenet", seed=5)
        result, report = compress(net, val, cfg)
        assert report["sizes"]["compressed"] <= report["sizes"]["original"]
        assert len(report["sizes"]["per_layer_nnz"]) == 2

    def test_validation_too_small(self):
        net = random_network([6, 8, 4], seed=102)
        with pytest.raises(ValidationTooSmall):
            compress(net, _validation(103, 3, 6), CompressionConfig(seed=1))

    def test_budget_mode_sizes(self):
        net = random_network([10, 12, 6], seed=104)
        val = _validation(105, 90, 10)
        cfg = CompressionConfig(mode="corenet", sizing="budget", fraction=0.5, seed=2)
        result, report = compress(net, val, cfg)
        frac = report["sizes"]["retained_fraction"]
        assert 0.4 <= frac <= 0.6

    def test_deterministic_same_seed(self):
        net = random_network([8, 10, 5], seed=106)
        val = _validation(107, 80, 8)
        cfg = CompressionConfig(mode="corenet+", sizing="budget", fraction=0.4, seed=7)
        r1, _ = compress(net, val, cfg)
        r2, _ = compress(net, val, cfg)
        for wa, wb in zip(r1.network.weights, r2.network.weights):
            assert np.array_equal(wa.indices, wb.indices)
            assert np.array_equal(wa.values, wb.values)

    def test_jobs_do_not_change_result(self):
        net = random_network([8, 10, 5], seed=108)
        val = _validation(109, 150, 8)
        base = dict(mode="corenet++", sizing="budget", fraction=0.4, seed=9, tau_max=3)
        r1, _ = compress(net, val, CompressionConfig(jobs=1, **base))
        r8, _ = compress(net, val, CompressionConfig(jobs=8, **base))
        for wa, wb in zip(r1.network.weights, r8.network.weights):
            assert np.array_equal(wa.indices, wb.indices)
            assert np.array_equal(wa.values, wb.values)

    def test_negative_inputs_use_split_path(self):
        net = random_network([5, 6, 3], seed=110)
        val = _validation(111, 80, 5, nonneg=False)
        cfg = CompressionConfig(mode="corenet", sizing="budget", fraction=0.6, seed=3)
        _, report = compress(net, val, cfg)
        assert report["plan"]["first_layer_split"] is True

    def test_theory_mode_exact_when_m_huge(self):
        # tiny eps budget per layer forces m >= |class| everywhere: the rows
        # are kept exactly and the report flags no compression
        net = random_network([5, 6, 3], seed=112)
        val = _validation(113, 80, 5)
        cfg = CompressionConfig(eps=1.0, delta=0.5, mode="corenet", seed=4)
        result, report = compress(net, val, cfg)
        assert report["warnings"]["no_compression"]
        for wa, wb in zip(net.weights, result.network.weights):
            assert np.array_equal(wa.data, wb.to_dense().data)

    def test_amplification_runs_and_reports(self):
        net = random_network([5, 6, 3], seed=114)
        val = _validation(115, 120, 5)
        cfg = CompressionConfig(mode="corenet++", sizing="budget", fraction=0.5,
                                seed=6, tau_max=4)
        _, report = compress(net, val, cfg)
        assert report["plan"]["tau_used"] == 4
        assert report["plan"]["tau_formula"] >= 4
        assert report["plan"]["holdout_size"] >= 1

    def test_recompute_hatted_runs(self):
        net = random_network([6, 8, 4], seed=120)
        val = _validation(121, 80, 6)
        base = dict(mode="corenet", sizing="budget", fraction=0.5, seed=11)
        r_plain, _ = compress(net, val, CompressionConfig(**base))
        r_hat, _ = compress(net, val, CompressionConfig(recompute_hatted=True, **base))
        assert size_of(r_hat.network) > 0
        # first layer feeds from uncompressed inputs either way
        assert np.array_equal(r_plain.network.weights[0].values,
                              r_hat.network.weights[0].values)

    def test_generalize_over_points_tightens_sizes(self):
        net = random_network([6, 8, 4], seed=122)
        val = _validation(123, 200, 6)
        base = dict(eps=0.9, delta=0.4, mode="corenet", seed=12)
        _, rep1 = compress(net, val, CompressionConfig(**base))
        _, rep100 = compress(net, val, CompressionConfig(n_points=100, **base))
        assert rep100["plan"]["delta_sizes"] == pytest.approx(0.4 / 200)
        assert rep100["plan"]["subsample_size"] >= rep1["plan"]["subsample_size"]
        m1 = rep1["plan"]["m_plus"]["2"]
        m100 = rep100["plan"]["m_plus"]["2"]
        assert all(b >= a for a, b in zip(m1, m100))

    def test_report_json_serializable(self):
        import json
        net = random_network([5, 6, 3], seed=116)
        val = _validation(117, 80, 5)
        _, report = compress(net, val, CompressionConfig(
            mode="corenet+", sizing="budget", fraction=0.5, seed=8))
        json.dumps(report)

    def test_size_bounded_by_draw_budget(self):
        # theory-mode invariant: size <= sum over neurons of 2m + 1
        net = random_network([5, 6, 3], seed=118)
        val = _validation(119, 80, 5)
        cfg = CompressionConfig(eps=0.9, delta=0.4, mode="corenet", seed=10)
        result, report = compress(net, val, cfg)
        plan = report["plan"]
        for li, layer in enumerate((2, 3)):
            bound = sum(2 * max(mp, mm) + 1
                        for mp, mm in zip(plan["m_plus"][str(layer)], plan["m_minus"][str(layer)]))
            assert report["sizes"]["per_layer_nnz"][li] <= bound
