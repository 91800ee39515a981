"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s or -v to see them). Tolerances are fixed here,
not tuned at runtime."""
import math
import time

import numpy as np

from corenet.baselines import entrywise_sparsify, svd_compress
from corenet.compressor import (
    CompressionConfig,
    amplification_params,
    apply_pruning,
    compress,
    prune_neurons,
)
from corenet.data import make_digits
from corenet.evaluation import accuracy, sweep
from corenet.linalg import DenseMatrix
from corenet.network import (
    Network,
    TrainConfig,
    cache_activations,
    forward,
    train,
)
from corenet.sensitivity import compute_profile, sample_complexity
from corenet.sparsifier import draw_row, make_distribution, sparsify

from _support import random_network, rng


def _report(name: str, ok: bool, detail: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


def test_unbiasedness_suite():
    """MC mean of <w_hat, a> within 3 SE of <w, a> for all five samplers on
    20 random neurons, 1e4 runs each, under 60 s."""
    start = time.time()
    g = rng(202)
    n_runs = 10_000
    worst = 0.0
    for neuron_i in range(20):
        n_edges = int(g.integers(5, 51))
        w = g.uniform(0.2, 3.0, size=n_edges) * g.choice([-1.0, 1.0], size=n_edges)
        a_rows = g.uniform(0.1, 2.0, size=(3, n_edges))
        a = a_rows[0]
        want = float(np.dot(w, a))
        m = max(2, n_edges // 3)
        idx = np.arange(n_edges)
        # distributions are per-neuron constants: build once, draw 1e4 times
        sens_parts, unif_parts = [], []
        for mask, sign in ((w > 0, 1.0), (w < 0, -1.0)):
            if mask.any():
                contrib = (sign * w[mask]) * a_rows[:, mask]
                s = (contrib / contrib.sum(axis=1, keepdims=True)).max(axis=0)
                sens_parts.append((make_distribution(idx[mask], s), sign * w[mask], sign))
                unif_parts.append((make_distribution(idx[mask], np.ones(int(mask.sum()))),
                                   sign * w[mask], sign))
        w_mat = DenseMatrix(w[np.newaxis, :])

        def consolidated_dot(parts):
            total = 0.0
            for dist, part_w, sign in parts:
                row = draw_row(dist, part_w, m, g)
                total += sign * float(np.dot(row.values, a[row.columns]))
            return total

        def entry_draw(scheme):
            mat = entrywise_sparsify(w_mat, m, scheme, g)
            cols, vals = mat.row(0)
            return float(np.dot(vals, a[cols]))

        samplers = {
            "corenet": lambda: consolidated_dot(sens_parts),
            "uniform": lambda: consolidated_dot(unif_parts),
            "l1": lambda: entry_draw("l1"),
            "l2": lambda: entry_draw("l2"),
            "l1l2": lambda: entry_draw("l1l2"),
        }
        for name, draw in samplers.items():
            vals = np.fromiter((draw() for _ in range(n_runs)), dtype=float, count=n_runs)
            se = vals.std() / math.sqrt(n_runs) + 1e-12
            z = abs(vals.mean() - want) / se
            worst = max(worst, z)
            assert z <= 3.0, f"neuron {neuron_i} {name}: z={z:.2f}"
    elapsed = time.time() - start
    _report("unbiasedness suite",
            worst <= 3.0 and elapsed < 60.0,
            f"worst z={worst:.2f} over 100 cells, {elapsed:.1f}s")


def test_sensitivity_bound():
    """Each sign-class sensitivity sum stays at or below the subsample size
    for every neuron of 50 trained and untrained networks, under 30 s."""
    start = time.time()
    checked = 0
    g = rng(203)
    nets = []
    for i in range(44):
        sizes = [int(g.integers(3, 12)) for _ in range(int(g.integers(2, 5)))]
        nets.append(random_network(sizes, seed=300 + i))
    data = make_digits(400, seed=77)
    for i in range(6):
        nets.append(train([64, int(g.integers(8, 24)), 10], data,
                          TrainConfig(epochs=2, seed=400 + i, batch_size=100)))
    for net in nets:
        n_pts = int(g.integers(2, 9))
        pts = np.abs(g.normal(size=(n_pts, net.input_dim)))
        cache = cache_activations(net, pts)
        profile = compute_profile(net, cache, first_layer_split=False)
        for ls in profile.layers.values():
            assert np.all(ls.sum_plus <= n_pts + 1e-9)
            assert np.all(ls.sum_minus <= n_pts + 1e-9)
            checked += ls.sum_plus.size
    elapsed = time.time() - start
    _report("sensitivity bound", elapsed < 30.0,
            f"{checked} neurons across {len(nets)} networks, {elapsed:.1f}s")


def test_formula_oracles():
    """Per-layer-budget sample sizes equal the flat theorem form on 100
    random tuples; trial and holdout counts match direct evaluation."""
    g = rng(204)
    for _ in range(100):
        n_layers = int(g.integers(2, 6))
        layer = int(g.integers(2, n_layers + 1))
        dhats = {l: float(g.uniform(1.0, 4.0)) for l in range(2, n_layers + 1)}
        eps = float(g.uniform(0.05, 0.99))
        delta = float(g.uniform(0.01, 0.5))
        sens = float(g.uniform(0.2, 30.0))
        k = float(g.uniform(0.5, 4.0))
        eta = int(g.integers(2, 500))
        prod = float(np.prod([dhats[l] for l in range(layer, n_layers + 1)]))
        eps_layer = eps / (2.0 * (n_layers - 1)) / prod
        got = sample_complexity(sens, k, eps_layer, eta, delta)
        theorem = math.ceil(32.0 * (n_layers - 1) ** 2 * prod ** 2 * sens * k
                            * math.log(8.0 * eta / delta) / eps ** 2)
        assert got == theorem
    tau, t_size, _ = amplification_params(100, 0.1, n_points=1000)
    assert tau == 79 and t_size == 107
    _report("formula oracles", True,
            "theorem form matched on 100 tuples; tau=79, |T|=107 at (eta=100, delta=0.1)")


def test_variance_dominance():
    """On a skewed 5-edge neuron, sensitivity sampling has strictly lower
    estimator variance than uniform over 1e4 trials."""
    w = np.array([10.0, 0.1, 0.1, 0.1, 0.1])
    a = np.ones(5)
    s = w * a / (w * a).sum()
    idx = np.arange(5)
    g = rng(205)
    n_runs, m = 10_000, 3
    sens = np.fromiter((sparsify(idx, w, m, s, g).dot(a) for _ in range(n_runs)),
                       dtype=float, count=n_runs)
    unif = np.fromiter((sparsify(idx, w, m, np.ones(5), g).dot(a) for _ in range(n_runs)),
                       dtype=float, count=n_runs)
    _report("variance dominance", sens.var() < unif.var(),
            f"sensitivity var {sens.var():.3f} < uniform var {unif.var():.3f}")


def test_desk_comparative_sweep():
    """30-epoch Adam training reaches 90% test accuracy; over fractions
    0.1..1.0 with 5 trials, pruning+sensitivity sampling beats uniform on
    mean relative error at 80% of points and drops at most 5 accuracy points
    at fraction 0.4. Under 10 minutes."""
    start = time.time()
    data = make_digits(2000, seed=11)
    net = train([64, 128, 10], data,
                TrainConfig(epochs=30, learning_rate=0.001, batch_size=300, seed=5))
    test_x, test_y = data.subset("test")
    test_acc = accuracy(net, test_x, test_y)
    assert test_acc >= 0.90, f"test accuracy {test_acc:.3f}"

    fractions = [round(0.1 * i, 1) for i in range(1, 11)]
    report = sweep(net, data, ["corenet+", "uniform"], fractions, 5,
                   CompressionConfig(seed=17))
    cn = {c["fraction"]: c for c in report["cells"] if c["scheme"] == "corenet+"}
    un = {c["fraction"]: c for c in report["cells"] if c["scheme"] == "uniform"}
    wins = sum(cn[f]["err_mean"] <= un[f]["err_mean"] for f in fractions)
    drop_04 = cn[0.4]["accdrop_mean"]
    elapsed = time.time() - start
    ok = wins >= 8 and drop_04 <= 0.05 and elapsed < 600.0
    _report("desk comparative sweep", ok,
            f"acc={test_acc:.3f}, err wins {wins}/10, drop@0.4={drop_04:.3f}, {elapsed:.0f}s")


def test_eps_guarantee_smoke():
    """(eps=1, delta=0.5) theory sizing: at most half of 200 fresh points may
    violate the entrywise (1 +/- eps) envelope."""
    data = make_digits(1400, seed=21)
    net = train([64, 32, 10], data, TrainConfig(epochs=12, seed=6))
    val_x, _ = data.subset("validation")
    cfg = CompressionConfig(eps=1.0, delta=0.5, mode="corenet", seed=9)
    result, report = compress(net, val_x, cfg)
    fresh = make_digits(200, seed=22).features
    violations = 0
    for x in fresh:
        f = forward(net, x)[0]
        f_hat = forward(result.network, x)[0]
        lo = np.minimum(f * 0.0, f * 2.0)
        hi = np.maximum(f * 0.0, f * 2.0)
        if np.any((f_hat < lo - 1e-12) | (f_hat > hi + 1e-12)):
            violations += 1
    frac = violations / len(fresh)
    _report("eps-guarantee smoke", frac <= 0.5,
            f"violations {violations}/200 (no_compression={report['warnings']['no_compression']})")


def test_exact_pruning():
    """Neuron pruning alone leaves forward outputs on the cached points
    bit-identical."""
    g = rng(206)
    w2 = g.normal(size=(12, 7))
    w2[3] = -np.abs(w2[3]) * 5.0  # guaranteed-dead neurons
    w2[8] = -np.abs(w2[8]) * 5.0
    w3 = g.normal(size=(5, 13))
    net = Network((DenseMatrix(w2), DenseMatrix(w3)), bias_embedded=True)
    pts = np.abs(g.normal(size=(15, 6)))
    cache = cache_activations(net, pts)
    keep = prune_neurons(net, cache)
    assert not keep[2][3] and not keep[2][8]
    pruned = apply_pruning(net, keep)
    identical = all(np.array_equal(net.forward(x), pruned.forward(x)) for x in pts)
    _report("exact pruning", identical,
            f"{int((~keep[2]).sum())} neurons pruned, outputs bit-identical on 15 points")


def test_determinism(tmp_path):
    """Same seed twice gives byte-identical compressed weights, with 1 and 8
    workers agreeing."""
    from corenet.cli import EXIT_OK, run
    from corenet.data import save_csv
    from corenet.nnw import save_network

    data = make_digits(900, seed=31)
    csv_path = tmp_path / "d.csv"
    save_csv(data, csv_path)
    net = train([64, 24, 10], data, TrainConfig(epochs=5, seed=12))
    wpath = tmp_path / "w.nnw1"
    save_network(net, wpath)
    blobs = []
    for tag, jobs in (("one_a", "1"), ("one_b", "1"), ("eight", "8")):
        out = tmp_path / f"{tag}.nnw1"
        code = run(["compress", "--weights", str(wpath), "--data", str(csv_path),
                    "--out", str(out), "--mode", "corenet++", "--fraction", "0.45",
                    "--seed", "23", "--jobs", jobs])
        assert code == EXIT_OK
        blobs.append(out.read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2]
    _report("determinism", ok, f"3 runs, {len(blobs[0])} bytes each, identical")


def test_svd_baseline():
    """Full-rank SVD reproduces outputs to 1e-6 and size accounting matches
    hand counts of stored factor non-zeros."""
    net = random_network([9, 11, 6], seed=207)
    ranks = [min(w.rows, w.cols) for w in net.weights]
    svd_net, size = svd_compress(net, ranks)
    g = rng(208)
    worst = max(float(np.abs(svd_net.forward(x) - net.forward(x)).max())
                for x in g.normal(size=(20, 9)))
    # dense factors: every u_i has `rows` non-zeros, every v_i has `cols`
    hand = sum(r * (w.rows + w.cols) for r, w in zip(ranks, net.weights))
    _report("svd baseline", worst <= 1e-6 and size == hand,
            f"max output diff {worst:.2e}, size {size} == hand count {hand}")
