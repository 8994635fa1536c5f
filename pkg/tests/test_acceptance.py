"""End-to-end acceptance criteria, each at its stated tolerance and time limit.

Every test prints one ``PASS``/``FAIL`` line (also repeated in the terminal
summary) and then asserts on the same condition.
"""

import itertools
import time

import numpy as np
import pytest
from scipy.stats import binomtest

from conftest import random_dag
from graphbo.bench import default_synthetic, materialize, random_search, run_regression_eval, transfer_synthetic
from graphbo.bo import BOConfig, expected_improvement, run_bo
from graphbo.candidates import random_graph
from graphbo.cli import main
from graphbo.experiments import learn_motifs, transfer_trial
from graphbo.gp import featurize, fit, fit_fixed, posterior_mean_counts, predict
from graphbo.graph import N101_SPEC
from graphbo.motifs import feature_gradients
from graphbo.wl import Base, FeatureIndex, KernelConfig, Neighborhood, decode_feature, extract_features, gram
from wl_oracle import subtree_strings

SEEDS = range(20)


@pytest.fixture
def verdict(capsys, record_property):
    start = time.perf_counter()

    def report(n: int, ok: bool, detail: str, limit_s: float) -> None:
        elapsed = time.perf_counter() - start
        passed = ok and elapsed < limit_s
        line = f"{'PASS' if passed else 'FAIL'} criterion {n:>2}: {detail} [{elapsed:.1f}s / {limit_s:.0f}s]"
        with capsys.disabled():
            print("\n" + line)
        record_property("acceptance", line)
        assert ok, line
        assert elapsed < limit_s, line

    return report


def test_c01_wl_oracle(verdict):
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(200):
        g = random_dag(rng, max_nodes=8, max_edges=12)
        for mode, nb in (("in", Neighborhood.IN), ("out", Neighborhood.OUT), ("both", Neighborhood.BOTH)):
            idx = FeatureIndex()
            fv = extract_features(g, 3, nb, idx)
            got = {(idx.level_of[f], decode_feature(f, idx)): c for f, c in fv.counts.items()}
            want = {(h, s): c for h, cnt in enumerate(subtree_strings(g, 3, mode)) for s, c in cnt.items()}
            mismatches += got != want
    verdict(1, mismatches == 0, f"WL counts vs brute force on 200 graphs x 3 modes, {mismatches} mismatches", 5)


def test_c02_kernel_psd(verdict):
    rng = np.random.default_rng(7)
    gs = [random_graph(N101_SPEC, rng) for _ in range(100)]
    worst = min(
        np.linalg.eigvalsh(gram(gs, KernelConfig(H, base))[0]).min() for base in Base for H in range(4)
    )
    verdict(2, worst >= -1e-8, f"min eigenvalue {worst:.3e} over both bases, H=0..3", 30)


def test_c03_interpolation_and_gradient(verdict):
    obj = default_synthetic()
    rng = np.random.default_rng(3)
    gs = list({random_graph(N101_SPEC, rng): None for _ in range(40)})
    ys = [obj.evaluate(g, rng)[0] for g in gs]
    model = fit_fixed(gs, ys, KernelConfig(3), 0.0)
    interp = float(np.max(np.abs(predict(model, gs).mean - model.targets)))

    model = fit(gs, ys)
    worst = 0.0
    for g in (random_graph(N101_SPEC, rng) for _ in range(5)):
        fv = featurize(model, [g])[0]
        grads = feature_gradients(model, fv)
        base = posterior_mean_counts(model, fv.counts)
        for f in model.columns:
            bumped = dict(fv.counts)
            bumped[f] = bumped.get(f, 0) + 1
            worst = max(worst, abs(posterior_mean_counts(model, bumped) - base - grads[f]))
    ok = interp <= 1e-6 and worst <= 1e-8
    verdict(3, ok, f"interpolation error {interp:.2e}, gradient vs +1 difference {worst:.2e}", 10)


def test_c04_ei_monte_carlo(verdict):
    z = np.random.default_rng(11).standard_normal(10_000_000)
    grid = [
        (mean, sd, inc)
        for (mean, sd), inc in zip(itertools.product((-1.0, -0.4, 0.0, 0.3, 1.0), (0.1, 0.3, 0.6, 1.0)), itertools.cycle((0.0, 0.25)))
    ]
    assert len(grid) == 20
    worst = 0.0
    for mean, sd, inc in grid:
        mc = float(np.maximum(inc - (mean + sd * z), 0.0).mean())
        worst = max(worst, abs(expected_improvement(mean, sd, inc) - mc))
    verdict(4, worst <= 1e-3, f"max |EI - MC(1e7)| over 20 grid points {worst:.2e}", 30)


def test_c05_regression(verdict):
    tab = materialize(default_synthetic(0.0), 2000, np.random.default_rng(0))
    stats = run_regression_eval(tab, n_train=50, n_test=400, repeats=20, rng=np.random.default_rng(1))
    verdict(5, stats.mean >= 0.80, f"mean Spearman {stats.mean:.3f} +/- {stats.stderr:.3f} (need >= 0.80)", 300)


def test_c06_search_beats_random(verdict):
    obj = default_synthetic(0.01)
    cfg = BOConfig(budget=150, batch=5)
    bo, rs = [], []
    for s in SEEDS:
        bo.append(run_bo(obj, N101_SPEC, cfg, np.random.default_rng(s)).records[-1].best_test_error)
        rs.append(random_search(obj, N101_SPEC, 150, np.random.default_rng(s)).records[-1].best_test_error)
    bo, rs = np.array(bo), np.array(rs)
    wins, losses = int((bo < rs).sum()), int((bo > rs).sum())
    p = binomtest(wins, wins + losses, alternative="greater").pvalue if wins + losses else 1.0
    ok = np.median(bo) <= np.median(rs) and p < 0.05
    detail = f"median BO {np.median(bo):.4f} vs random {np.median(rs):.4f}, {wins} wins/{losses} losses, sign p={p:.2e}"
    verdict(6, ok, detail, 900)


def test_c07_motif_recovery(verdict):
    obj = default_synthetic(0.01)
    recalls, leaked = [], 0
    for s in SEEDS:
        good, _ = learn_motifs(obj, 300, np.random.default_rng(s), min_occurrences=10, quantile=0.25)
        found = {m.decoded for m in good.motifs}
        recalls.append(np.mean([m.subtree in found for m in obj.good]))
        leaked += any(m.subtree in found for m in obj.bad)
    ok = min(recalls) >= 0.8 and leaked == 0
    verdict(7, ok, f"worst-seed recall {min(recalls):.2f}, seeds with a planted negative in the good list: {leaked}", 300)


def test_c08_h_selection(verdict):
    obj = default_synthetic(0.01)
    chosen = []
    for s in SEEDS:
        rng = np.random.default_rng(1000 + s)
        gs = list({random_graph(N101_SPEC, rng): None for _ in range(50)})
        chosen.append(fit(gs, [obj.evaluate(g, rng)[0] for g in gs]).cfg.H)
    hits = sum(h >= 1 for h in chosen)
    verdict(8, hits >= 18, f"H >= 1 selected in {hits}/20 trials (H values {chosen})", 300)


def test_c09_transfer(verdict):
    cfg = BOConfig(budget=150, batch=5)
    trials = [transfer_trial(default_synthetic(0.01), transfer_synthetic(0.01), cfg, s) for s in SEEDS]
    plain = np.median([t.plain for t in trials])
    tl = np.median([t.transfer for t in trials])
    verdict(9, tl < plain, f"median evaluations to optimum+0.01: transfer {tl} vs plain {plain}", 1200)


def test_c10_replay(verdict, tmp_path):
    bench = tmp_path / "bench.jsonl"
    assert main(["synth-gen", "--n", "600", "--noise-sd", "0.01", "--seed", "5", "--out", str(bench)]) == 0
    identical = []
    for cmd, extra in (("search", []), ("search", ["--acquisition", "ucb", "--strategy", "mutate"])):
        run = tmp_path / f"run{len(identical)}"
        assert main([cmd, "--benchmark", str(bench), "--seed", "9", "--out", str(run), *extra]) == 0
        again = tmp_path / f"again{len(identical)}"
        assert main(["replay", str(run / "manifest.json"), "--out", str(again)]) == 0
        identical.append((run / "history.csv").read_bytes() == (again / "history.csv").read_bytes())
    verdict(10, all(identical), f"replayed histories byte-identical: {identical}", 60)
