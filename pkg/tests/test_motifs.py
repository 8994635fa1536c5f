import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import chain
from graphbo.bench import default_synthetic
from graphbo.candidates import random_graph
from graphbo.gp import SearchGrid, featurize, fit, posterior_mean_counts
from graphbo.graph import N101_SPEC
from graphbo.motifs import (
    MotifScore,
    MotifSet,
    averaged_gradient,
    count_weighted_moments,
    dot_gradients,
    empirical_variance,
    export_motifs,
    feature_gradients,
    merge_scores,
    motif_match,
    motif_score,
    motif_scores,
    rank_motifs,
    split_quantiles,
)
from graphbo.wl import (
    Base,
    FeatureIndex,
    KernelConfig,
    KernelError,
    Neighborhood,
    decode_feature,
    encode_subtree,
    extract_features,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def synthetic_model(n=60, seed=0, grid=SearchGrid()):
    obj = default_synthetic(0.01)
    rng = np.random.default_rng(seed)
    gs = list({random_graph(N101_SPEC, rng): None for _ in range(n)})
    return fit(gs, [obj.evaluate(g, rng)[0] for g in gs], grid)


def test_dot_gradient_examples():
    assert dot_gradients(np.array([[2.0]]), np.array([0.5])).tolist() == [1.0]
    assert dot_gradients(np.array([[1.0], [2.0]]), np.array([0.5, -0.25])).tolist() == [0.0]
    assert dot_gradients(np.zeros((3, 1)), np.array([1.0, 2.0, 3.0])).tolist() == [0.0]


def test_unseen_feature_has_zero_gradient():
    model = synthetic_model(20)
    novel = chain("sep5x5", "conv3x3")
    grads = feature_gradients(model, novel)
    new = [f for f in featurize(model, [novel])[0].counts if f not in model.columns]
    assert new and all(grads[f] == 0.0 for f in new)


def test_weighted_moments_examples():
    assert count_weighted_moments([3], [0.7]) == (0.7, 0.0)
    ag, _ = count_weighted_moments([1, 1], [0.2, 0.6])
    assert ag == pytest.approx(0.4)
    a, b = 0.3, -1.1
    ag, _ = count_weighted_moments([1, 1, 2], [a, a, b])
    assert ag == pytest.approx((2 / 3 * a + 2 / 3 * a + 1 / 3 * b) / (5 / 3), abs=1e-15)
    ag, ev = count_weighted_moments([1, 1], [1.0, 3.0])
    assert (ag, ev) == (2.0, 1.0)
    assert count_weighted_moments([1, 2, 2], [0.5, 0.5, 0.5]) == (0.5, 0.0)


@given(st.lists(st.integers(1, 4), min_size=1, max_size=20), finite)
def test_identical_gradients_average_exactly(counts, g):
    ag, ev = count_weighted_moments(counts, [g] * len(counts))
    assert ag == pytest.approx(g, rel=1e-12, abs=1e-12) and ev == pytest.approx(0.0, abs=1e-9 * max(1, g * g))


@given(st.lists(st.tuples(st.integers(1, 4), finite), min_size=1, max_size=20))
def test_ev_nonnegative(pairs):
    _, ev = count_weighted_moments([c for c, _ in pairs], [g for _, g in pairs])
    assert ev >= 0


def test_motif_score_sign_and_floor():
    assert motif_score(-0.5, 0.25) == 1.0
    assert motif_score(0.5, 0.0) == pytest.approx(-0.5e6)


def test_linear_kernel_has_zero_ev():
    model = synthetic_model()
    assert set(empirical_variance(model).values()) == {0.0}
    ag = averaged_gradient(model)
    want = dict(zip(model.columns, dot_gradients(model.X, model.alpha)))
    assert all(ag[f] == pytest.approx(want[f], abs=1e-12) for f in ag)


def test_nonlinear_kernel_ev_positive_somewhere():
    model = synthetic_model(grid=SearchGrid(bases=(Base.HIST,)))
    evs = empirical_variance(model)
    assert all(v >= 0 for v in evs.values()) and any(v > 0 for v in evs.values())


def test_single_occurrence_ev_zero():
    model = synthetic_model(grid=SearchGrid(bases=(Base.HIST,)))
    for s in motif_scores(model):
        if s.occurrences == 1:
            assert s.ev == 0.0


@pytest.mark.parametrize("base", list(Base))
def test_normalized_gradient_matches_central_difference(base):
    model = synthetic_model(40, seed=3, grid=SearchGrid(bases=(base,), normalize=True))
    fv = featurize(model, [model.graphs[0]])[0]
    grads = feature_gradients(model, fv)
    eps = 1e-5
    for f in model.columns[:25]:
        c = fv.counts.get(f, 0)
        if base is Base.HIST and any(c == x for x in model.X[:, model.columns.index(f)]):
            continue  # subgradient at a kink
        up, dn = dict(fv.counts), dict(fv.counts)
        up[f], dn[f] = c + eps, c - eps
        fd = (posterior_mean_counts(model, up) - posterior_mean_counts(model, dn)) / (2 * eps)
        assert grads[f] == pytest.approx(fd, abs=1e-5)


def test_rank_motifs_empty_when_threshold_too_high():
    model = synthetic_model(30)
    assert rank_motifs(model, min_occurrences=31) == ([], [])


def test_rank_motifs_respects_threshold_and_quantile():
    model = synthetic_model(80)
    good, bad = rank_motifs(model, 10, 0.25)
    kept = [s for s in motif_scores(model) if s.occurrences >= 10]
    assert len(good) == len(bad) == int(np.ceil(0.25 * len(kept)))
    assert all(s.occurrences >= 10 for s in good + bad)
    assert min(s.score for s in good) >= max(s.score for s in bad)
    assert not {s.feature_id for s in good} & {s.feature_id for s in bad}


def test_split_quantiles_validation_and_small_n():
    s = [MotifScore(i, f"m{i}", 0, 0.0, 0.0, 5, float(i)) for i in range(3)]
    good, bad = split_quantiles(s, 0.5)
    assert [m.feature_id for m in good] == [2, 1] and [m.feature_id for m in bad] == [0]
    with pytest.raises(ValueError):
        split_quantiles(s, 0.6)


def test_rank_motifs_permutation_invariant():
    model = synthetic_model(70, seed=5)
    perm = np.random.default_rng(1).permutation(model.n_train)
    other = fit([model.graphs[i] for i in perm], model.raw_targets[perm], SearchGrid())
    for a, b in zip(rank_motifs(model, 5), rank_motifs(other, 5)):
        assert [m.decoded for m in a] == [m.decoded for m in b]


@pytest.mark.parametrize("base", list(Base))
def test_ranking_invariant_to_target_scale(base):
    model = synthetic_model(50, seed=6, grid=SearchGrid(bases=(base,)))
    scaled = dataclasses.replace(model, alpha=model.alpha * 3.7, targets=model.targets * 3.7)
    order = [s.decoded for s in sorted(motif_scores(model), key=lambda s: -s.score)]
    order2 = [s.decoded for s in sorted(motif_scores(scaled), key=lambda s: -s.score)]
    assert order == order2


def test_motif_match_examples():
    idx = FeatureIndex()
    g = chain("conv3x3", "conv3x3")
    cfg = KernelConfig(1)
    extract_features(g, 1, Neighborhood.IN, idx)
    own = {idx.get(0, s) for s in g.node_labels}
    assert motif_match(g, own, idx, cfg) == 3
    assert motif_match(g, set(), idx, cfg) == 0
    m = encode_subtree("conv3x3(input)", 1, idx)
    assert motif_match(chain("conv3x3"), {m}, idx, cfg) == 1
    with pytest.raises(KernelError):
        motif_match(g, {10_000}, idx, cfg)


def test_motif_json_round_trip(tmp_path):
    model = synthetic_model(60)
    good, _ = rank_motifs(model, 5)
    ms = export_motifs(model, good)
    doc = json.loads(ms.to_json())
    assert set(doc) == {"H", "mode", "motifs"}
    assert {"id", "subtree", "ag", "ev", "occurrences", "score"} <= set(doc["motifs"][0])
    path = tmp_path / "m.json"
    path.write_text(ms.to_json())
    assert MotifSet.load(path) == ms
    for rec in doc["motifs"]:
        del rec["level"]
    assert MotifSet.from_dict(doc).motifs[0].level == ms.motifs[0].level
    # mapping onto a fresh index yields the same decoded patterns
    fresh = FeatureIndex()
    assert {decode_feature(i, fresh) for i in ms.ids_in(fresh)} == {m.decoded for m in ms.motifs}


def test_motif_json_errors_locate_record():
    with pytest.raises(ValueError, match=r"motifs\[0\]"):
        MotifSet.from_dict({"H": 1, "mode": "in_neighbors", "motifs": [{"id": 0}]})


def test_merge_scores():
    past = [
        MotifScore(0, "a", 0, -1.0, 0.5, 10, motif_score(-1.0, 0.5)),
        MotifScore(1, "b", 0, -2.0, 1.0, 20, motif_score(-2.0, 1.0)),
    ]
    current = [
        MotifScore(7, "a", 0, -3.0, 1.5, 30, motif_score(-3.0, 1.5)),
        MotifScore(8, "b", 0, 5.0, 1.0, 2, motif_score(5.0, 1.0)),
        MotifScore(9, "c", 0, 1.0, 1.0, 12, motif_score(1.0, 1.0)),
        MotifScore(10, "d", 0, 1.0, 1.0, 3, motif_score(1.0, 1.0)),
    ]
    merged = {m.decoded: m for m in merge_scores(past, current, min_occurrences=10)}
    assert set(merged) == {"a", "b", "c"}
    a = merged["a"]
    assert (a.feature_id, a.occurrences) == (7, 40)
    assert a.ag == pytest.approx((10 * -1.0 + 30 * -3.0) / 40)
    assert a.ev == pytest.approx((10 * 0.5 + 30 * 1.5) / 40)
    assert merged["b"] == past[1]
