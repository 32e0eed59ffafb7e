import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psml.embed import EmbeddingSpace
from psml.graph import AnchorSet, Graph, ValidationError
from psml.metrics import (alignment_report, candidate_pool, density_from_points, gini, hit_precision,
                          hit_precision_from_ranks, pca_2d, power_iteration, ppi, precision_at_n,
                          rank_candidates, true_ranks)


def _space(vecs, merged=None, pseudo=()):
    return EmbeddingSpace(list(vecs), np.array(list(vecs.values()), float), merged or {}, pseudo=frozenset(pseudo))


def test_rank_candidates_examples():
    sp = _space({"s": [1, 0], "a": [1, 0], "b": [0, 1], "c": [2, 0]})
    assert rank_candidates(sp, "s", ["b", "a"]) == ["a", "b"]
    assert rank_candidates(sp, "s", ["b"]) == ["b"]
    assert rank_candidates(sp, "s", ["c", "a", "b"]) == ["a", "c", "b"]
    assert rank_candidates(sp, "s", ["c", "a", "b"], "dot") == ["c", "a", "b"]
    with pytest.raises(ValidationError):
        rank_candidates(sp, "s", ["a"], "euclid")


def test_lorentz_ranking_uses_distance():
    t = 0.3
    sp = _space({"s": [1, 0], "near": [np.cosh(t), np.sinh(t)], "far": [np.cosh(2), np.sinh(2)]})
    assert rank_candidates(sp, "s", ["far", "near"], "lorentz") == ["near", "far"]


def _graphs(src, tgt):
    gs, gt = Graph(namespace="s"), Graph(namespace="t")
    for n in src:
        gs.add_node(n)
    for n in tgt:
        gt.add_node(n)
    return gs, gt


def _three_pairs(hit_all=True):
    vecs = {"s:1": [1, 0, 0], "s:2": [0, 1, 0], "s:3": [0, 0, 1],
            "t:1": [1, 0, 0], "t:2": [0, 1, 0], "t:3": [0, 0, 1] if hit_all else [1, 0.1, 0]}
    gs, gt = _graphs(["s:1", "s:2", "s:3"], ["t:1", "t:2", "t:3"])
    test = AnchorSet([("s:1", "t:1"), ("s:2", "t:2"), ("s:3", "t:3")], ["test"] * 3)
    return _space(vecs), test, gs, gt


def test_precision_examples():
    sp, test, gs, gt = _three_pairs()
    assert precision_at_n(sp, test, 1, gs, gt) == 100.0
    sp, test, gs, gt = _three_pairs(hit_all=False)
    assert precision_at_n(sp, test, 1, gs, gt) == pytest.approx(66.67, abs=0.01)
    assert precision_at_n(sp, test, 3, gs, gt) == 100.0
    assert precision_at_n(sp, test, 1, gs, gt, direction="both") == pytest.approx(
        (precision_at_n(sp, test, 1, gs, gt, direction="s2t") + precision_at_n(sp, test, 1, gs, gt, direction="t2s")) / 2)


def test_precision_errors():
    sp, test, gs, gt = _three_pairs()
    with pytest.raises(ValidationError):
        precision_at_n(sp, AnchorSet([("s:1", "t:1")], ["train"]), 1, gs, gt)
    with pytest.raises(ValidationError):
        precision_at_n(sp, test, 0, gs, gt)


def test_candidate_pool_excludes_merged_and_pseudo():
    sp = _space({"s:a": [1, 0], "t:b": [0, 1], "t:p": [1, 1]}, merged={"t:a": "s:a"}, pseudo=["t:p"])
    _, gt = _graphs([], ["t:a", "t:b", "t:p"])
    assert candidate_pool(sp, gt) == ["t:b"]


def test_hit_precision_examples():
    assert hit_precision_from_ranks(np.array([1, 1]), 30) == 1.0
    assert hit_precision_from_ranks(np.array([30]), 30) == pytest.approx(1 / 30)
    assert hit_precision_from_ranks(np.array([31, 40]), 30) == 0.0
    sp, test, gs, gt = _three_pairs()
    assert hit_precision(sp, test, 5, gs, gt) == 1.0
    with pytest.raises(ValidationError):
        hit_precision_from_ranks(np.array([], dtype=int), 5)


def test_ppi():
    assert ppi(21.37, 15.01) == pytest.approx(42.37, abs=0.01)
    assert ppi(9.67, 5.24) == pytest.approx(84.54, abs=0.01)
    assert ppi(7.0, 7.0) == 0
    with pytest.raises(ValidationError):
        ppi(1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_ppi_sign(a, b):
    assert (ppi(a, b) > 0) == (a > b)


def _random_space(rng, n=30, d=4):
    vecs = {f"s:{i}": rng.normal(size=d) for i in range(n)}
    vecs.update({f"t:{i}": rng.normal(size=d) for i in range(n)})
    gs, gt = _graphs([f"s:{i}" for i in range(n)], [f"t:{i}" for i in range(n)])
    test = AnchorSet([(f"s:{i}", f"t:{i}") for i in range(n)], ["test"] * n)
    return _space(vecs), test, gs, gt


def test_true_ranks_match_rank_candidates(rng):
    sp, test, gs, gt = _random_space(rng)
    pool = candidate_pool(sp, gt)
    ranks = true_ranks(sp, [s for s, _ in test], [t for _, t in test], pool)
    for (s, t), r in zip(test, ranks):
        assert rank_candidates(sp, s, pool).index(t) + 1 == r


def test_tie_rule_lexicographic():
    sp = _space({"s:q": [1, 0], "t:b": [1, 0], "t:a": [1, 0]})
    _, gt = _graphs([], ["t:b", "t:a"])
    assert rank_candidates(sp, "s:q", ["t:b", "t:a"]) == ["t:a", "t:b"]
    assert list(true_ranks(sp, ["s:q", "s:q"], ["t:a", "t:b"], ["t:b", "t:a"])) == [1, 2]


def test_precision_monotone_and_scale_invariant(rng):
    sp, test, gs, gt = _random_space(rng)
    ps = [precision_at_n(sp, test, n, gs, gt) for n in range(1, 31)]
    assert all(b >= a for a, b in zip(ps, ps[1:]))
    scaled = EmbeddingSpace(sp.ids, sp.vectors * 3.5, {})
    assert [precision_at_n(scaled, test, n, gs, gt) for n in range(1, 31)] == ps
    rep = alignment_report(sp, test, gs, gt, ns=(1, 5), hit_k=10)
    assert rep.test_pairs == 30 and set(rep.to_dict()["precision"]) == {"1", "5"}


def test_gini():
    assert gini([1, 1, 1, 1]) == 0.0
    assert gini([0, 0, 0, 4]) == pytest.approx(0.75)
    assert gini([]) == 0.0
    # direct formula: mean absolute difference over twice the mean
    x = np.array([3.0, 1.0, 7.0, 2.0])
    direct = np.abs(x[:, None] - x[None, :]).sum() / (2 * len(x) ** 2 * x.mean())
    assert gini(x) == pytest.approx(direct)


def test_power_iteration_vs_eigh(rng):
    for _ in range(20):
        a = rng.normal(size=(6, 6))
        m = a @ a.T
        lam, v = power_iteration(m)
        w, vecs = np.linalg.eigh(m)
        assert lam == pytest.approx(w[-1], rel=1e-8)
        assert abs(v @ vecs[:, -1]) == pytest.approx(1.0, abs=1e-6)


def test_pca_dominant_axis(rng):
    pts = rng.normal(size=(5000, 3)) * np.array([1.0, np.sqrt(10), 0.5])
    cov = np.cov(pts.T)
    _, v = power_iteration(cov)
    angle = np.degrees(np.arccos(min(1.0, abs(v[1]))))
    assert angle < 5
    with pytest.raises(ValidationError):
        pca_2d(np.ones((5, 3)))


def test_density_square():
    rep = density_from_points(np.array([[0, 0], [0, 1], [1, 0], [1, 1.0]]), grid=2, top=4)
    assert sorted(rep.counts.ravel()) == [1, 1, 1, 1]
    assert rep.evenness == 0.0


def test_density_cluster_and_outlier(rng):
    pts = np.vstack([rng.normal(0, 1e-6, (99, 2)), [[10.0, 10.0]]])
    rep = density_from_points(pts, grid=30, top=100)
    assert rep.top_counts[:2] == [99, 1]
    assert rep.evenness == pytest.approx(gini([99, 1] + [0] * 98))
    assert rep.counts.sum() == 100


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 60), st.integers(1, 40), st.integers(0, 10000))
def test_density_conservation(n, grid, seed):
    pts = np.random.default_rng(seed).normal(size=(n, 4))
    rep = density_from_points(pts, grid=grid, top=100)
    assert rep.counts.sum() == n
    assert rep.top_counts == sorted(rep.top_counts, reverse=True)
    assert 0.0 <= rep.evenness <= 1.0
    assert rep.to_dict() == density_from_points(pts, grid=grid, top=100).to_dict()
    assert rep.cells_csv().startswith("cell_x,cell_y,count\n")
