import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psml.graph import (AnchorSet, Graph, ParseError, SynthConfig, ValidationError, ablation_add_weight,
                        ablation_drop_edges, generate_pair, load_anchors, load_edgelist, load_split,
                        round_half_up, save_anchors, save_edgelist, split_anchors)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_triangle(tmp_path):
    g = load_edgelist(write(tmp_path, "g", "a b\nb c\nc a\n"))
    assert len(g) == 3 and g.number_of_edges() == 3
    g.check()


def test_load_weight_and_comments(tmp_path):
    g = load_edgelist(write(tmp_path, "g", "# header\na b 2.5  # trailing\n\n"))
    assert g.edges == [("a", "b", 2.5)]


def test_parallel_edges_kept(tmp_path):
    g = load_edgelist(write(tmp_path, "g", "a b\na b\n"))
    assert g.number_of_edges() == 2
    assert g.edge_multiset() == {("a", "b", 1.0): 2}


def test_one_token_line_is_parse_error(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_edgelist(write(tmp_path, "g", "a\n"))
    assert exc.value.lineno == 1


def test_bad_weight_errors(tmp_path):
    with pytest.raises(ParseError):
        load_edgelist(write(tmp_path, "g", "a b x\n"))
    with pytest.raises(ValidationError):
        load_edgelist(write(tmp_path, "g2", "a b 0\n"))
    with pytest.raises(ValidationError):
        load_edgelist(write(tmp_path, "g3", "a b -1\n"))


def test_namespace_and_raw():
    g = Graph(namespace="s")
    g.add_edge(g.qualify("u"), g.qualify("v"))
    assert g.nodes == ["s:u", "s:v"]
    assert g.raw("s:u") == "u"


def test_undirected_neighbors():
    g = Graph(directed=False)
    g.add_edge("a", "b")
    assert g.out_neighbors("b") == ["a"] and g.neighbors("a") == ["b"]


def test_roundtrip_with_isolated_nodes(tmp_path):
    g = Graph(directed=False)
    g.add_edge("a", "b", 2.0)
    g.add_edge("b", "c")
    g.add_node("z")
    save_edgelist(g, tmp_path / "g")
    h = load_edgelist(tmp_path / "g", directed=None)
    assert not h.directed
    assert h.edge_multiset() == g.edge_multiset()
    assert set(h.nodes) == set(g.nodes)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8),
                          st.floats(0.01, 100, allow_nan=False)), min_size=1, max_size=30),
       st.booleans())
def test_roundtrip_property(tmp_path_factory, edges, directed):
    g = Graph(directed=directed)
    for u, v, w in edges:
        g.add_edge(str(u), str(v), w)
    path = tmp_path_factory.mktemp("rt") / "g.txt"
    save_edgelist(g, path)
    h = load_edgelist(path, directed=directed)
    assert h.edge_multiset() == g.edge_multiset()
    h.check()


def _two_graphs():
    gs, gt = Graph(namespace="s"), Graph(namespace="t")
    for x in ("u1", "u2", "u3"):
        gs.add_node(gs.qualify(x))
    for x in ("v1", "v2"):
        gt.add_node(gt.qualify(x))
    return gs, gt


def test_load_anchors(tmp_path):
    gs, gt = _two_graphs()
    a = load_anchors(write(tmp_path, "a", "u1 v1\nu2 v2\n"), gs, gt)
    assert a.pairs == [("s:u1", "t:v1"), ("s:u2", "t:v2")]
    assert a.roles == [None, None]
    assert len(load_anchors(write(tmp_path, "e", ""), gs, gt)) == 0


def test_load_anchors_missing_id(tmp_path):
    gs, gt = _two_graphs()
    with pytest.raises(ValidationError, match="u9"):
        load_anchors(write(tmp_path, "a", "u9 v1\n"), gs, gt)


def test_anchor_node_reuse_rejected():
    with pytest.raises(ValidationError):
        AnchorSet([("s:a", "t:a"), ("s:a", "t:b")])


def test_split_roundtrip(tmp_path):
    gs, gt = _two_graphs()
    a = split_anchors(AnchorSet([("s:u1", "t:v1"), ("s:u2", "t:v2")]), 0.5, 0)
    save_anchors(a, gs, gt, tmp_path / "s", with_roles=True)
    assert load_split(tmp_path / "s", gs, gt) == a


@pytest.mark.parametrize("n, ratio, expected", [(10, 0.1, 1), (1609, 0.1, 161), (3, 0.03, 1), (10, 0.25, 3)])
def test_split_counts(n, ratio, expected):
    a = AnchorSet([(f"s:{i}", f"t:{i}") for i in range(n)])
    sp = split_anchors(a, ratio, 5)
    assert len(sp.train) == expected and len(sp.test) == n - expected
    assert sp == split_anchors(a, ratio, 5)


def test_round_half_up():
    assert round_half_up(160.9) == 161 and round_half_up(2.5) == 3 and round_half_up(0.5) == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 200), st.floats(0.01, 0.99), st.integers(0, 2**32))
def test_split_partitions(n, ratio, seed):
    a = AnchorSet([(f"s:{i}", f"t:{i}") for i in range(n)])
    sp = split_anchors(a, ratio, seed)
    assert sorted(sp.train + sp.test) == sorted(a.pairs)
    assert not set(sp.train) & set(sp.test)
    assert len(sp.train) == min(n, max(1, round_half_up(ratio * n)))


def test_split_errors():
    with pytest.raises(ValidationError):
        split_anchors(AnchorSet(), 0.1, 0)
    with pytest.raises(ValidationError):
        split_anchors(AnchorSet([("s:a", "t:a")]), 1.0, 0)


def test_generate_zero_dropout():
    gs, gt, a = generate_pair(SynthConfig(n=100, m=3, anchor_fraction=0.5, dropout=0.0, seed=4))
    strip = lambda g: sorted((g.raw(u), g.raw(v), w) for u, v, w in g.edges)
    assert strip(gs) == strip(gt)
    assert len(a) == 50
    assert all(gs.raw(s) == gt.raw(t) for s, t in a)
    assert not set(gs.nodes) & set(gt.nodes)


def test_generate_dropout_reproducible():
    cfg = SynthConfig(n=200, m=3, anchor_fraction=0.3, dropout=0.1, seed=9)
    gs, gt, _ = generate_pair(cfg)
    gs2, gt2, _ = generate_pair(cfg)
    assert gs.edges == gs2.edges and gt.edges == gt2.edges
    base_edges = 3 * (200 - 3)
    for g in (gs, gt):
        # binomial(|E|, 0.9): five standard deviations is ample
        assert abs(g.number_of_edges() - 0.9 * base_edges) < 5 * np.sqrt(base_edges * 0.09)
    assert gs.edges != gt.edges


def test_synth_config_validation():
    with pytest.raises(ValidationError):
        SynthConfig(n=5, m=6)
    with pytest.raises(ValidationError):
        SynthConfig(anchor_fraction=0.0)
    with pytest.raises(ValidationError):
        SynthConfig(dropout=1.0)


def _anchor_graph():
    g = Graph(namespace="s")
    g.add_edge("s:a", "s:b", 1.0)
    g.add_edge("s:c", "s:d", 1.0)
    return g


def test_add_weight():
    g = _anchor_graph()
    anchors = AnchorSet.all_train([("s:a", "t:a")])
    h = ablation_add_weight(g, anchors, 2.0)
    assert h.edges == [("s:a", "s:b", 2.0), ("s:c", "s:d", 1.0)]
    assert ablation_add_weight(g, anchors, 1.0).edges == g.edges
    assert g.edges[0][2] == 1.0


def test_add_weight_ignores_test_anchors():
    g = _anchor_graph()
    h = ablation_add_weight(g, AnchorSet([("s:a", "t:a")], ["test"]), 2.0)
    assert h.edges == g.edges


def test_drop_edges():
    g = Graph()
    for i in range(100):
        g.add_edge(f"n{i}", f"n{i + 1}")
    assert ablation_drop_edges(g, 0.0, 1).edges == g.edges
    h = ablation_drop_edges(g, 0.05, 1)
    assert h.number_of_edges() == 95 and len(h) == len(g)
    assert h.edges == ablation_drop_edges(g, 0.05, 1).edges
    assert ablation_drop_edges(g, 0.05, 2).edges != h.edges
    assert set(h.edges) <= set(g.edges)
