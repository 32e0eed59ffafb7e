"""Graph container, file ingestion, synthetic pair generation and ablations.

Node ids are namespaced strings (``"s:u1"``, ``"t:u1"``) so that the two
networks of an alignment task can be merged into one universe without
collisions.  The raw id (without namespace) is what appears in files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import networkx as nx
import numpy as np


class ParseError(ValueError):
    """Malformed line in an input file."""

    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class ValidationError(ValueError):
    """Input is well formed but violates a model constraint."""


class Graph:
    """Directed (or undirected) weighted multigraph of one network.

    Parallel edges are kept as separate entries; they act as sampling
    multiplicity for the trainer.  For undirected graphs every edge is stored
    once but reported in both endpoints' neighbor lists.
    """

    def __init__(self, directed: bool = True, namespace: str = ""):
        self.directed = directed
        self.namespace = namespace
        self._nodes: dict[str, None] = {}
        self.edges: list[tuple[str, str, float]] = []
        self._out: dict[str, list[str]] = {}
        self._in: dict[str, list[str]] = {}

    # ids -----------------------------------------------------------------
    def qualify(self, raw) -> str:
        raw = str(raw)
        return f"{self.namespace}:{raw}" if self.namespace else raw

    def raw(self, node: str) -> str:
        prefix = f"{self.namespace}:"
        if self.namespace and node.startswith(prefix):
            return node[len(prefix):]
        return node

    # construction ----------------------------------------------------------
    def add_node(self, node: str) -> None:
        if node not in self._nodes:
            self._nodes[node] = None
            self._out[node] = []
            self._in[node] = []

    def add_edge(self, src: str, dst: str, weight: float = 1.0) -> None:
        weight = float(weight)
        if not (weight > 0) or not math.isfinite(weight):
            raise ValidationError(f"edge ({src}, {dst}) has nonpositive weight {weight}")
        self.add_node(src)
        self.add_node(dst)
        self.edges.append((src, dst, weight))
        self._out[src].append(dst)
        self._in[dst].append(src)
        if not self.directed and src != dst:
            self._out[dst].append(src)
            self._in[src].append(dst)

    def copy(self) -> "Graph":
        g = Graph(self.directed, self.namespace)
        for n in self._nodes:
            g.add_node(n)
        for u, v, w in self.edges:
            g.add_edge(u, v, w)
        return g

    # queries ---------------------------------------------------------------
    @property
    def nodes(self) -> list[str]:
        return list(self._nodes)

    def __contains__(self, node) -> bool:
        return node in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def number_of_edges(self) -> int:
        return len(self.edges)

    def out_neighbors(self, node: str) -> list[str]:
        return self._out[node]

    def in_neighbors(self, node: str) -> list[str]:
        return self._in[node]

    def neighbors(self, node: str) -> list[str]:
        """Distinct first-order neighbors in either direction, in first-seen order."""
        seen = dict.fromkeys(self._out[node])
        seen.update(dict.fromkeys(self._in[node]))
        seen.pop(node, None)
        return list(seen)

    def edge_multiset(self) -> dict[tuple[str, str, float], int]:
        counts: dict[tuple[str, str, float], int] = {}
        for e in self.edges:
            key = e if self.directed else (min(e[0], e[1]), max(e[0], e[1]), e[2])
            counts[key] = counts.get(key, 0) + 1
        return counts

    def check(self) -> None:
        """Raise ValidationError if any structural invariant is broken."""
        out_count = {n: 0 for n in self._nodes}
        for u, v, w in self.edges:
            if u not in self._nodes or v not in self._nodes:
                raise ValidationError(f"edge ({u}, {v}) has an endpoint outside the node set")
            if not w > 0:
                raise ValidationError(f"edge ({u}, {v}) has nonpositive weight")
            out_count[u] += 1
            if not self.directed and u != v:
                out_count[v] += 1
        for n in self._nodes:
            if len(self._out[n]) != out_count[n]:
                raise ValidationError(f"adjacency of {n} disagrees with edge list")

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph({kind}, ns={self.namespace!r}, nodes={len(self)}, edges={len(self.edges)})"


@dataclass
class AnchorSet:
    """Cross-network identity pairs with an optional train/test role per pair."""

    pairs: list[tuple[str, str]] = field(default_factory=list)
    roles: list[str | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.roles:
            self.roles = [None] * len(self.pairs)
        if len(self.roles) != len(self.pairs):
            raise ValidationError("roles and pairs differ in length")
        seen: set[str] = set()
        for s, t in self.pairs:
            for node in (s, t):
                if node in seen:
                    raise ValidationError(f"node {node} appears in more than one anchor pair")
                seen.add(node)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self) -> Iterator[tuple[str, str]]:
        return iter(self.pairs)

    def with_role(self, role: str) -> list[tuple[str, str]]:
        return [p for p, r in zip(self.pairs, self.roles) if r == role]

    @property
    def train(self) -> list[tuple[str, str]]:
        return self.with_role("train")

    @property
    def test(self) -> list[tuple[str, str]]:
        return self.with_role("test")

    @classmethod
    def all_train(cls, pairs: Iterable[tuple[str, str]]) -> "AnchorSet":
        pairs = list(pairs)
        return cls(pairs, ["train"] * len(pairs))


@dataclass(frozen=True)
class SynthConfig:
    n: int = 1000
    m: int = 3
    anchor_fraction: float = 0.3
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError(f"attachment parameter m={self.m} must be >= 1")
        if self.n < self.m + 1:
            raise ValidationError(f"node count {self.n} must be at least m+1={self.m + 1}")
        if not 0 < self.anchor_fraction <= 1:
            raise ValidationError(f"anchor_fraction {self.anchor_fraction} not in (0, 1]")
        if not 0 <= self.dropout < 1:
            raise ValidationError(f"dropout {self.dropout} not in [0, 1)")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# ---------------------------------------------------------------------------
# files

def _data_lines(path) -> Iterator[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _header(path) -> tuple[bool | None, list[str]]:
    """Direction flag and isolated-node ids from ``save_edgelist`` comments."""
    directed, isolated = None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if text in ("# directed", "# undirected") and directed is None:
                directed = text == "# directed"
            elif text.startswith("# isolated "):
                isolated.append(text[len("# isolated "):].strip())
    return directed, isolated


def load_edgelist(path, directed: bool | None = True, namespace: str = "") -> Graph:
    """Read ``src dst [weight]`` lines into a Graph; ``#`` starts a comment.

    ``directed=None`` takes the direction from a ``# directed``/``# undirected``
    header (directed if absent).  ``# isolated <id>`` comments add edgeless nodes.
    """
    flag, isolated = _header(path)
    if directed is None:
        directed = True if flag is None else flag
    g = Graph(directed=directed, namespace=namespace)
    for lineno, tokens in _data_lines(path):
        if len(tokens) not in (2, 3):
            raise ParseError(path, lineno, f"expected 'src dst [weight]', got {len(tokens)} token(s)")
        weight = 1.0
        if len(tokens) == 3:
            try:
                weight = float(tokens[2])
            except ValueError:
                raise ParseError(path, lineno, f"weight {tokens[2]!r} is not a number") from None
            if not weight > 0:
                raise ValidationError(f"{path}:{lineno}: nonpositive weight {weight}")
        g.add_edge(g.qualify(tokens[0]), g.qualify(tokens[1]), weight)
    for raw in isolated:
        g.add_node(g.qualify(raw))
    return g


def save_edgelist(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {'directed' if g.directed else 'undirected'}\n")
        for u, v, w in g.edges:
            fh.write(f"{g.raw(u)} {g.raw(v)} {w!r}\n")
        # isolated nodes have no edge line; keep them visible as comments
        isolated = [n for n in g.nodes if not g.out_neighbors(n) and not g.in_neighbors(n)]
        for n in isolated:
            fh.write(f"# isolated {g.raw(n)}\n")


def load_anchors(path, gs: Graph, gt: Graph) -> AnchorSet:
    pairs = []
    missing = []
    for lineno, tokens in _data_lines(path):
        if len(tokens) < 2:
            raise ParseError(path, lineno, "expected 'src_id tgt_id'")
        s, t = gs.qualify(tokens[0]), gt.qualify(tokens[1])
        if s not in gs:
            missing.append(tokens[0])
        if t not in gt:
            missing.append(tokens[1])
        pairs.append((s, t))
    if missing:
        raise ValidationError(f"anchor ids absent from their graph: {', '.join(missing)}")
    return AnchorSet(pairs)


def save_anchors(anchors: AnchorSet, gs: Graph, gt: Graph, path, with_roles: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (s, t), role in zip(anchors.pairs, anchors.roles):
            line = f"{gs.raw(s)} {gt.raw(t)}"
            if with_roles:
                line += f" {role or '-'}"
            fh.write(line + "\n")


def load_split(path, gs: Graph, gt: Graph) -> AnchorSet:
    """Inverse of ``save_anchors(..., with_roles=True)``."""
    pairs, roles = [], []
    for lineno, tokens in _data_lines(path):
        if len(tokens) != 3:
            raise ParseError(path, lineno, "expected 'src_id tgt_id role'")
        pairs.append((gs.qualify(tokens[0]), gt.qualify(tokens[1])))
        roles.append(None if tokens[2] == "-" else tokens[2])
    return AnchorSet(pairs, roles)


# ---------------------------------------------------------------------------
# anchors

def split_anchors(a: AnchorSet, train_ratio: float, seed: int) -> AnchorSet:
    """Tag round-half-up(ratio * |pairs|) pairs as train (at least one), the rest test."""
    if len(a) == 0:
        raise ValidationError("cannot split an empty anchor set")
    if not 0 < train_ratio < 1:
        raise ValidationError(f"train_ratio {train_ratio} not in (0, 1)")
    n_train = min(len(a), max(1, round_half_up(train_ratio * len(a))))
    order = np.random.default_rng(seed).permutation(len(a))
    roles = ["test"] * len(a)
    for i in order[:n_train]:
        roles[int(i)] = "train"
    return AnchorSet(list(a.pairs), roles)


# ---------------------------------------------------------------------------
# synthetic benchmark

def _dropout_copy(base: nx.Graph, namespace: str, rate: float, rng: np.random.Generator) -> Graph:
    g = Graph(directed=False, namespace=namespace)
    for n in base.nodes:
        g.add_node(g.qualify(n))
    edges = list(base.edges)
    keep = rng.random(len(edges)) >= rate if rate > 0 else np.ones(len(edges), bool)
    for (u, v), k in zip(edges, keep):
        if k:
            g.add_edge(g.qualify(u), g.qualify(v))
    return g


def generate_pair(cfg: SynthConfig) -> tuple[Graph, Graph, AnchorSet]:
    """Barabasi-Albert base graph, two independently thinned copies, identity anchors.

    Edge dropout is an independent Bernoulli trial per edge, so the surviving
    count fluctuates around ``(1 - dropout) * |E|``.
    """
    ss = np.random.SeedSequence(cfg.seed)
    ba_seed, s_seed, t_seed, a_seed = (int(c.generate_state(1)[0]) for c in ss.spawn(4))
    base = nx.barabasi_albert_graph(cfg.n, cfg.m, seed=ba_seed)
    gs = _dropout_copy(base, "s", cfg.dropout, np.random.default_rng(s_seed))
    gt = _dropout_copy(base, "t", cfg.dropout, np.random.default_rng(t_seed))
    n_anchor = max(1, round_half_up(cfg.anchor_fraction * cfg.n))
    chosen = np.sort(np.random.default_rng(a_seed).choice(cfg.n, size=n_anchor, replace=False))
    anchors = AnchorSet([(gs.qualify(i), gt.qualify(i)) for i in chosen])
    return gs, gt, anchors


# ---------------------------------------------------------------------------
# ablations

def ablation_add_weight(g: Graph, anchors: AnchorSet, factor: float = 2.0) -> Graph:
    """Multiply the weight of every edge touching a train anchor by ``factor``."""
    if not factor > 0:
        raise ValidationError(f"factor {factor} must be positive")
    anchor_nodes = {n for pair in anchors.train for n in pair}
    out = Graph(g.directed, g.namespace)
    for n in g.nodes:
        out.add_node(n)
    for u, v, w in g.edges:
        if u in anchor_nodes or v in anchor_nodes:
            w = w * factor
        out.add_edge(u, v, w)
    return out


def ablation_drop_edges(g: Graph, rate: float, seed: int) -> Graph:
    """Remove exactly round-half-up(rate * |E|) uniformly chosen edges; keep all nodes."""
    if not 0 <= rate < 1:
        raise ValidationError(f"rate {rate} not in [0, 1)")
    n_drop = round_half_up(rate * len(g.edges))
    drop = set(np.random.default_rng(seed).choice(len(g.edges), size=n_drop, replace=False).tolist())
    out = Graph(g.directed, g.namespace)
    for n in g.nodes:
        out.add_node(n)
    for i, (u, v, w) in enumerate(g.edges):
        if i not in drop:
            out.add_edge(u, v, w)
    return out
