"""Pseudo-anchor implantation and the shift-propagation experiment."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import networkx as nx
import numpy as np

from .embed import EmbeddingSpace, TrainConfig, Trainer, pair_gradient, sigmoid
from .graph import AnchorSet, Graph, ValidationError

ANCHOR_LINKS = ("to-anchor", "from-anchor", "bidirectional")
PSEUDO_LINKS = ("none", "forward", "backward", "bidirectional")
DEFAULT_PREFIX = "~p"


@dataclass(frozen=True)
class ConnectionPattern:
    """How ``n`` pseudo anchors are wired to their real anchor and to each other.

    ``pseudo_links`` follows ``itertools.combinations(range(n), 2)`` order;
    "forward" on pair (i, j) means an edge p_i -> p_j.
    """

    n: int = 2
    anchor_links: tuple[str, ...] = ("bidirectional", "bidirectional")
    pseudo_links: tuple[str, ...] = ("bidirectional",)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("a connection pattern needs at least one pseudo anchor")
        if len(self.anchor_links) != self.n:
            raise ValidationError(f"expected {self.n} anchor links, got {len(self.anchor_links)}")
        if len(self.pseudo_links) != self.n * (self.n - 1) // 2:
            raise ValidationError(f"expected {self.n * (self.n - 1) // 2} pseudo links")
        if any(x not in ANCHOR_LINKS for x in self.anchor_links):
            raise ValidationError(f"anchor links must be among {ANCHOR_LINKS}")
        if any(x not in PSEUDO_LINKS for x in self.pseudo_links):
            raise ValidationError(f"pseudo links must be among {PSEUDO_LINKS}")

    @classmethod
    def full(cls, n: int = 2) -> "ConnectionPattern":
        """Every link bidirectional: the maximal-edge pattern."""
        return cls(n, ("bidirectional",) * n, ("bidirectional",) * (n * (n - 1) // 2))

    def directed_links(self) -> list[tuple[int, int]]:
        """Edges as (src, dst) over local indices; -1 is the real anchor."""
        links = []
        for i, kind in enumerate(self.anchor_links):
            if kind in ("from-anchor", "bidirectional"):
                links.append((-1, i))
            if kind in ("to-anchor", "bidirectional"):
                links.append((i, -1))
        for (i, j), kind in zip(itertools.combinations(range(self.n), 2), self.pseudo_links):
            if kind in ("forward", "bidirectional"):
                links.append((i, j))
            if kind in ("backward", "bidirectional"):
                links.append((j, i))
        return links

    def to_dict(self) -> dict:
        return {"n": self.n, "anchor_links": list(self.anchor_links), "pseudo_links": list(self.pseudo_links)}

    @classmethod
    def from_dict(cls, d: dict) -> "ConnectionPattern":
        if "anchor_links" not in d:
            return cls.full(int(d.get("n", 2)))
        return cls(int(d["n"]), tuple(d["anchor_links"]), tuple(d["pseudo_links"]))


def pattern_count(n: int) -> int:
    if n < 1:
        raise ValidationError("n must be >= 1")
    return len(ANCHOR_LINKS) ** n * len(PSEUDO_LINKS) ** (n * (n - 1) // 2)


def enumerate_patterns(n: int) -> Iterator[ConnectionPattern]:
    """Yield every connection pattern for ``n`` pseudo anchors exactly once."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    n_pairs = n * (n - 1) // 2
    for a in itertools.product(ANCHOR_LINKS, repeat=n):
        for p in itertools.product(PSEUDO_LINKS, repeat=n_pairs):
            yield ConnectionPattern(n, a, p)


@dataclass
class PseudoRegistry:
    """Implanted pseudo ids per train anchor, paired across the two networks.

    Both maps are keyed by the source-side anchor id; lists are in pseudo
    index order, so ``source[a][i]`` and ``target[a][i]`` are counterparts.
    """

    pattern: ConnectionPattern
    anchors: list[tuple[str, str]] = field(default_factory=list)
    source: dict[str, list[str]] = field(default_factory=dict)
    target: dict[str, list[str]] = field(default_factory=dict)

    @property
    def counterpart_pairs(self) -> list[tuple[str, str]]:
        return [(p, q) for s, _ in self.anchors for p, q in zip(self.source[s], self.target[s])]

    @property
    def pseudo_ids(self) -> list[str]:
        return [p for s, _ in self.anchors for p in self.source[s] + self.target[s]]

    def anchor_of(self) -> dict[str, str]:
        """Pseudo id -> real anchor id in the same network."""
        out = {}
        for s, t in self.anchors:
            out.update(dict.fromkeys(self.source[s], s))
            out.update(dict.fromkeys(self.target[s], t))
        return out

    def index_of(self) -> dict[str, int]:
        out = {}
        for s, _ in self.anchors:
            for i, (p, q) in enumerate(zip(self.source[s], self.target[s])):
                out[p] = out[q] = i
        return out

    def to_dict(self) -> dict:
        return {"pattern": self.pattern.to_dict(), "anchors": [list(a) for a in self.anchors],
                "source": self.source, "target": self.target}

    @classmethod
    def from_dict(cls, d: dict) -> "PseudoRegistry":
        return cls(ConnectionPattern.from_dict(d["pattern"]), [tuple(a) for a in d["anchors"]],
                   {k: list(v) for k, v in d["source"].items()}, {k: list(v) for k, v in d["target"].items()})


def wire_pseudo(g: Graph, anchor: str, pattern: ConnectionPattern, ids: Sequence[str]) -> None:
    """Add ``ids`` to ``g`` (in place) linked to ``anchor`` per ``pattern``.

    Undirected graphs cannot carry link direction; each link becomes one
    undirected edge.
    """
    for p in ids:
        if p in g:
            raise ValidationError(f"pseudo id {p} collides with an existing node")
        g.add_node(p)
    local = lambda i: anchor if i < 0 else ids[i]
    links = pattern.directed_links()
    if not g.directed:
        links = list(dict.fromkeys(tuple(sorted(l)) for l in links))
    for i, j in links:
        g.add_edge(local(i), local(j), 1.0)


def implant(gs: Graph, gt: Graph, anchors: AnchorSet, pattern: ConnectionPattern | None = None,
            prefix: str = DEFAULT_PREFIX) -> tuple[Graph, Graph, PseudoRegistry]:
    """Add ``pattern.n`` paired pseudo anchors around every train anchor in both networks."""
    pattern = pattern or ConnectionPattern.full(2)
    gs2, gt2 = gs.copy(), gt.copy()
    reg = PseudoRegistry(pattern)
    for s, t in anchors.train:
        ps = [gs2.qualify(f"{prefix}:{gs2.raw(s)}#{i}") for i in range(pattern.n)]
        pt = [gt2.qualify(f"{prefix}:{gt2.raw(t)}#{i}") for i in range(pattern.n)]
        wire_pseudo(gs2, s, pattern, ps)
        wire_pseudo(gt2, t, pattern, pt)
        reg.anchors.append((s, t))
        reg.source[s] = ps
        reg.target[s] = pt
    return gs2, gt2, reg


# ---------------------------------------------------------------------------
# shift quantities

def one_step_anchor_shift(space: EmbeddingSpace, anchor: str, pseudo: Sequence[str], eta: float) -> np.ndarray:
    """Anchor displacement contributed by its pseudo anchors in one update."""
    u_a = space[anchor]
    shift = np.zeros(space.dim)
    for p in pseudo:
        shift += pair_gradient(u_a, space[p], 1)
    return eta * shift


def neighbor_shift_proxy(space: EmbeddingSpace, b: str, a: str, delta_a) -> float:
    """Change of the logistic similarity between ``b`` and ``a`` when ``a`` moves by ``delta_a``."""
    u_b, u_a = space[b], space[a]
    return float(sigmoid(u_b @ (u_a + np.asarray(delta_a))) - sigmoid(u_b @ u_a))


def sigmoid_prime(x):
    # symmetric form; s * (1 - s) underflows to 0 for large positive x
    e = np.exp(-np.abs(np.asarray(x, dtype=np.float64)))
    return e / (1.0 + e) ** 2


@dataclass(frozen=True)
class DecayConfig:
    background_nodes: int = 200
    background_m: int = 2
    dim: int = 16
    pseudo_count: int = 2
    seeds: int = 20
    base_seed: int = 0
    samples: int = 40000
    lr: float = 0.025
    negatives: int = 5
    scalar_draws: int = 10000
    workers: int = 1


@dataclass
class ScalarBoundCheck:
    draws: int
    decay_violations: int
    mean_value_violations: int
    endpoint_violations: int


@dataclass
class DecayReport:
    records: list[tuple[int, float, float, float]]
    scalar: ScalarBoundCheck
    config: DecayConfig

    @property
    def means(self) -> tuple[float, float, float]:
        arr = np.array([r[1:] for r in self.records]) if self.records else np.zeros((1, 3))
        return tuple(float(x) for x in arr.mean(axis=0))

    @property
    def ordered(self) -> bool:
        a, b, c = self.means
        return a > b > c

    @property
    def ordered_runs(self) -> int:
        return sum(1 for _, a, b, c in self.records if a > b > c)

    def to_text(self) -> str:
        a, b, c = self.means
        lines = [
            f"seeds: {len(self.records)}",
            f"dim: {self.config.dim}",
            f"pseudo_count: {self.config.pseudo_count}",
            f"mean_shift_a: {a:.9g}",
            f"mean_shift_b: {b:.9g}",
            f"mean_shift_c: {c:.9g}",
            f"ordering_a_gt_b_gt_c: {str(self.ordered).lower()}",
            f"ordered_runs: {self.ordered_runs}",
            f"scalar_draws: {self.scalar.draws}",
            f"scalar_decay_violations: {self.scalar.decay_violations}",
            f"scalar_mean_value_violations: {self.scalar.mean_value_violations}",
            f"scalar_endpoint_violations: {self.scalar.endpoint_violations}",
        ]
        return "\n".join(lines) + "\n"

    def records_csv(self) -> str:
        rows = ["seed,shift_a,shift_b,shift_c"]
        rows += [f"{s},{a:.9g},{b:.9g},{c:.9g}" for s, a, b, c in self.records]
        return "\n".join(rows) + "\n"


def path_probe_graph(cfg: DecayConfig, seed: int) -> Graph:
    """Random background graph with a path a - b - c hanging off it at c."""
    base = nx.barabasi_albert_graph(cfg.background_nodes, cfg.background_m, seed=seed)
    g = Graph(directed=False)
    for n in base.nodes:
        g.add_node(str(n))
    for u, v in base.edges:
        g.add_edge(str(u), str(v))
    g.add_edge("a", "b")
    g.add_edge("b", "c")
    rng = np.random.default_rng(seed)
    for x in rng.choice(cfg.background_nodes, size=cfg.background_m, replace=False):
        g.add_edge("c", str(int(x)))
    return g


def _decay_trial(cfg: DecayConfig, seed: int) -> tuple[int, float, float, float]:
    g = path_probe_graph(cfg, seed)
    tcfg = TrainConfig(dim=cfg.dim, lr=cfg.lr, negatives=cfg.negatives, epochs=1,
                       samples_per_epoch=cfg.samples, order="first", seed=seed)
    empty = Graph(directed=False, namespace="t")
    plain = Trainer(g, empty, AnchorSet(), tcfg)
    plain.run_epoch()
    with_p = g.copy()
    pseudo_anchor = {}
    if cfg.pseudo_count:
        ids = [f"{DEFAULT_PREFIX}:a#{i}" for i in range(cfg.pseudo_count)]
        wire_pseudo(with_p, "a", ConnectionPattern.full(cfg.pseudo_count), ids)
        pseudo_anchor = dict.fromkeys(ids, "a")
    implanted = Trainer(with_p, empty, AnchorSet(), tcfg, pseudo_anchor)
    implanted.run_epoch()
    s0, s1 = plain.space(), implanted.space()
    shifts = [float(np.linalg.norm(s1[n] - s0[n])) for n in ("a", "b", "c")]
    return (seed, *shifts)


def scalar_bound_check(draws: int, seed: int) -> ScalarBoundCheck:
    """One-dimensional check of how a shift at ``a`` propagates to its neighbor ``b``.

    With scalars u_a, u_b and shift da, db = s(u_b (u_a + da)) - s(u_b u_a).
    Counted violations:

    * decay: |db| >= |da|; impossible because s' <= 1/4 and |u_b| <= 1 here;
    * mean value: |db| > |u_b da| * max s' on the segment; never holds;
    * endpoint: |db| > |da| * s'(u_b (u_a + da)); a diagnostic only, this
      stronger form is false whenever the segment crosses a region where s'
      decreases toward the endpoint.
    """
    rng = np.random.default_rng(seed)
    u_a = rng.normal(size=draws)
    u_b = rng.uniform(-1.0, 1.0, size=draws)
    da = rng.normal(size=draws)
    x0, x1 = u_b * u_a, u_b * (u_a + da)
    db = sigmoid(x1) - sigmoid(x0)
    # s' peaks at 0, so its max over [x0, x1] is at the point closest to 0
    closest = np.where(np.sign(x0) != np.sign(x1), 0.0, np.where(np.abs(x0) < np.abs(x1), x0, x1))
    slack = 1e-15
    return ScalarBoundCheck(
        draws=draws,
        decay_violations=int(np.count_nonzero(np.abs(db) >= np.abs(da))),
        mean_value_violations=int(np.count_nonzero(np.abs(db) > np.abs(u_b * da) * sigmoid_prime(closest) + slack)),
        endpoint_violations=int(np.count_nonzero(np.abs(db) > np.abs(da) * sigmoid_prime(x1))),
    )


def shift_decay_experiment(cfg: DecayConfig | None = None) -> DecayReport:
    """Paired runs with and without pseudo anchors at ``a``; displacement of a, b, c per seed."""
    cfg = cfg or DecayConfig()
    seeds = [cfg.base_seed + i for i in range(cfg.seeds)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(lambda s: _decay_trial(cfg, s), seeds))
    else:
        records = [_decay_trial(cfg, s) for s in seeds]
    return DecayReport(records, scalar_bound_check(cfg.scalar_draws, cfg.base_seed), cfg)
