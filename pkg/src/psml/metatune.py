"""Meta-learned direction control for pseudo-anchor embeddings.

Each pseudo anchor p with index i around real anchor a is shifted by
``g(w_i * base(a))`` where ``base(a)`` is the mean of a's vector and its real
neighbors' vectors.  The weights ``W`` are learned by gradient descent on

    f(W) = -sum over pairs of sigmoid(label * (u_p + shift_p(W)) . u_j)

first on anchor-rich support pairs, then on the query pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .embed import EmbeddingSpace, TrainConfig, Trainer, sigmoid
from .graph import AnchorSet, Graph, SynthConfig, ValidationError, generate_pair
from .implant import ConnectionPattern, PseudoRegistry, implant

ACTIVATIONS = ("tanh", "identity")


def activation(name: str):
    """(g, g') pair for an activation name."""
    if name == "tanh":
        return np.tanh, lambda x: 1.0 - np.tanh(x) ** 2
    if name == "identity":
        return (lambda x: x), np.ones_like
    raise ValidationError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")


def default_supports() -> tuple[SynthConfig, ...]:
    return tuple(SynthConfig(n=400, m=3, anchor_fraction=0.4, dropout=0.1, seed=1000 + i) for i in range(3))


@dataclass(frozen=True)
class MetaConfig:
    support_lr: float = 0.01
    query_lr: float = 0.0015
    iterations: int = 5
    activation: str = "tanh"
    supports: tuple[SynthConfig, ...] = field(default_factory=default_supports)
    w_init: float = 0.1
    epoch_iterations: int = 1

    def __post_init__(self):
        if not (self.support_lr > 0 and self.query_lr >= 0):
            raise ValidationError("support_lr must be positive and query_lr nonnegative")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0 (0 disables fine-tuning)")
        activation(self.activation)

    @property
    def enabled(self) -> bool:
        return self.iterations > 0


class MetaPair(NamedTuple):
    pseudo: str
    other: str
    label: int


def init_weights(pattern: ConnectionPattern, value: float = 0.1) -> np.ndarray:
    """One direction weight per pseudo index."""
    return np.full(pattern.n, float(value))


def real_neighbors(space: EmbeddingSpace, node: str, graphs: Graph | Sequence[Graph]) -> list[str]:
    """Distinct non-pseudo first-order neighbors of ``node`` across ``graphs``, as universe ids."""
    if isinstance(graphs, Graph):
        graphs = [graphs]
    me = space.uid(node)
    seen: dict[str, None] = {}
    for g in graphs:
        for original in (n for n in g.nodes if space.uid(n) == me):
            for nb in g.neighbors(original):
                u = space.uid(nb)
                if u != me and u not in space.pseudo:
                    seen[u] = None
    return list(seen)


def base_direction(space: EmbeddingSpace, anchor: str, graphs: Graph | Sequence[Graph]) -> np.ndarray:
    """Mean of the anchor vector and its real-neighbor vectors."""
    members = [space.uid(anchor)] + real_neighbors(space, anchor, graphs)
    return np.mean([space[m] for m in members], axis=0)


def pseudo_direction(w_i: float, base, g: str = "tanh") -> np.ndarray:
    fn, _ = activation(g)
    return fn(w_i * np.asarray(base, dtype=np.float64))


def meta_vectors(space: EmbeddingSpace) -> np.ndarray:
    """Coordinates the meta objective works on: spatial part for Lorentz points."""
    return space.vectors[:, 1:] if space.geometry == "lorentz" else space.vectors


def anchor_bases(space: EmbeddingSpace, registry: PseudoRegistry, gs: Graph, gt: Graph) -> dict[str, np.ndarray]:
    """Base direction per registered anchor, keyed by the source-side anchor id."""
    lead = 1 if space.geometry == "lorentz" else 0
    return {s: base_direction(space, s, [gs, gt])[lead:] for s, _ in registry.anchors}


def build_meta_pairs(space: EmbeddingSpace, registry: PseudoRegistry, gs: Graph, gt: Graph) -> list[MetaPair]:
    """Counterparts as positives, the anchor's real neighbors in both networks as negatives."""
    pairs = []
    for s, _ in registry.anchors:
        neighbors = real_neighbors(space, s, [gs, gt])
        for p, q in zip(registry.source[s], registry.target[s]):
            for me, twin in ((p, q), (q, p)):
                pairs.append(MetaPair(me, twin, 1))
                pairs.extend(MetaPair(me, j, -1) for j in neighbors)
    return pairs


class _Compiled:
    """Pair list flattened into row indices for vectorized evaluation."""

    def __init__(self, space, registry, pairs, bases):
        anchor_of = {}
        for s, _ in registry.anchors:
            for p in registry.source[s] + registry.target[s]:
                anchor_of[p] = s
        index_of = registry.index_of()
        self.p_rows = np.array([space.row(mp.pseudo) for mp in pairs], dtype=np.int64)
        self.j_rows = np.array([space.row(mp.other) for mp in pairs], dtype=np.int64)
        self.labels = np.array([mp.label for mp in pairs], dtype=np.float64)
        self.widx = np.array([index_of[mp.pseudo] for mp in pairs], dtype=np.int64)
        dim = meta_vectors(space).shape[1]
        self.base = np.array([bases[anchor_of[mp.pseudo]] for mp in pairs]).reshape(len(pairs), dim)

    def scores(self, vecs, W, g):
        fn, dfn = activation(g)
        pre = W[self.widx][:, None] * self.base
        shifted = vecs[self.p_rows] + fn(pre)
        s = self.labels * np.einsum("ij,ij->i", shifted, vecs[self.j_rows])
        return s, pre, dfn

    def objective(self, vecs, W, g):
        if len(self.labels) == 0:
            return 0.0
        s, _, _ = self.scores(vecs, W, g)
        return -float(np.sum(sigmoid(s)))

    def gradient(self, vecs, W, g):
        grad = np.zeros_like(W)
        if len(self.labels) == 0:
            return grad
        s, pre, dfn = self.scores(vecs, W, g)
        sig = sigmoid(s)
        coupling = np.einsum("ij,ij->i", dfn(pre) * self.base, vecs[self.j_rows])
        np.add.at(grad, self.widx, -sig * (1.0 - sig) * self.labels * coupling)
        return grad


def meta_objective(space: EmbeddingSpace, registry: PseudoRegistry, W, pairs: Sequence[MetaPair],
                   bases: dict[str, np.ndarray], g: str = "tanh") -> float:
    W = np.asarray(W, dtype=np.float64)
    return _Compiled(space, registry, list(pairs), bases).objective(meta_vectors(space), W, g)


def meta_gradient(space: EmbeddingSpace, registry: PseudoRegistry, W, pairs: Sequence[MetaPair],
                  bases: dict[str, np.ndarray], g: str = "tanh") -> np.ndarray:
    """Exact derivative of ``meta_objective`` with respect to each weight."""
    W = np.asarray(W, dtype=np.float64)
    return _Compiled(space, registry, list(pairs), bases).gradient(meta_vectors(space), W, g)


@dataclass
class TraceRecord:
    stage: str
    step: int
    objective: float
    weights: list[float]

    def to_dict(self):
        return {"stage": self.stage, "step": self.step, "objective": self.objective, "weights": self.weights}


def learn_prior(cfg: MetaConfig, embed_cfg: TrainConfig, pattern: ConnectionPattern | None = None,
                W=None, trace: list | None = None, trainer_cls=Trainer) -> np.ndarray:
    """One descent step on W per support pair, in order."""
    pattern = pattern or ConnectionPattern.full(2)
    W = init_weights(pattern, cfg.w_init) if W is None else np.array(W, dtype=np.float64)
    for step, support in enumerate(cfg.supports):
        gs, gt, anchors = generate_pair(support)
        anchors = AnchorSet.all_train(anchors.pairs)
        gs2, gt2, reg = implant(gs, gt, anchors, pattern)
        trainer = trainer_cls(gs2, gt2, anchors, embed_cfg, reg.anchor_of())
        for _ in range(embed_cfg.epochs):
            trainer.run_epoch()
        space = trainer.space()
        pairs = build_meta_pairs(space, reg, gs2, gt2)
        comp = _Compiled(space, reg, pairs, anchor_bases(space, reg, gs2, gt2))
        W = W - cfg.support_lr * comp.gradient(meta_vectors(space), W, cfg.activation)
        if trace is not None:
            trace.append(TraceRecord("support", step, comp.objective(meta_vectors(space), W, cfg.activation), W.tolist()))
    return W


def finetune_query(space: EmbeddingSpace, registry: PseudoRegistry, W, cfg: MetaConfig,
                   gs: Graph, gt: Graph, iterations: int | None = None,
                   trace: list | None = None, epoch: int = 0) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Run ``iterations`` descent steps on W, then return W and the shifted pseudo vectors.

    Only pseudo-anchor vectors are returned; ``space`` itself is not modified.
    """
    k = cfg.iterations if iterations is None else iterations
    W = np.array(W, dtype=np.float64)
    bases = anchor_bases(space, registry, gs, gt)
    comp = _Compiled(space, registry, build_meta_pairs(space, registry, gs, gt), bases)
    for _ in range(k):
        W = W - cfg.query_lr * comp.gradient(meta_vectors(space), W, cfg.activation)
    if trace is not None:
        trace.append(TraceRecord("query", epoch, comp.objective(meta_vectors(space), W, cfg.activation), W.tolist()))
    index_of = registry.index_of()
    updated = {}
    for s, _ in registry.anchors:
        for p in registry.source[s] + registry.target[s]:
            shift = pseudo_direction(W[index_of[p]], bases[s], cfg.activation)
            if space.geometry == "lorentz":
                from .hyperbolic import shift_on_manifold
                updated[p] = shift_on_manifold(space[p], shift)
            else:
                updated[p] = space[p] + shift
    return W, updated


@dataclass
class PSMLResult:
    space: EmbeddingSpace
    registry: PseudoRegistry
    weights: np.ndarray
    trace: list[TraceRecord]


def psml_train(gs: Graph, gt: Graph, anchors: AnchorSet, pattern: ConnectionPattern | None,
               embed_cfg: TrainConfig, meta_cfg: MetaConfig, trainer_cls=Trainer) -> PSMLResult:
    """Implant, then alternate embedding epochs with pseudo-anchor fine-tuning."""
    pattern = pattern or ConnectionPattern.full(2)
    trace: list[TraceRecord] = []
    W = init_weights(pattern, meta_cfg.w_init)
    if meta_cfg.enabled and meta_cfg.supports:
        W = learn_prior(meta_cfg, embed_cfg, pattern, W, trace, trainer_cls)
    gs2, gt2, reg = implant(gs, gt, anchors, pattern)
    trainer = trainer_cls(gs2, gt2, anchors, embed_cfg, reg.anchor_of())
    for epoch in range(embed_cfg.epochs):
        trainer.run_epoch()
        if not meta_cfg.enabled or not reg.anchors:
            continue
        last = epoch == embed_cfg.epochs - 1
        k = meta_cfg.iterations if last else meta_cfg.epoch_iterations
        W, updated = finetune_query(trainer.space(), reg, W, meta_cfg, gs2, gt2, k, trace, epoch)
        for p, vec in updated.items():
            if not np.all(np.isfinite(vec)):
                raise FloatingPointError(f"non-finite pseudo vector for {p} at epoch {epoch}")
            trainer.emb[trainer.universe.row(p)] = vec
    return PSMLResult(trainer.space(), reg, W, trace)
