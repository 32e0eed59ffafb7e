"""Structural-proximity embedding with negative sampling over a merged universe.

Both networks are trained in one space.  Every train-anchor pair collapses to
a single universe node whose edges are the union of the two originals, so the
anchor vector is shared by construction.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import _kernels
from .alias import AliasTable
from .graph import AnchorSet, Graph, ValidationError

EPS = 1e-12
NOISE_POWER = 0.75


def sigmoid(x):
    x = np.clip(x, -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-x))


def pair_loss(u_i, u_j, label: int) -> float:
    """Log-likelihood of one (target, other) pair; always <= 0."""
    p = float(np.clip(sigmoid(float(np.dot(u_i, u_j))), EPS, 1.0 - EPS))
    return label * math.log(p) + (1 - label) * math.log(1.0 - p)


def pair_gradient(u_i, u_j, label: int) -> np.ndarray:
    """Ascent direction of ``pair_loss`` with respect to ``u_i``."""
    u_j = np.asarray(u_j, dtype=np.float64)
    return (label - float(sigmoid(float(np.dot(u_i, u_j))))) * u_j


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 64
    lr: float = 0.025
    negatives: int = 5
    epochs: int = 10
    samples_per_epoch: int = 300000
    order: str = "second"
    init_scale: float = 0.5
    seed: int = 0
    workers: int = 1
    exclude_pseudo_negatives: bool = True

    def __post_init__(self):
        if self.dim < 2:
            raise ValidationError(f"dim={self.dim} must be >= 2")
        if not self.lr > 0:
            raise ValidationError(f"lr={self.lr} must be positive")
        if self.negatives < 1:
            raise ValidationError(f"negatives={self.negatives} must be >= 1")
        if self.epochs < 0 or self.samples_per_epoch < 0:
            raise ValidationError("epochs and samples_per_epoch must be nonnegative")
        if self.order not in ("first", "second"):
            raise ValidationError(f"order must be 'first' or 'second', got {self.order!r}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")

    @property
    def total_samples(self) -> int:
        return self.epochs * self.samples_per_epoch


def noise_weights(degrees) -> np.ndarray:
    return np.asarray(degrees, dtype=np.float64) ** NOISE_POWER


def sample_negatives(g: Graph, target: str, k: int, rng: np.random.Generator) -> list[str]:
    """Draw ``k`` noise nodes from the degree^0.75 law, excluding ``target`` and its out-neighbors."""
    if len(g) <= 1:
        raise ValidationError("negative sampling needs at least two nodes")
    if k == 0:
        return []
    excluded = set(g.out_neighbors(target)) | {target}
    candidates = [n for n in g.nodes if n not in excluded]
    degree = [sum(1 for _ in g.out_neighbors(n)) + sum(1 for _ in g.in_neighbors(n)) for n in candidates]
    w = noise_weights(degree)
    if not candidates or w.sum() <= 0:
        raise ValidationError(f"no negative candidates for {target}")
    table = AliasTable(w)
    return [candidates[i] for i in table.draw(rng, size=k)]


# ---------------------------------------------------------------------------

@dataclass
class EmbeddingSpace:
    """Vectors for every universe node plus the original-id -> universe-id map."""

    ids: list[str]
    vectors: np.ndarray
    merged: dict[str, str]
    context: np.ndarray | None = None
    pseudo: frozenset = frozenset()
    geometry: str = "euclidean"
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {u: i for i, u in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def uid(self, node: str) -> str:
        return self.merged.get(node, node)

    def row(self, node: str) -> int:
        return self.index[self.uid(node)]

    def __getitem__(self, node: str) -> np.ndarray:
        return self.vectors[self.row(node)]

    def __contains__(self, node) -> bool:
        return self.uid(node) in self.index

    def copy(self) -> "EmbeddingSpace":
        return EmbeddingSpace(list(self.ids), self.vectors.copy(), dict(self.merged),
                              None if self.context is None else self.context.copy(),
                              self.pseudo, self.geometry)


def _write_matrix(path, ids, mat, flag=None):
    with open(path, "w", encoding="utf-8") as fh:
        header = f"{mat.shape[0]} {mat.shape[1]}"
        fh.write(header + (f" {flag}" if flag else "") + "\n")
        for u, row in zip(ids, mat):
            fh.write(u + " " + " ".join(f"{x:.9g}" for x in row) + "\n")


def _read_matrix(path):
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        n, d = int(head[0]), int(head[1])
        flag = head[2] if len(head) > 2 else None
        ids, rows = [], []
        for line in fh:
            parts = line.rsplit(None, d)
            if len(parts) != d + 1:
                raise ValidationError(f"{path}: row for {parts[0]!r} has wrong width")
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(ids) != n:
        raise ValidationError(f"{path}: header says {n} rows, found {len(ids)}")
    return ids, np.array(rows, dtype=np.float64).reshape(n, d), flag


def save_embeddings(space: EmbeddingSpace, path) -> None:
    flag = "lorentz" if space.geometry == "lorentz" else None
    _write_matrix(path, space.ids, space.vectors, flag)


def save_space(space: EmbeddingSpace, directory) -> None:
    """Write embeddings.txt, optional context.txt and space.json into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_embeddings(space, directory / "embeddings.txt")
    if space.context is not None:
        _write_matrix(directory / "context.txt", space.ids, space.context)
    meta = {"geometry": space.geometry, "merged": space.merged, "pseudo": sorted(space.pseudo)}
    (directory / "space.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def load_space(directory) -> EmbeddingSpace:
    directory = Path(directory)
    ids, vecs, flag = _read_matrix(directory / "embeddings.txt")
    meta = json.loads((directory / "space.json").read_text())
    ctx = None
    if (directory / "context.txt").exists():
        _, ctx, _ = _read_matrix(directory / "context.txt")
    geometry = "lorentz" if flag == "lorentz" else meta.get("geometry", "euclidean")
    return EmbeddingSpace(ids, vecs, meta["merged"], ctx, frozenset(meta["pseudo"]), geometry)


# ---------------------------------------------------------------------------

class Universe:
    """Merged node set, edge arrays and sampling tables for two networks.

    Real nodes come first (source order, then unmerged target nodes), pseudo
    nodes last, so initial real vectors do not depend on implantation.
    """

    def __init__(self, gs: Graph, gt: Graph, anchors: AnchorSet, pseudo: Iterable[str] = (),
                 exclude_pseudo_negatives: bool = True):
        pseudo = set(pseudo)
        merged: dict[str, str] = {}
        for s, t in anchors.train:
            if s not in gs or t not in gt:
                raise ValidationError(f"train anchor ({s}, {t}) missing from its graph")
            merged[t] = s
        self.merged = merged
        real_ids = [n for n in gs.nodes if n not in pseudo]
        real_ids += [n for n in gt.nodes if n not in pseudo and n not in merged]
        pseudo_ids = [n for n in gs.nodes if n in pseudo] + [n for n in gt.nodes if n in pseudo]
        self.ids = real_ids + pseudo_ids
        self.n_real = len(real_ids)
        self.index = {u: i for i, u in enumerate(self.ids)}
        self.is_pseudo = np.zeros(len(self.ids), dtype=bool)
        self.is_pseudo[self.n_real:] = True
        self.pseudo = frozenset(pseudo_ids)

        real_e, pseudo_e = [], []
        for g in (gs, gt):
            for u, v, w in g.edges:
                i, j = self.row(u), self.row(v)
                bucket = pseudo_e if (u in pseudo or v in pseudo) else real_e
                bucket.append((i, j, w))
                if not g.directed and i != j:
                    bucket.append((j, i, w))
        self.real_edges = _edge_arrays(real_e)
        self.pseudo_edges = _edge_arrays(pseudo_e)

        n = len(self.ids)
        src = np.concatenate([self.real_edges[0], self.pseudo_edges[0]])
        dst = np.concatenate([self.real_edges[1], self.pseudo_edges[1]])
        order = np.lexsort((dst, src))
        self.indices = dst[order].astype(np.int64)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, src + 1, 1)
        self.indptr = np.cumsum(self.indptr)

        # first-order real neighbors, either direction, for base directions
        nbrs: list[dict[int, None]] = [dict() for _ in range(n)]
        for i, j in zip(self.real_edges[0].tolist(), self.real_edges[1].tolist()):
            if i != j:
                nbrs[i][j] = None
                nbrs[j][i] = None
        self.real_neighbors = [np.array(list(d), dtype=np.int64) for d in nbrs]

        degree = np.zeros(n)
        rs, rd, rw = self.real_edges
        np.add.at(degree, rs, rw)
        np.add.at(degree, rd, rw)
        if not exclude_pseudo_negatives:
            ps, pd, pw = self.pseudo_edges
            np.add.at(degree, ps, pw)
            np.add.at(degree, pd, pw)
        else:
            degree[self.is_pseudo] = 0.0
        self.degree = degree
        # pseudo rows sit after the real rows; leaving them out of the table
        # keeps noise draws identical with and without implantation
        pool = degree if not exclude_pseudo_negatives else degree[: self.n_real]
        self.noise = AliasTable(noise_weights(pool)) if pool.sum() > 0 else None

        self.real_table = AliasTable(rw) if len(rw) else None
        pw = self.pseudo_edges[2]
        self.pseudo_table = AliasTable(pw) if len(pw) else None
        self.pseudo_ratio = float(pw.sum() / rw.sum()) if len(pw) and len(rw) else 0.0

    def row(self, node: str) -> int:
        return self.index[self.merged.get(node, node)]

    def __len__(self):
        return len(self.ids)

    def kernel_tables(self):
        """Positional arguments shared by both compiled trainers."""
        empty_f = np.zeros(0)
        empty_i = np.zeros(0, dtype=np.int64)
        rs, rd, _ = self.real_edges
        ps, pd, _ = self.pseudo_edges
        rt, pt = self.real_table, self.pseudo_table
        return (
            rs, rd, rt.prob if rt else empty_f, rt.alias if rt else empty_i,
            ps, pd, pt.prob if pt else empty_f, pt.alias if pt else empty_i, self.pseudo_ratio,
            self.noise.prob, self.noise.alias, self.indptr, self.indices,
        )


def _edge_arrays(edges):
    if not edges:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    a = np.array(edges, dtype=np.float64)
    return a[:, 0].astype(np.int64), a[:, 1].astype(np.int64), a[:, 2].copy()


def _stream_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


class Trainer:
    """Resumable negative-sampling SGD over a merged two-network universe.

    ``run_epoch`` advances by ``samples_per_epoch`` real samples; pseudo
    samples are interleaved at the pseudo/real edge-weight ratio from their own
    random stream.  ``pseudo_anchor`` maps each pseudo id to its real anchor
    (any original id); pseudo vectors start at the anchor's base direction
    plus small Gaussian noise.
    """

    def __init__(self, gs: Graph, gt: Graph, anchors: AnchorSet, cfg: TrainConfig,
                 pseudo_anchor: Mapping[str, str] | None = None):
        self.cfg = cfg
        pseudo_anchor = dict(pseudo_anchor or {})
        self.universe = u = Universe(gs, gt, anchors, pseudo_anchor, cfg.exclude_pseudo_negatives)
        if u.real_table is None and cfg.total_samples > 0:
            raise ValidationError("no real edges to train on")
        init_seed, pinit_seed, *streams = _stream_seeds(cfg.seed, 2 + 2 * cfg.workers)
        self.states = [np.array([s], dtype=np.uint64) for s in streams[: cfg.workers]]
        self.pstates = [np.array([s], dtype=np.uint64) for s in streams[cfg.workers:]]
        self.emb = self._init_vectors(init_seed, pinit_seed, pseudo_anchor)
        self.ctx = np.zeros_like(self.emb) if cfg.order == "second" else None
        self.done = 0

    def _init_vectors(self, init_seed, pinit_seed, pseudo_anchor):
        u, d = self.universe, self.cfg.dim
        emb = np.empty((len(u), d))
        rng = np.random.default_rng(init_seed)
        emb[: u.n_real] = rng.uniform(-self.cfg.init_scale, self.cfg.init_scale, (u.n_real, d)) / d
        prng = np.random.default_rng(pinit_seed)
        for r in range(u.n_real, len(u)):
            a = u.row(pseudo_anchor[u.ids[r]])
            members = np.concatenate([[a], u.real_neighbors[a]])
            emb[r] = emb[members].mean(axis=0) + prng.normal(0.0, 0.01, d)
        return emb

    @property
    def total(self) -> int:
        return self.cfg.total_samples

    def run_epoch(self) -> None:
        self.run(self.cfg.samples_per_epoch)

    def run(self, n_samples: int) -> None:
        stop = min(self.done + n_samples, self.total)
        if stop <= self.done:
            return
        tables = self.universe.kernel_tables()
        ctx = self.ctx if self.ctx is not None else np.zeros((1, 1))
        second = self.ctx is not None
        cfg = self.cfg

        def chunk(w, lo, hi):
            _kernels.euclid_steps(self.emb, ctx, second, *tables, cfg.negatives, cfg.lr,
                                  lo, hi, self.total, self.states[w], self.pstates[w],
                                  not cfg.exclude_pseudo_negatives)

        if cfg.workers == 1:
            chunk(0, self.done, stop)
        else:
            bounds = np.linspace(self.done, stop, cfg.workers + 1).astype(int)
            # unsynchronized shared-array updates; lost updates are tolerated
            with ThreadPoolExecutor(cfg.workers) as pool:
                list(pool.map(chunk, range(cfg.workers), bounds[:-1], bounds[1:]))
        self.done = stop

    def space(self) -> EmbeddingSpace:
        u = self.universe
        return EmbeddingSpace(list(u.ids), self.emb.copy(), dict(u.merged),
                              None if self.ctx is None else self.ctx.copy(), u.pseudo)


def train(gs: Graph, gt: Graph, anchors: AnchorSet, cfg: TrainConfig,
          pseudo_anchor: Mapping[str, str] | None = None) -> EmbeddingSpace:
    trainer = Trainer(gs, gt, anchors, cfg, pseudo_anchor)
    for _ in range(cfg.epochs):
        trainer.run_epoch()
    return trainer.space()
