"""Alignment metrics and the embedding-distribution evenness diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embed import EmbeddingSpace
from .graph import AnchorSet, Graph, ValidationError

METRICS = ("dot", "cosine", "lorentz")
DIRECTIONS = ("s2t", "t2s", "both")


def _similarity(src: np.ndarray, cand: np.ndarray, metric: str) -> np.ndarray:
    """Higher is better; rows are sources, columns candidates."""
    if metric == "dot":
        return src @ cand.T
    if metric == "cosine":
        sn = np.linalg.norm(src, axis=1, keepdims=True)
        cn = np.linalg.norm(cand, axis=1, keepdims=True)
        return (src / np.where(sn > 0, sn, 1.0)) @ (cand / np.where(cn > 0, cn, 1.0)).T
    if metric == "lorentz":
        inner = -np.outer(src[:, 0], cand[:, 0]) + src[:, 1:] @ cand[:, 1:].T
        return -np.arccosh(np.maximum(-inner, 1.0))
    raise ValidationError(f"unknown metric {metric!r}; expected one of {METRICS}")


def rank_candidates(space: EmbeddingSpace, src: str, candidates: list[str], metric: str = "cosine") -> list[str]:
    """Candidates ordered best-first; exact ties fall back to lexicographic id order."""
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if not candidates:
        return []
    cand = np.stack([space[c] for c in candidates])
    sim = _similarity(space[src][None, :], cand, metric)[0]
    return [candidates[i] for i in sorted(range(len(candidates)), key=lambda i: (-sim[i], candidates[i]))]


def candidate_pool(space: EmbeddingSpace, g: Graph) -> list[str]:
    """Real nodes of ``g`` that were not merged as train anchors."""
    return [n for n in g.nodes if n not in space.pseudo and space.uid(n) == n and n in space.index]


def true_ranks(space: EmbeddingSpace, queries: list[str], truths: list[str], pool: list[str],
               metric: str = "cosine") -> np.ndarray:
    """1-based rank of each truth among ``pool`` for its query, same tie rule as rank_candidates."""
    if not queries:
        return np.zeros(0, dtype=np.int64)
    pos = {c: i for i, c in enumerate(pool)}
    cand = space.vectors[[space.row(c) for c in pool]]
    src = space.vectors[[space.row(q) for q in queries]]
    sim = _similarity(src, cand, metric)
    # lexicographic position of each pool id, for the tie rule
    lex = np.empty(len(pool), dtype=np.int64)
    lex[np.array(sorted(range(len(pool)), key=pool.__getitem__))] = np.arange(len(pool))
    ranks = np.empty(len(queries), dtype=np.int64)
    for r, t in enumerate(truths):
        j = pos[t]
        row = sim[r]
        better = np.count_nonzero(row > row[j])
        tied = np.count_nonzero((row == row[j]) & (lex < lex[j]))
        ranks[r] = 1 + better + tied
    return ranks


def _direction_ranks(space, test, gs, gt, metric, direction):
    pairs = list(test.test) if any(r is not None for r in test.roles) else list(test.pairs)
    if not pairs:
        raise ValidationError("empty test anchor set")
    out = []
    if direction in ("s2t", "both"):
        out.append(true_ranks(space, [s for s, _ in pairs], [t for _, t in pairs], candidate_pool(space, gt), metric))
    if direction in ("t2s", "both"):
        out.append(true_ranks(space, [t for _, t in pairs], [s for s, _ in pairs], candidate_pool(space, gs), metric))
    if not out:
        raise ValidationError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")
    return out


def precision_from_ranks(ranks: np.ndarray, n: int) -> float:
    return 100.0 * float(np.count_nonzero(ranks <= n)) / len(ranks)


def hit_precision_from_ranks(ranks: np.ndarray, k: int) -> float:
    if k < 1:
        raise ValidationError("K must be >= 1")
    if len(ranks) == 0:
        raise ValidationError("empty test anchor set")
    h = np.where(ranks <= k, (k - (ranks - 1)) / k, 0.0)
    return float(h.mean())


def precision_at_n(space: EmbeddingSpace, test: AnchorSet, n: int, gs: Graph, gt: Graph,
                   metric: str = "cosine", direction: str = "s2t") -> float:
    """Percent of test pairs whose counterpart is in the top ``n`` of the candidate pool."""
    if n < 1:
        raise ValidationError("N must be >= 1")
    per_dir = _direction_ranks(space, test, gs, gt, metric, direction)
    return float(np.mean([precision_from_ranks(r, n) for r in per_dir]))


def hit_precision(space: EmbeddingSpace, test: AnchorSet, k: int, gs: Graph, gt: Graph,
                  metric: str = "cosine", direction: str = "s2t") -> float:
    per_dir = _direction_ranks(space, test, gs, gt, metric, direction)
    return float(np.mean([hit_precision_from_ranks(r, k) for r in per_dir]))


def ppi(p_new: float, p_orig: float) -> float:
    """Relative precision improvement, in percent."""
    if p_orig == 0:
        raise ValidationError("PPI is undefined for a zero baseline precision")
    return 100.0 * (p_new - p_orig) / p_orig


@dataclass
class AlignmentReport:
    precision: dict[int, float]
    test_pairs: int
    direction: str
    metric: str
    hit_precision: float | None = None
    hit_k: int | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "precision": {str(k): v for k, v in sorted(self.precision.items())},
            "hit_precision": self.hit_precision,
            "hit_k": self.hit_k,
            "test_pairs": self.test_pairs,
            "direction": self.direction,
            "metric": self.metric,
            "config": self.config,
        }


def alignment_report(space: EmbeddingSpace, test: AnchorSet, gs: Graph, gt: Graph, ns=(1, 5, 10, 30),
                     hit_k: int | None = 30, metric: str = "cosine", direction: str = "s2t",
                     config: dict | None = None) -> AlignmentReport:
    per_dir = _direction_ranks(space, test, gs, gt, metric, direction)
    prec = {int(n): float(np.mean([precision_from_ranks(r, n) for r in per_dir])) for n in ns}
    hp = float(np.mean([hit_precision_from_ranks(r, hit_k) for r in per_dir])) if hit_k else None
    return AlignmentReport(prec, len(per_dir[0]), direction, metric, hp, hit_k, dict(config or {}))


# ---------------------------------------------------------------------------
# distribution diagnostic

def gini(values) -> float:
    """Gini coefficient of a nonnegative sample (0 for perfectly even)."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = len(x)
    if n == 0 or x.sum() == 0:
        return 0.0
    cum = np.arange(1, n + 1)
    return float((2.0 * np.sum(cum * x) / (n * x.sum())) - (n + 1.0) / n)


def power_iteration(mat: np.ndarray, tol: float = 1e-10, max_iter: int = 10000) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a symmetric PSD matrix.

    Starts from the column with the largest diagonal entry, which is
    deterministic and never orthogonal to the dominant direction of a
    diagonal-dominated covariance.
    """
    k = int(np.argmax(np.diag(mat)))
    v = mat[:, k].astype(np.float64).copy()
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return 0.0, np.eye(len(mat))[k]
    v /= nrm
    lam = float(v @ mat @ v)
    for _ in range(max_iter):
        w = mat @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, v
        w /= nw
        if w @ v < 0:
            w = -w
        lam_new = float(w @ mat @ w)
        done = np.linalg.norm(mat @ w - lam_new * w) <= tol * max(1.0, abs(lam_new))
        v, lam = w, lam_new
        if done:
            break
    return lam, v


def pca_2d(points: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Project rows onto the top-2 principal axes (power iteration with deflation)."""
    x = np.asarray(points, dtype=np.float64)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(len(x) - 1, 1)
    if not np.any(np.abs(cov) > 0):
        raise ValidationError("degenerate covariance: all projected points are identical")
    lam1, v1 = power_iteration(cov, tol)
    lam2, v2 = power_iteration(cov - lam1 * np.outer(v1, v1), tol)
    return centered @ np.stack([v1, v2], axis=1)


@dataclass
class DensityReport:
    grid: int
    counts: np.ndarray
    top_counts: list[int]
    evenness: float
    network: str

    def to_dict(self) -> dict:
        return {"grid": self.grid, "network": self.network, "evenness_gini": self.evenness,
                "top_counts": self.top_counts, "total": int(self.counts.sum())}

    def cells_csv(self) -> str:
        lines = ["cell_x,cell_y,count"]
        for x in range(self.grid):
            for y in range(self.grid):
                if self.counts[x, y]:
                    lines.append(f"{x},{y},{int(self.counts[x, y])}")
        return "\n".join(lines) + "\n"

    def frequency_csv(self) -> str:
        return "rank,count\n" + "".join(f"{i + 1},{c}\n" for i, c in enumerate(self.top_counts))


def density_from_points(points: np.ndarray, grid: int = 30, top: int = 100, network: str = "") -> DensityReport:
    if len(points) < 2:
        raise ValidationError("density report needs at least two points")
    proj = pca_2d(points)
    cells = np.zeros((len(proj), 2), dtype=np.int64)
    for ax in range(2):
        lo, hi = proj[:, ax].min(), proj[:, ax].max()
        if hi > lo:
            cells[:, ax] = np.minimum(np.floor((proj[:, ax] - lo) / (hi - lo) * grid), grid - 1)
    counts = np.zeros((grid, grid), dtype=np.int64)
    np.add.at(counts, (cells[:, 0], cells[:, 1]), 1)
    top_counts = sorted(counts.ravel().tolist(), reverse=True)[: min(top, grid * grid)]
    return DensityReport(grid, counts, top_counts, gini(top_counts), network)


def density_report(space: EmbeddingSpace, g: Graph, grid: int = 30, top: int = 100,
                   include_pseudo: bool = False) -> DensityReport:
    """Occupancy of a ``grid`` x ``grid`` plane by one network's PCA-projected vectors."""
    nodes = [n for n in g.nodes if n in space and (include_pseudo or space.uid(n) not in space.pseudo)]
    vecs = np.stack([space[n] for n in nodes]) if nodes else np.zeros((0, space.dim))
    return density_from_points(vecs, grid, top, g.namespace)
