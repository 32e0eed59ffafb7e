"""Lorentz (hyperboloid) model geometry and a Riemannian SGD trainer.

Points live on {x : <x,x>_L = -1, x_0 > 0} with <x,y>_L = -x_0 y_0 + sum x_i y_i.
A trainer with ``dim = n`` stores n+1 coordinates per node.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from . import _kernels
from .embed import EmbeddingSpace, TrainConfig, Trainer
from .graph import AnchorSet, Graph, ValidationError

MANIFOLD_TOL = 1e-9
TANGENT_TOL = 1e-6
MAX_STEP = 1.0


def lorentz_inner(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(-x[0] * y[0] + x[1:] @ y[1:])


def manifold_residual(x) -> float:
    return abs(lorentz_inner(x, x) + 1.0)


def check_point(x, tol: float = MANIFOLD_TOL) -> None:
    x = np.asarray(x, dtype=np.float64)
    # relative tolerance: the residual scales with x_0^2 far from the basepoint
    if x[0] <= 0 or manifold_residual(x) > tol * max(1.0, x[0] ** 2):
        raise ValidationError(f"point is off the hyperboloid (residual {manifold_residual(x):.3g})")


def lorentz_distance(x, y) -> float:
    """arcosh(-<x,y>_L), evaluated as 2 asinh(|x - y|_L / 2) to stay accurate near 0."""
    check_point(x)
    check_point(y)
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    # on the hyperboloid <x-y, x-y>_L = 2(-<x,y>_L - 1) >= 0
    return float(2.0 * np.arcsinh(0.5 * np.sqrt(max(lorentz_inner(diff, diff), 0.0))))


def lift_to_hyperboloid(spatial) -> np.ndarray:
    s = np.asarray(spatial, dtype=np.float64)
    return np.concatenate([[np.sqrt(1.0 + s @ s)], s])


def project_tangent(x, h) -> np.ndarray:
    """Orthogonal projection of an ambient vector onto the tangent space at x."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    return h + lorentz_inner(x, h) * x


def exp_map(x, v) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if abs(lorentz_inner(x, v)) > TANGENT_TOL * max(1.0, np.linalg.norm(x) * np.linalg.norm(v)):
        raise ValidationError("vector is not tangent at x")
    nrm = np.sqrt(max(lorentz_inner(v, v), 0.0))
    if nrm == 0:
        return x.copy()
    y = np.cosh(nrm) * x + np.sinh(nrm) * v / nrm
    return lift_to_hyperboloid(y[1:])


def shift_on_manifold(x, spatial_shift, max_norm: float = MAX_STEP) -> np.ndarray:
    """Move x along the tangent projection of a spatial displacement.

    The geodesic step is capped at ``max_norm``, the same cap the trainer uses.
    """
    x = np.asarray(x, dtype=np.float64)
    h = np.concatenate([[0.0], np.asarray(spatial_shift, dtype=np.float64)])
    v = project_tangent(x, h)
    nrm = np.sqrt(max(lorentz_inner(v, v), 0.0))
    if nrm > max_norm:
        v *= max_norm / nrm
    return exp_map(x, v)


class LorentzTrainer(Trainer):
    """Same sampling scheme as the Euclidean trainer; score is -d_L through the sigmoid."""

    def __init__(self, gs: Graph, gt: Graph, anchors: AnchorSet, cfg: TrainConfig,
                 pseudo_anchor: Mapping[str, str] | None = None):
        if cfg.workers != 1:
            raise ValidationError("the Lorentz trainer is single-worker only")
        super().__init__(gs, gt, anchors, cfg, pseudo_anchor)
        self.ctx = None

    def _init_vectors(self, init_seed, pinit_seed, pseudo_anchor):
        u, d = self.universe, self.cfg.dim
        spatial = np.empty((len(u), d))
        spatial[: u.n_real] = np.random.default_rng(init_seed).normal(0.0, 0.01, (u.n_real, d))
        prng = np.random.default_rng(pinit_seed)
        for r in range(u.n_real, len(u)):
            a = u.row(pseudo_anchor[u.ids[r]])
            members = np.concatenate([[a], u.real_neighbors[a]])
            spatial[r] = spatial[members].mean(axis=0) + prng.normal(0.0, 0.01, d)
        emb = np.empty((len(u), d + 1))
        emb[:, 1:] = spatial
        emb[:, 0] = np.sqrt(1.0 + np.einsum("ij,ij->i", spatial, spatial))
        return emb

    def run(self, n_samples: int) -> None:
        stop = min(self.done + n_samples, self.total)
        if stop <= self.done:
            return
        cfg = self.cfg
        _kernels.lorentz_steps(self.emb, *self.universe.kernel_tables(), cfg.negatives, cfg.lr,
                               self.done, stop, self.total, self.states[0], self.pstates[0],
                               MAX_STEP, not cfg.exclude_pseudo_negatives)
        self.done = stop

    def space(self) -> EmbeddingSpace:
        u = self.universe
        return EmbeddingSpace(list(u.ids), self.emb.copy(), dict(u.merged), None, u.pseudo, geometry="lorentz")


def train_hyperbolic(gs: Graph, gt: Graph, anchors: AnchorSet, cfg: TrainConfig,
                     pseudo_anchor: Mapping[str, str] | None = None) -> EmbeddingSpace:
    trainer = LorentzTrainer(gs, gt, anchors, cfg, pseudo_anchor)
    for _ in range(cfg.epochs):
        trainer.run_epoch()
    return trainer.space()
