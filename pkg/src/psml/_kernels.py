"""Compiled inner loops for the negative-sampling trainers.

Randomness comes from a splitmix64 stream held in a one-element uint64
array, so a kernel call can be resumed exactly where the previous one
stopped.  Real-edge samples and pseudo-edge samples use separate streams:
adding pseudo anchors never perturbs the sequence of real samples.
"""

import math

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
MAX_REJECTS = 64


@njit(nogil=True, cache=True)
def next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(nogil=True, cache=True)
def uniform(state):
    return float(next_u64(state) >> _S11) * _INV53


@njit(nogil=True, cache=True)
def alias_draw(prob, alias, state):
    n = prob.shape[0]
    i = int(uniform(state) * n)
    if i >= n:
        i = n - 1
    if uniform(state) < prob[i]:
        return i
    return alias[i]


@njit(nogil=True, cache=True)
def sigmoid(x):
    if x > 30.0:
        x = 30.0
    elif x < -30.0:
        x = -30.0
    return 1.0 / (1.0 + math.exp(-x))


@njit(nogil=True, cache=True)
def is_out_neighbor(indptr, indices, i, j):
    lo = indptr[i]
    hi = indptr[i + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        v = indices[mid]
        if v == j:
            return True
        if v < j:
            lo = mid + 1
        else:
            hi = mid
    return False


@njit(nogil=True, cache=True)
def draw_negative(i, n_prob, n_alias, indptr, indices, state):
    """Noise node for target ``i``; -1 if rejection keeps failing."""
    for _ in range(MAX_REJECTS):
        n = alias_draw(n_prob, n_alias, state)
        if n != i and not is_out_neighbor(indptr, indices, i, n):
            return n
    return -1


@njit(nogil=True, cache=True)
def _euclid_update(emb, ctx, second_order, i, j, k, lr, n_prob, n_alias, indptr, indices, state, acc,
                   push_negatives):
    d = emb.shape[1]
    for c in range(d):
        acc[c] = 0.0
    for r in range(k + 1):
        if r == 0:
            other = j
            label = 1.0
        else:
            other = draw_negative(i, n_prob, n_alias, indptr, indices, state)
            if other < 0:
                continue
            label = 0.0
        s = 0.0
        if second_order:
            for c in range(d):
                s += emb[i, c] * ctx[other, c]
        else:
            for c in range(d):
                s += emb[i, c] * emb[other, c]
        g = (label - sigmoid(s)) * lr
        move_other = r == 0 or push_negatives
        if second_order:
            for c in range(d):
                acc[c] += g * ctx[other, c]
                if move_other:
                    ctx[other, c] += g * emb[i, c]
        else:
            for c in range(d):
                acc[c] += g * emb[other, c]
                if move_other:
                    emb[other, c] += g * emb[i, c]
    for c in range(d):
        emb[i, c] += acc[c]


@njit(nogil=True, cache=True)
def euclid_steps(emb, ctx, second_order,
                 e_src, e_dst, e_prob, e_alias,
                 p_src, p_dst, p_prob, p_alias, pseudo_ratio,
                 n_prob, n_alias, indptr, indices,
                 k, lr0, start, stop, total, state, pstate, pseudo_push_negatives):
    """Real samples ``start..stop-1`` of a run of ``total``, with pseudo samples interleaved.

    When ``pseudo_push_negatives`` is false, negatives drawn for pseudo-edge
    samples only act on the sample's target; their own vectors stay put.
    """
    acc = np.zeros(emb.shape[1])
    has_pseudo = p_src.shape[0] > 0
    for t in range(start, stop):
        frac = 1.0 - t / total
        lr = lr0 * (frac if frac > 1e-4 else 1e-4)
        e = alias_draw(e_prob, e_alias, state)
        _euclid_update(emb, ctx, second_order, e_src[e], e_dst[e], k, lr,
                       n_prob, n_alias, indptr, indices, state, acc, True)
        if has_pseudo:
            quota = int(math.floor((t + 1) * pseudo_ratio)) - int(math.floor(t * pseudo_ratio))
            for _ in range(quota):
                e = alias_draw(p_prob, p_alias, pstate)
                _euclid_update(emb, ctx, second_order, p_src[e], p_dst[e], k, lr,
                               n_prob, n_alias, indptr, indices, pstate, acc, pseudo_push_negatives)


# ---------------------------------------------------------------------------
# Lorentz model

@njit(nogil=True, cache=True)
def lorentz_dot(x, y):
    s = -x[0] * y[0]
    for c in range(1, x.shape[0]):
        s += x[c] * y[c]
    return s


@njit(nogil=True, cache=True)
def _renormalize(x):
    sq = 0.0
    for c in range(1, x.shape[0]):
        sq += x[c] * x[c]
    x[0] = math.sqrt(1.0 + sq)


@njit(nogil=True, cache=True)
def _exp_step(x, v, max_norm):
    """x <- exp_x(v) with v already tangent at x; step length capped at max_norm."""
    nrm2 = lorentz_dot(v, v)
    if nrm2 <= 0.0:
        return
    nrm = math.sqrt(nrm2)
    if nrm > max_norm:
        for c in range(v.shape[0]):
            v[c] *= max_norm / nrm
        nrm = max_norm
    ch = math.cosh(nrm)
    sh = math.sinh(nrm) / nrm
    for c in range(x.shape[0]):
        x[c] = ch * x[c] + sh * v[c]
    _renormalize(x)


@njit(nogil=True, cache=True)
def _distance_grad_coef(x, y):
    """(distance, d distance / d <x,y>_L)."""
    z = -lorentz_dot(x, y)
    if z < 1.0 + 1e-12:
        z = 1.0 + 1e-12
    return math.log(z + math.sqrt(z * z - 1.0)), -1.0 / math.sqrt(z * z - 1.0)


@njit(nogil=True, cache=True)
def _riemann_ascent(x, egrad, lr, buf, max_norm):
    """Ascent step along the Riemannian gradient built from Euclidean ``egrad``."""
    buf[0] = -egrad[0]
    for c in range(1, x.shape[0]):
        buf[c] = egrad[c]
    ip = lorentz_dot(x, buf)
    for c in range(x.shape[0]):
        buf[c] = lr * (buf[c] + ip * x[c])
    _exp_step(x, buf, max_norm)


@njit(nogil=True, cache=True)
def _lorentz_update(emb, i, j, k, lr, n_prob, n_alias, indptr, indices, state, acc, gj, buf, max_norm,
                    push_negatives):
    d = emb.shape[1]
    for c in range(d):
        acc[c] = 0.0
    for r in range(k + 1):
        if r == 0:
            other = j
            label = 1.0
        else:
            other = draw_negative(i, n_prob, n_alias, indptr, indices, state)
            if other < 0:
                continue
            label = 0.0
        dist, coef = _distance_grad_coef(emb[i], emb[other])
        # score = -dist; d loss / d score = label - sigmoid(score)
        g = (label - sigmoid(-dist)) * (-coef)
        # Euclidean gradient of <x,y>_L w.r.t. x is (-y0, y1, ...)
        acc[0] += g * -emb[other, 0]
        gj[0] = g * -emb[i, 0]
        for c in range(1, d):
            acc[c] += g * emb[other, c]
            gj[c] = g * emb[i, c]
        if r == 0 or push_negatives:
            _riemann_ascent(emb[other], gj, lr, buf, max_norm)
    _riemann_ascent(emb[i], acc, lr, buf, max_norm)


@njit(nogil=True, cache=True)
def lorentz_steps(emb,
                  e_src, e_dst, e_prob, e_alias,
                  p_src, p_dst, p_prob, p_alias, pseudo_ratio,
                  n_prob, n_alias, indptr, indices,
                  k, lr0, start, stop, total, state, pstate, max_norm, pseudo_push_negatives):
    d = emb.shape[1]
    acc = np.zeros(d)
    gj = np.zeros(d)
    buf = np.zeros(d)
    has_pseudo = p_src.shape[0] > 0
    for t in range(start, stop):
        frac = 1.0 - t / total
        lr = lr0 * (frac if frac > 1e-4 else 1e-4)
        e = alias_draw(e_prob, e_alias, state)
        _lorentz_update(emb, e_src[e], e_dst[e], k, lr, n_prob, n_alias, indptr, indices,
                        state, acc, gj, buf, max_norm, True)
        if has_pseudo:
            quota = int(math.floor((t + 1) * pseudo_ratio)) - int(math.floor(t * pseudo_ratio))
            for _ in range(quota):
                e = alias_draw(p_prob, p_alias, pstate)
                _lorentz_update(emb, p_src[e], p_dst[e], k, lr, n_prob, n_alias, indptr, indices,
                                pstate, acc, gj, buf, max_norm, pseudo_push_negatives)
