"""Numba-compiled DP kernels, mirroring kernels.reference arc for arc.

Scalar loops over the canonical arc order.  _logaddexp follows numpy's
formula exactly (equal-operand shortcut, then max + log1p(exp(diff))) so
both backends accumulate identical values on finite inputs.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf

BACKEND = "numba"

_LOGE2 = math.log(2.0)


@njit(cache=True, inline="always")
def _logaddexp(x, y):
    if x == y:
        return x + _LOGE2
    tmp = x - y
    if tmp > 0.0:
        return x + math.log1p(math.exp(-tmp))
    elif tmp <= 0.0:
        return y + math.log1p(math.exp(tmp))
    return tmp  # nan propagation


@njit(cache=True)
def forward_fill(n_states, start_idx, arc_src, arc_dst, w, frame_offsets):
    alpha = np.full(n_states, NEG_INF)
    alpha[start_idx] = 0.0
    for i in range(len(arc_src)):
        alpha[arc_dst[i]] = _logaddexp(alpha[arc_dst[i]], alpha[arc_src[i]] + w[i])
    return alpha


@njit(cache=True)
def backward_fill(n_states, final_idxs, arc_src, arc_dst, w, frame_offsets):
    beta = np.full(n_states, NEG_INF)
    for k in range(len(final_idxs)):
        beta[final_idxs[k]] = 0.0
    for f in range(len(frame_offsets) - 2, -1, -1):
        for i in range(frame_offsets[f], frame_offsets[f + 1]):
            beta[arc_src[i]] = _logaddexp(beta[arc_src[i]], w[i] + beta[arc_dst[i]])
    return beta


@njit(cache=True)
def viterbi_fill(n_states, start_idx, arc_src, arc_dst, w, frame_offsets):
    nu = np.full(n_states, NEG_INF)
    nu[start_idx] = 0.0
    bp = np.full(n_states, -1, dtype=np.int64)
    for i in range(len(arc_src)):
        cand = nu[arc_src[i]] + w[i]
        if cand > nu[arc_dst[i]]:
            nu[arc_dst[i]] = cand
            bp[arc_dst[i]] = i
    return nu, bp


@njit(cache=True)
def occupancy_fill(num_frames, num_pdfs, arc_frame, arc_pdf, arc_src, arc_dst, w, alpha, beta, total):
    gamma = np.zeros((num_frames, num_pdfs))
    for i in range(len(arc_src)):
        gamma[arc_frame[i], arc_pdf[i]] += math.exp(alpha[arc_src[i]] + w[i] + beta[arc_dst[i]] - total)
    return gamma


@njit(cache=True)
def sample_steps(u, start_idx, arc_dst, out_offsets, cum):
    n, num_frames = u.shape
    out = np.empty((n, num_frames), dtype=np.int64)
    for j in range(n):
        s = start_idx
        for t in range(num_frames):
            b0 = out_offsets[s]
            last = out_offsets[s + 1] - 1
            pos = b0
            uj = u[j, t]
            while pos < last and cum[pos] <= uj:
                pos += 1
            out[j, t] = pos
            s = arc_dst[pos]
    return out
