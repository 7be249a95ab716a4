"""Pure-numpy DP kernels over arc arrays.

Vectorized per frame with unbuffered ufunc.at accumulation, which applies
updates sequentially in array order.  Because arcs arrive in the canonical
(frame, src-id, arc-index) order, every accumulation here happens in exactly
the same order as the numba backend's scalar loops.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf

BACKEND = "numpy"


def forward_fill(n_states, start_idx, arc_src, arc_dst, w, frame_offsets):
    """Log-sum prefix scores per state, frame by frame."""
    alpha = np.full(n_states, NEG_INF)
    alpha[start_idx] = 0.0
    for f in range(len(frame_offsets) - 1):
        b0, b1 = frame_offsets[f], frame_offsets[f + 1]
        if b0 == b1:
            continue
        src = arc_src[b0:b1]
        np.logaddexp.at(alpha, arc_dst[b0:b1], alpha[src] + w[b0:b1])
    return alpha


def backward_fill(n_states, final_idxs, arc_src, arc_dst, w, frame_offsets):
    """Log-sum suffix scores per state, frames in descending order."""
    beta = np.full(n_states, NEG_INF)
    beta[final_idxs] = 0.0
    for f in range(len(frame_offsets) - 2, -1, -1):
        b0, b1 = frame_offsets[f], frame_offsets[f + 1]
        if b0 == b1:
            continue
        np.logaddexp.at(beta, arc_src[b0:b1], w[b0:b1] + beta[arc_dst[b0:b1]])
    return beta


def viterbi_fill(n_states, start_idx, arc_src, arc_dst, w, frame_offsets):
    """Max prefix score and best incoming arc per state.

    Ties keep the smallest canonical arc position, matching the jit
    backend's first-strict-improvement rule.
    """
    nu = np.full(n_states, NEG_INF)
    nu[start_idx] = 0.0
    bp = np.full(n_states, -1, dtype=np.int64)
    m = len(arc_src)
    sentinel = m  # larger than any arc position
    best_pos = np.full(n_states, sentinel, dtype=np.int64)
    for f in range(len(frame_offsets) - 1):
        b0, b1 = frame_offsets[f], frame_offsets[f + 1]
        if b0 == b1:
            continue
        dst = arc_dst[b0:b1]
        cand = nu[arc_src[b0:b1]] + w[b0:b1]
        np.maximum.at(nu, dst, cand)
        hits = cand == nu[dst]
        np.minimum.at(best_pos, dst[hits], np.arange(b0, b1, dtype=np.int64)[hits])
    reached = best_pos < sentinel
    bp[reached] = best_pos[reached]
    return nu, bp


def occupancy_fill(num_frames, num_pdfs, arc_frame, arc_pdf, arc_src, arc_dst, w, alpha, beta, total):
    """Posterior mass per (frame, pdf): sum of arc posteriors."""
    gamma = np.zeros((num_frames, num_pdfs))
    post = np.exp(alpha[arc_src] + w + beta[arc_dst] - total)
    np.add.at(gamma, (arc_frame, arc_pdf), post)
    return gamma


def sample_steps(u, start_idx, arc_dst, out_offsets, cum):
    """Walk one path per row of u, picking arcs by inverse-CDF lookup.

    cum holds, per arc, the cumulative local transition probability within
    its source state's outgoing block; u is uniform in [0, 1).
    """
    n, num_frames = u.shape
    n_states = len(out_offsets) - 1
    counts = np.diff(out_offsets)
    maxdeg = int(counts.max()) if n_states else 0
    pad_cum = np.full((n_states, maxdeg), np.inf)
    for s in range(n_states):
        b0, b1 = out_offsets[s], out_offsets[s + 1]
        pad_cum[s, : b1 - b0] = cum[b0:b1]

    out = np.empty((n, num_frames), dtype=np.int64)
    cur = np.full(n, start_idx, dtype=np.int64)
    for t in range(num_frames):
        k = (pad_cum[cur] <= u[:, t, None]).sum(axis=1)
        np.minimum(k, counts[cur] - 1, out=k)
        pos = out_offsets[cur] + k
        out[:, t] = pos
        cur = arc_dst[pos]
    return out
