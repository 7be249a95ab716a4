"""Side-by-side timing of the numba and numpy kernel backends.

Builds one large random lattice, runs every kernel on both backends,
checks agreement, and prints a timing table.  The library itself picks a
backend at import via LATMMI_BACKEND; this script imports both modules
directly so a single process can compare them.

Usage: python benchmarks/bench_kernels.py [--frames 200] [--width 30] [--samples 200000]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from latmmi.kernels import jit, reference
from latmmi.testing import random_lattice, random_scores


def build_instance(frames: int, width: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    lat = random_lattice(rng, max_frames=frames, max_states_per_frame=width,
                         num_pdfs=48, max_path_count=10**300)
    scores = random_scores(rng, lat.num_frames, num_pdfs=48)
    return lat, scores


def timeit(fn, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--width", type=int, default=30)
    ap.add_argument("--samples", type=int, default=200_000)
    args = ap.parse_args()

    lat, scores = build_instance(args.frames, args.width)
    comp = lat.compiled
    w = comp.arc_weights(scores)
    print(f"lattice: {comp.n_states} states, {len(comp.arc_src)} arcs, {comp.num_frames} frames")

    results = {}
    for name, mod in (("numba", jit), ("numpy", reference)):
        fwd = lambda m=mod: m.forward_fill(comp.n_states, comp.start_idx, comp.arc_src,
                                           comp.arc_dst, w, comp.frame_offsets)
        bwd = lambda m=mod: m.backward_fill(comp.n_states, comp.final_idxs, comp.arc_src,
                                            comp.arc_dst, w, comp.frame_offsets)
        vit = lambda m=mod: m.viterbi_fill(comp.n_states, comp.start_idx, comp.arc_src,
                                           comp.arc_dst, w, comp.frame_offsets)
        alpha = fwd()
        beta = bwd()
        total = alpha[comp.final_idxs[0]]
        for i in comp.final_idxs[1:]:
            total = np.logaddexp(total, alpha[i])
        occ = lambda m=mod: m.occupancy_fill(comp.num_frames, scores.shape[1], comp.arc_frame,
                                             comp.arc_pdf, comp.arc_src, comp.arc_dst, w,
                                             alpha, beta, total)
        local = np.exp(w + beta[comp.arc_dst] - beta[comp.arc_src])
        seg = np.cumsum(local)
        base = np.where(comp.out_offsets[comp.arc_src] > 0,
                        seg[comp.out_offsets[comp.arc_src] - 1], 0.0)
        cum = seg - base
        u = np.random.default_rng(1).random((args.samples, comp.num_frames))
        smp = lambda m=mod: m.sample_steps(u, comp.start_idx, comp.arc_dst, comp.out_offsets, cum)

        fwd(), bwd(), vit(), occ(), smp()  # warm up (jit compile)
        results[name] = {
            "forward": timeit(fwd),
            "backward": timeit(bwd),
            "viterbi": timeit(vit),
            "occupancy": timeit(occ),
            f"sample x{args.samples}": timeit(smp, repeats=3),
        }

    agree = {
        "forward": np.array_equal(jit.forward_fill(comp.n_states, comp.start_idx, comp.arc_src,
                                                   comp.arc_dst, w, comp.frame_offsets),
                                  reference.forward_fill(comp.n_states, comp.start_idx, comp.arc_src,
                                                         comp.arc_dst, w, comp.frame_offsets)),
    }
    print(f"\n{'kernel':<22}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for key in results["numba"]:
        a, b = results["numba"][key], results["numpy"][key]
        print(f"{key:<22}{a * 1e3:>10.2f}ms{b * 1e3:>10.2f}ms{b / a:>9.1f}x")
    print(f"\nforward results identical: {agree['forward']}")


if __name__ == "__main__":
    main()
