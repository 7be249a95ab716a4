"""Seeded random instances for tests and the verify suites.

Layered frame-synchronous DAGs: every state has at least one incoming and
one outgoing arc, out-degree is capped, and all end-frame states are final,
so generated lattices always satisfy the structural invariants.
"""

from __future__ import annotations

import numpy as np

from .lattice import Arc, Lattice, ScoreTable


def random_lattice(
    rng: np.random.Generator,
    max_frames: int = 12,
    max_states_per_frame: int = 3,
    max_out: int = 4,
    num_pdfs: int = 6,
    num_words: int = 3,
    epsilon_prob: float = 0.5,
    max_path_count: int = 10_000,
) -> Lattice:
    """One connected random lattice with path count <= max_path_count."""
    while True:
        num_frames = int(rng.integers(2, max_frames + 1))
        layers: list[list[int]] = [[0]]
        next_id = 1
        for f in range(1, num_frames + 1):
            size = int(rng.integers(1, max_states_per_frame + 1))
            layers.append(list(range(next_id, next_id + size)))
            next_id += size

        arcs: list[Arc] = []
        for f in range(num_frames):
            cur, nxt = layers[f], layers[f + 1]
            # every next-layer state gets an incoming arc, then sparse extras
            pairs = {(int(rng.integers(0, len(cur))), j) for j in range(len(nxt))}
            for i in range(len(cur)):
                out_deg = sum(1 for p in pairs if p[0] == i)
                if out_deg == 0:
                    pairs.add((i, int(rng.integers(0, len(nxt)))))
                    out_deg = 1
                extra = int(rng.integers(0, 2))
                for _ in range(extra):
                    if out_deg >= max_out:
                        break
                    pairs.add((i, int(rng.integers(0, len(nxt)))))
                    out_deg = sum(1 for p in pairs if p[0] == i)
            for i, j in sorted(pairs):
                word = 0 if rng.random() < epsilon_prob else int(rng.integers(1, num_words + 1))
                arcs.append(Arc(
                    src=cur[i],
                    dst=nxt[j],
                    pdf_id=int(rng.integers(1, num_pdfs + 1)),
                    word_id=word,
                    graph_weight=float(rng.normal(0.0, 1.0)),
                ))

        states = tuple((s, f) for f, layer in enumerate(layers) for s in layer)
        lat = Lattice(num_frames=num_frames, states=states, start=0,
                      finals=frozenset(layers[-1]), arcs=tuple(arcs))
        if lat.num_paths <= max_path_count:
            return lat


def random_scores(rng: np.random.Generator, num_frames: int, num_pdfs: int = 6, scale: float = 1.0) -> ScoreTable:
    """Score table over pdf ids 1..num_pdfs (column 0 exists but is unused)."""
    return rng.normal(0.0, scale, size=(num_frames, num_pdfs + 1))


def random_instance(seed: int, **kwargs) -> tuple[Lattice, ScoreTable]:
    rng = np.random.default_rng(seed)
    num_pdfs = kwargs.pop("num_pdfs", 6)
    lat = random_lattice(rng, num_pdfs=num_pdfs, **kwargs)
    return lat, random_scores(rng, lat.num_frames, num_pdfs=num_pdfs)
