"""Shortest-distance algorithms over lattices.

Log-semiring forward/backward, tropical Viterbi, best-alignment-per-word-
sequence determinization, ancestral path sampling, frame/pdf occupancies,
and a brute-force path enumeration oracle.  All operations are pure
functions of (lattice, scores) and accumulate in the canonical arc order,
so results are bit-reproducible for a fixed kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .lattice import (
    Arc,
    CompiledLattice,
    Lattice,
    LatticeError,
    Path,
    ScoreTable,
    path_score,
)

NEG_INF = -np.inf


@dataclass(eq=False)
class BackwardTable:
    """Per-state log-sum of suffix path weights, aligned to the compiled
    state order of the lattice it was filled from."""

    values: np.ndarray
    _compiled: CompiledLattice

    @property
    def start_value(self) -> float:
        return float(self.values[self._compiled.start_idx])

    def value(self, state_id: int) -> float:
        return self.by_state_id()[state_id]

    def by_state_id(self) -> dict[int, float]:
        return {int(s): float(v) for s, v in zip(self._compiled.state_ids, self.values)}


@dataclass(eq=False)
class OccupancyTable:
    """Posterior mass per (frame, pdf); each row sums to one."""

    gamma: np.ndarray  # (num_frames, num_pdfs)


def _check_nonempty(lat: Lattice) -> CompiledLattice:
    comp = lat.compiled
    if comp.n_states == 0 or len(comp.arc_src) == 0 or len(comp.final_idxs) == 0:
        raise LatticeError("lattice has no start-to-final path")
    return comp


def _logsumexp_ordered(values) -> float:
    """Sequential two-operand log-add in the given order (deterministic)."""
    total = NEG_INF
    for v in values:
        total = np.logaddexp(total, v)
    return float(total)


def forward_logsum(lattice: Lattice, scores: ScoreTable) -> float:
    """Log-sum-exp of path_score over all start-to-final paths."""
    comp = _check_nonempty(lattice)
    w = comp.arc_weights(scores)
    alpha = kernels.forward_fill(comp.n_states, comp.start_idx, comp.arc_src, comp.arc_dst, w, comp.frame_offsets)
    total = _logsumexp_ordered(alpha[i] for i in comp.final_idxs)
    if total == NEG_INF:
        raise LatticeError("lattice has no start-to-final path")
    return total


def backward_fill(lattice: Lattice, scores: ScoreTable) -> BackwardTable:
    """Per-state suffix log-sums; beta at the start equals forward_logsum."""
    comp = _check_nonempty(lattice)
    w = comp.arc_weights(scores)
    beta = kernels.backward_fill(comp.n_states, comp.final_idxs, comp.arc_src, comp.arc_dst, w, comp.frame_offsets)
    return BackwardTable(values=beta, _compiled=comp)


def viterbi_best_path(lattice: Lattice, scores: ScoreTable) -> tuple[Path, float]:
    """Maximum-score path and its score.

    Ties are broken deterministically: among equal-scoring incoming arcs the
    smallest (source state id, arc index) wins, and among equal-scoring final
    states the smallest state id wins.
    """
    comp = _check_nonempty(lattice)
    w = comp.arc_weights(scores)
    nu, bp = kernels.viterbi_fill(comp.n_states, comp.start_idx, comp.arc_src, comp.arc_dst, w, comp.frame_offsets)
    best_final = -1
    best = NEG_INF
    for i in comp.final_idxs:
        if nu[i] > best:
            best = nu[i]
            best_final = int(i)
    if best_final < 0:
        raise LatticeError("lattice has no start-to-final path")
    positions = []
    s = best_final
    while bp[s] >= 0:
        positions.append(int(bp[s]))
        s = int(comp.arc_src[bp[s]])
    positions.reverse()
    arcs = [lattice.arcs[comp.arc_orig[p]] for p in positions]
    return Path.from_arcs(arcs), float(best)


def occupancies(lattice: Lattice, scores: ScoreTable) -> OccupancyTable:
    """Forward-backward posteriors: gamma[t, p] is the probability that a
    path drawn from the lattice posterior consumes frame t with pdf p."""
    comp = _check_nonempty(lattice)
    w = comp.arc_weights(scores)
    alpha = kernels.forward_fill(comp.n_states, comp.start_idx, comp.arc_src, comp.arc_dst, w, comp.frame_offsets)
    beta = kernels.backward_fill(comp.n_states, comp.final_idxs, comp.arc_src, comp.arc_dst, w, comp.frame_offsets)
    total = _logsumexp_ordered(alpha[i] for i in comp.final_idxs)
    if total == NEG_INF:
        raise LatticeError("lattice has no start-to-final path")
    gamma = kernels.occupancy_fill(
        comp.num_frames, scores.shape[1], comp.arc_frame, comp.arc_pdf,
        comp.arc_src, comp.arc_dst, w, alpha, beta, total,
    )
    return OccupancyTable(gamma=gamma)


def count_paths(lattice: Lattice) -> int:
    return lattice.num_paths


def _walk_all_positions(comp: CompiledLattice) -> list[tuple[int, ...]]:
    """Every start-to-final path as canonical arc positions, depth first, so
    the output is lexicographic in position space."""
    out: list[tuple[int, ...]] = []
    final_set = set(int(i) for i in comp.final_idxs)
    stack: list[int] = []

    def walk(state: int) -> None:
        if comp.state_frame[state] == comp.num_frames:
            if state in final_set:
                out.append(tuple(stack))
            return
        for pos in range(comp.out_offsets[state], comp.out_offsets[state + 1]):
            stack.append(pos)
            walk(int(comp.arc_dst[pos]))
            stack.pop()

    walk(comp.start_idx)
    return out


def _checked_positions(lattice: Lattice, max_paths: int) -> list[tuple[int, ...]]:
    comp = _check_nonempty(lattice)
    n = count_paths(lattice)
    if n > max_paths:
        raise LatticeError(f"lattice has {n} paths, enumeration capped at {max_paths}")
    return _walk_all_positions(comp)


def enumerate_paths(lattice: Lattice, scores: ScoreTable, max_paths: int) -> list[tuple[Path, float]]:
    """All start-to-final paths with exact scores, in lexicographic order of
    their canonical arc positions.  Refuses lattices above max_paths."""
    out = []
    for positions in _checked_positions(lattice, max_paths):
        p = path_from_positions(lattice, positions)
        out.append((p, path_score(p, scores)))
    return out


def enumerate_position_paths(lattice: Lattice, scores: ScoreTable, max_paths: int) -> list[tuple[tuple[int, ...], float]]:
    """Like enumerate_paths, but keyed by canonical arc positions, which
    distinguishes parallel arcs with identical fields."""
    return [(positions, path_score(path_from_positions(lattice, positions), scores))
            for positions in _checked_positions(lattice, max_paths)]


def determinize_best_alignment(lattice: Lattice, scores: ScoreTable) -> Lattice:
    """Keep exactly one alignment per distinct word sequence: the one with
    the maximum score under `scores`, ties by the viterbi_best_path rule.

    Viterbi over (state, emitted word prefix) pairs; prefixes collapse
    wherever paths share both a state and the words emitted so far, so the
    traversal only enumerates distinct prefixes, not paths.  The retained
    paths are rebuilt into a prefix-sharing tree whose path set is exactly
    one path per word sequence, with per-arc weights copied unchanged.
    """
    comp = _check_nonempty(lattice)
    w = comp.arc_weights(scores)

    # DP cell: (score, parent cell key, canonical arc position)
    by_state: list[dict[tuple[int, ...], tuple[float, tuple[int, tuple[int, ...]] | None, int]]] = [
        {} for _ in range(comp.n_states)
    ]
    by_state[comp.start_idx][()] = (0.0, None, -1)
    for pos in range(len(comp.arc_src)):
        src = int(comp.arc_src[pos])
        dst = int(comp.arc_dst[pos])
        word = int(comp.arc_word[pos])
        for prefix, (score, _, _) in by_state[src].items():
            new_prefix = prefix + (word,) if word != 0 else prefix
            cand = score + w[pos]
            cell = by_state[dst].get(new_prefix)
            if cell is None or cand > cell[0]:
                by_state[dst][new_prefix] = (cand, (src, prefix), pos)

    best: dict[tuple[int, ...], tuple[float, int, tuple[int, ...]]] = {}
    for i in comp.final_idxs:
        for prefix, (score, _, _) in by_state[int(i)].items():
            cur = best.get(prefix)
            if cur is None or score > cur[0]:
                best[prefix] = (score, int(i), prefix)

    selected: list[tuple[tuple[int, ...], list[int]]] = []
    for words in sorted(best):
        _, state, prefix = best[words]
        positions: list[int] = []
        key: tuple[int, tuple[int, ...]] | None = (state, prefix)
        while key is not None:
            score, parent, pos = by_state[key[0]][key[1]]
            if pos >= 0:
                positions.append(pos)
            key = parent
        positions.reverse()
        selected.append((words, positions))

    return _build_path_tree(lattice, comp, [p for _, p in selected])


def restrict_to_word_sequences(lattice: Lattice, kept: set[tuple[int, ...]]) -> Lattice:
    """Sub-lattice containing exactly the paths whose word sequence is in
    `kept`.  States split by emitted word prefix where necessary, so no new
    paths appear and none of the kept ones are lost."""
    comp = _check_nonempty(lattice)
    kept = {tuple(w) for w in kept}

    by_state: list[dict[tuple[int, ...], int]] = [{} for _ in range(comp.n_states)]
    by_state[comp.start_idx][()] = 0
    cell_frame: list[int] = [0]
    cell_arcs: list[tuple[int, int, int]] = []  # (src cell, dst cell, arc pos)
    for pos in range(len(comp.arc_src)):
        src = int(comp.arc_src[pos])
        dst = int(comp.arc_dst[pos])
        word = int(comp.arc_word[pos])
        for prefix, cid in by_state[src].items():
            new_prefix = prefix + (word,) if word != 0 else prefix
            did = by_state[dst].get(new_prefix)
            if did is None:
                did = len(cell_frame)
                by_state[dst][new_prefix] = did
                cell_frame.append(int(comp.state_frame[dst]))
            cell_arcs.append((cid, did, pos))

    final_cells = {cid for i in comp.final_idxs
                   for prefix, cid in by_state[int(i)].items() if prefix in kept}
    finals = sorted(final_cells)
    # co-reachability sweep: cell_arcs are frame-ordered, one reverse pass
    keep_cell = set(final_cells)
    for src, dst, _ in reversed(cell_arcs):
        if dst in keep_cell:
            keep_cell.add(src)
    if 0 not in keep_cell:
        raise LatticeError("no path realizes any of the kept word sequences")

    states = tuple((cid, cell_frame[cid]) for cid in sorted(keep_cell))
    arcs = []
    for src, dst, pos in cell_arcs:
        if src in keep_cell and dst in keep_cell:
            a = lattice.arcs[comp.arc_orig[pos]]
            arcs.append(Arc(src=src, dst=dst, pdf_id=a.pdf_id, word_id=a.word_id,
                            graph_weight=a.graph_weight))
    return Lattice(num_frames=comp.num_frames, states=states, start=0,
                   finals=frozenset(finals), arcs=tuple(arcs))


def _build_path_tree(lattice: Lattice, comp: CompiledLattice, paths: list[list[int]]) -> Lattice:
    """Assemble selected paths (canonical arc positions) into a lattice whose
    path set is exactly those paths, merging common prefixes."""
    states: list[tuple[int, int]] = [(0, 0)]
    arcs: list[Arc] = []
    finals: list[int] = []
    children: list[dict[int, int]] = [{}]
    for positions in paths:
        node = 0
        for depth, pos in enumerate(positions):
            nxt = children[node].get(pos)
            if nxt is None:
                nxt = len(states)
                states.append((nxt, depth + 1))
                children.append({})
                children[node][pos] = nxt
                a = lattice.arcs[comp.arc_orig[pos]]
                arcs.append(Arc(src=node, dst=nxt, pdf_id=a.pdf_id, word_id=a.word_id,
                                graph_weight=a.graph_weight))
            node = nxt
        finals.append(node)
    return Lattice(num_frames=comp.num_frames, states=tuple(states), start=0,
                   finals=frozenset(finals), arcs=tuple(arcs))


def _local_cumulative(comp: CompiledLattice, w: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-arc local transition probability and its within-block cumsum."""
    local = np.exp(w + beta[comp.arc_dst] - beta[comp.arc_src])
    seg = np.cumsum(local)
    block_start = comp.out_offsets[comp.arc_src]
    base = np.where(block_start > 0, seg[block_start - 1], 0.0)
    return local, seg - base


def local_step_distributions(lattice: Lattice, scores: ScoreTable, beta: BackwardTable) -> np.ndarray:
    """Sum of the local outgoing distribution per non-final state (should be
    1 up to rounding); exposed for invariant checks."""
    comp = lattice.compiled
    w = comp.arc_weights(scores)
    local, _ = _local_cumulative(comp, w, beta.values)
    sums = np.zeros(comp.n_states)
    np.add.at(sums, comp.arc_src, local)
    return sums[comp.state_frame < comp.num_frames]


def _check_beta(lattice: Lattice, scores: ScoreTable, beta: BackwardTable) -> CompiledLattice:
    comp = _check_nonempty(lattice)
    if beta._compiled is not comp and len(beta.values) != comp.n_states:
        raise LatticeError("backward table does not belong to this lattice")
    fwd = forward_logsum(lattice, scores)
    b0 = float(beta.values[comp.start_idx])
    if not np.isclose(b0, fwd, rtol=1e-9, atol=1e-9):
        raise LatticeError(
            f"stale backward table: beta(start)={b0!r} but forward total={fwd!r}"
        )
    return comp


def ancestral_sample(lattice: Lattice, scores: ScoreTable, beta: BackwardTable, seed: int) -> Path:
    """Draw one path with probability exp(path_score - forward_logsum) by
    walking from the start and locally normalizing with backward scores."""
    rows = sample_arc_paths(lattice, scores, beta, seed, 1)
    comp = lattice.compiled
    arcs = [lattice.arcs[comp.arc_orig[p]] for p in rows[0]]
    return Path.from_arcs(arcs)


def sample_arc_paths(lattice: Lattice, scores: ScoreTable, beta: BackwardTable, seed: int, n: int) -> np.ndarray:
    """Draw n paths at once; returns (n, num_frames) canonical arc positions.

    The uniform draws come from a seeded PCG64 stream, one row per sample,
    so results are identical across kernel backends.
    """
    comp = _check_beta(lattice, scores, beta)
    w = comp.arc_weights(scores)
    _, cum = _local_cumulative(comp, w, beta.values)
    u = np.random.default_rng(seed).random((n, comp.num_frames))
    return kernels.sample_steps(u, comp.start_idx, comp.arc_dst, comp.out_offsets, cum)


def path_from_positions(lattice: Lattice, positions) -> Path:
    comp = lattice.compiled
    return Path.from_arcs(lattice.arcs[comp.arc_orig[p]] for p in positions)
