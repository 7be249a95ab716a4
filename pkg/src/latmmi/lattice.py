"""Frame-synchronous weighted lattices: arcs, paths, scores, validation.

A lattice is an acyclic automaton whose arcs each consume exactly one frame.
Arcs carry an acoustic-unit id (pdf), a word label (0 = no word) and a graph
log-weight (transition/LM contribution).  Acoustic log-scores are kept out of
the lattice and injected at evaluation time through a score table, so the
same lattice can be re-scored under changing model parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

# Acoustic score table: float64 array of shape (num_frames, num_pdfs),
# entry [t, p] = log-score of pdf p at frame t.  All entries finite.
ScoreTable = np.ndarray


class LatticeError(ValueError):
    """Raised for structurally invalid lattices, paths or score tables."""


@dataclass(frozen=True)
class Arc:
    """One frame-consuming transition: frame(dst) = frame(src) + 1."""

    src: int
    dst: int
    pdf_id: int
    word_id: int
    graph_weight: float


@dataclass(frozen=True)
class Violation:
    """One violated structural invariant, with the offending object."""

    code: str
    detail: str
    state: int | None = None
    arc_index: int | None = None

    def __str__(self) -> str:
        loc = ""
        if self.state is not None:
            loc = f" [state {self.state}]"
        if self.arc_index is not None:
            loc = f" [arc {self.arc_index}]"
        return f"{self.code}: {self.detail}{loc}"


@dataclass(eq=False)
class Lattice:
    """Frame-synchronous acyclic weighted automaton.

    Immutable after construction (by convention; instances are shared freely
    across threads).  States live on frames 0..num_frames; every arc advances
    the frame by one, so the graph is acyclic by construction.
    """

    num_frames: int
    states: tuple[tuple[int, int], ...]  # (state-id, frame)
    start: int
    finals: frozenset[int]
    arcs: tuple[Arc, ...]

    def __post_init__(self):
        self.states = tuple((int(s), int(f)) for s, f in self.states)
        self.finals = frozenset(int(s) for s in self.finals)
        self.arcs = tuple(self.arcs)

    @cached_property
    def frame_of(self) -> dict[int, int]:
        return {s: f for s, f in self.states}

    @cached_property
    def num_paths(self) -> int:
        """Exact start-to-final path count (python ints, no overflow)."""
        counts = {self.start: 1}
        for arc in self.compiled.arcs_in_order(self):
            counts[arc.dst] = counts.get(arc.dst, 0) + counts.get(arc.src, 0)
        return sum(counts.get(s, 0) for s in self.finals)

    @cached_property
    def compiled(self) -> "CompiledLattice":
        return CompiledLattice.from_lattice(self)


@dataclass(frozen=True)
class Path:
    """One alignment: a contiguous start-to-final arc sequence.

    word_sequence is the subsequence of nonzero word ids along the arcs;
    pdf_sequence has one pdf per frame.  total_graph_weight is accumulated
    in frame order (fixed summation order, bit-reproducible).
    """

    arcs: tuple[Arc, ...]
    total_graph_weight: float
    word_sequence: tuple[int, ...]
    pdf_sequence: tuple[int, ...]

    @classmethod
    def from_arcs(cls, arcs: Iterable[Arc]) -> "Path":
        arcs = tuple(arcs)
        if not arcs:
            raise LatticeError("a path needs at least one arc")
        for a, b in zip(arcs, arcs[1:]):
            if a.dst != b.src:
                raise LatticeError(f"non-contiguous path: arc into {a.dst} followed by arc from {b.src}")
        total = 0.0
        for a in arcs:
            total += a.graph_weight
        words = tuple(a.word_id for a in arcs if a.word_id != 0)
        pdfs = tuple(a.pdf_id for a in arcs)
        return cls(arcs=arcs, total_graph_weight=total, word_sequence=words, pdf_sequence=pdfs)

    @property
    def num_frames(self) -> int:
        return len(self.arcs)

    def frame_signature(self) -> tuple[tuple[int, int, float], ...]:
        """Per-frame (pdf, word, graph_weight) triple; identifies congruent
        paths across lattices that use different state numberings."""
        return tuple((a.pdf_id, a.word_id, a.graph_weight) for a in self.arcs)


@dataclass(eq=False)
class CompiledLattice:
    """Dense-array view of a lattice, shared by all DP kernels.

    States are ordered by (frame, state-id); arcs by (frame(src), src-id,
    position in Lattice.arcs).  That canonical arc order fixes every kernel's
    accumulation order, which makes results bit-reproducible.
    """

    n_states: int
    num_frames: int
    state_ids: np.ndarray      # int64 (n_states,) original ids
    state_frame: np.ndarray    # int64 (n_states,)
    start_idx: int
    final_idxs: np.ndarray     # int64, sorted ascending
    arc_src: np.ndarray        # int64 (m,) dense state indices
    arc_dst: np.ndarray
    arc_pdf: np.ndarray
    arc_word: np.ndarray
    arc_gw: np.ndarray         # float64
    arc_frame: np.ndarray      # int64, frame of src
    arc_orig: np.ndarray       # int64, index into Lattice.arcs
    frame_offsets: np.ndarray  # int64 (num_frames+1,) arc block per frame
    out_offsets: np.ndarray    # int64 (n_states+1,) CSR over arc_src

    @classmethod
    def from_lattice(cls, lat: Lattice) -> "CompiledLattice":
        order_states = sorted(lat.states, key=lambda sf: (sf[1], sf[0]))
        idx_of = {s: i for i, (s, _) in enumerate(order_states)}
        n = len(order_states)
        state_ids = np.array([s for s, _ in order_states], dtype=np.int64)
        state_frame = np.array([f for _, f in order_states], dtype=np.int64)

        arc_order = sorted(range(len(lat.arcs)), key=lambda i: (idx_of[lat.arcs[i].src], i))
        m = len(arc_order)
        arc_src = np.empty(m, dtype=np.int64)
        arc_dst = np.empty(m, dtype=np.int64)
        arc_pdf = np.empty(m, dtype=np.int64)
        arc_word = np.empty(m, dtype=np.int64)
        arc_gw = np.empty(m, dtype=np.float64)
        arc_orig = np.array(arc_order, dtype=np.int64)
        for k, i in enumerate(arc_order):
            a = lat.arcs[i]
            arc_src[k] = idx_of[a.src]
            arc_dst[k] = idx_of[a.dst]
            arc_pdf[k] = a.pdf_id
            arc_word[k] = a.word_id
            arc_gw[k] = a.graph_weight
        arc_frame = state_frame[arc_src] if m else np.empty(0, dtype=np.int64)

        frame_offsets = np.searchsorted(arc_frame, np.arange(lat.num_frames + 1)).astype(np.int64)
        out_counts = np.bincount(arc_src, minlength=n) if m else np.zeros(n, dtype=np.int64)
        out_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(out_counts, out=out_offsets[1:])

        final_idxs = np.array(sorted(idx_of[s] for s in lat.finals), dtype=np.int64)
        return cls(
            n_states=n,
            num_frames=lat.num_frames,
            state_ids=state_ids,
            state_frame=state_frame,
            start_idx=idx_of[lat.start],
            final_idxs=final_idxs,
            arc_src=arc_src,
            arc_dst=arc_dst,
            arc_pdf=arc_pdf,
            arc_word=arc_word,
            arc_gw=arc_gw,
            arc_frame=arc_frame,
            arc_orig=arc_orig,
            frame_offsets=frame_offsets,
            out_offsets=out_offsets,
        )

    def arcs_in_order(self, lat: Lattice) -> list[Arc]:
        """Lattice arcs in canonical (frame, src-id, arc-index) order."""
        return [lat.arcs[i] for i in self.arc_orig]

    def arc_weights(self, scores: ScoreTable) -> np.ndarray:
        """Combined per-arc weight: graph weight + acoustic score of the
        consumed frame.  The score table must cover all frames and pdfs."""
        check_scores(scores, self.num_frames)
        if len(self.arc_pdf) and int(self.arc_pdf.max()) >= scores.shape[1]:
            raise LatticeError(
                f"pdf id {int(self.arc_pdf.max())} out of range for score table with {scores.shape[1]} pdfs"
            )
        if len(self.arc_pdf) == 0:
            return np.empty(0, dtype=np.float64)
        return self.arc_gw + scores[self.arc_frame, self.arc_pdf]


def check_scores(scores: ScoreTable, num_frames: int) -> None:
    scores = np.asarray(scores)
    if scores.ndim != 2:
        raise LatticeError(f"score table must be 2-D, got shape {scores.shape}")
    if scores.shape[0] != num_frames:
        raise LatticeError(f"score table has {scores.shape[0]} frames, lattice has {num_frames}")
    if not np.all(np.isfinite(scores)):
        raise LatticeError("score table contains non-finite entries")


def validate(lattice: Lattice) -> list[Violation]:
    """Check every structural invariant; an empty list means valid.

    Diagnostic only: reports all violations instead of stopping at the first.
    """
    out: list[Violation] = []
    if lattice.num_frames < 1:
        out.append(Violation("frames", f"num_frames must be >= 1, got {lattice.num_frames}"))

    seen: dict[int, int] = {}
    for s, f in lattice.states:
        if s in seen:
            out.append(Violation("duplicate-state", f"state id {s} declared twice", state=s))
        seen[s] = f
        if not (0 <= f <= lattice.num_frames):
            out.append(Violation("frame-range", f"state {s} at frame {f} outside [0, {lattice.num_frames}]", state=s))

    if lattice.start not in seen:
        out.append(Violation("start", f"start state {lattice.start} not declared", state=lattice.start))
    elif seen[lattice.start] != 0:
        out.append(Violation("start", f"start state must lie on frame 0, not {seen[lattice.start]}", state=lattice.start))

    if not lattice.finals:
        out.append(Violation("finals", "lattice has no final state"))
    for s in lattice.finals:
        if s not in seen:
            out.append(Violation("finals", f"final state {s} not declared", state=s))
        elif seen[s] != lattice.num_frames:
            out.append(Violation("finals", f"final state {s} on frame {seen[s]}, expected {lattice.num_frames}", state=s))

    for i, a in enumerate(lattice.arcs):
        if a.src not in seen or a.dst not in seen:
            out.append(Violation("arc-endpoint", f"arc references undeclared state {a.src if a.src not in seen else a.dst}", arc_index=i))
            continue
        if seen[a.dst] != seen[a.src] + 1:
            out.append(Violation("frame-step", f"arc {a.src}->{a.dst} spans frames {seen[a.src]}->{seen[a.dst]}", arc_index=i))
        if a.pdf_id < 1:
            out.append(Violation("pdf-id", f"pdf id must be a positive integer, got {a.pdf_id}", arc_index=i))
        if a.word_id < 0:
            out.append(Violation("word-id", f"word id must be >= 0, got {a.word_id}", arc_index=i))
        if not np.isfinite(a.graph_weight):
            out.append(Violation("weight", f"graph weight {a.graph_weight} is not finite", arc_index=i))

    if any(v.code in ("arc-endpoint", "duplicate-state", "start", "finals", "frames") for v in out):
        return out  # connectivity analysis needs a coherent skeleton

    # reach sets by frame sweep: arcs sorted by source frame are topological
    by_frame = sorted(lattice.arcs, key=lambda a: seen[a.src])
    fwd = {lattice.start}
    for a in by_frame:
        if a.src in fwd:
            fwd.add(a.dst)
    bwd = set(lattice.finals)
    for a in reversed(by_frame):
        if a.dst in bwd:
            bwd.add(a.src)
    for s, _ in lattice.states:
        if s not in fwd or s not in bwd:
            out.append(Violation("connectivity", f"state {s} lies on no start-to-final path", state=s))
    return out


def require_valid(lattice: Lattice) -> Lattice:
    violations = validate(lattice)
    if violations:
        raise LatticeError("invalid lattice: " + "; ".join(str(v) for v in violations))
    return lattice


def path_score(path: Path, scores: ScoreTable) -> float:
    """Total log-score: sum over frames of acoustic score + graph weight.

    Summation runs in frame order (left fold), so scores are bit-reproducible
    and agree exactly with the DP kernels' per-arc accumulation.
    """
    check_scores(scores, len(path.arcs))
    total = 0.0
    for t, a in enumerate(path.arcs):
        if not (1 <= a.pdf_id < scores.shape[1]):
            raise LatticeError(f"pdf id {a.pdf_id} at frame {t} outside score table with {scores.shape[1]} pdfs")
        total += scores[t, a.pdf_id] + a.graph_weight
    return float(total)


def path_in_lattice(path: Path, lattice: Lattice) -> bool:
    """True when the path's arcs trace a start-to-final walk of the lattice."""
    if len(path.arcs) != lattice.num_frames:
        return False
    if path.arcs[0].src != lattice.start or path.arcs[-1].dst not in lattice.finals:
        return False
    arc_set = set(lattice.arcs)
    return all(a in arc_set for a in path.arcs)


def make_lattice(
    num_frames: int,
    states: Sequence[tuple[int, int]],
    start: int,
    finals: Iterable[int],
    arcs: Sequence[Arc],
) -> Lattice:
    """Construct and validate in one step."""
    return require_valid(Lattice(num_frames=num_frames, states=tuple(states), start=start,
                                 finals=frozenset(finals), arcs=tuple(arcs)))
