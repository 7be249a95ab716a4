"""Numerical instantiation of the discrete path-measure construction.

For an enumerable complete hypothesis graph, m assigns each alignment its
joint posterior mass; mu sums m over alignment sets, and muhat renormalizes
over the per-hypothesis argmax alignments.  The checks here verify, at any
parameter setting: normalization of m, the counting bound mu(B) <= |B| m(B-hat),
monotonicity mu(A-hat) <= mu(A), and that -log muhat(A-hat) reproduces the
on-the-fly lattice MMI loss computed independently by the DP route.

All measure arithmetic stays in the log domain; values are exponentiated
only at comparison boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algorithms import enumerate_paths, forward_logsum
from .lattice import Lattice, LatticeError, Path, ScoreTable, path_in_lattice, path_score

RESIDUAL_TOL = 1e-9

WordSeq = tuple[int, ...]


@dataclass(eq=False)
class PathPartition:
    """Cached enumeration of a full hypothesis graph, grouped by word
    sequence.  The partition depends only on the graph, so one instance
    serves every score table during a training run.

    Per-path log-scores are accumulated frame by frame in the same left-fold
    order as path_score, so selections here agree bit for bit with the
    path-level route.
    """

    paths: list[Path]
    pdf_mat: np.ndarray   # (n_paths, num_frames) int64
    gw_mat: np.ndarray    # (n_paths, num_frames) float64
    words: list[WordSeq]
    groups: dict[WordSeq, np.ndarray]  # word seq -> path indices

    @classmethod
    def from_graph(cls, full_graph: Lattice, max_paths: int = 1_000_000) -> "PathPartition":
        width = int(full_graph.compiled.arc_pdf.max()) + 1 if full_graph.arcs else 2
        zero = np.zeros((full_graph.num_frames, width))
        pairs = enumerate_paths(full_graph, zero, max_paths)
        paths = [p for p, _ in pairs]
        if not paths:
            raise LatticeError("graph has no paths")
        pdf_mat = np.array([p.pdf_sequence for p in paths], dtype=np.int64)
        gw_mat = np.array([[a.graph_weight for a in p.arcs] for p in paths])
        words = [p.word_sequence for p in paths]
        groups: dict[WordSeq, list[int]] = {}
        for i, w in enumerate(words):
            groups.setdefault(w, []).append(i)
        return cls(paths=paths, pdf_mat=pdf_mat, gw_mat=gw_mat, words=words,
                   groups={w: np.array(ix, dtype=np.int64) for w, ix in groups.items()})

    def log_scores(self, scores: ScoreTable) -> np.ndarray:
        acc = np.zeros(len(self.paths))
        for t in range(self.pdf_mat.shape[1]):
            acc += scores[t, self.pdf_mat[:, t]] + self.gw_mat[:, t]
        return acc


@dataclass(eq=False)
class HypothesisGrouping:
    """Partition of a graph's alignments into the reference set and one
    competitor set per word sequence, with the per-set argmax selections."""

    reference_words: WordSeq
    reference_set: list[Path]
    competitor_sets: dict[WordSeq, list[Path]]
    selected_reference: Path            # A-hat: the externally fixed alignment
    selected_competitors: dict[WordSeq, Path]  # B-hat per competitor
    selected_reference_best: Path       # argmax of m within the reference set
    # log-domain internals (shared indices into the partition)
    _partition: PathPartition = field(repr=False)
    _log_scores: np.ndarray = field(repr=False)
    _log_norm: float = field(repr=False)
    _ref_path_index: int = field(repr=False)
    _best_index: dict[WordSeq, int] = field(repr=False)
    _scores: ScoreTable = field(repr=False)

    def log_m(self, index: int) -> float:
        return float(self._log_scores[index] - self._log_norm)

    def group_log_mu(self, words: WordSeq) -> float:
        ix = self._partition.groups[words]
        return float(_logsumexp(self._log_scores[ix]) - self._log_norm)

    def best_log_m(self, words: WordSeq) -> float:
        return self.log_m(self._best_index[words])

    def check_scores(self, scores: ScoreTable) -> None:
        if scores is not self._scores and not np.array_equal(scores, self._scores):
            raise LatticeError("grouping was built under different scores")


def _logsumexp(values: np.ndarray) -> float:
    """Sequential left-fold log-add (deterministic accumulation order)."""
    return float(np.logaddexp.reduce(np.asarray(values, dtype=np.float64)))


def measure_m(path: Path, full_graph: Lattice, scores: ScoreTable) -> float:
    """Posterior mass of one alignment within the complete graph."""
    if not path_in_lattice(path, full_graph):
        raise LatticeError("path is not a start-to-final path of the graph")
    return float(np.exp(path_score(path, scores) - forward_logsum(full_graph, scores)))


def check_normalization(full_graph: Lattice, scores: ScoreTable,
                        partition: PathPartition | None = None) -> float:
    """|sum of m over all alignments - 1|, with the sum taken over the
    enumerated path set and the normalizer from the DP forward pass."""
    if partition is None:
        partition = PathPartition.from_graph(full_graph)
    total = forward_logsum(full_graph, scores)
    return abs(float(np.exp(_logsumexp(partition.log_scores(scores)) - total)) - 1.0)


def build_grouping(
    full_graph: Lattice,
    scores: ScoreTable,
    ref_words: WordSeq,
    fixed_ref_path: Path,
    partition: PathPartition | None = None,
) -> HypothesisGrouping:
    """Group the graph's alignments by word sequence and select each
    competitor's argmax-mass alignment; the reference selection is the
    externally supplied fixed path.

    Argmax ties keep the first path in enumeration order.  fixed_ref_path is
    matched into the reference set by its per-frame (pdf, word, weight)
    signature, so paths built against a congruent lattice (e.g. the separate
    numerator lattice) are accepted.
    """
    ref_words = tuple(ref_words)
    if fixed_ref_path.word_sequence != ref_words:
        raise LatticeError(
            f"fixed reference path realizes {fixed_ref_path.word_sequence}, expected {ref_words}"
        )
    if partition is None:
        partition = PathPartition.from_graph(full_graph)
    if ref_words not in partition.groups:
        raise LatticeError(f"reference word sequence {ref_words} does not occur in the graph")

    log_scores = partition.log_scores(scores)
    log_norm = forward_logsum(full_graph, scores)

    sig = fixed_ref_path.frame_signature()
    ref_ix = partition.groups[ref_words]
    ref_path_index = -1
    for i in ref_ix:
        if partition.paths[i].frame_signature() == sig:
            ref_path_index = int(i)
            break
    if ref_path_index < 0:
        raise LatticeError("fixed reference path is not an alignment of the graph's reference set")

    best_index: dict[WordSeq, int] = {}
    for w, ix in partition.groups.items():
        best_index[w] = int(ix[np.argmax(log_scores[ix])])

    competitors = {w: [partition.paths[i] for i in ix]
                   for w, ix in partition.groups.items() if w != ref_words}
    return HypothesisGrouping(
        reference_words=ref_words,
        reference_set=[partition.paths[i] for i in ref_ix],
        competitor_sets=competitors,
        selected_reference=partition.paths[ref_path_index],
        selected_competitors={w: partition.paths[best_index[w]] for w in competitors},
        selected_reference_best=partition.paths[best_index[ref_words]],
        _partition=partition,
        _log_scores=log_scores,
        _log_norm=log_norm,
        _ref_path_index=ref_path_index,
        _best_index=best_index,
        _scores=scores,
    )


def check_inequality_13(grouping: HypothesisGrouping, scores: ScoreTable) -> dict[WordSeq, float]:
    """Per competitor set: |B| * m(B-hat) - mu(B), each must be >= -1e-9."""
    grouping.check_scores(scores)
    out: dict[WordSeq, float] = {}
    for w in grouping.competitor_sets:
        size = len(grouping._partition.groups[w])
        bound = np.exp(np.log(size) + grouping.best_log_m(w))
        out[w] = float(bound - np.exp(grouping.group_log_mu(w)))
    return out


def check_inequality_14(grouping: HypothesisGrouping, scores: ScoreTable) -> float:
    """mu(A) - m(A-hat), must be >= -1e-9 (monotonicity of the measure)."""
    grouping.check_scores(scores)
    mu_a = np.exp(grouping.group_log_mu(grouping.reference_words))
    m_ahat = np.exp(grouping.log_m(grouping._ref_path_index))
    return float(mu_a - m_ahat)


def muhat_of_A(
    grouping: HypothesisGrouping,
    scores: ScoreTable,
    hypotheses: tuple[WordSeq, ...] | None = None,
    include_reference: bool = True,
) -> float:
    """m(A-hat) / sum over selected per-hypothesis argmax masses.

    hypotheses restricts the denominator sum to the word sequences captured
    in a lattice (default: every hypothesis in the graph).  The reference
    hypothesis contributes its own argmax term when include_reference is
    set, mirroring a denominator lattice that contains the reference.
    """
    return float(np.exp(-neg_log_muhat(grouping, scores, hypotheses, include_reference)))


def neg_log_muhat(
    grouping: HypothesisGrouping,
    scores: ScoreTable,
    hypotheses: tuple[WordSeq, ...] | None = None,
    include_reference: bool = True,
) -> float:
    """-log muhat(A-hat), kept in the log domain end to end; this is the
    quantity compared against the on-the-fly lattice MMI loss."""
    grouping.check_scores(scores)
    if hypotheses is None:
        hypotheses = tuple(sorted(grouping._partition.groups))
    terms = []
    for w in sorted(set(tuple(h) for h in hypotheses)):
        if w not in grouping._partition.groups:
            raise LatticeError(f"hypothesis {w} does not occur in the graph")
        if w == grouping.reference_words and not include_reference:
            continue
        terms.append(grouping.best_log_m(w))
    if not terms:
        raise LatticeError("muhat denominator is empty: no hypotheses selected")
    log_den = _logsumexp(np.array(terms))
    if log_den == -np.inf:
        raise LatticeError("muhat denominator underflowed to zero mass")
    return float(log_den - grouping.log_m(grouping._ref_path_index))


@dataclass(eq=False)
class MeasureReport:
    """Snapshot of every harness quantity at one (graph, scores) point.

    Booleans use the exact residuals stored alongside them; both readings
    of the muhat denominator (with and without the reference's own argmax
    term) are reported.
    """

    m_values: dict[Path, float]
    mu: dict[str, float]
    muhat_A: float
    muhat_A_excluding_reference: float | None
    normalization_residual: float
    ineq13_residuals: dict[WordSeq, float]
    ineq14_residual: float
    normalization_ok: bool
    inequality13_ok: bool
    inequality14_ok: bool
    muhat_loss_gap: float | None = None
    muhat_loss_ok: bool | None = None

    @property
    def all_ok(self) -> bool:
        checks = [self.normalization_ok, self.inequality13_ok, self.inequality14_ok]
        if self.muhat_loss_ok is not None:
            checks.append(self.muhat_loss_ok)
        return all(checks)

    @property
    def ineq13_min_residual(self) -> float:
        return min(self.ineq13_residuals.values()) if self.ineq13_residuals else 0.0


def run_measure_report(
    full_graph: Lattice,
    scores: ScoreTable,
    grouping: HypothesisGrouping,
    otf_loss: float | None = None,
    hypotheses: tuple[WordSeq, ...] | None = None,
    tol: float = RESIDUAL_TOL,
) -> MeasureReport:
    """Evaluate every check once; when otf_loss is supplied, also compare
    -log muhat(A-hat) against it (the two routes must agree to tol)."""
    norm_res = check_normalization(full_graph, scores, partition=grouping._partition)
    ineq13 = check_inequality_13(grouping, scores)
    ineq14 = check_inequality_14(grouping, scores)
    muhat = muhat_of_A(grouping, scores, hypotheses=hypotheses, include_reference=True)
    try:
        muhat_excl = muhat_of_A(grouping, scores, hypotheses=hypotheses, include_reference=False)
    except LatticeError:
        muhat_excl = None

    m_values = {p: float(np.exp(grouping.log_m(i))) for i, p in enumerate(grouping._partition.paths)}
    mu = {"A": float(np.exp(grouping.group_log_mu(grouping.reference_words)))}
    for w in sorted(grouping.competitor_sets):
        mu["B:" + ",".join(map(str, w))] = float(np.exp(grouping.group_log_mu(w)))

    gap = None
    gap_ok = None
    if otf_loss is not None:
        gap = abs(neg_log_muhat(grouping, scores, hypotheses=hypotheses, include_reference=True) - otf_loss)
        gap_ok = gap <= tol
    return MeasureReport(
        m_values=m_values,
        mu=mu,
        muhat_A=muhat,
        muhat_A_excluding_reference=muhat_excl,
        normalization_residual=norm_res,
        ineq13_residuals=ineq13,
        ineq14_residual=ineq14,
        normalization_ok=norm_res <= tol,
        inequality13_ok=all(r >= -tol for r in ineq13.values()),
        inequality14_ok=ineq14 >= -tol,
        muhat_loss_gap=gap,
        muhat_loss_ok=gap_ok,
    )
