"""Lattice generation, MMI training loop, and MAP evaluation.

One recognition pass per utterance fixes the hypothesis sets; training then
iterates plain full-gradient descent on the configured objective while
emitting, per iteration, all three losses, the measure-harness residuals,
and held-out sentence error.  The harness acts as a gate: a run counts as
successful only if every residual check held at every iteration.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from .algorithms import (
    determinize_best_alignment,
    enumerate_paths,
    forward_logsum,
    restrict_to_word_sequences,
    viterbi_best_path,
)
from .lattice import Lattice, LatticeError, Path, ScoreTable
from .latio import Utterance
from .measure import MeasureReport, PathPartition, build_grouping, run_measure_report
from .objectives import MmiEvaluation, NumeratorSpec, baseline_lattice_mmi, otf_mmi, true_mmi
from .scorer import ScorerParams, score_frames, score_frames_vjp
from .synth import SynthConfig, WordSeq, build_full_hypothesis_graph, build_sentence_graph, make_lm

TRAIN_MODES = ("baseline", "otf")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "otf"
    numerator: str = "fixed"
    k: int = 6
    learning_rate: float = 0.3
    iterations: int = 120
    epoch_size: int = 0  # utterances per iteration; 0 = full batch
    seed: int = 0

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise LatticeError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.numerator not in ("fixed", "viterbi", "ancestral"):
            raise LatticeError(f"unknown numerator mode {self.numerator!r}")
        if self.k < 1:
            raise LatticeError("k must be >= 1")


@dataclass(eq=False)
class UtteranceLattices:
    """Per-utterance artifacts of the recognition pass."""

    utt_id: str
    ref_words: WordSeq
    raw: Lattice                # all alignments of the kept hypotheses
    det: Lattice                # one CE-selected alignment per hypothesis
    numerator_lattice: Lattice  # all alignments of the reference
    fixed_path: Path            # CE Viterbi alignment of the reference
    kept_words: tuple[WordSeq, ...]


@dataclass(eq=False)
class TaskGraphs:
    """Score-independent graphs shared by every utterance of a task."""

    full_graph: Lattice
    sentence_graphs: dict[WordSeq, Lattice]
    partition: PathPartition

    @classmethod
    def from_config(cls, cfg: SynthConfig) -> "TaskGraphs":
        lex = cfg.lexicon()
        topo = cfg.topology()
        lm = make_lm(lex, cfg.max_sentence_len)
        full = build_full_hypothesis_graph(lex, topo, lm, cfg.frames, cfg.max_sentence_len,
                                           max_paths=cfg.enum_cap)
        graphs = {}
        for words in sorted(lm):
            try:
                graphs[words] = build_sentence_graph(words, lex, topo, lm[words], cfg.frames)
            except LatticeError:
                continue  # sentence cannot fit in T frames
        return cls(full_graph=full, sentence_graphs=graphs,
                   partition=PathPartition.from_graph(full, max_paths=cfg.enum_cap))


def hypothesis_viterbi_scores(graphs: TaskGraphs, scores: ScoreTable) -> dict[WordSeq, float]:
    return {w: viterbi_best_path(g, scores)[1] for w, g in graphs.sentence_graphs.items()}


def recognition_pass(
    full_graph: Lattice,
    ce_scores: ScoreTable,
    k: int,
    ref_words: WordSeq,
) -> tuple[Lattice, Lattice, tuple[WordSeq, ...]]:
    """Keep the reference plus the k-1 highest-Viterbi-score competitors
    under the CE scores; returns (raw, determinized, kept word sequences).

    raw holds every alignment of each kept hypothesis; det retains each
    hypothesis' CE-best alignment only.
    """
    det_all = determinize_best_alignment(full_graph, ce_scores)
    per_hyp = {p.word_sequence: s for p, s in enumerate_paths(det_all, ce_scores, full_graph.num_paths)}
    ref_words = tuple(ref_words)
    if ref_words not in per_hyp:
        raise LatticeError(f"reference {ref_words} is not a hypothesis of the graph")
    competitors = sorted((w for w in per_hyp if w != ref_words),
                         key=lambda w: (-per_hyp[w], w))
    if k > len(per_hyp):
        warnings.warn(f"k={k} exceeds the {len(per_hyp)} available hypotheses; keeping all")
    kept = tuple(sorted([ref_words] + competitors[: max(k - 1, 0)]))
    raw = restrict_to_word_sequences(full_graph, set(kept))
    det = determinize_best_alignment(raw, ce_scores)
    return raw, det, kept


def make_numerator(ref_graph: Lattice, ce_scores: ScoreTable) -> tuple[Lattice, Path]:
    """Numerator lattice (all reference alignments) and its CE Viterbi path."""
    fixed_path, _ = viterbi_best_path(ref_graph, ce_scores)
    return ref_graph, fixed_path


def generate_lattices(
    dataset: list[Utterance],
    graphs: TaskGraphs,
    ce_params: ScorerParams,
    k: int,
) -> list[UtteranceLattices]:
    out = []
    for u in dataset:
        ce_scores = score_frames(ce_params, u.features)
        raw, det, kept = recognition_pass(graphs.full_graph, ce_scores, k, u.ref_words)
        num_lat, fixed = make_numerator(graphs.sentence_graphs[u.ref_words], ce_scores)
        out.append(UtteranceLattices(utt_id=u.utt_id, ref_words=u.ref_words, raw=raw, det=det,
                                     numerator_lattice=num_lat, fixed_path=fixed, kept_words=kept))
    return out


def evaluate(params: ScorerParams, dataset: list[Utterance], sentence_graphs: dict[WordSeq, Lattice]) -> float:
    """MAP sentence error: decode each utterance to the hypothesis with the
    highest forward score; ties go to the lexicographically first sentence."""
    if not dataset:
        return 0.0
    wrong = 0
    for u in dataset:
        scores = score_frames(params, u.features)
        best_words = None
        best = -math.inf
        for words in sorted(sentence_graphs):
            total = forward_logsum(sentence_graphs[words], scores)
            if total > best:
                best = total
                best_words = words
        if best_words != u.ref_words:
            wrong += 1
    return wrong / len(dataset)


@dataclass(eq=False)
class MetricsRecord:
    """One training iteration's metrics; serializes to a JSON-lines row."""

    iteration: int
    loss_true: float
    loss_baseline: float
    loss_otf: float
    numerator_mode: str
    ineq13_min_residual: float
    ineq14_residual: float
    normalization_residual: float
    muhat_loss_gap: float
    heldout_sentence_error: float

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "loss_true": self.loss_true,
            "loss_baseline": self.loss_baseline,
            "loss_otf": self.loss_otf,
            "numerator_mode": self.numerator_mode,
            "ineq13_min_residual": self.ineq13_min_residual,
            "ineq14_residual": self.ineq14_residual,
            "normalization_residual": self.normalization_residual,
            "muhat_loss_gap": self.muhat_loss_gap,
            "heldout_sentence_error": self.heldout_sentence_error,
        }


@dataclass(eq=False)
class TrainResult:
    params: ScorerParams         # held-out-selected model
    final_params: ScorerParams   # last-iteration model
    metrics: list[MetricsRecord]
    harness_ok: bool
    harness_failures: list[str] = field(default_factory=list)
    aborted: str | None = None   # divergence diagnostic; metrics are partial


def train(
    dataset: list[Utterance],
    lattices: list[UtteranceLattices],
    graphs: TaskGraphs,
    init_params: ScorerParams,
    cfg: TrainConfig,
    heldout: list[Utterance] | None = None,
    run_harness: bool = True,
) -> TrainResult:
    """Plain gradient descent on the configured MMI variant.

    Every iteration evaluates all three objectives on every batch utterance
    (only cfg.mode drives the update), runs the measure harness against the
    on-the-fly loss, and decodes the held-out set.  Gradients accumulate in
    utterance order; all sampling seeds derive from cfg.seed, so the metrics
    stream is bit-reproducible for a fixed kernel backend.
    """
    if len(dataset) != len(lattices):
        raise LatticeError("dataset and lattices are misaligned")
    heldout = heldout or []
    params = init_params
    batch_size = cfg.epoch_size if cfg.epoch_size > 0 else len(dataset)
    num_graphs = {lat.utt_id: lat.numerator_lattice for lat in lattices}

    metrics: list[MetricsRecord] = []
    failures: list[str] = []
    aborted = None
    best_params = params
    best_err = math.inf
    cursor = 0
    for it in range(cfg.iterations):
        gw = np.zeros_like(params.weights)
        gb = np.zeros_like(params.bias)
        sums = {"true": 0.0, "baseline": 0.0, "otf": 0.0}
        worst = {"ineq13": math.inf, "ineq14": math.inf, "norm": 0.0, "gap": 0.0}
        batch = [(dataset[(cursor + j) % len(dataset)], lattices[(cursor + j) % len(dataset)])
                 for j in range(min(batch_size, len(dataset)))]
        cursor = (cursor + batch_size) % len(dataset)

        for u, lat in batch:
            scores, vjp = score_frames_vjp(params, u.features)
            if not np.all(np.isfinite(scores)):
                aborted = f"non-finite scores at iteration {it}, utterance {u.utt_id}"
                break
            seed = _eval_seed(cfg.seed, it, u.utt_id)
            numspec = _numerator_spec(cfg.numerator, lat)
            ev_true = true_mmi(num_graphs[u.utt_id], graphs.full_graph, scores)
            ev_base = baseline_lattice_mmi(numspec, lat.det, scores, seed=seed)
            ev_otf = otf_mmi(numspec, lat.raw, scores, seed=seed)
            sums["true"] += ev_true.loss
            sums["baseline"] += ev_base.loss
            sums["otf"] += ev_otf.loss

            chosen = {"baseline": ev_base, "otf": ev_otf}[cfg.mode]
            gw_u, gb_u = vjp(chosen.grad)
            gw += gw_u
            gb += gb_u

            if run_harness:
                report = _harness_report(graphs, scores, u, lat, ev_otf)
                worst["ineq13"] = min(worst["ineq13"], report.ineq13_min_residual)
                worst["ineq14"] = min(worst["ineq14"], report.ineq14_residual)
                worst["norm"] = max(worst["norm"], report.normalization_residual)
                worst["gap"] = max(worst["gap"], report.muhat_loss_gap)
                if not report.all_ok:
                    failures.append(f"iteration {it}, utterance {u.utt_id}: harness violation "
                                    f"(norm={report.normalization_residual:.3e}, "
                                    f"ineq13={report.ineq13_min_residual:.3e}, "
                                    f"ineq14={report.ineq14_residual:.3e}, "
                                    f"gap={report.muhat_loss_gap:.3e})")

        if aborted is None:
            total = sums["true"] + sums["baseline"] + sums["otf"]
            if not math.isfinite(total):
                aborted = f"non-finite loss at iteration {it}"
        if aborted is not None:
            break
        n = len(batch)
        err = evaluate(params, heldout, graphs.sentence_graphs)
        metrics.append(MetricsRecord(
            iteration=it,
            loss_true=sums["true"] / n,
            loss_baseline=sums["baseline"] / n,
            loss_otf=sums["otf"] / n,
            numerator_mode=cfg.numerator,
            ineq13_min_residual=worst["ineq13"] if run_harness else math.nan,
            ineq14_residual=worst["ineq14"] if run_harness else math.nan,
            normalization_residual=worst["norm"] if run_harness else math.nan,
            muhat_loss_gap=worst["gap"] if run_harness else math.nan,
            heldout_sentence_error=err,
        ))
        if err < best_err:
            best_err = err
            best_params = params
        try:
            params = params.step(gw / n, gb / n, cfg.learning_rate)
        except LatticeError:
            aborted = f"non-finite parameters after the update at iteration {it}"
            break

    return TrainResult(params=best_params, final_params=params, metrics=metrics,
                       harness_ok=not failures, harness_failures=failures, aborted=aborted)


def _numerator_spec(mode: str, lat: UtteranceLattices) -> NumeratorSpec:
    if mode == "fixed":
        return NumeratorSpec(mode="fixed", fixed_path=lat.fixed_path)
    return NumeratorSpec(mode=mode, numerator_lattice=lat.numerator_lattice)


def _eval_seed(master: int, iteration: int, utt_id: str) -> int:
    stable = zlib.crc32(utt_id.encode("utf-8"))
    h = np.random.SeedSequence(entropy=master, spawn_key=(3, iteration, stable))
    return int(h.generate_state(1, np.uint64)[0] % (2**62))


def _harness_report(
    graphs: TaskGraphs,
    scores: ScoreTable,
    u: Utterance,
    lat: UtteranceLattices,
    ev_otf: MmiEvaluation,
) -> MeasureReport:
    grouping = build_grouping(graphs.full_graph, scores, u.ref_words,
                              ev_otf.numerator_path, partition=graphs.partition)
    return run_measure_report(graphs.full_graph, scores, grouping,
                              otf_loss=ev_otf.loss, hypotheses=lat.kept_words)
