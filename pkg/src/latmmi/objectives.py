"""The three MMI objective variants and their score-level gradients.

true_mmi sums over complete numerator/denominator hypothesis graphs;
baseline_lattice_mmi uses a pre-determinized denominator lattice and a
single numerator alignment; otf_mmi re-determinizes the raw denominator
lattice under the current scores on every call.  Gradients are taken with
respect to the acoustic score table only; graph weights are constants.
For the argmax-based variants the selection is frozen within one call, so
the gradient is the subgradient of the resulting path-set log-sum-exp.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .algorithms import (
    ancestral_sample,
    backward_fill,
    determinize_best_alignment,
    forward_logsum,
    occupancies,
    viterbi_best_path,
)
from .lattice import Lattice, Path, ScoreTable, path_score

NUMERATOR_MODES = ("fixed", "viterbi", "ancestral")


@dataclass(frozen=True)
class NumeratorSpec:
    """How the numerator alignment is chosen at each evaluation.

    fixed: always the stored path (the standard recipe, chosen once under
    the CE model).  viterbi / ancestral: re-selected from the numerator
    lattice under the evaluation-time scores.
    """

    mode: str
    fixed_path: Path | None = None
    numerator_lattice: Lattice | None = None

    def __post_init__(self):
        if self.mode not in NUMERATOR_MODES:
            raise ValueError(f"numerator mode must be one of {NUMERATOR_MODES}, got {self.mode!r}")
        if self.mode == "fixed" and self.fixed_path is None:
            raise ValueError("mode='fixed' requires fixed_path")
        if self.mode in ("viterbi", "ancestral") and self.numerator_lattice is None:
            raise ValueError(f"mode={self.mode!r} requires numerator_lattice")


@dataclass(eq=False)
class MmiEvaluation:
    """One objective evaluation: terms, loss and d(loss)/d(score table)."""

    numerator_logprob: float
    denominator_logprob: float
    loss: float
    grad: np.ndarray  # (num_frames, num_pdfs)
    numerator_path: Path | None = None


def resolve_numerator(num: NumeratorSpec, scores: ScoreTable, seed: int | None = None) -> Path:
    """Materialize the numerator alignment for one evaluation."""
    if num.mode == "fixed":
        return num.fixed_path
    if num.mode == "viterbi":
        path, _ = viterbi_best_path(num.numerator_lattice, scores)
        return path
    if seed is None:
        raise ValueError("mode='ancestral' needs an explicit seed")
    beta = backward_fill(num.numerator_lattice, scores)
    return ancestral_sample(num.numerator_lattice, scores, beta, seed)


def true_mmi(numerator_graph: Lattice, denominator_graph: Lattice, scores: ScoreTable) -> MmiEvaluation:
    """Full-sum MMI: both terms log-sum over complete alignment sets."""
    num = forward_logsum(numerator_graph, scores)
    den = forward_logsum(denominator_graph, scores)
    loss = den - num
    if loss < -1e-12:
        warnings.warn(
            f"true MMI loss is negative ({loss:.3e}): the numerator paths are "
            "not all contained in the denominator graph",
            stacklevel=2,
        )
    grad = occupancies(denominator_graph, scores).gamma - occupancies(numerator_graph, scores).gamma
    return MmiEvaluation(numerator_logprob=num, denominator_logprob=den, loss=loss, grad=grad)


def baseline_lattice_mmi(
    num: NumeratorSpec,
    den_lattice: Lattice,
    scores: ScoreTable,
    ce_scores: ScoreTable | None = None,
    seed: int | None = None,
) -> MmiEvaluation:
    """Standard lattice MMI: the denominator lattice holds one retained
    alignment per hypothesis (selected under ce_scores at lattice-generation
    time) and is re-scored under the current scores; the numerator is a
    single resolved path.

    ce_scores is provenance only: the retained alignments were frozen under
    it, and nothing here re-reads it.
    """
    del ce_scores
    path = resolve_numerator(num, scores, seed=seed)
    num_lp = path_score(path, scores)
    den_lp = forward_logsum(den_lattice, scores)
    grad = occupancies(den_lattice, scores).gamma
    for t, pdf in enumerate(path.pdf_sequence):
        grad[t, pdf] -= 1.0
    return MmiEvaluation(
        numerator_logprob=num_lp,
        denominator_logprob=den_lp,
        loss=den_lp - num_lp,
        grad=grad,
        numerator_path=path,
    )


def otf_mmi(
    num: NumeratorSpec,
    raw_den_lattice: Lattice,
    scores: ScoreTable,
    seed: int | None = None,
) -> MmiEvaluation:
    """On-the-fly variant: re-select each hypothesis' best alignment under
    the current scores, then evaluate exactly like the baseline on that
    freshly determinized denominator."""
    det = determinize_best_alignment(raw_den_lattice, scores)
    return baseline_lattice_mmi(num, det, scores, ce_scores=scores, seed=seed)
