"""latmmi: lattice-based MMI sequence training at desk scale.

Toy acoustic models over frame-synchronous word lattices, three MMI
objective variants (true, baseline with a pre-determinized denominator,
and on-the-fly denominator determinization), and a numerical harness that
checks the measure-theoretic guarantees behind the on-the-fly variant at
every training iteration.
"""

from .lattice import Arc, Lattice, LatticeError, Path, ScoreTable, path_score, validate
from .algorithms import (
    BackwardTable,
    OccupancyTable,
    ancestral_sample,
    backward_fill,
    count_paths,
    determinize_best_alignment,
    enumerate_paths,
    forward_logsum,
    occupancies,
    restrict_to_word_sequences,
    viterbi_best_path,
)
from .objectives import (
    MmiEvaluation,
    NumeratorSpec,
    baseline_lattice_mmi,
    otf_mmi,
    resolve_numerator,
    true_mmi,
)
from .measure import (
    HypothesisGrouping,
    MeasureReport,
    build_grouping,
    check_inequality_13,
    check_inequality_14,
    check_normalization,
    measure_m,
    muhat_of_A,
)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "Arc",
    "Lattice",
    "LatticeError",
    "Path",
    "ScoreTable",
    "path_score",
    "validate",
    "BackwardTable",
    "OccupancyTable",
    "ancestral_sample",
    "backward_fill",
    "count_paths",
    "determinize_best_alignment",
    "enumerate_paths",
    "forward_logsum",
    "occupancies",
    "restrict_to_word_sequences",
    "viterbi_best_path",
    "MmiEvaluation",
    "NumeratorSpec",
    "baseline_lattice_mmi",
    "otf_mmi",
    "resolve_numerator",
    "true_mmi",
    "HypothesisGrouping",
    "MeasureReport",
    "build_grouping",
    "check_inequality_13",
    "check_inequality_14",
    "check_normalization",
    "measure_m",
    "muhat_of_A",
    "KERNEL_BACKEND",
]
