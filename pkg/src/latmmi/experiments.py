"""Multi-seed directional studies over the toy task.

These reproduce, as orderings rather than absolute numbers, the two
empirical comparisons the objectives are designed around: fixed versus
re-sampled numerator alignments, and pre-determinized versus on-the-fly
determinized denominators.  Each grid cell trains one model per seed;
summaries report per-cell medians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scorer import ce_pretrain
from .synth import SynthConfig, synth_dataset
from .training import TaskGraphs, TrainConfig, generate_lattices, train

STUDY_SYNTH = dict(noise=1.5, num_train=24, num_heldout=24)
STUDY_CE = dict(iterations=60, learning_rate=0.5)
STUDY_TRAIN = dict(k=6, learning_rate=0.6, iterations=150)


@dataclass(eq=False)
class CellResult:
    mode: str
    numerator: str
    seed: int
    final_true_loss: float
    selected_heldout_error: float
    final_heldout_error: float


def run_cell(
    seed: int,
    mode: str,
    numerator: str,
    synth_overrides: dict | None = None,
    train_overrides: dict | None = None,
    run_harness: bool = False,
) -> CellResult:
    """Train one configuration end to end from a dataset seed."""
    synth_kwargs = {**STUDY_SYNTH, **(synth_overrides or {})}
    train_kwargs = {**STUDY_TRAIN, **(train_overrides or {})}
    cfg = SynthConfig(seed=seed, **synth_kwargs)
    graphs = TaskGraphs.from_config(cfg)
    train_set, heldout = synth_dataset(cfg)
    ce = ce_pretrain(train_set, cfg.feature_dim, cfg.lexicon().score_width,
                     init_seed=seed, **STUDY_CE)
    lattices = generate_lattices(train_set, graphs, ce, k=train_kwargs["k"])
    tc = TrainConfig(mode=mode, numerator=numerator, seed=seed, **train_kwargs)
    result = train(train_set, lattices, graphs, ce, tc, heldout=heldout, run_harness=run_harness)
    return CellResult(
        mode=mode,
        numerator=numerator,
        seed=seed,
        final_true_loss=result.metrics[-1].loss_true,
        selected_heldout_error=min(m.heldout_sentence_error for m in result.metrics),
        final_heldout_error=result.metrics[-1].heldout_sentence_error,
    )


def run_grid(seeds, modes=("baseline", "otf"),
             numerators=("fixed", "viterbi", "ancestral"), **kwargs) -> dict:
    """One CellResult per (mode, numerator, seed)."""
    grid: dict[tuple[str, str], list[CellResult]] = {(m, n): [] for m in modes for n in numerators}
    for seed in seeds:
        for m in modes:
            for n in numerators:
                grid[(m, n)].append(run_cell(seed, m, n, **kwargs))
    return grid


def median_heldout_error(cells: list[CellResult]) -> float:
    return float(np.median([c.selected_heldout_error for c in cells]))


def median_true_loss(cells: list[CellResult]) -> float:
    return float(np.median([c.final_true_loss for c in cells]))


def numerator_study(seeds, modes=("baseline", "otf"),
                    numerators=("fixed", "viterbi", "ancestral"), **kwargs) -> dict:
    """Median held-out error of the selected model per (mode, numerator)."""
    grid = run_grid(seeds, modes=modes, numerators=numerators, **kwargs)
    return {key: {
        "median_heldout_error": median_heldout_error(cells),
        "errors": [c.selected_heldout_error for c in cells],
    } for key, cells in grid.items()}


def determinization_study(seeds, numerator: str = "fixed", **kwargs) -> dict:
    """Median final true-MMI loss and held-out error, baseline vs on-the-fly."""
    grid = run_grid(seeds, numerators=(numerator,), **kwargs)
    return {mode: {
        "median_true_loss": median_true_loss(grid[(mode, numerator)]),
        "median_heldout_error": median_heldout_error(grid[(mode, numerator)]),
        "true_losses": [c.final_true_loss for c in grid[(mode, numerator)]],
        "errors": [c.selected_heldout_error for c in grid[(mode, numerator)]],
    } for mode in ("baseline", "otf")}
