"""Self-contained verification suites behind `latmmi verify`.

Each suite regenerates its own randomized instances from fixed seeds and
checks the library against independent oracles:

  oracle    forward/Viterbi/determinization against exhaustive enumeration,
            ancestral sampling against the exact enumerated posterior, and
            the on-the-fly == determinize-then-baseline identity.
  gradient  analytic score gradients of all three objectives against
            central finite differences (argmax-stable entries only).
  theorem   a full toy training run with every measure-harness residual
            checked at every iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .algorithms import (
    backward_fill,
    determinize_best_alignment,
    enumerate_paths,
    enumerate_position_paths,
    forward_logsum,
    restrict_to_word_sequences,
    sample_arc_paths,
    viterbi_best_path,
)
from .config import ExperimentConfig, default_config_text
from .objectives import NumeratorSpec, baseline_lattice_mmi, otf_mmi, true_mmi
from .scorer import ce_pretrain
from .synth import synth_dataset
from .testing import random_instance, random_lattice, random_scores
from .training import TaskGraphs, generate_lattices, train

ORACLE_SEED_BASE = 20_240_000
GRADIENT_SEED_BASE = 20_241_000
SAMPLING_SEED_BASE = 20_242_000
IDENTITY_SEED_BASE = 20_243_000


@dataclass(eq=False)
class SuiteReport:
    suite: str
    checks: list[tuple[str, bool, str]] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def add(self, name: str, ok, detail: str) -> None:
        self.checks.append((name, bool(ok), detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def lines(self) -> list[str]:
        out = [f"[{'PASS' if ok else 'FAIL'}] {self.suite}.{name}: {detail}"
               for name, ok, detail in self.checks]
        for key, value in sorted(self.counters.items()):
            out.append(f"[info] {self.suite}.{key} = {value}")
        out.append(f"[{'PASS' if self.passed else 'FAIL'}] suite {self.suite} "
                   f"({len(self.checks)} checks, {self.elapsed:.1f}s)")
        return out

    def to_json_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "elapsed_seconds": float(self.elapsed),
            "checks": [{"name": n, "ok": ok, "detail": d} for n, ok, d in self.checks],
            "counters": {k: (float(v) if isinstance(v, float) else int(v))
                         for k, v in self.counters.items()},
        }


def _logsumexp(values: np.ndarray) -> float:
    m = values.max()
    return float(m + np.log(np.exp(values - m).sum()))


def run_oracle_suite(num_lattices: int = 200, inject_corruption: bool = False) -> SuiteReport:
    rep = SuiteReport(suite="oracle")
    t0 = time.monotonic()

    worst_fwd = 0.0
    vit_exact = True
    det_ok = True
    for i in range(num_lattices):
        lat, sc = random_instance(ORACLE_SEED_BASE + i)
        pairs = enumerate_paths(lat, sc, 10_000)
        scores = np.array([s for _, s in pairs])
        fwd = forward_logsum(lat, sc)
        if inject_corruption and i == 0:
            fwd += 1e-6  # deliberate fault to prove the check can fail
        worst_fwd = max(worst_fwd, abs(fwd - _logsumexp(scores)))
        _, v = viterbi_best_path(lat, sc)
        if v != scores.max():
            vit_exact = False
        groups: dict = {}
        for p, s in pairs:
            groups.setdefault(p.word_sequence, []).append(s)
        det = determinize_best_alignment(lat, sc)
        det_pairs = enumerate_paths(det, sc, 10_000)
        det_map = {p.word_sequence: s for p, s in det_pairs}
        if len(det_pairs) != len(groups) or len(det_map) != len(groups):
            det_ok = False
        elif any(det_map[w] != max(ss) for w, ss in groups.items()):
            det_ok = False
    rep.add("forward_vs_enumeration", worst_fwd <= 1e-9,
            f"max |forward - logsumexp(paths)| = {worst_fwd:.3e} over {num_lattices} lattices (tol 1e-9)")
    rep.add("viterbi_exact", vit_exact, f"Viterbi score == enumerated max exactly on {num_lattices} lattices")
    rep.add("determinize_contract", det_ok,
            f"per-word-sequence maxima and distinct counts preserved on {num_lattices} lattices")

    worst_tv = 0.0
    n_samples = 200_000
    for i in range(20):
        rng = np.random.default_rng(SAMPLING_SEED_BASE + i)
        while True:
            lat = random_lattice(rng, max_frames=5, max_states_per_frame=2, max_path_count=8)
            if 2 <= lat.num_paths <= 8:
                break
        sc = random_scores(rng, lat.num_frames)
        pos_pairs = enumerate_position_paths(lat, sc, 8)
        scores = np.array([s for _, s in pos_pairs])
        exact = np.exp(scores - _logsumexp(scores))
        beta = backward_fill(lat, sc)
        rows = sample_arc_paths(lat, sc, beta, seed=SAMPLING_SEED_BASE + 500 + i, n=n_samples)
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        freq = {tuple(r): c / n_samples for r, c in zip(uniq, counts)}
        tv = 0.5 * sum(abs(freq.get(tuple(k), 0.0) - p) for (k, _), p in zip(pos_pairs, exact))
        tv += 0.5 * sum(f for key, f in freq.items()
                        if key not in {tuple(k) for k, _ in pos_pairs})
        worst_tv = max(worst_tv, tv)
    rep.add("sampling_total_variation", worst_tv <= 0.01,
            f"max TV(sampled, exact posterior) = {worst_tv:.4f} over 20 lattices x {n_samples} draws (tol 0.01)")

    identity_exact = True
    for i in range(100):
        lat, sc = random_instance(IDENTITY_SEED_BASE + i)
        fp, _ = viterbi_best_path(lat, sc)
        spec = NumeratorSpec(mode="fixed", fixed_path=fp)
        ev_otf = otf_mmi(spec, lat, sc)
        det = determinize_best_alignment(lat, sc)
        ev_base = baseline_lattice_mmi(spec, det, sc)
        if not (ev_otf.loss == ev_base.loss
                and ev_otf.numerator_logprob == ev_base.numerator_logprob
                and ev_otf.denominator_logprob == ev_base.denominator_logprob
                and np.array_equal(ev_otf.grad, ev_base.grad)):
            identity_exact = False
    rep.add("otf_equals_baseline_on_determinized", identity_exact,
            "loss, terms and gradient identical on 100 seeded (lattice, scores) pairs")

    rep.elapsed = time.monotonic() - t0
    return rep


def _fd_relative_errors(loss_fn, grad, base, stable_fn=None, h: float = 1e-5):
    """Central differences per entry; rel err uses max(1, |analytic|)."""
    errs = []
    skipped = 0
    for t in range(base.shape[0]):
        for p in range(base.shape[1]):
            if stable_fn is not None and not stable_fn(t, p):
                skipped += 1
                continue
            e = np.zeros_like(base)
            e[t, p] = h
            fd = (loss_fn(base + e) - loss_fn(base - e)) / (2 * h)
            errs.append(abs(fd - grad[t, p]) / max(1.0, abs(grad[t, p])))
    return (max(errs) if errs else 0.0), skipped


def run_gradient_suite(num_instances: int = 50, inject_corruption: bool = False) -> SuiteReport:
    rep = SuiteReport(suite="gradient")
    t0 = time.monotonic()
    worst = {"true_mmi": 0.0, "baseline_lattice_mmi": 0.0, "otf_mmi": 0.0}
    skipped_total = 0
    checked_total = 0
    for i in range(num_instances):
        seed = GRADIENT_SEED_BASE + i
        den, sc = random_instance(seed, max_frames=6)
        rng = np.random.default_rng(seed + 71)
        # numerator = the denominator restricted to one of its word sequences
        word_seqs = sorted({p.word_sequence for p, _ in enumerate_paths(den, sc, den.num_paths)})
        ref = word_seqs[int(rng.integers(0, len(word_seqs)))]
        num = restrict_to_word_sequences(den, {ref})

        ev = true_mmi(num, den, sc)
        if inject_corruption and i == 0:
            ev.grad[0, 1] += 1e-3  # deliberate fault to prove the check can fail
        err, _ = _fd_relative_errors(lambda s: true_mmi(num, den, s).loss, ev.grad, sc)
        worst["true_mmi"] = max(worst["true_mmi"], err)

        fp, _ = viterbi_best_path(num, sc)
        spec = NumeratorSpec(mode="fixed", fixed_path=fp)
        det = determinize_best_alignment(den, sc)
        ev = baseline_lattice_mmi(spec, det, sc)
        err, _ = _fd_relative_errors(lambda s: baseline_lattice_mmi(spec, det, s).loss, ev.grad, sc)
        worst["baseline_lattice_mmi"] = max(worst["baseline_lattice_mmi"], err)

        ev = otf_mmi(spec, den, sc)

        def selection(s):
            d = determinize_best_alignment(den, s)
            return sorted((p.word_sequence, p.pdf_sequence) for p, _ in
                          enumerate_paths(d, s, den.num_paths))

        def stable(t, p, h=1e-5):
            e = np.zeros_like(sc)
            e[t, p] = h
            return selection(sc + e) == selection(sc - e)

        err, skipped = _fd_relative_errors(lambda s: otf_mmi(spec, den, s).loss, ev.grad, sc,
                                           stable_fn=stable)
        worst["otf_mmi"] = max(worst["otf_mmi"], err)
        skipped_total += skipped
        checked_total += sc.size
    for name, err in worst.items():
        rep.add(name, err <= 1e-4,
                f"max FD relative error = {err:.3e} over {num_instances} instances (tol 1e-4)")
    rep.counters["unstable_argmax_entries_skipped"] = skipped_total
    rep.counters["entries_checked"] = 3 * checked_total - skipped_total
    rep.elapsed = time.monotonic() - t0
    return rep


def run_theorem_suite(config: ExperimentConfig | None = None, min_iterations: int = 500,
                      inject_corruption: bool = False) -> SuiteReport:
    rep = SuiteReport(suite="theorem")
    t0 = time.monotonic()
    if config is None:
        import configparser
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read_string(default_config_text())
        config = ExperimentConfig.from_parser(parser)
    if config.train.iterations < min_iterations:
        config = config.replace_train(iterations=min_iterations)

    graphs = TaskGraphs.from_config(config.synth)
    train_set, heldout = synth_dataset(config.synth)
    lex = config.synth.lexicon()
    ce = ce_pretrain(train_set, config.synth.feature_dim, lex.score_width,
                     iterations=config.ce_iterations, learning_rate=config.ce_learning_rate,
                     init_seed=config.ce_seed)
    lattices = generate_lattices(train_set, graphs, ce, k=config.train.k)
    if inject_corruption:
        lattices[0] = _tamper_raw_lattice(lattices[0])
    result = train(train_set, lattices, graphs, ce, config.train, heldout=heldout, run_harness=True)

    worst_norm = max(m.normalization_residual for m in result.metrics)
    worst_13 = min(m.ineq13_min_residual for m in result.metrics)
    worst_14 = min(m.ineq14_residual for m in result.metrics)
    worst_gap = max(m.muhat_loss_gap for m in result.metrics)
    n_it = len(result.metrics)
    rep.add("normalization", worst_norm <= 1e-9,
            f"max |sum m - 1| = {worst_norm:.3e} over {n_it} iterations (tol 1e-9)")
    rep.add("inequality_13", worst_13 >= -1e-9,
            f"min residual |B| m(B-hat) - mu(B) = {worst_13:.3e} (must be >= -1e-9)")
    rep.add("inequality_14", worst_14 >= -1e-9,
            f"min residual mu(A) - m(A-hat) = {worst_14:.3e} (must be >= -1e-9)")
    rep.add("muhat_matches_otf_loss", worst_gap <= 1e-9,
            f"max |(-log muhat) - otf loss| = {worst_gap:.3e} (tol 1e-9)")
    rep.add("harness_gate", result.harness_ok,
            f"{len(result.harness_failures)} recorded violations")
    rep.counters["iterations"] = n_it
    rep.counters["final_true_loss"] = result.metrics[-1].loss_true
    rep.counters["final_heldout_error"] = result.metrics[-1].heldout_sentence_error
    rep.elapsed = time.monotonic() - t0
    return rep


def _tamper_raw_lattice(bundle):
    """Shift one raw-lattice arc weight so the muhat/loss identity breaks."""
    from dataclasses import replace

    from .lattice import Arc, Lattice

    raw = bundle.raw
    arcs = list(raw.arcs)
    a = arcs[0]
    arcs[0] = Arc(src=a.src, dst=a.dst, pdf_id=a.pdf_id, word_id=a.word_id,
                  graph_weight=a.graph_weight - 0.25)
    tampered = Lattice(num_frames=raw.num_frames, states=raw.states, start=raw.start,
                       finals=raw.finals, arcs=tuple(arcs))
    return replace(bundle, raw=tampered)


SUITES = {
    "oracle": run_oracle_suite,
    "gradient": run_gradient_suite,
    "theorem": run_theorem_suite,
}
