import math

import numpy as np
import pytest

from latmmi.algorithms import (
    determinize_best_alignment,
    enumerate_paths,
    restrict_to_word_sequences,
    viterbi_best_path,
)
from latmmi.lattice import Arc, Lattice, Path, path_score
from latmmi.objectives import (
    NumeratorSpec,
    baseline_lattice_mmi,
    otf_mmi,
    resolve_numerator,
    true_mmi,
)
from latmmi.testing import random_instance


def linear_lattice(weights, pdf=1, word=1):
    arcs = tuple(Arc(i, i + 1, pdf, word if i == 0 else 0, w) for i, w in enumerate(weights))
    states = tuple((i, i) for i in range(len(weights) + 1))
    return Lattice(num_frames=len(weights), states=states, start=0,
                   finals=frozenset({len(weights)}), arcs=arcs)


def num_plus_competitor(num_score=-1.0, comp_score=-1.0):
    """Two parallel single-arc paths with different word labels."""
    arcs = (Arc(0, 1, 1, 1, num_score), Arc(0, 1, 2, 2, comp_score))
    lat = Lattice(num_frames=1, states=((0, 0), (1, 1)), start=0, finals=frozenset({1}), arcs=arcs)
    num = Lattice(num_frames=1, states=((0, 0), (1, 1)), start=0, finals=frozenset({1}),
                  arcs=(arcs[0],))
    return num, lat


def _oracle_logsumexp(values):
    m = max(values)
    return m + math.log(sum(math.exp(v - m) for v in values))


class TestTrueMmi:
    def test_identical_graphs_give_zero_loss_and_gradient(self):
        lat, scores = random_instance(2)
        ev = true_mmi(lat, lat, scores)
        assert ev.loss == 0.0
        assert np.abs(ev.grad).max() == 0.0

    def test_single_competitor_example(self):
        num, den = num_plus_competitor(-1.0, -1.0)
        ev = true_mmi(num, den, np.zeros((1, 3)))
        assert ev.loss == pytest.approx(math.log(2.0), abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_enumeration_oracle(self, seed):
        den, scores = random_instance(seed)
        words = sorted({p.word_sequence for p, _ in enumerate_paths(den, scores, 10_000)})
        num = restrict_to_word_sequences(den, {words[0]})
        ev = true_mmi(num, den, scores)
        den_scores = [s for _, s in enumerate_paths(den, scores, 10_000)]
        num_scores = [s for _, s in enumerate_paths(num, scores, 10_000)]
        expected = _oracle_logsumexp(den_scores) - _oracle_logsumexp(num_scores)
        assert abs(ev.loss - expected) <= 1e-9
        assert ev.loss >= -1e-12  # numerator paths are a subset of the denominator's

    def test_warns_when_numerator_not_contained(self):
        num = linear_lattice([10.0])
        den = linear_lattice([-1.0], pdf=2, word=2)
        with pytest.warns(UserWarning, match="not all contained"):
            true_mmi(num, den, np.zeros((1, 3)))

    @pytest.mark.parametrize("seed", range(6))
    def test_gradient_rows_sum_to_zero(self, seed):
        den, scores = random_instance(seed)
        words = sorted({p.word_sequence for p, _ in enumerate_paths(den, scores, 10_000)})
        num = restrict_to_word_sequences(den, {words[-1]})
        ev = true_mmi(num, den, scores)
        assert np.abs(ev.grad.sum(axis=1)).max() <= 1e-9


class TestBaseline:
    def test_denominator_equal_to_numerator_path_gives_zero(self):
        num, _ = num_plus_competitor()
        fixed = Path.from_arcs(num.arcs)
        ev = baseline_lattice_mmi(NumeratorSpec(mode="fixed", fixed_path=fixed), num,
                                  np.zeros((1, 3)))
        assert ev.loss == 0.0

    def test_two_retained_alignments_closed_form(self):
        lat = Lattice(num_frames=1, states=((0, 0), (1, 1)), start=0, finals=frozenset({1}),
                      arcs=(Arc(0, 1, 1, 1, -1.0), Arc(0, 1, 2, 2, -2.0)))
        fixed = Path.from_arcs((lat.arcs[0],))
        ev = baseline_lattice_mmi(NumeratorSpec(mode="fixed", fixed_path=fixed), lat,
                                  np.zeros((1, 3)))
        assert ev.loss == pytest.approx(math.log(math.exp(-1) + math.exp(-2)) + 1.0, abs=1e-9)
        assert ev.loss == pytest.approx(0.313262, abs=1e-6)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_oracle_over_retained_paths(self, seed):
        lat, scores = random_instance(seed)
        det = determinize_best_alignment(lat, scores)
        fixed, _ = viterbi_best_path(det, scores)
        ev = baseline_lattice_mmi(NumeratorSpec(mode="fixed", fixed_path=fixed), det, scores)
        retained = [s for _, s in enumerate_paths(det, scores, 10_000)]
        expected = _oracle_logsumexp(retained) - path_score(fixed, scores)
        assert abs(ev.loss - expected) <= 1e-9

    def test_loss_is_exact_difference_of_terms(self):
        lat, scores = random_instance(4)
        det = determinize_best_alignment(lat, scores)
        fixed, _ = viterbi_best_path(det, scores)
        ev = baseline_lattice_mmi(NumeratorSpec(mode="fixed", fixed_path=fixed), det, scores)
        assert ev.loss == ev.denominator_logprob - ev.numerator_logprob

    @pytest.mark.parametrize("seed", range(6))
    def test_gradient_rows_sum_to_zero(self, seed):
        lat, scores = random_instance(seed)
        det = determinize_best_alignment(lat, scores)
        fixed, _ = viterbi_best_path(det, scores)
        ev = baseline_lattice_mmi(NumeratorSpec(mode="fixed", fixed_path=fixed), det, scores)
        assert np.abs(ev.grad.sum(axis=1)).max() <= 1e-9


class TestOtf:
    def test_picks_best_alignment_per_hypothesis(self):
        # hypothesis A: alignments -1 and -3; hypothesis B: -2
        arcs = (
            Arc(0, 1, 1, 1, -0.5), Arc(1, 4, 1, 0, -0.5),   # A @ -1
            Arc(0, 2, 2, 1, -1.5), Arc(2, 4, 2, 0, -1.5),   # A @ -3
            Arc(0, 3, 3, 2, -1.0), Arc(3, 4, 3, 0, -1.0),   # B @ -2
        )
        lat = Lattice(num_frames=2, states=((0, 0), (1, 1), (2, 1), (3, 1), (4, 2)),
                      start=0, finals=frozenset({4}), arcs=arcs)
        fixed = Path.from_arcs((arcs[0], arcs[1]))
        ev = otf_mmi(NumeratorSpec(mode="fixed", fixed_path=fixed), lat, np.zeros((2, 4)))
        assert ev.loss == pytest.approx(math.log(math.exp(-1) + math.exp(-2)) + 1.0, abs=1e-9)

    def test_equals_baseline_when_raw_is_already_deterministic(self):
        lat, scores = random_instance(9)
        det = determinize_best_alignment(lat, scores)
        fixed, _ = viterbi_best_path(det, scores)
        spec = NumeratorSpec(mode="fixed", fixed_path=fixed)
        ev_base = baseline_lattice_mmi(spec, det, scores)
        ev_otf = otf_mmi(spec, det, scores)
        assert ev_otf.loss == ev_base.loss
        assert np.array_equal(ev_otf.grad, ev_base.grad)

    @pytest.mark.parametrize("seed", range(20))
    def test_definitional_identity_with_baseline(self, seed):
        lat, scores = random_instance(seed)
        fixed, _ = viterbi_best_path(lat, scores)
        spec = NumeratorSpec(mode="fixed", fixed_path=fixed)
        ev_otf = otf_mmi(spec, lat, scores)
        ev_base = baseline_lattice_mmi(spec, determinize_best_alignment(lat, scores), scores)
        assert ev_otf.loss == ev_base.loss
        assert ev_otf.numerator_logprob == ev_base.numerator_logprob
        assert ev_otf.denominator_logprob == ev_base.denominator_logprob
        assert np.array_equal(ev_otf.grad, ev_base.grad)


class TestResolveNumerator:
    def test_fixed_returns_stored_path_untouched(self):
        num, _ = num_plus_competitor()
        fixed = Path.from_arcs(num.arcs)
        spec = NumeratorSpec(mode="fixed", fixed_path=fixed)
        assert resolve_numerator(spec, np.zeros((1, 3))) is fixed

    def test_viterbi_on_single_path_lattice(self):
        lat = linear_lattice([-1.0, -2.0])
        spec = NumeratorSpec(mode="viterbi", numerator_lattice=lat)
        assert resolve_numerator(spec, np.zeros((2, 2))).arcs == lat.arcs

    def test_ancestral_two_equal_paths_split(self):
        lat = Lattice(num_frames=1, states=((0, 0), (1, 1)), start=0, finals=frozenset({1}),
                      arcs=(Arc(0, 1, 1, 1, np.log(0.5)), Arc(0, 1, 2, 1, np.log(0.5))))
        spec = NumeratorSpec(mode="ancestral", numerator_lattice=lat)
        scores = np.zeros((1, 3))
        hits = sum(resolve_numerator(spec, scores, seed=s).arcs[0].pdf_id == 1
                   for s in range(2000))
        assert abs(hits / 2000 - 0.5) <= 0.05

    def test_mode_field_consistency_enforced(self):
        with pytest.raises(ValueError, match="fixed_path"):
            NumeratorSpec(mode="fixed")
        with pytest.raises(ValueError, match="numerator_lattice"):
            NumeratorSpec(mode="viterbi")
        with pytest.raises(ValueError, match="numerator_lattice"):
            NumeratorSpec(mode="ancestral")
        with pytest.raises(ValueError, match="mode"):
            NumeratorSpec(mode="other")

    def test_ancestral_without_seed_rejected(self):
        lat = linear_lattice([-1.0])
        spec = NumeratorSpec(mode="ancestral", numerator_lattice=lat)
        with pytest.raises(ValueError, match="seed"):
            resolve_numerator(spec, np.zeros((1, 2)))
