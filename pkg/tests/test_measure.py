import math

import numpy as np
import pytest

from latmmi.algorithms import determinize_best_alignment, enumerate_paths
from latmmi.lattice import Arc, Lattice, LatticeError, Path, path_score
from latmmi.measure import (
    PathPartition,
    build_grouping,
    check_inequality_13,
    check_inequality_14,
    check_normalization,
    measure_m,
    muhat_of_A,
    neg_log_muhat,
    run_measure_report,
)
from latmmi.objectives import NumeratorSpec, otf_mmi
from latmmi.testing import random_instance


def single_path_graph():
    arcs = (Arc(0, 1, 1, 1, -1.0),)
    return Lattice(num_frames=1, states=((0, 0), (1, 1)), start=0, finals=frozenset({1}), arcs=arcs)


def two_hypothesis_graph(s_a=-1.0, s_b=-2.0):
    arcs = (Arc(0, 1, 1, 1, s_a), Arc(0, 1, 2, 2, s_b))
    return Lattice(num_frames=1, states=((0, 0), (1, 1)), start=0, finals=frozenset({1}), arcs=arcs)


class TestMeasureM:
    def test_single_path_has_mass_one(self):
        lat = single_path_graph()
        path = Path.from_arcs(lat.arcs)
        assert measure_m(path, lat, np.zeros((1, 2))) == pytest.approx(1.0, abs=1e-12)

    def test_two_equal_paths_half_each(self):
        lat = two_hypothesis_graph(-1.0, -1.0)
        scores = np.zeros((1, 3))
        for arc in lat.arcs:
            assert measure_m(Path.from_arcs((arc,)), lat, scores) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force_normalized_weights(self, seed):
        lat, scores = random_instance(seed)
        pairs = enumerate_paths(lat, scores, 10_000)
        all_scores = np.array([s for _, s in pairs])
        m = all_scores.max()
        z = m + np.log(np.exp(all_scores - m).sum())
        for (p, s), expect in list(zip(pairs, np.exp(all_scores - z)))[:10]:
            assert abs(measure_m(p, lat, scores) - expect) <= 1e-12

    def test_foreign_path_rejected(self):
        lat = single_path_graph()
        foreign = Path.from_arcs((Arc(0, 1, 3, 1, -1.0),))
        with pytest.raises(LatticeError):
            measure_m(foreign, lat, np.zeros((1, 4)))


class TestNormalization:
    def test_single_path_residual_is_rounding_level(self):
        assert check_normalization(single_path_graph(), np.zeros((1, 2))) <= 1e-12

    @pytest.mark.parametrize("seed", range(100))
    def test_hundred_random_graphs(self, seed):
        lat, scores = random_instance(seed)
        assert check_normalization(lat, scores) <= 1e-9


def _grouping_for(lat, scores, ref_index=0):
    part = PathPartition.from_graph(lat)
    ref_path = part.paths[ref_index]
    return build_grouping(lat, scores, ref_path.word_sequence, ref_path, partition=part), part


class TestBuildGrouping:
    def test_two_singleton_hypotheses(self):
        lat = two_hypothesis_graph()
        scores = np.zeros((1, 3))
        g, _ = _grouping_for(lat, scores)
        assert g.reference_words == (1,)
        assert set(g.competitor_sets) == {(2,)}
        assert g.selected_competitors[(2,)].pdf_sequence == (2,)

    def test_argmax_selection_within_group(self):
        # one hypothesis with two alignments of unequal mass, plus a reference
        arcs = (
            Arc(0, 1, 1, 1, -0.5), Arc(1, 4, 1, 0, -0.5),
            Arc(0, 2, 2, 2, -0.3), Arc(2, 4, 2, 0, -0.3),   # B alignment, mass high
            Arc(0, 3, 3, 2, -1.5), Arc(3, 4, 3, 0, -1.5),   # B alignment, mass low
        )
        lat = Lattice(num_frames=2, states=((0, 0), (1, 1), (2, 1), (3, 1), (4, 2)),
                      start=0, finals=frozenset({4}), arcs=arcs)
        g, _ = _grouping_for(lat, np.zeros((2, 4)))
        assert g.selected_competitors[(2,)].pdf_sequence == (2, 2)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force_per_group_argmax(self, seed):
        lat, scores = random_instance(seed)
        g, part = _grouping_for(lat, scores)
        groups: dict = {}
        for p, s in enumerate_paths(lat, scores, 10_000):
            groups.setdefault(p.word_sequence, []).append((p, s))
        for w, members in groups.items():
            best_score = max(s for _, s in members)
            if w == g.reference_words:
                assert path_score(g.selected_reference_best, scores) == best_score
            else:
                assert path_score(g.selected_competitors[w], scores) == best_score

    def test_word_sequence_mismatch_rejected(self):
        lat = two_hypothesis_graph()
        path_b = Path.from_arcs((lat.arcs[1],))
        with pytest.raises(LatticeError, match="realizes"):
            build_grouping(lat, np.zeros((1, 3)), (1,), path_b)

    def test_partition_covers_all_paths(self):
        lat, scores = random_instance(3)
        g, part = _grouping_for(lat, scores)
        total = len(g.reference_set) + sum(len(v) for v in g.competitor_sets.values())
        assert total == len(part.paths) == lat.num_paths


class TestInequalities:
    def test_singleton_competitor_has_zero_residual(self):
        lat = two_hypothesis_graph()
        scores = np.zeros((1, 3))
        g, _ = _grouping_for(lat, scores)
        res = check_inequality_13(g, scores)
        assert res[(2,)] == pytest.approx(0.0, abs=1e-15)

    def test_two_equal_mass_alignments_residual_zero(self):
        arcs = (
            Arc(0, 1, 1, 1, -0.5), Arc(1, 4, 1, 0, -0.5),
            Arc(0, 2, 2, 2, -1.0), Arc(2, 4, 2, 0, -1.0),
            Arc(0, 3, 3, 2, -1.0), Arc(3, 4, 3, 0, -1.0),
        )
        lat = Lattice(num_frames=2, states=((0, 0), (1, 1), (2, 1), (3, 1), (4, 2)),
                      start=0, finals=frozenset({4}), arcs=arcs)
        scores = np.zeros((2, 4))
        g, _ = _grouping_for(lat, scores)
        assert check_inequality_13(g, scores)[(2,)] == pytest.approx(0.0, abs=1e-12)

    def test_singleton_reference_residual_zero(self):
        lat = two_hypothesis_graph()
        scores = np.zeros((1, 3))
        g, _ = _grouping_for(lat, scores)
        assert check_inequality_14(g, scores) == pytest.approx(0.0, abs=1e-15)

    def test_extra_reference_mass_gives_positive_residual(self):
        arcs = (
            Arc(0, 1, 1, 1, -0.5), Arc(1, 3, 1, 0, -0.5),
            Arc(0, 2, 2, 1, -1.0), Arc(2, 3, 2, 0, -1.0),  # second reference alignment
        )
        lat = Lattice(num_frames=2, states=((0, 0), (1, 1), (2, 1), (3, 2)),
                      start=0, finals=frozenset({3}), arcs=arcs)
        scores = np.zeros((2, 3))
        g, _ = _grouping_for(lat, scores)
        assert check_inequality_14(g, scores) > 0.0

    @pytest.mark.parametrize("seed", range(40))
    def test_randomized_sweep(self, seed):
        lat, scores = random_instance(seed)
        g, _ = _grouping_for(lat, scores, ref_index=seed % lat.num_paths)
        assert all(r >= -1e-9 for r in check_inequality_13(g, scores).values())
        assert check_inequality_14(g, scores) >= -1e-9

    def test_scores_mismatch_rejected(self):
        lat, scores = random_instance(1)
        g, _ = _grouping_for(lat, scores)
        with pytest.raises(LatticeError, match="different scores"):
            check_inequality_13(g, scores + 0.5)


class TestMuhat:
    def test_sole_hypothesis_gives_one(self):
        lat = single_path_graph()
        scores = np.zeros((1, 2))
        g, _ = _grouping_for(lat, scores)
        assert muhat_of_A(g, scores) == pytest.approx(1.0, abs=1e-12)
        assert neg_log_muhat(g, scores) == pytest.approx(0.0, abs=1e-12)

    def test_closed_form_two_hypotheses(self):
        lat = two_hypothesis_graph(-1.0, -2.0)
        scores = np.zeros((1, 3))
        g, _ = _grouping_for(lat, scores)
        expected = math.exp(-1) / (math.exp(-1) + math.exp(-2))
        assert muhat_of_A(g, scores) == pytest.approx(expected, abs=1e-12)
        assert neg_log_muhat(g, scores) == pytest.approx(0.313262, abs=1e-6)

    @pytest.mark.parametrize("seed", range(25))
    def test_neg_log_muhat_equals_otf_loss(self, seed):
        lat, scores = random_instance(seed)
        g, part = _grouping_for(lat, scores)
        ev = otf_mmi(NumeratorSpec(mode="fixed", fixed_path=g.selected_reference), lat, scores)
        assert abs(neg_log_muhat(g, scores) - ev.loss) <= 1e-9

    def test_exclude_reference_reading_differs(self):
        lat = two_hypothesis_graph(-1.0, -2.0)
        scores = np.zeros((1, 3))
        g, _ = _grouping_for(lat, scores)
        incl = muhat_of_A(g, scores, include_reference=True)
        excl = muhat_of_A(g, scores, include_reference=False)
        assert excl == pytest.approx(math.exp(-1) / math.exp(-2), abs=1e-9)
        assert incl < excl

    def test_empty_denominator_rejected(self):
        lat = single_path_graph()
        scores = np.zeros((1, 2))
        g, _ = _grouping_for(lat, scores)
        with pytest.raises(LatticeError, match="empty"):
            muhat_of_A(g, scores, include_reference=False)


class TestSelectionConsistency:
    @pytest.mark.parametrize("seed", range(15))
    def test_bhat_matches_determinize_retained_path(self, seed):
        lat, scores = random_instance(seed)
        g, _ = _grouping_for(lat, scores)
        det = determinize_best_alignment(lat, scores)
        retained = {p.word_sequence: s for p, s in enumerate_paths(det, scores, 10_000)}
        for w, bhat in g.selected_competitors.items():
            assert retained[w] == path_score(bhat, scores)
        assert retained[g.reference_words] == path_score(g.selected_reference_best, scores)


def test_measure_report_round_trip():
    lat, scores = random_instance(8)
    g, part = _grouping_for(lat, scores)
    ev = otf_mmi(NumeratorSpec(mode="fixed", fixed_path=g.selected_reference), lat, scores)
    rep = run_measure_report(lat, scores, g, otf_loss=ev.loss)
    assert rep.all_ok
    assert rep.muhat_loss_gap <= 1e-9
    assert abs(sum(rep.m_values.values()) - 1.0) <= 1e-9
    assert set(rep.mu) == {"A"} | {"B:" + ",".join(map(str, w)) for w in g.competitor_sets}
    assert rep.muhat_A == pytest.approx(muhat_of_A(g, scores), abs=1e-15)
