"""AUC harness vs a brute-force pair counter, plus the paired tests."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ocrank.data import prepare_dataset
from ocrank.evaluation import (
    EvaluationReport,
    auc,
    evaluate,
    evaluate_rankings,
    load_report,
    load_scores,
    load_truth,
    paired_test,
    save_report,
    save_scores,
    save_truth,
)


def brute_auc(ranking, positives):
    """Exhaustive count over every (positive, negative) pair."""
    pos = [s for c, s in ranking if c in positives]
    neg = [s for c, s in ranking if c not in positives]
    wins = sum(1 for p in pos for n in neg if p > n)
    ties = sum(1 for p in pos for n in neg if p == n)
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def labelled_instance():
    """Scores drawn from a coarse grid (to force ties) plus a label split."""
    return st.lists(
        st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40
    ).filter(
        lambda rows: any(flag for _, flag in rows) and not all(flag for _, flag in rows)
    )


class TestAuc:
    def test_perfect_ranking(self):
        ranking = [("a", 3.0), ("b", 2.0), ("c", 1.0), ("d", 0.5)]
        assert auc(ranking, {"a", "b"}) == 1.0

    def test_inverted_ranking(self):
        ranking = [("a", 3.0), ("b", 2.0), ("c", 1.0)]
        assert auc(ranking, {"c"}) == 0.0

    def test_constant_scores_hit_half(self):
        ranking = [(c, 0.25) for c in "abcdef"]
        assert auc(ranking, {"a", "d"}) == 0.5

    def test_worked_four_candidate_case(self):
        ranking = [("c1", 0.9), ("c4", 0.8), ("c3", 0.7), ("c2", 0.5)]
        assert auc(ranking, {"c1", "c3"}) == 0.75

    @given(labelled_instance())
    def test_matches_brute_force_exactly(self, rows):
        ranking = [(f"c{k:03d}", level / 4.0) for k, (level, _) in enumerate(rows)]
        positives = {f"c{k:03d}" for k, (_, flag) in enumerate(rows) if flag}
        assert auc(ranking, positives) == brute_auc(ranking, positives)

    @given(labelled_instance())
    def test_monotone_transform_invariance(self, rows):
        ranking = [(f"c{k:03d}", level / 4.0) for k, (level, _) in enumerate(rows)]
        positives = {f"c{k:03d}" for k, (_, flag) in enumerate(rows) if flag}
        squashed = [(c, math.tanh(2.0 * s + 1.0)) for c, s in ranking]
        assert auc(squashed, positives) == auc(ranking, positives)

    @given(labelled_instance())
    def test_score_reversal_complements(self, rows):
        ranking = [(f"c{k:03d}", level / 4.0) for k, (level, _) in enumerate(rows)]
        positives = {f"c{k:03d}" for k, (_, flag) in enumerate(rows) if flag}
        flipped = [(c, -s) for c, s in ranking]
        assert auc(flipped, positives) == pytest.approx(
            1.0 - auc(ranking, positives), abs=1e-12
        )

    def test_degenerate_label_sets_rejected(self):
        ranking = [("a", 1.0), ("b", 0.5)]
        with pytest.raises(ValueError):
            auc(ranking, {"a", "b"})
        with pytest.raises(ValueError):
            auc(ranking, set())
        with pytest.raises(ValueError):
            auc([], {"a"})


class _FixedScores:
    def __init__(self, rankings):
        self.rankings = rankings

    def score_candidates(self, student_id, candidates=None):
        return self.rankings[student_id]


@pytest.fixture(scope="module")
def popularity_setup(small_synthetic):
    dataset, truth = prepare_dataset(small_synthetic, target_cohort=2009)
    return dataset, truth


class TestEvaluate:
    def test_oracle_recommender_scores_one(self, popularity_setup):
        dataset, truth = popularity_setup
        rankings = {}
        for sid in dataset.current_students:
            pool = sorted(set(dataset.course_index) - dataset.taken_courses(sid))
            rankings[sid] = [(c, 1.0 if c in truth[sid] else 0.0) for c in pool]
        report = evaluate(_FixedScores(rankings), dataset, truth)
        assert report.mean_auc == 1.0
        assert report.num_skipped == 0
        assert set(report.per_student_auc) == set(dataset.current_students)

    def test_constant_recommender_scores_half(self, popularity_setup):
        dataset, truth = popularity_setup
        rankings = {
            sid: [(c, 0.0) for c in sorted(set(dataset.course_index)
                                           - dataset.taken_courses(sid))]
            for sid in dataset.current_students
        }
        report = evaluate(_FixedScores(rankings), dataset, truth)
        assert report.mean_auc == 0.5

    def test_random_scorer_sits_near_half(self):
        rng = np.random.default_rng(402)
        rankings, truth = {}, {}
        for k in range(200):
            sid = f"s{k:03d}"
            courses = [f"c{j:02d}" for j in range(40)]
            rankings[sid] = [(c, float(rng.random())) for c in courses]
            truth[sid] = frozenset(courses[j] for j in rng.choice(40, 6, replace=False))
        report = evaluate_rankings(rankings, truth)
        assert abs(report.mean_auc - 0.5) < 0.05

    def test_students_without_positives_are_skipped(self):
        rankings = {"s1": [("a", 1.0), ("b", 0.0)], "s2": [("a", 1.0), ("b", 0.0)]}
        truth = {"s1": frozenset({"a"})}
        report = evaluate_rankings(rankings, truth)
        assert report.per_student_auc == {"s1": 1.0}
        assert report.num_skipped == 1
        assert report.skipped_students == ("s2",)

    def test_recommender_failures_are_skipped(self, popularity_setup):
        dataset, truth = popularity_setup

        class Flaky:
            def score_candidates(self, student_id, candidates=None):
                raise KeyError(student_id)

        report = evaluate(Flaky(), dataset, truth)
        assert report.per_student_auc == {}
        assert report.num_skipped == len(dataset.current_students)
        assert math.isnan(report.mean_auc)

    def test_mean_matches_recomputation(self, popularity_setup):
        dataset, truth = popularity_setup
        rng = np.random.default_rng(7)
        rankings = {
            sid: [(c, float(rng.random()))
                  for c in sorted(set(dataset.course_index)
                                  - dataset.taken_courses(sid))]
            for sid in dataset.current_students
        }
        report = evaluate_rankings(rankings, truth)
        again = np.mean(list(report.per_student_auc.values()))
        assert abs(report.mean_auc - again) < 1e-12


class TestPairedTest:
    def test_identical_samples(self):
        values = [0.5, 0.6, 0.7]
        assert paired_test(values, values) == (1.0, 1.0)

    def test_uniform_positive_shift(self):
        a = np.linspace(0.3, 0.8, 30)
        b = a + 0.1
        t_p, sign_p = paired_test(a, b)
        assert t_p == 0.0
        assert sign_p == 2.0**-30

    def test_uniform_negative_shift(self):
        # Shift by a power of two so every difference is exactly equal.
        a = np.linspace(0.3, 0.8, 10)
        t_p, sign_p = paired_test(a, a - 0.25)
        assert t_p == 1.0
        assert sign_p == 1.0

    def test_t_p_value_matches_direct_formula(self):
        rng = np.random.default_rng(12)
        a = rng.uniform(0.4, 0.6, size=25)
        b = a + rng.normal(0.01, 0.02, size=25)
        diffs = b - a
        t_stat = diffs.mean() / (diffs.std(ddof=1) / math.sqrt(len(diffs)))
        expect = float(stats.t.sf(t_stat, len(diffs) - 1))
        assert paired_test(a, b).t_p_value == pytest.approx(expect, rel=1e-12)

    def test_sign_p_matches_binomial_oracle(self):
        a = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5]
        b = [0.6, 0.4, 0.7, 0.5, 0.9, 0.8]  # 4 wins, 1 loss, 1 zero
        _, sign_p = paired_test(a, b)
        expect = stats.binomtest(4, 5, alternative="greater").pvalue
        assert sign_p == pytest.approx(expect, rel=1e-12)

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            paired_test([0.1, 0.2], [0.1])
        with pytest.raises(ValueError):
            paired_test([0.1], [0.2])


class TestReportFiles:
    def test_report_roundtrip_is_exact(self, tmp_path):
        report = EvaluationReport.from_scores(
            {"s1": 1 / 3, "s2": 0.75, "s3": 1 / 7}, skipped=["s9"]
        )
        path = tmp_path / "report.tsv"
        save_report(report, path)
        loaded = load_report(path)
        assert loaded.per_student_auc == report.per_student_auc
        assert loaded.mean_auc == report.mean_auc

    def test_report_rejects_malformed_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("s1\t0.5\nbroken line\n")
        with pytest.raises(ValueError, match="bad.tsv:2"):
            load_report(path)

    def test_scores_roundtrip_preserves_order(self, tmp_path):
        rankings = {"s1": [("b", 0.9), ("a", 0.9), ("c", 1 / 3)]}
        path = tmp_path / "scores.tsv"
        save_scores(rankings, path)
        assert load_scores(path) == rankings

    def test_scores_reject_bad_value(self, tmp_path):
        path = tmp_path / "scores.tsv"
        path.write_text("s1\ta\tnot-a-number\n")
        with pytest.raises(ValueError, match="bad score"):
            load_scores(path)

    def test_truth_roundtrip(self, tmp_path):
        truth = {"s1": frozenset({"a", "b"}), "s2": frozenset({"c"})}
        path = tmp_path / "truth.tsv"
        save_truth(truth, path)
        assert load_truth(path) == truth
