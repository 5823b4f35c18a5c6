"""Feature plumbing and the pairwise SVM blender."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ocrank.ensemble import (
    FeatureVector,
    RankSvmEnsemble,
    RankSvmModel,
    build_features,
    build_training_pairs,
    ensemble_rank,
    load_ensemble,
    save_ensemble,
    train_ranksvm,
)
from ocrank.ranking import sort_ranking


def fv(course, cf, ppr):
    return FeatureVector(course, cf, ppr)


class TestBuildFeatures:
    def test_single_candidate_is_centered(self):
        rows = build_features([("a", 7.0)], [("a", 0.9)], ["a"])
        assert rows == [fv("a", 0.5, 0.5)]

    def test_minmax_endpoints(self):
        rows = build_features([("a", 1.0), ("b", 3.0)], [], ["a", "b"])
        by_id = {r.course_id: r for r in rows}
        assert by_id["a"].cf == 0.0
        assert by_id["b"].cf == 1.0

    def test_missing_walk_mass_is_zero_raw(self):
        rows = build_features(
            [("a", 1.0), ("b", 2.0)], [("a", 0.2)], ["a", "b"]
        )
        by_id = {r.course_id: r for r in rows}
        assert by_id["a"].ppr == 1.0  # 0.2 is the max once b falls to 0
        assert by_id["b"].ppr == 0.0

    def test_missing_cf_score_rejected(self):
        with pytest.raises(ValueError, match="missing a CF score"):
            build_features([("a", 1.0)], [], ["a", "b"])

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValueError, match="empty candidate"):
            build_features([("a", 1.0)], [], [])

    @given(st.lists(st.tuples(st.floats(-50, 50), st.floats(0, 1)),
                    min_size=1, max_size=12))
    def test_features_always_land_in_unit_square(self, raw):
        candidates = [f"c{k}" for k in range(len(raw))]
        cf = [(c, v) for c, (v, _) in zip(candidates, raw)]
        ppr = [(c, m) for c, (_, m) in zip(candidates, raw)]
        for row in build_features(cf, ppr, candidates):
            assert 0.0 <= row.cf <= 1.0
            assert 0.0 <= row.ppr <= 1.0


def separable_pairs():
    """x_pos beats x_neg on the first feature by at least 1.0."""
    rng = np.random.default_rng(50)
    pairs = []
    for _ in range(8):
        lo = float(rng.uniform(0.0, 0.4))
        hi = lo + float(rng.uniform(1.0, 1.6))
        other = float(rng.uniform(0.0, 1.0))
        pairs.append((fv("p", hi, other), fv("n", lo, other)))
    return pairs


class TestTrainRankSvm:
    def test_separable_direction_with_zero_hinge(self):
        model = train_ranksvm(separable_pairs(), reg_c=10.0, epochs=200, seed=1)
        assert model.trained
        assert model.weight[0] > 0.0
        diffs = np.array([p.as_array() - n.as_array() for p, n in separable_pairs()])
        assert np.all(diffs @ model.weight >= 1.0)

    def test_identical_pair_members_keep_weights_at_zero(self):
        x = fv("c", 0.4, 0.6)
        model = train_ranksvm([(x, x)] * 4, reg_c=1.0, epochs=20, seed=3)
        assert np.array_equal(model.weight, np.zeros(2))
        # Each degenerate pair contributes a constant hinge of 1.
        assert model.objective_history[-1] == pytest.approx(4.0)

    def test_two_feature_toy_set_is_fully_ordered(self):
        pairs = [
            (fv("p", 0.9, 0.8), fv("n", 0.2, 0.1)),
            (fv("p", 0.8, 0.9), fv("n", 0.1, 0.3)),
            (fv("p", 0.7, 0.6), fv("n", 0.3, 0.2)),
            (fv("p", 0.95, 0.7), fv("n", 0.25, 0.15)),
            (fv("p", 0.85, 0.75), fv("n", 0.15, 0.05)),
            (fv("p", 0.75, 0.85), fv("n", 0.05, 0.25)),
            (fv("p", 0.9, 0.65), fv("n", 0.35, 0.1)),
            (fv("p", 0.8, 0.95), fv("n", 0.1, 0.35)),
        ]
        model = train_ranksvm(pairs, reg_c=5.0, epochs=100, seed=2)
        ordered = sum(
            1 for pos, neg in pairs if model.decision(pos) > model.decision(neg)
        )
        assert ordered == len(pairs)

    def test_swapping_all_pairs_negates_the_model(self):
        pairs = separable_pairs()
        forward = train_ranksvm(pairs, reg_c=2.0, epochs=40, seed=9)
        backward = train_ranksvm(
            [(n, p) for p, n in pairs], reg_c=2.0, epochs=40, seed=9
        )
        assert np.array_equal(backward.weight, -forward.weight)

    def test_deterministic(self):
        pairs = separable_pairs()
        a = train_ranksvm(pairs, reg_c=1.0, epochs=30, seed=4)
        b = train_ranksvm(pairs, reg_c=1.0, epochs=30, seed=4)
        assert np.array_equal(a.weight, b.weight)

    def test_best_objective_never_increases(self):
        model = train_ranksvm(separable_pairs(), reg_c=1.0, epochs=80, seed=5)
        running = np.minimum.accumulate(model.objective_history)
        best = _objective_of(model)
        assert best == running[-1]

    def test_non_finite_features_abort(self):
        bad = [(fv("p", float("inf"), 0.0), fv("n", 0.0, 0.0))]
        with pytest.raises(FloatingPointError):
            train_ranksvm(bad, reg_c=1.0, epochs=1)

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            train_ranksvm([], reg_c=1.0)
        pair = [(fv("p", 1, 1), fv("n", 0, 0))]
        with pytest.raises(ValueError):
            train_ranksvm(pair, reg_c=0.0)
        with pytest.raises(ValueError):
            train_ranksvm(pair, epochs=0)


def _objective_of(model):
    # Recompute the hinge objective at the stored best weights.
    return min(model.objective_history)


class TestEnsembleRank:
    CANDS = [fv("a", 1.0, 0.0), fv("b", 0.6, 0.3), fv("c", 0.0, 1.0)]

    def manual(self, w0, w1):
        return RankSvmModel(weight=np.array([w0, w1]), reg_c=1.0, trained=True)

    def test_cf_projection(self):
        got = ensemble_rank(self.manual(1.0, 0.0), self.CANDS)
        want = sort_ranking({f.course_id: f.cf for f in self.CANDS})
        assert [c for c, _ in got] == [c for c, _ in want]

    def test_ppr_projection(self):
        got = ensemble_rank(self.manual(0.0, 1.0), self.CANDS)
        want = sort_ranking({f.course_id: f.ppr for f in self.CANDS})
        assert [c for c, _ in got] == [c for c, _ in want]

    def test_balanced_tie_breaks_by_id(self):
        rows = [fv("zz", 1.0, 0.0), fv("aa", 0.0, 1.0)]
        got = ensemble_rank(self.manual(0.5, 0.5), rows)
        assert [c for c, _ in got] == ["aa", "zz"]

    def test_common_positive_scaling_preserves_order(self):
        model = self.manual(0.7, 0.4)
        base = [c for c, _ in ensemble_rank(model, self.CANDS)]
        scaled = [
            fv(f.course_id, 3.5 * f.cf, 3.5 * f.ppr) for f in self.CANDS
        ]
        assert [c for c, _ in ensemble_rank(model, scaled)] == base

    def test_untrained_model_rejected(self):
        model = RankSvmModel(weight=np.zeros(2), reg_c=1.0, trained=False)
        with pytest.raises(ValueError, match="not trained"):
            ensemble_rank(model, self.CANDS)


class TestPairsAndIO:
    def test_build_training_pairs_one_negative_per_positive(self):
        rows = {
            "s1": [fv("a", 0.1, 0.2), fv("b", 0.9, 0.8), fv("c", 0.4, 0.3)],
            "s2": [fv("a", 0.5, 0.5)],  # no negatives: skipped
        }
        heldout = {"s1": frozenset({"b", "c"}), "s2": frozenset({"a"})}
        pairs = build_training_pairs(rows, heldout, seed=0)
        assert len(pairs) == 2
        for pos, neg in pairs:
            assert pos.course_id in {"b", "c"}
            assert neg.course_id == "a"

    def test_build_training_pairs_deterministic(self):
        rng = np.random.default_rng(8)
        rows = {
            f"s{k}": [fv(f"c{j}", float(rng.random()), float(rng.random()))
                      for j in range(6)]
            for k in range(4)
        }
        heldout = {f"s{k}": frozenset({"c0", "c3"}) for k in range(4)}
        a = build_training_pairs(rows, heldout, seed=13)
        b = build_training_pairs(rows, heldout, seed=13)
        assert a == b
        assert len(a) == 8

    def test_roundtrip(self, tmp_path):
        model = RankSvmModel(
            weight=np.array([1 / 3, -2 / 7]), reg_c=2.5, trained=True
        )
        path = tmp_path / "blend.txt"
        save_ensemble(model, path)
        loaded = load_ensemble(path)
        assert np.array_equal(loaded.weight, model.weight)
        assert loaded.reg_c == model.reg_c
        assert loaded.trained

    def test_save_untrained_rejected(self, tmp_path):
        model = RankSvmModel(weight=np.zeros(2), reg_c=1.0)
        with pytest.raises(ValueError):
            save_ensemble(model, tmp_path / "x.txt")

    def test_load_rejects_other_formats(self, tmp_path):
        path = tmp_path / "x.txt"
        path.write_text("something-else v1 0.0 0.0 1.0\n")
        with pytest.raises(ValueError, match="not a"):
            load_ensemble(path)
        path.write_text("ocrank-ensemble v1 0.0 zero 1.0\n")
        with pytest.raises(ValueError, match="bad numeric"):
            load_ensemble(path)


class TestRankSvmEnsembleEstimator:
    def test_params_roundtrip(self):
        est = RankSvmEnsemble(reg_c=3.0, epochs=10, seed=2)
        assert clone(est).get_params() == est.get_params()

    def test_requires_fit(self):
        with pytest.raises(NotFittedError):
            RankSvmEnsemble().rank([("a", 1.0)], [("a", 0.5)])

    def test_fit_and_rank(self):
        est = RankSvmEnsemble(reg_c=5.0, epochs=50, seed=1).fit(separable_pairs())
        cf = [("a", 0.9), ("b", 0.1), ("c", 0.5)]
        ppr = [("a", 0.2), ("b", 0.3)]
        ranking = est.rank(cf, ppr)
        assert {c for c, _ in ranking} == {"a", "b", "c"}
        scores = [v for _, v in ranking]
        assert scores == sorted(scores, reverse=True)
