"""Blend factor-model scores with walk mass via a linear pairwise SVM.

Both base scores live on incompatible scales (inner products vs probability
mass), so each student's candidate list is min-max rescaled per column before
anything is compared.  A two-weight RankSVM is then trained on (preferred,
other) feature pairs by seeded subgradient descent on

    (1/2) * ||w||^2  +  reg_c * sum_p max(0, 1 - w . (x_pos_p - x_neg_p))

with step size 1/(reg_c * t) and best-iterate tracking, which is plenty for a
two-dimensional weight vector.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence, Set
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ranking import ScoredRanking, minmax_normalize, sort_ranking
from .seeding import stream_rng

ENSEMBLE_FORMAT = "ocrank-ensemble"
ENSEMBLE_VERSION = "v1"


@dataclass(frozen=True)
class FeatureVector:
    """One candidate course as (normalized CF score, normalized walk mass)."""

    course_id: str
    cf: float
    ppr: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cf, self.ppr], dtype=np.float64)


@dataclass(frozen=True)
class RankSvmModel:
    weight: np.ndarray
    reg_c: float
    trained: bool = False
    objective_history: tuple[float, ...] = field(default=(), repr=False)

    def decision(self, features: FeatureVector) -> float:
        return float(self.weight @ features.as_array())


def build_features(
    cf_ranking: ScoredRanking,
    ppr_ranking: ScoredRanking,
    candidates: Iterable[str],
) -> list[FeatureVector]:
    """Per-student feature rows over the candidate list, min-max normalized.

    Candidates missing from the walk ranking contribute zero raw mass; a
    candidate missing a CF score is an error.
    """
    pool = list(candidates)
    if not pool:
        raise ValueError("empty candidate list")
    cf = dict(cf_ranking)
    ppr = dict(ppr_ranking)
    absent = [c for c in pool if c not in cf]
    if absent:
        raise ValueError(f"candidates missing a CF score: {absent}")
    cf_norm = minmax_normalize({c: cf[c] for c in pool})
    ppr_norm = minmax_normalize({c: ppr.get(c, 0.0) for c in pool})
    return [FeatureVector(c, cf_norm[c], ppr_norm[c]) for c in pool]


def pair_differences(
    pairs: Sequence[tuple[FeatureVector, FeatureVector]],
) -> np.ndarray:
    return np.array(
        [pos.as_array() - neg.as_array() for pos, neg in pairs], dtype=np.float64
    )


def _objective(w: np.ndarray, diffs: np.ndarray, reg_c: float) -> float:
    hinge = np.maximum(0.0, 1.0 - diffs @ w)
    return float(0.5 * (w @ w) + reg_c * hinge.sum())


def train_ranksvm(
    pairs: Sequence[tuple[FeatureVector, FeatureVector]],
    reg_c: float = 1.0,
    epochs: int = 50,
    seed: int = 0,
) -> RankSvmModel:
    """Fit the pairwise hinge objective by seeded stochastic subgradient."""
    if not pairs:
        raise ValueError("no training pairs")
    if reg_c <= 0.0:
        raise ValueError("reg_c must be positive")
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    diffs = pair_differences(pairs)
    if not np.isfinite(diffs).all():
        raise FloatingPointError("non-finite feature difference")
    n = len(diffs)
    rng = stream_rng(seed, "ensemble")
    w = np.zeros(2, dtype=np.float64)
    best_w = w.copy()
    best_obj = _objective(w, diffs, reg_c)
    history = [best_obj]
    t = 0
    for _ in range(epochs):
        for p in rng.permutation(n):
            t += 1
            d = diffs[p]
            grad = w / n
            if float(w @ d) < 1.0:
                grad = grad - reg_c * d
            w = w - grad / (reg_c * t)
        if not np.isfinite(w).all():
            raise FloatingPointError("rank-svm weights diverged")
        obj = _objective(w, diffs, reg_c)
        history.append(obj)
        if obj < best_obj:
            best_obj = obj
            best_w = w.copy()
    return RankSvmModel(
        weight=best_w, reg_c=reg_c, trained=True,
        objective_history=tuple(history),
    )


def ensemble_rank(
    model: RankSvmModel, features: Sequence[FeatureVector]
) -> ScoredRanking:
    """Candidates by descending decision value, ties by course id."""
    if not model.trained:
        raise ValueError("model is not trained")
    return sort_ranking((f.course_id, model.decision(f)) for f in features)


def build_training_pairs(
    features_by_student: Mapping[str, Sequence[FeatureVector]],
    heldout: Mapping[str, Set[str]],
    seed: int = 0,
) -> list[tuple[FeatureVector, FeatureVector]]:
    """One (held-out positive, sampled negative) pair per positive."""
    rng = stream_rng(seed, "ensemble-pairs")
    pairs: list[tuple[FeatureVector, FeatureVector]] = []
    for sid in sorted(features_by_student):
        rows = features_by_student[sid]
        wanted = heldout.get(sid, frozenset())
        positives = [f for f in rows if f.course_id in wanted]
        negatives = [f for f in rows if f.course_id not in wanted]
        if not positives or not negatives:
            continue
        for pos in positives:
            neg = negatives[int(rng.integers(0, len(negatives)))]
            pairs.append((pos, neg))
    return pairs


def save_ensemble(model: RankSvmModel, path: str | Path) -> None:
    """Single line: `ocrank-ensemble v1 w0 w1 reg_c`."""
    if not model.trained:
        raise ValueError("refusing to save an untrained model")
    w0, w1 = (float(v) for v in model.weight)
    line = f"{ENSEMBLE_FORMAT} {ENSEMBLE_VERSION} {w0!r} {w1!r} {model.reg_c!r}\n"
    Path(path).write_text(line, encoding="utf-8")


def load_ensemble(path: str | Path) -> RankSvmModel:
    text = Path(path).read_text(encoding="utf-8").strip()
    parts = text.split()
    if len(parts) != 5 or parts[0] != ENSEMBLE_FORMAT or parts[1] != ENSEMBLE_VERSION:
        raise ValueError(f"{path}: not a {ENSEMBLE_FORMAT} {ENSEMBLE_VERSION} file")
    try:
        w0, w1, reg_c = (float(v) for v in parts[2:])
    except ValueError as err:
        raise ValueError(f"{path}: bad numeric field") from err
    return RankSvmModel(weight=np.array([w0, w1]), reg_c=reg_c, trained=True)


class RankSvmEnsemble(BaseEstimator):
    """Learns how much to trust each base ranker, then blends their scores."""

    def __init__(self, reg_c: float = 1.0, epochs: int = 50, seed: int = 0) -> None:
        self.reg_c = reg_c
        self.epochs = epochs
        self.seed = seed

    def fit(
        self, pairs: Sequence[tuple[FeatureVector, FeatureVector]]
    ) -> "RankSvmEnsemble":
        self.model_ = train_ranksvm(
            pairs, reg_c=self.reg_c, epochs=self.epochs, seed=self.seed
        )
        return self

    def rank(
        self,
        cf_ranking: ScoredRanking,
        ppr_ranking: ScoredRanking,
        candidates: Iterable[str] | None = None,
    ) -> ScoredRanking:
        check_is_fitted(self, "model_")
        pool = [c for c, _ in cf_ranking] if candidates is None else candidates
        return ensemble_rank(self.model_, build_features(cf_ranking, ppr_ranking, pool))
