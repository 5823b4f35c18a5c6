"""Training plans over a partitioned dataset, and their estimator wrappers.

Single-stage training runs pairwise SGD over every retained block at once.
The two-stage plan first fits all factors the same way, then freezes the
course factors and refits only the current students' rows against their own
(fundamental-course) registrations, so the rows used for prediction are tuned
against the final course geometry.  In both plans a current student's
negatives never include advanced courses: that corner of the matrix is the
prediction target, and sampling it as a negative would teach the model to push
it down.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bpr import (
    INIT_SCALE,
    DependencyArrays,
    FactorModel,
    Hyperparameters,
    TrainingScope,
    build_scope,
    dependency_arrays,
    init_model,
    sgd_epoch,
)
from .data import Block, PartitionedDataset
from .ranking import ScoredRanking, candidate_pool, sort_ranking
from .seeding import stream_rng
from .transition import TransitionNetwork

ValidationScorer = Callable[[FactorModel], float]


def _course_indices(dataset: PartitionedDataset, course_ids) -> np.ndarray:
    return np.array(sorted(dataset.course_index[c] for c in course_ids), dtype=np.int64)


def stage_one_pools(dataset: PartitionedDataset) -> dict[int, np.ndarray]:
    """Negative pools for joint training.

    Graduated students may see any course as a negative; current students only
    non-advanced ones.
    """
    every = np.arange(dataset.num_courses, dtype=np.int64)
    non_advanced = _course_indices(
        dataset, set(dataset.course_index) - dataset.advanced_courses
    )
    pools: dict[int, np.ndarray] = {}
    for sid, s in dataset.student_index.items():
        pools[s] = non_advanced if sid in dataset.current_students else every
    return pools


def stage_two_pools(dataset: PartitionedDataset) -> dict[int, np.ndarray]:
    """Negative pools for the refit stage: fundamental courses only."""
    fundamental = _course_indices(dataset, dataset.fundamental_courses)
    return {s: fundamental for s in dataset.student_index.values()}


def _resolve_network(
    dataset: PartitionedDataset, network: TransitionNetwork | None
) -> DependencyArrays | None:
    if network is None:
        return None
    if any(isinstance(node, str) for node in network.nodes):
        network = network.relabel(dataset.course_index)
    return dependency_arrays(network, dataset.num_courses)


def _run_stage(
    model: FactorModel,
    positives: np.ndarray,
    scope: TrainingScope,
    dep: DependencyArrays | None,
    rng: np.random.Generator,
    epochs: int,
    observer=None,
    validation_scorer: ValidationScorer | None = None,
    patience: int = 3,
) -> list[float]:
    """Run SGD epochs, optionally stopping once validation stops improving."""
    history: list[float] = []
    best_score = -np.inf
    best_state: FactorModel | None = None
    since_best = 0
    for _ in range(epochs):
        history.append(
            sgd_epoch(model, positives, scope, network=dep, rng=rng, observer=observer)
        )
        if validation_scorer is None:
            continue
        score = validation_scorer(model)
        if score > best_score:
            best_score = score
            best_state = model.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                break
    if best_state is not None:
        model.student_factors[:] = best_state.student_factors
        model.course_factors[:] = best_state.course_factors
    return history


def train_single_stage(
    dataset: PartitionedDataset,
    hyper: Hyperparameters,
    network: TransitionNetwork | None = None,
    observer=None,
    validation_scorer: ValidationScorer | None = None,
    patience: int = 3,
) -> FactorModel:
    """Fit all factors in one joint stage over every retained block."""
    model = init_model(dataset.num_students, dataset.num_courses, hyper)
    positives = dataset.positive_pairs()
    scope = build_scope(dataset.num_students, positives, stage_one_pools(dataset))
    dep = _resolve_network(dataset, network)
    rng = stream_rng(hyper.seed, "stage1")
    _run_stage(model, positives, scope, dep, rng, hyper.epochs,
               observer, validation_scorer, patience)
    return model


def train_two_stage(
    dataset: PartitionedDataset,
    hyper: Hyperparameters,
    network: TransitionNetwork | None = None,
    stage2_epochs: int | None = None,
    reinit_current: bool = False,
    observer=None,
    validation_scorer: ValidationScorer | None = None,
    patience: int = 3,
) -> FactorModel:
    """Joint stage, then refit current students' rows against frozen courses.

    Current students' rows warm-start from the joint stage by default;
    ``reinit_current`` redraws them from the initializer instead.  The second
    stage draws positives and negatives from fundamental courses only and
    never touches course factors or graduated students' rows.
    """
    model = train_single_stage(dataset, hyper, network, observer,
                               validation_scorer, patience)
    current_pairs = dataset.positive_pairs(frozenset({Block.FUNDAMENTAL_CURRENT}))
    if current_pairs.shape[0] == 0:
        return model
    if reinit_current:
        redraw = stream_rng(hyper.seed, "init", "stage2")
        rows = sorted(
            dataset.student_index[sid] for sid in dataset.current_students
            if sid in dataset.student_index
        )
        model.student_factors[rows] = redraw.uniform(
            -INIT_SCALE, INIT_SCALE, size=(len(rows), hyper.n_factors)
        )
    scope = build_scope(
        dataset.num_students, current_pairs, stage_two_pools(dataset),
        update_courses=False,
    )
    rng = stream_rng(hyper.seed, "stage2")
    epochs = hyper.epochs if stage2_epochs is None else stage2_epochs
    _run_stage(model, current_pairs, scope, None, rng, epochs,
               observer, validation_scorer, patience)
    return model


def score_candidates(
    model: FactorModel,
    dataset: PartitionedDataset,
    student_id: str,
    candidates=None,
) -> ScoredRanking:
    """Inner-product scores for a student's candidate courses, best first."""
    if student_id not in dataset.student_index:
        raise KeyError(f"unknown student {student_id!r}")
    s = dataset.student_index[student_id]
    pool = candidate_pool(dataset, student_id, candidates)
    idx = np.array([dataset.course_index[c] for c in pool], dtype=np.int64)
    if idx.size == 0:
        return []
    values = model.course_factors[idx] @ model.student_factors[s]
    return sort_ranking({c: float(v) for c, v in zip(pool, values)})


class BprRanker(BaseEstimator):
    """Single-stage pairwise factorization recommender.

    Parameters mirror :class:`~ocrank.bpr.Hyperparameters`; ``fit`` takes a
    :class:`~ocrank.data.PartitionedDataset` and an optional course transition
    network for the dependency penalty.
    """

    def __init__(self, n_factors: int = 12, l2_reg: float = 0.05,
                 learning_rate: float = 0.05, graph_reg: float = 0.008,
                 epochs: int = 30, seed: int = 0):
        self.n_factors = n_factors
        self.l2_reg = l2_reg
        self.learning_rate = learning_rate
        self.graph_reg = graph_reg
        self.epochs = epochs
        self.seed = seed

    def _hyper(self) -> Hyperparameters:
        return Hyperparameters(
            n_factors=self.n_factors, l2_reg=self.l2_reg,
            learning_rate=self.learning_rate, graph_reg=self.graph_reg,
            epochs=self.epochs, seed=self.seed,
        )

    def _train(self, dataset: PartitionedDataset,
               network: TransitionNetwork | None) -> FactorModel:
        return train_single_stage(dataset, self._hyper(), network)

    def fit(self, dataset: PartitionedDataset,
            network: TransitionNetwork | None = None) -> "BprRanker":
        self.model_ = self._train(dataset, network)
        self.dataset_ = dataset
        return self

    def score_candidates(self, student_id: str,
                         candidates=None) -> ScoredRanking:
        """Scores for the candidate courses, best first.

        Candidates default to every indexed course the student has not taken.
        """
        check_is_fitted(self, "model_")
        return score_candidates(self.model_, self.dataset_, student_id, candidates)


class TwoStageBprRanker(BprRanker):
    """Two-stage variant: joint fit, then per-student refit on frozen courses."""

    def __init__(self, n_factors: int = 12, l2_reg: float = 0.05,
                 learning_rate: float = 0.05, graph_reg: float = 0.008,
                 epochs: int = 30, seed: int = 0,
                 stage2_epochs: int | None = None, reinit_current: bool = False):
        super().__init__(n_factors=n_factors, l2_reg=l2_reg,
                         learning_rate=learning_rate, graph_reg=graph_reg,
                         epochs=epochs, seed=seed)
        self.stage2_epochs = stage2_epochs
        self.reinit_current = reinit_current

    def _train(self, dataset: PartitionedDataset,
               network: TransitionNetwork | None) -> FactorModel:
        return train_two_stage(
            dataset, self._hyper(), network,
            stage2_epochs=self.stage2_epochs,
            reinit_current=self.reinit_current,
        )
