"""One-command ablation: fit every recommender on shared data and compare AUC.

Each seed builds one synthetic dataset, holds out the newest cohort's final
year as test truth, and fits the popularity baseline, single-stage and
two-stage factor models (the latter with and without the dependency penalty),
and the transition-walk recommender on identical inputs.  The score ensemble
is trained on a separate validation split (the middle cohort, with the newest
cohort's records removed) so its pair labels never touch test truth, then
applied to the test-split base rankings.  Results come back per seed plus
seed-averaged, which is the shape the directional comparisons need.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import PopularityRecommender
from .data import PartitionedDataset, SyntheticConfig, generate_synthetic, prepare_dataset
from .ensemble import RankSvmEnsemble, build_features, build_training_pairs
from .evaluation import EvaluationReport, evaluate
from .pagerank import PageRankRecommender
from .ranking import ScoredRanking, candidate_pool
from .transition import TransitionNetwork, apply_threshold, build_network
from .two_stage import BprRanker, TwoStageBprRanker

MODEL_NAMES = ("popularity", "bpr", "two_stage", "two_stage_cdr", "ppr", "ensemble")


@dataclass(frozen=True)
class AblationConfig:
    """Everything one ablation run depends on.

    ``stage2_epochs`` and ``learning_rate`` were picked on the validation
    split; the remaining knobs keep the library defaults.
    """

    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    n_factors: int = 12
    l2_reg: float = 0.05
    learning_rate: float = 0.05
    graph_reg: float = 0.008
    epochs: int = 30
    stage2_epochs: int = 10
    edge_threshold: float = 0.03
    gamma: float = 0.7
    ensemble_reg_c: float = 1.0
    ensemble_epochs: int = 50

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.data.num_cohorts < 3:
            raise ValueError(
                "ablation needs >= 3 cohorts: one current cohort for the test "
                "split and one for the validation split, each with graduated "
                "students behind it"
            )


@dataclass(frozen=True)
class SeedOutcome:
    """Mean held-out AUC per model for one seed."""

    seed: int
    mean_auc: dict[str, float]
    ensemble_weight: tuple[float, float]

    def __post_init__(self) -> None:
        missing = set(MODEL_NAMES) - set(self.mean_auc)
        if missing:
            raise ValueError(f"missing model results: {sorted(missing)}")


@dataclass(frozen=True)
class AblationSummary:
    outcomes: tuple[SeedOutcome, ...]

    def mean(self, name: str) -> float:
        if name not in MODEL_NAMES:
            raise KeyError(f"unknown model {name!r}")
        return float(np.mean([o.mean_auc[name] for o in self.outcomes]))

    @property
    def means(self) -> dict[str, float]:
        return {name: self.mean(name) for name in MODEL_NAMES}

    def table(self) -> str:
        """Seed-by-model text table with a trailing mean row."""
        width = max(len(n) for n in MODEL_NAMES) + 2
        header = "seed".ljust(6) + "".join(n.rjust(width) for n in MODEL_NAMES)
        lines = [header]
        for out in self.outcomes:
            cells = "".join(f"{out.mean_auc[n]:{width}.4f}" for n in MODEL_NAMES)
            lines.append(f"{out.seed:<6d}" + cells)
        mean_cells = "".join(f"{self.mean(n):{width}.4f}" for n in MODEL_NAMES)
        lines.append("mean".ljust(6) + mean_cells)
        return "\n".join(lines)


class _BlendedRecommender:
    """Applies a trained score blender on top of two fitted base rankers."""

    def __init__(self, blender: RankSvmEnsemble, cf, walk) -> None:
        self._blender = blender
        self._cf = cf
        self._walk = walk

    def score_candidates(self, student_id: str, candidates=None) -> ScoredRanking:
        return self._blender.rank(
            self._cf.score_candidates(student_id, candidates),
            self._walk.score_candidates(student_id, candidates),
        )


def _thresholded_network(
    dataset: PartitionedDataset, threshold: float
) -> TransitionNetwork:
    return apply_threshold(build_network(dataset.observed), threshold)


def _collect_features(dataset, truth, cf, walk):
    features = {}
    for sid in sorted(dataset.current_students):
        try:
            features[sid] = build_features(
                cf.score_candidates(sid),
                walk.score_candidates(sid),
                candidate_pool(dataset, sid),
            )
        except (KeyError, ValueError):
            continue
    return features


def run_seed(config: AblationConfig, seed: int) -> SeedOutcome:
    """Train and evaluate the whole model family for one seed."""
    records = generate_synthetic(config.data, seed)
    last_cohort = config.data.first_cohort_year + config.data.num_cohorts - 1
    dataset, truth = prepare_dataset(records, last_cohort)
    val_records = [r for r in records if r.cohort_year != last_cohort]
    val_dataset, val_truth = prepare_dataset(val_records, last_cohort - 1)

    network = _thresholded_network(dataset, config.edge_threshold)
    val_network = _thresholded_network(val_dataset, config.edge_threshold)

    factor_kw = dict(
        n_factors=config.n_factors, l2_reg=config.l2_reg,
        learning_rate=config.learning_rate, epochs=config.epochs, seed=seed,
    )
    two_stage_kw = dict(stage2_epochs=config.stage2_epochs, **factor_kw)
    cdr = TwoStageBprRanker(graph_reg=config.graph_reg, **two_stage_kw)
    walk = PageRankRecommender(gamma=config.gamma, threshold=config.edge_threshold)
    models = {
        "popularity": PopularityRecommender().fit(dataset),
        "bpr": BprRanker(graph_reg=0.0, **factor_kw).fit(dataset),
        "two_stage": TwoStageBprRanker(graph_reg=0.0, **two_stage_kw).fit(dataset),
        "two_stage_cdr": cdr.fit(dataset, network),
        "ppr": walk.fit(dataset, network),
    }

    val_cf = TwoStageBprRanker(graph_reg=config.graph_reg, **two_stage_kw)
    val_cf.fit(val_dataset, val_network)
    val_walk = PageRankRecommender(
        gamma=config.gamma, threshold=config.edge_threshold
    ).fit(val_dataset, val_network)
    features = _collect_features(val_dataset, val_truth, val_cf, val_walk)
    pairs = build_training_pairs(features, val_truth, seed=seed)
    blender = RankSvmEnsemble(
        reg_c=config.ensemble_reg_c, epochs=config.ensemble_epochs, seed=seed
    ).fit(pairs)
    models["ensemble"] = _BlendedRecommender(blender, cdr, walk)

    reports: dict[str, EvaluationReport] = {
        name: evaluate(model, dataset, truth) for name, model in models.items()
    }
    weight = tuple(float(v) for v in blender.model_.weight)
    return SeedOutcome(
        seed=seed,
        mean_auc={name: rep.mean_auc for name, rep in reports.items()},
        ensemble_weight=weight,  # type: ignore[arg-type]
    )


def run_ablation(config: AblationConfig | None = None) -> AblationSummary:
    config = AblationConfig() if config is None else config
    return AblationSummary(
        outcomes=tuple(run_seed(config, seed) for seed in config.seeds)
    )
