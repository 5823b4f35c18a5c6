"""ocrank: course recommendation from one-class registration records.

Pairwise matrix factorization with a course-dependency penalty, random-walk
ranking over the course transition network, count- and neighborhood-based
baselines, a linear rank-fusion ensemble, and a ranking-quality evaluation
harness, all reproducible from a single seed.
"""

from .baselines import MemoryRecommender, PopularityRecommender
from .bpr import (
    FactorModel,
    Hyperparameters,
    gradients,
    init_model,
    load_model,
    loss,
    save_model,
    score,
    sgd_epoch,
)
from .data import (
    Block,
    CourseClass,
    CourseLevel,
    ParseError,
    PartitionedDataset,
    RegistrationRecord,
    SyntheticConfig,
    classify_courses,
    generate_synthetic,
    load_records,
    partition,
    prepare_dataset,
    save_records,
)
from .ensemble import (
    FeatureVector,
    RankSvmEnsemble,
    RankSvmModel,
    build_training_pairs,
    ensemble_rank,
    train_ranksvm,
)
from .evaluation import (
    EvaluationReport,
    PairedTestResult,
    auc,
    evaluate,
    evaluate_rankings,
    paired_test,
)
from .experiment import AblationConfig, AblationSummary, run_ablation, run_seed
from .pagerank import (
    PageRankRecommender,
    PprDistribution,
    PprQuery,
    fixed_point_residual,
    personalized_pagerank,
    rank_by_ppr,
)
from .ranking import candidate_pool, minmax_normalize, sort_ranking
from .transition import (
    TransitionNetwork,
    apply_threshold,
    build_network,
    load_edgelist,
    neighbors,
    save_edgelist,
)
from .two_stage import (
    BprRanker,
    TwoStageBprRanker,
    train_single_stage,
    train_two_stage,
)

__version__ = "0.1.0"

__all__ = [
    "AblationConfig",
    "AblationSummary",
    "Block",
    "BprRanker",
    "CourseClass",
    "CourseLevel",
    "EvaluationReport",
    "FactorModel",
    "FeatureVector",
    "Hyperparameters",
    "MemoryRecommender",
    "PageRankRecommender",
    "PairedTestResult",
    "ParseError",
    "PartitionedDataset",
    "PopularityRecommender",
    "PprDistribution",
    "PprQuery",
    "RankSvmEnsemble",
    "RankSvmModel",
    "RegistrationRecord",
    "SyntheticConfig",
    "TransitionNetwork",
    "TwoStageBprRanker",
    "apply_threshold",
    "auc",
    "build_network",
    "build_training_pairs",
    "candidate_pool",
    "classify_courses",
    "ensemble_rank",
    "evaluate",
    "evaluate_rankings",
    "fixed_point_residual",
    "generate_synthetic",
    "gradients",
    "init_model",
    "load_edgelist",
    "load_model",
    "load_records",
    "loss",
    "minmax_normalize",
    "neighbors",
    "paired_test",
    "partition",
    "personalized_pagerank",
    "prepare_dataset",
    "rank_by_ppr",
    "run_ablation",
    "run_seed",
    "save_edgelist",
    "save_model",
    "save_records",
    "score",
    "sgd_epoch",
    "sort_ranking",
    "train_ranksvm",
    "train_single_stage",
    "train_two_stage",
]
