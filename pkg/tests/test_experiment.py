import math

import numpy as np
import pytest

from ocrank.data import SyntheticConfig
from ocrank.experiment import (
    MODEL_NAMES,
    AblationConfig,
    AblationSummary,
    SeedOutcome,
    run_ablation,
    run_seed,
)

SMALL_DATA = SyntheticConfig(
    num_cohorts=3, students_per_cohort=24, num_courses=48,
    courses_per_grade=5, interest_groups=3,
)
FAST = AblationConfig(
    data=SMALL_DATA, seeds=(0, 1), epochs=4, stage2_epochs=2, ensemble_epochs=10,
)


@pytest.fixture(scope="module")
def summary():
    return run_ablation(FAST)


def test_config_rejects_empty_seeds():
    with pytest.raises(ValueError, match="seed"):
        AblationConfig(seeds=())


def test_config_needs_three_cohorts():
    with pytest.raises(ValueError, match="cohorts"):
        AblationConfig(data=SyntheticConfig(num_cohorts=2))


def test_outcome_requires_every_model():
    with pytest.raises(ValueError, match="missing model"):
        SeedOutcome(seed=0, mean_auc={"bpr": 0.5}, ensemble_weight=(1.0, 1.0))


def test_run_seed_covers_all_models():
    outcome = run_seed(FAST, 0)
    assert set(outcome.mean_auc) == set(MODEL_NAMES)
    for name, value in outcome.mean_auc.items():
        assert 0.0 <= value <= 1.0, name
    assert len(outcome.ensemble_weight) == 2
    assert all(math.isfinite(w) for w in outcome.ensemble_weight)


def test_run_seed_deterministic():
    first = run_seed(FAST, 1)
    again = run_seed(FAST, 1)
    assert first.mean_auc == again.mean_auc
    assert first.ensemble_weight == again.ensemble_weight


def test_seeds_produce_different_datasets(summary):
    by_seed = {o.seed: o.mean_auc for o in summary.outcomes}
    assert by_seed[0] != by_seed[1]


def test_summary_mean_matches_outcomes(summary):
    for name in MODEL_NAMES:
        expected = np.mean([o.mean_auc[name] for o in summary.outcomes])
        assert summary.mean(name) == pytest.approx(expected, abs=1e-15)
    assert set(summary.means) == set(MODEL_NAMES)


def test_summary_rejects_unknown_model(summary):
    with pytest.raises(KeyError):
        summary.mean("gradient_boosting")


def test_table_layout(summary):
    lines = summary.table().splitlines()
    assert len(lines) == 1 + len(FAST.seeds) + 1
    for name in MODEL_NAMES:
        assert name in lines[0]
    assert lines[-1].startswith("mean")
    # every data row carries one cell per model
    for line in lines[1:]:
        assert len(line.split()) == 1 + len(MODEL_NAMES)


def test_factor_models_beat_popularity(summary):
    pop = summary.mean("popularity")
    for name in ("bpr", "two_stage", "two_stage_cdr", "ppr", "ensemble"):
        assert summary.mean(name) > pop, name
