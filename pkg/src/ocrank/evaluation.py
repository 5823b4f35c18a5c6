"""Held-out AUC scoring and paired significance tests between models.

Each current student is scored on every course they have not yet taken; the
held-out final-year registrations are the positives.  Per-student AUC uses
the rank-sum formulation with midranks, so tied scores contribute half a win
and a constant scorer lands exactly at 0.5.  Model comparisons run both a
one-sided paired t-test and an exact binomial sign test over the per-student
AUC differences.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence, Set
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np
from scipy import stats

from .data import PartitionedDataset
from .ranking import ScoredRanking


class Recommender(Protocol):
    def score_candidates(
        self, student_id: str, candidates: Iterable[str] | None = None
    ) -> ScoredRanking: ...


@dataclass(frozen=True)
class EvaluationReport:
    """Per-student AUC values with their mean and the skip count."""

    per_student_auc: dict[str, float]
    mean_auc: float
    num_skipped: int
    skipped_students: tuple[str, ...] = ()

    @classmethod
    def from_scores(
        cls, per_student_auc: dict[str, float], skipped: Sequence[str] = ()
    ) -> "EvaluationReport":
        values = list(per_student_auc.values())
        mean = float(np.mean(values)) if values else float("nan")
        return cls(
            per_student_auc=dict(per_student_auc),
            mean_auc=mean,
            num_skipped=len(skipped),
            skipped_students=tuple(skipped),
        )

    def summary(self) -> str:
        return (
            f"students={len(self.per_student_auc)} "
            f"mean_auc={self.mean_auc:.6f} skipped={self.num_skipped}"
        )


def auc(ranking: ScoredRanking, positives: Set[str]) -> float:
    """Probability that a positive outranks a negative, ties counting half.

    Computed from midranks, which matches the exhaustive count over all
    (positive, negative) pairs exactly.
    """
    if not ranking:
        raise ValueError("empty ranking")
    scores = np.array([s for _, s in ranking], dtype=np.float64)
    is_pos = np.array([c in positives for c, _ in ranking], dtype=bool)
    n_pos = int(is_pos.sum())
    n_neg = len(ranking) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative candidate")
    ranks = stats.rankdata(scores)
    u = float(ranks[is_pos].sum()) - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


def evaluate_rankings(
    rankings: Mapping[str, ScoredRanking],
    heldout: Mapping[str, Set[str]],
) -> EvaluationReport:
    """Score prebuilt per-student rankings against held-out positives."""
    per: dict[str, float] = {}
    skipped: list[str] = []
    for sid in sorted(rankings):
        try:
            per[sid] = auc(rankings[sid], heldout.get(sid, frozenset()))
        except ValueError:
            skipped.append(sid)
    return EvaluationReport.from_scores(per, skipped)


def evaluate(
    recommender: Recommender,
    dataset: PartitionedDataset,
    heldout: Mapping[str, Set[str]],
) -> EvaluationReport:
    """Rank unseen courses for every current student and report AUC."""
    rankings: dict[str, ScoredRanking] = {}
    skipped: list[str] = []
    for sid in sorted(dataset.current_students):
        try:
            rankings[sid] = recommender.score_candidates(sid)
        except (KeyError, ValueError):
            skipped.append(sid)
    report = evaluate_rankings(rankings, heldout)
    return EvaluationReport.from_scores(
        report.per_student_auc, list(report.skipped_students) + skipped
    )


class PairedTestResult(NamedTuple):
    t_p_value: float
    sign_p_value: float


def paired_test(
    auc_a: Sequence[float], auc_b: Sequence[float]
) -> PairedTestResult:
    """One-sided tests of whether model b beats model a per student.

    Returns the paired t-test p-value for mean(b - a) > 0 and an exact
    binomial sign-test p-value.  When every difference is identical (up to
    rounding jitter) the t statistic is undefined; that degenerate case maps
    to p = 0 for a positive shared difference and p = 1 otherwise.
    """
    a = np.asarray(auc_a, dtype=np.float64)
    b = np.asarray(auc_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    if a.ndim != 1 or len(a) < 2:
        raise ValueError("need at least two paired observations")
    diffs = b - a
    spread = float(diffs.max() - diffs.min())
    scale = max(float(np.abs(diffs).max()), np.finfo(np.float64).tiny)
    if spread <= 16.0 * np.finfo(np.float64).eps * scale:
        t_p = 0.0 if diffs.mean() > 0 else 1.0
    else:
        t_p = float(stats.ttest_rel(b, a, alternative="greater").pvalue)

    wins = int(np.sum(diffs > 0))
    nonzero = int(np.sum(diffs != 0))
    if nonzero == 0:
        sign_p = 1.0
    else:
        tail = sum(math.comb(nonzero, k) for k in range(wins, nonzero + 1))
        sign_p = tail / 2**nonzero
    return PairedTestResult(t_p_value=t_p, sign_p_value=float(sign_p))


def save_report(report: EvaluationReport, path: str | Path) -> None:
    """One `student<TAB>auc` line per student, in student order."""
    lines = [
        f"{sid}\t{report.per_student_auc[sid]!r}\n"
        for sid in sorted(report.per_student_auc)
    ]
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_report(path: str | Path) -> EvaluationReport:
    per: dict[str, float] = {}
    for num, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{num}: expected student<TAB>auc")
        per[parts[0]] = float(parts[1])
    return EvaluationReport.from_scores(per)


def save_scores(rankings: Mapping[str, ScoredRanking], path: str | Path) -> None:
    """Flat `student<TAB>course<TAB>score` lines preserving ranking order."""
    out = []
    for sid in sorted(rankings):
        for course, score in rankings[sid]:
            out.append(f"{sid}\t{course}\t{score!r}\n")
    Path(path).write_text("".join(out), encoding="utf-8")


def load_scores(path: str | Path) -> dict[str, ScoredRanking]:
    rankings: dict[str, ScoredRanking] = {}
    for num, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{num}: expected student<TAB>course<TAB>score")
        try:
            score = float(parts[2])
        except ValueError as err:
            raise ValueError(f"{path}:{num}: bad score {parts[2]!r}") from err
        rankings.setdefault(parts[0], []).append((parts[1], score))
    return rankings


def save_truth(heldout: Mapping[str, Set[str]], path: str | Path) -> None:
    """Held-out positives as `student<TAB>course` lines."""
    out = []
    for sid in sorted(heldout):
        for course in sorted(heldout[sid]):
            out.append(f"{sid}\t{course}\n")
    Path(path).write_text("".join(out), encoding="utf-8")


def load_truth(path: str | Path) -> dict[str, frozenset[str]]:
    raw: dict[str, set[str]] = {}
    for num, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{num}: expected student<TAB>course")
        raw.setdefault(parts[0], set()).add(parts[1])
    return {sid: frozenset(courses) for sid, courses in raw.items()}
