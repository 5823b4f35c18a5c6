"""Non-learned comparison methods: popularity and memory-based similarity.

Popularity ranks candidates by raw historical registration counts.  The
memory-based scorer compares the target student against senior peers (earlier
cohorts whose full histories are on record) and credits each candidate course
with the summed similarity of the seniors who took it.  Same-cohort peers are
deliberately left out of the senior pool.
"""

from __future__ import annotations

import enum
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import PartitionedDataset, RegistrationRecord
from .ranking import ScoredRanking, candidate_pool, sort_ranking


class Similarity(enum.Enum):
    INTERSECTION = "intersection"
    JACCARD = "jaccard"


@dataclass(frozen=True)
class StudentProfile:
    """A student reduced to the set of courses on their record."""

    student_id: str
    courses: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "courses", frozenset(self.courses))


def popularity_rank(
    records: Sequence[RegistrationRecord], candidates: Iterable[str]
) -> ScoredRanking:
    """Candidates by registration count, ties broken by course id."""
    if not records:
        raise ValueError("no records to count")
    counts = Counter(rec.course_id for rec in records)
    return sort_ranking((c, float(counts.get(c, 0))) for c in candidates)


def similarity(a: StudentProfile, b: StudentProfile, kind: Similarity) -> float:
    """Overlap between two course sets, as a raw count or a Jaccard ratio."""
    inter = len(a.courses & b.courses)
    if kind is Similarity.INTERSECTION:
        return float(inter)
    if kind is Similarity.JACCARD:
        union = len(a.courses | b.courses)
        return inter / union if union else 0.0
    raise ValueError(f"unknown similarity kind: {kind!r}")


def memory_score(
    target: StudentProfile,
    seniors: Sequence[StudentProfile],
    course: str,
    kind: Similarity,
) -> float:
    """Summed similarity to the seniors who took ``course``."""
    return sum(
        similarity(peer, target, kind)
        for peer in seniors
        if course in peer.courses
    )


def senior_profiles(dataset: PartitionedDataset) -> list[StudentProfile]:
    """Full-history profiles of the graduated students, in id order."""
    return [
        StudentProfile(sid, dataset.taken_courses(sid))
        for sid in sorted(dataset.graduated_students)
    ]


class PopularityRecommender(BaseEstimator):
    """Scores every candidate by how often it was historically taken."""

    def fit(self, dataset: PartitionedDataset) -> "PopularityRecommender":
        self.dataset_ = dataset
        self.counts_ = Counter(rec.course_id for rec in dataset.observed)
        return self

    def score_candidates(
        self, student_id: str, candidates: Iterable[str] | None = None
    ) -> ScoredRanking:
        check_is_fitted(self, "counts_")
        pool = candidate_pool(self.dataset_, student_id, candidates)
        return sort_ranking((c, float(self.counts_.get(c, 0))) for c in pool)


class MemoryRecommender(BaseEstimator):
    """Scores candidates by summed similarity to the seniors who took them."""

    def __init__(self, metric: str = "jaccard") -> None:
        self.metric = metric

    def fit(self, dataset: PartitionedDataset) -> "MemoryRecommender":
        kind = Similarity(self.metric)
        self.dataset_ = dataset
        self.kind_ = kind
        self.seniors_ = senior_profiles(dataset)
        return self

    def score_candidates(
        self, student_id: str, candidates: Iterable[str] | None = None
    ) -> ScoredRanking:
        check_is_fitted(self, "seniors_")
        pool = candidate_pool(self.dataset_, student_id, candidates)
        target = StudentProfile(student_id, self.dataset_.taken_courses(student_id))
        sims = [
            (peer, similarity(peer, target, self.kind_)) for peer in self.seniors_
        ]
        scores = {c: 0.0 for c in pool}
        for peer, sim in sims:
            if sim == 0.0:
                continue
            for course in peer.courses:
                if course in scores:
                    scores[course] += sim
        return sort_ranking(scores)
