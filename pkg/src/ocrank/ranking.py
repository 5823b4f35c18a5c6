"""Small shared helpers for score-ordered course lists."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .data import PartitionedDataset

# A ranking is a list of (course_id, score), best first.
ScoredRanking = list[tuple[str, float]]


def candidate_pool(
    dataset: "PartitionedDataset",
    student_id: str,
    candidates: Iterable[str] | None = None,
) -> list[str]:
    """Resolve the candidate list for one student.

    Defaults to every indexed course the student has not taken.  Explicit
    candidates are validated against the course index and kept in the order
    given.  Unknown students or courses raise ``KeyError``.
    """
    taken = dataset.taken_courses(student_id)
    if candidates is None:
        return sorted(frozenset(dataset.course_index) - taken)
    pool = list(candidates)
    unknown = [c for c in pool if c not in dataset.course_index]
    if unknown:
        raise KeyError(f"unknown courses: {unknown}")
    return pool


def sort_ranking(
    scores: Mapping[str, float] | Iterable[tuple[str, float]],
) -> ScoredRanking:
    """Order descending by score, breaking ties by course id."""
    pairs = scores.items() if isinstance(scores, Mapping) else scores
    return sorted(pairs, key=lambda kv: (-kv[1], kv[0]))


def minmax_normalize(scores: dict[str, float]) -> dict[str, float]:
    """Rescale values to [0, 1]; a degenerate (constant) range maps to 0.5."""
    if not scores:
        return {}
    lo = min(scores.values())
    hi = max(scores.values())
    if hi == lo:
        return {k: 0.5 for k in scores}
    span = hi - lo
    return {k: (v - lo) / span for k, v in scores.items()}
