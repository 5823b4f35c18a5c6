"""Registration records: loading, course classification, cohort partitioning.

A record says "student s took course c in grade year g".  Everything downstream
works on a :class:`PartitionedDataset`, which splits one cohort out as the
*current* students (their final-year registrations become held-out truth) and
keeps everyone else as *graduated* students with complete histories.  Courses
are classified as fundamental or advanced from how late in the program they are
typically taken, and training records are labeled by the (course level, student
status) block they fall in.

A small synthetic generator produces registration data with the same texture:
each course has a home grade year and students mostly register for courses
whose home grade matches their own.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, fields
from functools import cached_property
from pathlib import Path

import numpy as np

from .seeding import stream_rng

CSV_COLUMNS = ("student_id", "course_id", "cohort_year", "grade_level")

DEFAULT_MAX_GRADE = 4
DEFAULT_ADVANCED_GRADE = 3
DEFAULT_DOMINANCE = 0.5


class ParseError(ValueError):
    """A records file whose structure cannot be parsed."""


class CourseLevel(enum.Enum):
    FUNDAMENTAL = "fundamental"
    ADVANCED = "advanced"


class Block(enum.Enum):
    """Training block of a retained record: course level crossed with student status."""

    FUNDAMENTAL_GRADUATED = "fundamental-graduated"
    ADVANCED_GRADUATED = "advanced-graduated"
    FUNDAMENTAL_CURRENT = "fundamental-current"


@dataclass(frozen=True, order=True)
class RegistrationRecord:
    """One registration: a student took a course during a given grade year."""

    student_id: str
    course_id: str
    cohort_year: int
    grade_level: int


@dataclass(frozen=True)
class CourseClass:
    """Classification of one course.

    ``dominant_grade`` is the grade year contributing the largest share of the
    course's registrations (ties resolve to the earlier grade) and
    ``dominance_fraction`` is that share.  ``level`` is decided separately: a
    course is advanced when at least a ``dominance`` fraction of its
    registrations happen at or after the ``advanced_grade`` year.
    """

    course_id: str
    level: CourseLevel
    dominant_grade: int
    dominance_fraction: float

    @property
    def is_advanced(self) -> bool:
        return self.level is CourseLevel.ADVANCED


def load_records(path: str | Path, max_grade: int = DEFAULT_MAX_GRADE) -> list[RegistrationRecord]:
    """Read registration records from a CSV file.

    The file must carry the header ``student_id,course_id,cohort_year,grade_level``.
    Duplicate (student, course, grade) rows collapse to a single record.  Rows
    that cannot be parsed raise :class:`ParseError` naming the offending line;
    grades outside ``[1, max_grade]`` and students listed under two different
    cohort years raise :class:`ValueError`.
    """
    records: list[RegistrationRecord] = []
    seen: set[tuple[str, str, int]] = set()
    cohort_of: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected header {','.join(CSV_COLUMNS)}") from None
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise ParseError(
                f"{path}: bad header {header!r}, expected {','.join(CSV_COLUMNS)}"
            )
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != 4:
                raise ParseError(f"{path}:{line}: expected 4 fields, got {len(row)}")
            student_id, course_id, year_text, grade_text = (f.strip() for f in row)
            try:
                cohort_year = int(year_text)
                grade_level = int(grade_text)
            except ValueError:
                raise ParseError(f"{path}:{line}: non-integer cohort year or grade") from None
            if not student_id or not course_id:
                raise ParseError(f"{path}:{line}: empty student or course id")
            if not 1 <= grade_level <= max_grade:
                raise ValueError(
                    f"{path}:{line}: grade_level {grade_level} outside [1, {max_grade}]"
                )
            if cohort_of.setdefault(student_id, cohort_year) != cohort_year:
                raise ValueError(
                    f"{path}:{line}: student {student_id} listed under two cohort years"
                )
            key = (student_id, course_id, grade_level)
            if key in seen:
                continue
            seen.add(key)
            records.append(RegistrationRecord(student_id, course_id, cohort_year, grade_level))
    return records


def save_records(records: list[RegistrationRecord], path: str | Path) -> None:
    """Write records to CSV with the standard header, preserving order."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow((rec.student_id, rec.course_id, rec.cohort_year, rec.grade_level))


def classify_courses(
    records: list[RegistrationRecord],
    advanced_grade: int = DEFAULT_ADVANCED_GRADE,
    dominance: float = DEFAULT_DOMINANCE,
    max_grade: int = DEFAULT_MAX_GRADE,
) -> dict[str, CourseClass]:
    """Classify every course appearing in ``records``.

    A course is advanced when the fraction of its registrations at grade
    ``advanced_grade`` or later reaches ``dominance``; otherwise it is
    fundamental.
    """
    if not 1 <= advanced_grade <= max_grade:
        raise ValueError(f"advanced_grade {advanced_grade} outside [1, {max_grade}]")
    if not 0.0 < dominance <= 1.0:
        raise ValueError(f"dominance {dominance} outside (0, 1]")
    grade_counts: dict[str, dict[int, int]] = {}
    for rec in records:
        counts = grade_counts.setdefault(rec.course_id, {})
        counts[rec.grade_level] = counts.get(rec.grade_level, 0) + 1
    classes: dict[str, CourseClass] = {}
    for course_id, counts in grade_counts.items():
        total = sum(counts.values())
        late = sum(n for grade, n in counts.items() if grade >= advanced_grade)
        level = CourseLevel.ADVANCED if late / total >= dominance else CourseLevel.FUNDAMENTAL
        # Ties on the dominant grade resolve to the earlier grade year.
        dominant_grade = min(counts, key=lambda g: (-counts[g], g))
        classes[course_id] = CourseClass(
            course_id=course_id,
            level=level,
            dominant_grade=dominant_grade,
            dominance_fraction=counts[dominant_grade] / total,
        )
    return classes


@dataclass
class PartitionedDataset:
    """Training view of the records after one cohort is designated current.

    ``records`` holds the retained training registrations, labeled in
    ``blocks`` by course level and student status.  Registrations of current
    students at advanced courses are withheld from training entirely; they are
    kept in ``rejected`` because they remain observed facts about the student
    (used when excluding already-taken courses, building walk restart sets, or
    counting popularity), they just must not steer the factor model that is
    asked to rank exactly that kind of course.
    """

    records: tuple[RegistrationRecord, ...]
    blocks: tuple[Block, ...]
    student_index: dict[str, int]
    course_index: dict[str, int]
    graduated_students: frozenset[str]
    current_students: frozenset[str]
    course_classes: dict[str, CourseClass]
    rejected: tuple[RegistrationRecord, ...] = ()
    max_grade: int = DEFAULT_MAX_GRADE

    def __post_init__(self) -> None:
        if len(self.records) != len(self.blocks):
            raise ValueError("records and blocks must be aligned")

    @property
    def num_students(self) -> int:
        return len(self.student_index)

    @property
    def num_courses(self) -> int:
        return len(self.course_index)

    @cached_property
    def course_ids(self) -> tuple[str, ...]:
        """Course ids ordered by their dense index."""
        ids = [""] * len(self.course_index)
        for course_id, idx in self.course_index.items():
            ids[idx] = course_id
        return tuple(ids)

    @cached_property
    def student_ids(self) -> tuple[str, ...]:
        ids = [""] * len(self.student_index)
        for student_id, idx in self.student_index.items():
            ids[idx] = student_id
        return tuple(ids)

    @cached_property
    def advanced_courses(self) -> frozenset[str]:
        return frozenset(c for c, cls in self.course_classes.items() if cls.is_advanced)

    @cached_property
    def fundamental_courses(self) -> frozenset[str]:
        return frozenset(self.course_classes) - self.advanced_courses

    @cached_property
    def observed(self) -> tuple[RegistrationRecord, ...]:
        """All pre-holdout registrations: retained training rows plus rejected ones."""
        return self.records + self.rejected

    @cached_property
    def _observed_by_student(self) -> dict[str, list[RegistrationRecord]]:
        by_student: dict[str, list[RegistrationRecord]] = {}
        for rec in self.observed:
            by_student.setdefault(rec.student_id, []).append(rec)
        return by_student

    def taken_courses(self, student_id: str) -> frozenset[str]:
        """Courses the student is observed to have taken (training plus rejected)."""
        recs = self._observed_by_student.get(student_id)
        if recs is None:
            raise KeyError(f"unknown student {student_id!r}")
        return frozenset(rec.course_id for rec in recs)

    def latest_grade_courses(self, student_id: str) -> frozenset[str]:
        """Courses from the student's most recent observed grade year."""
        recs = self._observed_by_student.get(student_id)
        if recs is None:
            raise KeyError(f"unknown student {student_id!r}")
        latest = max(rec.grade_level for rec in recs)
        return frozenset(rec.course_id for rec in recs if rec.grade_level == latest)

    def positive_pairs(self, include: frozenset[Block] | None = None) -> np.ndarray:
        """Unique (student index, course index) pairs from the chosen blocks.

        A course taken in two grade years yields a single pair: training treats
        registrations as one-class facts, not events.  Pairs come back sorted
        for determinism.
        """
        wanted = include if include is not None else frozenset(Block)
        pairs = {
            (self.student_index[rec.student_id], self.course_index[rec.course_id])
            for rec, block in zip(self.records, self.blocks)
            if block in wanted
        }
        out = np.array(sorted(pairs), dtype=np.int64)
        return out.reshape(-1, 2)


def partition(
    records: list[RegistrationRecord],
    classes: dict[str, CourseClass],
    target_cohort: int,
    max_grade: int = DEFAULT_MAX_GRADE,
) -> tuple[PartitionedDataset, dict[str, frozenset[str]]]:
    """Split records around one target cohort.

    Students of ``target_cohort`` become current students: their grade
    ``max_grade`` registrations are removed and returned separately as held-out
    truth, their earlier advanced-course registrations (if any) are withheld
    from training, and their remaining rows are labeled fundamental-current.
    Every other student with a complete history (a grade ``max_grade`` record)
    is graduated; other students' incomplete histories are dropped.
    """
    if not records:
        raise ValueError("no records to partition")
    for rec in records:
        if rec.course_id not in classes:
            raise ValueError(f"course {rec.course_id!r} has no classification")

    target_students = {r.student_id for r in records if r.cohort_year == target_cohort}
    if not target_students:
        raise ValueError(f"target cohort {target_cohort} has no records")

    held_out: dict[str, set[str]] = {}
    complete: set[str] = set()
    for rec in records:
        if rec.student_id in target_students:
            if rec.grade_level == max_grade:
                held_out.setdefault(rec.student_id, set()).add(rec.course_id)
        elif rec.grade_level == max_grade:
            complete.add(rec.student_id)
    if not held_out:
        raise ValueError(
            f"target cohort {target_cohort} has no grade-{max_grade} records to hold out"
        )

    retained: list[RegistrationRecord] = []
    block_labels: list[Block] = []
    rejected: list[RegistrationRecord] = []
    for rec in records:
        advanced = classes[rec.course_id].is_advanced
        if rec.student_id in target_students:
            if rec.grade_level == max_grade:
                continue
            if advanced:
                rejected.append(rec)
            else:
                retained.append(rec)
                block_labels.append(Block.FUNDAMENTAL_CURRENT)
        elif rec.student_id in complete:
            retained.append(rec)
            block_labels.append(
                Block.ADVANCED_GRADUATED if advanced else Block.FUNDAMENTAL_GRADUATED
            )

    student_index = {
        sid: idx for idx, sid in enumerate(sorted(target_students | complete))
    }
    course_index = {
        cid: idx for idx, cid in enumerate(sorted({r.course_id for r in records}))
    }
    dataset = PartitionedDataset(
        records=tuple(retained),
        blocks=tuple(block_labels),
        student_index=student_index,
        course_index=course_index,
        graduated_students=frozenset(complete),
        current_students=frozenset(target_students),
        course_classes=dict(classes),
        rejected=tuple(rejected),
        max_grade=max_grade,
    )
    truth = {sid: frozenset(courses) for sid, courses in held_out.items()}
    return dataset, truth


def prepare_dataset(
    records: list[RegistrationRecord],
    target_cohort: int,
    advanced_grade: int = DEFAULT_ADVANCED_GRADE,
    dominance: float = DEFAULT_DOMINANCE,
    max_grade: int = DEFAULT_MAX_GRADE,
) -> tuple[PartitionedDataset, dict[str, frozenset[str]]]:
    """Classify courses from pre-holdout information only, then partition.

    Course classes are computed without the target cohort's final-year rows,
    since those are exactly what the split is asked to predict.  A course seen
    only in the held-out year has no observable registrations at all; it is
    classed as advanced at the final grade, which is all its timing implies.
    """
    observable = [
        r for r in records
        if not (r.cohort_year == target_cohort and r.grade_level == max_grade)
    ]
    classes = classify_courses(observable, advanced_grade, dominance, max_grade)
    for course_id in {r.course_id for r in records} - set(classes):
        classes[course_id] = CourseClass(
            course_id=course_id,
            level=CourseLevel.ADVANCED,
            dominant_grade=max_grade,
            dominance_fraction=1.0,
        )
    return partition(records, classes, target_cohort, max_grade)


@dataclass(frozen=True)
class SyntheticConfig:
    """Shape of a synthetic registration dataset.

    Courses are assigned home grade years round-robin; a student in grade g
    draws each registration from the grade-g home pool with probability
    ``concentration`` and from the remaining courses otherwise.

    Each student also carries a persistent interest group, and courses are
    spread over the same groups.  Within whichever pool a registration is
    drawn from, the pick favours courses sharing the student's group with
    probability ``interest_affinity``, which gives each student a stable
    taste that collaborative models can pick up.  ``interest_groups=1`` (or
    affinity 0) reduces to uniform picks within the pool.
    """

    num_cohorts: int = 3
    students_per_cohort: int = 100
    num_courses: int = 120
    courses_per_grade: int = 8
    concentration: float = 0.8
    interest_groups: int = 4
    interest_affinity: float = 0.85
    max_grade: int = DEFAULT_MAX_GRADE
    first_cohort_year: int = 2008

    def __post_init__(self) -> None:
        for name in ("num_cohorts", "students_per_cohort", "num_courses",
                     "courses_per_grade", "interest_groups", "max_grade"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.concentration <= 1.0:
            raise ValueError(f"concentration {self.concentration} outside [0, 1]")
        if not 0.0 <= self.interest_affinity <= 1.0:
            raise ValueError(
                f"interest_affinity {self.interest_affinity} outside [0, 1]"
            )
        if self.num_courses < self.max_grade:
            raise ValueError("need at least one course per grade year")
        min_pool = self.num_courses // self.max_grade
        if self.concentration == 1.0 and self.courses_per_grade > min_pool:
            raise ValueError(
                f"courses_per_grade {self.courses_per_grade} exceeds the "
                f"smallest home pool ({min_pool}) with concentration 1.0"
            )
        if self.courses_per_grade > self.num_courses:
            raise ValueError("courses_per_grade exceeds the number of courses")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "SyntheticConfig":
        """Build from string key=value pairs, rejecting unknown keys."""
        known = {f.name: f.type for f in fields(cls)}
        kwargs: dict[str, object] = {}
        for key, value in mapping.items():
            if key not in known:
                raise ValueError(f"unknown synthetic-config key {key!r}")
            is_float = key in ("concentration", "interest_affinity")
            kwargs[key] = float(value) if is_float else int(value)
        return cls(**kwargs)  # type: ignore[arg-type]


def generate_synthetic(config: SyntheticConfig, seed: int) -> list[RegistrationRecord]:
    """Generate complete registration histories, deterministic per seed."""
    rng = stream_rng(seed, "synth")
    width = len(str(config.num_courses))
    course_ids = [f"C{i + 1:0{width}d}" for i in range(config.num_courses)]
    pools: dict[int, list[str]] = {g: [] for g in range(1, config.max_grade + 1)}
    group_of: dict[str, int] = {}
    for i, course_id in enumerate(course_ids):
        pools[(i % config.max_grade) + 1].append(course_id)
        group_of[course_id] = (i // config.max_grade) % config.interest_groups
    away_pools = {
        g: [c for c in course_ids if c not in set(home)] for g, home in pools.items()
    }

    records: list[RegistrationRecord] = []
    for cohort in range(config.num_cohorts):
        year = config.first_cohort_year + cohort
        for s in range(config.students_per_cohort):
            student_id = f"S{year}-{s + 1:03d}"
            group = s % config.interest_groups
            for grade in range(1, config.max_grade + 1):
                home = pools[grade]
                away = away_pools[grade]
                chosen: set[str] = set()
                for _ in range(config.courses_per_grade):
                    prefer_home = rng.random() < config.concentration
                    pool = home if prefer_home else away
                    avail = [c for c in pool if c not in chosen]
                    if not avail:
                        avail = [c for c in (away if prefer_home else home) if c not in chosen]
                    take_liked = rng.random() < config.interest_affinity
                    liked = [c for c in avail if group_of[c] == group]
                    if take_liked and liked:
                        avail = liked
                    course = avail[int(rng.integers(len(avail)))]
                    chosen.add(course)
                    records.append(RegistrationRecord(student_id, course, year, grade))
    return records
