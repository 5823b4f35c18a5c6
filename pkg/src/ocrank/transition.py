"""Directed course-transition network.

For every student and every pair of consecutive grade years, each course taken
in the earlier year links to each course taken in the later year.  Edge counts
are normalized per source course, so the out-weights of a non-sink node form a
probability distribution over the courses students moved on to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable

from .data import RegistrationRecord

Node = Hashable


@dataclass(frozen=True)
class TransitionNetwork:
    """Weighted directed graph over courses.

    ``edges`` maps each source node to its out-edges as a target -> weight
    dict.  Nodes without out-edges (sinks) still appear in ``nodes``.
    """

    edges: dict[Node, dict[Node, float]]
    nodes: frozenset[Node] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        covered = set(self.edges)
        for targets in self.edges.values():
            covered.update(targets)
        if not self.nodes:
            object.__setattr__(self, "nodes", frozenset(covered))
        elif not covered <= self.nodes:
            raise ValueError("edge endpoints outside the declared node set")

    def out_weights(self, node: Node) -> dict[Node, float]:
        if node not in self.nodes:
            raise KeyError(f"unknown course {node!r}")
        return dict(self.edges.get(node, {}))

    def num_edges(self) -> int:
        return sum(len(t) for t in self.edges.values())

    def relabel(self, mapping: dict[Node, Node]) -> "TransitionNetwork":
        """Rename nodes, e.g. course ids to dense indices.  Mapping must be total."""
        missing = self.nodes - set(mapping)
        if missing:
            raise ValueError(f"no relabeling for nodes {sorted(map(str, missing))[:5]}")
        edges = {
            mapping[src]: {mapping[dst]: w for dst, w in targets.items()}
            for src, targets in self.edges.items()
        }
        return TransitionNetwork(edges=edges, nodes=frozenset(mapping[n] for n in self.nodes))


def build_network(
    records: Iterable[RegistrationRecord],
    course_index: dict[str, int] | None = None,
) -> TransitionNetwork:
    """Build the transition network from registration records.

    Each student contributes one count to edge (f, g) for every course f taken
    in some grade year and course g taken in the immediately following grade
    year; a grade year with no registrations breaks the chain.  Counts are then
    normalized per source.  Nodes are course ids, or dense indices when
    ``course_index`` is supplied.
    """
    by_student: dict[str, dict[int, set[str]]] = {}
    nodes: set[Node] = set()

    def key(course_id: str) -> Node:
        return course_index[course_id] if course_index is not None else course_id

    for rec in records:
        by_student.setdefault(rec.student_id, {}).setdefault(rec.grade_level, set()).add(
            rec.course_id
        )
        nodes.add(key(rec.course_id))

    counts: dict[Node, dict[Node, int]] = {}
    for grades in by_student.values():
        for grade, sources in grades.items():
            targets = grades.get(grade + 1)
            if not targets:
                continue
            for src in sources:
                row = counts.setdefault(key(src), {})
                for dst in targets:
                    dst_key = key(dst)
                    row[dst_key] = row.get(dst_key, 0) + 1

    edges: dict[Node, dict[Node, float]] = {}
    for src, row in counts.items():
        total = sum(row.values())
        edges[src] = {dst: n / total for dst, n in row.items()}
    return TransitionNetwork(edges=edges, nodes=frozenset(nodes))


def apply_threshold(network: TransitionNetwork, threshold: float) -> TransitionNetwork:
    """Drop edges with weight strictly below ``threshold``; no renormalization.

    Surviving weights are untouched, so out-weights may no longer sum to one.
    Applying the same threshold twice is a no-op.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    edges = {}
    for src, targets in network.edges.items():
        kept = {dst: w for dst, w in targets.items() if w >= threshold}
        if kept:
            edges[src] = kept
    return TransitionNetwork(edges=edges, nodes=network.nodes)


def neighbors(network: TransitionNetwork, node: Node) -> list[tuple[Node, float]]:
    """Out-edges of ``node`` as (target, weight) pairs, sorted by target."""
    return sorted(network.out_weights(node).items(), key=lambda kv: str(kv[0]))


def save_edgelist(network: TransitionNetwork, path: str | Path) -> None:
    """Write ``source<TAB>target<TAB>weight`` lines, sorted, full float precision."""
    lines = []
    for src in sorted(network.edges, key=str):
        for dst, weight in sorted(network.edges[src].items(), key=lambda kv: str(kv[0])):
            lines.append(f"{src}\t{dst}\t{weight!r}\n")
    with open(path, "w", encoding="utf-8") as handle:
        handle.writelines(lines)


def load_edgelist(path: str | Path) -> TransitionNetwork:
    """Read a network written by :func:`save_edgelist` (nodes stay strings)."""
    edges: dict[Node, dict[Node, float]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected source, target, weight")
            src, dst, weight_text = parts
            try:
                weight = float(weight_text)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad weight {weight_text!r}") from None
            edges.setdefault(src, {})[dst] = weight
    return TransitionNetwork(edges=edges)
