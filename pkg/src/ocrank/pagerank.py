"""Personalized PageRank over the course transition network.

The walk follows transition edges with probability proportional to their
weights and teleports back to a restart set (a student's most recent courses)
with probability ``1 - gamma``.  The stationary distribution is the fixed
point of ``pi = gamma * M pi + (1 - gamma) * r`` and is computed exactly by
power iteration rather than by simulating walks.  Columns of ``M`` hold the
normalized out-weights of each course; courses without outgoing edges (sinks)
hand their mass back to the restart distribution, which keeps ``M`` column
stochastic.
"""

from __future__ import annotations

import warnings
from collections.abc import Iterable, Set
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import PartitionedDataset
from .ranking import ScoredRanking, candidate_pool, sort_ranking
from .transition import TransitionNetwork, apply_threshold, build_network

Node = Hashable

DEFAULT_GAMMA = 0.7
DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITERATIONS = 1000


@dataclass(frozen=True)
class PprQuery:
    """One restart-set query against a fixed network."""

    restart: frozenset[Node]
    gamma: float = DEFAULT_GAMMA
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self) -> None:
        object.__setattr__(self, "restart", frozenset(self.restart))
        if not self.restart:
            raise ValueError("restart set must be nonempty")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class PprDistribution:
    """Stationary mass per course, with convergence diagnostics."""

    mass: dict[Node, float]
    converged: bool
    iterations: int

    def top(self, exclude: Set[Node] = frozenset()) -> ScoredRanking:
        """Courses by descending mass, skipping ``exclude``."""
        return sort_ranking(
            (node, m) for node, m in self.mass.items() if node not in exclude
        )


@dataclass(frozen=True)
class CompiledWalk:
    """A network folded into dense column-stochastic form for repeated queries."""

    nodes: tuple[Node, ...]
    index: dict[Node, int] = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    sinks: np.ndarray = field(repr=False)


def compile_walk(network: TransitionNetwork) -> CompiledWalk:
    """Normalize out-weights into a dense walk matrix, one column per course."""
    if not network.nodes:
        raise ValueError("network has no nodes")
    nodes = tuple(sorted(network.nodes))
    index = {node: k for k, node in enumerate(nodes)}
    n = len(nodes)
    matrix = np.zeros((n, n), dtype=np.float64)
    sinks = np.zeros(n, dtype=bool)
    for node in nodes:
        col = index[node]
        out = network.edges.get(node, {})
        if any(w < 0.0 for w in out.values()):
            raise ValueError(f"negative edge weight leaving {node!r}")
        total = sum(out.values())
        if total <= 0.0:
            sinks[col] = True
            continue
        for dst, w in out.items():
            matrix[index[dst], col] = w / total
    return CompiledWalk(nodes, index, matrix, sinks)


def _restart_vector(walk: CompiledWalk, restart: frozenset[Node]) -> np.ndarray:
    unknown = [node for node in restart if node not in walk.index]
    if unknown:
        raise ValueError(f"restart courses not in network: {sorted(map(str, unknown))}")
    r = np.zeros(len(walk.nodes), dtype=np.float64)
    share = 1.0 / len(restart)
    for node in restart:
        r[walk.index[node]] = share
    return r


def personalized_pagerank(
    network: TransitionNetwork | CompiledWalk, query: PprQuery
) -> PprDistribution:
    """Power-iterate the restart walk to its stationary distribution.

    Stops when the L1 change between sweeps drops below the query tolerance;
    if ``max_iterations`` passes first, the last iterate is returned with the
    converged flag unset.
    """
    walk = network if isinstance(network, CompiledWalk) else compile_walk(network)
    r = _restart_vector(walk, query.restart)
    pi = r.copy()
    converged = False
    iterations = 0
    for iterations in range(1, query.max_iterations + 1):
        pushed = walk.matrix @ pi + pi[walk.sinks].sum() * r
        nxt = query.gamma * pushed + (1.0 - query.gamma) * r
        delta = float(np.abs(nxt - pi).sum())
        pi = nxt
        if delta < query.tolerance:
            converged = True
            break
    mass = {node: float(pi[k]) for k, node in enumerate(walk.nodes)}
    return PprDistribution(mass=mass, converged=converged, iterations=iterations)


def fixed_point_residual(
    network: TransitionNetwork | CompiledWalk,
    query: PprQuery,
    dist: PprDistribution,
) -> float:
    """L1 distance between ``dist`` and one further walk step applied to it."""
    walk = network if isinstance(network, CompiledWalk) else compile_walk(network)
    r = _restart_vector(walk, query.restart)
    pi = np.array([dist.mass[node] for node in walk.nodes], dtype=np.float64)
    pushed = walk.matrix @ pi + pi[walk.sinks].sum() * r
    nxt = query.gamma * pushed + (1.0 - query.gamma) * r
    return float(np.abs(nxt - pi).sum())


def rank_by_ppr(
    network: TransitionNetwork | CompiledWalk,
    student_current_courses: Iterable[Node],
    gamma: float = DEFAULT_GAMMA,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> ScoredRanking:
    """Rank a student's unseen courses by their walk mass.

    The restart set is the student's current courses; any of them missing
    from the network are dropped with a warning.  Restart courses are left
    out of the ranking since the student already holds them.
    """
    walk = network if isinstance(network, CompiledWalk) else compile_walk(network)
    wanted = frozenset(student_current_courses)
    restart = frozenset(node for node in wanted if node in walk.index)
    dropped = wanted - restart
    if dropped:
        warnings.warn(
            f"dropping {len(dropped)} restart course(s) absent from the network",
            stacklevel=2,
        )
    if not restart:
        raise ValueError("no current course appears in the network")
    query = PprQuery(
        restart=restart, gamma=gamma, tolerance=tolerance,
        max_iterations=max_iterations,
    )
    return personalized_pagerank(walk, query).top(exclude=restart)


class PageRankRecommender(BaseEstimator):
    """Recommends courses by restart-walk mass from a student's latest grade.

    When ``fit`` is not handed a prebuilt network, one is built from the
    dataset's observed registrations and thresholded at ``threshold``.
    Candidate courses outside the network score zero mass.
    """

    def __init__(
        self,
        gamma: float = DEFAULT_GAMMA,
        threshold: float = 0.03,
        tolerance: float = DEFAULT_TOLERANCE,
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
        full_history: bool = False,
    ) -> None:
        self.gamma = gamma
        self.threshold = threshold
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.full_history = full_history

    def fit(
        self,
        dataset: PartitionedDataset,
        network: TransitionNetwork | None = None,
    ) -> "PageRankRecommender":
        if network is None:
            network = apply_threshold(
                build_network(list(dataset.observed)), self.threshold
            )
        self.dataset_ = dataset
        self.network_ = network
        self.walk_ = compile_walk(network) if network.nodes else None
        return self

    def _restart_for(self, student_id: str) -> frozenset[str]:
        if self.full_history:
            return self.dataset_.taken_courses(student_id)
        return self.dataset_.latest_grade_courses(student_id)

    def score_candidates(
        self, student_id: str, candidates: Iterable[str] | None = None
    ) -> ScoredRanking:
        """Mass-ranked candidates; defaults to every course not yet taken."""
        check_is_fitted(self, "walk_")
        pool = candidate_pool(self.dataset_, student_id, candidates)
        if self.walk_ is None:
            return sort_ranking((c, 0.0) for c in pool)
        restart = frozenset(
            c for c in self._restart_for(student_id) if c in self.walk_.index
        )
        if not restart:
            return sort_ranking((c, 0.0) for c in pool)
        query = PprQuery(
            restart=restart, gamma=self.gamma, tolerance=self.tolerance,
            max_iterations=self.max_iterations,
        )
        dist = personalized_pagerank(self.walk_, query)
        return sort_ranking((c, dist.mass.get(c, 0.0)) for c in pool)
