"""Pairwise one-class matrix factorization over (student, course) registrations.

Students and courses get latent factor rows.  Training samples, for each
observed registration (s, i), an unobserved course j for the same student and
descends the logistic pairwise-ranking loss on the margin between i and j,
with L2 shrinkage on the factors.  An optional course dependency penalty ties
each course's factors to its successors in the transition network, weighted by
transition probability: courses that students flow between get similar rows.

The gradient of that penalty for a course row combines its out-edge pulls with
the reaction from edges pointing at it, which is the exact derivative of the
penalty; central finite differences of :func:`loss` therefore match
:func:`gradients` on any network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import stream_rng
from .transition import TransitionNetwork

MODEL_FORMAT = "ocrank-model"
MODEL_VERSION = "v1"

INIT_SCALE = 0.01


@dataclass(frozen=True)
class Hyperparameters:
    """Knobs of the factorization trainer."""

    n_factors: int = 12
    l2_reg: float = 0.05
    learning_rate: float = 0.05
    graph_reg: float = 0.008
    epochs: int = 30
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_factors < 1:
            raise ValueError(f"n_factors must be positive, got {self.n_factors}")
        if self.l2_reg < 0 or self.graph_reg < 0:
            raise ValueError("regularization strengths must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


@dataclass
class FactorModel:
    """Learned factor rows; scores are inner products."""

    student_factors: np.ndarray
    course_factors: np.ndarray
    hyper: Hyperparameters

    def __post_init__(self) -> None:
        if self.student_factors.ndim != 2 or self.course_factors.ndim != 2:
            raise ValueError("factor matrices must be 2-d")
        if self.student_factors.shape[1] != self.course_factors.shape[1]:
            raise ValueError("student and course factors disagree on width")

    @property
    def num_students(self) -> int:
        return self.student_factors.shape[0]

    @property
    def num_courses(self) -> int:
        return self.course_factors.shape[0]

    def copy(self) -> "FactorModel":
        return FactorModel(
            self.student_factors.copy(), self.course_factors.copy(), self.hyper
        )


def init_model(num_students: int, num_courses: int, hyper: Hyperparameters) -> FactorModel:
    """Small random factors, deterministic for a given seed."""
    if num_students < 1 or num_courses < 1:
        raise ValueError("need at least one student and one course")
    rng = stream_rng(hyper.seed, "init")
    shape_s = (num_students, hyper.n_factors)
    shape_c = (num_courses, hyper.n_factors)
    student_factors = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape_s)
    course_factors = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape_c)
    return FactorModel(student_factors, course_factors, hyper)


def score(model: FactorModel, student: int, course: int) -> float:
    """Affinity of one student for one course."""
    return float(model.student_factors[student] @ model.course_factors[course])


def pairwise_margin(model: FactorModel, student: int, pos: int, neg: int) -> float:
    """How much the student prefers ``pos`` over ``neg``; antisymmetric in the pair."""
    diff = model.course_factors[pos] - model.course_factors[neg]
    return float(model.student_factors[student] @ diff)


def _softplus_neg(y: float) -> float:
    """log(1 + exp(-y)) without overflow for either sign of y."""
    if y >= 0:
        return math.log1p(math.exp(-y))
    return -y + math.log1p(math.exp(y))


def _slope(y: float) -> float:
    """d/dy log(1 + exp(-y)) = -1 / (1 + exp(y)), overflow-safe."""
    if y >= 0:
        e = math.exp(-y)
        return -e / (1.0 + e)
    return -1.0 / (1.0 + math.exp(y))


def _dependency_pull(
    course_factors: np.ndarray, network: TransitionNetwork, f: int
) -> np.ndarray:
    """Exact penalty gradient for course row f: out-edge pulls plus in-edge reactions."""
    row = course_factors[f]
    acc = np.zeros_like(row)
    for dst, w in network.edges.get(f, {}).items():
        acc += w * (row - course_factors[dst])
    for src, targets in network.edges.items():
        w = targets.get(f)
        if w is not None:
            acc += w * (row - course_factors[src])
    return acc


def loss(
    model: FactorModel,
    triples: np.ndarray,
    network: TransitionNetwork | None = None,
) -> float:
    """Full objective on a fixed set of (student, pos, neg) triples.

    Logistic ranking loss per triple, plus L2 shrinkage on all factor entries,
    plus the dependency penalty ``(graph_reg / 2) * sum_f sum_g w(f, g) *
    ||row_f - row_g||^2`` over the network's edges.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    sfac, cfac = model.student_factors, model.course_factors
    total = 0.0
    for s, i, j in triples:
        total += _softplus_neg(pairwise_margin(model, int(s), int(i), int(j)))
    total += model.hyper.l2_reg * (float(np.sum(sfac * sfac)) + float(np.sum(cfac * cfac)))
    if network is not None and model.hyper.graph_reg > 0.0:
        penalty = 0.0
        for src, targets in network.edges.items():
            for dst, w in targets.items():
                diff = cfac[src] - cfac[dst]
                penalty += w * float(diff @ diff)
        total += 0.5 * model.hyper.graph_reg * penalty
    return total


def gradients(
    model: FactorModel,
    triple: tuple[int, int, int],
    network: TransitionNetwork | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradient of :func:`loss` on one triple w.r.t. the three touched rows.

    Returns (student row, positive course row, negative course row) gradients.
    """
    s, i, j = (int(x) for x in triple)
    if i == j:
        raise ValueError(f"positive and negative course coincide: {triple}")
    sfac, cfac = model.student_factors, model.course_factors
    l2 = model.hyper.l2_reg
    diff = cfac[i] - cfac[j]
    u = _slope(float(sfac[s] @ diff))
    g_student = u * diff + 2.0 * l2 * sfac[s]
    g_pos = u * sfac[s] + 2.0 * l2 * cfac[i]
    g_neg = -u * sfac[s] + 2.0 * l2 * cfac[j]
    if network is not None and model.hyper.graph_reg > 0.0:
        g_pos = g_pos + model.hyper.graph_reg * _dependency_pull(cfac, network, i)
        g_neg = g_neg + model.hyper.graph_reg * _dependency_pull(cfac, network, j)
    return g_student, g_pos, g_neg


def sample_negative(
    rng: np.random.Generator, candidate_pool: np.ndarray, positives: set[int]
) -> int:
    """Uniform draw from ``candidate_pool`` minus the student's positives."""
    eligible = np.setdiff1d(np.asarray(candidate_pool, dtype=np.int64),
                            np.fromiter(positives, dtype=np.int64, count=len(positives)))
    if eligible.size == 0:
        raise ValueError("no eligible negative courses to sample")
    return int(eligible[rng.integers(eligible.size)])


@dataclass
class TrainingScope:
    """Which parameters a stage updates and where its negatives come from.

    Negative pools are stored flattened: student s draws uniformly from
    ``pool_concat[pool_offset[s]:pool_offset[s + 1]]``, which already excludes
    the student's own positives.
    """

    pool_concat: np.ndarray
    pool_offset: np.ndarray
    update_students: bool = True
    update_courses: bool = True

    def pool_for(self, student: int) -> np.ndarray:
        return self.pool_concat[self.pool_offset[student] : self.pool_offset[student + 1]]


def build_scope(
    num_students: int,
    positives: np.ndarray,
    candidate_pools: dict[int, np.ndarray],
    update_students: bool = True,
    update_courses: bool = True,
) -> TrainingScope:
    """Precompute per-student eligible negatives for an SGD stage.

    ``candidate_pools`` maps each student appearing in ``positives`` to the
    courses the stage may draw negatives from; the student's positives are
    removed here, once.  A student left with nothing to draw is an error.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    pos_by_student: dict[int, set[int]] = {}
    for s, c in positives:
        pos_by_student.setdefault(int(s), set()).add(int(c))
    chunks: list[np.ndarray] = []
    offsets = np.zeros(num_students + 1, dtype=np.int64)
    cursor = 0
    for s in range(num_students):
        if s in pos_by_student:
            if s not in candidate_pools:
                raise ValueError(f"student index {s} has positives but no negative pool")
            pool = np.asarray(candidate_pools[s], dtype=np.int64)
            taken = np.fromiter(pos_by_student[s], dtype=np.int64, count=len(pos_by_student[s]))
            eligible = np.setdiff1d(pool, taken)
            if eligible.size == 0:
                raise ValueError(f"student index {s} has no eligible negative courses")
            chunks.append(eligible)
            cursor += eligible.size
        offsets[s + 1] = cursor
    concat = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    return TrainingScope(concat, offsets, update_students, update_courses)


@dataclass
class DependencyArrays:
    """Flattened network edges for the inner training loop.

    Per course: out-edges (targets, weights) and in-edges (sources, weights),
    CSR-style, with precomputed weight sums.
    """

    out_offset: np.ndarray
    out_target: np.ndarray
    out_weight: np.ndarray
    out_wsum: np.ndarray
    in_offset: np.ndarray
    in_source: np.ndarray
    in_weight: np.ndarray
    in_wsum: np.ndarray


def dependency_arrays(network: TransitionNetwork, num_courses: int) -> DependencyArrays:
    """Index a course-index-keyed network for fast per-row gradient pulls."""
    out_adj: list[list[tuple[int, float]]] = [[] for _ in range(num_courses)]
    in_adj: list[list[tuple[int, float]]] = [[] for _ in range(num_courses)]
    for src, targets in network.edges.items():
        for dst, w in targets.items():
            if not (0 <= int(src) < num_courses and 0 <= int(dst) < num_courses):
                raise ValueError("network nodes must be dense course indices")
            out_adj[int(src)].append((int(dst), w))
            in_adj[int(dst)].append((int(src), w))

    def flatten(adj):
        offset = np.zeros(num_courses + 1, dtype=np.int64)
        wsum = np.zeros(num_courses, dtype=np.float64)
        nodes, weights = [], []
        for f, row in enumerate(adj):
            row.sort()
            for other, w in row:
                nodes.append(other)
                weights.append(w)
                wsum[f] += w
            offset[f + 1] = len(nodes)
        nodes_arr = np.asarray(nodes, dtype=np.int64)
        weights_arr = np.asarray(weights, dtype=np.float64)
        return offset, nodes_arr, weights_arr, wsum

    out_offset, out_target, out_weight, out_wsum = flatten(out_adj)
    in_offset, in_source, in_weight, in_wsum = flatten(in_adj)
    return DependencyArrays(
        out_offset, out_target, out_weight, out_wsum,
        in_offset, in_source, in_weight, in_wsum,
    )


def _epoch_updates(
    sfac: np.ndarray,
    cfac: np.ndarray,
    s_arr: np.ndarray,
    i_arr: np.ndarray,
    j_arr: np.ndarray,
    lr: float,
    l2: float,
    graph_reg: float,
    dep: DependencyArrays | None,
    update_students: bool,
    update_courses: bool,
) -> float:
    """Sequential pairwise updates; returns the summed ranking loss."""
    total = 0.0
    two_l2 = 2.0 * l2
    for n in range(s_arr.size):
        s = s_arr[n]
        i = i_arr[n]
        j = j_arr[n]
        ps = sfac[s].copy()
        diff = cfac[i] - cfac[j]
        y = float(ps @ diff)
        if not math.isfinite(y):
            raise FloatingPointError(
                f"non-finite margin at triple (student={s}, pos={i}, neg={j}); "
                "lower the learning rate"
            )
        total += _softplus_neg(y)
        u = _slope(y)
        if update_courses:
            g_pos = u * ps + two_l2 * cfac[i]
            g_neg = -u * ps + two_l2 * cfac[j]
            if dep is not None and graph_reg > 0.0:
                g_pos += graph_reg * _dep_pull_arrays(cfac, dep, int(i))
                g_neg += graph_reg * _dep_pull_arrays(cfac, dep, int(j))
            cfac[i] -= lr * g_pos
            cfac[j] -= lr * g_neg
        if update_students:
            sfac[s] = ps - lr * (u * diff + two_l2 * ps)
    return total


def _dep_pull_arrays(cfac: np.ndarray, dep: DependencyArrays, f: int) -> np.ndarray:
    row = cfac[f]
    acc = (dep.out_wsum[f] + dep.in_wsum[f]) * row
    o0, o1 = dep.out_offset[f], dep.out_offset[f + 1]
    if o1 > o0:
        acc = acc - dep.out_weight[o0:o1] @ cfac[dep.out_target[o0:o1]]
    i0, i1 = dep.in_offset[f], dep.in_offset[f + 1]
    if i1 > i0:
        acc = acc - dep.in_weight[i0:i1] @ cfac[dep.in_source[i0:i1]]
    return acc


_compiled_kernel = None


def _get_compiled_kernel():
    """Build the numba twin of :func:`_epoch_updates` once, or return None."""
    global _compiled_kernel
    if _compiled_kernel is not None:
        return _compiled_kernel if _compiled_kernel is not False else None
    try:
        from numba import njit
    except ImportError:
        _compiled_kernel = False
        return None

    @njit(cache=True, inline="always")
    def pull(cfac, f, offset_o, target_o, weight_o, wsum_o,
             offset_i, source_i, weight_i, wsum_i, out):
        width = cfac.shape[1]
        ws = wsum_o[f] + wsum_i[f]
        for k in range(width):
            out[k] = ws * cfac[f, k]
        for e in range(offset_o[f], offset_o[f + 1]):
            dst = target_o[e]
            w = weight_o[e]
            for k in range(width):
                out[k] -= w * cfac[dst, k]
        for e in range(offset_i[f], offset_i[f + 1]):
            src = source_i[e]
            w = weight_i[e]
            for k in range(width):
                out[k] -= w * cfac[src, k]

    @njit(cache=True)
    def kernel(sfac, cfac, s_arr, i_arr, j_arr, lr, l2, graph_reg,
               out_offset, out_target, out_weight, out_wsum,
               in_offset, in_source, in_weight, in_wsum,
               use_dep, update_students, update_courses):
        width = sfac.shape[1]
        ps = np.empty(width)
        diff = np.empty(width)
        pull_pos = np.empty(width)
        pull_neg = np.empty(width)
        two_l2 = 2.0 * l2
        total = 0.0
        for t in range(s_arr.size):
            s = s_arr[t]
            i = i_arr[t]
            j = j_arr[t]
            y = 0.0
            for k in range(width):
                ps[k] = sfac[s, k]
                diff[k] = cfac[i, k] - cfac[j, k]
                y += ps[k] * diff[k]
            if not np.isfinite(y):
                return -1.0 - t  # error sentinel: caller names the triple
            if y >= 0.0:
                e = math.exp(-y)
                total += math.log1p(e)
                u = -e / (1.0 + e)
            else:
                e = math.exp(y)
                total += -y + math.log1p(e)
                u = -1.0 / (1.0 + e)
            if update_courses:
                if use_dep:
                    pull(cfac, i, out_offset, out_target, out_weight, out_wsum,
                         in_offset, in_source, in_weight, in_wsum, pull_pos)
                    pull(cfac, j, out_offset, out_target, out_weight, out_wsum,
                         in_offset, in_source, in_weight, in_wsum, pull_neg)
                for k in range(width):
                    g_pos = u * ps[k] + two_l2 * cfac[i, k]
                    g_neg = -u * ps[k] + two_l2 * cfac[j, k]
                    if use_dep:
                        g_pos += graph_reg * pull_pos[k]
                        g_neg += graph_reg * pull_neg[k]
                    cfac[i, k] -= lr * g_pos
                    cfac[j, k] -= lr * g_neg
            if update_students:
                for k in range(width):
                    sfac[s, k] = ps[k] - lr * (u * diff[k] + two_l2 * ps[k])
        return total

    _compiled_kernel = kernel
    return kernel


_EMPTY_OFFSET = np.zeros(1, dtype=np.int64)
_EMPTY_NODES = np.empty(0, dtype=np.int64)
_EMPTY_WEIGHTS = np.empty(0, dtype=np.float64)
_EMPTY_WSUM = np.empty(0, dtype=np.float64)


def sgd_epoch(
    model: FactorModel,
    positives: np.ndarray,
    scope: TrainingScope,
    network: TransitionNetwork | DependencyArrays | None = None,
    rng: np.random.Generator | None = None,
    observer=None,
    compiled: bool | None = None,
) -> float:
    """One pass over the positives in seeded shuffled order, updating in place.

    For each positive (s, i) one negative j is drawn uniformly from the
    student's scope pool, and the three touched rows take a gradient step
    evaluated at pre-step values.  Returns the mean per-triple ranking loss at
    the visited parameters (regularizers excluded).  ``observer``, if given,
    sees the epoch's triples as three aligned index arrays before any update.
    ``compiled`` forces the numba kernel on or off; by default it is used when
    available.
    """
    if rng is None:
        raise ValueError("sgd_epoch needs an explicit random generator")
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    if positives.size == 0:
        return 0.0
    dep: DependencyArrays | None
    if network is None:
        dep = None
    elif isinstance(network, DependencyArrays):
        dep = network
    else:
        dep = dependency_arrays(network, model.num_courses)

    order = rng.permutation(positives.shape[0])
    s_arr = positives[order, 0]
    i_arr = positives[order, 1]
    lens = scope.pool_offset[s_arr + 1] - scope.pool_offset[s_arr]
    if np.any(lens <= 0):
        bad = int(s_arr[np.argmax(lens <= 0)])
        raise ValueError(f"student index {bad} has an empty negative pool")
    j_arr = scope.pool_concat[scope.pool_offset[s_arr] + rng.integers(0, lens)]
    if observer is not None:
        observer(s_arr, i_arr, j_arr)

    hyper = model.hyper
    kernel = _get_compiled_kernel() if compiled in (None, True) else None
    if compiled is True and kernel is None:
        raise RuntimeError("compiled kernel requested but numba is unavailable")
    if kernel is not None:
        if dep is None:
            dep_args = (_EMPTY_OFFSET, _EMPTY_NODES, _EMPTY_WEIGHTS, _EMPTY_WSUM,
                        _EMPTY_OFFSET, _EMPTY_NODES, _EMPTY_WEIGHTS, _EMPTY_WSUM)
        else:
            dep_args = (dep.out_offset, dep.out_target, dep.out_weight, dep.out_wsum,
                        dep.in_offset, dep.in_source, dep.in_weight, dep.in_wsum)
        total = kernel(
            model.student_factors, model.course_factors,
            s_arr, i_arr, j_arr,
            hyper.learning_rate, hyper.l2_reg, hyper.graph_reg,
            *dep_args,
            dep is not None, scope.update_students, scope.update_courses,
        )
        if total < -0.5:
            t = int(-1.0 - total)
            raise FloatingPointError(
                f"non-finite margin at triple (student={s_arr[t]}, pos={i_arr[t]}, "
                f"neg={j_arr[t]}); lower the learning rate"
            )
    else:
        total = _epoch_updates(
            model.student_factors, model.course_factors,
            s_arr, i_arr, j_arr,
            hyper.learning_rate, hyper.l2_reg, hyper.graph_reg, dep,
            scope.update_students, scope.update_courses,
        )
    return total / positives.shape[0]


def save_model(model: FactorModel, path: str | Path) -> None:
    """Plain-text factors: a header line, then student rows, then course rows.

    Floats are written with full round-trip precision, so loading reproduces
    the matrices bit for bit.
    """
    lines = [
        f"{MODEL_FORMAT} {MODEL_VERSION} {model.num_students} "
        f"{model.num_courses} {model.hyper.n_factors}\n"
    ]
    for row in model.student_factors:
        lines.append(" ".join(repr(float(v)) for v in row) + "\n")
    for row in model.course_factors:
        lines.append(" ".join(repr(float(v)) for v in row) + "\n")
    with open(path, "w", encoding="utf-8") as handle:
        handle.writelines(lines)


def load_model(path: str | Path, hyper: Hyperparameters | None = None) -> FactorModel:
    """Read a model written by :func:`save_model`."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 5 or header[0] != MODEL_FORMAT or header[1] != MODEL_VERSION:
            raise ValueError(f"{path}: not a {MODEL_FORMAT} {MODEL_VERSION} file")
        num_students, num_courses, n_factors = (int(x) for x in header[2:])
        rows = []
        for line in handle:
            if line.strip():
                rows.append([float(v) for v in line.split()])
    if len(rows) != num_students + num_courses:
        raise ValueError(
            f"{path}: expected {num_students + num_courses} factor rows, got {len(rows)}"
        )
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.shape[1] != n_factors:
        raise ValueError(f"{path}: rows have {matrix.shape[1]} factors, header says {n_factors}")
    if hyper is None:
        hyper = Hyperparameters(n_factors=n_factors)
    elif hyper.n_factors != n_factors:
        raise ValueError("hyperparameters disagree with the stored factor width")
    return FactorModel(matrix[:num_students].copy(), matrix[num_students:].copy(), hyper)


def save_index(index: dict[str, int], path: str | Path) -> None:
    """Write an id -> dense index map as ``id<TAB>index`` lines, index order."""
    with open(path, "w", encoding="utf-8") as handle:
        for key in sorted(index, key=index.__getitem__):
            handle.write(f"{key}\t{index[key]}\n")


def load_index(path: str | Path) -> dict[str, int]:
    index: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected id<TAB>index")
            index[parts[0]] = int(parts[1])
    return index
