"""Command-line pipelines over the library: generate data, partition it,
build the transition graph, train factor models, produce recommendations,
and evaluate or combine score files.

Every subcommand accepts ``--config FILE`` holding ``key=value`` lines whose
keys are the setting names below; explicit flags win over file values, and
unknown keys are rejected.  Subcommands that write into an output directory
also drop an ``effective-config.txt`` there recording the fully resolved
settings, so a run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .bpr import FactorModel, Hyperparameters, load_model, save_index, save_model
from .data import (
    SyntheticConfig,
    generate_synthetic,
    load_records,
    prepare_dataset,
    save_records,
)
from .ensemble import build_features, build_training_pairs, ensemble_rank, save_ensemble, train_ranksvm
from .evaluation import (
    evaluate_rankings,
    load_report,
    load_scores,
    load_truth,
    paired_test,
    save_report,
    save_scores,
    save_truth,
)
from .pagerank import PageRankRecommender
from .transition import apply_threshold, build_network, load_edgelist, save_edgelist
from .two_stage import score_candidates, train_single_stage, train_two_stage

CONFIG_ECHO = "effective-config.txt"
ALL_CURRENT = "@current"


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one subcommand invocation."""

    n_factors: int = 12
    l2_reg: float = 0.05
    learning_rate: float = 0.05
    graph_reg: float = 0.008
    epochs: int = 30
    stage2_epochs: int | None = None
    seed: int = 0
    threshold: float = 0.03
    gamma: float = 0.7
    target_cohort: int | None = None
    advanced_grade: int = 3
    dominance: float = 0.5
    max_grade: int = 4
    method: str = "bpr"
    cdr: bool = False
    ppr: bool = False
    student: str | None = None
    top: int = 10
    reg_c: float = 1.0
    ensemble_epochs: int = 50
    in_path: str | None = None
    out: str | None = None
    graph: str | None = None
    model: str | None = None
    scores: str | None = None
    truth: str | None = None
    a: str | None = None
    b: str | None = None
    cf: str | None = None
    ppr_path: str | None = None


FIELD_TYPES = {
    "n_factors": int, "l2_reg": float, "learning_rate": float,
    "graph_reg": float, "epochs": int, "stage2_epochs": int, "seed": int,
    "threshold": float, "gamma": float, "target_cohort": int,
    "advanced_grade": int, "dominance": float, "max_grade": int,
    "method": str, "cdr": bool, "ppr": bool, "student": str, "top": int,
    "reg_c": float, "ensemble_epochs": int, "in_path": str, "out": str,
    "graph": str, "model": str, "scores": str, "truth": str, "a": str,
    "b": str, "cf": str, "ppr_path": str,
}

_DATA_KEYS = {f.name for f in fields(SyntheticConfig)}


def _coerce(key: str, text: str):
    kind = FIELD_TYPES[key]
    if kind is bool:
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: bad boolean {text!r}")
    try:
        return kind(text)
    except ValueError:
        raise ValueError(f"config key {key!r}: bad {kind.__name__} {text!r}") from None


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse key=value lines; blank lines and #-comments are skipped."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            if key in mapping:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            mapping[key] = value
    return mapping


def resolve_config(args: argparse.Namespace) -> tuple[RunConfig, dict[str, str]]:
    """Merge defaults, config-file entries, and flags (flags win).

    Returns the resolved settings plus any config-file keys that belong to
    the synthetic-data shape instead (only ``generate`` may receive those).
    """
    file_map = read_config_file(args.config) if getattr(args, "config", None) else {}
    data_part = {k: v for k, v in file_map.items() if k in _DATA_KEYS}
    kwargs = {}
    for key, value in file_map.items():
        if key in _DATA_KEYS:
            continue
        if key not in FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[key] = _coerce(key, value)
    for key in FIELD_TYPES:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            kwargs[key] = flag_value
    return RunConfig(**kwargs), data_part


def write_effective_config(
    cfg: RunConfig, out_dir: Path, extra: Mapping[str, object] | None = None
) -> None:
    entries: dict[str, object] = {}
    for field in fields(cfg):
        value = getattr(cfg, field.name)
        if value is not None:
            entries[field.name] = value
    if extra:
        entries.update(extra)
    lines = [
        f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}"
        for key, value in sorted(entries.items())
    ]
    (out_dir / CONFIG_ECHO).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _require(cfg: RunConfig, *names: str):
    values = []
    for name in names:
        value = getattr(cfg, name)
        if value is None:
            flag = "--in" if name == "in_path" else "--" + name.replace("_", "-")
            raise ValueError(f"missing required setting {flag}")
        values.append(value)
    return values[0] if len(values) == 1 else values


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(_require(cfg, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_partition(directory: str | Path):
    """Rebuild the dataset and held-out truth a ``partition`` run wrote."""
    directory = Path(directory)
    echo = directory / CONFIG_ECHO
    records_path = directory / "records.csv"
    if not echo.exists() or not records_path.exists():
        raise ValueError(f"{directory}: not a partition directory")
    mapping = read_config_file(echo)
    try:
        target = int(mapping["target_cohort"])
        advanced_grade = int(mapping["advanced_grade"])
        dominance = float(mapping["dominance"])
        max_grade = int(mapping["max_grade"])
    except KeyError as err:
        raise ValueError(f"{echo}: missing partition setting {err}") from None
    records = load_records(records_path, max_grade)
    return prepare_dataset(records, target, advanced_grade, dominance, max_grade)


def cmd_generate(args: argparse.Namespace) -> int:
    cfg, data_part = resolve_config(args)
    data_cfg = SyntheticConfig.from_mapping(data_part)
    out = _out_dir(cfg)
    records = generate_synthetic(data_cfg, cfg.seed)
    save_records(records, out / "records.csv")
    extra = {f.name: getattr(data_cfg, f.name) for f in fields(data_cfg)}
    write_effective_config(cfg, out, extra)
    students = len({r.student_id for r in records})
    print(f"wrote {len(records)} records for {students} students to {out / 'records.csv'}")
    return 0


def cmd_partition(args: argparse.Namespace) -> int:
    cfg, _ = resolve_config(args)
    in_path, target = _require(cfg, "in_path", "target_cohort")
    records = load_records(in_path, cfg.max_grade)
    dataset, truth = prepare_dataset(
        records, target, cfg.advanced_grade, cfg.dominance, cfg.max_grade
    )
    out = _out_dir(cfg)
    save_records(records, out / "records.csv")
    save_records(list(dataset.observed), out / "observed.csv")
    save_truth(truth, out / "truth.tsv")
    write_effective_config(cfg, out)
    advanced = len(dataset.advanced_courses)
    print(
        f"partitioned around cohort {target}: {len(dataset.current_students)} current "
        f"and {len(dataset.graduated_students)} graduated students, "
        f"{dataset.num_courses} courses ({advanced} advanced), "
        f"{len(dataset.rejected)} withheld advanced rows"
    )
    return 0


def cmd_build_graph(args: argparse.Namespace) -> int:
    cfg, _ = resolve_config(args)
    in_path = _require(cfg, "in_path")
    records = load_records(in_path, cfg.max_grade)
    network = apply_threshold(build_network(records), cfg.threshold)
    out = _out_dir(cfg)
    save_edgelist(network, out / "graph.tsv")
    write_effective_config(cfg, out)
    edges = sum(len(row) for row in network.edges.values())
    print(f"graph: {len(network.nodes)} nodes, {edges} edges at threshold {cfg.threshold!r}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg, _ = resolve_config(args)
    in_path = _require(cfg, "in_path")
    if cfg.method not in ("bpr", "two-stage"):
        raise ValueError(f"unknown method {cfg.method!r}, expected bpr or two-stage")
    dataset, _ = load_partition(in_path)
    network = None
    if cfg.cdr:
        network = load_edgelist(_require(cfg, "graph"))
    hyper = Hyperparameters(
        n_factors=cfg.n_factors, l2_reg=cfg.l2_reg,
        learning_rate=cfg.learning_rate,
        graph_reg=cfg.graph_reg if cfg.cdr else 0.0,
        epochs=cfg.epochs, seed=cfg.seed,
    )
    if cfg.method == "bpr":
        model = train_single_stage(dataset, hyper, network)
    else:
        model = train_two_stage(
            dataset, hyper, network, stage2_epochs=cfg.stage2_epochs
        )
    out = _out_dir(cfg)
    save_model(model, out / "model.tsv")
    save_index(dataset.student_index, out / "students.tsv")
    save_index(dataset.course_index, out / "courses.tsv")
    write_effective_config(cfg, out)
    print(f"trained {cfg.method} model ({hyper.n_factors} factors, "
          f"{hyper.epochs} epochs) -> {out / 'model.tsv'}")
    return 0


def _factor_scorer(model: FactorModel, dataset):
    def score(student_id):
        return score_candidates(model, dataset, student_id)
    return score


def cmd_recommend(args: argparse.Namespace) -> int:
    cfg, _ = resolve_config(args)
    in_path, student = _require(cfg, "in_path", "student")
    dataset, _ = load_partition(in_path)
    if cfg.ppr:
        network = load_edgelist(_require(cfg, "graph"))
        walker = PageRankRecommender(
            gamma=cfg.gamma, threshold=cfg.threshold
        ).fit(dataset, network)
        score = walker.score_candidates
    else:
        model = load_model(_require(cfg, "model"))
        if (model.num_students != dataset.num_students
                or model.num_courses != dataset.num_courses):
            raise ValueError("model dimensions do not match the partition")
        score = _factor_scorer(model, dataset)

    wanted = sorted(dataset.current_students) if student == ALL_CURRENT else [student]
    rankings, skipped = {}, []
    for sid in wanted:
        try:
            rankings[sid] = score(sid)
        except (KeyError, ValueError):
            if student != ALL_CURRENT:
                raise
            skipped.append(sid)
    if cfg.out is not None:
        out = _out_dir(cfg)
        save_scores(rankings, out / "scores.tsv")
        write_effective_config(cfg, out)
        print(f"wrote scores for {len(rankings)} students to {out / 'scores.tsv'}"
              + (f" ({len(skipped)} skipped)" if skipped else ""))
    else:
        for sid, ranking in rankings.items():
            for course, value in ranking[: cfg.top]:
                print(f"{sid}\t{course}\t{value!r}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg, _ = resolve_config(args)
    scores_path, truth_path = _require(cfg, "scores", "truth")
    rankings = load_scores(scores_path)
    heldout = load_truth(truth_path)
    report = evaluate_rankings(rankings, heldout)
    print(f"mean AUC {report.mean_auc!r} over {len(report.per_student_auc)} students "
          f"({report.num_skipped} skipped)")
    if cfg.out is not None:
        out = _out_dir(cfg)
        save_report(report, out / "auc.tsv")
        write_effective_config(cfg, out)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg, _ = resolve_config(args)
    path_a, path_b = _require(cfg, "a", "b")
    report_a = load_report(path_a)
    report_b = load_report(path_b)
    common = sorted(set(report_a.per_student_auc) & set(report_b.per_student_auc))
    if not common:
        raise ValueError("the two reports share no students")
    vec_a = [report_a.per_student_auc[sid] for sid in common]
    vec_b = [report_b.per_student_auc[sid] for sid in common]
    result = paired_test(vec_a, vec_b)
    mean_a = sum(vec_a) / len(vec_a)
    mean_b = sum(vec_b) / len(vec_b)
    print(f"a: mean AUC {mean_a!r} ({path_a})")
    print(f"b: mean AUC {mean_b!r} ({path_b})")
    print(f"paired t-test p-value (b beats a): {result.t_p_value!r}")
    print(f"sign test p-value (b beats a): {result.sign_p_value!r}")
    return 0


def cmd_ensemble(args: argparse.Namespace) -> int:
    cfg, _ = resolve_config(args)
    cf_path, ppr_path, truth_path = _require(cfg, "cf", "ppr_path", "truth")
    cf_scores = load_scores(cf_path)
    walk_scores = load_scores(ppr_path)
    heldout = load_truth(truth_path)
    features = {}
    for sid, cf_ranking in sorted(cf_scores.items()):
        candidates = [course for course, _ in cf_ranking]
        try:
            features[sid] = build_features(
                cf_ranking, walk_scores.get(sid, []), candidates
            )
        except ValueError:
            continue
    pairs = build_training_pairs(features, heldout, seed=cfg.seed)
    model = train_ranksvm(
        pairs, reg_c=cfg.reg_c, epochs=cfg.ensemble_epochs, seed=cfg.seed
    )
    out = _out_dir(cfg)
    save_ensemble(model, out / "ensemble.tsv")
    blended = {sid: ensemble_rank(model, rows) for sid, rows in features.items()}
    save_scores(blended, out / "scores.tsv")
    write_effective_config(cfg, out)
    w_cf, w_walk = (float(v) for v in model.weight)
    print(f"trained on {len(pairs)} pairs; weights cf={w_cf!r} ppr={w_walk!r}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value settings file")


def _add_hyper(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-factors", type=int, dest="n_factors")
    parser.add_argument("--l2-reg", type=float, dest="l2_reg")
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--graph-reg", type=float, dest="graph_reg")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ocrank",
        description="course registration data pipelines: generate, train, rank, evaluate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic registration dataset")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("partition", help="split records around a target cohort")
    _add_common(p)
    p.add_argument("--in", dest="in_path")
    p.add_argument("--target-cohort", type=int, dest="target_cohort")
    p.add_argument("--advanced-grade", type=int, dest="advanced_grade")
    p.add_argument("--dominance", type=float)
    p.add_argument("--max-grade", type=int, dest="max_grade")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_partition)

    p = sub.add_parser("build-graph", help="build the course transition graph")
    _add_common(p)
    p.add_argument("--in", dest="in_path")
    p.add_argument("--threshold", type=float)
    p.add_argument("--max-grade", type=int, dest="max_grade")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_build_graph)

    p = sub.add_parser("train", help="fit a factor model on a partition")
    _add_common(p)
    _add_hyper(p)
    p.add_argument("--in", dest="in_path")
    p.add_argument("--method", choices=("bpr", "two-stage"))
    p.add_argument("--cdr", action="store_const", const=True)
    p.add_argument("--graph")
    p.add_argument("--stage2-epochs", type=int, dest="stage2_epochs")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("recommend", help="score candidate courses for students")
    _add_common(p)
    p.add_argument("--in", dest="in_path")
    p.add_argument("--model")
    p.add_argument("--ppr", action="store_const", const=True)
    p.add_argument("--graph")
    p.add_argument("--gamma", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--student", help=f"a student id, or {ALL_CURRENT} for every current student")
    p.add_argument("--top", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_recommend)

    p = sub.add_parser("evaluate", help="per-student AUC of a score file")
    _add_common(p)
    p.add_argument("--scores")
    p.add_argument("--truth")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("compare", help="paired hypothesis tests between two AUC reports")
    _add_common(p)
    p.add_argument("--a")
    p.add_argument("--b")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("ensemble", help="blend two score files with a pairwise ranker")
    _add_common(p)
    p.add_argument("--cf")
    p.add_argument("--ppr", dest="ppr_path")
    p.add_argument("--truth")
    p.add_argument("--reg-c", type=float, dest="reg_c")
    p.add_argument("--ensemble-epochs", type=int, dest="ensemble_epochs")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_ensemble)

    return parser


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return 0 if code == 0 else 2
    try:
        return args.handler(args)
    except (ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
