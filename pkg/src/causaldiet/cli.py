"""Command-line entry point: ``causaldiet ingest|discover|recommend|evaluate|synth``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 insufficient data.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

from causaldiet import persistence
from causaldiet.config import RunConfig
from causaldiet.discovery import discover_or_fallback
from causaldiet.errors import (CausalDietError, DataError, GoalNotFound, InsufficientDataError,
                               UsageError)
from causaldiet.evaluation import comparison_table, run_experiment
from causaldiet.food_retrieval import default_food_db, load_food_db
from causaldiet.ingest import (CGM_FILE, build_feature_table, feature_columns,
                               format_features_csv, load_user_dir, parse_features_csv, split_half,
                               write_user_dir)
from causaldiet.recommender import (MODES, HttpBackend, RecommendationRequest, TemplateBackend,
                                    recommend)
from causaldiet.scm import build_personal_graph

logger = logging.getLogger("causaldiet")

EXIT_USAGE, EXIT_DATA, EXIT_INSUFFICIENT = 2, 3, 4
FEATURES_SUFFIX = ".features.csv"


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def user_dirs(data_dir):
    root = Path(data_dir)
    if not root.is_dir():
        raise DataError(f"{data_dir} is not a directory")
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / CGM_FILE).exists())
    if not dirs:
        raise DataError(f"no user directories with {CGM_FILE} under {data_dir}")
    return dirs


def load_users(data_dir):
    return [load_user_dir(d, d.name) for d in user_dirs(data_dir)]


def _feature_files(path):
    p = Path(path)
    if p.is_file():
        return [p]
    if p.is_dir():
        files = sorted(p.glob(f"*{FEATURES_SUFFIX}"))
        if files:
            return files
    raise DataError(f"no feature files at {path}")


def _user_id(feature_file):
    name = feature_file.name
    return name[:-len(FEATURES_SUFFIX)] if name.endswith(FEATURES_SUFFIX) else feature_file.stem


def _user_rows(user, config):
    """Feature rows from a user directory, a feature CSV, or a user id under data_dir."""
    p = Path(user)
    if not p.exists() and config.data_dir:
        p = Path(config.data_dir) / user
    if p.is_file():
        return _user_id(p), parse_features_csv(p)
    if p.is_dir() and (p / CGM_FILE).exists():
        return p.name, build_feature_table(load_user_dir(p, p.name), config.baseline_mode)
    raise DataError(f"unknown user {user!r}")


def _food_db(config):
    return load_food_db(Path(config.food_db)) if config.food_db else default_food_db()


# --------------------------------------------------------------------------
# Commands


def cmd_ingest(args, config):
    out = Path(args.out)
    ok = 0
    dirs = user_dirs(args.data_dir)
    for d in dirs:
        try:
            rows = build_feature_table(load_user_dir(d, d.name), config.baseline_mode)
        except CausalDietError as exc:
            logger.error("user %s: %s", d.name, exc)
            continue
        _write(out / f"{d.name}{FEATURES_SUFFIX}", format_features_csv(rows))
        ok += 1
    if ok == 0:
        raise DataError("no user could be featurized")
    logger.info("featurized %d of %d users", ok, len(dirs))
    return 0


def cmd_discover(args, config):
    out = Path(args.out)
    for f in _feature_files(args.features):
        rows = parse_features_csv(f)
        train, _ = split_half(rows)
        dag = discover_or_fallback(feature_columns(train), alpha=config.alpha)
        persistence.save_payload("dag", dag.to_dict(), out / f"{_user_id(f)}.dag.json")
    return 0


def cmd_recommend(args, config):
    user_id, rows = _user_rows(args.user, config)
    train, _ = split_half(rows)
    graph = build_personal_graph(train, user_id, "train_half", config.alpha)
    backend = HttpBackend(args.backend_url) if args.backend_url else TemplateBackend()
    request = RecommendationRequest(user_id, args.query, args.horizon,
                                    frozenset(args.exclude or ()), config.budget_kcal)
    rec = recommend(graph, _food_db(config), request, backend, args.mode, l_max=config.l_max,
                    p_max=config.p_max, k=config.candidates, margin=config.margin)
    text = json.dumps(rec.to_dict(), indent=2, ensure_ascii=False)
    if args.out:
        persistence.save_payload("recommendation", rec.to_dict(), args.out)
    print(text)
    return 0


def cmd_evaluate(args, config):
    data_dir = args.data_dir or config.data_dir
    if not data_dir:
        raise UsageError("evaluate needs a data directory")
    modes = tuple(dict.fromkeys(args.mode or MODES))
    users = [u for u in load_users(data_dir)]
    reports = run_experiment(users, _food_db(config), modes, config, jobs=args.jobs)
    out = Path(args.out)
    for mode, rep in reports.items():
        persistence.save_payload("report", rep.to_dict(), out / f"report_{mode}.json")
    _write(out / "table.csv", comparison_table(reports))
    sys.stdout.write(comparison_table(reports))
    return 0


def cmd_synth(args, config):
    from causaldiet.synth import default_cohort
    out = Path(args.out)
    for user, truth in default_cohort(args.users, config.seed, args.days):
        write_user_dir(out / user.user_id, user)
        persistence.save_payload("truth", truth.to_dict(), out / user.user_id / "truth.json")
    return 0


# --------------------------------------------------------------------------
# Argument parsing


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON file with RunConfig keys")
    parser.add_argument("--seed", type=int, default=default, help="random seed")
    parser.add_argument("--jobs", type=int, default=argparse.SUPPRESS if suppress else 0,
                        help="worker processes (1 = serial, 0 = one per CPU)")
    parser.add_argument("-v", "--verbose", action="count",
                        default=argparse.SUPPRESS if suppress else 0)


def build_parser():
    parser = argparse.ArgumentParser(prog="causaldiet",
                                     description="Personal causal graphs for diet recommendations.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="featurize every user directory")
    _global_flags(p, suppress=True)
    p.add_argument("data_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline-mode", choices=("pre24h", "pre120min"))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("discover", help="train-half causal graph per feature file")
    _global_flags(p, suppress=True)
    p.add_argument("features", help="feature CSV or a directory of them")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("recommend", help="recommend a food for one user")
    _global_flags(p, suppress=True)
    p.add_argument("user", help="user directory, feature CSV, or user id under --data-dir")
    p.add_argument("--query", required=True)
    p.add_argument("--horizon", type=int, choices=(30, 60, 120), default=120)
    p.add_argument("--exclude", action="append", metavar="FOOD")
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--data-dir")
    p.add_argument("--food-db")
    p.add_argument("--alpha", type=float)
    p.add_argument("--backend-url", help="remote text backend (JSON over HTTP)")
    p.add_argument("--out", help="also save the recommendation envelope here")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("evaluate", help="counterfactual evaluation and ablations")
    _global_flags(p, suppress=True)
    p.add_argument("data_dir", nargs="?")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", action="append", choices=MODES)
    p.add_argument("--food-db")
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    _global_flags(p, suppress=True)
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--days", type=int, default=10)
    p.set_defaults(func=cmd_synth)
    return parser


def resolve_config(args):
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {
        "seed": args.seed,
        "alpha": getattr(args, "alpha", None),
        "baseline_mode": getattr(args, "baseline_mode", None),
        "food_db": getattr(args, "food_db", None),
        "data_dir": getattr(args, "data_dir", None) if args.command == "recommend" else None,
    }
    try:
        return config.replace(**overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 0:
        parser.error("--jobs must be >= 0")
    args.jobs = args.jobs or os.cpu_count() or 1
    if getattr(args, "users", 1) < 1 or getattr(args, "days", 10) < 3:
        parser.error("--users must be >= 1 and --days >= 3")
    try:
        config = resolve_config(args)
        return args.func(args, config)
    except (UsageError, GoalNotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (DataError, CausalDietError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
