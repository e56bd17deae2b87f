"""Command-line driver: ``seasonal-ili <command> [options]``.

Commands::

    synth         write the frozen benchmark (or the 100-query fixture)
    fit-seasonal  fit a Serfling or yearly-average model, write fit + residuals
    rank          rank queries, write ranking JSON + relevance curve CSV
    estimate      one rolling run for a ranking, estimator and query count
    evaluate      full experiment: every ranking x estimator plus baselines

Input data comes from ``--data DIR`` (``ili.csv``, ``panel.csv`` and, if
present, ``labels.csv`` and ``experiment.json``, as written by ``synth``)
or from explicit ``--ili/--panel/--labels`` paths. Ranges and the window
default to the values in ``experiment.json`` when one is found.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error or
lasso non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import io
from .errors import ConvergenceWarning, DataError, NumericalError
from .estimators import ESTIMATORS, LassoConfig, estimator_spec
from .evaluation import SELECTION_METRICS, ExperimentConfig, rolling_estimate, run_experiment
from .ranking import RANK_SIGNS, RankingMethod, given_order, rank_by_method, relevance_curve
from .seasonal import ModelKind, decompose, fit_seasonal
from .synthetic import Benchmark, fixture_dataset, load_benchmark
from .timeseries import WeekRange

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _week_range(text: str) -> WeekRange:
    try:
        return WeekRange.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--train-range", type=_week_range, metavar="A:B", help="training weeks (inclusive ordinals)")
    g.add_argument("--test-range", type=_week_range, metavar="A:B", help="test weeks (inclusive ordinals)")
    g.add_argument("--window", type=_positive, default=None, help="rolling window in weeks (default 104)")
    g.add_argument("--season-length", type=_positive, default=52, help="weeks per season (default 52)")
    g.add_argument("--metric", choices=SELECTION_METRICS, default="rmse", help="metric used to pick n")
    g.add_argument("--rank-sign", choices=RANK_SIGNS, default="abs", help="rank by |r| or signed r")
    g.add_argument("--normalize", action="store_true", help="standardize panel columns after ingestion")
    g.add_argument("--seed", type=int, default=None, help="synth seed; elsewhere shuffles the CV folds")
    g.add_argument("--jobs", type=_positive, default=1, help="worker processes for evaluate")
    g.add_argument(
        "--allow-short-window",
        type=_positive,
        default=None,
        metavar="W",
        help="fit with at least W rows when fewer than --window weeks of history exist",
    )
    return common


def _data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", type=Path, help="directory with ili.csv, panel.csv [labels.csv, experiment.json]")
    parser.add_argument("--ili", type=Path, help="ILI CSV (overrides --data)")
    parser.add_argument("--panel", type=Path, help="query panel CSV (overrides --data)")
    parser.add_argument("--labels", type=Path, help="relevance labels CSV (overrides --data)")
    parser.add_argument("--out", type=Path, required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="seasonal-ili", description="Seasonal query selection for ILI nowcasting.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--fixture", choices=("benchmark", "queries"), default="benchmark")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("fit-seasonal", parents=[common], help="fit a seasonal model and emit residuals")
    _data_flags(p)
    p.add_argument("--model", choices=[m.value for m in ModelKind], default=ModelKind.YEARLY_AVERAGE.value)

    p = sub.add_parser("rank", parents=[common], help="rank queries and emit the relevance curve")
    _data_flags(p)
    p.add_argument("--method", choices=[m.value for m in RankingMethod], default=RankingMethod.RESIDUAL_YA.value)

    p = sub.add_parser("estimate", parents=[common], help="single rolling estimation run")
    _data_flags(p)
    p.add_argument("--method", choices=[m.value for m in RankingMethod], default=RankingMethod.RESIDUAL_YA.value)
    p.add_argument("--estimator", default="linear", help=f"one of {sorted(ESTIMATORS)} or arM")
    p.add_argument("--queries", "-n", type=int, required=True, help="number of top-ranked queries")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed penalty (default: cross-validated)")

    p = sub.add_parser("evaluate", parents=[common], help="full experiment report")
    _data_flags(p)
    return parser


# ---------------------------------------------------------------- helpers


def _load(args):
    data = args.data
    ili = args.ili or (data / "ili.csv" if data else None)
    panel = args.panel or (data / "panel.csv" if data else None)
    if ili is None or panel is None:
        raise UsageError("give --data DIR or both --ili and --panel")
    labels = args.labels
    if labels is None and data is not None and (data / "labels.csv").exists():
        labels = data / "labels.csv"
    experiment = {}
    if data is not None and (data / "experiment.json").exists():
        experiment = json.loads((data / "experiment.json").read_text(encoding="utf-8"))
    return io.ingest(ili, panel, labels, normalize=args.normalize), experiment


def _ranges(args, experiment, span, need_test: bool):
    bench = experiment.get("benchmark", {})
    train = args.train_range or (WeekRange(*bench["train_range"]) if "train_range" in bench else None)
    test = args.test_range or (WeekRange(*bench["test_range"]) if "test_range" in bench else None)
    window = args.window or bench.get("window", 104)
    if need_test and test is None:
        raise UsageError("--test-range is required (no experiment.json with a split was found)")
    if train is None:
        train = WeekRange(span.first, test.first - 1) if test is not None else span
    return train, test, window


def _experiment_config(args, train, test, window) -> ExperimentConfig:
    return ExperimentConfig(
        train_range=train,
        test_range=test,
        window_size=window,
        selection_metric=args.metric,
        season_length=args.season_length,
        rank_sign=args.rank_sign,
        cv_seed=args.seed,
        min_window=args.allow_short_window,
        jobs=args.jobs,
        lasso=LassoConfig(),
    )


def _ranking(args, ili, panel, train):
    method = RankingMethod(args.method)
    if method is RankingMethod.GIVEN_ORDER:
        return given_order(panel)
    return rank_by_method(ili, panel, method, train, args.season_length, args.rank_sign)


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    bench = load_benchmark()
    if args.seed is not None:
        bench = Benchmark.from_dict({**bench.to_dict(), "synth": {**bench.synth.to_dict(), "seed": args.seed}})
    if args.fixture == "queries":
        dataset = fixture_dataset(bench.synth.seed, bench.synth.weeks)
    else:
        dataset = bench.dataset()
    meta = {"fixture": args.fixture, "benchmark": bench.to_dict(), "kinds": list(dataset.truth["kinds"])}
    for path in io.write_dataset(args.out, dataset.ili, dataset.panel, io.DEFAULT_EPOCH, {"experiment.json": meta}):
        print(path)
    return EXIT_OK


def cmd_fit_seasonal(args) -> int:
    (ili, panel, epoch), experiment = _load(args)
    train, _, _ = _ranges(args, experiment, ili.span, need_test=False)
    kind = ModelKind(args.model)
    train_series = ili.slice(train.first, train.last)
    fit = fit_seasonal(train_series, kind, args.season_length)
    parts = decompose(ili, kind, args.season_length, fit=fit)
    io.write_outputs(
        {
            args.out / "seasonal_fit.json": io.seasonal_fit_json(fit, kind, train),
            args.out / "residual.csv": io.residual_csv(ili, parts, epoch),
        }
    )
    print(json.dumps(fit.to_dict() if kind is ModelKind.SERFLING else {"model": kind.value, "train_range": str(train)}))
    return EXIT_OK


def cmd_rank(args) -> int:
    (ili, panel, epoch), experiment = _load(args)
    train, _, _ = _ranges(args, experiment, ili.span, need_test=False)
    ranking = _ranking(args, ili, panel, train)
    outputs = {args.out / "ranking.json": io.ranking_json(ranking, panel.names)}
    if panel.labels is not None:
        curve = relevance_curve(ranking, panel)
        outputs[args.out / "relevance.csv"] = io.relevance_csv(curve)
    io.write_outputs(outputs)
    for k, i in enumerate(ranking.order[:20]):
        score = "" if ranking.scores is None else f"{ranking.scores[k]: .3f}"
        print(f"{k + 1:3d} {score} {panel.names[i]}")
    if panel.labels is not None:
        print(f"relevant in ranking: {curve.counts[-1]} of {len(curve.counts)}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    (ili, panel, epoch), experiment = _load(args)
    train, test, window = _ranges(args, experiment, ili.span, need_test=True)
    config = _experiment_config(args, train, test, window)
    spec = estimator_spec(args.estimator).with_queries(args.queries)
    ranking = _ranking(args, ili, panel, train)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        estimates = rolling_estimate(ili, panel, ranking, spec, config, args.lam)
    observed = ili.slice(test.first, test.last)
    io.write_outputs({args.out / "estimates.csv": io.estimates_csv(estimates, observed, epoch)})
    return _convergence_exit(caught)


def cmd_evaluate(args) -> int:
    (ili, panel, epoch), experiment = _load(args)
    train, test, window = _ranges(args, experiment, ili.span, need_test=True)
    config = _experiment_config(args, train, test, window)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        report = run_experiment(config, ili, panel)
    tables = report.table("rmse") + "\n\n" + report.table("pearson") + "\n"
    io.write_outputs(
        {
            args.out / "report.json": io.report_json(report),
            args.out / "report.csv": io.report_csv(report),
            args.out / "sweeps.csv": io.sweeps_csv(report),
            args.out / "tables.txt": tables,
        }
    )
    print(tables, end="")
    return _convergence_exit(caught)


def _convergence_exit(caught) -> int:
    flagged = [w for w in caught if issubclass(w.category, ConvergenceWarning)]
    for w in flagged:
        print(f"warning: {w.message}", file=sys.stderr)
    return EXIT_NUMERICAL if flagged else EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "fit-seasonal": cmd_fit_seasonal,
    "rank": cmd_rank,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"seasonal-ili: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"seasonal-ili: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"seasonal-ili: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
