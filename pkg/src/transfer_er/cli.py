"""Command-line pipeline: synth, featurize, block, train, cv, score, eval, experiment.

Stages talk through files. Every run writes its resolved settings to
``<out-dir>/plan.json``. Exit codes: 0 success, 2 usage, 3 validation,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .blocking import generate_candidates, print_stats, write_candidates
from .cv import select_lambda
from .evaluation import bootstrap_band, pr_curve, precision_at_recall, test_error
from .features import (FeatureSpec, RecordError, Standardizer, add_constant, featurize_pairs,
                       fit_standardizer, normalize_record, read_feature_csv, read_pairs_csv,
                       read_records, write_feature_csv, write_records, RawRecord)
from .model import ModelFormatError, TransferModel, model_from_dict, model_to_dict
from .solver import (DivergenceError, IndepModel, SolverConfig, fit_indep, fit_pooled,
                     fit_transfer, objective)

log = logging.getLogger("transfer_er")

EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 2, 3, 4


class UsageError(Exception):
    pass


# --- helpers ------------------------------------------------------------------

def _out(args, name) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _write_plan(args, resolved=None) -> None:
    # out_dir is left out so that runs into different directories compare equal
    doc = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir", "verbose")}
    doc["version"] = __version__
    if resolved:
        doc["resolved"] = resolved
    _write_json(_out(args, "plan.json"), doc)


def _pair_arg(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts) or parts[0] == parts[1]:
        raise argparse.ArgumentTypeError(f"expected two distinct source names 'a,b', got {text!r}")
    return tuple(sorted(parts))


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _solver_config(args, lambda_a=0.0) -> SolverConfig:
    return SolverConfig(lambda_a=lambda_a, max_iters=args.max_iters, tol=args.tol, step=args.step,
                        step_size=args.step_size, ridge_scale=args.ridge_scale, seed=args.seed)


def _load_any_model(path):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    if doc.get("kind") == "indep":
        try:
            return IndepModel.from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{path}: bad indep model ({exc})") from exc
    return model_from_dict(doc)


def _model_doc(model) -> dict:
    return model.to_dict() if isinstance(model, IndepModel) else model_to_dict(model)


def _declared_sources(args, table):
    if args.sources:
        return [s.strip() for s in args.sources.split(",") if s.strip()]
    return table.sources()


def _write_scores(path, table, scores) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_a", "id_a", "source_b", "id_b", "label", "score"])
        for k in range(len(table)):
            w.writerow([table.source_a[k], table.id_a[k], table.source_b[k], table.id_b[k],
                        int(table.label[k]), repr(float(scores[k]))])


# --- subcommands --------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import SynthConfig, generate
    if args.sources < 2:
        raise UsageError("--sources must be at least 2")
    cfg = SynthConfig(n_sources=args.sources, n_entities=args.entities, dim=args.dim,
                      noise_scale_range=(args.noise_min, args.noise_max),
                      heterogeneity=args.heterogeneity, corrupt_fraction=args.corrupt_fraction,
                      pairs_per_source_pair=args.pairs_per_pair, match_fraction=args.match_fraction,
                      test_pairs=args.test_pairs, seed=args.seed)
    ds = generate(cfg)
    names = ds.train.source_names
    rid = lambda e: f"e{int(e):06d}"
    records = [RawRecord(source=names[i], id=rid(e), title=rid(e),
                         attrs=tuple(float(v) for v in ds.records[i, e]))
               for i in range(cfg.n_sources) for e in range(cfg.n_entities)]
    write_records(records, _out(args, "records.jsonl"))
    for split, data, ents in (("train", ds.train, ds.train_entities), ("test", ds.test, ds.test_entities)):
        with open(_out(args, f"{split}_labels.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source_a", "id_a", "source_b", "id_b", "label"])
            for k in range(len(data)):
                w.writerow([names[data.src_a[k]], rid(ents[k, 0]), names[data.src_b[k]],
                            rid(ents[k, 1]), 1 if data.y[k] > 0 else 0])
    truth = ds.ground_truth()
    truth["sources"] = list(names)
    _write_json(_out(args, "truth.json"), truth)
    _write_plan(args, {"synth": cfg.to_dict()})
    log.info("wrote %d records, %d train and %d test pairs", len(records), len(ds.train), len(ds.test))
    return 0


def _spec_for(kind, records) -> FeatureSpec:
    if kind == "auto":
        kind = "numeric" if records and all(r.attrs for r in records) else "movie"
    if kind == "numeric":
        dims = {len(r.attrs) for r in records}
        if len(dims) != 1 or 0 in dims:
            raise RecordError("numeric features need the same number of attrs on every record")
        return FeatureSpec.numeric(dims.pop())
    return FeatureSpec()


def cmd_featurize(args) -> int:
    if args.fit_standardizer and args.standardizer:
        raise UsageError("--fit-standardizer and --standardizer are mutually exclusive")
    records = [normalize_record(r) for r in read_records(args.records)]
    spec = _spec_for(args.spec, records)
    table = featurize_pairs(records, read_pairs_csv(args.pairs), spec)
    if len(table) == 0:
        raise RecordError(f"{args.pairs}: no pairs to featurize")
    std = None
    if args.fit_standardizer:
        std = fit_standardizer(table.X)
        _write_json(_out(args, args.fit_standardizer), std.to_dict())
    elif args.standardizer:
        doc = json.loads(Path(args.standardizer).read_text())
        std = Standardizer.from_dict(doc)
        if len(std.means) != spec.d:
            raise RecordError(f"standardizer has {len(std.means)} features, spec has {spec.d}")
    if std is not None:
        table.X = std.apply(table.X)
    if args.constant:
        table.X = add_constant(table.X)
        table.feature_names = table.feature_names + ("const",)
    write_feature_csv(table, _out(args, args.output))
    _write_plan(args, {"features": list(table.feature_names)})
    return 0


def cmd_block(args) -> int:
    by_source = {}
    for r in read_records(args.records):
        by_source.setdefault(r.source, []).append(normalize_record(r))
    freq = None if args.frequent_threshold <= 0 else args.frequent_threshold
    pairs, stats = generate_candidates(by_source, max_block_size=args.max_block_size,
                                       frequent_threshold=freq)
    write_candidates(pairs, _out(args, args.output))
    print_stats(stats)
    _write_plan(args)
    return 0


def _fit(args, data, lam):
    cfg = _solver_config(args, lam)
    if args.method == "transfer":
        return fit_transfer(data, cfg)
    if args.method == "pooled":
        return fit_pooled(data, cfg)
    return fit_indep(data, cfg)


def _train(args, use_cv: bool) -> int:
    table = read_feature_csv(args.features)
    data = table.to_dataset(_declared_sources(args, table))
    resolved = {"solver": asdict(_solver_config(args)), "sources": list(data.source_names)}
    lam = args.lambda_a
    if use_cv:
        if args.method != "transfer":
            raise UsageError("--cv only applies to --method transfer")
        res = select_lambda(data, cfg=_solver_config(args), fraction=args.cv_fraction,
                            seed=args.seed, folds=args.cv_folds, refit=False)
        res.to_csv(_out(args, "lambda_path.csv"))
        lam = res.chosen
        for n in res.warnings:
            log.warning(n)
    resolved["lambda_a"] = lam
    model, trace = _fit(args, data, lam)
    # fixed field order, so no key sorting here
    _out(args, args.model).write_text(json.dumps(_model_doc(model), indent=1) + "\n")
    trace.to_csv(_out(args, "trace.csv"))
    resolved["final_objective"] = trace.final_objective
    resolved["converged"] = trace.converged
    _write_plan(args, resolved)
    return 0


def cmd_train(args) -> int:
    if args.cv and args.lambda_a is not None:
        raise UsageError("give either --lambda or --cv, not both")
    if args.lambda_a is None:
        args.lambda_a = 0.0
    return _train(args, args.cv)


def cmd_cv(args) -> int:
    args.method = "transfer"
    args.lambda_a = None
    return _train(args, True)


def _scored(args):
    model = _load_any_model(args.model)
    table = read_feature_csv(args.features)
    if tuple(table.feature_names) != tuple(model.feature_names):
        raise RecordError(f"feature columns {list(table.feature_names)} do not match the "
                          f"model's {list(model.feature_names)}")
    data = table.to_dataset(model.sources)
    return model, table, data


def cmd_score(args) -> int:
    model, table, data = _scored(args)
    scores = model.score_many(data.X, data.src_a, data.src_b)
    _write_scores(_out(args, args.output), table, scores)
    summary = {"n": len(data)}
    if isinstance(model, TransferModel):
        summary["objective"] = objective(model, data, model.lambda_a)
    _write_json(_out(args, "score_summary.json"), summary)
    _write_plan(args)
    return 0


def cmd_eval(args) -> int:
    model, table, data = _scored(args)
    if args.eval_pair:
        a, b = args.eval_pair
        keep = np.array([sa == a and sb == b for sa, sb in zip(table.source_a, table.source_b)])
        table = table.subset(keep)
        if len(table) == 0:
            raise RecordError(f"no test examples for evaluation pair {a},{b}")
        data = table.to_dataset(model.sources)
    scores = model.score_many(data.X, data.src_a, data.src_b)
    curve = pr_curve(scores, data.y)
    curve.to_csv(_out(args, "pr.csv"))
    err = test_error(scores, data.y, args.tau)
    with open(_out(args, "eval_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "tau", "test_error"])
        w.writerow([len(data), repr(float(args.tau)), repr(err)])
    if args.at_recall is not None:
        with open(_out(args, "precision_at_recall.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["recall", "precision"])
            w.writerow([repr(float(args.at_recall)), repr(precision_at_recall(curve, args.at_recall))])
    if args.bootstrap:
        grid = np.round(np.linspace(0.05, 1.0, 20), 2)
        band = bootstrap_band(scores, data.y, grid, n_resamples=args.bootstrap, seed=args.seed)
        band.to_csv(_out(args, "pr_band.csv"))
    _write_plan(args)
    return 0


def cmd_experiment(args) -> int:
    from .experiments import ExperimentPlan, run
    from .synth import SynthConfig
    synth = SynthConfig(n_sources=args.sources, heterogeneity=args.heterogeneity,
                        corrupt_fraction=args.corrupt_fraction, seed=args.seed)
    kw = {}
    if args.budgets:
        kw["budgets"] = args.budgets
    if args.n_list:
        kw["n_list"] = args.n_list
    if args.eval_pair:
        kw["eval_pair"] = args.eval_pair
    plan = ExperimentPlan(args.family, synth=synth, methods=tuple(args.methods.split(",")),
                          trials=args.trials, seed=args.seed, labels_per_source=args.labels_per_source,
                          threads=args.threads, at_recall=args.at_recall, **kw)
    report = run(plan)
    report.write(args.out_dir)
    for w in report.warnings:
        log.warning(w)
    return 0


# --- parser -------------------------------------------------------------------

def _add_solver_flags(p):
    p.add_argument("--max-iters", type=int, default=10000)
    p.add_argument("--tol", type=float, default=1e-8, help="relative objective change to stop at")
    p.add_argument("--step", choices=("backtracking", "fixed"), default="backtracking")
    p.add_argument("--step-size", type=float, default=None,
                   help="initial (or fixed) step; default 1/L from a power-iteration estimate")
    p.add_argument("--ridge-scale", type=float, default=1e-6, help="indep ridge scale")
    p.add_argument("--sources", default=None,
                   help="comma-separated source names in index order (default: sorted from the file)")
    p.add_argument("--model", default="model.json", help="model file name inside --out-dir")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads for experiments (default 1)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="output directory (default $ER_OUT_DIR or .)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="transfer-er", parents=[common],
                                     description="Multi-source entity resolution with transfer learning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic multi-source dataset")
    p.add_argument("--sources", type=int, default=10)
    p.add_argument("--entities", type=int, default=2000)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--noise-min", type=float, default=0.01)
    p.add_argument("--noise-max", type=float, default=0.15)
    p.add_argument("--heterogeneity", type=float, default=2.5)
    p.add_argument("--corrupt-fraction", type=float, default=0.3)
    p.add_argument("--pairs-per-pair", type=int, default=50, help="labeled train pairs per source pair")
    p.add_argument("--test-pairs", type=int, default=2000)
    p.add_argument("--match-fraction", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", parents=[common], help="turn record pairs into feature vectors")
    p.add_argument("--records", required=True, help="records JSONL")
    p.add_argument("--pairs", required=True, help="pairs CSV (source_a,id_a,source_b,id_b[,label])")
    p.add_argument("--output", default="features.csv")
    p.add_argument("--spec", choices=("auto", "movie", "numeric"), default="auto")
    p.add_argument("--fit-standardizer", metavar="NAME", default=None,
                   help="fit a standardizer on these pairs, save it as NAME and apply it")
    p.add_argument("--standardizer", metavar="PATH", default=None, help="apply a saved standardizer")
    p.add_argument("--constant", action="store_true", help="append a constant feature")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("block", parents=[common], help="candidate pairs by shared title tokens")
    p.add_argument("--records", required=True)
    p.add_argument("--output", default="candidates.csv")
    p.add_argument("--max-block-size", type=int, default=1000)
    p.add_argument("--frequent-threshold", type=float, default=0.05,
                   help="drop title tokens in more than this share of a source's records (0 disables)")
    p.set_defaults(func=cmd_block)

    p = sub.add_parser("train", parents=[common], help="fit a model on a features CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--method", choices=("transfer", "pooled", "indep"), default="transfer")
    p.add_argument("--lambda", dest="lambda_a", type=float, default=None)
    p.add_argument("--cv", action="store_true", help="choose lambda on a held-out split")
    p.add_argument("--cv-fraction", type=float, default=0.2)
    p.add_argument("--cv-folds", type=int, default=None)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", parents=[common], help="select lambda and fit the transfer model")
    p.add_argument("--features", required=True)
    p.add_argument("--cv-fraction", type=float, default=0.2)
    p.add_argument("--cv-folds", type=int, default=None)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("score", parents=[common], help="score a features CSV with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--output", default="scores.csv")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common], help="PR curve and test error on labeled features")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--eval-pair", type=_pair_arg, default=None, metavar="A,B")
    p.add_argument("--at-recall", type=float, default=None)
    p.add_argument("--bootstrap", type=int, default=0, metavar="N",
                   help="write a bootstrap PR band from N resamples")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", parents=[common], help="run an experiment family")
    p.add_argument("--family", required=True,
                   choices=("pr_grid", "summary", "sample_complexity", "source_complexity", "runtime"))
    p.add_argument("--methods", default="transfer,pooled,indep")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--budgets", type=_int_list, default=None)
    p.add_argument("--n-list", type=_int_list, default=None)
    p.add_argument("--labels-per-source", type=int, default=200)
    p.add_argument("--sources", type=int, default=10)
    p.add_argument("--heterogeneity", type=float, default=2.5)
    p.add_argument("--corrupt-fraction", type=float, default=0.3)
    p.add_argument("--eval-pair", type=_pair_arg, default=None, metavar="A,B")
    p.add_argument("--at-recall", type=float, default=0.85)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, default in (("seed", 0), ("threads", 1), ("verbose", False),
                         ("out_dir", os.environ.get("ER_OUT_DIR", "."))):
        if not hasattr(args, key):
            setattr(args, key, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"transfer-er: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (RecordError, ModelFormatError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"transfer-er: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
