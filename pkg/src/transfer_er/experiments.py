"""Experiment harness: sample complexity, source complexity, runtime and PR grids.

Every family builds a list of independent trials, runs them (optionally on a
thread pool) and aggregates in trial order, so results depend only on the
plan. Timing values are kept in columns named ``elapsed_seconds`` or files
whose name ends in ``_timing.csv``.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations
from pathlib import Path

import numpy as np

from .cv import NoHoldoutError, select_lambda
from .evaluation import band_curves, pr_curve, precision_at_recall, test_error
from .features import FeatureSpec, add_constant, featurize_pairs, fit_standardizer, normalize_record
from .solver import (Dataset, DivergenceError, SolverConfig, fit_indep, fit_pooled, fit_transfer,
                     lambda_max)
from .synth import SynthConfig, generate, sweep_sources

log = logging.getLogger(__name__)

METHODS = ("transfer", "pooled", "indep")
FAMILIES = ("pr_grid", "summary", "sample_complexity", "source_complexity", "runtime")


@dataclass(frozen=True)
class ExperimentPlan:
    family: str
    synth: SynthConfig = SynthConfig()
    methods: tuple[str, ...] = METHODS
    trials: int = 20
    seed: int = 0
    # examples per source pair (sample_complexity, runtime); labels per added
    # source (source_complexity); see ``budget_kind`` for pr_grid
    budgets: tuple[int, ...] = (10, 25, 50, 100, 200)
    n_list: tuple[int, ...] = (2, 4, 6, 8, 10)
    labels_per_source: int = 200
    budget_kind: tuple[str, ...] = ("pair", "source", "total")
    constant_feature: bool = True
    solver: SolverConfig = SolverConfig(tol=1e-7, max_iters=5000)
    cv_fraction: float = 0.2
    cv_folds: int | None = None
    at_recall: float = 0.85
    recall_grid: tuple[float, ...] = tuple(np.round(np.linspace(0.05, 1.0, 20), 2))
    eval_pair: tuple[str, str] = ("imdb", "itunes")
    test_fraction: float = 0.3
    threads: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown experiment family {self.family!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(b <= 0 for b in self.budgets):
            raise ValueError("budgets must be positive")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["synth"] = self.synth.to_dict()
        doc["recall_grid"] = [float(r) for r in self.recall_grid]
        return doc


@dataclass
class ExperimentReport:
    plan: ExperimentPlan
    tables: dict[str, list[dict]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    failures: int = 0

    def table(self, name):
        return self.tables.setdefault(name, [])

    def mean_error(self, method, key, value, table="errors") -> float:
        rows = [r for r in self.tables[table]
                if r["method"] == method and r[key] == value and r["status"] == "ok"]
        return float(np.mean([r["test_error"] for r in rows]))

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_text(json.dumps(self.plan.to_dict(), indent=1, sort_keys=True) + "\n")
        for name, rows in self.tables.items():
            if not rows:
                continue
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
                w.writeheader()
                for row in rows:
                    w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        lines = list(self.warnings) + [f"failed trials: {self.failures}"]
        (out / "warnings.log").write_text("\n".join(lines) + "\n")


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(trial,)).generate_state(1)[0])


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --- shared fitting -----------------------------------------------------------

def _design(std, X, constant):
    Z = std.apply(X)
    return add_constant(Z) if constant else Z


def fit_methods(train: Dataset, test: Dataset, plan: ExperimentPlan, seed: int,
                callbacks=None):
    """Fit each planned method on ``train`` and score ``test``.

    Returns ``{method: (scores, info)}``; failed fits map to ``(None, info)``
    with the error message in ``info["error"]``.
    """
    std = fit_standardizer(train.X)
    fnames = train.feature_names + (("const",) if plan.constant_feature else ())
    tr = Dataset(_design(std, train.X, plan.constant_feature), train.src_a, train.src_b, train.y,
                 train.n_sources, train.source_names, fnames)
    Xte = _design(std, test.X, plan.constant_feature)
    all_pairs = list(combinations(range(train.n_sources), 2))
    callbacks = callbacks or {}
    out = {}
    for method in plan.methods:
        info = {}
        try:
            if method == "pooled":
                model, trace = fit_pooled(tr, plan.solver, callback=callbacks.get(method))
            elif method == "indep":
                model, trace = fit_indep(tr, plan.solver, pairs=all_pairs)
                info["unseen_pairs"] = len(model.warnings)
            else:
                # selection standardizes each training portion on its own
                try:
                    lam = select_lambda(train, cfg=plan.solver, fraction=plan.cv_fraction,
                                        seed=seed, folds=plan.cv_folds, standardize=True,
                                        constant_feature=plan.constant_feature, refit=False).chosen
                except NoHoldoutError:
                    # too few labels to hold any out: share everything
                    lam = lambda_max(tr)
                    log.warning("no hold-out set for %d examples; using lambda_max=%r", len(train), lam)
                info["lambda_a"] = lam
                model, trace = fit_transfer(tr, replace(plan.solver, lambda_a=lam),
                                            callback=callbacks.get(method))
            info["trace"] = trace
            out[method] = (model.score_many(Xte, test.src_a, test.src_b), info)
        except (DivergenceError, np.linalg.LinAlgError, ValueError) as exc:
            info["error"] = str(exc)
            out[method] = (None, info)
    return out, Xte


def _error_rows(fitted, test, extra):
    rows = []
    for method, (scores, info) in fitted.items():
        row = dict(extra, method=method)
        if scores is None:
            row.update(test_error=float("nan"), status="failed")
        else:
            row.update(test_error=test_error(scores, test.y), status="ok")
        row["lambda_a"] = float(info.get("lambda_a", float("nan")))
        rows.append(row)
    return rows


def _summarize(report, key, values):
    """Mean error with a 95% normal band per method and budget value."""
    summary = report.table("summary")
    for method in report.plan.methods:
        for v in values:
            errs = [r["test_error"] for r in report.tables["errors"]
                    if r["method"] == method and r[key] == v and r["status"] == "ok"]
            n = len(errs)
            mean = float(np.mean(errs)) if n else float("nan")
            half = float(1.96 * np.std(errs) / np.sqrt(n)) if n > 1 else 0.0
            summary.append({"method": method, key: v, "trials": n, "mean_error": mean,
                            "lo": mean - half, "hi": mean + half})


def _collect(report, results):
    for rows, notes in results:
        for row in rows:
            if row["status"] != "ok":
                report.failures += 1
        report.table("errors").extend(rows)
        report.warnings.extend(notes)


# --- families -----------------------------------------------------------------

def run_sample_complexity(plan: ExperimentPlan) -> ExperimentReport:
    """Test error against the number of labeled examples per source pair."""
    report = ExperimentReport(plan)

    def one(job):
        budget, t = job
        seed = trial_seed(plan.seed, t)
        data = generate(replace(plan.synth, pairs_per_source_pair=budget, seed=seed,
                                labeled_pairs=None))
        fitted, _ = fit_methods(data.train, data.test, plan, seed)
        notes = [f"budget={budget} trial={t} {m}: {i['error']}" for m, (s, i) in fitted.items()
                 if s is None]
        return _error_rows(fitted, data.test, {"examples_per_pair": budget, "trial": t,
                                               "train_size": len(data.train)}), notes

    jobs = [(b, t) for b in plan.budgets for t in range(plan.trials)]
    _collect(report, _map(one, jobs, plan.threads))
    _summarize(report, "examples_per_pair", list(plan.budgets))
    return report


def run_source_complexity(plan: ExperimentPlan) -> ExperimentReport:
    """Test error against the number of sources, with a label budget linear in it."""
    report = ExperimentReport(plan)

    def one(t):
        seed = trial_seed(plan.seed, t)
        datasets = sweep_sources(replace(plan.synth, seed=seed), plan.n_list, plan.labels_per_source)
        rows, notes = [], []
        for n, data in zip(plan.n_list, datasets):
            fitted, _ = fit_methods(data.train, data.test, plan, seed)
            notes += [f"n_sources={n} trial={t} {m}: {i['error']}" for m, (s, i) in fitted.items()
                      if s is None]
            rows += _error_rows(fitted, data.test, {"n_sources": n, "trial": t,
                                                    "train_size": len(data.train)})
        return rows, notes

    _collect(report, _map(one, range(plan.trials), plan.threads))
    _summarize(report, "n_sources", list(plan.n_list))
    return report


def _checkpoints(max_iters):
    pts, k = {0}, 1
    while k <= max_iters:
        pts.add(k)
        k *= 2
    return pts


def run_runtime(plan: ExperimentPlan) -> ExperimentReport:
    """Test error along each solver's iterations, plus final errors."""
    report = ExperimentReport(plan)
    checkpoints = _checkpoints(plan.solver.max_iters)

    def one(job):
        budget, t = job
        seed = trial_seed(plan.seed, t)
        data = generate(replace(plan.synth, pairs_per_source_pair=budget, seed=seed,
                                labeled_pairs=None))
        probes = {}
        holder = {}

        def make_cb(method):
            probes[method] = []

            def cb(it, w0, W):
                if it in checkpoints:
                    from .kernels import forward
                    s = forward(holder["Xte"], data.test.src_a, data.test.src_b, w0, W)
                    probes[method].append((it, test_error(s, data.test.y)))
            return cb

        # test design is needed inside callbacks; build it with the same standardizer
        std = fit_standardizer(data.train.X)
        holder["Xte"] = _design(std, data.test.X, plan.constant_feature)
        fitted, _ = fit_methods(data.train, data.test, plan, seed,
                                callbacks={m: make_cb(m) for m in ("transfer", "pooled")})
        rows = _error_rows(fitted, data.test, {"examples_per_pair": budget, "trial": t})
        traj = []
        for method, (scores, info) in fitted.items():
            trace = info.get("trace")
            if trace is None:
                continue
            if method == "indep":
                points = [(trace.iters[-1], test_error(scores, data.test.y))]
            else:
                points = probes.get(method, [])
                last = trace.iters[-1]
                if not points or points[-1][0] != last:
                    points.append((last, test_error(scores, data.test.y)))
            pos = {it: k for k, it in enumerate(trace.iters)}
            for it, err in points:
                k = pos[it]
                traj.append({"method": method, "examples_per_pair": budget, "trial": t,
                             "iter": it, "objective": trace.objective[k], "test_error": err,
                             "elapsed_seconds": trace.elapsed_seconds[k]})
        notes = [f"budget={budget} trial={t} {m}: {i['error']}" for m, (s, i) in fitted.items()
                 if s is None]
        return rows, notes, traj

    jobs = [(b, t) for b in plan.budgets for t in range(plan.trials)]
    results = _map(one, jobs, plan.threads)
    _collect(report, [(r, n) for r, n, _ in results])
    for _, _, traj in results:
        report.table("trajectory").extend(traj)
    _summarize(report, "examples_per_pair", list(plan.budgets))
    return report


# --- PR grid on labeled record data ---------------------------------------------

def _sample_budget(pairs, kind, budget, sources, rng):
    """Indices of training examples for one budget row.

    ``pair``: ``budget`` per source pair; ``source``: ``budget`` per source,
    spread over its pairs; ``total``: ``budget`` overall, spread over pairs.
    """
    by_pair = {}
    for k, p in enumerate(pairs):
        by_pair.setdefault(p, []).append(k)
    keys = sorted(by_pair)
    if kind == "pair":
        want = {p: budget for p in keys}
    else:
        total = budget * len(sources) if kind == "source" else budget
        base, extra = divmod(total, len(keys))
        want = {p: base + (1 if i < extra else 0) for i, p in enumerate(keys)}
    picked = []
    for p in keys:
        idx = np.array(by_pair[p])
        n = min(want[p], len(idx))
        picked.extend(rng.choice(idx, size=n, replace=False).tolist())
    return np.sort(np.array(picked, dtype=np.int64))


def run_pr_grid(plan: ExperimentPlan, records=None, labeled=None, spec: FeatureSpec = FeatureSpec()):
    """Banded PR curves per method and budget row, evaluated on one source pair.

    ``records``/``labeled`` default to the bundled toy movie fixture.
    """
    if records is None or labeled is None:
        from .toy import load_fixture
        records, labeled = load_fixture()
    report = ExperimentReport(plan)
    records = [normalize_record(r) for r in records]
    table = featurize_pairs(records, labeled, spec)
    data = table.to_dataset()
    names = list(data.source_names)
    ea, eb = sorted(plan.eval_pair)
    if ea not in names or eb not in names:
        raise ValueError(f"evaluation pair {plan.eval_pair} not among sources {names}")
    ia, ib = names.index(ea), names.index(eb)

    # fixed test split: a fraction of every source pair's labels, drawn once
    rng = np.random.default_rng(plan.seed)
    is_test = np.zeros(len(data), dtype=bool)
    codes = data.pair_codes()
    for c in np.unique(codes):
        idx = np.flatnonzero(codes == c)
        k = int(round(plan.test_fraction * len(idx)))
        is_test[rng.choice(idx, size=k, replace=False)] = True
    eval_mask = is_test & (data.src_a == ia) & (data.src_b == ib)
    test = data.subset(np.flatnonzero(eval_mask))
    pool = np.flatnonzero(~is_test)
    pool_pairs = [(int(data.src_a[k]), int(data.src_b[k])) for k in pool]

    def one(job):
        kind, budget, t = job
        seed = trial_seed(plan.seed, t)
        idx = pool[_sample_budget(pool_pairs, kind, budget, names, np.random.default_rng(seed))]
        train = data.subset(idx)
        fitted, _ = fit_methods(train, test, plan, seed)
        out = []
        for method, (scores, info) in fitted.items():
            out.append((method, None if scores is None else pr_curve(scores, test.y),
                        info.get("error"), len(train)))
        return job, out

    jobs = [(kind, b, t) for kind in plan.budget_kind for b in plan.budgets for t in range(plan.trials)]
    results = _map(one, jobs, plan.threads)
    grid = np.array(plan.recall_grid, dtype=np.float64)
    curves = {}
    for (kind, budget, t), out in results:
        for method, curve, err, n_train in out:
            if curve is None:
                report.failures += 1
                report.warnings.append(f"{kind}={budget} trial={t} {method}: {err}")
                continue
            curves.setdefault((kind, budget, method), []).append(curve)
            report.table("precision_at_recall_trials").append(
                {"budget_kind": kind, "budget": budget, "method": method, "trial": t,
                 "train_size": n_train,
                 "precision": precision_at_recall(curve, plan.at_recall, warn=False)})
    for kind in plan.budget_kind:
        for budget in plan.budgets:
            for method in plan.methods:
                cs = curves.get((kind, budget, method), [])
                if not cs:
                    continue
                precs = [precision_at_recall(c, plan.at_recall, warn=False) for c in cs]
                report.table("precision_at_recall").append(
                    {"budget_kind": kind, "budget": budget, "method": method, "trials": len(cs),
                     "recall": plan.at_recall, "mean_precision": float(np.mean(precs))})
                if len(cs) < 2:
                    continue
                band = band_curves(cs, grid)
                for r, m, lo, hi in zip(band.recall, band.mean, band.lo, band.hi):
                    report.table("pr_bands").append(
                        {"budget_kind": kind, "budget": budget, "method": method,
                         "recall": float(r), "mean_precision": float(m), "lo": float(lo),
                         "hi": float(hi)})
    return report


def run(plan: ExperimentPlan) -> ExperimentReport:
    if plan.family == "sample_complexity":
        return run_sample_complexity(plan)
    if plan.family == "source_complexity":
        return run_source_complexity(plan)
    if plan.family == "runtime":
        return run_runtime(plan)
    return run_pr_grid(plan)
