"""Selection of the l1 weight ``lambda_a`` on held-out data."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import test_error
from .features import Standardizer, add_constant, fit_standardizer
from .model import TransferModel
from .solver import Dataset, DivergenceError, SolverConfig, fit_transfer, lambda_max

log = logging.getLogger(__name__)


class NoHoldoutError(ValueError):
    """Every stratum is too small to hold anything out."""


def default_grid(lmax: float, n: int = 10, ratio: float = 1e-4) -> np.ndarray:
    """``n`` log-spaced values in ``[ratio * lmax, lmax]``."""
    if not lmax > 0:
        return np.array([0.0])
    return np.geomspace(ratio * lmax, lmax, n)


def _strata(data: Dataset):
    key = data.pair_codes() * 2 + (data.y > 0)
    order = np.argsort(key, kind="stable")
    uniq, starts = np.unique(key[order], return_index=True)
    return np.split(order, starts[1:])


def holdout_split(data: Dataset, fraction: float = 0.2, seed: int = 0):
    """Split into ``(train_idx, holdout_idx, warnings)``, stratified by (pair, label).

    Strata with fewer than two examples stay entirely in train.
    """
    if not 0 < fraction < 1:
        raise ValueError("holdout fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, hold, notes = [], [], []
    for idx in _strata(data):
        if len(idx) < 2:
            train.append(idx)
            notes.append(f"stratum of pair ({data.src_a[idx[0]]}, {data.src_b[idx[0]]}) "
                         f"label {int(data.y[idx[0]])} has {len(idx)} example; kept in train")
            continue
        idx = rng.permutation(idx)
        k = min(max(int(round(fraction * len(idx))), 1), len(idx) - 1)
        hold.append(idx[:k])
        train.append(idx[k:])
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
    for n in notes:
        log.warning(n)
    return cat(train), cat(hold), notes


def kfold_indices(data: Dataset, k: int = 10, seed: int = 0):
    """Stratified folds: list of ``(train_idx, test_idx)``."""
    if k < 2:
        raise ValueError("k-fold needs k >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(data), dtype=np.int64)
    offset = 0
    for idx in _strata(data):
        idx = rng.permutation(idx)
        fold_of[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return [(np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)) for f in range(k)]


@dataclass
class CVResult:
    lambdas: np.ndarray
    errors: np.ndarray          # nan where the fit failed
    chosen: float
    model: TransferModel | None = None
    standardizer: Standardizer | None = None
    warnings: list[str] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "holdout_error"])
            for lam, err in zip(self.lambdas, self.errors):
                w.writerow([repr(float(lam)), "" if np.isnan(err) else repr(float(err))])


def _prepare(train: Dataset, test: Dataset, standardize: bool, constant: bool = False):
    std = fit_standardizer(train.X) if standardize else None

    def design(d):
        X = std.apply(d.X) if std is not None else d.X
        if not constant:
            return d.with_features(X)
        return Dataset(add_constant(X), d.src_a, d.src_b, d.y, d.n_sources, d.source_names,
                       d.feature_names + ("const",))

    return design(train), design(test), std


def _path_errors(train, test, grid, cfg, notes):
    """Hold-out error per grid value, fitting from the largest lambda down with warm starts."""
    errors = np.full(len(grid), np.nan)
    init = None
    for g in np.argsort(grid)[::-1]:
        lam = float(grid[g])
        try:
            model, _ = fit_transfer(train, replace(cfg, lambda_a=lam), init=init)
        except DivergenceError as exc:
            notes.append(f"lambda={lam!r} skipped: {exc}")
            init = None
            continue
        init = (model.w0, model.w)
        errors[g] = test_error(model.score_many(test.X, test.src_a, test.src_b), test.y)
    return errors


def select_lambda(data: Dataset, grid=None, cfg: SolverConfig = SolverConfig(),
                  fraction: float = 0.2, seed: int = 0, folds: int | None = None,
                  standardize: bool = False, constant_feature: bool = False,
                  refit: bool = True) -> CVResult:
    """Choose ``lambda_a`` by hold-out (default) or k-fold test error at tau = 0.

    Ties go to the larger lambda. With ``standardize`` the features are
    standardized with statistics of each training portion only, and the refit
    on all data returns its own standardizer. ``constant_feature`` appends a
    column of ones after standardization.
    """
    notes = []
    if folds:
        splits = [(tr, te) for tr, te in kfold_indices(data, folds, seed)]
    else:
        tr, te, split_notes = holdout_split(data, fraction, seed)
        notes.extend(split_notes)
        splits = [(tr, te)]
    if grid is None:
        first = data.subset(splits[0][0])
        first_train, _, _ = _prepare(first, first, standardize, constant_feature)
        grid = default_grid(lambda_max(first_train))
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty lambda grid")

    per_split = []
    for tr, te in splits:
        if len(te) == 0:
            continue
        train, test, _ = _prepare(data.subset(tr), data.subset(te), standardize, constant_feature)
        per_split.append(_path_errors(train, test, grid, cfg, notes))
    if not per_split:
        raise NoHoldoutError("no held-out examples to select lambda with")
    errors = np.mean(per_split, axis=0)
    for n in notes:
        log.warning(n)
    if np.all(np.isnan(errors)):
        raise DivergenceError(-1, float("nan"))
    best = np.nanmin(errors)
    chosen = float(grid[errors == best].max())

    model = std = None
    if refit:
        full, _, std = _prepare(data, data, standardize, constant_feature)
        model, _ = fit_transfer(full, replace(cfg, lambda_a=chosen))
    return CVResult(grid, errors, chosen, model, std, notes)
