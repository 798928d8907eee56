"""Composite gradient descent for the pairwise transfer model and its baselines.

The smooth part of the objective is the squared loss

    L = 1/2 * sum_k (y_k - <w0 + (w[a_k] + w[b_k]) / 2, x_k>)^2

and the nonsmooth part is ``lambda_a * sum_i ||w[i]||_1``. Each iteration takes
a gradient step on ``w0`` and a gradient step followed by soft-thresholding
on every ``w[i]``.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from . import kernels
from .model import LabeledExample, SourcePair, TransferModel, as_pair

log = logging.getLogger(__name__)


class DivergenceError(ArithmeticError):
    """The objective became non-finite during a fit."""

    def __init__(self, iteration: int, value: float):
        super().__init__(f"objective became non-finite ({value}) at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class Dataset:
    """Labeled pair examples stored column-wise.

    ``src_a[k] < src_b[k]`` always holds; labels are +1/-1 floats.
    """

    X: np.ndarray
    src_a: np.ndarray
    src_b: np.ndarray
    y: np.ndarray
    n_sources: int
    source_names: tuple[str, ...] = ()
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {X.shape}")
        n, d = X.shape
        a = np.asarray(self.src_a, dtype=np.int64).reshape(-1)
        b = np.asarray(self.src_b, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if not (len(a) == len(b) == len(y) == n):
            raise ValueError("X, src_a, src_b and y must have the same length")
        y = np.where(y == 0, -1.0, y)
        if not np.all(np.abs(y) == 1):
            raise ValueError("labels must be +1/-1 (or 0/1)")
        if np.any(a == b):
            raise ValueError("an example pairs a source with itself")
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        if n and (lo.min() < 0 or hi.max() >= self.n_sources):
            raise ValueError(f"source index outside [0, {self.n_sources - 1}]")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        names = tuple(self.source_names) or tuple(f"s{i}" for i in range(self.n_sources))
        if len(names) != self.n_sources:
            raise ValueError("source_names must have n_sources entries")
        fnames = tuple(self.feature_names) or tuple(f"f_{j + 1}" for j in range(d))
        if len(fnames) != d:
            raise ValueError("feature_names must have d entries")
        for attr, val in (("X", X), ("src_a", lo), ("src_b", hi), ("y", y)):
            val.flags.writeable = False
            object.__setattr__(self, attr, val)
        object.__setattr__(self, "source_names", names)
        object.__setattr__(self, "feature_names", fnames)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def examples(self) -> Iterator[LabeledExample]:
        for k in range(len(self)):
            yield LabeledExample(self.X[k], SourcePair(int(self.src_a[k]), int(self.src_b[k])),
                                 int(self.y[k]))

    @classmethod
    def from_examples(cls, examples: Iterable[LabeledExample], n_sources: int, **kw) -> "Dataset":
        examples = list(examples)
        if not examples:
            raise ValueError("no examples")
        return cls(np.stack([e.x for e in examples]),
                   [e.pair.a.index for e in examples], [e.pair.b.index for e in examples],
                   [e.y for e in examples], n_sources, **kw)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.src_a[idx], self.src_b[idx], self.y[idx],
                       self.n_sources, self.source_names, self.feature_names)

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.src_a, self.src_b, self.y, self.n_sources,
                       self.source_names, self.feature_names)

    def pair_codes(self) -> np.ndarray:
        """Integer code ``a * N + b`` per example, handy for grouping."""
        return self.src_a * self.n_sources + self.src_b

    def pairs(self) -> list[tuple[int, int]]:
        codes = np.unique(self.pair_codes())
        return [(int(c // self.n_sources), int(c % self.n_sources)) for c in codes]


@dataclass(frozen=True)
class SolverConfig:
    """Fit settings.

    ``step`` is ``"backtracking"`` (start every iteration from ``step_size``
    and shrink until sufficient decrease) or ``"fixed"``. When ``step_size``
    is None it defaults to the inverse of a power-iteration estimate of the
    loss Hessian's top eigenvalue.
    """

    lambda_a: float = 0.0
    max_iters: int = 10000
    tol: float = 1e-8
    step: str = "backtracking"
    step_size: float | None = None
    shrink: float = 0.5
    seed: int = 0
    ridge_scale: float = 1e-6
    power_iters: int = 20

    def __post_init__(self):
        if self.lambda_a < 0:
            raise ValueError("lambda_a must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.step not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step policy {self.step!r}")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.ridge_scale < 0:
            raise ValueError("ridge_scale must be nonnegative")


@dataclass
class SolverTrace:
    iters: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    step_size: list[float] = field(default_factory=list)
    elapsed_seconds: list[float] = field(default_factory=list)
    converged: bool = False

    def record(self, it, obj, step, elapsed):
        self.iters.append(it)
        self.objective.append(float(obj))
        self.step_size.append(float(step))
        self.elapsed_seconds.append(float(elapsed))

    def __len__(self):
        return len(self.iters)

    @property
    def final_objective(self) -> float:
        return self.objective[-1]

    def to_csv(self, path, timing=True) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "objective", "step_size", "elapsed_seconds"])
            for row in zip(self.iters, self.objective, self.step_size, self.elapsed_seconds):
                it, obj, step, el = row
                w.writerow([it, repr(obj), repr(step), repr(el) if timing else ""])


def _check_dims(model: TransferModel, data: Dataset):
    if model.d != data.dim:
        raise ValueError(f"model dimension {model.d} != data dimension {data.dim}")
    if model.n_sources != data.n_sources:
        raise ValueError(f"model has {model.n_sources} sources, data has {data.n_sources}")


def _residual(data, w0, W):
    return data.y - kernels.forward(data.X, data.src_a, data.src_b, w0, W)


def objective(model: TransferModel, data: Dataset, lambda_a: float) -> float:
    _check_dims(model, data)
    r = _residual(data, model.w0, model.w)
    return float(0.5 * (r @ r) + lambda_a * np.abs(model.w).sum())


def loss_gradient(model: TransferModel, data: Dataset):
    """Gradient of the squared loss: ``(grad_w0, grad_w)`` with shapes (d,), (N, d)."""
    _check_dims(model, data)
    r = _residual(data, model.w0, model.w)
    s0, S = kernels.backward(data.X, data.src_a, data.src_b, r, data.n_sources)
    return -s0, -S


def soft_threshold(v, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    return kernels.soft_threshold(v, tau)


def estimate_lipschitz(data: Dataset, iters: int = 20, sources: bool = True) -> float:
    """Power-iteration estimate of the top eigenvalue of the loss Hessian."""
    d, N = data.dim, data.n_sources
    v0 = np.ones(d)
    V = np.ones((N, d)) if sources else np.zeros((N, d))
    lam = 0.0
    for _ in range(iters):
        norm = np.sqrt(v0 @ v0 + (V * V).sum())
        if norm == 0:
            return 0.0
        v0, V = v0 / norm, V / norm
        p = kernels.forward(data.X, data.src_a, data.src_b, v0, V)
        h0, H = kernels.backward(data.X, data.src_a, data.src_b, p, N)
        if not sources:
            H = np.zeros_like(H)
        lam = float(v0 @ h0 + (V * H).sum())
        v0, V = h0, H
    return lam


# non-finite values are detected and raised as DivergenceError below
@np.errstate(over="ignore", invalid="ignore")
def _composite_descent(data, cfg, free_sources, init=None, callback=None):
    if len(data) == 0:
        raise ValueError("cannot fit on an empty dataset")
    d, N = data.dim, data.n_sources
    lam = cfg.lambda_a if free_sources else 0.0
    if init is None:
        w0, W = np.zeros(d), np.zeros((N, d))
    else:
        w0, W = np.array(init[0], dtype=np.float64), np.array(init[1], dtype=np.float64)
        if not free_sources:
            W = np.zeros((N, d))

    gamma0 = cfg.step_size
    if gamma0 is None:
        lip = estimate_lipschitz(data, cfg.power_iters, sources=free_sources)
        gamma0 = 1.0 / lip if lip > 0 else 1.0
    backtrack = cfg.step == "backtracking"

    trace = SolverTrace()
    t_solver = 0.0
    t_start = time.perf_counter()
    r = _residual(data, w0, W)
    loss = 0.5 * (r @ r)
    F = loss + lam * np.abs(W).sum()
    t_solver += time.perf_counter() - t_start
    trace.record(0, F, 0.0, t_solver)
    if callback is not None:
        callback(0, w0, W)

    for it in range(1, cfg.max_iters + 1):
        t_start = time.perf_counter()
        s0, S = kernels.backward(data.X, data.src_a, data.src_b, r, N)
        if not free_sources:
            S = np.zeros_like(S)
        gamma = gamma0
        while True:
            w0n = w0 + gamma * s0
            Wn = kernels.soft_threshold(W + gamma * S, gamma * lam) if free_sources else W
            rn = _residual(data, w0n, Wn)
            lossn = 0.5 * (rn @ rn)
            if not backtrack:
                break
            if np.isfinite(lossn):
                d0, dW = w0n - w0, Wn - W
                # quadratic upper bound at the current point; gradient is (-s0, -S)
                bound = loss - (s0 @ d0 + (S * dW).sum()) + ((d0 @ d0) + (dW * dW).sum()) / (2 * gamma)
                if lossn <= bound + 1e-13 * loss:
                    break
            gamma *= cfg.shrink
            if gamma < gamma0 * 1e-30:
                break
        Fn = lossn + lam * np.abs(Wn).sum()
        if not np.isfinite(Fn):
            raise DivergenceError(it, float(Fn))
        # decrease computed from the parameter change, free of the cancellation
        # in F - Fn once both agree to machine precision
        dr = kernels.forward(data.X, data.src_a, data.src_b, w0n - w0, Wn - W)
        dec = float(dr @ (r + rn)) / 2 + lam * float((np.abs(W) - np.abs(Wn)).sum())
        if backtrack and dec < 0:
            trace.converged = True
            break
        rel = abs(dec) / max(abs(F), 1e-300)
        F = F - dec if backtrack else Fn
        w0, W, r, loss = w0n, Wn, rn, lossn
        t_solver += time.perf_counter() - t_start
        trace.record(it, F, gamma, t_solver)
        if callback is not None:
            callback(it, w0, W)
        if rel < cfg.tol:
            trace.converged = True
            break
    return w0, W, trace


def _model(data, w0, W, lam):
    return TransferModel(w0, W, data.feature_names, data.source_names, lam)


def fit_transfer(data: Dataset, cfg: SolverConfig = SolverConfig(), init=None,
                 callback: Callable | None = None):
    """Fit the transfer model; returns ``(TransferModel, SolverTrace)``.

    ``init`` optionally gives a warm start ``(w0, w)``. ``callback(it, w0, w)``
    is invoked after every accepted iteration; its cost is not counted in the
    trace's elapsed time.
    """
    if data.n_sources < 2:
        raise ValueError("transfer needs at least two sources")
    w0, W, trace = _composite_descent(data, cfg, True, init, callback)
    return _model(data, w0, W, cfg.lambda_a), trace


def fit_pooled(data: Dataset, cfg: SolverConfig = SolverConfig(), callback=None):
    """Single shared vector: the transfer fit with every ``w[i]`` held at zero."""
    w0, W, trace = _composite_descent(data, cfg, False, None, callback)
    return _model(data, w0, W, 0.0), trace


def pooled_least_squares(data: Dataset) -> np.ndarray:
    return np.linalg.lstsq(data.X, data.y, rcond=None)[0]


def lambda_max(data: Dataset) -> float:
    """Smallest ``lambda_a`` at which all per-source vectors stay at zero."""
    w0 = pooled_least_squares(data)
    r = data.y - data.X @ w0
    _, S = kernels.backward(data.X, data.src_a, data.src_b, r, data.n_sources)
    return float(np.abs(S).max())


@dataclass
class IndepModel:
    """One independently fitted vector per source pair."""

    weights: dict[tuple[int, int], np.ndarray]
    d: int
    n_sources: int
    feature_names: tuple[str, ...] = ()
    sources: tuple[str, ...] = ()
    warnings: list[str] = field(default_factory=list)

    def weight(self, pair) -> np.ndarray:
        key = as_pair(pair).indices
        w = self.weights.get(key)
        if w is None:
            return np.zeros(self.d)
        return w

    def score(self, pair, x) -> float:
        return float(self.weight(pair) @ np.asarray(x, dtype=np.float64))

    def score_many(self, X, src_a, src_b) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        a, b = np.minimum(src_a, src_b), np.maximum(src_a, src_b)
        out = np.zeros(len(X))
        codes = a * self.n_sources + b
        for code in np.unique(codes):
            key = (int(code // self.n_sources), int(code % self.n_sources))
            w = self.weights.get(key)
            if w is not None:
                m = codes == code
                out[m] = X[m] @ w
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "indep",
            "d": self.d,
            "feature_names": list(self.feature_names),
            "sources": list(self.sources),
            "pairs": [{"a": a, "b": b, "w": w.tolist()} for (a, b), w in sorted(self.weights.items())],
        }

    @classmethod
    def from_dict(cls, doc) -> "IndepModel":
        weights = {(int(p["a"]), int(p["b"])): np.array(p["w"], dtype=np.float64) for p in doc["pairs"]}
        return cls(weights, int(doc["d"]), len(doc["sources"]), tuple(doc["feature_names"]),
                   tuple(doc["sources"]))


def fit_indep(data: Dataset, cfg: SolverConfig = SolverConfig(), pairs=None):
    """Per-pair ridge least squares; returns ``(IndepModel, SolverTrace)``.

    The ridge weight for a pair is ``cfg.ridge_scale * trace(X'X) / d``.
    Pairs listed in ``pairs`` without any examples get a zero vector and a
    recorded warning.
    """
    t0 = time.perf_counter()
    d, N = data.dim, data.n_sources
    codes = data.pair_codes()
    order = np.argsort(codes, kind="stable")
    uniq, starts = np.unique(codes[order], return_index=True)
    bounds = list(starts) + [len(order)]
    weights = {}
    total = 0.0
    for u, (lo, hi) in zip(uniq, zip(bounds[:-1], bounds[1:])):
        idx = order[lo:hi]
        Xp, yp = data.X[idx], data.y[idx]
        G = Xp.T @ Xp
        ridge = cfg.ridge_scale * np.trace(G) / d
        w = np.linalg.solve(G + ridge * np.eye(d), Xp.T @ yp) if ridge > 0 else \
            np.linalg.lstsq(Xp, yp, rcond=None)[0]
        res = yp - Xp @ w
        total += 0.5 * (res @ res) + 0.5 * ridge * (w @ w)
        weights[(int(u // N), int(u % N))] = w
    model = IndepModel(weights, d, N, data.feature_names, data.source_names)
    for p in pairs or ():
        key = as_pair(p).indices
        if key not in weights:
            msg = f"source pair {key} has no training examples; it scores 0"
            model.warnings.append(msg)
            log.debug(msg)
    trace = SolverTrace()
    trace.record(1, total, 0.0, time.perf_counter() - t0)
    trace.converged = True
    return model, trace
