"""Synthetic multi-source benchmark.

Latent entities carry ``dim`` attributes drawn uniformly from [0, 1]. Each
source holds one noisy copy of every entity: attribute ``a`` of source ``i``
is perturbed by Gaussian noise with scale ``sigma[i, a]``.

Noise scales start at ``noise_scale_range[0]``. A random ``corrupt_fraction``
of the (source, attribute) cells instead draw their scale uniformly from
``[lo, lo + heterogeneity * (hi - lo)]``; with ``corrupt_fraction=1`` every
cell does. The draws do not depend on ``heterogeneity``, so raising it
stretches the same configuration.

A labeled pair compares records from two sources; its features are the
negated absolute attribute differences, so larger means more similar.

Randomness is split into independent streams keyed by ``(seed, purpose,
source-or-pair)``, so adding sources to a configuration leaves the existing
sources' records untouched.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from itertools import combinations

import numpy as np

from .solver import Dataset

# stream purposes
_ENTITIES, _SIGMA, _NOISE, _TRAIN_PAIRS, _TEST_PAIRS = range(5)


def _rng(seed, purpose, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, *key)))


@dataclass(frozen=True)
class SynthConfig:
    n_sources: int = 10
    n_entities: int = 2000
    dim: int = 5
    noise_scale_range: tuple[float, float] = (0.01, 0.15)
    heterogeneity: float = 2.5
    corrupt_fraction: float = 0.3
    pairs_per_source_pair: int = 50
    match_fraction: float = 0.5
    test_pairs: int = 2000
    # None labels every source pair; otherwise a list of (i, j) pairs, or a
    # dict mapping pairs to their own example counts
    labeled_pairs: tuple | dict | None = None
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.noise_scale_range
        if self.n_sources < 2:
            raise ValueError("need at least two sources")
        if self.n_entities < 2 or self.dim < 1:
            raise ValueError("n_entities must be >= 2 and dim >= 1")
        if lo < 0 or lo > hi:
            raise ValueError("noise_scale_range must satisfy 0 <= min <= max")
        if self.heterogeneity < 0:
            raise ValueError("heterogeneity must be nonnegative")
        if not 0 <= self.corrupt_fraction <= 1:
            raise ValueError("corrupt_fraction must lie in [0, 1]")
        if self.pairs_per_source_pair < 0 or self.test_pairs < 0:
            raise ValueError("pair counts must be nonnegative")
        if not 0 < self.match_fraction < 1:
            raise ValueError("match_fraction must lie in (0, 1)")

    def pair_budget(self) -> dict[tuple[int, int], int]:
        if self.labeled_pairs is None:
            return {p: self.pairs_per_source_pair for p in combinations(range(self.n_sources), 2)}
        if isinstance(self.labeled_pairs, dict):
            return {tuple(sorted(p)): int(c) for p, c in self.labeled_pairs.items()}
        return {tuple(sorted(p)): self.pairs_per_source_pair for p in self.labeled_pairs}

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["noise_scale_range"] = list(self.noise_scale_range)
        if isinstance(self.labeled_pairs, dict):
            doc["labeled_pairs"] = [[a, b, c] for (a, b), c in sorted(self.pair_budget().items())]
        elif self.labeled_pairs is not None:
            doc["labeled_pairs"] = [list(p) for p in sorted(self.pair_budget())]
        return doc


@dataclass
class SynthDataset:
    train: Dataset
    test: Dataset
    entities: np.ndarray   # (n_entities, dim)
    records: np.ndarray    # (n_sources, n_entities, dim)
    sigma: np.ndarray      # (n_sources, dim)
    config: SynthConfig
    # entity ids behind each example, (n, 2)
    train_entities: np.ndarray = field(repr=False, default=None)
    test_entities: np.ndarray = field(repr=False, default=None)

    def ground_truth(self) -> dict:
        return {"config": self.config.to_dict(), "sigma": self.sigma.tolist()}


def source_sigmas(cfg: SynthConfig, i: int) -> np.ndarray:
    lo, hi = cfg.noise_scale_range
    rng = _rng(cfg.seed, _SIGMA, i)
    u = rng.random(cfg.dim)
    corrupt = rng.random(cfg.dim) < cfg.corrupt_fraction
    return np.where(corrupt, lo + u * cfg.heterogeneity * (hi - lo), lo)


def _features(records, i, j, e1, e2):
    return -np.abs(records[i, e1] - records[j, e2]) + 0.0


def _sample_pairs(cfg, records, counts, purpose, reserved=None):
    """Draw ``counts[(i, j)]`` labeled pairs per source pair.

    Match entities are drawn without replacement; ``reserved`` maps a pair to
    entities already used for matches, keeping train and test matches disjoint.
    """
    Xs, As, Bs, Ys, Es = [], [], [], [], []
    used = {}
    for (i, j), n in sorted(counts.items()):
        if n == 0:
            continue
        n_match = int(round(cfg.match_fraction * n))
        rng = _rng(cfg.seed, purpose, i, j)
        taken = reserved.get((i, j), np.empty(0, int)) if reserved else np.empty(0, int)
        if n_match > cfg.n_entities - len(taken):
            raise ValueError(f"pair ({i}, {j}) needs {n_match} matches but only "
                             f"{cfg.n_entities - len(taken)} entities are available")
        pool = np.setdiff1d(np.arange(cfg.n_entities), taken)
        m = rng.choice(pool, size=n_match, replace=False)
        used[(i, j)] = m
        n_non = n - n_match
        e1 = rng.integers(0, cfg.n_entities, size=n_non)
        off = rng.integers(1, cfg.n_entities, size=n_non)
        e2 = (e1 + off) % cfg.n_entities
        ent1 = np.concatenate([m, e1])
        ent2 = np.concatenate([m, e2])
        Xs.append(_features(records, i, j, ent1, ent2))
        As.append(np.full(n, i))
        Bs.append(np.full(n, j))
        Ys.append(np.concatenate([np.ones(n_match), -np.ones(n_non)]))
        Es.append(np.stack([ent1, ent2], axis=1))
    if not Xs:
        empty = np.empty((0, cfg.dim))
        return empty, np.empty(0, int), np.empty(0, int), np.empty(0), np.empty((0, 2), int), used
    return (np.concatenate(Xs), np.concatenate(As), np.concatenate(Bs), np.concatenate(Ys),
            np.concatenate(Es), used)


def _test_budget(cfg):
    pairs = list(combinations(range(cfg.n_sources), 2))
    base, extra = divmod(cfg.test_pairs, len(pairs))
    return {p: base + (1 if k < extra else 0) for k, p in enumerate(pairs)}


def generate(cfg: SynthConfig) -> SynthDataset:
    entities = _rng(cfg.seed, _ENTITIES).random((cfg.n_entities, cfg.dim))
    sigma = np.stack([source_sigmas(cfg, i) for i in range(cfg.n_sources)])
    records = np.empty((cfg.n_sources, cfg.n_entities, cfg.dim))
    for i in range(cfg.n_sources):
        records[i] = entities + sigma[i] * _rng(cfg.seed, _NOISE, i).standard_normal(entities.shape)

    names = tuple(f"s{i}" for i in range(cfg.n_sources))
    fnames = tuple(f"absdiff_a{k}" for k in range(cfg.dim))
    # test pairs first, so a test set does not depend on the training budget
    X, A, B, Y, Et, used = _sample_pairs(cfg, records, _test_budget(cfg), _TEST_PAIRS)
    test = Dataset(X, A, B, Y, cfg.n_sources, names, fnames)
    X, A, B, Y, E, _ = _sample_pairs(cfg, records, cfg.pair_budget(), _TRAIN_PAIRS, reserved=used)
    train = Dataset(X, A, B, Y, cfg.n_sources, names, fnames)
    return SynthDataset(train, test, entities, records, sigma, cfg, E, Et)


def ring_pairs(n_sources: int) -> list[tuple[int, int]]:
    """Linearly many source pairs: each source with its successor, cyclically."""
    if n_sources == 2:
        return [(0, 1)]
    return sorted({tuple(sorted((i, (i + 1) % n_sources))) for i in range(n_sources)})


def linear_budget(n_sources: int, labels_per_source: int) -> dict[tuple[int, int], int]:
    """Spread ``labels_per_source * n_sources`` labels evenly over the ring pairs."""
    pairs = ring_pairs(n_sources)
    base, extra = divmod(labels_per_source * n_sources, len(pairs))
    return {p: base + (1 if k < extra else 0) for k, p in enumerate(pairs)}


def sweep_sources(cfg: SynthConfig, n_list, labels_per_new_source: int) -> list[SynthDataset]:
    """One dataset per source count with a label budget linear in the count.

    All datasets share ``cfg.seed``, so the first ``N`` sources of a larger
    configuration reproduce the smaller one's entities and records.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    return [generate(replace(cfg, n_sources=n,
                             labeled_pairs=linear_budget(n, labels_per_new_source)))
            for n in n_list]
