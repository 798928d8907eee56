import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from transfer_er.evaluation import (BandedCurve, PRCurve, ScoredExample, band_curves,
                                    bootstrap_band, confusion, pr_curve, precision_at_recall,
                                    precision_recall)
from transfer_er.evaluation import test_error as error_rate
from transfer_er.model import SourcePair


S = [0.9, 0.6, 0.4, 0.1]
Y = [1, -1, 1, -1]


def test_confusion_hand_count():
    assert confusion(S, Y, 0.5) == (1, 1, 1, 1)
    tp, fp, fn, tn = confusion(S, Y, -1.0)
    assert fn == 0 and tn == 0
    tp, fp, fn, tn = confusion(S, Y, 2.0)
    assert tp == 0 and fp == 0


def test_confusion_accepts_scored_examples_and_zero_labels():
    ex = [ScoredExample(s, y, SourcePair(0, 1)) for s, y in zip(S, Y)]
    from transfer_er.evaluation import as_arrays
    s, y = as_arrays(ex)
    assert confusion(s, y, 0.5) == (1, 1, 1, 1)
    assert confusion(S, [1, 0, 1, 0], 0.5) == (1, 1, 1, 1)


def test_threshold_ties_predict_match():
    assert confusion([0.5], [1], 0.5) == (1, 0, 0, 0)


def test_precision_recall_conventions():
    assert precision_recall(2, 1, 1) == pytest.approx((2 / 3, 2 / 3))
    assert precision_recall(0, 0, 3)[0] == 1.0
    assert precision_recall(0, 3, 0)[1] == 1.0


def test_error_examples():
    assert error_rate([1, 1, -1, -1], [1, 1, -1, 1]) == 0.25
    assert error_rate(S, [1, 1, 1, -1], tau=0.2) == 0.0
    with pytest.raises(ValueError):
        error_rate([], [])


@pytest.mark.parametrize("seed", range(10))
def test_error_matches_counting_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    s = np.round(rng.standard_normal(n), 1)
    y = rng.choice([-1, 1], n)
    tau = float(rng.choice(s))
    wrong = 0
    for k in range(n):
        guess = 1 if s[k] >= tau else -1
        if guess != y[k]:
            wrong += 1
    assert error_rate(s, y, tau) == wrong / n


def test_pr_curve_separated():
    c = pr_curve([3, 2, 1, 0], [1, 1, -1, -1])
    assert any(p == 1 and r == 1 for p, r in zip(c.precision, c.recall))


def test_pr_curve_reversed_gives_base_rate():
    c = pr_curve([0, 1, 2, 3], [1, 1, -1, -1])
    full = c.recall == 1
    assert c.precision[full].max() == 0.5


def test_pr_curve_duplicates_collapse():
    c = pr_curve([1, 1, 1, 0], [1, -1, 1, -1])
    assert len(c) == 2
    assert c.tau.tolist() == [1.0, 0.0]
    assert (c.tp[0], c.fp[0], c.fn[0]) == (2, 1, 0)


def test_pr_curve_counts_match_confusion():
    rng = np.random.default_rng(0)
    s, y = np.round(rng.random(50), 1), rng.choice([-1, 1], 50)
    c = pr_curve(s, y)
    for k in range(len(c)):
        tp, fp, fn, _ = confusion(s, y, c.tau[k])
        assert (c.tp[k], c.fp[k], c.fn[k]) == (tp, fp, fn)


def test_pr_curve_errors():
    with pytest.raises(ValueError):
        pr_curve([1, 2], [-1, -1])
    with pytest.raises(ValueError):
        pr_curve([], [])


@given(st.lists(st.tuples(st.integers(-5, 5), st.booleans()), min_size=1, max_size=40))
def test_recall_monotone_as_threshold_falls(items):
    s = [float(a) for a, _ in items]
    y = [1 if b else -1 for _, b in items]
    if 1 not in y:
        y[0] = 1
    c = pr_curve(s, y)
    assert np.all(np.diff(c.tau) < 0)
    assert np.all(np.diff(c.recall) >= 0)


def _curve(points):
    p, r = zip(*points)
    z = np.zeros(len(p))
    return PRCurve(z, np.array(p), np.array(r), z, z, z)


def test_precision_at_recall_examples():
    c = _curve([(0.9, 0.8), (0.7, 0.9)])
    assert precision_at_recall(c, 0.85) == 0.7
    assert precision_at_recall(c, 0.8) == 0.9
    perfect = pr_curve([2, 1, 0], [1, 1, -1])
    for r0 in (0.1, 0.5, 1.0):
        assert precision_at_recall(perfect, r0) == 1.0


def test_precision_at_recall_unreachable_warns():
    c = _curve([(0.9, 0.5)])
    with pytest.warns(RuntimeWarning):
        assert precision_at_recall(c, 0.8) == 0.0
    with pytest.raises(ValueError):
        precision_at_recall(c, 0.0)


def test_band_identical_trials_zero_width():
    c = pr_curve([3, 2, 1, 0], [1, -1, 1, -1])
    b = band_curves([c, c, c], [0.5, 1.0])
    assert np.array_equal(b.lo, b.hi)


def test_band_two_trials_hand_arithmetic():
    b = band_curves([_curve([(0.6, 0.9)]), _curve([(0.8, 0.9)])], [0.85])
    assert b.mean[0] == pytest.approx(0.7)
    assert b.hi[0] - b.mean[0] == pytest.approx(1.96 * 0.1 / np.sqrt(2))
    with pytest.raises(ValueError):
        band_curves([_curve([(0.6, 0.9)])], [0.5])


def _trial_curves(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        y = rng.choice([-1, 1], 200)
        out.append(pr_curve(y + 1.5 * rng.standard_normal(200), y))
    return out


def test_band_shrinks_with_trials():
    grid = [0.5, 0.8]
    w10 = band_curves(_trial_curves(10, 1), grid)
    w50 = band_curves(_trial_curves(50, 1), grid)
    assert np.all(w50.hi - w50.lo < w10.hi - w10.lo)


def test_bootstrap_band_orders_and_is_deterministic():
    rng = np.random.default_rng(3)
    y = rng.choice([-1, 1], 300)
    s = y + rng.standard_normal(300)
    grid = np.linspace(0.1, 1.0, 10)
    b = bootstrap_band(s, y, grid, n_resamples=100, seed=7)
    assert np.all(b.lo <= b.mean) and np.all(b.mean <= b.hi)
    b2 = bootstrap_band(s, y, grid, n_resamples=100, seed=7)
    assert np.array_equal(b.lo, b2.lo)


@given(st.permutations(list(range(12))))
def test_confusion_permutation_invariant(perm):
    s = np.linspace(-1, 1, 12)
    y = np.array([1, -1] * 6)
    assert confusion(s[perm], y[perm], 0.1) == confusion(s, y, 0.1)


@pytest.mark.parametrize("seed", range(10))
def test_best_threshold_error_bound(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(5, 80))
    y = rng.choice([-1, 1], m)
    if not (y > 0).any():
        y[0] = 1
    s = rng.standard_normal(m)
    c = pr_curve(s, y)
    best = min(error_rate(s, y, t) for t in c.tau)
    base = min((y > 0).mean(), (y < 0).mean())
    assert best <= base + 1 / m


def test_csv_outputs(tmp_path):
    c = pr_curve([2, 1], [1, -1])
    c.to_csv(tmp_path / "pr.csv")
    lines = (tmp_path / "pr.csv").read_text().splitlines()
    assert lines[0] == "tau,precision,recall,tp,fp,fn" and lines[1] == "2.0,1.0,1.0,1,0,0"
    BandedCurve(np.array([0.5]), np.array([0.7]), np.array([0.6]), np.array([0.8])).to_csv(tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text() == "recall,mean_precision,lo,hi\n0.5,0.7,0.6,0.8\n"
