import math
from fractions import Fraction

import numpy as np
import pytest

from doseconf import (
    Dataset,
    GradientBoostedTrees,
    PredictionInterval,
    ScenarioSpec,
    SplitConformalRegressor,
    WeightedScoreDistribution,
    absolute_residual,
    calibration_scores,
    fit_cadrf,
    generate,
    split_dataset,
    standard_interval,
    weighted_interval,
    weighted_quantile,
)


class _ZeroModel:
    """Stand-in model predicting 0 everywhere; residuals equal the outcomes."""

    def predict(self, X, t):
        return np.zeros(np.atleast_2d(X).shape[0])


def _cal_dataset(scores, d=2):
    scores = np.asarray(scores, dtype=float)
    return Dataset(np.zeros((len(scores), d)), np.zeros(len(scores)), scores)


def brute_force_quantile(scores, weights, infinity_mass, level):
    # Independent oracle: exact-rational cumulative enumeration, atoms scanned
    # in ascending score order, +infinity atom last.
    atoms = sorted(zip(scores, weights))
    cum = Fraction(0)
    target = Fraction(level)
    for s, w in atoms:
        cum += Fraction(w)
        if cum >= target:
            return s
    return math.inf


def test_absolute_residual_examples():
    assert absolute_residual(3.0, 3.0) == 0.0
    assert absolute_residual(1.0, 4.0) == 3.0
    assert absolute_residual(-2.5, 1.5) == 4.0


def test_weighted_quantile_examples():
    dist = WeightedScoreDistribution([1.0, 2.0, 3.0], [0.25, 0.25, 0.25], 0.25)
    assert weighted_quantile(dist, 0.75) == 3.0
    assert weighted_quantile(dist, 0.5) == 2.0

    short = WeightedScoreDistribution([5.0], [0.5], 0.5)
    assert weighted_quantile(short, 0.9) == math.inf

    assert weighted_quantile(dist, 1e-9) == 1.0


def test_weighted_quantile_accumulates_tied_atoms():
    dist = WeightedScoreDistribution([1.0, 2.0, 2.0, 3.0], [0.2] * 4, 0.2)
    assert weighted_quantile(dist, 0.5) == 2.0


def test_weighted_quantile_level_validation():
    dist = WeightedScoreDistribution([1.0], [0.5], 0.5)
    for bad in (0.0, 1.0, -0.3, 1.7):
        with pytest.raises(ValueError):
            weighted_quantile(dist, bad)


def test_distribution_invariant_validation():
    with pytest.raises(ValueError):
        WeightedScoreDistribution([1.0, 2.0], [0.5, 0.6], 0.0)
    with pytest.raises(ValueError):
        WeightedScoreDistribution([1.0, 2.0], [-0.1, 0.9], 0.2)
    with pytest.raises(ValueError):
        WeightedScoreDistribution([1.0, np.inf], [0.5, 0.4], 0.1)


def test_weighted_quantile_matches_brute_force_oracle():
    rng = np.random.default_rng(202)
    for case in range(1000):
        n = int(rng.integers(1, 21))
        scores = rng.normal(size=n)
        if case % 2 == 0:
            scores = np.round(scores, 1)  # force ties
        raw = rng.uniform(0.05, 1.0, size=n + 1)
        total = raw.sum()
        weights, infinity_mass = raw[:n] / total, raw[n] / total
        level = float(rng.uniform(0.01, 0.99))
        dist = WeightedScoreDistribution(scores, weights, infinity_mass)
        expected = brute_force_quantile(scores.tolist(), weights.tolist(), infinity_mass, level)
        assert weighted_quantile(dist, level) == expected, f"case {case}"


def test_calibration_scores_sorted_and_trivial_cases():
    model = _ZeroModel()
    assert calibration_scores(model, _cal_dataset([2.0])).tolist() == [2.0]
    assert calibration_scores(model, _cal_dataset([1.0, 3.0, 2.0])).tolist() == [1.0, 2.0, 3.0]
    assert calibration_scores(model, _cal_dataset([0.0, 0.0])).tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        calibration_scores(model, Dataset(np.empty((0, 2)), [], []))


def test_standard_interval_examples():
    model = _ZeroModel()
    iv = standard_interval(model, [1.0, 2.0, 3.0, 4.0], np.zeros(2), 0.0, 0.2)
    assert (iv.lower, iv.upper) == (-4.0, 4.0)

    class _One(_ZeroModel):
        def predict(self, X, t):
            return np.ones(np.atleast_2d(X).shape[0])

    iv = standard_interval(_One(), [7.0], np.zeros(2), 0.0, 0.9)
    assert (iv.lower, iv.upper) == (-6.0, 8.0)

    iv = standard_interval(model, [1.0], np.zeros(2), 0.0, 0.05)
    assert iv.lower == -math.inf and iv.upper == math.inf


def test_constant_weight_reduces_to_standard_exactly():
    rng = np.random.default_rng(55)
    model = _ZeroModel()
    for case in range(100):
        m = int(rng.integers(1, 121))
        scores = np.abs(rng.normal(size=m)) * rng.uniform(0.1, 50)
        cal = _cal_dataset(scores)
        alpha = float(rng.uniform(0.02, 0.6))
        c = float(10.0 ** rng.uniform(-6, 6))
        x, t = rng.normal(size=2), float(rng.normal())
        iv_std = standard_interval(model, np.sort(scores), x, t, alpha)
        iv_w = weighted_interval(model, cal, lambda xx, tt: c, x, t, alpha)
        assert iv_std == iv_w, f"case {case}: {iv_std} != {iv_w}"


def test_weighted_interval_dominant_atom():
    # One huge-weight atom at score 9 carries essentially all mass; verify the
    # expected radius by recomputing the normalized masses directly.
    rng = np.random.default_rng(8)
    small = rng.uniform(0.0, 5.0, size=99)
    scores = np.concatenate([small, [9.0]])
    weights = np.concatenate([np.full(99, 1e-6), [1e6]])
    cal = _cal_dataset(scores)
    table = {float(s): float(w) for s, w in zip(scores, weights)}

    def weight_fn(x, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return table.get(float(t), 1.0)
        return np.asarray([table[float(v)] for v in t])

    cal = Dataset(cal.X, scores, scores)  # key the weight on the treatment column
    test_weight = 1.0
    denom = weights.sum() + test_weight
    order = np.argsort(scores)
    cum = np.cumsum(weights[order] / denom)
    expected = float(scores[order][np.searchsorted(cum, 0.9)])
    assert expected == 9.0

    iv = weighted_interval(_ZeroModel(), cal, weight_fn, np.zeros(2), -1.0, 0.1)
    assert (iv.lower, iv.upper) == (-9.0, 9.0)


def test_huge_test_weight_gives_infinite_interval():
    cal = _cal_dataset([1.0, 2.0, 3.0])

    def weight_fn(x, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return 1e9  # the test query
        return np.ones(t.shape)

    iv = weighted_interval(_ZeroModel(), cal, weight_fn, np.zeros(2), 99.0, 0.1)
    assert iv.lower == -math.inf and iv.upper == math.inf


def test_weighted_interval_weight_validation():
    cal = _cal_dataset([1.0, 2.0])
    with pytest.raises(ValueError, match="zero"):
        weighted_interval(_ZeroModel(), cal, lambda x, t: 0.0, np.zeros(2), 0.0, 0.1)
    with pytest.raises(ValueError, match="nonnegative"):
        weighted_interval(_ZeroModel(), cal, lambda x, t: -1.0, np.zeros(2), 0.0, 0.1)


def test_nestedness_in_alpha():
    rng = np.random.default_rng(17)
    model = _ZeroModel()
    scores = np.abs(rng.normal(size=40))
    cal = _cal_dataset(scores)
    weight_fn = lambda x, t: float(np.mean(1.0 + np.square(t)))
    for _ in range(20):
        a1, a2 = sorted(rng.uniform(0.02, 0.8, size=2))
        wide = weighted_interval(model, cal, weight_fn, np.zeros(2), 0.3, a1)
        narrow = weighted_interval(model, cal, weight_fn, np.zeros(2), 0.3, a2)
        assert wide.lower <= narrow.lower and narrow.upper <= wide.upper
        wide_s = standard_interval(model, np.sort(scores), np.zeros(2), 0.3, a1)
        narrow_s = standard_interval(model, np.sort(scores), np.zeros(2), 0.3, a2)
        assert wide_s.lower <= narrow_s.lower and narrow_s.upper <= wide_s.upper


def test_weight_scale_invariance():
    rng = np.random.default_rng(23)
    model = _ZeroModel()
    cal = Dataset(rng.normal(size=(60, 2)), rng.normal(size=60), np.abs(rng.normal(size=60)))
    base = lambda x, t: np.exp(-0.1 * np.square(np.asarray(t, dtype=float))) + 0.2
    for c in (1e-4, 3.7, 2.5e5):
        scaled = lambda x, t, c=c: c * base(x, t)
        for alpha in (0.05, 0.1, 0.3):
            iv0 = weighted_interval(model, cal, base, np.zeros(2), 0.5, alpha)
            iv1 = weighted_interval(model, cal, scaled, np.zeros(2), 0.5, alpha)
            assert iv0 == iv1


def test_mass_normalization_under_extreme_scales():
    rng = np.random.default_rng(31)
    for scale in (1e-12, 1.0, 1e12):
        raw = rng.uniform(0.1, 1.0, size=50) * scale
        dist = WeightedScoreDistribution.from_raw_weights(
            np.sort(rng.normal(size=50)), raw, 0.5 * scale)
        assert abs(dist.weights.sum() + dist.infinity_mass - 1.0) <= 1e-9
        assert (dist.weights >= 0).all() and (dist.weights <= 1).all()


def test_marginal_coverage_on_exchangeable_data():
    # Standard split CP at observed doses: pooled coverage within the 3-sigma
    # binomial band of the nominal level.
    alpha = 0.1
    hits = total = 0
    for seed in range(4):
        ds = split_dataset(generate(ScenarioSpec(1, 1, 1000, seed=seed)), seed=seed)
        model = fit_cadrf(GradientBoostedTrees(n_estimators=150, random_state=seed),
                          ds.subset("train"))
        scores = calibration_scores(model, ds.subset("cal"))
        test = ds.subset("test")
        for i in range(len(test)):
            iv = standard_interval(model, scores, test.X[i], test.t[i], alpha)
            hits += iv.contains(test.y[i])
            total += 1
    coverage = hits / total
    assert coverage >= 1 - alpha - 3 * math.sqrt(alpha * (1 - alpha) / total)


def test_interval_json_round_trip():
    finite = PredictionInterval(-1.25, 4.5)
    assert PredictionInterval.from_json(finite.to_json()) == finite
    inf = PredictionInterval(-math.inf, math.inf)
    payload = inf.to_dict()
    assert payload == {"lower": "-inf", "upper": "inf"}
    assert PredictionInterval.from_json(inf.to_json()) == inf


def test_interval_invariants():
    with pytest.raises(ValueError):
        PredictionInterval(2.0, 1.0)
    iv = PredictionInterval(0.0, 2.0)
    assert iv.contains(0.0) and iv.contains(2.0) and not iv.contains(2.1)
    assert iv.width == 2.0 and not iv.is_infinite


def test_split_conformal_regressor_wrapper():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(400, 2))
    t = rng.normal(size=400)
    y = X[:, 0] + t + 0.1 * rng.normal(size=400)
    reg = SplitConformalRegressor(learner=GradientBoostedTrees(n_estimators=60, random_state=0))
    reg.fit(X[:200], t[:200], y[:200]).calibrate(X[200:], t[200:], y[200:])
    bands = reg.predict_interval(X[:10], t[:10], alpha=0.2)
    assert bands.shape == (10, 2)
    assert (bands[:, 0] <= bands[:, 1]).all()

    weighted = SplitConformalRegressor(
        learner=GradientBoostedTrees(n_estimators=60, random_state=0),
        weight_fn=lambda x, tt: 1.0)
    weighted.fit(X[:200], t[:200], y[:200]).calibrate(X[200:], t[200:], y[200:])
    assert np.array_equal(weighted.predict_interval(X[:10], t[:10], alpha=0.2), bands)
