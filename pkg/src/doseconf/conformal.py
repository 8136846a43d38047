"""Split conformal prediction and its covariate-shift-weighted variant.

Intervals are symmetric in the absolute residual; the weighted variant
reweights the calibration score distribution by likelihood ratios and may
return infinite intervals when the test point carries too much mass.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_matrix, check_unit_open, check_vector
from .data import Dataset
from .learners import CadrfRegressor

# Cumulative-mass comparisons tolerate this much slack so that order-statistic
# and point-mass quantile paths agree when (1 - alpha) * (m + 1) lands exactly
# on an atom boundary; it sits below the 1e-9 normalization tolerance.
LEVEL_SLACK = 1e-9

_INF_SENTINELS = {"inf": math.inf, "-inf": -math.inf}


@dataclass(frozen=True)
class PredictionInterval:
    """Closed interval over outcome space; either bound may be infinite."""

    lower: float
    upper: float

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval bounds must not be NaN")
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    def contains(self, y):
        return self.lower <= y <= self.upper

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def is_infinite(self):
        return math.isinf(self.lower) or math.isinf(self.upper)

    def to_dict(self):
        def encode(v):
            return ("-inf" if v < 0 else "inf") if math.isinf(v) else v

        return {"lower": encode(self.lower), "upper": encode(self.upper)}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        def decode(v):
            return _INF_SENTINELS[v] if isinstance(v, str) else float(v)

        return cls(decode(d["lower"]), decode(d["upper"]))

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


class WeightedScoreDistribution:
    """Point masses at calibration scores plus an atom at +infinity.

    Parameters
    ----------
    scores : array-like
        Finite nonconformity scores (stored sorted ascending).
    weights : array-like
        Normalized nonnegative masses aligned with ``scores``.
    infinity_mass : float
        Mass assigned to the +infinity atom; total mass must be 1 within 1e-9.
    """

    def __init__(self, scores, weights, infinity_mass):
        scores = check_vector(scores, "scores")
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != scores.shape:
            raise ValueError("scores and weights must have equal length")
        if (weights < 0).any() or infinity_mass < 0:
            raise ValueError("masses must be nonnegative")
        total = weights.sum() + infinity_mass
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"masses must sum to 1, got {total}")
        order = np.argsort(scores, kind="stable")
        self.scores = scores[order]
        self.weights = weights[order]
        self.infinity_mass = float(infinity_mass)
        self._cum = np.cumsum(self.weights)

    def __len__(self):
        return len(self.scores)

    @classmethod
    def from_raw_weights(cls, scores, raw_weights, test_weight):
        """Normalize raw likelihood-ratio weights into point masses.

        Each calibration atom gets ``w_i / (sum_j w_j + w_test)`` and the
        +infinity atom gets ``w_test / (sum_j w_j + w_test)``; any common
        positive scale of the raw weights cancels.
        """
        scores = check_vector(scores, "scores")
        raw = np.asarray(raw_weights, dtype=float).ravel()
        if raw.shape != scores.shape:
            raise ValueError("scores and raw_weights must have equal length")
        if not np.isfinite(raw).all() or not np.isfinite(test_weight):
            raise ValueError("weights must be finite")
        if (raw < 0).any() or test_weight < 0:
            raise ValueError("weights must be nonnegative")
        if raw.sum() == 0.0:
            raise ValueError("all calibration weights are zero: no exchangeable mass")
        denom = raw.sum() + test_weight
        masses = np.clip(raw / denom, 0.0, 1.0)
        infinity_mass = min(max(test_weight / denom, 0.0), 1.0)
        return cls(scores, masses, infinity_mass)


def weighted_quantile(dist, level):
    """Smallest score whose cumulative mass reaches ``level``.

    Scores are scanned ascending with the +infinity atom last; returns
    ``math.inf`` when the finite mass never reaches the level.

    Parameters
    ----------
    dist : WeightedScoreDistribution
    level : float in (0, 1)
    """
    level = check_unit_open(level, "level")
    idx = int(np.searchsorted(dist._cum, level - LEVEL_SLACK, side="left"))
    if idx >= len(dist):
        return math.inf
    return float(dist.scores[idx])


def absolute_residual(y, y_hat):
    """Nonconformity score ``|y - y_hat|``."""
    return abs(y - y_hat)


def calibration_scores(model, cal):
    """Sorted absolute residuals of ``model`` on the calibration split.

    Parameters
    ----------
    model : fitted CadrfRegressor-like with ``predict(X, t)``
    cal : Dataset

    Returns
    -------
    ndarray, ascending.
    """
    if len(cal) == 0:
        raise ValueError("calibration split is empty")
    residuals = np.abs(cal.y - model.predict(cal.X, cal.t))
    return np.sort(residuals)


def _standard_radius(sorted_scores, alpha):
    m = len(sorted_scores)
    rank = math.ceil((1.0 - alpha) * (m + 1) - LEVEL_SLACK)
    if rank > m:
        return math.inf
    return float(sorted_scores[rank - 1])


def standard_interval(model, scores, x, t, alpha):
    """Split conformal interval around the model prediction at ``(x, t)``.

    The radius is the ``ceil((1 - alpha) * (m + 1))``-th smallest calibration
    score (equivalently the ``floor(alpha * (m + 1))``-th largest away from
    rank boundaries); when that rank exceeds the number of scores the
    interval is infinite rather than an error.
    """
    alpha = check_unit_open(alpha, "alpha")
    scores = check_vector(scores, "scores")
    y_hat = float(model.predict(np.atleast_2d(x), t)[0])
    radius = _standard_radius(scores, alpha)
    if math.isinf(radius):
        return PredictionInterval(-math.inf, math.inf)
    return PredictionInterval(y_hat - radius, y_hat + radius)


def _evaluate_weight_fn(weight_fn, X, t):
    """Evaluate a weight function over calibration rows, vectorized if supported."""
    try:
        w = np.asarray(weight_fn(X, t), dtype=float)
        if w.shape == (len(t),):
            return w
    except Exception:
        pass
    return np.asarray([float(weight_fn(X[i], t[i])) for i in range(len(t))])


def weighted_interval(model, cal, weight_fn, x_new, t_new, alpha):
    """Covariate-shift-weighted split conformal interval at ``(x_new, t_new)``.

    Parameters
    ----------
    model : fitted CadrfRegressor-like
    cal : Dataset
        Calibration split.
    weight_fn : callable
        ``(x, t) -> nonnegative weight``, finite on all calibration points;
        also evaluated at the test point to set the +infinity atom's mass.
    x_new : array-like of shape (d,)
    t_new : float
    alpha : float in (0, 1)

    Returns
    -------
    PredictionInterval; infinite when the weighted quantile is +infinity.
    """
    alpha = check_unit_open(alpha, "alpha")
    if len(cal) == 0:
        raise ValueError("calibration split is empty")
    residuals = np.abs(cal.y - model.predict(cal.X, cal.t))
    raw = _evaluate_weight_fn(weight_fn, cal.X, cal.t)
    test_weight = float(weight_fn(np.asarray(x_new, dtype=float), float(t_new)))
    order = np.argsort(residuals, kind="stable")
    dist = WeightedScoreDistribution.from_raw_weights(residuals[order], raw[order], test_weight)
    radius = weighted_quantile(dist, 1.0 - alpha)
    y_hat = float(model.predict(np.atleast_2d(x_new), t_new)[0])
    if math.isinf(radius):
        return PredictionInterval(-math.inf, math.inf)
    return PredictionInterval(y_hat - radius, y_hat + radius)


class SplitConformalRegressor(BaseEstimator):
    """Dose-response regressor emitting split conformal intervals.

    Parameters
    ----------
    learner : regressor with fit/predict, optional
        Underlying point learner for the S-learner; defaults to the built-in
        gradient-boosted trees.
    weight_fn : callable, optional
        When given, intervals use the weighted construction with this
        likelihood-ratio weight; when None, the standard split construction.
    """

    def __init__(self, learner=None, weight_fn=None):
        self.learner = learner
        self.weight_fn = weight_fn

    def fit(self, X, t, y):
        self.model_ = CadrfRegressor(learner=self.learner).fit(X, t, y)
        return self

    def calibrate(self, X, t, y):
        if not hasattr(self, "model_"):
            raise NotFittedError("fit must be called before calibrate")
        X = check_matrix(X)
        t = check_vector(t, "t")
        y = check_vector(y, "y")
        self.cal_X_ = X
        self.cal_t_ = t
        self.cal_y_ = y
        self.scores_ = np.sort(np.abs(y - self.model_.predict(X, t)))
        return self

    def predict(self, X, t):
        if not hasattr(self, "model_"):
            raise NotFittedError("SplitConformalRegressor instance is not fitted yet")
        return self.model_.predict(X, t)

    def predict_interval(self, X, t, alpha=0.1):
        """Per-row prediction intervals as an ``(n, 2)`` array (bounds may be inf)."""
        if not hasattr(self, "scores_"):
            raise NotFittedError("calibrate must be called before predict_interval")
        X = check_matrix(X)
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        cal = Dataset(self.cal_X_, self.cal_t_, self.cal_y_)
        out = np.empty((X.shape[0], 2))
        for i in range(X.shape[0]):
            if self.weight_fn is None:
                iv = standard_interval(self.model_, self.scores_, X[i], t[i], alpha)
            else:
                iv = weighted_interval(self.model_, cal, self.weight_fn, X[i], t[i], alpha)
            out[i] = (iv.lower, iv.upper)
        return out
