"""Split conformal predictive systems and the kernel density estimate used
to turn their discrete predictive distributions into continuous densities."""

import json
import math

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, clone
from sklearn.exceptions import NotFittedError

from ._validation import check_consistent_length, check_matrix, check_unit_open, check_vector
from .conformal import (
    LEVEL_SLACK,
    PredictionInterval,
    WeightedScoreDistribution,
    _evaluate_weight_fn,
)
from .learners import GradientBoostedTrees


def signed_residual(y, y_hat):
    """Sign-preserving conformity score ``y - y_hat`` (monotone in ``y``)."""
    return y - y_hat


def randomized_cdf(dist, r_new, tie_fraction):
    """Rank of ``r_new`` in a point-mass score distribution, ties randomized.

    Returns the mass strictly below ``r_new`` plus ``tie_fraction`` times the
    mass exactly at ``r_new``; the +infinity atom never counts as below a
    finite value, so the result saturates at ``1 - infinity_mass``.

    Parameters
    ----------
    dist : WeightedScoreDistribution
    r_new : float
    tie_fraction : float in [0, 1]
    """
    if not 0.0 <= tie_fraction <= 1.0:
        raise ValueError(f"tie_fraction must lie in [0, 1], got {tie_fraction}")
    left = int(np.searchsorted(dist.scores, r_new, side="left"))
    right = int(np.searchsorted(dist.scores, r_new, side="right"))
    below = dist._cum[left - 1] if left > 0 else 0.0
    at = (dist._cum[right - 1] if right > 0 else 0.0) - below
    return float(min(max(below + tie_fraction * at, 0.0), 1.0))


class PredictiveDistribution:
    """Discrete predictive distribution over outcomes from a split CPS.

    Support points are the model prediction plus the calibration signed
    residuals; one extra atom of mass sits at +infinity for the unseen test
    score. Tied support values are merged.

    Parameters
    ----------
    support : array-like
        Candidate outcome values.
    masses : array-like
        Nonnegative masses aligned with ``support``, summing to at most 1.
    infinity_mass : float
    center : float
        The underlying point prediction.
    tie_randomizer : float in [0, 1], default 0.5
        Uniform draw used when the queried value ties a support atom.
    """

    def __init__(self, support, masses, infinity_mass, center, tie_randomizer=0.5):
        support = check_vector(support, "support")
        masses = np.asarray(masses, dtype=float).ravel()
        check_consistent_length(support, masses)
        if (masses < 0).any() or infinity_mass < 0:
            raise ValueError("masses must be nonnegative")
        if masses.sum() + infinity_mass > 1.0 + 1e-9:
            raise ValueError("masses must sum to at most 1")
        if not 0.0 <= tie_randomizer <= 1.0:
            raise ValueError("tie_randomizer must lie in [0, 1]")
        uniq, inverse = np.unique(support, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inverse, masses)
        self.support = uniq
        self.masses = merged
        self.infinity_mass = float(infinity_mass)
        self.center = float(center)
        self.tie_randomizer = float(tie_randomizer)
        self._cum = np.cumsum(self.masses)
        self._dist = WeightedScoreDistribution(self.support, self.masses, self.infinity_mass)

    def cdf(self, y, phi=None):
        """P(outcome < y) + phi * P(outcome = y); saturates at 1 - infinity_mass."""
        phi = self.tie_randomizer if phi is None else phi
        return randomized_cdf(self._dist, float(y), phi)

    def quantile(self, level, tail="upper"):
        """Level quantile of the distribution.

        ``tail="upper"`` places the unseen test atom at +infinity (the
        conservative choice for an upper bound, returning ``inf`` when the
        finite mass never reaches the level); ``tail="lower"`` places it at
        -infinity, the conservative choice for a lower bound.
        """
        level = check_unit_open(level, "level")
        if tail == "upper":
            cum = self._cum
            if level - LEVEL_SLACK > cum[-1]:
                return math.inf
        elif tail == "lower":
            cum = self.infinity_mass + self._cum
            if self.infinity_mass >= level - LEVEL_SLACK:
                return -math.inf
        else:
            raise ValueError(f"tail must be 'upper' or 'lower', got {tail!r}")
        idx = int(np.searchsorted(cum, level - LEVEL_SLACK, side="left"))
        return float(self.support[min(idx, len(self.support) - 1)])

    def median(self):
        """Midpoint of the conservative lower and upper medians."""
        return 0.5 * (self.quantile(0.5, "lower") + self.quantile(0.5, "upper"))

    def band(self, alpha):
        """Central ``1 - alpha`` interval between the alpha/2 tail quantiles."""
        alpha = check_unit_open(alpha, "alpha")
        return PredictionInterval(
            self.quantile(alpha / 2, "lower"), self.quantile(1 - alpha / 2, "upper")
        )

    def sample(self, n, rng):
        """Draw ``n`` support points with probability proportional to mass."""
        p = self.masses / self.masses.sum()
        return rng.choice(self.support, size=n, p=p)

    def to_dict(self):
        """Plot-ready arrays: support points and the at-or-below CDF."""
        return {"support": self.support.tolist(), "cdf": self._cum.tolist()}

    def to_json(self):
        return json.dumps(self.to_dict())


def predictive_distribution(model, cal, weight_fn, x_new, t_new, phi=None, rng=None):
    """Build the (optionally weighted) split-CPS predictive distribution.

    Parameters
    ----------
    model : fitted CadrfRegressor-like with ``predict(X, t)``
    cal : Dataset
    weight_fn : callable or None
        ``(x, t) -> nonnegative weight``; None means uniform masses.
    x_new, t_new : query point
    phi : float in [0, 1], optional
        Tie randomizer; wins over ``rng``.
    rng : numpy Generator, optional
        Source for one uniform tie-randomizer draw per query.
    """
    if len(cal) == 0:
        raise ValueError("calibration split is empty")
    residuals = cal.y - model.predict(cal.X, cal.t)
    if weight_fn is None:
        raw = np.ones(len(cal))
        test_weight = 1.0
    else:
        raw = _evaluate_weight_fn(weight_fn, cal.X, cal.t)
        test_weight = float(weight_fn(np.asarray(x_new, dtype=float), float(t_new)))
    order = np.argsort(residuals, kind="stable")
    dist = WeightedScoreDistribution.from_raw_weights(residuals[order], raw[order], test_weight)
    y_hat = float(model.predict(np.atleast_2d(x_new), t_new)[0])
    if phi is None:
        phi = float(rng.uniform()) if rng is not None else 0.5
    return PredictiveDistribution(
        y_hat + dist.scores, dist.weights, dist.infinity_mass, y_hat, tie_randomizer=phi
    )


class ConformalPredictiveSystem(BaseEstimator):
    """Split CPS around a plain ``(X, y)`` regressor.

    Parameters
    ----------
    learner : regressor with fit/predict, optional
        Cloned before fitting; defaults to :class:`GradientBoostedTrees`.
    """

    def __init__(self, learner=None):
        self.learner = learner

    def fit(self, X, y):
        base = self.learner if self.learner is not None else GradientBoostedTrees()
        self.learner_ = clone(base)
        self.learner_.fit(check_matrix(X), check_vector(y))
        return self

    def calibrate(self, X, y):
        if not hasattr(self, "learner_"):
            raise NotFittedError("fit must be called before calibrate")
        X = check_matrix(X)
        y = check_vector(y)
        self.residuals_ = np.sort(y - self.learner_.predict(X))
        return self

    def predict(self, X):
        if not hasattr(self, "learner_"):
            raise NotFittedError("ConformalPredictiveSystem instance is not fitted yet")
        return self.learner_.predict(check_matrix(X))

    def predictive(self, x, phi=None, rng=None):
        """Predictive distribution at a single covariate row."""
        if not hasattr(self, "residuals_"):
            raise NotFittedError("calibrate must be called before predictive")
        y_hat = float(self.predict(np.atleast_2d(x))[0])
        n = len(self.residuals_)
        masses = np.full(n, 1.0 / (n + 1))
        if phi is None:
            phi = float(rng.uniform()) if rng is not None else 0.5
        return PredictiveDistribution(
            y_hat + self.residuals_, masses, 1.0 / (n + 1), y_hat, tie_randomizer=phi
        )


class KernelDensity:
    """Gaussian kernel density: the mean of normal bumps at the centers.

    Parameters
    ----------
    centers : array-like
    bandwidth : positive float
    """

    def __init__(self, centers, bandwidth):
        self.centers = check_vector(centers, "centers")
        if not bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
        self.bandwidth = float(bandwidth)

    def log_density(self, t, block=1024):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        const = -math.log(self.bandwidth * math.sqrt(2 * math.pi) * len(self.centers))
        out = np.empty(t.shape)
        for start in range(0, len(t), block):
            z = (t[start : start + block, None] - self.centers[None, :]) / self.bandwidth
            out[start : start + block] = logsumexp(-0.5 * z * z, axis=1) + const
        return float(out[0]) if scalar else out

    def density(self, t):
        return np.exp(self.log_density(t))


def silverman_bandwidth(samples):
    """Rule-of-thumb bandwidth ``1.06 * std * n**(-1/5)``."""
    samples = np.asarray(samples, dtype=float)
    return 1.06 * samples.std(ddof=1) * len(samples) ** (-0.2)


def kde_fit(samples, bandwidth_rule="silverman"):
    """Fit a Gaussian KDE on a 1-D sample.

    Parameters
    ----------
    samples : array-like with at least two distinct values
    bandwidth_rule : "silverman", positive float, or callable(samples) -> float
        The computed bandwidth is floored at ``1e-3 * (max - min)``.
    """
    samples = check_vector(samples, "samples")
    spread = samples.max() - samples.min()
    if len(samples) < 2 or spread == 0.0:
        raise ValueError("KDE requires at least two distinct samples (zero bandwidth)")
    if bandwidth_rule == "silverman":
        bw = silverman_bandwidth(samples)
    elif callable(bandwidth_rule):
        bw = float(bandwidth_rule(samples))
    else:
        bw = float(bandwidth_rule)
    bw = max(bw, 1e-3 * spread)
    return KernelDensity(samples, bw)
