"""Treatment-density (generalized propensity) estimation and the weight
functions that turn densities into conformal calibration weights.

The estimator follows a three-stage recipe: a point learner maps covariates
to treatments, a split conformal predictive system turns its calibration
residuals into a per-query predictive sample, and a Gaussian KDE over that
sample yields a continuous density. Because the predictive sample at any
query is the same residual multiset shifted by the point prediction, and the
bandwidth rule is shift-invariant, a single KDE over the residuals evaluated
at ``t - t_hat(x)`` reproduces the per-query KDE exactly.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_matrix, check_vector
from .cps import ConformalPredictiveSystem, kde_fit
from .learners import GradientBoostedTrees
from .synthgen import get_scenario

# Densities are clamped below this before any reciprocal is taken; weights in
# regions this empty push the interval to infinite width instead of overflowing.
DENSITY_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel settings for treatment-localized weights.

    ``bandwidth`` enters as ``exp(-0.5 * ((t_i - t0) / bandwidth)**2)``;
    ``sigma`` records the treatment-density spread it was derived from.
    """

    bandwidth: float
    sigma: float = float("nan")

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    @classmethod
    def from_sigma(cls, sigma):
        """Bandwidth rule ``h = 2 * (0.2 * sigma)**2``."""
        return cls(bandwidth=2.0 * (0.2 * float(sigma)) ** 2, sigma=float(sigma))


class PropensityEstimator(BaseEstimator):
    """Conditional treatment-density estimator built from a CPS plus KDE.

    Parameters
    ----------
    learner : regressor with fit/predict, optional
        Point learner for covariates -> treatment; defaults to the built-in
        gradient-boosted trees.
    bandwidth_rule : "silverman", float, or callable, default "silverman"
        Passed through to the residual KDE.
    density_floor : float, default 1e-12
        Lower clamp applied to every returned density.

    Attributes
    ----------
    cps_ : ConformalPredictiveSystem over treatment residuals
    kde_ : KernelDensity fitted on the calibration residual sample
    sigma_ : float, standard deviation of the residual sample
    calibration_density_ : ndarray, densities at the calibration points
    """

    def __init__(self, learner=None, bandwidth_rule="silverman", density_floor=DENSITY_FLOOR):
        self.learner = learner
        self.bandwidth_rule = bandwidth_rule
        self.density_floor = density_floor

    def fit(self, X_train, t_train, X_cal, t_cal):
        X_cal = check_matrix(X_cal, "X_cal")
        t_cal = check_vector(t_cal, "t_cal")
        learner = self.learner if self.learner is not None else GradientBoostedTrees()
        self.cps_ = ConformalPredictiveSystem(learner=learner)
        self.cps_.fit(check_matrix(X_train, "X_train"), check_vector(t_train, "t_train"))
        self.cps_.calibrate(X_cal, t_cal)
        residuals = self.cps_.residuals_
        try:
            self.kde_ = kde_fit(residuals, self.bandwidth_rule)
        except ValueError as exc:
            raise ValueError(f"degenerate treatment variance: {exc}") from exc
        self.sigma_ = float(np.std(residuals, ddof=1))
        self.calibration_density_ = self.density(X_cal, t_cal)
        return self

    @property
    def sigma(self):
        if not hasattr(self, "sigma_"):
            raise NotFittedError("PropensityEstimator instance is not fitted yet")
        return self.sigma_

    def predict_dose(self, X):
        """Point prediction of the dose for covariate rows ``X``."""
        if not hasattr(self, "cps_"):
            raise NotFittedError("PropensityEstimator instance is not fitted yet")
        return self.cps_.predict(np.atleast_2d(np.asarray(X, dtype=float)))

    def log_density_at_predictions(self, t_hat, t):
        """Log density for rows whose dose predictions are already known;
        lets repeated dose-grid queries skip the learner pass."""
        if not hasattr(self, "kde_"):
            raise NotFittedError("PropensityEstimator instance is not fitted yet")
        t = np.broadcast_to(np.asarray(t, dtype=float), t_hat.shape)
        logd = self.kde_.log_density(t - t_hat)
        return np.maximum(logd, math.log(self.density_floor))

    def log_density(self, X, t):
        return self.log_density_at_predictions(self.predict_dose(X), t)

    def density(self, X, t):
        """Estimated treatment density at ``(X, t)``, floored strictly above zero."""
        return np.exp(self.log_density(X, t))


def fit_propensity(train, cal, seed=None, learner=None):
    """Fit a :class:`PropensityEstimator` from train/calibration datasets.

    ``seed`` feeds the built-in learner when no learner is supplied.
    """
    if len(train) == 0 or len(cal) == 0:
        raise ValueError("propensity fit needs non-empty train and calibration splits")
    if learner is None:
        learner = GradientBoostedTrees(random_state=seed)
    est = PropensityEstimator(learner=learner)
    return est.fit(train.X, train.t, cal.X, cal.t)


class OraclePropensity:
    """Exact conditional treatment density of a synthetic benchmark."""

    def __init__(self, setup, scenario):
        self.setup = setup
        self.scenario = scenario
        self._scenario = get_scenario(setup, scenario)
        self.sigma = self._scenario.noise_scale

    def density(self, X, t):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._scenario.treatment_density(X, t)

    def log_density(self, X, t):
        return np.log(np.maximum(self.density(X, t), DENSITY_FLOOR))


def oracle_propensity_density(setup, scenario, x, t):
    """Exact density of dose ``t`` given covariates ``x`` under a benchmark generator."""
    return float(OraclePropensity(setup, scenario).density(x, t)[0])


def global_propensity_weight(density_value, t, t_low, t_high):
    """Likelihood-ratio weight for uniform dose sampling: ``1/density`` inside
    the dose bounds, zero outside."""
    if density_value <= 0:
        raise ValueError(f"density must be positive, got {density_value}")
    if not t_low <= t <= t_high:
        return 0.0
    return 1.0 / density_value


def local_kernel_weight(t_i, t0, config):
    """Gaussian closeness of ``t_i`` to the target dose: ``exp(-u**2 / 2)``
    with ``u = (t_i - t0) / bandwidth``. Unnormalized; constants cancel in
    the conformal mass normalization."""
    u = (np.asarray(t_i, dtype=float) - t0) / config.bandwidth
    return np.exp(-0.5 * u * u)


def local_propensity_weight(x, t_i, t_0, provider, config, bounds):
    """Dose-localized likelihood-ratio weight: indicator * kernel / density.

    Computed in log space so tiny densities cannot underflow the kernel
    product. At ``t_i == t_0`` the kernel factor is exactly one and the
    result is :func:`global_propensity_weight` at that point, computed
    through the same code path so the identity holds exactly.
    """
    t_low, t_high = bounds
    if not t_low <= t_i <= t_high:
        return 0.0
    if t_i == t_0:
        dens = float(np.ravel(provider.density(x, t_i))[0])
        return global_propensity_weight(max(dens, DENSITY_FLOOR), t_i, t_low, t_high)
    log_pi = float(np.ravel(provider.log_density(x, t_i))[0])
    u = (t_i - t_0) / config.bandwidth
    return math.exp(-0.5 * u * u - log_pi)


def effective_sample_size(weights):
    """``(sum w)**2 / sum(w**2)``: uniform-weight equivalent of a weighted set."""
    w = np.asarray(weights, dtype=float).ravel()
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total == 0.0:
        raise ValueError("all weights are zero")
    return float(total**2 / np.sum(w**2))


def dump_propensity_diagnostics(path, t, pi_oracle, pi_hat):
    """Write per-sample density diagnostics as CSV ``sample_id,t,pi_oracle,pi_hat``."""
    t = check_vector(t, "t")
    pi_oracle = check_vector(pi_oracle, "pi_oracle")
    pi_hat = check_vector(pi_hat, "pi_hat")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "t", "pi_oracle", "pi_hat"])
        for i in range(len(t)):
            writer.writerow([i, repr(float(t[i])), repr(float(pi_oracle[i])),
                             repr(float(pi_hat[i]))])
