"""Seeded generators for the three synthetic dose-response benchmarks.

Setup 1 has six covariates and eight treatment-assignment scenarios, setup 2
has a single discrete covariate with two assignment scenarios, and setup 3 is
a heavily confounded design with two outcome scenarios. All ``Normal(a, b)``
parameters are read as (mean, standard deviation).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._rng import substream
from .data import Dataset

SETUP_SCENARIOS = {1: tuple(range(1, 9)), 2: (1, 2), 3: (1, 2)}


@dataclass(frozen=True)
class ScenarioSpec:
    """One benchmark instance: which generator, how many samples, which seed."""

    setup: int
    scenario: int
    n: int
    seed: int
    outcome_noise_scale: float = 1.0

    def __post_init__(self):
        if self.setup not in SETUP_SCENARIOS or self.scenario not in SETUP_SCENARIOS[self.setup]:
            raise ValueError(f"unknown benchmark (setup={self.setup}, scenario={self.scenario})")


class _Scenario:
    def __init__(self, d, sample_covariates, sample_treatment, treatment_density,
                 noise_scale, outcome_mean, sample_outcome_noise, treatment_location=None):
        self.d = d
        self.sample_covariates = sample_covariates
        self.sample_treatment = sample_treatment
        self.treatment_density = treatment_density
        self.noise_scale = noise_scale
        self.outcome_mean = outcome_mean
        self.sample_outcome_noise = sample_outcome_noise
        # None when the assignment law is not location + additive noise.
        self.treatment_location = treatment_location


def _additive(location, sample_noise, noise_density):
    def sample_treatment(X, rng):
        return location(X) + sample_noise(rng, X.shape[0])

    def treatment_density(X, t):
        return noise_density(np.asarray(t, dtype=float) - location(X))

    return sample_treatment, treatment_density


def _setup1_t_mu(X, quadratic):
    mu = (-0.8 + X[:, 0] + 0.1 * X[:, 1] - 0.1 * X[:, 2]
          + 0.2 * X[:, 3] + 0.1 * X[:, 4] + 0.1 * X[:, 5])
    if quadratic:
        mu = mu + 1.5 * X[:, 2] ** 2
    return mu


def _setup1_covariates(rng, n):
    return np.column_stack([
        rng.normal(0.0, 1.0, size=(n, 4)),
        rng.integers(-2, 3, size=n).astype(float),
        rng.uniform(-3.0, 3.0, size=n),
    ])


def _setup1_outcome_mean(X, T):
    T = np.asarray(T, dtype=float)
    return (-1.0
            - (2 * X[:, 0] + 2 * X[:, 1] + 3 * X[:, 2] ** 3
               - 20 * X[:, 3] - 2 * X[:, 4] + 20 * X[:, 5])
            - 0.1 * T * (1 - X[:, 0] + X[:, 3] + X[:, 4] + X[:, 2] ** 2)
            + 0.13**2 * np.abs(T) ** 3 * np.sin(X[:, 3]))


# Location transform applied to T_mu, then one additive noise draw on top.
_SETUP1_LOCATIONS = {
    1: lambda mu: 9 * mu + 17,
    2: lambda mu: 15 * mu + 22,
    3: lambda mu: 9 * mu + 15,
    4: lambda mu: 49 * np.exp(mu) / (1 + np.exp(mu)) - 6,
    5: lambda mu: 42 / (1 + np.exp(mu)) + 18,
    6: lambda mu: 7 * np.log(np.abs(mu) + 0.001) + 13,
    7: lambda mu: 7 * mu + 16,
    8: lambda mu: 7 * mu + 16,
}

_BETA_SCALE = 20.0 * math.sqrt((2 * 8) / ((2 + 8) ** 2 * (2 + 8 + 1)))


def _setup1_noise(scenario):
    if scenario == 2:
        return (lambda rng, n: rng.standard_t(2, size=n),
                lambda z: stats.t.pdf(z, df=2),
                1.0)
    if scenario == 8:
        return (lambda rng, n: 20.0 * rng.beta(2, 8, size=n),
                lambda z: stats.beta.pdf(z / 20.0, 2, 8) / 20.0,
                _BETA_SCALE)
    sigma = {1: 5.0, 3: 5.0, 4: 5.0, 5: 5.0, 6: 4.0, 7: 1.0}[scenario]
    return (lambda rng, n: rng.normal(0.0, sigma, size=n),
            lambda z: stats.norm.pdf(z, 0.0, sigma),
            sigma)


def _make_setup1(scenario):
    transform = _SETUP1_LOCATIONS[scenario]
    sample_noise, noise_density, scale = _setup1_noise(scenario)
    location = lambda X: transform(_setup1_t_mu(X, quadratic=(scenario == 3)))
    sample_treatment, treatment_density = _additive(location, sample_noise, noise_density)
    return _Scenario(
        d=6,
        sample_covariates=_setup1_covariates,
        sample_treatment=sample_treatment,
        treatment_density=treatment_density,
        noise_scale=scale,
        outcome_mean=_setup1_outcome_mean,
        sample_outcome_noise=lambda X, rng, s: rng.normal(0.0, 5.0 * s, size=X.shape[0]),
        treatment_location=location,
    )


def _setup2_covariates(rng, n):
    return rng.integers(1, 5, size=n).astype(float).reshape(-1, 1)


def _setup2_outcome_mean(X, T):
    return np.sin(0.05 * math.pi * (np.asarray(T, dtype=float) - X[:, 0]))


def _setup2_mixture_sample(X, rng):
    x = X[:, 0]
    pick_low = rng.random(x.shape[0]) < 0.3
    low = rng.uniform(0.0, 5.0 * x)
    high = rng.uniform(5.0 * x, 40.0)
    return np.where(pick_low, low, high)


def _setup2_mixture_density(X, t):
    x = X[:, 0]
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape)
    split = 5.0 * x
    low = (t >= 0) & (t < split)
    high = (t >= split) & (t <= 40.0)
    return np.where(low, 0.3 / split, 0.0) + np.where(high, 0.7 / (40.0 - split), 0.0)


def _setup2_mixture_scale():
    # Root-mean conditional variance over the four equally likely covariate values.
    variances = []
    for k in (1, 2, 3, 4):
        split = 5.0 * k
        m_low, m_high = split / 2, (split + 40.0) / 2
        v_low, v_high = split**2 / 12, (40.0 - split) ** 2 / 12
        mean = 0.3 * m_low + 0.7 * m_high
        variances.append(0.3 * (v_low + m_low**2) + 0.7 * (v_high + m_high**2) - mean**2)
    return math.sqrt(float(np.mean(variances)))


def _make_setup2(scenario):
    location = None
    if scenario == 1:
        sample_treatment = _setup2_mixture_sample
        treatment_density = _setup2_mixture_density
        scale = _setup2_mixture_scale()
    else:
        location = lambda X: 5.0 * X[:, 0]
        sample_treatment, treatment_density = _additive(
            location, lambda rng, n: rng.normal(0.0, 10.0, size=n),
            lambda z: stats.norm.pdf(z, 0.0, 10.0))
        scale = 10.0
    return _Scenario(
        d=1,
        sample_covariates=_setup2_covariates,
        sample_treatment=sample_treatment,
        treatment_density=treatment_density,
        noise_scale=scale,
        outcome_mean=_setup2_outcome_mean,
        sample_outcome_noise=lambda X, rng, s: rng.normal(0.0, 0.1 * s, size=X.shape[0]),
        treatment_location=location,
    )


def _setup3_outcome_mean(X, T):
    T = np.asarray(T, dtype=float)
    return (np.sign(X[:, 2]) * (2 * (T - X[:, 1])) ** 2
            + 33 * T * np.sign(X[:, 0]))


def _make_setup3(scenario):
    location = lambda X: X[:, 1] + 0.1 * X[:, 0]
    sample_treatment, treatment_density = _additive(
        location, lambda rng, n: rng.normal(0.0, 4.0, size=n),
        lambda z: stats.norm.pdf(z, 0.0, 4.0))

    if scenario == 1:
        def sample_outcome_noise(X, rng, s):
            return rng.normal(0.0, 2.0 * s, size=X.shape[0])
    else:
        def sample_outcome_noise(X, rng, s):
            boosted = (np.sign(X[:, 2]) + 1.0) / 2.0
            return (boosted * rng.normal(0.0, 30.0 * s, size=X.shape[0])
                    + rng.normal(0.0, 2.0 * s, size=X.shape[0]))

    return _Scenario(
        d=3,
        sample_covariates=lambda rng, n: rng.normal(0.0, 5.0, size=(n, 3)),
        sample_treatment=sample_treatment,
        treatment_density=treatment_density,
        noise_scale=4.0,
        outcome_mean=_setup3_outcome_mean,
        sample_outcome_noise=sample_outcome_noise,
        treatment_location=location,
    )


def get_scenario(setup, scenario):
    """Return the internal descriptor for a benchmark (setup, scenario) pair."""
    if setup not in SETUP_SCENARIOS or scenario not in SETUP_SCENARIOS[setup]:
        raise ValueError(f"unknown benchmark (setup={setup}, scenario={scenario})")
    return {1: _make_setup1, 2: _make_setup2, 3: _make_setup3}[setup](scenario)


def generate(spec):
    """Draw a dataset for the given scenario, deterministic per seed."""
    sc = get_scenario(spec.setup, spec.scenario)
    X = sc.sample_covariates(substream(spec.seed, "covariates"), spec.n)
    T = sc.sample_treatment(X, substream(spec.seed, "treatment"))
    Y = sc.outcome_mean(X, T) + sc.sample_outcome_noise(
        X, substream(spec.seed, "outcome"), spec.outcome_noise_scale)
    return Dataset(X, T, Y)


def outcome_mean(spec, X, t):
    """Noise-free outcome surface of the scenario at covariates ``X`` and dose ``t``."""
    sc = get_scenario(spec.setup, spec.scenario)
    return sc.outcome_mean(np.atleast_2d(np.asarray(X, dtype=float)), t)


def sample_counterfactual(spec, x, t, noise_seed):
    """One draw of the potential outcome at dose ``t`` for covariates ``x``.

    The dose is imposed, ignoring the scenario's observational treatment
    mechanism; only outcome noise is random.
    """
    rng = substream(noise_seed, "counterfactual")
    sc = get_scenario(spec.setup, spec.scenario)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    draw = sc.outcome_mean(X, float(t)) + sc.sample_outcome_noise(
        X, rng, spec.outcome_noise_scale)
    return float(draw[0])


def sample_counterfactuals(spec, X, t, rng):
    """Vectorized counterfactual draws, one per row of ``X``, at dose(s) ``t``."""
    sc = get_scenario(spec.setup, spec.scenario)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return sc.outcome_mean(X, t) + sc.sample_outcome_noise(X, rng, spec.outcome_noise_scale)


def treatment_grid(train, k):
    """``k`` equally spaced doses between the 2% and 98% training dose quantiles."""
    if k < 2:
        raise ValueError("grid needs at least two points")
    lo, hi = np.quantile(train.t, [0.02, 0.98])
    if not hi > lo:
        raise ValueError("degenerate treatment range: cannot build a grid")
    return np.linspace(lo, hi, int(k))
