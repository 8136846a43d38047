"""Experiment harness: multi-seed sweeps over the conformal method roster."""

import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .._rng import spawn_seeds, substream
from ..conformal import (
    LEVEL_SLACK,
    PredictionInterval,
    WeightedScoreDistribution,
    _standard_radius,
    calibration_scores,
    weighted_quantile,
)
from ..data import split_dataset
from ..learners import GradientBoostedTrees, fit_cadrf
from ..propensity import (
    DENSITY_FLOOR,
    KernelConfig,
    OraclePropensity,
    effective_sample_size,
    fit_propensity,
)
from ..synthgen import ScenarioSpec, generate, sample_counterfactuals, treatment_grid
from .report import CoverageReport, GridRow, SeedRow


class _ProviderCache:
    """Memoizes dose-independent provider quantities for repeated grid queries.

    Keyed by array identity: the runner passes the same calibration/test
    arrays for every grid dose, so the learner pass of the density estimator
    runs once instead of once per dose.
    """

    def __init__(self, provider):
        self.provider = provider
        self._log_density_key = None
        self._log_density = None
        self._t_hat_key = None
        self._t_hat = None

    def log_density_observed(self, X, t):
        if self._log_density_key is None or self._log_density_key != (id(X), id(t)):
            self._log_density = np.asarray(self.provider.log_density(X, t))
            self._log_density_key = (id(X), id(t))
            self._log_density_refs = (X, t)  # keep ids alive
        return self._log_density

    def density_at_dose(self, X, t0):
        if hasattr(self.provider, "log_density_at_predictions"):
            if self._t_hat_key != id(X):
                self._t_hat = self.provider.predict_dose(X)
                self._t_hat_key = id(X)
                self._t_hat_ref = X
            return np.exp(self.provider.log_density_at_predictions(self._t_hat, t0))
        return np.asarray(self.provider.density(X, t0))


class _GlobalPropensityFamily:
    """Weights 1/density inside the dose bounds, for any density provider."""

    def __init__(self, provider, bounds):
        self.provider = provider
        self.bounds = bounds
        self._cache = _ProviderCache(provider)

    def calibration(self, X, t, t0):
        log_dens = self._cache.log_density_observed(X, t)
        dens = np.maximum(np.exp(log_dens), DENSITY_FLOOR)
        inside = (t >= self.bounds[0]) & (t <= self.bounds[1])
        return np.where(inside, 1.0 / dens, 0.0)

    def test_weights(self, X, t0):
        dens = np.maximum(self._cache.density_at_dose(X, t0), DENSITY_FLOOR)
        if not self.bounds[0] <= t0 <= self.bounds[1]:
            return np.zeros(len(dens))
        return 1.0 / dens


class _LocalKernelFamily:
    """Gaussian closeness to the target dose; test points weigh K(0) = 1."""

    def __init__(self, config):
        self.config = config
        self.bounds = None

    def calibration(self, X, t, t0):
        u = (t - t0) / self.config.bandwidth
        return np.exp(-0.5 * u * u)

    def test_weights(self, X, t0):
        return np.ones(X.shape[0])


class _LocalPropensityFamily:
    """Indicator * kernel / density, computed in log space; at the target
    dose itself the weight reduces to the global propensity weight."""

    def __init__(self, provider, config, bounds):
        self.provider = provider
        self.config = config
        self.bounds = bounds
        self._cache = _ProviderCache(provider)

    def calibration(self, X, t, t0):
        u = (t - t0) / self.config.bandwidth
        log_w = -0.5 * u * u - self._cache.log_density_observed(X, t)
        inside = (t >= self.bounds[0]) & (t <= self.bounds[1])
        return np.where(inside, np.exp(log_w), 0.0)

    def test_weights(self, X, t0):
        dens = np.maximum(self._cache.density_at_dose(X, t0), DENSITY_FLOOR)
        if not self.bounds[0] <= t0 <= self.bounds[1]:
            return np.zeros(len(dens))
        return 1.0 / dens


def make_weight_family(method, oracle, estimated, bounds, sigma):
    """Build the calibration-weight family for one roster method.

    Returns None for ``standard_cp``.
    """
    if method == "standard_cp":
        return None
    if method == "wcp_local":
        return _LocalKernelFamily(KernelConfig.from_sigma(sigma))
    kind = "oracle" if method.endswith("_oracle") else "estimated"
    provider = oracle if kind == "oracle" else estimated
    if provider is None:
        raise ValueError(f"method {method} needs an {kind} density provider")
    if method.startswith("wcp_global"):
        return _GlobalPropensityFamily(provider, bounds)
    return _LocalPropensityFamily(provider, KernelConfig.from_sigma(sigma), bounds)


def family_weight_fn(family, t0):
    """Adapt a weight family into a plain ``(x, t) -> weight`` function."""

    def weight_fn(x, t):
        X = np.atleast_2d(np.asarray(x, dtype=float))
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            if float(t_arr) == t0:
                return float(family.test_weights(X, t0)[0])
            return float(family.calibration(X, np.full(X.shape[0], float(t_arr)), t0)[0])
        return family.calibration(X, t_arr, t0)

    return weight_fn


class PrecalibratedIntervals:
    """Per-dose weighted score distributions computed once and reused.

    Each grid dose touches every calibration sample exactly once during
    construction; queries at any precalibrated dose then cost one weight
    evaluation for the test point. Queries at other doses raise.
    """

    def __init__(self, model, cal, grid, weight_family):
        if len(grid) == 0:
            raise ValueError("grid is empty")
        if weight_family.bounds is not None:
            lo, hi = weight_family.bounds
            outside = [float(t0) for t0 in grid if not lo <= t0 <= hi]
            if outside:
                raise ValueError(f"grid values {outside} fall outside the dose bounds [{lo}, {hi}]")
        self.model = model
        self.family = weight_family
        self.grid = np.asarray(grid, dtype=float)
        residuals = np.abs(cal.y - model.predict(cal.X, cal.t))
        order = np.argsort(residuals, kind="stable")
        self.scores = residuals[order]
        self._X = cal.X[order]
        self._t = cal.t[order]
        self.raw_weights = [weight_family.calibration(self._X, self._t, t0) for t0 in self.grid]

    def _index(self, t0):
        match = np.nonzero(self.grid == t0)[0]
        if len(match) == 0:
            raise ValueError(f"recalibration required: dose {t0} is not in the precalibrated grid")
        return int(match[0])

    def distribution(self, x, t0):
        """Weighted score distribution for a test point at a precalibrated dose."""
        j = self._index(t0)
        w_new = float(self.family.test_weights(np.atleast_2d(np.asarray(x, dtype=float)), t0)[0])
        return WeightedScoreDistribution.from_raw_weights(self.scores, self.raw_weights[j], w_new)

    def interval(self, x, t0, alpha):
        radius = weighted_quantile(self.distribution(x, t0), 1.0 - alpha)
        y_hat = float(self.model.predict(np.atleast_2d(np.asarray(x, dtype=float)), t0)[0])
        if math.isinf(radius):
            return PredictionInterval(-math.inf, math.inf)
        return PredictionInterval(y_hat - radius, y_hat + radius)


def precalibrate_local(model, cal, grid, weight_family):
    """Precompute per-dose weighted distributions for repeated grid queries."""
    return PrecalibratedIntervals(model, cal, grid, weight_family)


def _batched_radii(scores, cum, test_weights, alpha):
    """Weighted-quantile radii for a batch of test weights at one dose."""
    total = cum[-1] if len(cum) else 0.0
    if total == 0.0:
        raise ValueError("all calibration weights are zero: no exchangeable mass")
    target = (1.0 - alpha - LEVEL_SLACK) * (total + test_weights)
    idx = np.searchsorted(cum, target, side="left")
    radii = np.where(idx < len(scores), scores[np.minimum(idx, len(scores) - 1)], math.inf)
    return radii


def _width_stats(widths):
    finite = widths[np.isfinite(widths)]
    inf_fraction = float(np.mean(~np.isfinite(widths)))
    if len(finite) == 0:
        return math.inf, math.inf, inf_fraction
    return float(finite.mean()), float(np.median(finite)), inf_fraction


def _provider_factories(oracle_factory, estimated_factory):
    if oracle_factory is None:
        oracle_factory = lambda spec, train, cal, seed: OraclePropensity(spec.setup, spec.scenario)
    if estimated_factory is None:
        estimated_factory = lambda spec, train, cal, seed: fit_propensity(train, cal, seed=seed)
    return oracle_factory, estimated_factory


def _run_seed(cfg, seed_index, entropy, oracle_factory=None, estimated_factory=None):
    oracle_factory, estimated_factory = _provider_factories(oracle_factory, estimated_factory)
    spec = ScenarioSpec(cfg.setup, cfg.scenario, cfg.n_samples, seed=entropy)
    data = split_dataset(generate(spec), cfg.fractions, seed=entropy)
    train, cal, test = data.subset("train"), data.subset("cal"), data.subset("test")

    model = fit_cadrf(GradientBoostedTrees(random_state=entropy), train)
    sorted_scores = calibration_scores(model, cal)
    # Dose bounds span the whole training sequence (proper train + calibration)
    # so the in-bounds indicator never zeroes a calibration point.
    bounds = (float(min(train.t.min(), cal.t.min())), float(max(train.t.max(), cal.t.max())))

    oracle = oracle_factory(spec, train, cal, entropy) if cfg.needs_oracle else None
    estimated = estimated_factory(spec, train, cal, entropy) if cfg.needs_estimated else None
    # Kernel bandwidth scale: the estimated density spread when it was fit,
    # otherwise the generator's noise scale.
    if "wcp_local" in cfg.methods and oracle is None and estimated is None:
        oracle = oracle_factory(spec, train, cal, entropy)
    sigma = estimated.sigma if estimated is not None else (oracle.sigma if oracle is not None else None)

    residuals = np.abs(cal.y - model.predict(cal.X, cal.t))
    order = np.argsort(residuals, kind="stable")
    scores = residuals[order]
    cal_X, cal_t = cal.X[order], cal.t[order]

    if cfg.evaluation == "grid":
        grid = treatment_grid(train, cfg.grid_k)
        cf_rng = substream(entropy, "counterfactual")
        targets = np.column_stack(
            [sample_counterfactuals(spec, test.X, t0, cf_rng) for t0 in grid])
        X_big = np.tile(test.X, (len(grid), 1))
        t_big = np.repeat(grid, len(test))
        y_hat = model.predict(X_big, t_big).reshape(len(grid), len(test)).T
    else:
        grid = None
        targets = test.y.reshape(-1, 1)
        y_hat = model.predict(test.X, test.t).reshape(-1, 1)

    rows, grid_rows = [], []
    for method in cfg.methods:
        family = make_weight_family(method, oracle, estimated, bounds, sigma)
        if cfg.evaluation == "grid":
            cover, widths, ess = _evaluate_grid(
                method, family, model, scores, cal_X, cal_t, test, grid, y_hat, targets,
                cfg.alphas, sorted_scores)
        else:
            cover, widths, ess = _evaluate_observed(
                method, family, model, scores, cal_X, cal_t, test, y_hat, targets,
                cfg.alphas, sorted_scores)
        for alpha in cfg.alphas:
            mean_w, med_w, inf_frac = _width_stats(widths[alpha].ravel())
            rows.append(SeedRow(
                method=method, seed=seed_index, alpha=alpha,
                setup=cfg.setup, scenario=cfg.scenario,
                mean_coverage=float(cover[alpha].mean()),
                mean_width=mean_w, median_width=med_w, inf_fraction=inf_frac,
                ess_median=float(np.median(ess)),
            ))
            if cfg.evaluation == "grid":
                for j, t0 in enumerate(grid):
                    grid_rows.append(GridRow(
                        method=method, seed=seed_index, alpha=alpha,
                        t0=float(t0), coverage=float(cover[alpha][:, j].mean()),
                    ))
    return rows, grid_rows


def _evaluate_grid(method, family, model, scores, cal_X, cal_t, test, grid, y_hat,
                   targets, alphas, sorted_scores):
    n_test, k = targets.shape
    cover = {a: np.zeros((n_test, k), dtype=bool) for a in alphas}
    widths = {a: np.zeros((n_test, k)) for a in alphas}
    if family is None:
        ess = np.full(k, float(len(sorted_scores)))
        for alpha in alphas:
            radius = _standard_radius(sorted_scores, alpha)
            cover[alpha][:] = np.abs(targets - y_hat) <= radius
            widths[alpha][:] = 2.0 * radius
        return cover, widths, ess

    ess = np.zeros(k)
    for j, t0 in enumerate(grid):
        raw = family.calibration(cal_X, cal_t, t0)
        cum = np.cumsum(raw)
        ess[j] = effective_sample_size(raw)
        w_new = family.test_weights(test.X, t0)
        for alpha in alphas:
            radii = _batched_radii(scores, cum, w_new, alpha)
            cover[alpha][:, j] = np.abs(targets[:, j] - y_hat[:, j]) <= radii
            widths[alpha][:, j] = 2.0 * radii
    return cover, widths, ess


def _evaluate_observed(method, family, model, scores, cal_X, cal_t, test, y_hat,
                       targets, alphas, sorted_scores):
    n_test = targets.shape[0]
    cover = {a: np.zeros((n_test, 1), dtype=bool) for a in alphas}
    widths = {a: np.zeros((n_test, 1)) for a in alphas}
    if family is None:
        ess = np.full(n_test, float(len(sorted_scores)))
        for alpha in alphas:
            radius = _standard_radius(sorted_scores, alpha)
            cover[alpha][:] = np.abs(targets - y_hat) <= radius
            widths[alpha][:] = 2.0 * radius
        return cover, widths, ess

    ess = np.zeros(n_test)
    for i in range(n_test):
        t0 = float(test.t[i])
        raw = family.calibration(cal_X, cal_t, t0)
        cum = np.cumsum(raw)
        ess[i] = effective_sample_size(raw)
        w_new = family.test_weights(test.X[i : i + 1], t0)
        for alpha in alphas:
            radius = _batched_radii(scores, cum, w_new, alpha)[0]
            cover[alpha][i, 0] = abs(targets[i, 0] - y_hat[i, 0]) <= radius
            widths[alpha][i, 0] = 2.0 * radius
    return cover, widths, ess


def _worker(args):
    cfg, seed_index, entropy = args
    try:
        return seed_index, _run_seed(cfg, seed_index, entropy), None
    except Exception as exc:  # noqa: BLE001 - seed isolation is the contract
        return seed_index, None, f"{type(exc).__name__}: {exc}"


def _resolve_workers(cfg):
    workers = max(1, int(cfg.workers))
    cap = os.environ.get("DOSECONF_THREADS")
    if cap:
        workers = min(workers, max(1, int(cap)))
    return workers


def run_experiment(cfg, oracle_factory=None, estimated_factory=None):
    """Run the full multi-seed sweep described by ``cfg``.

    Seeds are independent work units; a failing seed is recorded in the
    report's ``failed_seeds`` and excluded from aggregates rather than
    aborting the sweep. Custom density-provider factories run sequentially.

    Returns
    -------
    CoverageReport
    """
    entropies = spawn_seeds(cfg.master_seed, cfg.n_seeds)
    workers = _resolve_workers(cfg)
    custom = oracle_factory is not None or estimated_factory is not None
    results, failed = {}, []

    if workers > 1 and not custom:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = [(cfg, i, entropies[i]) for i in range(cfg.n_seeds)]
            for seed_index, payload, error in pool.map(_worker, jobs):
                if error is None:
                    results[seed_index] = payload
                else:
                    failed.append({"seed": seed_index, "error": error})
    else:
        for i in range(cfg.n_seeds):
            try:
                results[i] = _run_seed(cfg, i, entropies[i], oracle_factory, estimated_factory)
            except Exception as exc:  # noqa: BLE001 - seed isolation is the contract
                failed.append({"seed": i, "error": f"{type(exc).__name__}: {exc}"})
    failed.sort(key=lambda f: f["seed"])

    rows, grid_rows = [], []
    for i in sorted(results):
        seed_rows, seed_grid = results[i]
        rows.extend(seed_rows)
        grid_rows.extend(seed_grid)
    return CoverageReport(rows=rows, grid_rows=grid_rows, failed_seeds=failed,
                          config=cfg.to_dict())
