import math

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from doseconf import (
    DENSITY_FLOOR,
    GradientBoostedTrees,
    KernelConfig,
    OraclePropensity,
    PropensityEstimator,
    ScenarioSpec,
    dump_propensity_diagnostics,
    effective_sample_size,
    fit_propensity,
    generate,
    global_propensity_weight,
    kde_fit,
    local_kernel_weight,
    local_propensity_weight,
    oracle_propensity_density,
    split_dataset,
)
from doseconf.synthgen import SETUP_SCENARIOS, get_scenario

ALL_SCENARIOS = [(s, sc) for s, scs in SETUP_SCENARIOS.items() for sc in scs]


def test_global_weight_examples():
    assert global_propensity_weight(0.5, 1.0, 0.0, 2.0) == 2.0
    assert global_propensity_weight(0.5, 3.0, 0.0, 2.0) == 0.0
    assert global_propensity_weight(1.0, 1.0, 0.0, 2.0) == 1.0
    with pytest.raises(ValueError):
        global_propensity_weight(0.0, 1.0, 0.0, 2.0)
    with pytest.raises(ValueError):
        global_propensity_weight(-0.1, 1.0, 0.0, 2.0)


def test_local_kernel_weight_examples():
    cfg = KernelConfig(bandwidth=2.0)
    assert local_kernel_weight(1.0, 1.0, cfg) == 1.0
    assert local_kernel_weight(1.5, 1.0, cfg) == local_kernel_weight(0.5, 1.0, cfg)
    assert local_kernel_weight(3.0, 1.0, cfg) == pytest.approx(math.exp(-0.5), rel=1e-12)


def test_kernel_config_bandwidth_rule():
    cfg = KernelConfig.from_sigma(4.0)
    assert cfg.bandwidth == pytest.approx(2.0 * (0.2 * 4.0) ** 2)
    assert cfg.sigma == 4.0
    with pytest.raises(ValueError):
        KernelConfig(bandwidth=0.0)


def test_effective_sample_size_examples():
    assert effective_sample_size([1, 1, 1, 1]) == pytest.approx(4.0)
    assert effective_sample_size([1, 0, 0, 0]) == pytest.approx(1.0)
    assert effective_sample_size([2, 2, 2, 2]) == pytest.approx(4.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        w = rng.uniform(0, 1, size=rng.integers(1, 30))
        if w.sum() == 0:
            continue
        ess = effective_sample_size(w)
        assert 1.0 - 1e-9 <= ess <= len(w) + 1e-9
    with pytest.raises(ValueError):
        effective_sample_size([0.0, 0.0])
    with pytest.raises(ValueError):
        effective_sample_size([1.0, -1.0])


def test_oracle_density_closed_forms():
    # Confounded normal assignment: peak density at its own mean.
    x = np.zeros(3)
    assert oracle_propensity_density(3, 1, x, 0.0) == pytest.approx(
        1.0 / (4.0 * math.sqrt(2 * math.pi)), rel=1e-12)
    # Setup 1 scenario 1: dose located at 9*T_mu + 17 with Normal(0, 5) noise.
    x6 = np.zeros(6)
    loc = 9 * (-0.8) + 17
    assert oracle_propensity_density(1, 1, x6, loc) == pytest.approx(
        1.0 / (5.0 * math.sqrt(2 * math.pi)), rel=1e-12)
    with pytest.raises(ValueError):
        oracle_propensity_density(5, 1, x, 0.0)


def test_oracle_density_positive_for_normal_noise():
    # positive across the plausible dose range (underflow only sets in far
    # beyond 8 noise scales, where the weight builders floor anyway)
    rng = np.random.default_rng(3)
    for setup, scenario in [(1, 1), (1, 7), (2, 2), (3, 1)]:
        sc = get_scenario(setup, scenario)
        orc = OraclePropensity(setup, scenario)
        X = rng.normal(size=(20, sc.d))
        center = sc.treatment_location(X)
        for shift in (-8.0, 0.0, 8.0):
            dens = orc.density(X, center + shift * sc.noise_scale)
            assert (dens > 0).all()


@pytest.mark.parametrize("setup,scenario", ALL_SCENARIOS)
def test_oracle_density_integrates_to_one(setup, scenario):
    sc = get_scenario(setup, scenario)
    orc = OraclePropensity(setup, scenario)
    rng = np.random.default_rng(setup * 10 + scenario)
    X = generate(ScenarioSpec(setup, scenario, 3, seed=8)).X
    if sc.treatment_location is None:
        lo, hi = np.full(3, -1.0), np.full(3, 41.0)
    else:
        center = sc.treatment_location(X)
        half = {"student_t": 60.0}.get(None, 12.0 * sc.noise_scale)
        if (setup, scenario) == (1, 2):
            half = 60.0
        lo, hi = center - half, center + half
        if (setup, scenario) == (1, 8):
            lo, hi = center - 1.0, center + 21.0
    for i in range(3):
        grid = np.linspace(lo[i], hi[i], 20_001)
        dens = orc.density(np.tile(X[i], (len(grid), 1)), grid)
        integral = np.trapezoid(dens, grid)
        assert abs(integral - 1.0) <= 1e-3, (setup, scenario, integral)


@pytest.fixture(scope="module")
def fitted_estimator():
    ds = split_dataset(generate(ScenarioSpec(3, 1, 900, seed=4)), seed=4)
    train, cal = ds.subset("train"), ds.subset("cal")
    learner = GradientBoostedTrees(n_estimators=120, random_state=11)
    return fit_propensity(train, cal, learner=learner), train, cal


def test_fit_propensity_deterministic(fitted_estimator):
    est, train, cal = fitted_estimator
    learner = GradientBoostedTrees(n_estimators=120, random_state=11)
    again = fit_propensity(train, cal, learner=learner)
    probe_X, probe_t = cal.X[:20], cal.t[:20]
    assert np.array_equal(est.density(probe_X, probe_t), again.density(probe_X, probe_t))
    assert est.sigma == again.sigma


def test_estimated_density_positive_and_floored(fitted_estimator):
    est, _, cal = fitted_estimator
    dens = est.density(cal.X[:50], np.full(50, 1e6))  # absurd dose, deep tail
    assert (dens >= DENSITY_FLOOR).all()
    near = est.density(cal.X[:50], cal.t[:50])
    assert (near > 0).all() and np.isfinite(near).all()


def test_estimator_matches_per_query_kde(fitted_estimator):
    # The estimator's density must equal a KDE freshly fit on the per-query
    # predictive sample (prediction + calibration residuals).
    est, _, cal = fitted_estimator
    for i in (0, 7, 33):
        x = cal.X[i]
        sample = est.cps_.predict(np.atleast_2d(x))[0] + est.cps_.residuals_
        fresh = kde_fit(sample, est.bandwidth_rule)
        for t in (cal.t[i], cal.t[i] + 3.0):
            assert est.density(x, t)[0] == pytest.approx(
                max(fresh.density(t), DENSITY_FLOOR), rel=1e-9)


def test_calibration_density_is_algorithm_output(fitted_estimator):
    est, _, cal = fitted_estimator
    assert np.array_equal(est.calibration_density_, est.density(cal.X, cal.t))
    assert len(est.calibration_density_) == len(cal)


def test_degenerate_treatment_variance_errors():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 2))
    from doseconf.data import Dataset

    flat_t = Dataset(X, np.full(40, 3.3), rng.normal(size=40))
    with pytest.raises(ValueError, match="degenerate treatment variance"):
        fit_propensity(flat_t, flat_t, learner=GradientBoostedTrees(n_estimators=5))


def test_unfitted_estimator_raises():
    with pytest.raises(NotFittedError):
        PropensityEstimator().density(np.zeros((1, 2)), 0.0)
    with pytest.raises(NotFittedError):
        _ = PropensityEstimator().sigma


def test_independence_sanity_small():
    # T independent of X, standard normal: estimated density near the true
    # peak for most covariate rows.
    rng = np.random.default_rng(19)
    from doseconf.data import Dataset, split_dataset as split

    X = rng.normal(size=(2000, 3))
    t = rng.normal(size=2000)
    ds = split(Dataset(X, t, t), seed=1)
    est = fit_propensity(ds.subset("train"), ds.subset("cal"),
                         learner=GradientBoostedTrees(n_estimators=200, random_state=2))
    rows = rng.normal(size=(60, 3))
    dens = est.density(rows, 0.0)
    peak = 1.0 / math.sqrt(2 * math.pi)
    frac = np.mean(np.abs(dens - peak) <= 0.3 * peak)
    assert frac >= 0.7, (frac, float(np.median(dens)))


def test_local_propensity_identity_at_target(fitted_estimator):
    est, train, cal = fitted_estimator
    orc = OraclePropensity(3, 1)
    bounds = (float(train.t.min()), float(train.t.max()))
    cfg = KernelConfig.from_sigma(est.sigma)
    rng = np.random.default_rng(9)
    for provider in (est, orc):
        for _ in range(500):
            x = rng.normal(0, 5, size=3)
            t0 = float(rng.uniform(*bounds))
            pi = max(float(provider.density(x, t0)[0]), DENSITY_FLOOR)
            lhs = local_propensity_weight(x, t0, t0, provider, cfg, bounds)
            rhs = global_propensity_weight(pi, t0, *bounds)
            assert lhs == rhs, (lhs, rhs)


def test_local_propensity_ranking_and_indicator(fitted_estimator):
    est, train, _ = fitted_estimator
    bounds = (float(train.t.min()), float(train.t.max()))
    cfg = KernelConfig.from_sigma(4.0)
    x = np.zeros(3)

    class _FlatDensity:
        def density(self, X, t):
            return np.full(np.atleast_2d(X).shape[0], 0.25)

        def log_density(self, X, t):
            return np.log(self.density(X, t))

    flat = _FlatDensity()
    t0 = 0.5 * (bounds[0] + bounds[1])
    doses = np.linspace(bounds[0] + 0.1, bounds[1] - 0.1, 15)
    weights = [local_propensity_weight(x, ti, t0, flat, cfg, bounds) for ti in doses]
    kernels = [local_kernel_weight(ti, t0, cfg) for ti in doses]
    assert np.argsort(weights).tolist() == np.argsort(kernels).tolist()
    assert local_propensity_weight(x, bounds[1] + 1.0, t0, flat, cfg, bounds) == 0.0


def test_diagnostics_csv(tmp_path, fitted_estimator):
    est, _, cal = fitted_estimator
    orc = OraclePropensity(3, 1)
    path = tmp_path / "diag.csv"
    dump_propensity_diagnostics(path, cal.t, orc.density(cal.X, cal.t),
                                est.calibration_density_)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "sample_id,t,pi_oracle,pi_hat"
    assert len(lines) == len(cal) + 1
    first = lines[1].split(",")
    assert int(first[0]) == 0
    assert float(first[1]) == cal.t[0]
