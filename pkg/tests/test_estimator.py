import io
import json

import numpy as np
import pytest

from persistence_lab.estimator import (SurvivalCurve, TailNoiseError, default_window, exponent_fit, survival_curve,
                                       wilson)
from persistence_lab.fluctuation import log_grid


def exact_curve(t, s, n=10**6):
    return SurvivalCurve(t, s, np.zeros_like(t), 0.0, 1.0, n)


def pareto_times(theta, n, rng):
    # P(T > t) = t^-theta for t >= 1, by inversion
    return rng.random(n) ** (-1.0 / theta)


def test_survival_examples():
    c = survival_curve([1.0] * 100, [0.5, 2.0], 1.0)
    assert list(c.survival) == [1.0, 0.0]
    c = survival_curve([1.0] * 50 + [None] * 25 + [np.inf] * 25, [10.0], 1.0, horizon=100.0)
    assert list(c.survival) == [0.5] and c.censored_fraction == 0.5
    with pytest.raises(ValueError):
        survival_curve([1.0] * 100, [10.0, 200.0], 1.0, horizon=100.0)
    with pytest.raises(ValueError):
        survival_curve([1.0] * 99, [1.0, 2.0], 1.0)
    c = survival_curve([1.0] * 100 + [5.0] * 10, [2.0, 3.0], 1.0, exclude=[False] * 100 + [True] * 10)
    assert c.replica_count == 100 and c.excluded_fraction == pytest.approx(10 / 110)


def test_survival_is_monotone_with_wilson_ci():
    rng = np.random.default_rng(0)
    t = log_grid(1, 1e3, 8)
    c = survival_curve(pareto_times(0.3, 5000, rng), t, 1.0)
    assert np.all(np.diff(c.survival) <= 0)
    lo, hi = c.wilson_bounds()
    assert np.all(lo <= c.survival) and np.all(c.survival <= hi)
    centre, half = wilson(0.3, 1000)
    assert half == pytest.approx(c.ci_halfwidth[0] if c.survival[0] == 0.3 else half)
    assert 0.27 < centre - half < 0.3 < centre + half < 0.33


def test_exact_power_law():
    t = log_grid(1, 1e6, 8)
    fit = exponent_fit(exact_curve(t, t**-0.25), (10.0, 1e5))
    assert abs(fit.theta_hat - 0.25) < 1e-12
    fit = exponent_fit(exact_curve(t, t**-0.25), (10.0, 1e5), mode="local_slopes")
    assert abs(fit.theta_hat - 0.25) < 1e-12


def test_local_slopes_with_slow_variation():
    t = log_grid(1e3, 1e6, 16)
    s = t**-0.35 * (1 + 1 / np.log(t))
    fit = exponent_fit(exact_curve(t, s / s[0]), (1e3, 1e6), mode="local_slopes")
    assert abs(fit.theta_hat - 0.35) <= 0.02
    assert fit.diagnostics["iqr"] > 0


def test_pareto_recovery():
    rng = np.random.default_rng(1)
    t = log_grid(1, 1e4, 8)
    c = survival_curve(pareto_times(0.25, 200_000, rng), t, 1.0)
    fit = exponent_fit(c, (10.0, 10**3.5))
    assert abs(fit.theta_hat - 0.25) <= fit.ci


def test_ci_calibration_binomial():
    """S = t^-0.5 observed through 1e5 replicas: the CI covers 0.5 in >= 90 of 100 runs."""
    rng = np.random.default_rng(2)
    t = log_grid(1, 1e4, 8)
    hits = 0
    for _ in range(100):
        c = survival_curve(pareto_times(0.5, 100_000, rng), t, 1.0)
        f = exponent_fit(c)
        hits += abs(f.theta_hat - 0.5) <= f.ci
    assert hits >= 90


def test_equivariance():
    t = log_grid(1, 1e4, 8)
    # constant factor on exactly power-law data: intercept moves, slope does not
    a = exponent_fit(exact_curve(t, t**-0.4), (10.0, 1e3))
    b = exponent_fit(exact_curve(t, 0.5 * t**-0.4), (10.0, 1e3))
    assert abs(a.theta_hat - b.theta_hat) < 1e-12
    assert b.diagnostics["intercept"] == pytest.approx(a.diagnostics["intercept"] + np.log(0.5), abs=1e-10)
    # time rescaling leaves every weight in place: exact for arbitrary data
    rng = np.random.default_rng(3)
    c = survival_curve(pareto_times(0.4, 50_000, rng), t, 1.0)
    moved = SurvivalCurve(7.0 * t, c.survival, c.ci_halfwidth, 0.0, 1.0, c.replica_count)
    f1 = exponent_fit(c, (10.0, 1e3))
    f2 = exponent_fit(moved, (70.0, 7e3))
    assert abs(f1.theta_hat - f2.theta_hat) < 1e-12
    assert f2.diagnostics["intercept"] == pytest.approx(f1.diagnostics["intercept"] + f1.theta_hat * np.log(7.0),
                                                        abs=1e-9)


def test_tail_noise_guard():
    rng = np.random.default_rng(4)
    t = log_grid(1, 1e6, 8)
    c = survival_curve(pareto_times(0.5, 1000, rng), t, 1.0)
    with pytest.raises(TailNoiseError) as e:
        exponent_fit(c, (10.0, 1e6))
    hi = e.value.suggested_t_hi
    assert hi is not None and c.survival[t == hi][0] > 10 / 1000
    exponent_fit(c, (1.0, hi))


def test_window_checks():
    t = log_grid(1, 1e4, 8)
    c = exact_curve(t, t**-0.3)
    with pytest.raises(ValueError):
        exponent_fit(c, (0.1, 1e3))
    with pytest.raises(ValueError):
        exponent_fit(c, (10.0, 15.0))
    with pytest.raises(ValueError):
        exponent_fit(c, mode="bogus")
    lo, hi = default_window(t)
    assert lo == pytest.approx(10.0) and hi == pytest.approx(10**3.5)


def test_outputs():
    t = log_grid(1, 1e4, 8)
    c = exact_curve(t, t**-0.3)
    f = exponent_fit(c)
    buf = io.StringIO()
    f.write_json(buf, {"z": 1.0})
    d = json.loads(buf.getvalue())
    assert set(d) == {"theta_hat", "ci", "window", "mode", "censored_fraction", "z"}
    buf = io.StringIO()
    c.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,survival,ci" and len(lines) == t.size + 1
