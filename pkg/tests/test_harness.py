import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from overparam import InvalidArgument, optimal_projection
from overparam.harness import (SWEEP_METHODS, SignalSpec, add_noise, cs_experiment,
                               denoising_sweep, derive_seed, estimate_pn_rip,
                               gen_piecewise_poly, metrics, rip_experiment)
from overparam.operators import dense_measurement, identity_measurement
from overparam.projection import junction_gaps


# signals ------------------------------------------------------------------


def test_default_signal_shape_and_range():
    f, fit = gen_piecewise_poly(SignalSpec(d=300, k=6, n=1, continuous=True, seed=1))
    assert f.shape == (300,)
    assert len(fit.breakpoints) == 6
    assert f.min() >= -1 - 1e-12 and f.max() <= 1 + 1e-12
    assert np.max(np.abs(junction_gaps(fit))) < 1e-9
    assert optimal_projection(f, 6, 1).sse < 1e-12


def test_breakpoints_are_real_jumps():
    f, fit = gen_piecewise_poly(SignalSpec(d=300, k=6, n=1, continuous=True, seed=1))
    # with one jump fewer no piecewise-linear fit is exact
    assert optimal_projection(f, 5, 1).sse > 1e-8


def test_single_polynomial_when_no_jumps():
    f, fit = gen_piecewise_poly(SignalSpec(d=50, k=0, n=2, seed=3))
    assert fit.breakpoints == ()
    x = np.arange(50.0)
    assert_allclose(np.polyval(np.polyfit(x, f, 2), x), f, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 4), st.integers(0, 2), st.booleans(), st.integers(0, 2 ** 31))
def test_generated_signal_is_in_the_model(k, n, continuous, seed):
    spec = SignalSpec(d=40, k=k, n=n, continuous=continuous and n > 0, seed=seed)
    f, fit = gen_piecewise_poly(spec)
    assert len(fit.breakpoints) == k
    assert all(b - a >= spec.segment_length for a, b in fit.segments)
    assert optimal_projection(f, k, n).sse < 1e-12
    assert f.min() >= -1 - 1e-12 and f.max() <= 1 + 1e-12
    if spec.continuous and k:
        assert np.max(np.abs(junction_gaps(fit))) < 1e-9


def test_generation_is_deterministic():
    a, _ = gen_piecewise_poly(SignalSpec(seed=9))
    b, _ = gen_piecewise_poly(SignalSpec(seed=9))
    c, _ = gen_piecewise_poly(SignalSpec(seed=10))
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("kwargs", [dict(d=20, k=6, n=1), dict(d=10, k=1, min_segment=0),
                                    dict(value_range=(1, 1)), dict(k=-1),
                                    dict(n=0, k=2, continuous=True)])
def test_infeasible_spec(kwargs):
    with pytest.raises(InvalidArgument):
        SignalSpec(**kwargs)


def test_derive_seed_separates_roles():
    seeds = {derive_seed(0, "signal", t) for t in range(50)}
    seeds |= {derive_seed(0, "noise", t) for t in range(50)}
    assert len(seeds) == 100
    assert derive_seed(5, "x", 1) == derive_seed(5, "x", 1)


# noise and metrics --------------------------------------------------------


def test_add_noise():
    x = np.linspace(0, 1, 10_000)
    assert_array_equal(add_noise(x, 0.0, 1), x)
    y = add_noise(x, 0.1, 1)
    assert abs(np.std(y - x) - 0.1) < 0.003
    assert_array_equal(y, add_noise(x, 0.1, 1))
    with pytest.raises(InvalidArgument):
        add_noise(x, -1.0, 1)


def test_metrics_examples():
    a = np.arange(16.0).reshape(4, 4)
    m = metrics(a, a)
    assert (m.mse, m.psnr, m.rel_err) == (0.0, 99.0, 0.0)
    m = metrics(a, a + 10)
    assert m.mse == 100.0
    assert m.psnr == pytest.approx(10 * math.log10(255 ** 2 / 100), abs=1e-12)
    assert m.psnr == pytest.approx(28.1308036, abs=1e-6)
    m = metrics(np.zeros(3), np.array([1.0, 0, 0]))
    assert m.rel_is_absolute and m.rel_err == 1.0
    with pytest.raises(InvalidArgument):
        metrics(np.zeros(3), np.zeros(4))


# sweep --------------------------------------------------------------------


def test_sweep_noiseless_is_exact():
    res = denoising_sweep(SignalSpec(d=80, k=3, n=1), [0.0], trials=2)
    assert len(res.aggregates) == len(SWEEP_METHODS)
    assert all(a["mean_mse"] < 1e-10 for a in res.aggregates)


def test_sweep_rows_and_aggregates():
    spec = SignalSpec(d=60, k=2, n=1, seed=4)
    res = denoising_sweep(spec, [0.1, 0.3], methods=["bgapn", "projection-oracle-k"], trials=3)
    assert len(res.rows) == 2 * 2 * 3
    assert len(res.aggregates) == 4
    for agg in res.aggregates:
        vals = [r["mse"] for r in res.rows
                if r["sigma"] == agg["sigma"] and r["method"] == agg["method"]]
        assert agg["mean_mse"] == pytest.approx(np.mean(vals), rel=1e-15)
        assert agg["std_mse"] == pytest.approx(np.std(vals), rel=1e-12, abs=1e-300)
    sig, mse = res.table("projection-oracle-k", "mean_mse")
    assert_array_equal(sig, [0.1, 0.3])
    assert mse[1] > mse[0]


def test_sweep_replays_bit_identically():
    spec = SignalSpec(d=60, k=2, n=1, seed=11)
    a = denoising_sweep(spec, [0.2], trials=2)
    b = denoising_sweep(spec, [0.2], trials=2, threads=2)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_sweep_unknown_method():
    with pytest.raises(InvalidArgument):
        denoising_sweep(SignalSpec(d=40, k=1), [0.1], methods=["tv"], trials=1)
    with pytest.raises(InvalidArgument):
        denoising_sweep(SignalSpec(d=40, k=1), [], trials=1)


# compressed sensing -------------------------------------------------------


def test_cs_rows():
    res = cs_experiment(SignalSpec(d=40, k=2, n=1), [1.0], trials=5)
    assert len(res.rows) == 10
    assert res.config["spec"]["continuous"] is False
    for agg in res.aggregates:
        assert agg["trials"] == 5
        assert 0.0 <= agg["mean_success"] <= 1.0


@pytest.mark.slow
def test_cs_full_sampling_recovers():
    res = cs_experiment(SignalSpec(d=100, k=6, n=2), [1.0], trials=50)
    for method in ("sscosamp", "bgapn"):
        assert res.table(method, "mean_success")[1][0] >= 0.9


@pytest.mark.slow
def test_cs_undersampled_fails():
    res = cs_experiment(SignalSpec(d=100, k=6, n=2), [0.1], trials=50)
    for method in ("sscosamp", "bgapn"):
        assert res.table(method, "mean_success")[1][0] <= 0.1


def test_cs_invalid_grid():
    with pytest.raises(InvalidArgument):
        cs_experiment(SignalSpec(d=40, k=1), [0.0], trials=1)
    with pytest.raises(InvalidArgument):
        cs_experiment(SignalSpec(d=40, k=1), [0.5], methods=["omp"], trials=1)


# P_n-RIP ------------------------------------------------------------------


def test_rip_isometries():
    assert estimate_pn_rip(identity_measurement(50), 1, 3, 20, 0) < 1e-12
    assert estimate_pn_rip(dense_measurement(2 * np.eye(50)), 1, 3, 20, 0) == pytest.approx(3, abs=1e-12)


def test_rip_shrinks_with_more_rows():
    res = rip_experiment(100, 1, 3, [40, 60, 80], draws=10, trials=200, seed=0)
    _, med = res.table("", "median_delta_hat")
    assert med[0] >= med[1] >= med[2]


def test_rip_identity_rows():
    res = rip_experiment(30, 1, 2, [30], draws=2, trials=10, identity=True)
    assert all(r["delta_hat"] < 1e-12 for r in res.rows)
    with pytest.raises(InvalidArgument):
        estimate_pn_rip(identity_measurement(10), 1, 1, 0, 0)
