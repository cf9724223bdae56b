import numpy as np
import pytest
from scipy import integrate

from pdmp_ergo.models import (PsiChart, StorageParams, TcpConstantParams,
                              TcpIncreasingParams, TcpLinearParams,
                              exponential_increment, linear_weight,
                              make_affine_rate_tcp, make_storage,
                              make_tcp_constant, make_tcp_increasing,
                              make_tcp_linear, make_twisted_tcp_linear,
                              psi_chart, tcp_constant_invariant_moments,
                              tcp_constant_spectrum)
from pdmp_ergo.rng import RandomStream


# ---------------------------------------------------------------------------
# parameter validation
# ---------------------------------------------------------------------------

def test_constant_params_validate():
    with pytest.raises(ValueError):
        TcpConstantParams(rate=0.0, delta=0.5)
    with pytest.raises(ValueError):
        TcpConstantParams(rate=1.0, delta=1.0)
    with pytest.raises(ValueError):
        TcpConstantParams(rate=1.0)  # no factor information at all


def test_random_factor_needs_small_second_moment():
    with pytest.raises(ValueError):
        TcpConstantParams(rate=1.0, factor_sampler=lambda u: u,
                          factor_moment=lambda k: 1.0)


def test_increasing_params_check_rate_floor_and_kappa():
    with pytest.raises(ValueError):
        TcpIncreasingParams(rate_fn=lambda x: 2.0 + 0 * np.asarray(x, dtype=float),
                            lambda_star=1.0, kappa=1.0, delta=0.5)
    with pytest.raises(ValueError):
        # log slope is 1 at the origin, well above the claimed kappa
        TcpIncreasingParams(rate_fn=lambda x: 1.0 + np.asarray(x, dtype=float),
                            lambda_star=1.0, kappa=0.05, delta=0.5)


def test_storage_params_reject_nonpositive_increments():
    with pytest.raises(ValueError):
        StorageParams(1.0, lambda u: np.asarray(u) - 2.0)


# ---------------------------------------------------------------------------
# constant-rate model
# ---------------------------------------------------------------------------

def test_constant_closed_forms():
    model = make_tcp_constant(TcpConstantParams(rate=1.0, delta=0.5))
    assert model.inv_cum_rate(3.0, 2.0) == pytest.approx(2.0, abs=0)
    assert float(model.jump(4.0, RandomStream(0))) == pytest.approx(2.0, abs=0)
    assert float(model.jump_gradient_bound(1.0)) == pytest.approx(0.25, abs=0)


def test_constant_moments_and_spectrum():
    params = TcpConstantParams(rate=1.0, delta=0.5)
    assert tcp_constant_invariant_moments(params, 0) == 1.0
    assert tcp_constant_invariant_moments(params, 1) == pytest.approx(1.0, rel=1e-14)
    assert tcp_constant_invariant_moments(params, 2) == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert tcp_constant_spectrum(params, 0) == 0.0
    assert tcp_constant_spectrum(params, 1) == pytest.approx(-0.5, abs=0)
    assert tcp_constant_spectrum(params, 2) == pytest.approx(-0.75, abs=0)


def test_constant_second_moment_against_chain_recursion_oracle():
    # brute-force oracle: iterate the distributional fixed point Z -> d(Z + E)
    params = TcpConstantParams(rate=1.0, delta=0.5)
    rng = RandomStream(99)
    z = np.zeros(100_000)
    for j in range(60):
        z = 0.5 * (z + rng.substream(j).exponential(z.size))
    m2 = (z ** 2).mean()
    se = (z ** 2).std(ddof=1) / np.sqrt(z.size)
    assert abs(tcp_constant_invariant_moments(params, 2) - m2) <= 4 * se


def test_random_factor_model_simulates():
    params = TcpConstantParams(
        rate=1.0,
        factor_sampler=lambda u: 0.5 * np.asarray(u, dtype=float),
        factor_moment=lambda k: 0.5 ** k / (k + 1.0),  # moments of U(0, 1/2)
    )
    model = make_tcp_constant(params)
    out = model.jump(np.full(1000, 4.0), RandomStream(3))
    assert np.all((out >= 0) & (out < 2.0))
    assert float(model.jump_gradient_bound(0.0)) == pytest.approx(1.0 / 12.0)


# ---------------------------------------------------------------------------
# linear-rate model
# ---------------------------------------------------------------------------

def test_linear_closed_forms():
    model = make_tcp_linear(TcpLinearParams(0.5))
    assert model.inv_cum_rate(0.0, 2.0) == pytest.approx(2.0, abs=0)
    assert float(model.weight(np.log(2.0))) == pytest.approx(0.5, rel=1e-15)


def test_linear_weight_concavity_consequence():
    delta = 0.5
    x = np.linspace(0.0, 40.0, 4001)
    assert np.all(linear_weight(delta * x) >= delta * linear_weight(x) - 1e-15)


def test_linear_mean_jump_time_from_invariant_exponential():
    # Monte Carlo of the inverse transform against the quadrature value
    oracle, _ = integrate.quad(lambda t: t * t * np.exp(-0.5 * t * t), 0, np.inf)
    model = make_tcp_linear(TcpLinearParams(0.5))
    e = RandomStream(41).exponential(1_000_000)
    t = model.inv_cum_rate(np.zeros_like(e), e)
    assert abs(t.mean() - oracle) <= 3 * t.std(ddof=1) / np.sqrt(t.size)


# ---------------------------------------------------------------------------
# storage and nondecreasing-rate models
# ---------------------------------------------------------------------------

def test_storage_flow_and_bound():
    model = make_storage(StorageParams(1.0, exponential_increment(1.0)))
    assert float(model.flow(1.0, np.log(2.0))) == pytest.approx(0.5, rel=1e-15)
    assert float(model.jump_gradient_bound(2.0)) == 1.0


def test_increasing_numeric_matches_closed_form():
    model = make_tcp_increasing(TcpIncreasingParams(
        rate_fn=lambda x: 1.0 + np.asarray(x, dtype=float),
        lambda_star=1.0, kappa=1.0, delta=0.5))
    ts = np.linspace(0.0, 30.0, 301)
    exact = ts + 0.5 * ts * ts
    got = model.cum_rate(np.zeros_like(ts), ts)
    assert np.max(np.abs(got - exact)) <= 1e-10
    us = np.linspace(0.0, 60.0, 121)
    got_inv = model.inv_cum_rate(np.zeros_like(us), us)
    exact_inv = np.sqrt(1.0 + 2.0 * us) - 1.0
    assert np.max(np.abs(got_inv - exact_inv)) <= 1e-10


def test_affine_shortcut_agrees_with_numeric_path():
    fast = make_affine_rate_tcp(1.0, 1.0, 0.5)
    slow = make_tcp_increasing(TcpIncreasingParams(
        rate_fn=lambda x: 1.0 + np.asarray(x, dtype=float),
        lambda_star=1.0, kappa=1.0, delta=0.5))
    x = np.linspace(0.0, 20.0, 77)
    t = np.linspace(0.1, 5.0, 77)
    assert np.allclose(fast.cum_rate(x, t), slow.cum_rate(x, t), atol=1e-10)
    u = np.linspace(0.0, 30.0, 77)
    assert np.allclose(fast.inv_cum_rate(x, u), slow.inv_cum_rate(x, u), atol=1e-10)


def test_rate_table_horizon_guard():
    # a rate that dies off keeps the cumulative integral bounded
    from pdmp_ergo.models import UnitFlowCumRate
    table = UnitFlowCumRate(lambda y: np.exp(-np.asarray(y, dtype=float)),
                            y_high=8.0, y_cap=1e4)
    with pytest.raises(ValueError):
        table.inverse(5.0)


# ---------------------------------------------------------------------------
# flattening chart and twisted model
# ---------------------------------------------------------------------------

def test_chart_basics():
    chart = psi_chart()
    assert chart.psi(0.0) == 0.0
    xs = np.linspace(0.0, 50.0, 2001)
    vals = chart.psi(xs)
    assert np.all(np.diff(vals) > 0)
    assert np.max(np.abs(chart.psi_inv(vals) - xs)) <= 1e-9


def test_chart_tail_offset_matches_quadrature():
    # oracle: integral of weight^{-1/2} - 1 over the half-line
    oracle, _ = integrate.quad(
        lambda y: 1.0 / np.sqrt(-np.expm1(-y)) - 1.0, 0.0, np.inf)
    chart = psi_chart()
    assert chart.psi(50.0) >= 50.0
    assert chart.psi(50.0) <= 50.0 + oracle + 1e-9
    assert abs(chart.offset - oracle) <= 1e-9


def test_chart_fresh_instance_matches_cached():
    fresh = PsiChart(n_panels=512)
    xs = np.linspace(0.0, 40.0, 101)
    assert np.allclose(fresh.psi(xs), psi_chart().psi(xs), atol=1e-11)


def test_twisted_jump_gradient_subcommutation():
    # |d/dz of the twisted jump of g| <= sqrt(delta) * |g'(jump)| for g(z)=z
    delta = 0.5
    model = make_twisted_tcp_linear(delta)
    chart = psi_chart()
    z = chart.psi(np.linspace(0.05, 25.0, 400))
    h = 1e-5
    slope = (model.jump(z + h, None) - model.jump(z - h, None)) / (2 * h)
    assert np.all(np.abs(slope) <= np.sqrt(delta) + 1e-5)


def test_twisted_rate_and_flow():
    model = make_twisted_tcp_linear(0.5)
    chart = psi_chart()
    z = chart.psi(3.0)
    assert float(model.rate(z)) == pytest.approx(3.0, rel=1e-11)
    assert float(model.flow(z, 2.0)) == pytest.approx(float(chart.psi(5.0)), rel=1e-11)
