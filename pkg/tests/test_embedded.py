import numpy as np
import pytest
from scipy import integrate, special, stats

from pdmp_ergo.embedded import (EmpiricalMeasure, chain_invariant_sample,
                                chain_sample_matrix, chain_step, h_function,
                                kernel_K_sample, kernel_Ktilde_sample,
                                reconstruct_mu, time_average_states)
from pdmp_ergo.models import (TcpConstantParams, TcpLinearParams,
                              make_tcp_constant, make_tcp_linear)
from pdmp_ergo.rng import RandomStream


def constant_model(rate=1.0, delta=0.5):
    return make_tcp_constant(TcpConstantParams(rate=rate, delta=delta))


def linear_model(delta=0.5):
    return make_tcp_linear(TcpLinearParams(delta))


# ---------------------------------------------------------------------------
# EmpiricalMeasure
# ---------------------------------------------------------------------------

def test_measure_invariants():
    m = EmpiricalMeasure.from_samples([3.0, 1.0, 2.0])
    assert np.all(np.diff(m.values) >= 0)
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([2.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([1.0, 2.0]), np.array([0.5, 0.4]))


def test_measure_csv_roundtrip(tmp_path):
    m = EmpiricalMeasure.from_samples(
        np.exp(RandomStream(1).normal(257)), provenance="chain")
    path = tmp_path / "measure.csv"
    m.to_csv(path)
    back = EmpiricalMeasure.read_csv(path)
    assert np.array_equal(back.values, m.values)
    assert np.allclose(back.weights, m.weights, atol=1e-15)
    header = path.read_text().splitlines()[0]
    assert header == "value,weight"


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def test_pre_jump_kernel_constant_rate_is_shifted_exponential():
    model = constant_model()
    x = np.full(1_000_000, 2.0)
    out = kernel_K_sample(model, x, RandomStream(5))
    assert np.all(out > 2.0)  # stochastic domination for increasing flow
    se = out.std(ddof=1) / np.sqrt(out.size)
    assert abs(out.mean() - 3.0) <= 3 * se


def test_pre_jump_kernel_linear_origin_mean():
    oracle, _ = integrate.quad(lambda t: t * t * np.exp(-0.5 * t * t), 0, np.inf)
    out = kernel_K_sample(linear_model(), np.zeros(1_000_000), RandomStream(6))
    se = out.std(ddof=1) / np.sqrt(out.size)
    assert abs(out.mean() - oracle) <= 3 * se


def test_length_biased_kernel_constant_rate():
    model = constant_model(rate=2.0)
    out = kernel_Ktilde_sample(model, np.zeros(500_000), RandomStream(7))
    se = out.std(ddof=1) / np.sqrt(out.size)
    assert abs(out.mean() - 0.5) <= 3 * se
    # distributional agreement with a direct exponential sampler at the 1% level
    direct = RandomStream(8).exponential(100_000) / 2.0
    stat = stats.ks_2samp(out[:100_000], direct).statistic
    assert stat < 1.6276 * np.sqrt(2.0 / 100_000)


def test_length_biased_kernel_linear_origin_is_half_normal():
    out = kernel_Ktilde_sample(linear_model(), np.zeros(1_000_000), RandomStream(9))
    se = out.std(ddof=1) / np.sqrt(out.size)
    assert abs(out.mean() - np.sqrt(2.0 / np.pi)) <= 3 * se
    stat = stats.kstest(out[:200_000], lambda t: special.erf(t / np.sqrt(2.0))).statistic
    assert stat < 1.6276 / np.sqrt(200_000)


def test_length_biased_rejection_acceptance_rate():
    # analytic acceptance of the hybrid proposal stays above one half
    x = np.linspace(0.0, 50.0, 501)
    h = np.sqrt(np.pi / 2.0) * special.erfcx(x / np.sqrt(2.0))
    acc = np.where(x < 1.0, np.sqrt(2.0 / np.pi) * h, x * h)
    assert np.all(acc >= 0.5 - 1e-12)


def test_generic_length_biased_path_matches_closed_form():
    from dataclasses import replace
    model = replace(constant_model(rate=2.0), ktilde_sampler=None)
    out = kernel_Ktilde_sample(model, np.zeros(200_000), RandomStream(10))
    se = out.std(ddof=1) / np.sqrt(out.size)
    assert abs(out.mean() - 0.5) <= max(3 * se, 2e-3)


# ---------------------------------------------------------------------------
# chain
# ---------------------------------------------------------------------------

def test_chain_step_identities_per_draw():
    # the step reuses the draws of the stream, so replaying the stream
    # reproduces the closed-form update exactly
    model = constant_model()
    node_a = RandomStream(3).substream(1)
    node_b = RandomStream(3).substream(1)
    x = np.array([0.7, 1.3, 4.0])
    stepped = chain_step(model, x, node_a)
    e = node_b.exponential(3)
    assert np.array_equal(stepped, 0.5 * (x + e))

    lin = linear_model()
    node_a = RandomStream(4).substream(2)
    node_b = RandomStream(4).substream(2)
    stepped = chain_step(lin, x, node_a)
    e = node_b.exponential(3)
    assert np.allclose(stepped, 0.5 * np.sqrt(x * x + 2 * e), rtol=1e-14)


def test_chain_step_full_collapse():
    model = constant_model(delta=0.0)
    out = chain_step(model, np.linspace(0, 5, 11), RandomStream(1))
    assert np.all(out == 0.0)


def test_single_sample_chain():
    m = chain_invariant_sample(constant_model(), 1, burn_in=0, stream=RandomStream(2))
    assert m.size == 1 and m.provenance == "chain"


def test_constant_chain_mean():
    m = chain_invariant_sample(constant_model(), 100_000, stream=RandomStream(12))
    assert abs(m.mean() - 1.0) <= 0.02


def test_linear_chain_second_moment_identity():
    m = chain_invariant_sample(linear_model(), 100_000, stream=RandomStream(13))
    assert abs(0.75 * m.moment(2) - 0.5) <= 0.02 * 0.5 * 5  # 10% at this n; 2% at 1e6 in acceptance


# ---------------------------------------------------------------------------
# the mean residual normaliser
# ---------------------------------------------------------------------------

def test_h_constant_rate():
    assert h_function(constant_model(rate=2.0), 1.7) == pytest.approx(0.5, abs=0)


def test_h_linear_origin_matches_quadrature():
    oracle, _ = integrate.quad(lambda t: np.exp(-0.5 * t * t), 0, np.inf)
    assert h_function(linear_model(), 0.0) == pytest.approx(oracle, rel=1e-12)


def test_h_generic_quadrature_path():
    from dataclasses import replace
    bare = replace(linear_model(), h_form=None)
    for x in (0.0, 0.5, 2.0, 10.0):
        direct = h_function(bare, x)
        closed = h_function(linear_model(), x)
        assert direct == pytest.approx(closed, rel=1e-7)


def test_h_nonincreasing_for_nondecreasing_rates():
    model = linear_model()
    xs = np.linspace(0.0, 30.0, 301)
    hv = model.h_form(xs)
    assert np.all(np.diff(hv) <= 0)


def test_h_divergence_detected():
    # unit-speed flow with a dying rate: the survival factor never decays
    from pdmp_ergo.core import Model
    dying = Model(
        name="dying",
        domain_low=0.0,
        domain_high=np.inf,
        drift=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        flow=lambda x, t: np.asarray(x, dtype=float) + t,
        rate=lambda x: np.exp(-np.asarray(x, dtype=float)),
        cum_rate=lambda x, t: np.exp(-np.asarray(x, dtype=float))
        * -np.expm1(-np.asarray(t, dtype=float)),
        inv_cum_rate=lambda x, u: np.asarray(u, dtype=float),
        jump=lambda x, rng: np.asarray(x, dtype=float),
        jump_gradient_bound=lambda x: np.ones_like(np.asarray(x, dtype=float)),
    )
    with pytest.raises(ValueError):
        h_function(dying, 1.0)


# ---------------------------------------------------------------------------
# reconstruction of the process law
# ---------------------------------------------------------------------------

def test_reconstruct_requires_chain_tag():
    m = EmpiricalMeasure.from_samples([1.0, 2.0], provenance="reweighted")
    with pytest.raises(ValueError):
        reconstruct_mu(constant_model(), m, RandomStream(0))


def test_reconstruct_constant_rate_weights_unchanged():
    model = constant_model()
    chain = chain_invariant_sample(model, 20_000, stream=RandomStream(21))
    mu = reconstruct_mu(model, chain, RandomStream(22))
    assert mu.provenance == "reweighted"
    assert abs(mu.weights.sum() - 1.0) <= 1e-12
    assert np.allclose(mu.weights, np.full(mu.size, 1.0 / mu.size), atol=1e-15)


def test_two_estimator_consistency_constant_rate():
    model = constant_model()
    matrix = chain_sample_matrix(model, 200_000, stream=RandomStream(30))
    flat = matrix.ravel()
    pushed = kernel_Ktilde_sample(model, flat, RandomStream(31))
    cols = pushed.reshape(matrix.shape)
    col_means = cols.mean(axis=0)
    rec_mean = col_means.mean()
    rec_se = col_means.std(ddof=1) / np.sqrt(col_means.size)

    ta = time_average_states(model, 1.0, 20.0, 120.0, 256, 64, RandomStream(32))
    ta_means = ta.mean(axis=1)
    ta_mean = ta_means.mean()
    ta_se = ta_means.std(ddof=1) / np.sqrt(ta_means.size)

    assert abs(rec_mean - ta_mean) <= 3 * np.hypot(rec_se, ta_se)
    # generator identity for the stationary mean
    assert abs(rec_mean - 2.0) <= 4 * rec_se


def test_normaliser_constant_rate_exact():
    from pdmp_ergo.embedded import normaliser_estimate
    model = constant_model(rate=2.0)
    chain = chain_invariant_sample(model, 5000, stream=RandomStream(40))
    est = normaliser_estimate(model, chain, RandomStream(41))
    assert est.value == pytest.approx(0.5, rel=1e-12)
    assert est.std_error == 0.0


def test_normaliser_linear_rate_bootstrap():
    from pdmp_ergo.embedded import normaliser_estimate
    model = linear_model()
    chain = chain_invariant_sample(model, 50_000, stream=RandomStream(42))
    est = normaliser_estimate(model, chain, RandomStream(43))
    # mean of a positive decreasing function bounded by its value at zero
    assert 0.0 < est.value < np.sqrt(np.pi / 2.0)
    assert 0.0 < est.std_error < 0.01


def test_two_estimator_consistency_linear_rate():
    model = linear_model()
    matrix = chain_sample_matrix(model, 200_000, stream=RandomStream(33))
    flat = matrix.ravel()
    hv = model.h_form(flat).reshape(matrix.shape)
    pushed = kernel_Ktilde_sample(model, flat, RandomStream(34)).reshape(matrix.shape)
    col_means = (hv * pushed).sum(axis=0) / hv.sum(axis=0)
    rec_mean = col_means.mean()
    rec_se = col_means.std(ddof=1) / np.sqrt(col_means.size)

    ta = time_average_states(model, 1.0, 20.0, 120.0, 256, 64, RandomStream(35))
    ta_means = ta.mean(axis=1)
    ta_se = ta_means.std(ddof=1) / np.sqrt(ta_means.size)
    assert abs(rec_mean - ta_means.mean()) <= 3 * np.hypot(rec_se, ta_se)
