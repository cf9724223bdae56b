"""Explicit convergence-rate and functional-inequality constants.

Mechanises the full constant calculus: drift/jump balance infima, the
confining-kernel composition algebra for spectral-gap style constants of
invariant laws, the half-line integral criterion bracketing an optimal
constant, perturbation formulas for reweighted measures, and the
end-to-end pipelines for the shipped models.  Every pipeline records an
auditable ledger of (quantity, value, derivation) lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .models import linear_h

__all__ = [
    "BalanceSpec",
    "ConfiningProfile",
    "RateCertificate",
    "TcpConstantCertificate",
    "TcpLinearCertificate",
    "balance_eta",
    "balance_spec_tcp_constant",
    "balance_spec_storage",
    "balance_spec_tcp_linear",
    "tcp_linear_balance_envelope",
    "theta_constant",
    "confining_compose",
    "confining_fixed_point",
    "push_through",
    "muckenhoupt_bound",
    "perturb_poincare",
    "perturb_logsob",
    "perturb_logsob_grid",
    "certify_tcp_constant",
    "certify_tcp_increasing",
    "certify_tcp_linear",
    "generalized_poincare_alpha",
]


def default_balance_grid(low: float = 1e-6, high: float = 50.0, n: int = 512,
                         extra=()) -> np.ndarray:
    """Log-spaced evaluation grid with optional analytic anchor points."""
    g = np.geomspace(low, high, n)
    if len(extra):
        g = np.sort(np.concatenate([g, np.asarray(extra, dtype=float)]))
    return g


# ---------------------------------------------------------------------------
# balance condition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BalanceSpec:
    """Scalar fields entering the drift/jump balance bound, with a grid."""

    drift_jacobian: Callable
    rate: Callable
    rate_deriv: Callable
    jump_gradient_bound: Callable
    weight: Callable
    weight_deriv: Callable
    drift: Callable
    grid: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("grid must be a nonempty 1-d array")
        object.__setattr__(self, "grid", g)


def balance_eta(spec: BalanceSpec, beta: Optional[float] = None) -> float:
    """Largest decay exponent compatible with the balance bound on the grid.

    Evaluates the infimum over the grid of
    ``-(2 J_b + a rate'^2/(beta rate) + rate (M - 1) - drift a'/a)``;
    without ``beta`` the rate must be constant and the middle term drops.
    May be negative, in which case no contraction is certified.
    """
    g = spec.grid
    jb = np.asarray(spec.drift_jacobian(g), dtype=float)
    lam = np.asarray(spec.rate(g), dtype=float)
    m = np.asarray(spec.jump_gradient_bound(g), dtype=float)
    a = np.asarray(spec.weight(g), dtype=float)
    da = np.asarray(spec.weight_deriv(g), dtype=float)
    b = np.asarray(spec.drift(g), dtype=float)
    if np.any(~np.isfinite(jb)) or np.any(~np.isfinite(lam)) or np.any(a <= 0):
        raise ValueError("balance fields must be finite with positive weight")
    expr = 2.0 * jb + lam * (m - 1.0) - b * da / a
    if beta is None:
        if np.ptp(lam) > 1e-12 * max(1.0, float(np.abs(lam).max())):
            raise ValueError("without beta the rate must be constant")
    else:
        if beta <= 0:
            raise ValueError("beta must be positive")
        if np.any(lam <= 0):
            raise ValueError("rate vanishes on the grid; the beta term blows up")
        dlam = np.asarray(spec.rate_deriv(g), dtype=float)
        expr = expr + a * dlam * dlam / (beta * lam)
    return float(-np.max(expr))


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def balance_spec_tcp_constant(rate: float, factor_m2: float, grid=None) -> BalanceSpec:
    g = default_balance_grid() if grid is None else np.asarray(grid, dtype=float)
    return BalanceSpec(
        drift_jacobian=_zero,
        rate=lambda x: np.full_like(np.asarray(x, dtype=float), rate),
        rate_deriv=_zero,
        jump_gradient_bound=lambda x: np.full_like(np.asarray(x, dtype=float), factor_m2),
        weight=_one,
        weight_deriv=_zero,
        drift=_one,
        grid=g,
    )


def balance_spec_storage(rate: float, grid=None) -> BalanceSpec:
    g = default_balance_grid() if grid is None else np.asarray(grid, dtype=float)
    return BalanceSpec(
        drift_jacobian=lambda x: -np.ones_like(np.asarray(x, dtype=float)),
        rate=lambda x: np.full_like(np.asarray(x, dtype=float), rate),
        rate_deriv=_zero,
        jump_gradient_bound=_one,
        weight=_one,
        weight_deriv=_zero,
        drift=lambda x: -np.asarray(x, dtype=float),
        grid=g,
    )


def balance_spec_tcp_linear(delta: float, grid=None) -> BalanceSpec:
    """Raw balance fields of the linear-rate model with its native weight."""
    g = default_balance_grid() if grid is None else np.asarray(grid, dtype=float)
    return BalanceSpec(
        drift_jacobian=_zero,
        rate=lambda x: np.asarray(x, dtype=float),
        rate_deriv=_one,
        jump_gradient_bound=lambda x: np.full_like(np.asarray(x, dtype=float), delta),
        weight=lambda x: -np.expm1(-np.asarray(x, dtype=float)),
        weight_deriv=lambda x: np.exp(-np.asarray(x, dtype=float)),
        drift=_one,
        grid=g,
    )


def theta_constant() -> float:
    """Minimum over the half-line of 1/(e^x - 1) + x, in closed form.

    The minimiser is log((3 + sqrt 5)/2); the value drives the contraction
    exponent of the linear-rate model in its flattening weight.
    """
    s = (3.0 + math.sqrt(5.0)) / 2.0
    return 1.0 / (s - 1.0) + math.log(s)


def tcp_linear_balance_envelope(delta: float, beta: float, grid=None) -> float:
    """Grid infimum of the certified envelope (1-delta)(x + 1/(e^x-1)) - 1/beta.

    This is the pointwise lower bound of the raw linear-rate balance
    expression used to certify the contraction exponent; its infimum is
    (1-delta) * theta - 1/beta, which the grid value cross-validates.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0,1)")
    if beta <= 0:
        raise ValueError("beta must be positive")
    s = (3.0 + math.sqrt(5.0)) / 2.0
    g = default_balance_grid(extra=[math.log(s)]) if grid is None else np.asarray(grid, dtype=float)
    vals = (1.0 - delta) * (g + 1.0 / np.expm1(g)) - 1.0 / beta
    return float(vals.min())


# ---------------------------------------------------------------------------
# confining-profile algebra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfiningProfile:
    """(local constant, gradient factor, entropy order) of a Markov kernel."""

    c: float
    gamma: float
    p: float

    def __post_init__(self):
        if self.c < 0 or self.gamma < 0:
            raise ValueError("c and gamma must be nonnegative")
        if not 1.0 <= self.p <= 2.0:
            raise ValueError("p must lie in [1, 2]")


def confining_compose(first: ConfiningProfile, second: ConfiningProfile) -> ConfiningProfile:
    """Profile of the operator composition first*second.

    ``first`` acts on the outside, so the composed kernel inherits the
    local constant of ``second`` plus its gradient factor times the local
    constant of ``first``, and the product of the gradient factors.
    """
    if first.p != second.p:
        raise ValueError("profiles must share the entropy order p")
    return ConfiningProfile(
        c=second.c + second.gamma * first.c,
        gamma=first.gamma * second.gamma,
        p=first.p,
    )


def confining_fixed_point(profile: ConfiningProfile) -> float:
    """Inequality constant of the invariant law of a contractive kernel."""
    if profile.gamma >= 1.0:
        raise ValueError("fixed point requires gamma < 1")
    return profile.c / (1.0 - profile.gamma)


def push_through(profile: ConfiningProfile, input_c: float) -> float:
    """Constant after pushing a measure with constant input_c through the kernel."""
    return profile.c + profile.gamma * float(input_c)


# ---------------------------------------------------------------------------
# half-line integral criterion
# ---------------------------------------------------------------------------

def _panel_cumsum(fn, knots):
    """Integral of fn from the first knot to each knot, panel by panel."""
    out = np.zeros(knots.size)
    for i in range(1, knots.size):
        piece, _ = integrate.quad(fn, knots[i - 1], knots[i], epsrel=1e-11, limit=200)
        out[i] = out[i - 1] + piece
    return out


def _panel_cumsum_backward(fn, knots, tail=0.0):
    """Integral of fn from each knot to the last one plus a tail beyond it.

    Accumulated backward so that small survival masses keep their relative
    accuracy (a forward running sum would cancel catastrophically).
    """
    out = np.zeros(knots.size)
    out[-1] = tail
    for i in range(knots.size - 2, -1, -1):
        piece, _ = integrate.quad(fn, knots[i], knots[i + 1], epsrel=1e-11, limit=200)
        out[i] = out[i + 1] + piece
    return out


def _branch_sup(prods, knots, product_fn):
    """Grid supremum with a bounded polish when the argmax is interior."""
    j = int(np.argmax(prods))
    best = float(prods[j])
    if 0 < j < knots.size - 1:
        res = optimize.minimize_scalar(
            lambda x: -product_fn(x), bounds=(knots[j - 1], knots[j + 1]),
            method="bounded", options={"xatol": 1e-10})
        best = max(best, float(-res.fun))
    return best


def muckenhoupt_bound(density: Callable, median: float, quad_tol: float = 1e-9):
    """Integral criterion value at the median, with its two-sided bracket.

    For a positive density on the half-line, computes the maximum over the
    two branch suprema of (tail mass) x (reciprocal-density mass between
    the split point and the median); half of it lower-bounds and four
    times it upper-bounds the optimal variance/gradient-energy constant.
    Returns (B, B/2, 4B).
    """
    m = float(median)
    if m <= 0:
        raise ValueError("median must be positive")
    rho = lambda x: float(density(x))

    def inv_rho(x):
        d = float(density(x))
        if d <= 0.0:
            raise ValueError("density vanished; reciprocal-density integral diverges")
        return 1.0 / d

    def right_sup(x_high):
        knots = np.unique(np.concatenate([
            np.linspace(m, x_high, 129), np.geomspace(m, x_high, 129)]))
        tail, _ = integrate.quad(rho, x_high, np.inf, epsrel=1e-11, limit=200)
        if not np.isfinite(tail):
            raise ValueError("tail mass integral diverges")
        surv = _panel_cumsum_backward(rho, knots, tail=tail)
        recip = _panel_cumsum(inv_rho, knots)
        prods = surv * recip

        def product(x):
            s = integrate.quad(rho, x, x_high, epsrel=1e-11, limit=200)[0] + tail
            r = integrate.quad(inv_rho, m, x, epsrel=1e-11, limit=200)[0]
            return s * r

        return _branch_sup(prods, knots, product)

    x_high = m + 1.0
    b_right = right_sup(x_high)
    for _ in range(60):
        x_high *= 2.0
        nxt = right_sup(x_high)
        grew = nxt - b_right
        b_right = max(b_right, nxt)
        if abs(grew) <= quad_tol / 8.0:
            break

    lo = m * 1e-8
    knots = np.unique(np.concatenate([
        np.linspace(lo, m, 129), np.geomspace(lo, m, 129)]))
    head, _ = integrate.quad(rho, 0.0, knots[0], epsrel=1e-11, limit=200)
    mass = head + _panel_cumsum(rho, knots)
    recip = _panel_cumsum_backward(inv_rho, knots, tail=0.0)
    prods = mass * recip

    def left_product(x):
        p = integrate.quad(rho, 0.0, x, epsrel=1e-11, limit=200)[0]
        r = integrate.quad(inv_rho, x, m, epsrel=1e-11, limit=200)[0]
        return p * r

    b_left = _branch_sup(prods, knots, left_product)
    b = max(b_right, b_left)
    return b, 0.5 * b, 4.0 * b


# ---------------------------------------------------------------------------
# perturbation of a measure by a monotone density
# ---------------------------------------------------------------------------

def perturb_poincare(c1: float, g_ratio: float) -> float:
    """Variance-inequality constant after reweighting by a nonincreasing
    density with sup/at-median ratio g_ratio: eight times the ratio times
    the input constant."""
    if g_ratio < 1.0:
        raise ValueError("the ratio g(0)/g(median) must be at least one")
    if c1 < 0:
        raise ValueError("input constant must be nonnegative")
    return 8.0 * g_ratio * c1


def perturb_logsob(c1: float, kappa: float, epsilon: float, g_ratio: float,
                   nu_g_power_mean: float) -> float:
    """xlogx-inequality constant after reweighting by a log-Lipschitz,
    nonincreasing density.

    ``nu_g_power_mean`` is the mean of g^(1 - 1/epsilon) under the base
    measure (at least one by convexity for a normalised g; validated).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0,1)")
    if g_ratio < 1.0:
        raise ValueError("the ratio g(0)/g(median) must be at least one")
    if nu_g_power_mean < 1.0 - 1e-12:
        raise ValueError("the power mean of a normalised density is at least one")
    if kappa < 0 or c1 < 0:
        raise ValueError("kappa and c1 must be nonnegative")
    inner = (0.5 * c1 * kappa ** 2 + epsilon * math.log(nu_g_power_mean)) / (1.0 - epsilon)
    return (2.0 / (1.0 - epsilon) + 8.0 * g_ratio * (2.0 + inner)) * c1


def perturb_logsob_grid(c1: float, kappa: float, g_ratio: float,
                        nu_power_mean_fn: Callable, eps_grid=None):
    """Minimise the perturbation constant over an epsilon grid.

    ``nu_power_mean_fn`` maps epsilon to the mean of g^(1 - 1/epsilon).
    Returns (best constant, best epsilon).
    """
    grid = np.arange(0.1, 0.95, 0.1) if eps_grid is None else np.asarray(eps_grid, dtype=float)
    best = (math.inf, math.nan)
    for eps in grid:
        c2 = perturb_logsob(c1, kappa, float(eps), g_ratio, float(nu_power_mean_fn(float(eps))))
        if c2 < best[0]:
            best = (c2, float(eps))
    return best


# ---------------------------------------------------------------------------
# rate certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateCertificate:
    """Exponential decay certificate for the weighted energy + variance mix."""

    eta: float
    beta: float
    poincare_c: float
    entropy_c: Optional[float] = None
    entropy_prefactor: Optional[float] = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.eta <= 0 or self.beta <= 0 or self.poincare_c <= 0:
            raise ValueError("eta, beta and the inequality constant must be positive")

    @property
    def prefactor(self) -> float:
        return 1.0 + self.beta * self.poincare_c

    @property
    def decay_rate(self) -> float:
        return self.eta / self.prefactor


@dataclass(frozen=True)
class TcpConstantCertificate:
    rate: float
    delta: float
    pre_jump_profile: ConfiningProfile
    jump_profile: ConfiningProfile
    chain_profile: ConfiningProfile
    chain_poincare_c: float
    poincare_c: float
    gradient_rate: float
    l2_rate: float
    l2_prefactor: float
    ledger: list


def certify_tcp_constant(rate: float, delta: float) -> TcpConstantCertificate:
    """Spectral-gap style certificate for the constant-rate model.

    Composes the pre-jump profile (4/rate^2, 1, 2) with the deterministic
    jump profile (0, delta^2, 2), takes the invariant fixed point of the
    chain, and pushes it back through the pre-jump kernel.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0,1)")
    prof_k = ConfiningProfile(4.0 / rate ** 2, 1.0, 2.0)
    prof_q = ConfiningProfile(0.0, delta ** 2, 2.0)
    chain = confining_compose(prof_k, prof_q)
    chain_c = confining_fixed_point(chain)
    mu_c = push_through(prof_k, chain_c)
    grad_rate = rate * (1.0 - delta ** 2)
    ledger = [
        ("pre_jump_profile_c", prof_k.c, "1/rate-Lipschitz image of a unit exponential: 4/rate^2"),
        ("jump_profile_gamma", prof_q.gamma, "deterministic contraction by delta: gamma = delta^2"),
        ("chain_profile_c", chain.c, "composition: c_Q + gamma_Q * c_K"),
        ("chain_profile_gamma", chain.gamma, "composition: gamma_K * gamma_Q"),
        ("chain_poincare_c", chain_c, "fixed point c/(1-gamma) of the chain profile"),
        ("poincare_c", mu_c, "push chain constant through the pre-jump kernel"),
        ("gradient_rate", grad_rate, "balance exponent rate*(1-delta^2)"),
        ("l2_rate", grad_rate, "variance decays at the gradient exponent via the inequality"),
        ("l2_prefactor", mu_c, "inequality constant in front of the decaying energy"),
    ]
    return TcpConstantCertificate(
        rate=rate, delta=delta, pre_jump_profile=prof_k, jump_profile=prof_q,
        chain_profile=chain, chain_poincare_c=chain_c, poincare_c=mu_c,
        gradient_rate=grad_rate, l2_rate=grad_rate, l2_prefactor=mu_c,
        ledger=ledger,
    )


def certify_tcp_increasing(lambda_star: float, delta: float, kappa: float,
                           h_at: Callable) -> RateCertificate:
    """Decay certificate for a nondecreasing rate with log-Lipschitz constant.

    ``h_at`` evaluates the model's mean residual normaliser (used at the
    certified median bound of the chain law).  A vanishing kappa is
    rejected: the mixed-energy route needs beta > 0, and a constant rate
    should use the dedicated constant-rate certificate.
    """
    if not lambda_star > 0:
        raise ValueError("lambda_star must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0,1)")
    if not kappa > 0:
        raise ValueError("kappa must be positive (constant rate has its own certificate)")
    beta = 2.0 * kappa ** 2 / (1.0 - delta ** 2)
    eta = 0.5 * lambda_star * (1.0 - delta ** 2)
    chain_c = 4.0 * delta ** 2 / (lambda_star ** 2 * (1.0 - delta ** 2))
    median_bound = 2.0 * delta / (lambda_star * (1.0 - delta))
    h_m = float(h_at(median_bound))
    if not (np.isfinite(h_m) and h_m > 0):
        raise ValueError("mean residual normaliser must be positive at the median bound")
    ratio_bound = (1.0 / lambda_star) / h_m
    c_prime = perturb_poincare(chain_c, ratio_bound)
    ktilde_c = 4.0 / lambda_star ** 2
    poincare_c = ktilde_c + c_prime
    ledger = [
        ("beta", beta, "2 kappa^2/(1-delta^2)"),
        ("eta", eta, "lambda_*(1-delta^2)/2 from the log-slope balance"),
        ("chain_poincare_c", chain_c, "4 delta^2/(lambda_*^2 (1-delta^2)) chain fixed point"),
        ("median_bound", median_bound, "tail bound of the dominating constant-rate chain"),
        ("h_at_median_bound", h_m, "mean residual normaliser at the median bound"),
        ("reweighted_poincare_c", c_prime, "8 * ratio * chain constant perturbation"),
        ("ktilde_c", ktilde_c, "length-biased kernel local constant 4/lambda_*^2"),
        ("poincare_c", poincare_c, "push reweighted constant through the length-biased kernel"),
    ]
    return RateCertificate(
        eta=eta, beta=beta, poincare_c=poincare_c,
        details={k: v for k, v, _ in ledger} | {"ledger": ledger},
    )


def _golden_max_log(fn: Callable, lo: float, hi: float, tol: float = 1e-12,
                    iters: int = 200):
    """Golden-section maximum of fn over [lo, hi] searched in log spacing."""
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fn(math.exp(c)), fn(math.exp(d))
    for _ in range(iters):
        if b - a < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fn(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fn(math.exp(d))
    x = math.exp(0.5 * (a + b))
    return x, fn(x)


@dataclass(frozen=True)
class TcpLinearCertificate:
    delta: float
    theta: float
    chain_logsob_c: float
    kappa_g: float
    g_ratio_bound: float
    nu_power_mean_bound: float
    perturbed_logsob_c: float
    weighted_logsob_c: float
    weighted_poincare_c: float
    beta_opt: float
    rate_r: float
    entropy_c: float
    ledger: list


def certify_tcp_linear(delta: float, stream=None, n_chain: int = 0) -> TcpLinearCertificate:
    """End-to-end entropy-decay certificate for the linear-rate model.

    Pipeline: xlogx constant of the twisted chain's invariant law, the
    log-Lipschitz perturbation by the normalised mean-residual density
    (epsilon fixed at one half, where the reciprocal mean has an analytic
    bound), push through the length-biased kernel to the weighted xlogx
    constant for the process law, then optimise the mixing parameter of
    the energy/variance decay.  All bounds are analytic; if a stream is
    supplied, Monte Carlo estimates of the perturbation normaliser are
    appended to the ledger for audit (they never enter the constants).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0,1)")
    theta = theta_constant()
    sq = math.sqrt(delta)
    c_nu = 4.0 * sq / (1.0 - sq)
    kappa_g = math.sqrt(2.0 / math.pi)
    g0 = math.sqrt(math.pi / 2.0)
    ratio_bound = 3.0 * (1.0 + delta / math.sqrt(1.0 - delta ** 2))
    norm_bound = g0
    nu_term = norm_bound * ratio_bound
    c2 = perturb_logsob(c_nu, kappa_g, 0.5, ratio_bound, nu_term)
    wls_c = push_through(ConfiningProfile(4.0, 1.0, 1.0), c2)
    c1w = wls_c
    a_rate = (1.0 - delta) * theta
    beta_lo = 1.01 / a_rate
    beta_opt, rate_r = _golden_max_log(
        lambda b: (a_rate - 1.0 / b) / (1.0 + b * c1w), beta_lo, 1e3)
    entropy_c = wls_c * (1.0 + beta_opt * c1w)
    ledger = [
        ("theta", theta, "minimum of x + 1/(e^x - 1) on the half-line"),
        ("chain_logsob_c", c_nu, "twisted chain invariant law: 4 sqrt(delta)/(1-sqrt(delta))"),
        ("kappa_g", kappa_g, "log-Lipschitz constant of the mean residual density"),
        ("g_ratio_bound", ratio_bound, "3(1 + delta/sqrt(1-delta^2)) bounds sup/median ratio"),
        ("normaliser_upper", norm_bound, "mean of g is at most its supremum sqrt(pi/2)"),
        ("normaliser_lower", 1.0 / ratio_bound, "Jensen: mean of g at least 1/mean of 1/g"),
        ("nu_power_mean_bound", nu_term, "reciprocal mean of normalised g: product of bounds"),
        ("perturbed_logsob_c", c2, "log-Lipschitz perturbation at epsilon = 1/2"),
        ("weighted_logsob_c", wls_c, "push through the (4,1,1) length-biased kernel"),
        ("weighted_poincare_c", c1w, "entropy-order monotonicity: same constant works"),
        ("beta_opt", beta_opt, "golden-section maximiser of the mixed decay exponent"),
        ("rate_r", rate_r, "((1-delta) theta - 1/beta)/(1 + beta c1)"),
        ("entropy_c", entropy_c, "weighted xlogx constant times the mixing prefactor"),
    ]
    if stream is not None and n_chain > 0:
        from .embedded import chain_invariant_sample
        from .models import TcpLinearParams, make_tcp_linear
        chain = chain_invariant_sample(make_tcp_linear(TcpLinearParams(delta)),
                                       n_chain, stream=stream)
        hv = linear_h(chain.values)
        w = chain.weights
        for label, vals in (("normaliser_mc", hv), ("reciprocal_mean_mc", 1.0 / hv)):
            mean = float(np.dot(w, vals))
            se = float(np.sqrt(np.dot(w ** 2, (vals - mean) ** 2)))
            ledger.append((label, mean, f"chain Monte Carlo, std error {se:.3g} (audit only)"))
    if not (0.0 < rate_r < a_rate):
        raise RuntimeError("optimised rate left its certified interval")
    return TcpLinearCertificate(
        delta=delta, theta=theta, chain_logsob_c=c_nu, kappa_g=kappa_g,
        g_ratio_bound=ratio_bound, nu_power_mean_bound=nu_term,
        perturbed_logsob_c=c2, weighted_logsob_c=wls_c, weighted_poincare_c=c1w,
        beta_opt=beta_opt, rate_r=rate_r, entropy_c=entropy_c, ledger=ledger,
    )


def generalized_poincare_alpha(q: float) -> float:
    """Interpolation exponent 2q/(q+1) for rates growing like (1+x)^q."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0,1]")
    return 2.0 * q / (q + 1.0)
