"""Statistical functionals over semigroup outputs and empirical measures.

Everything here is either an exact computation on weighted atoms (entropy
functionals, the one-dimensional transport distance via the merged
quantile partition) or a nested Monte Carlo estimator with an explicit
inner-noise bias correction, so desk-scale runs stay honest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import xlogy

from .core import DomainError, Estimate, Model, simulate_ensemble
from .embedded import EmpiricalMeasure
from .rng import RandomStream

__all__ = [
    "TestFunction",
    "default_family",
    "family_by_labels",
    "DecayFit",
    "entropy_p",
    "entropy_p_with_error",
    "wasserstein_1d",
    "variance_of_semigroup",
    "energy_W",
    "fit_decay_rate",
    "empirical_inequality_ratio",
    "inequality_details",
    "semigroup_inner_statistics",
]

_ATOM_BLOCK = 2_000_000


@dataclass(frozen=True)
class TestFunction:
    """A test function together with its exact derivative."""

    f: Callable
    df: Callable
    label: str

    def check_derivative(self, grid, h: float = 1e-6, tol: float = 1e-6) -> float:
        grid = np.asarray(grid, dtype=float)
        fd = (np.asarray(self.f(grid + h)) - np.asarray(self.f(grid - h))) / (2 * h)
        err = np.abs(fd - np.asarray(self.df(grid)))
        bound = tol * (1.0 + np.abs(np.asarray(self.df(grid))))
        if np.any(err > bound):
            raise ValueError(f"derivative of {self.label} fails the finite-difference check")
        return float(err.max())


def default_family() -> list[TestFunction]:
    """Slow and fast oscillation plus tail behaviour, with exact derivatives."""
    return [
        TestFunction(lambda x: x, lambda x: np.ones_like(np.asarray(x, dtype=float)), "x"),
        TestFunction(lambda x: x ** 2, lambda x: 2.0 * x, "x^2"),
        TestFunction(lambda x: np.exp(-x), lambda x: -np.exp(-x), "exp(-x)"),
        TestFunction(np.sin, np.cos, "sin(x)"),
        TestFunction(lambda x: np.sin(3 * x), lambda x: 3 * np.cos(3 * x), "sin(3x)"),
        TestFunction(np.log1p, lambda x: 1.0 / (1.0 + x), "log1p(x)"),
        TestFunction(lambda x: x * np.exp(-x), lambda x: (1.0 - x) * np.exp(-x), "x*exp(-x)"),
    ]


def family_by_labels(labels: Sequence[str]) -> list[TestFunction]:
    table = {tf.label: tf for tf in default_family()}
    out = []
    for lab in labels:
        if lab not in table:
            raise KeyError(f"unknown test function {lab!r}; known: {sorted(table)}")
        out.append(table[lab])
    return out


# ---------------------------------------------------------------------------
# entropies
# ---------------------------------------------------------------------------

def entropy_p(values, p: float, weights=None) -> float:
    """Interpolation family of entropies of f under the weighted atoms.

    The caller passes f-values; the functional squares them internally.
    ``p=2`` is the variance of f, ``p=1`` the xlogx entropy of f^2 with
    the 0*log0 = 0 convention (both are even in f); for 1 < p < 2 the
    values must be nonnegative because fractional powers are taken.
    """
    v = np.ravel(np.asarray(values, dtype=float))
    if weights is None:
        w = np.full(v.size, 1.0 / v.size)
    else:
        w = np.ravel(np.asarray(weights, dtype=float))
        w = w / w.sum()
    if not 1.0 <= p <= 2.0:
        raise ValueError("p must lie in [1, 2]")
    if p == 2.0:
        m = float(np.dot(w, v))
        return float(np.dot(w, v * v) - m * m)
    s = v * v
    a = float(np.dot(w, s))
    if a < 0:
        raise ValueError("mean square is negative; invalid input")
    if p == 1.0:
        t1 = float(np.dot(w, xlogy(s, s)))
        return t1 - float(xlogy(a, a))
    if np.any(v < 0):
        raise ValueError("values must be nonnegative for 1 < p < 2")
    b = float(np.dot(w, v ** (2.0 / p)))
    return (a - b ** p) / (p - 1.0)


def _entropy_value_gradient(v, w, p):
    """Entropy value and its partial derivatives in the atom values."""
    s = v * v
    a = float(np.dot(w, s))
    if p == 2.0:
        m = float(np.dot(w, v))
        return a - m * m, 2.0 * w * (v - m)
    if p == 1.0:
        t1 = float(np.dot(w, xlogy(s, s)))
        val = t1 - float(xlogy(a, a))
        grad = 2.0 * w * (xlogy(v, s) - xlogy(v, max(a, 1e-300)))
        return val, grad
    g = v ** (2.0 / p)
    b = float(np.dot(w, g))
    val = (a - b ** p) / (p - 1.0)
    grad = 2.0 * w * (v - b ** (p - 1.0) * np.where(v > 0, v ** (2.0 / p - 1.0), 0.0)) / (p - 1.0)
    return val, grad


def entropy_p_with_error(values, p: float, weights=None, inner_variances=None,
                         inner_n: int = 1) -> Estimate:
    """Plug-in entropy with a delta-method standard error.

    When the values are themselves inner Monte Carlo means, pass their
    per-atom sample variances and the inner replication count so the
    propagated inner noise is included.
    """
    v = np.ravel(np.asarray(values, dtype=float))
    if weights is None:
        w = np.full(v.size, 1.0 / v.size)
    else:
        w = np.ravel(np.asarray(weights, dtype=float))
        w = w / w.sum()
    value = entropy_p(v, p, w)
    _, infl = _entropy_influence(v, w, p)
    se_sq = float(np.dot(w ** 2, infl ** 2))
    if inner_variances is not None:
        _, grad = _entropy_value_gradient(v, w, p)
        iv = np.ravel(np.asarray(inner_variances, dtype=float))
        se_sq += float(np.dot(grad ** 2, iv / max(int(inner_n), 1)))
    return Estimate(value, float(np.sqrt(se_sq)))


# ---------------------------------------------------------------------------
# one-dimensional transport distance
# ---------------------------------------------------------------------------

def wasserstein_1d(
    p: float, first: EmpiricalMeasure, second: EmpiricalMeasure,
    chart: Optional[Callable] = None,
) -> float:
    """Order-p transport distance between two weighted atom sets, exactly.

    Computed on the merged cumulative-weight partition (in one dimension
    the sorted coupling is optimal).  ``chart`` maps atoms into another
    metric before coupling, for distances measured after a change of
    variable.
    """
    if p < 1:
        raise ValueError("order must be at least one")
    if abs(first.weights.sum() - second.weights.sum()) > 1e-9:
        raise ValueError("total weights differ")

    def prep(m: EmpiricalMeasure):
        v = m.values
        if chart is not None:
            v = np.asarray(chart(v), dtype=float)
            order = np.argsort(v, kind="stable")
            return v[order], np.cumsum(m.weights[order])
        return v, np.cumsum(m.weights)

    va, ca = prep(first)
    vb, cb = prep(second)
    qs = np.sort(np.concatenate([ca, cb]))
    ia = np.clip(np.searchsorted(ca, qs, side="left"), 0, va.size - 1)
    ib = np.clip(np.searchsorted(cb, qs, side="left"), 0, vb.size - 1)
    deltas = np.diff(np.concatenate([[0.0], qs]))
    gaps = np.abs(va[ia] - vb[ib])
    if p == 1:
        return float(np.dot(deltas, gaps))
    return float(np.dot(deltas, gaps ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# nested Monte Carlo functionals
# ---------------------------------------------------------------------------

def semigroup_inner_statistics(model, f, atoms, t, inner_n, stream):
    """Per-atom inner mean and unbiased inner variance of f at time t."""
    n_at = atoms.size
    means = np.empty(n_at)
    ivars = np.empty(n_at)
    per_block = max(1, _ATOM_BLOCK // int(inner_n))
    for b, lo in enumerate(range(0, n_at, per_block)):
        hi = min(n_at, lo + per_block)
        starts = np.repeat(atoms[lo:hi], inner_n)
        ends = simulate_ensemble(model, starts, t, stream.substream(b))
        vals = np.asarray(f(ends), dtype=float).reshape(hi - lo, inner_n)
        means[lo:hi] = vals.mean(axis=1)
        ivars[lo:hi] = vals.var(axis=1, ddof=1)
    return means, ivars


def variance_of_semigroup(
    model: Model, f: TestFunction, mu_hat: EmpiricalMeasure, t: float,
    inner_n: int, stream: RandomStream,
) -> Estimate:
    """Variance of the time-t conditional mean of f under the atom measure.

    Nested Monte Carlo with the upward inner-noise bias removed: the
    squared spread of inner means overshoots by the mean inner sampling
    variance over the inner replication count.
    """
    if inner_n < 2:
        raise ValueError("need at least two inner replications")
    w = mu_hat.weights
    if t == 0:
        vals = np.asarray(f.f(mu_hat.values), dtype=float)
        m = float(np.dot(w, vals))
        return Estimate(float(np.dot(w, (vals - m) ** 2)), 0.0)
    means, ivars = semigroup_inner_statistics(model, f.f, mu_hat.values, t, inner_n, stream.spawn())
    m = float(np.dot(w, means))
    infl = (means - m) ** 2 - ivars / inner_n
    value = float(np.dot(w, infl))
    se = float(np.sqrt(np.dot(w ** 2, (infl - value) ** 2)))
    return Estimate(value, se)


def _coupled_gradients(model, f, atoms, bumps, t, inner_n, stream):
    """Per-atom central-difference gradient means and paired variances.

    Both bump ensembles replay one mark sequence (common random numbers).
    """
    n_at = atoms.size
    gmean = np.empty(n_at)
    gvar = np.empty(n_at)
    per_block = max(1, _ATOM_BLOCK // (2 * int(inner_n)))
    for b, lo in enumerate(range(0, n_at, per_block)):
        hi = min(n_at, lo + per_block)
        node = stream.substream(b)
        up_starts = np.repeat(atoms[lo:hi] + bumps[lo:hi], inner_n)
        dn_starts = np.repeat(atoms[lo:hi] - bumps[lo:hi], inner_n)
        up = simulate_ensemble(model, up_starts, t, node)
        dn = simulate_ensemble(model, dn_starts, t, node)
        d = (np.asarray(f(up), dtype=float) - np.asarray(f(dn), dtype=float))
        d = d.reshape(hi - lo, inner_n) / (2.0 * bumps[lo:hi, None])
        gmean[lo:hi] = d.mean(axis=1)
        gvar[lo:hi] = d.var(axis=1, ddof=1)
    return gmean, gvar


def energy_W(
    model: Model, f: TestFunction, mu_hat: EmpiricalMeasure, t: float,
    inner_n: int, stream: RandomStream, h: Optional[float] = None,
) -> Estimate:
    """Weighted squared-gradient energy of the time-t conditional mean.

    At t=0 the exact derivative is used (no simulation).  Otherwise each
    atom contributes weight(x) times the squared coupled gradient
    estimate, debiased by the paired-difference variance over the inner
    replication count.
    """
    w = mu_hat.weights
    a_vals = np.asarray(model.weight(mu_hat.values), dtype=float)
    if t == 0:
        dv = np.asarray(f.df(mu_hat.values), dtype=float)
        return Estimate(float(np.dot(w, a_vals * dv * dv)), 0.0)
    if inner_n < 2:
        raise ValueError("need at least two inner replications")
    atoms = mu_hat.values
    bumps = np.full(atoms.shape, h, dtype=float) if h is not None else \
        1e-4 * np.maximum(1.0, np.abs(atoms))
    if np.any(atoms - bumps < model.domain_low) or np.any(atoms + bumps > model.domain_high):
        raise DomainError("bumped atoms leave the model domain")
    gmean, gvar = _coupled_gradients(model, f.f, atoms, bumps, t, inner_n, stream.spawn())
    infl = a_vals * (gmean ** 2 - gvar / inner_n)
    value = float(np.dot(w, infl))
    se = float(np.sqrt(np.dot(w ** 2, (infl - value) ** 2)))
    return Estimate(value, se)


# ---------------------------------------------------------------------------
# decay-rate fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    times: np.ndarray
    log_values: np.ndarray
    fitted_rate: float
    fitted_intercept: float
    r_squared: float
    rate_std_error: float


def fit_decay_rate(series, rel_err_cap: float = 0.5) -> DecayFit:
    """Weighted least squares of log value against time.

    ``series`` is an iterable of (t, value, std_error) triples.  Points
    with nonpositive value or relative error above the cap are dropped;
    at least three must survive.  Weights follow the delta method
    (relative error of the value is the error of its log); the reported
    rate is the negated slope with its a-priori standard error.
    """
    rows = [(float(t), float(v), float(se)) for t, v, se in series]
    kept = [(t, v, se) for t, v, se in rows if v > 0 and se / v <= rel_err_cap]
    if len(kept) < 3:
        raise ValueError("fewer than three usable points for the decay fit")
    t = np.array([r[0] for r in kept])
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    v = np.array([r[1] for r in kept])
    se = np.array([r[2] for r in kept])
    y = np.log(v)
    sy = np.maximum(se / v, 1e-15)
    wt = 1.0 / sy ** 2
    sw = wt.sum()
    tbar = np.dot(wt, t) / sw
    ybar = np.dot(wt, y) / sw
    stt = np.dot(wt, (t - tbar) ** 2)
    slope = np.dot(wt, (t - tbar) * (y - ybar)) / stt
    intercept = ybar - slope * tbar
    resid = y - (intercept + slope * t)
    sst = np.dot(wt, (y - ybar) ** 2)
    r2 = 1.0 - np.dot(wt, resid ** 2) / sst if sst > 0 else 1.0
    return DecayFit(
        times=t,
        log_values=y,
        fitted_rate=float(-slope),
        fitted_intercept=float(intercept),
        r_squared=float(r2),
        rate_std_error=float(np.sqrt(1.0 / stt)),
    )


# ---------------------------------------------------------------------------
# empirical functional-inequality ratios
# ---------------------------------------------------------------------------

def _entropy_influence(fv, w, p):
    """Influence values of the p-entropy at each atom (delta method)."""
    s = fv * fv
    a = float(np.dot(w, s))
    if p == 2.0:
        m = float(np.dot(w, fv))
        n_val = a - m * m
        infl = (fv - m) ** 2 - n_val
        return n_val, infl
    if p == 1.0:
        t1 = float(np.dot(w, xlogy(s, s)))
        n_val = t1 - float(xlogy(a, a))
        infl = xlogy(s, s) - t1 - (np.log(max(a, 1e-300)) + 1.0) * (s - a)
        return n_val, infl
    g = fv ** (2.0 / p)
    b = float(np.dot(w, g))
    n_val = (a - b ** p) / (p - 1.0)
    infl = ((s - a) - p * b ** (p - 1.0) * (g - b)) / (p - 1.0)
    return n_val, infl


def inequality_details(
    mu_hat: EmpiricalMeasure, family: Sequence[TestFunction],
    weight: Optional[Callable] = None, p: float = 2.0,
):
    """Per-function entropy/energy ratios with delta-method errors."""
    if not family:
        raise ValueError("family must be nonempty")
    w = mu_hat.weights
    x = mu_hat.values
    a_vals = np.ones_like(x) if weight is None else np.asarray(weight(x), dtype=float)
    out = []
    for tf in family:
        fv = np.asarray(tf.f(x), dtype=float)
        if 1.0 < p < 2.0 and np.any(fv < 0):
            raise ValueError(f"{tf.label}: negative values not allowed for 1 < p < 2")
        dv = np.asarray(tf.df(x), dtype=float)
        den_terms = a_vals * dv * dv
        den = float(np.dot(w, den_terms))
        if den <= 1e-300:
            raise ValueError(f"degenerate gradient energy for test function {tf.label}")
        num, infl_n = _entropy_influence(fv, w, p)
        ratio = num / den
        infl_r = (infl_n - ratio * (den_terms - den)) / den
        se = float(np.sqrt(np.dot(w ** 2, infl_r ** 2)))
        out.append({"label": tf.label, "ratio": float(ratio), "entropy": float(num),
                    "energy": den, "std_error": se})
    return out


def empirical_inequality_ratio(
    mu_hat: EmpiricalMeasure, family: Sequence[TestFunction],
    weight: Optional[Callable] = None, p: float = 2.0,
) -> float:
    """Largest entropy-to-energy ratio over the family: an empirical lower
    bound on the optimal inequality constant."""
    details = inequality_details(mu_hat, family, weight, p)
    return max(d["ratio"] for d in details)
