"""Concrete processes on the half-line with exact closed forms.

Four families are shipped: the additive-growth multiplicative-collapse
process with constant jump rate, the same with linearly growing rate, the
same with a general nondecreasing rate (numeric rate integral), and the
storage process (exponential decay between upward jumps).  A fifth model
is the image of the linear-rate process under the concave chart that
flattens its gradient weight.

Every factory returns a :class:`~pdmp_ergo.core.Model` whose callables
accept arrays, so the vectorised engine can drive them directly.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import erfcx, roots_legendre

from .core import Model

__all__ = [
    "TcpConstantParams",
    "TcpLinearParams",
    "TcpIncreasingParams",
    "StorageParams",
    "exponential_increment",
    "make_tcp_constant",
    "make_tcp_linear",
    "make_tcp_increasing",
    "make_affine_rate_tcp",
    "make_storage",
    "make_twisted_tcp_linear",
    "tcp_constant_invariant_moments",
    "tcp_constant_spectrum",
    "linear_weight",
    "linear_h",
    "linear_ktilde_times",
    "PsiChart",
    "psi_chart",
]

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


def _draws(rng, x):
    u = rng.uniform(np.size(x))
    return np.reshape(u, np.shape(x))


def _const(value):
    def fn(x):
        return np.full_like(np.asarray(x, dtype=float), value)
    return fn


# ---------------------------------------------------------------------------
# parameter records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TcpConstantParams:
    """Constant jump rate, multiplicative jump x -> R x with R in [0, 1).

    ``delta`` gives a deterministic factor.  Alternatively supply
    ``factor_sampler`` (mapping iid uniforms to samples of R) together
    with ``factor_moment`` (k -> E[R^k]); the second moment must be < 1.
    """

    rate: float
    delta: Optional[float] = None
    factor_sampler: Optional[Callable] = None
    factor_moment: Optional[Callable] = None

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if self.delta is None:
            if self.factor_sampler is None or self.factor_moment is None:
                raise ValueError("give delta, or factor_sampler with factor_moment")
        elif not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0,1)")
        if not self.moment(2) < 1.0:
            raise ValueError("second moment of the jump factor must be < 1")

    def moment(self, k: int) -> float:
        if self.delta is not None:
            return float(self.delta) ** k
        return float(self.factor_moment(k))

    @property
    def deterministic(self) -> bool:
        return self.delta is not None


@dataclass(frozen=True)
class TcpLinearParams:
    delta: float

    def __post_init__(self):
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0,1)")


@dataclass(frozen=True)
class TcpIncreasingParams:
    """Nondecreasing rate with positive floor and log-Lipschitz constant.

    ``kappa`` is supplied by the caller and spot-checked on a grid rather
    than derived symbolically.  ``cum_rate``/``inv_cum_rate`` may be given
    in closed form; otherwise a quadrature table along the unit-speed flow
    is built.
    """

    rate_fn: Callable
    lambda_star: float
    kappa: float
    delta: float
    check_high: float = 50.0
    cum_rate: Optional[Callable] = None
    inv_cum_rate: Optional[Callable] = None

    def __post_init__(self):
        if not self.lambda_star > 0:
            raise ValueError("lambda_star must be positive")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0,1)")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        lam0 = float(self.rate_fn(0.0))
        if abs(lam0 - self.lambda_star) > 1e-9 * max(1.0, self.lambda_star):
            raise ValueError("rate_fn(0) must equal lambda_star")
        grid = np.linspace(0.0, self.check_high, 2001)
        lam = np.asarray(self.rate_fn(grid), dtype=float)
        if np.any(lam <= 0):
            raise ValueError("rate must stay positive")
        if np.any(np.diff(lam) < -1e-12 * np.maximum(1.0, lam[:-1])):
            raise ValueError("rate must be nondecreasing")
        dlog = np.abs(np.diff(np.log(lam))) / np.diff(grid)
        if np.any(dlog > self.kappa * (1 + 1e-6) + 1e-9):
            raise ValueError("log-rate slope exceeds kappa on the check grid")


@dataclass(frozen=True)
class StorageParams:
    """Constant-rate upward jumps x -> x + U against exponential decay."""

    rate: float
    increment_sampler: Callable

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        probe = self.increment_sampler(np.linspace(1e-6, 1 - 1e-6, 101))
        if np.any(np.asarray(probe) <= 0):
            raise ValueError("jump increments must be positive")


def exponential_increment(scale: float = 1.0) -> Callable:
    if not scale > 0:
        raise ValueError("scale must be positive")

    def sampler(u):
        return -scale * np.log1p(-np.asarray(u, dtype=float))

    return sampler


# ---------------------------------------------------------------------------
# constant-rate model
# ---------------------------------------------------------------------------

def make_tcp_constant(params: TcpConstantParams) -> Model:
    lam = float(params.rate)
    m2 = params.moment(2)

    if params.deterministic:
        delta = float(params.delta)

        def jump(x, rng):
            return delta * np.asarray(x, dtype=float)
    else:
        sampler = params.factor_sampler

        def jump(x, rng):
            r = np.asarray(sampler(_draws(rng, x)), dtype=float)
            return r * np.asarray(x, dtype=float)

    def ktilde(x, stream):
        t = stream.exponential(np.size(x)) / lam
        return np.reshape(t, np.shape(x))

    return Model(
        name="tcp_constant",
        domain_low=0.0,
        domain_high=np.inf,
        drift=_const(1.0),
        flow=lambda x, t: np.asarray(x, dtype=float) + t,
        rate=_const(lam),
        cum_rate=lambda x, t: lam * np.asarray(t, dtype=float) + 0.0 * np.asarray(x, dtype=float),
        inv_cum_rate=lambda x, u: np.asarray(u, dtype=float) / lam + 0.0 * np.asarray(x, dtype=float),
        jump=jump,
        jump_gradient_bound=_const(m2),
        h_form=_const(1.0 / lam),
        ktilde_sampler=ktilde,
    )


def tcp_constant_invariant_moments(params: TcpConstantParams, k: int) -> float:
    """Moments of the post-jump chain fixed point Z = delta (Z + E/rate).

    Closed recursion in the order; requires a deterministic jump factor.
    """
    if not params.deterministic:
        raise ValueError("moment recursion requires a deterministic jump factor")
    if k < 0:
        raise ValueError("order must be nonnegative")
    d, lam = float(params.delta), float(params.rate)
    moments = [1.0]
    for kk in range(1, k + 1):
        s = sum(
            math.comb(kk, i) * moments[i] * math.factorial(kk - i) / lam ** (kk - i)
            for i in range(kk)
        )
        moments.append(d ** kk * s / (1.0 - d ** kk))
    return moments[k]


def tcp_constant_spectrum(params: TcpConstantParams, k: int) -> float:
    """k-th generator eigenvalue rate*(E[R^k] - 1) (polynomial eigenfunctions)."""
    if k < 0:
        raise ValueError("order must be nonnegative")
    return float(params.rate) * (params.moment(k) - 1.0)


# ---------------------------------------------------------------------------
# linear-rate model
# ---------------------------------------------------------------------------

def linear_weight(x):
    """Gradient weight 1 - exp(-x): linear near zero, one at infinity."""
    return -np.expm1(-np.asarray(x, dtype=float))


def linear_h(x):
    """Mean residual normaliser for rate(x)=x, in stable scaled-erfc form."""
    x = np.asarray(x, dtype=float)
    return _SQRT_HALF_PI * erfcx(x / np.sqrt(2.0))


def _linear_inv_cum(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    root = np.sqrt(x * x + 2.0 * u)
    with np.errstate(invalid="ignore"):
        t = 2.0 * u / (root + x)
    return np.where(u == 0.0, 0.0, t)


def linear_ktilde_times(x, stream):
    """Length-biased inter-jump times for rate(x)=x: density ~ exp(-xt - t^2/2).

    Hybrid rejection: for x < 1 propose the half-normal and thin by
    exp(-x t); for x >= 1 propose Exp(x) and thin by exp(-t^2/2).  The
    acceptance probability stays above one half on the whole half-line.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ValueError("states must be nonnegative")
    out = np.empty_like(x)
    todo = np.arange(x.size)
    while todo.size:
        xa = x[todo]
        n = todo.size
        z = np.abs(stream.normal(n))
        e = stream.exponential(n)
        u = stream.uniform(n)
        small = xa < 1.0
        prop = np.where(small, z, e / np.maximum(xa, 1.0))
        logacc = np.where(small, -xa * prop, -0.5 * prop * prop)
        acc = np.log(u) < logacc
        out[todo[acc]] = prop[acc]
        todo = todo[~acc]
    return out


def make_tcp_linear(params: TcpLinearParams) -> Model:
    delta = float(params.delta)

    def ktilde(x, stream):
        shape = np.shape(x)
        t = linear_ktilde_times(np.ravel(np.asarray(x, dtype=float)), stream)
        return np.reshape(t, shape) if shape else float(t[0])

    return Model(
        name="tcp_linear",
        domain_low=0.0,
        domain_high=np.inf,
        drift=_const(1.0),
        flow=lambda x, t: np.asarray(x, dtype=float) + t,
        rate=lambda x: np.asarray(x, dtype=float),
        cum_rate=lambda x, t: np.asarray(x, dtype=float) * t + 0.5 * np.asarray(t, dtype=float) ** 2,
        inv_cum_rate=_linear_inv_cum,
        jump=lambda x, rng: delta * np.asarray(x, dtype=float),
        jump_gradient_bound=_const(delta),
        weight=linear_weight,
        h_form=linear_h,
        ktilde_sampler=ktilde,
    )


# ---------------------------------------------------------------------------
# storage model
# ---------------------------------------------------------------------------

def make_storage(params: StorageParams) -> Model:
    lam = float(params.rate)
    sampler = params.increment_sampler

    def jump(x, rng):
        u = np.asarray(sampler(_draws(rng, x)), dtype=float)
        return np.asarray(x, dtype=float) + u

    def ktilde(x, stream):
        t = stream.exponential(np.size(x)) / lam
        return np.reshape(t, np.shape(x))

    return Model(
        name="storage",
        domain_low=0.0,
        domain_high=np.inf,
        drift=lambda x: -np.asarray(x, dtype=float),
        flow=lambda x, t: np.asarray(x, dtype=float) * np.exp(-np.asarray(t, dtype=float)),
        rate=_const(lam),
        cum_rate=lambda x, t: lam * np.asarray(t, dtype=float) + 0.0 * np.asarray(x, dtype=float),
        inv_cum_rate=lambda x, u: np.asarray(u, dtype=float) / lam + 0.0 * np.asarray(x, dtype=float),
        jump=jump,
        jump_gradient_bound=_const(1.0),
        h_form=_const(1.0 / lam),
        ktilde_sampler=ktilde,
    )


# ---------------------------------------------------------------------------
# nondecreasing-rate model: quadrature table along the unit-speed flow
# ---------------------------------------------------------------------------

class UnitFlowCumRate:
    """Cumulative rate integral along x -> x + t, panel Gauss-Legendre.

    ``value(y)`` integrates the rate from 0 to y exactly to quadrature
    precision (no interpolation of the integral itself); ``inverse(v)``
    solves value(y) = v by a bracketed Newton iteration.  The table
    extends itself by doubling when queried beyond its current range.
    """

    _NODES = 24

    def __init__(self, rate_fn: Callable, y_high: float = 512.0, step: float = 0.25,
                 y_cap: float = 1e7):
        self._rate = rate_fn
        self._step = float(step)
        self._y_cap = float(y_cap)
        self._lock = threading.Lock()
        gl_x, gl_w = roots_legendre(self._NODES)
        self._gx = 0.5 * (gl_x + 1.0)
        self._gw = 0.5 * gl_w
        self._edges = np.array([0.0])
        self._cum = np.array([0.0])
        self._extend_to(y_high)

    def _panel_integrals(self, lo, hi):
        width = hi - lo
        nodes = lo[:, None] + width[:, None] * self._gx[None, :]
        vals = np.asarray(self._rate(nodes), dtype=float)
        return width * (vals @ self._gw)

    def _extend_to(self, y: float):
        with self._lock:
            top = self._edges[-1]
            if y <= top:
                return
            n_new = int(np.ceil((y - top) / self._step)) + 8
            lo = top + self._step * np.arange(n_new)
            hi = lo + self._step
            inc = self._panel_integrals(lo, hi)
            self._edges = np.concatenate([self._edges, hi])
            self._cum = np.concatenate([self._cum, self._cum[-1] + np.cumsum(inc)])

    def value(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("negative position in cumulative rate")
        ymax = float(y.max()) if y.size else 0.0
        if ymax > self._edges[-1]:
            self._extend_to(2.0 * ymax)
        flat = np.atleast_1d(y).ravel()
        k = np.searchsorted(self._edges, flat, side="right") - 1
        k = np.clip(k, 0, self._edges.size - 2)
        lo = self._edges[k]
        part = self._panel_integrals(lo, flat)
        out = self._cum[k] + part
        return out.reshape(y.shape) if y.shape else float(out[0])

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        if np.any(v < 0):
            raise ValueError("negative level in inverse cumulative rate")
        vmax = float(v.max()) if v.size else 0.0
        while self._cum[-1] < vmax:
            if self._edges[-1] > self._y_cap:
                raise ValueError(
                    "cumulative rate failed to reach the requested level within "
                    f"the search horizon {self._y_cap:g}; the rate decays too fast")
            self._extend_to(2.0 * self._edges[-1])
        flat = np.atleast_1d(v).ravel()
        k = np.clip(np.searchsorted(self._cum, flat, side="right") - 1, 0, self._cum.size - 2)
        frac = (flat - self._cum[k]) / np.maximum(self._cum[k + 1] - self._cum[k], 1e-300)
        y = self._edges[k] + frac * (self._edges[k + 1] - self._edges[k])
        for _ in range(60):
            resid = self.value(y) - flat
            if np.all(np.abs(resid) <= 1e-12 * np.maximum(1.0, flat)):
                break
            y = y - resid / np.maximum(np.asarray(self._rate(y), dtype=float), 1e-300)
            y = np.clip(y, self._edges[k], self._edges[k + 1])
        return y.reshape(v.shape) if v.shape else float(y[0])


def make_tcp_increasing(params: TcpIncreasingParams) -> Model:
    delta = float(params.delta)
    rate_fn = params.rate_fn

    if params.cum_rate is not None and params.inv_cum_rate is not None:
        cum_rate, inv_cum_rate = params.cum_rate, params.inv_cum_rate
    else:
        table = UnitFlowCumRate(rate_fn)

        def cum_rate(x, t):
            x = np.asarray(x, dtype=float)
            t = np.asarray(t, dtype=float)
            return table.value(x + t) - table.value(x)

        def inv_cum_rate(x, u):
            x = np.asarray(x, dtype=float)
            u = np.asarray(u, dtype=float)
            return table.inverse(table.value(x) + u) - x

    return Model(
        name="tcp_increasing",
        domain_low=0.0,
        domain_high=np.inf,
        drift=_const(1.0),
        flow=lambda x, t: np.asarray(x, dtype=float) + t,
        rate=lambda x: np.asarray(rate_fn(np.asarray(x, dtype=float)), dtype=float),
        cum_rate=cum_rate,
        inv_cum_rate=inv_cum_rate,
        jump=lambda x, rng: delta * np.asarray(x, dtype=float),
        jump_gradient_bound=_const(delta * delta),
    )


def make_affine_rate_tcp(lambda_star: float, slope: float, delta: float,
                         kappa: Optional[float] = None) -> Model:
    """Nondecreasing-rate model with rate(x) = lambda_star + slope*x.

    Same process family as :func:`make_tcp_increasing` but with closed
    forms throughout (the rate integral is quadratic in time, its inverse
    a square root, and the length-biased sampler reduces to the linear
    one after rescaling time by sqrt(slope)).
    """
    kappa = slope / lambda_star if kappa is None else kappa
    params = TcpIncreasingParams(
        rate_fn=lambda x: lambda_star + slope * np.asarray(x, dtype=float),
        lambda_star=lambda_star, kappa=kappa, delta=delta,
        cum_rate=lambda x, t: (lambda_star + slope * np.asarray(x, dtype=float))
        * np.asarray(t, dtype=float) + 0.5 * slope * np.asarray(t, dtype=float) ** 2,
        inv_cum_rate=lambda x, u: _affine_inv_cum(lambda_star, slope, x, u),
    )
    base = make_tcp_increasing(params)
    rs = math.sqrt(slope)

    def h_form(x):
        c = (lambda_star + slope * np.asarray(x, dtype=float)) / rs
        return linear_h(c) / rs

    def ktilde(x, stream):
        shape = np.shape(x)
        c = np.ravel((lambda_star + slope * np.asarray(x, dtype=float)) / rs)
        t = linear_ktilde_times(c, stream) / rs
        return np.reshape(t, shape) if shape else float(t[0])

    return replace(base, h_form=h_form, ktilde_sampler=ktilde)


def _affine_inv_cum(lambda_star, slope, x, u):
    c = lambda_star + slope * np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    root = np.sqrt(c * c + 2.0 * slope * u)
    with np.errstate(invalid="ignore"):
        t = 2.0 * u / (root + c)
    return np.where(u == 0.0, 0.0, t)


# ---------------------------------------------------------------------------
# twisted linear-rate model: image under the flattening chart
# ---------------------------------------------------------------------------

class PsiChart:
    """The concave chart psi(x) = integral of weight^{-1/2} from 0 to x.

    With weight 1 - exp(-x) the integrand has an inverse-square-root
    singularity at zero; substituting x = w^2 removes it, so the chart is
    tabulated in w with panel Gauss-Legendre and evaluated by exact panel
    quadrature (no interpolation error on the chart itself).  Beyond
    ``x_cut`` the integrand is 1 to machine precision and the chart
    continues as a unit-slope line.
    """

    _NODES = 16

    def __init__(self, x_cut: float = 30.0, n_panels: int = 2048):
        self.x_cut = float(x_cut)
        w_max = math.sqrt(self.x_cut)
        gl_x, gl_w = roots_legendre(self._NODES)
        self._gx = 0.5 * (gl_x + 1.0)
        self._gw = 0.5 * gl_w
        self._w = np.linspace(0.0, w_max, n_panels + 1)
        mids_lo = self._w[:-1]
        widths = np.diff(self._w)
        nodes = mids_lo[:, None] + widths[:, None] * self._gx[None, :]
        inc = widths * (self._q(nodes) @ self._gw)
        self._psi = np.concatenate([[0.0], np.cumsum(inc)])
        self.offset = float(self._psi[-1] - self.x_cut)

    @staticmethod
    def _q(w):
        """d psi(w^2) / dw = 2 w / sqrt(1-exp(-w^2)), extended smoothly to 0."""
        w = np.asarray(w, dtype=float)
        w2 = w * w
        with np.errstate(divide="ignore", invalid="ignore"):
            q = 2.0 * w / np.sqrt(-np.expm1(-w2))
        return np.where(w2 < 1e-8, 2.0 + 0.5 * w2, q)

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError("chart argument must be nonnegative")
        flat = np.atleast_1d(x).ravel()
        out = np.empty_like(flat)
        far = flat >= self.x_cut
        out[far] = flat[far] + self.offset
        near = ~far
        if near.any():
            w = np.sqrt(flat[near])
            k = np.clip(np.searchsorted(self._w, w, side="right") - 1, 0, self._w.size - 2)
            lo = self._w[k]
            width = w - lo
            nodes = lo[:, None] + width[:, None] * self._gx[None, :]
            out[near] = self._psi[k] + width * (self._q(nodes) @ self._gw)
        return out.reshape(x.shape) if x.shape else float(out[0])

    def psi_inv(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < 0):
            raise ValueError("chart value must be nonnegative")
        flat = np.atleast_1d(z).ravel()
        out = np.empty_like(flat)
        far = flat >= self._psi[-1]
        out[far] = flat[far] - self.offset
        near = ~far
        if near.any():
            zn = flat[near]
            k = np.clip(np.searchsorted(self._psi, zn, side="right") - 1, 0, self._psi.size - 2)
            frac = (zn - self._psi[k]) / np.maximum(self._psi[k + 1] - self._psi[k], 1e-300)
            w = self._w[k] + frac * (self._w[k + 1] - self._w[k])
            for _ in range(6):
                w = w - (self.psi(w * w) - zn) / np.maximum(self._q(w), 1e-300)
                w = np.clip(w, self._w[k], self._w[k + 1])
            out[near] = w * w
        return out.reshape(z.shape) if z.shape else float(out[0])


_CHART_LOCK = threading.Lock()
_CHART: Optional[PsiChart] = None


def psi_chart() -> PsiChart:
    global _CHART
    with _CHART_LOCK:
        if _CHART is None:
            _CHART = PsiChart()
    return _CHART


def make_twisted_tcp_linear(delta: float) -> Model:
    if not 0.0 <= float(delta) < 1.0:
        raise ValueError("delta must lie in [0,1)")
    delta = float(delta)
    chart = psi_chart()

    def flow(z, t):
        return chart.psi(chart.psi_inv(z) + np.asarray(t, dtype=float))

    def drift(z):
        x = chart.psi_inv(z)
        with np.errstate(divide="ignore"):
            return 1.0 / np.sqrt(linear_weight(x))

    def cum_rate(z, t):
        x = chart.psi_inv(z)
        t = np.asarray(t, dtype=float)
        return x * t + 0.5 * t * t

    def inv_cum_rate(z, u):
        return _linear_inv_cum(chart.psi_inv(z), u)

    def jump(z, rng):
        return chart.psi(delta * chart.psi_inv(z))

    def ktilde(z, stream):
        shape = np.shape(z)
        x = np.ravel(chart.psi_inv(z))
        t = linear_ktilde_times(x, stream)
        return np.reshape(t, shape) if shape else float(t[0])

    return Model(
        name="twisted_tcp_linear",
        domain_low=0.0,
        domain_high=np.inf,
        drift=drift,
        flow=flow,
        rate=lambda z: chart.psi_inv(z),
        cum_rate=cum_rate,
        inv_cum_rate=inv_cum_rate,
        jump=jump,
        jump_gradient_bound=_const(delta),
        h_form=lambda z: linear_h(chart.psi_inv(z)),
        ktilde_sampler=ktilde,
    )
