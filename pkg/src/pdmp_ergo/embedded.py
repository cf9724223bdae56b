"""Embedded chain of a PDMP and reconstruction of the invariant law.

The chain observes the process at its jump instants.  Three kernels
matter: the pre-jump kernel (flow to an inverse-transform jump time), the
chain transition (pre-jump kernel followed by the jump), and the
length-biased kernel whose inter-jump time has density proportional to
the survival factor exp(-cumulative rate).  The invariant law of the
continuous process is the chain's law reweighted by the mean residual
normaliser h and pushed through the length-biased kernel; the module also
provides the direct trajectory time-average route, so the two estimators
can be cross-checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .core import Estimate, Model, ensemble_states_at
from .rng import RandomStream

__all__ = [
    "EmpiricalMeasure",
    "kernel_K_sample",
    "kernel_Ktilde_sample",
    "chain_step",
    "chain_sample_matrix",
    "chain_invariant_sample",
    "normaliser_estimate",
    "reconstruct_mu",
    "h_function",
    "time_average_states",
    "time_average_measure",
]

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted, sorted sample representation of a probability measure."""

    values: np.ndarray
    weights: np.ndarray
    provenance: str = "chain"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.ndim != 1 or v.shape != w.shape or v.size == 0:
            raise ValueError("values and weights must be matching nonempty 1-d arrays")
        if np.any(np.diff(v) < 0):
            raise ValueError("values must be sorted")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError("weights must sum to one")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_samples(cls, samples, weights=None, provenance: str = "chain"):
        samples = np.ravel(np.asarray(samples, dtype=float))
        if weights is None:
            weights = np.full(samples.size, 1.0 / samples.size)
        else:
            weights = np.ravel(np.asarray(weights, dtype=float))
            weights = weights / weights.sum()
        order = np.argsort(samples, kind="stable")
        return cls(samples[order], weights[order], provenance)

    @property
    def size(self) -> int:
        return self.values.size

    def expectation(self, f: Callable) -> float:
        return float(np.dot(self.weights, np.asarray(f(self.values), dtype=float)))

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def moment(self, k: int) -> float:
        return float(np.dot(self.weights, self.values ** k))

    def var(self) -> float:
        m = self.mean()
        return float(np.dot(self.weights, (self.values - m) ** 2))

    def mean_std_error(self) -> float:
        """Standard error of the mean treating atoms as independent."""
        m = self.mean()
        return float(np.sqrt(np.dot(self.weights ** 2, (self.values - m) ** 2)))

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("value,weight\n")
            for v, w in zip(self.values, self.weights):
                fh.write(f"{v:.17g},{w:.17g}\n")

    @classmethod
    def read_csv(cls, path, provenance: str = "chain"):
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        data = np.atleast_2d(data)
        return cls.from_samples(data[:, 0], data[:, 1], provenance)

    def validate_for(self, model: Model):
        model.require_in_domain(self.values, "measure atom")


def kernel_K_sample(model: Model, x, stream: RandomStream):
    """Sample the pre-jump position: flow to an inverse-transform jump time."""
    x = np.asarray(x, dtype=float)
    model.require_in_domain(x, "state")
    e = np.reshape(stream.exponential(np.size(x)), np.shape(x))
    return model.flow(x, model.inv_cum_rate(x, e))


def kernel_Ktilde_sample(model: Model, x, stream: RandomStream):
    """Sample the position at a length-biased inter-jump time.

    The time has density exp(-cumulative rate) over its normaliser; shipped
    models carry closed-form samplers, otherwise an inverse-transform table
    is built per distinct state (adequate for small batches).
    """
    x = np.asarray(x, dtype=float)
    model.require_in_domain(x, "state")
    if model.ktilde_sampler is not None:
        t = model.ktilde_sampler(x, stream)
    else:
        t = _generic_ktilde_times(model, x, stream)
    return model.flow(x, t)


def _survival_table(model: Model, x: float, tol: float = 1e-10):
    """Grid and cdf of the density ~ exp(-cum_rate(x, t)), built adaptively."""
    horizon = 1.0
    while True:
        if model.cum_rate(x, horizon) > -np.log(tol):
            break
        horizon *= 2.0
        if horizon > 1e12:
            raise ValueError("survival mass does not decay; normaliser diverges")
    grid = np.linspace(0.0, horizon, 4097)
    dens = np.exp(-np.asarray(model.cum_rate(np.full(grid.shape, x), grid), dtype=float))
    cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
    total = cdf[-1]
    if not np.isfinite(total) or total <= 0:
        raise ValueError("survival normaliser is not finite")
    return grid, cdf / total


def _generic_ktilde_times(model: Model, x, stream: RandomStream):
    flat = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    u = stream.uniform(flat.size)
    out = np.empty_like(flat)
    for xv in np.unique(flat):
        sel = flat == xv
        grid, cdf = _survival_table(model, float(xv))
        out[sel] = np.interp(u[sel], cdf, grid)
    return out.reshape(np.shape(x)) if np.shape(x) else float(out[0])


def chain_step(model: Model, x, stream: RandomStream):
    """One transition of the embedded chain: flow to the jump, then jump."""
    return model.jump(kernel_K_sample(model, x, stream), stream)


def chain_sample_matrix(
    model: Model, n: int, burn_in: int = 1000, thinning: int = 1,
    stream: Optional[RandomStream] = None, x0: float = 1.0,
    n_chains: Optional[int] = None,
):
    """Post-burn-in, thinned chain states as a (slot, chain) matrix.

    Work is spread over independent chains advanced in lockstep; columns
    are independent of each other, which is what between-chain standard
    errors need.  Flattening row-major and truncating to ``n`` gives the
    merged sample in a schedule-independent order.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if burn_in < 0 or thinning < 1:
        raise ValueError("burn_in must be >= 0 and thinning >= 1")
    stream = RandomStream(0) if stream is None else stream
    n_chains = min(1024, n) if n_chains is None else int(n_chains)
    quota = -(-n // n_chains)
    states = np.full(n_chains, float(x0))
    model.require_in_domain(states, "chain start")
    node = stream.spawn()
    step = 0
    for _ in range(burn_in):
        states = chain_step(model, states, node.substream(step))
        step += 1
    samples = np.empty((quota, n_chains))
    for q in range(quota):
        for _ in range(thinning):
            states = chain_step(model, states, node.substream(step))
            step += 1
        samples[q] = states
    return samples


def chain_invariant_sample(
    model: Model, n: int, burn_in: int = 1000, thinning: int = 1,
    stream: Optional[RandomStream] = None, x0: float = 1.0,
    n_chains: Optional[int] = None,
) -> EmpiricalMeasure:
    """Post-burn-in, thinned states of the embedded chain as a measure."""
    samples = chain_sample_matrix(model, n, burn_in, thinning, stream, x0, n_chains)
    return EmpiricalMeasure.from_samples(samples.ravel()[:n], provenance="chain")


def h_function(model: Model, x) -> float:
    """Mean residual normaliser: integral of exp(-cum_rate(x, u)) over u > 0."""
    if model.h_form is not None:
        out = np.asarray(model.h_form(x), dtype=float)
        return float(out) if np.shape(x) == () else out
    x = float(x)

    def integrand(u):
        return np.exp(-np.asarray(model.cum_rate(x, u), dtype=float))

    horizon = 1.0
    val = 0.0
    lo = 0.0
    for _ in range(64):
        piece, _err = integrate.quad(integrand, lo, horizon, epsrel=1e-10, limit=200)
        val += piece
        tail_rate = float(model.rate(model.flow(x, horizon)))
        tail_surv = float(integrand(horizon))
        if tail_rate > 0 and tail_surv / tail_rate < 1e-8 * max(val, 1e-300):
            return val
        lo, horizon = horizon, 2.0 * horizon
    raise ValueError("mean residual integral does not converge (normaliser diverges)")


def _h_values(model: Model, xs):
    if model.h_form is not None:
        return np.asarray(model.h_form(xs), dtype=float)
    return np.array([h_function(model, float(x)) for x in np.asarray(xs, dtype=float)])


def normaliser_estimate(model: Model, chain_measure: EmpiricalMeasure,
                        stream: RandomStream, n_boot: int = 64) -> Estimate:
    """Reconstruction normalising constant (chain mean of the mean residual
    normaliser) with a bootstrap standard error.

    The constant has no closed form for general rates, so the uncertainty
    is reported by resampling the chain atoms.
    """
    hv = _h_values(model, chain_measure.values)
    w = chain_measure.weights
    value = float(np.dot(w, hv))
    cum = np.cumsum(w)
    node = stream.spawn()
    boots = np.empty(n_boot)
    for b in range(n_boot):
        u = node.substream(b).uniform(hv.size)
        idx = np.clip(np.searchsorted(cum, u, side="right"), 0, hv.size - 1)
        boots[b] = hv[idx].mean()
    return Estimate(value, float(boots.std(ddof=1)))


def reconstruct_mu(model: Model, chain_measure: EmpiricalMeasure, stream: RandomStream) -> EmpiricalMeasure:
    """Invariant law of the continuous process from the chain's law.

    Each chain atom is reweighted by the mean residual normaliser and
    pushed through the length-biased kernel.
    """
    if chain_measure.provenance != "chain":
        raise ValueError("reconstruction expects a chain-tagged measure")
    hv = _h_values(model, chain_measure.values)
    if np.any(~np.isfinite(hv)) or np.any(hv <= 0):
        raise ValueError("mean residual normaliser must be positive and finite")
    w = chain_measure.weights * hv
    pushed = kernel_Ktilde_sample(model, chain_measure.values, stream.spawn())
    return EmpiricalMeasure.from_samples(pushed, w, provenance="reweighted")


def time_average_states(
    model: Model, x0: float, t_burn: float, t_end: float,
    n_paths: int, n_times: int, stream: RandomStream,
):
    """Matrix (path, sample time) of states on an even grid after burn time."""
    if t_end <= t_burn:
        raise ValueError("t_end must exceed t_burn")
    times = t_burn + (t_end - t_burn) * (np.arange(1, n_times + 1) / n_times)
    starts = np.full(int(n_paths), float(x0))
    return ensemble_states_at(model, starts, times, stream.spawn())


def time_average_measure(
    model: Model, x0: float, t_burn: float, t_end: float,
    n_paths: int, n_times: int, stream: RandomStream,
) -> EmpiricalMeasure:
    states = time_average_states(model, x0, t_burn, t_end, n_paths, n_times, stream)
    return EmpiricalMeasure.from_samples(states.ravel(), provenance="trajectory-time-average")
