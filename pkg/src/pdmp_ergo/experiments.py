"""Named experiments: simulate, certify, verify, inequality.

Each experiment builds the configured model, runs seeded Monte Carlo with
substreams allocated by task index (so worker count and scheduling cannot
change any output), writes CSV artifacts plus a human-readable report of
PASS/FAIL assertion lines, and returns a process exit status that is zero
exactly when every assertion passed.
"""

from __future__ import annotations

import csv
import os
import traceback
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import certificates as cert
from . import models
from .config import ConfigError, RunConfig
from .core import Model, simulate_ensemble
from .embedded import (EmpiricalMeasure, chain_sample_matrix, h_function,
                       kernel_Ktilde_sample, normaliser_estimate,
                       reconstruct_mu, time_average_states)
from .estimators import (TestFunction, energy_W, entropy_p_with_error,
                         family_by_labels, fit_decay_rate, inequality_details,
                         semigroup_inner_statistics, variance_of_semigroup,
                         wasserstein_1d)
from .rng import RandomStream

__all__ = ["run_experiment", "build_model", "Report", "entropy_decay_series"]


class Report:
    """Accumulates assertion lines; renders the report and final status."""

    def __init__(self, header: dict):
        self.header = dict(header)
        self.lines: list[tuple[bool, str, str]] = []

    def check(self, name: str, ok, detail: str = "") -> bool:
        ok = bool(ok)
        self.lines.append((ok, name, detail))
        return ok

    def info(self, name: str, detail: str):
        self.lines.append((None, name, detail))

    @property
    def passed(self) -> bool:
        return all(ok for ok, _, _ in self.lines if ok is not None)

    def render(self) -> str:
        out = [f"{k}: {v}" for k, v in self.header.items()]
        for ok, name, detail in self.lines:
            mark = "INFO" if ok is None else ("PASS" if ok else "FAIL")
            out.append(f"{mark} {name}" + (f": {detail}" if detail else ""))
        out.append(f"STATUS: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(out) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def write_series_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value", "std_error"])
        for t, v, se in rows:
            writer.writerow([_fmt(t), _fmt(v), _fmt(se)])


def write_ledger_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "value", "provenance"])
        for name, value, provenance in rows:
            writer.writerow([name, _fmt(value), provenance])


def _fit_summary(fit) -> str:
    return (f'{{"rate": {fit.fitted_rate:.10g}, "rate_se": {fit.rate_std_error:.4g}, '
            f'"r2": {fit.r_squared:.6f}}}')


def run_tasks(tasks, workers: int):
    """Run thunks, possibly in a thread pool; results in submission order."""
    if workers <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


def build_model(config: RunConfig) -> Model:
    if config.model == "tcp_constant":
        return models.make_tcp_constant(
            models.TcpConstantParams(rate=config.rate, delta=config.delta))
    if config.model == "tcp_linear":
        return models.make_tcp_linear(models.TcpLinearParams(config.delta))
    if config.model == "tcp_increasing":
        return models.make_affine_rate_tcp(
            config.lambda_star, config.rate_slope, config.delta, config.kappa)
    if config.model == "storage":
        return models.make_storage(
            models.StorageParams(config.rate, models.exponential_increment(config.u_scale)))
    if config.model == "twisted_tcp_linear":
        return models.make_twisted_tcp_linear(config.delta)
    raise ConfigError(f"unknown model {config.model!r}")


# ---------------------------------------------------------------------------
# certificates per model
# ---------------------------------------------------------------------------

def certificate_ledger(config: RunConfig, model: Model):
    """Certificate ledger rows and named bounds for the configured model."""
    if config.model == "tcp_constant":
        c = cert.certify_tcp_constant(config.rate, config.delta)
        bounds = {
            "poincare_c": c.poincare_c,
            "gradient_rate": c.gradient_rate,
            "wasserstein_rate": 0.5 * c.gradient_rate,
            "optimal_w1_rate": config.rate * (1.0 - config.delta),
        }
        rows = list(c.ledger) + [
            ("wasserstein_rate", bounds["wasserstein_rate"],
             "half the gradient exponent bounds the transport decay"),
            ("optimal_w1_rate", bounds["optimal_w1_rate"],
             "synchronous coupling: rate*(1-delta) for first moments"),
        ]
        return rows, bounds
    if config.model == "tcp_linear":
        c = cert.certify_tcp_linear(config.delta)
        bounds = {"entropy_c": c.entropy_c, "rate_r": c.rate_r,
                  "weighted_logsob_c": c.weighted_logsob_c}
        return list(c.ledger), bounds
    if config.model == "tcp_increasing":
        rc = cert.certify_tcp_increasing(
            config.lambda_star, config.delta, config.kappa_value(),
            h_at=lambda x: h_function(model, x))
        bounds = {"poincare_c": rc.poincare_c, "decay_rate": rc.decay_rate,
                  "eta": rc.eta, "beta": rc.beta}
        rows = list(rc.details["ledger"]) + [
            ("decay_rate", rc.decay_rate, "eta over one plus beta times the constant"),
            ("prefactor", rc.prefactor, "one plus beta times the constant"),
        ]
        return rows, bounds
    if config.model == "storage":
        eta = cert.balance_eta(cert.balance_spec_storage(config.rate))
        bounds = {"gradient_rate": eta, "wasserstein_rate": 0.5 * eta}
        rows = [
            ("gradient_rate", eta, "balance infimum: flow contraction 2, neutral jumps"),
            ("wasserstein_rate", 0.5 * eta, "half the gradient exponent"),
        ]
        return rows, bounds
    if config.model == "twisted_tcp_linear":
        c = cert.certify_tcp_linear(config.delta)
        bounds = {"logsob_c": c.weighted_logsob_c, "rate_r": c.rate_r}
        rows = list(c.ledger)
        return rows, bounds
    raise ConfigError(f"no certificate for model {config.model!r}")


# ---------------------------------------------------------------------------
# experiment bodies
# ---------------------------------------------------------------------------

def _grouped_reconstruction(model: Model, matrix: np.ndarray, stream: RandomStream):
    """Reweight and push a (slot, chain) matrix; returns flat atoms/weights
    plus per-chain means of the reconstruction (independent columns)."""
    flat = matrix.ravel()
    if model.h_form is not None:
        hv = np.asarray(model.h_form(flat), dtype=float)
    else:
        hv = np.array([h_function(model, float(v)) for v in flat])
    pushed = kernel_Ktilde_sample(model, flat, stream.spawn())
    hw = hv.reshape(matrix.shape)
    pw = pushed.reshape(matrix.shape)
    col_mean = (hw * pw).sum(axis=0) / hw.sum(axis=0)
    col_mean2 = (hw * pw ** 2).sum(axis=0) / hw.sum(axis=0)
    return pushed, hv, col_mean, col_mean2


def _mean_se(values: np.ndarray):
    m = float(values.mean())
    return m, float(values.std(ddof=1) / np.sqrt(values.size))


def simulate_experiment(config: RunConfig, model: Model, master: RandomStream,
                        out_dir: str, report: Report):
    def chain_task():
        matrix = chain_sample_matrix(
            model, config.chain_length, config.burn_in, config.thinning,
            master.substream(1))
        pushed, hv, col_mean, col_mean2 = _grouped_reconstruction(
            model, matrix, master.substream(2))
        return matrix, pushed, hv, col_mean, col_mean2

    def ta_task():
        return time_average_states(
            model, x0=1.0, t_burn=20.0, t_end=80.0,
            n_paths=max(2, min(512, config.n_outer)), n_times=64,
            stream=master.substream(3))

    (matrix, pushed, hv, col_mean, col_mean2), ta = run_tasks(
        [chain_task, ta_task], config.workers)

    mu = EmpiricalMeasure.from_samples(pushed, hv, provenance="reweighted")
    mu.to_csv(os.path.join(out_dir, "measure.csv"))

    rec_mean, rec_mean_se = _mean_se(col_mean)
    rec_m2, rec_m2_se = _mean_se(col_mean2)
    ta_mean, ta_mean_se = _mean_se(ta.mean(axis=1))
    ta_m2, ta_m2_se = _mean_se((ta ** 2).mean(axis=1))

    tol1 = 3.0 * np.hypot(rec_mean_se, ta_mean_se)
    tol2 = 3.0 * np.hypot(rec_m2_se, ta_m2_se)
    report.check(
        "reconstructed_vs_time_average_mean", abs(rec_mean - ta_mean) <= tol1,
        f"reconstructed={rec_mean:.6g} time_average={ta_mean:.6g} tol={tol1:.3g}")
    report.check(
        "reconstructed_vs_time_average_second_moment", abs(rec_m2 - ta_m2) <= tol2,
        f"reconstructed={rec_m2:.6g} time_average={ta_m2:.6g} tol={tol2:.3g}")
    report.check(
        "measure_weights_normalised", abs(mu.weights.sum() - 1.0) <= 1e-12,
        f"sum={mu.weights.sum():.17g}")

    chain_mu = EmpiricalMeasure.from_samples(
        matrix.ravel()[: config.chain_length], provenance="chain")
    norm = normaliser_estimate(model, chain_mu, master.substream(4))
    report.info("reconstruction_normaliser",
                f"value={norm.value:.10g} bootstrap_se={norm.std_error:.3g}")
    rows = [
        ("chain_mean", chain_mu.mean(), "embedded-chain sample mean"),
        ("reconstruction_normaliser", norm.value,
         f"chain mean of the residual normaliser, bootstrap se {norm.std_error:.3g}"),
        ("reconstructed_mean", rec_mean, "reweighted and pushed chain sample"),
        ("time_average_mean", ta_mean, "trajectory occupation average"),
        ("reconstructed_second_moment", rec_m2, "reweighted and pushed chain sample"),
        ("time_average_second_moment", ta_m2, "trajectory occupation average"),
    ]
    write_ledger_csv(os.path.join(out_dir, "ledger.csv"), rows)


def certify_experiment(config: RunConfig, model: Model, master: RandomStream,
                       out_dir: str, report: Report):
    rows, bounds = certificate_ledger(config, model)
    write_ledger_csv(os.path.join(out_dir, "ledger.csv"), rows)
    finite = all(np.isfinite(v) for _, v, _ in rows)
    report.check("ledger_values_finite", finite, f"{len(rows)} quantities")
    for name, value in bounds.items():
        report.check(f"bound_{name}_positive", value > 0, f"{name}={value:.6g}")
    if config.model == "tcp_constant":
        closed = 4.0 / (config.rate ** 2 * (1.0 - config.delta ** 2))
        got = bounds["poincare_c"]
        report.check("profile_route_matches_closed_form",
                     abs(got - closed) <= 1e-12 * closed,
                     f"algebra={got:.17g} closed={closed:.17g}")
    if config.model in ("tcp_linear", "twisted_tcp_linear"):
        a_rate = (1.0 - config.delta) * cert.theta_constant()
        report.check("rate_inside_certified_interval",
                     0.0 < bounds["rate_r"] < a_rate,
                     f"rate={bounds['rate_r']:.6g} upper={a_rate:.6g}")


def _w1_series(config: RunConfig, model: Model, master: RandomStream):
    """Coupled-ensemble transport distances between two point starts."""
    x_lo, x_hi = 0.0, 2.0
    n = config.n_outer
    n_blocks = 20

    def task(j, t):
        node = master.substream(10 + j)
        lo = simulate_ensemble(model, np.full(n, x_lo), t, node)
        hi = simulate_ensemble(model, np.full(n, x_hi), t, node)
        value = wasserstein_1d(
            1.0,
            EmpiricalMeasure.from_samples(lo, provenance="chain"),
            EmpiricalMeasure.from_samples(hi, provenance="chain"),
        )
        m = (n // n_blocks) * n_blocks
        blo = np.sort(lo[:m].reshape(n_blocks, -1), axis=1)
        bhi = np.sort(hi[:m].reshape(n_blocks, -1), axis=1)
        per_block = np.abs(blo - bhi).mean(axis=1)
        se = per_block.std(ddof=1) / np.sqrt(n_blocks)
        return t, value, float(se)

    tasks = [lambda j=j, t=t: task(j, t) for j, t in enumerate(config.time_grid)]
    return run_tasks(tasks, config.workers)


def entropy_decay_series(model: Model, tf: TestFunction, mu_hat: EmpiricalMeasure,
                         times, inner_n: int, stream: RandomStream):
    """xlogx entropy of the time-t conditional means along a time grid."""
    rows = []
    for j, t in enumerate(times):
        if t == 0:
            vals = np.asarray(tf.f(mu_hat.values), dtype=float)
            est = entropy_p_with_error(vals, 1.0, mu_hat.weights)
        else:
            means, ivars = semigroup_inner_statistics(
                model, tf.f, mu_hat.values, t, inner_n, stream.substream(j))
            est = entropy_p_with_error(means, 1.0, mu_hat.weights, ivars, inner_n)
        rows.append((float(t), est.value, est.std_error))
    return rows


def verify_experiment(config: RunConfig, model: Model, master: RandomStream,
                      out_dir: str, report: Report):
    rows, bounds = certificate_ledger(config, model)
    write_ledger_csv(os.path.join(out_dir, "ledger.csv"), rows)

    if config.model == "tcp_constant":
        series = _w1_series(config, model, master)
        fit = fit_decay_rate(series)
        report.info("decay_fit", _fit_summary(fit))
        target = bounds["optimal_w1_rate"]
        certified = bounds["wasserstein_rate"]
        report.check(
            "w1_rate_near_optimal", abs(fit.fitted_rate - target) <= 0.1 * target,
            f"fitted={fit.fitted_rate:.6g} optimal={target:.6g}")
        report.check(
            "w1_rate_above_certified",
            fit.fitted_rate >= certified - 3.0 * fit.rate_std_error,
            f"fitted={fit.fitted_rate:.6g} certified={certified:.6g} se={fit.rate_std_error:.3g}")
    elif config.model == "storage":
        atoms = EmpiricalMeasure.from_samples([0.5, 1.0, 2.0], provenance="chain")
        tf = TestFunction(lambda x: x, lambda x: np.ones_like(x), "x")
        times = [t for t in config.time_grid]

        def task(j, t):
            est = energy_W(model, tf, atoms, t, config.n_inner, master.substream(20 + j))
            return t, est.value, est.std_error

        series = run_tasks([lambda j=j, t=t: task(j, t) for j, t in enumerate(times)],
                           config.workers)
        fit = fit_decay_rate(series)
        report.info("decay_fit", _fit_summary(fit))
        report.check(
            "energy_rate_matches_flow_contraction", abs(fit.fitted_rate - 2.0) <= 1e-3,
            f"fitted={fit.fitted_rate:.10g} target=2")
    elif config.model in ("tcp_linear", "twisted_tcp_linear"):
        base = models.make_tcp_linear(models.TcpLinearParams(config.delta)) \
            if config.model == "twisted_tcp_linear" else model
        matrix = chain_sample_matrix(base, config.n_outer, config.burn_in,
                                     config.thinning, master.substream(1))
        chain_mu = EmpiricalMeasure.from_samples(
            matrix.ravel()[: config.n_outer], provenance="chain")
        mu = reconstruct_mu(base, chain_mu, master.substream(2))
        lc = cert.certify_tcp_linear(config.delta)
        fam = family_by_labels(["x", "sin(x)"])
        all_rows = []
        for k, tf in enumerate(fam):
            series = entropy_decay_series(base, tf, mu, config.time_grid,
                                          config.n_inner, master.substream(30 + k))
            energy0 = mu.expectation(lambda x: np.asarray(tf.df(x)) ** 2)
            ok = True
            worst = ""
            for t, value, se in series:
                bound = lc.entropy_c * np.exp(-lc.rate_r * t) * energy0 + 3.0 * se
                if value > bound:
                    ok = False
                    worst = f" violated at t={t}: {value:.6g} > {bound:.6g}"
            report.check(f"entropy_decay_certified_{tf.label}", ok,
                         f"constant={lc.entropy_c:.6g} rate={lc.rate_r:.6g}{worst}")
            all_rows += [(t, v, se) for t, v, se in series]
        series = all_rows
    else:  # tcp_increasing
        matrix = chain_sample_matrix(model, config.n_outer, config.burn_in,
                                     config.thinning, master.substream(1))
        chain_mu = EmpiricalMeasure.from_samples(
            matrix.ravel()[: config.n_outer], provenance="chain")
        mu = reconstruct_mu(model, chain_mu, master.substream(2))
        tf = TestFunction(lambda x: x, lambda x: np.ones_like(x), "x")

        def task(j, t):
            est = variance_of_semigroup(model, tf, mu, t, config.n_inner,
                                        master.substream(40 + j))
            return t, est.value, est.std_error

        series = run_tasks(
            [lambda j=j, t=t: task(j, t) for j, t in enumerate(config.time_grid)],
            config.workers)
        fit = fit_decay_rate(series)
        report.info("decay_fit", _fit_summary(fit))
        report.check(
            "variance_rate_above_certified",
            fit.fitted_rate >= bounds["decay_rate"] - 3.0 * fit.rate_std_error,
            f"fitted={fit.fitted_rate:.6g} certified={bounds['decay_rate']:.6g}")
    write_series_csv(os.path.join(out_dir, "series.csv"), series)


def inequality_experiment(config: RunConfig, model: Model, master: RandomStream,
                          out_dir: str, report: Report):
    if config.model == "storage":
        raise ConfigError(
            "storage has no inequality certificate (its pre-jump kernel spreads mass)")
    rows, bounds = certificate_ledger(config, model)
    matrix = chain_sample_matrix(model, config.chain_length, config.burn_in,
                                 config.thinning, master.substream(1))
    chain_mu = EmpiricalMeasure.from_samples(
        matrix.ravel()[: config.chain_length], provenance="chain")
    mu = reconstruct_mu(model, chain_mu, master.substream(2))
    mu.to_csv(os.path.join(out_dir, "measure.csv"))

    family = family_by_labels(config.functions)
    if config.model == "tcp_constant":
        weight, p, bound, bound_name = None, 2.0, bounds["poincare_c"], "poincare_c"
    elif config.model == "tcp_linear":
        weight, p, bound, bound_name = (model.weight, 1.0,
                                        bounds["weighted_logsob_c"], "weighted_logsob_c")
    elif config.model == "twisted_tcp_linear":
        weight, p, bound, bound_name = None, 1.0, bounds["logsob_c"], "logsob_c"
    else:  # tcp_increasing
        weight, p, bound, bound_name = None, 2.0, bounds["poincare_c"], "poincare_c"
    details = inequality_details(mu, family, weight, p)
    ledger_rows = list(rows)
    worst = max(details, key=lambda d: d["ratio"])
    for d in details:
        ledger_rows.append((f"ratio_{d['label']}", d["ratio"],
                            f"empirical entropy/energy ratio, std error {d['std_error']:.3g}"))
    write_ledger_csv(os.path.join(out_dir, "ledger.csv"), ledger_rows)
    report.check(
        "empirical_ratio_below_certificate",
        worst["ratio"] <= bound + 3.0 * worst["std_error"],
        f"max_ratio={worst['ratio']:.6g} ({worst['label']}) "
        f"{bound_name}={bound:.6g} se={worst['std_error']:.3g}")


_BODIES = {
    "simulate": simulate_experiment,
    "certify": certify_experiment,
    "verify": verify_experiment,
    "inequality": inequality_experiment,
}


def run_experiment(config: RunConfig) -> int:
    """Run the configured experiment; 0 exit status iff every assertion passed."""
    out_dir = os.path.join(config.out_dir, config.experiment)
    os.makedirs(out_dir, exist_ok=True)
    report = Report({
        "experiment": config.experiment,
        "model": config.model,
        "seed": config.seed,
        "workers": config.workers,
    })
    master = RandomStream(config.seed)
    try:
        model = build_model(config)
        _BODIES[config.experiment](config, model, master, out_dir, report)
    except Exception as exc:  # noqa: BLE001 - report and signal failure
        report.check("experiment_completed", False, f"{type(exc).__name__}: {exc}")
        report.write(os.path.join(out_dir, "report.txt"))
        traceback.print_exc()
        return 1
    report.write(os.path.join(out_dir, "report.txt"))
    return 0 if report.passed else 1
