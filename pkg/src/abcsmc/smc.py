"""Adaptive SMC driver for the exponential-kernel ABC pseudo-posterior.

The sampler tracks a weighted population of (theta, replicate statistics,
replicate distances) through an increasing inverse-temperature ladder chosen
by ESS-targeted bisection, with systematic resampling every step, MCMC
rejuvenation, replicate-count adaptation, and online tracking of the
log-normalizing constant log Z_lambda.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import madapt, mcmc
from .exceptions import (
    DegenerateSystemError,
    InvalidConfigError,
    LadderStallError,
)
from .models import GenerativeModel
from .statistics import DistanceSpec, SummarySpec, distance_batch, summarize, summarize_batch


def simulate_distances(
    model,
    theta: np.ndarray,
    n_obs: int,
    m: int,
    rng,
    summary: SummarySpec,
    dist_spec: DistanceSpec,
    observed_stats: np.ndarray,
    max_elements: int = 20_000_000,
) -> np.ndarray:
    """Distances of m fresh replicate datasets per particle to the observed stats.

    Replicates are simulated in chunks so the raw (N, chunk, n) array stays
    bounded in memory regardless of how large M grows.
    """
    n_particles = theta.shape[0]
    chunk = max(1, min(m, max_elements // max(1, n_particles * n_obs)))
    out = np.empty((n_particles, m))
    for j0 in range(0, m, chunk):
        j1 = min(m, j0 + chunk)
        sims = model.simulate_batch(theta, n_obs, j1 - j0, rng)
        out[:, j0:j1] = distance_batch(dist_spec, summarize_batch(summary, sims), observed_stats)
    return out


def logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    """Stable log-sum-exp; rows of all -inf map to -inf without warnings."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out if axis is not None else float(out)


class ExponentialKernel:
    """log sum_i exp(-lambda * d_i); ladder parameter lambda increases from 0."""

    name = "exponential"
    start_param = 0.0

    @staticmethod
    def log_sum(dists: np.ndarray, lam: float) -> np.ndarray:
        return logsumexp(-lam * dists, axis=-1)


class UniformKernel:
    """log #{i : d_i <= eps}; ladder parameter eps decreases from +inf.

    The accept/reject baseline: weight increments are 0 or -inf, driven by
    the same ESS bisection machinery on the acceptance indicator.
    """

    name = "uniform"
    start_param = math.inf

    @staticmethod
    def log_sum(dists: np.ndarray, eps: float) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.sum(dists <= eps, axis=-1).astype(float))


def ess(log_weights: np.ndarray) -> float:
    """Effective sample size (sum w)^2 / sum w^2, computed in log space."""
    log_weights = np.asarray(log_weights, dtype=float)
    if not np.any(np.isfinite(log_weights)):
        raise DegenerateSystemError("all particle weights are zero")
    return float(np.exp(2.0 * logsumexp(log_weights, axis=0) - logsumexp(2.0 * log_weights, axis=0)))


def incremental_log_weight(dists, lam_new: float, lam_old: float) -> float:
    """Exponential-kernel weight increment for one particle's replicate distances."""
    dists = np.asarray(dists, dtype=float)
    if lam_new < lam_old or lam_old < 0:
        raise InvalidConfigError("requires lam_new >= lam_old >= 0")
    return float(ExponentialKernel.log_sum(dists, lam_new) - ExponentialKernel.log_sum(dists, lam_old))


def systematic_resample(weights: np.ndarray, u: float) -> np.ndarray:
    """Ancestor indices from the single-uniform stratified rule.

    Positions (u + k)/N for k = 0..N-1 are matched against the cumulative
    weights, so index j receives floor(N*W_j) or ceil(N*W_j) copies.
    """
    weights = np.asarray(weights, dtype=float)
    if not 0.0 <= u < 1.0:
        raise InvalidConfigError("u must lie in [0, 1)")
    n = weights.size
    positions = (u + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = max(cum[-1], 1.0)  # guard roundoff at the top stratum
    return np.minimum(np.searchsorted(cum, positions, side="right"), n - 1)


def predict_next_lambda(history) -> float:
    """One-step extrapolation of the ladder by least squares on log lambda.

    Used only to seed the bisection bracket when replicate sums make ESS
    evaluations costlier; falls back to doubling when the fit is degenerate.
    """
    pts = [(t, lam) for t, lam in history if lam > 0]
    if not pts:
        return 1.0
    if len(pts) < 2:
        return 2.0 * pts[-1][1]
    t = np.array([p[0] for p in pts], dtype=float)
    y = np.log([p[1] for p in pts])
    a = np.vstack([np.ones_like(t), t]).T
    try:
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    except np.linalg.LinAlgError:
        return 2.0 * pts[-1][1]
    pred = coef[0] + coef[1] * (t[-1] + 1.0)
    if not np.isfinite(pred):
        return 2.0 * pts[-1][1]
    return float(np.exp(min(pred, 700.0)))


@dataclass
class ParticleSystem:
    """Weighted population targeting pi_lambda^M, with log-Z tracking."""

    theta: np.ndarray  # (N, d)
    dists: np.ndarray  # (N, M)
    log_weights: np.ndarray  # (N,), normalized so logsumexp == 0
    lam: float
    log_z: float
    observed_stats: np.ndarray
    sim_calls: int = 0

    @property
    def n_particles(self) -> int:
        return self.theta.shape[0]

    @property
    def m_replicates(self) -> int:
        return self.dists.shape[1]

    def normalize(self):
        self.log_weights = self.log_weights - logsumexp(self.log_weights, axis=0)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def ess(self) -> float:
        return ess(self.log_weights)

    def weighted_mean(self) -> np.ndarray:
        return self.weights() @ self.theta

    def weighted_sd(self) -> np.ndarray:
        mu = self.weighted_mean()
        var = self.weights() @ (self.theta - mu) ** 2
        return np.sqrt(np.maximum(var, 0.0))


def find_next_lambda(
    system: ParticleSystem,
    tau: float,
    lam_max: float,
    tol: float = 1e-4,
    kernel=ExponentialKernel,
    predict: float | None = None,
    max_iter: int = 100,
) -> float:
    """Next ladder value solving ESS(lambda) = tau*N by bisection.

    Returns lam_max when even the capped update keeps ESS above the target.
    Raises LadderStallError when the current ESS is already below tau*N.
    """
    n = system.n_particles
    target = tau * n
    base = kernel.log_sum(system.dists, system.lam)

    def ess_at(lam: float) -> float:
        return ess(system.log_weights + kernel.log_sum(system.dists, lam) - base)

    if system.ess() < target - tol * n:
        raise LadderStallError(
            f"ESS {system.ess():.2f} already below target {target:.2f} at lambda={system.lam:g}"
        )
    if ess_at(lam_max) >= target:
        return lam_max
    lo = system.lam
    hi = lam_max
    if predict is not None and predict > lo:
        hi = min(lam_max, 4.0 * predict)
        while ess_at(hi) > target and hi < lam_max:
            lo = hi
            hi = min(2.0 * hi, lam_max)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e = ess_at(mid)
        if abs(e - target) <= tol * n:
            return mid
        if e > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _find_next_eps(system: ParticleSystem, tau: float, eps_target: float, tol: float, max_iter: int = 100) -> float:
    """Uniform-kernel analogue: shrink eps until ESS hits tau*N (ESS increases with eps)."""
    n = system.n_particles
    target = tau * n
    base = UniformKernel.log_sum(system.dists, system.lam)

    def ess_at(e: float) -> float:
        lw = system.log_weights + UniformKernel.log_sum(system.dists, e) - base
        if not np.any(np.isfinite(lw)):
            return 0.0
        return ess(lw)

    if system.ess() < target - tol * n:
        raise LadderStallError(
            f"ESS {system.ess():.2f} already below target {target:.2f} at eps={system.lam:g}"
        )
    if ess_at(eps_target) >= target:
        return eps_target
    lo, hi = eps_target, system.lam
    if not math.isfinite(hi):
        hi = float(system.dists.max())
    last_ok = hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e = ess_at(mid)
        if abs(e - target) <= tol * n:
            return mid
        if e >= target:
            hi = mid
            last_ok = mid
        else:
            lo = mid
    return last_ok


def update_log_z(system: ParticleSystem, lam_new: float, kernel=ExponentialKernel) -> float:
    """Telescoped log Z at lam_new using the current (pre-resampling) weights."""
    incr = kernel.log_sum(system.dists, lam_new) - kernel.log_sum(system.dists, system.lam)
    return system.log_z + logsumexp(system.log_weights + incr, axis=0)


@dataclass
class StepRecord:
    step: int
    lam: float
    ess: float
    accept_rate: float
    m: int
    log_z: float
    theta_mean: np.ndarray
    theta_sd: np.ndarray
    ess_post_refresh: float
    snapshot: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None  # (theta, dists, log_weights)


@dataclass
class LadderTrace:
    """Per-step diagnostics of a run, exportable to CSV."""

    records: list[StepRecord] = field(default_factory=list)
    kernel: str = "exponential"
    status: str = "ok"

    def __len__(self):
        return len(self.records)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([r.lam for r in self.records])

    @property
    def log_zs(self) -> np.ndarray:
        return np.array([r.log_z for r in self.records])

    def to_csv(self, path):
        d = len(self.records[0].theta_mean) if self.records else 0
        header = ["step", "lambda", "ess", "accept_rate", "M", "log_z"]
        header += [f"theta_mean_{i + 1}" for i in range(d)]
        header += [f"theta_sd_{i + 1}" for i in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in self.records:
                row = [r.step, _fmt(r.lam), _fmt(r.ess), _fmt(r.accept_rate), r.m, _fmt(r.log_z)]
                row += [_fmt(x) for x in r.theta_mean]
                row += [_fmt(x) for x in r.theta_sd]
                w.writerow(row)

    def snapshots_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            first = next((r for r in self.records if r.snapshot is not None), None)
            d = first.snapshot[0].shape[1] if first is not None else 0
            w.writerow(["step", "particle", "weight", *[f"theta_{i + 1}" for i in range(d)]])
            for r in self.records:
                if r.snapshot is None:
                    continue
                theta, _, log_w = r.snapshot
                wts = np.exp(log_w)
                for i in range(theta.shape[0]):
                    w.writerow([r.step, i, _fmt(wts[i]), *[_fmt(x) for x in theta[i]]])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def load_trace_csv(path) -> LadderTrace:
    """Rebuild a LadderTrace (without snapshots) from its CSV export."""
    trace = LadderTrace()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "lambda" not in reader.fieldnames:
            raise InvalidConfigError(f"{path} is not a ladder trace CSV")
        d = sum(1 for name in reader.fieldnames if name.startswith("theta_mean_"))
        for row in reader:
            trace.records.append(
                StepRecord(
                    step=int(row["step"]),
                    lam=float(row["lambda"]),
                    ess=float(row["ess"]),
                    accept_rate=float(row["accept_rate"]),
                    m=int(row["M"]),
                    log_z=float(row["log_z"]),
                    theta_mean=np.array([float(row[f"theta_mean_{i + 1}"]) for i in range(d)]),
                    theta_sd=np.array([float(row[f"theta_sd_{i + 1}"]) for i in range(d)]),
                    ess_post_refresh=float(row["ess"]),
                )
            )
    return trace


@dataclass
class SMCConfig:
    """Inputs of the SMC driver; validated on construction via ``validate``."""

    n_particles: int = 1000
    lambda_target: float | None = 60.0  # None => adaptive mode, run to lambda_max
    lambda_max: float | None = None  # default 10 * lambda_target in fixed mode
    tau: float = 0.9
    mcmc_steps: int = 3
    proposal_scale: float | None = None  # default 2.38^2 / d
    accept_target: float = 0.1
    adapt_m: bool = True
    m_max: int = 128
    m_change: str = "gibbs"  # or "is"
    initial_m: int = 1
    bisect_tol: float = 1e-4
    kernel: str = "exponential"  # or "uniform"
    eps_target: float | None = None  # uniform kernel stopping window
    sim_budget: int | None = None
    max_steps: int = 10_000
    store_snapshots: bool = False
    snapshot_max: int = 200
    seed: int = 0
    on_stall: str = "raise"  # or "stop" / "advance" (instrumented: push on, keep weights)
    m_schedule: dict[int, int] | None = None  # forced M per step, overrides adaptation

    def validate(self):
        if self.n_particles < 2:
            raise InvalidConfigError("n_particles must be >= 2")
        if not 0.0 < self.tau < 1.0:
            raise InvalidConfigError("tau must lie in (0, 1)")
        if self.kernel not in ("exponential", "uniform"):
            raise InvalidConfigError(f"unknown kernel {self.kernel!r}")
        if self.kernel == "uniform":
            if self.eps_target is None or self.eps_target < 0:
                raise InvalidConfigError("uniform kernel requires eps_target >= 0")
        elif self.lambda_target is None:
            if self.lambda_max is None or self.lambda_max <= 0:
                raise InvalidConfigError("adaptive mode requires lambda_max > 0")
        elif self.lambda_target < 0:
            raise InvalidConfigError("lambda_target must be >= 0")
        if self.m_change not in ("gibbs", "is"):
            raise InvalidConfigError(f"unknown m_change {self.m_change!r}")
        if self.on_stall not in ("raise", "stop", "advance"):
            raise InvalidConfigError(f"unknown on_stall {self.on_stall!r}")
        if self.initial_m < 1 or self.m_max < self.initial_m:
            raise InvalidConfigError("need 1 <= initial_m <= m_max")
        if self.mcmc_steps < 0:
            raise InvalidConfigError("mcmc_steps must be >= 0")
        return self


def _init_system(config, model, summary, dist_spec, observations, rng) -> ParticleSystem:
    obs_stats = summarize(summary, observations)
    n_obs = len(observations)
    theta = model.prior_sample(rng, config.n_particles)
    dists = simulate_distances(model, theta, n_obs, config.initial_m, rng, summary, dist_spec, obs_stats)
    log_w = np.full(config.n_particles, -math.log(config.n_particles))
    kernel = ExponentialKernel if config.kernel == "exponential" else UniformKernel
    return ParticleSystem(
        theta=theta,
        dists=dists,
        log_weights=log_w,
        lam=kernel.start_param,
        log_z=0.0,
        observed_stats=obs_stats,
        sim_calls=config.n_particles * config.initial_m,
    )


def run_smc(
    config: SMCConfig,
    model: GenerativeModel,
    summary: SummarySpec,
    dist_spec: DistanceSpec,
    observations,
    hooks=None,
) -> tuple[ParticleSystem, LadderTrace]:
    """Full adaptive SMC loop from the prior to the target inverse temperature.

    Each ladder step: choose the next temperature by ESS bisection, reweight,
    update log Z, resample systematically, rejuvenate with K MCMC sweeps, then
    adapt the replicate count M.  Identical config and seed reproduce the
    trace bit for bit.
    """
    config.validate()
    observations = np.asarray(observations, dtype=float)
    rng = np.random.default_rng(config.seed)
    kernel = ExponentialKernel if config.kernel == "exponential" else UniformKernel
    uniform = config.kernel == "uniform"
    n_obs = len(observations)

    system = _init_system(config, model, summary, dist_spec, observations, rng)
    trace = LadderTrace(kernel=kernel.name)
    if not uniform and config.lambda_target is not None and config.lambda_target == 0.0:
        return system, trace

    if uniform:
        cap = config.eps_target
    elif config.lambda_target is None:
        cap = config.lambda_max
    else:
        cap = config.lambda_max if config.lambda_max is not None else 10.0 * config.lambda_target

    n = config.n_particles
    m = config.initial_m
    history: list[tuple[int, float]] = []
    final = False

    for step in range(1, config.max_steps + 1):
        if config.sim_budget is not None and system.sim_calls >= config.sim_budget:
            trace.status = "budget_exhausted"
            break
        def _select():
            if uniform:
                eps_new = _find_next_eps(system, config.tau, cap, config.bisect_tol)
                return eps_new, eps_new <= cap
            predict = predict_next_lambda(history) if (m > 1 and history) else None
            chosen = find_next_lambda(system, config.tau, cap, config.bisect_tol, predict=predict)
            if config.lambda_target is not None and chosen >= config.lambda_target:
                return config.lambda_target, True
            return chosen, chosen >= cap

        stalled = False
        try:
            lam_new, final = _select()
        except LadderStallError as err:
            if config.on_stall == "advance" and not uniform:
                # The current weights are already below the ESS target -- the
                # importance-sampling M refresh can do this -- so no
                # admissible temperature exists.  Push the ladder along the
                # predicted geometric schedule anyway and keep the damaged
                # weights: resampling would launder the diagnostic, and the
                # whole point of this instrumented mode is to record how the
                # weight ESS collapses once the ESS contract is broken.
                predicted = predict_next_lambda(history) if history else None
                lam_new = predicted if (predicted is not None and predicted > system.lam) else 1.5 * system.lam
                if config.lambda_target is not None and lam_new >= config.lambda_target:
                    lam_new = config.lambda_target
                    final = True
                elif lam_new >= cap:
                    lam_new = cap
                    final = True
                stalled = True
            else:
                trace.status = "ladder_stall"
                if config.on_stall == "raise":
                    err.trace = trace
                    raise
                break

        incr = kernel.log_sum(system.dists, lam_new) - kernel.log_sum(system.dists, system.lam)
        system.log_z = system.log_z + logsumexp(system.log_weights + incr, axis=0)
        system.log_weights = system.log_weights + incr
        system.normalize()
        ess_sel = system.ess()
        system.lam = lam_new

        if not stalled:
            idx = systematic_resample(system.weights(), float(rng.random()))
            system.theta = system.theta[idx]
            system.dists = system.dists[idx]
            system.log_weights = np.full(n, -math.log(n))

        if config.mcmc_steps > 0:
            if model.theta_atoms is None:
                calib = mcmc.calibrate(system.theta, None, scale=config.proposal_scale)
            else:
                calib = None
            accept_rate, sim_count = mcmc.rejuvenate(
                system, model, summary, dist_spec, n_obs, calib, config.mcmc_steps, rng, kernel
            )
            system.sim_calls += sim_count
        else:
            accept_rate = 1.0

        if config.m_schedule is not None:
            m_new = config.m_schedule.get(step, m)
        elif config.adapt_m and not uniform:
            m_new, _ = madapt.adapt_m(accept_rate, m, config.accept_target, config.m_max)
        else:
            m_new = m
        if m_new != m:
            if config.m_change == "gibbs":
                sc = madapt.gibbs_refresh_system(system, m_new, model, summary, dist_spec, n_obs, rng)
            else:
                sc = madapt.is_refresh_system(system, m_new, model, summary, dist_spec, n_obs, rng)
                system.normalize()
            system.sim_calls += sc
            m = m_new
        ess_post = system.ess()

        history.append((step, lam_new))
        snapshot = None
        if config.store_snapshots:
            snapshot = (system.theta.copy(), system.dists.copy(), system.log_weights.copy())
        trace.records.append(
            StepRecord(
                step=step,
                lam=lam_new,
                ess=ess_sel,
                accept_rate=accept_rate,
                m=m,
                log_z=system.log_z,
                theta_mean=system.weighted_mean(),
                theta_sd=system.weighted_sd(),
                ess_post_refresh=ess_post,
                snapshot=snapshot,
            )
        )
        if hooks:
            for hook in hooks:
                hook(trace.records[-1], system)
        if ess_post <= 1.0 + 1e-9:
            trace.status = "degenerate"
            if config.on_stall == "raise":
                raise DegenerateSystemError("particle system collapsed to a single particle", trace)
            break
        if final:
            break
    else:
        trace.status = "max_steps"

    if config.store_snapshots:
        _thin_snapshots(trace, config.snapshot_max)
    return system, trace


def _thin_snapshots(trace: LadderTrace, max_keep: int):
    with_snap = [r for r in trace.records if r.snapshot is not None]
    while len(with_snap) > max_keep:
        # drop every other snapshot, always keeping the final one
        for r in with_snap[:-1][::2]:
            r.snapshot = None
        with_snap = [r for r in trace.records if r.snapshot is not None]


def posterior_at_lambda(trace: LadderTrace, lam: float, kernel=ExponentialKernel):
    """Particle approximation at an off-ladder lambda.

    Takes the stored snapshot at the ladder step nearest lam and reweights it
    exactly via the kernel's incremental weights.
    """
    candidates = [r for r in trace.records if r.snapshot is not None]
    if not candidates:
        raise InvalidConfigError("trace carries no snapshots; rerun with store_snapshots=True")
    rec = min(candidates, key=lambda r: abs(r.lam - lam))
    theta, dists, log_w = rec.snapshot
    log_w = log_w + kernel.log_sum(dists, lam) - kernel.log_sum(dists, rec.lam)
    log_w = log_w - logsumexp(log_w, axis=0)
    return theta, np.exp(log_w)
