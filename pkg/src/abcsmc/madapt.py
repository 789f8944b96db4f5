"""Replicate-count (M) adaptation for the replicate-augmented target.

Doubling M when MCMC acceptance drops below a floor trades simulation cost
for a lower-variance kernel estimate.  Two refresh rules change M in flight:

- Gibbs refresh: retain one existing replicate with probability proportional
  to exp(-lambda * d_k), then simulate the remaining M'-1 afresh.  This is an
  exact conditional draw from the augmented target, so particle weights are
  untouched.
- Importance-sampling refresh: replace all replicates by fresh draws and
  correct the weights by the ratio of kernel averages.  The correction has
  heavy tails at large lambda and is included as the unstable baseline.
"""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidConfigError, InvalidInputError


def adapt_m(acceptance_rate: float, m: int, target: float, m_max: int) -> tuple[int, bool]:
    """Double M when acceptance is below target; returns (new M, saturated?)."""
    if not 0.0 <= acceptance_rate <= 1.0:
        raise InvalidInputError("acceptance_rate must lie in [0, 1]")
    if m < 1 or m_max < m:
        raise InvalidConfigError("need 1 <= m <= m_max")
    if acceptance_rate < target:
        if 2 * m <= m_max:
            return 2 * m, False
        return m, True
    return m, False


def retention_log_weights(dists: np.ndarray, lam: float) -> np.ndarray:
    """Unnormalized log retention weights -lam * d_k over a particle's replicates."""
    return -lam * np.asarray(dists, dtype=float)


def gibbs_refresh(theta, dists_old, lam, m_new, model, summary, dist_spec, obs_stats, n_obs, rng):
    """Single-particle conditional refresh to m_new replicate distances.

    Keeps replicate k with probability proportional to exp(-lam * d_k)
    (placed first), simulates m_new - 1 fresh replicates, and leaves the
    particle weight unchanged.
    """
    from .smc import simulate_distances

    dists_old = np.asarray(dists_old, dtype=float)
    lw = retention_log_weights(dists_old, lam)
    lw = lw - lw.max()
    p = np.exp(lw)
    p /= p.sum()
    k = int(rng.choice(len(p), p=p))
    kept_d = dists_old[k]
    if m_new > 1:
        theta = np.asarray(theta, dtype=float).reshape(1, -1)
        d_new = simulate_distances(model, theta, n_obs, m_new - 1, rng, summary, dist_spec, obs_stats)[0]
        return np.concatenate([[kept_d], d_new])
    return np.array([kept_d])


def gibbs_refresh_system(system, m_new, model, summary, dist_spec, n_obs, rng) -> int:
    """Vectorized Gibbs refresh of the whole population; returns simulator calls."""
    from .smc import simulate_distances

    n, m_old = system.dists.shape
    lw = retention_log_weights(system.dists, system.lam)
    p = np.exp(lw - lw.max(axis=1, keepdims=True))
    cum = np.cumsum(p, axis=1)
    cum /= cum[:, -1:]
    u = rng.random(n)
    k = np.minimum(np.sum(cum < u[:, None], axis=1), m_old - 1)
    kept_d = system.dists[np.arange(n), k]
    if m_new > 1:
        d_new = simulate_distances(
            model, system.theta, n_obs, m_new - 1, rng, summary, dist_spec, system.observed_stats
        )
        system.dists = np.concatenate([kept_d[:, None], d_new], axis=1)
    else:
        system.dists = kept_d[:, None]
    return n * (m_new - 1)


def is_refresh_log_weight(dists_old: np.ndarray, dists_new: np.ndarray, lam: float) -> float:
    """log importance correction when replacing M old replicates by M' fresh ones.

    w = [M sum_i e^(-lam d~_i)] / [M' sum_i e^(-lam d_i)].
    """
    from .smc import ExponentialKernel, logsumexp  # noqa: F401  (shared stable lse)

    dists_old = np.asarray(dists_old, dtype=float)
    dists_new = np.asarray(dists_new, dtype=float)
    return float(
        np.log(dists_old.shape[-1])
        - np.log(dists_new.shape[-1])
        + ExponentialKernel.log_sum(dists_new, lam)
        - ExponentialKernel.log_sum(dists_old, lam)
    )


def is_refresh_system(system, m_new, model, summary, dist_spec, n_obs, rng) -> int:
    """Replace all replicates by fresh ones and apply the importance correction."""
    from .smc import ExponentialKernel, simulate_distances

    n, m_old = system.dists.shape
    d_new = simulate_distances(
        model, system.theta, n_obs, m_new, rng, summary, dist_spec, system.observed_stats
    )
    incr = (
        np.log(m_old)
        - np.log(m_new)
        + ExponentialKernel.log_sum(d_new, system.lam)
        - ExponentialKernel.log_sum(system.dists, system.lam)
    )
    system.log_weights = system.log_weights + incr
    system.dists = d_new
    return n * m_new
