"""Pseudo-marginal random-walk Metropolis-Hastings rejuvenation.

Each proposal regenerates all M replicate datasets, so the replicate-averaged
kernel value acts as a nonnegative unbiased likelihood estimate and the chain
targets the joint replicate-augmented distribution exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError


@dataclass(frozen=True)
class ProposalCalibration:
    """Cholesky factor of the scaled (and possibly ridged) particle covariance."""

    chol: np.ndarray  # (d, d) lower triangular, of scale * (cov + ridge * I)
    scale: float
    ridge: float


def calibrate(
    theta: np.ndarray,
    weights: np.ndarray | None = None,
    scale: float | None = None,
    ridge: float = 1e-10,
) -> ProposalCalibration:
    """Random-walk covariance from the current population.

    Uses the classic 2.38^2/d scaling by default; the ridge is multiplied by
    ten until the Cholesky factorization succeeds, so a degenerate population
    still yields a usable (if tiny) proposal.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] < 2:
        raise InvalidInputError("theta must be (N, d) with N >= 2")
    d = theta.shape[1]
    if scale is None:
        scale = 2.38**2 / d
    cov = np.cov(theta, rowvar=False, aweights=weights)
    cov = np.atleast_2d(cov)
    while True:
        try:
            chol = np.linalg.cholesky(scale * (cov + ridge * np.eye(d)))
            break
        except np.linalg.LinAlgError:
            ridge *= 10.0
            if ridge > 1e12:
                raise InvalidInputError("covariance could not be regularized") from None
    return ProposalCalibration(chol=chol, scale=scale, ridge=ridge)


def log_acceptance_ratio(
    dists_current: np.ndarray,
    dists_proposal: np.ndarray,
    lam: float,
    log_prior_current: float,
    log_prior_proposal: float,
) -> float:
    """log of [sum_i e^(-lam d'_i) pi(theta')] / [sum_i e^(-lam d_i) pi(theta)].

    The symmetric random-walk proposal density cancels; replicate counts of
    numerator and denominator must match so the 1/M factors cancel too.
    """
    dists_current = np.asarray(dists_current, dtype=float)
    dists_proposal = np.asarray(dists_proposal, dtype=float)
    if dists_current.shape != dists_proposal.shape:
        raise InvalidInputError("current and proposal must have the same replicate count")
    if log_prior_proposal == -np.inf:
        return -np.inf
    from .smc import ExponentialKernel  # local import to avoid a cycle

    return float(
        ExponentialKernel.log_sum(dists_proposal, lam)
        - ExponentialKernel.log_sum(dists_current, lam)
        + log_prior_proposal
        - log_prior_current
    )


def rejuvenate(system, model, summary, dist_spec, n_obs, calibration, k_steps, rng, kernel):
    """k_steps in-place MH sweeps over all particles; returns (accept_rate, sim_calls).

    Continuous models use a Gaussian random walk with the calibrated
    covariance; discrete models (theta_atoms set) use a symmetric uniform
    proposal over the atoms.  Acceptance uses the standard rule
    log U < log ratio.
    """
    from .smc import simulate_distances

    n, m = system.dists.shape
    d = system.theta.shape[1]
    atoms = model.theta_atoms
    log_prior = model.prior_logpdf_batch(system.theta)
    log_kern = kernel.log_sum(system.dists, system.lam)
    accepts = 0
    for _ in range(k_steps):
        if atoms is not None:
            prop = atoms[rng.integers(0, len(atoms), size=n)]
        else:
            prop = system.theta + rng.standard_normal((n, d)) @ calibration.chol.T
        lp_prop = model.prior_logpdf_batch(prop)
        d_prop = simulate_distances(
            model, prop, n_obs, m, rng, summary, dist_spec, system.observed_stats
        )
        lk_prop = kernel.log_sum(d_prop, system.lam)
        with np.errstate(invalid="ignore"):
            log_ratio = lk_prop - log_kern + lp_prop - log_prior
        log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
        acc = np.log(rng.random(n)) < log_ratio
        system.theta[acc] = prop[acc]
        system.dists[acc] = d_prop[acc]
        log_prior[acc] = lp_prop[acc]
        log_kern[acc] = lk_prop[acc]
        accepts += int(acc.sum())
    return accepts / (n * k_steps), n * k_steps * m
