"""Factorized Gaussian search distribution over policy parameters.

The learned object is a pair of vectors (eta, tau): per-dimension means and
standard deviations of independent normals from which deterministic-controller
parameters theta are drawn.  This module holds all closed-form math for that
distribution: sampling, log-density, the score function (the derivative of the
log-density with respect to eta and tau), and density-ratio importance weights
between two such distributions.

All functions broadcast over a leading batch axis: ``theta`` may be a single
vector of shape ``(ell,)`` or a batch of shape ``(n, ell)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class HyperParams:
    """Means and standard deviations of the per-dimension Gaussian prior.

    Attributes:
        eta: mean vector, shape ``(ell,)``.
        tau: standard-deviation vector, shape ``(ell,)``, strictly positive.
    """

    eta: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if eta.ndim != 1 or tau.ndim != 1:
            raise ValueError("eta and tau must be 1-d vectors")
        if eta.shape != tau.shape:
            raise ValueError(
                f"eta and tau lengths differ: {eta.shape[0]} vs {tau.shape[0]}"
            )
        if eta.size == 0:
            raise ValueError("hyper-parameters must have at least one dimension")
        if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(tau))):
            raise ValueError("eta and tau must be finite")
        if np.any(tau <= 0.0):
            bad = int(np.argmax(tau <= 0.0))
            raise ValueError(f"tau must be strictly positive (dimension {bad})")
        eta.setflags(write=False)
        tau.setflags(write=False)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "tau", tau)

    @property
    def dim(self) -> int:
        return self.eta.shape[0]

    def stacked(self) -> np.ndarray:
        """Concatenated (eta, tau) vector, shape ``(2*ell,)``."""
        return np.concatenate([self.eta, self.tau])


class Score(NamedTuple):
    """Derivative of the prior log-density, split by parameter block."""

    d_eta: np.ndarray
    d_tau: np.ndarray


def _check_theta(rho: HyperParams, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1:] != (rho.dim,):
        raise ValueError(
            f"theta has {theta.shape[-1] if theta.ndim else 0} dimensions, "
            f"prior has {rho.dim}"
        )
    return theta


def sample_params(rho: HyperParams, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw controller parameters theta_i ~ Normal(eta_i, tau_i^2).

    Returns shape ``(ell,)`` when ``size`` is None, else ``(size, ell)``.
    Reproducible given the generator state.
    """
    shape = (rho.dim,) if size is None else (size, rho.dim)
    return rho.eta + rho.tau * rng.standard_normal(shape)


def log_density(rho: HyperParams, theta) -> float | np.ndarray:
    """Log-density of theta under the factorized Gaussian prior.

    Sum over dimensions of log Normal(theta_i | eta_i, tau_i^2).
    """
    theta = _check_theta(rho, theta)
    z = (theta - rho.eta) / rho.tau
    out = -0.5 * np.sum(z * z + LOG_2PI + 2.0 * np.log(rho.tau), axis=-1)
    return float(out) if out.ndim == 0 else out


def score(rho: HyperParams, theta) -> Score:
    """Gradient of ``log_density`` with respect to eta and tau.

    d_eta_i = (theta_i - eta_i) / tau_i^2
    d_tau_i = ((theta_i - eta_i)^2 - tau_i^2) / tau_i^3
    """
    theta = _check_theta(rho, theta)
    diff = theta - rho.eta
    var = rho.tau * rho.tau
    d_eta = diff / var
    d_tau = (diff * diff - var) / (var * rho.tau)
    return Score(d_eta, d_tau)


def log_weight(target: HyperParams, behavior: HyperParams, theta) -> float | np.ndarray:
    """Log importance weight log p(theta|target) - log p(theta|behavior)."""
    if target.dim != behavior.dim:
        raise ValueError(
            f"target and behavior dimensions differ: {target.dim} vs {behavior.dim}"
        )
    return log_density(target, theta) - log_density(behavior, theta)


def importance_weight(target: HyperParams, behavior: HyperParams, theta) -> float | np.ndarray:
    """Density ratio p(theta|target) / p(theta|behavior).

    Computed in log space and exponentiated once, so per-dimension ratios
    never overflow individually.  Underflow of the ratio itself returns 0.0
    (such a sample carries no weight); overflow to infinity raises, naming
    the dimension that contributes most to the log-ratio.
    """
    lw = log_weight(target, behavior, theta)
    with np.errstate(over="ignore"):
        w = np.exp(lw)
    if not np.all(np.isfinite(w)):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        bad = int(np.argmax(~np.isfinite(np.atleast_1d(w))))
        per_dim = _log_weight_terms(target, behavior, theta[bad])
        dim = int(np.argmax(np.abs(per_dim)))
        raise ValueError(
            f"importance weight is not finite (record {bad}, dominated by "
            f"dimension {dim} with log-ratio {per_dim[dim]:.3g})"
        )
    return w


def _log_weight_terms(target: HyperParams, behavior: HyperParams, theta: np.ndarray) -> np.ndarray:
    """Per-dimension contributions to the log importance weight."""
    zt = (theta - target.eta) / target.tau
    zb = (theta - behavior.eta) / behavior.tau
    return 0.5 * (zb * zb - zt * zt) + np.log(behavior.tau) - np.log(target.tau)
