"""Marginal-preserving reverse transitions.

The reverse chain moves from time t to an earlier time s through the
kernel family

    x_s = alpha_s * x0_hat(x_t, t) + beta_s * x1_hat(x_t, t) + eta_s * eps

with eta_s = eta * sigma_s and beta_s = sigma_s * sqrt(1 - eta^2), so that
eta_s^2 + beta_s^2 = sigma_s^2 for every s.  For exact (x0, x1) pairs the
corresponding two-sided kernel reproduces the path marginals at every
stochasticity level eta in [0, 1]; the sampler plugs in the conditional
expectations instead.  eta = 0 gives the deterministic update, eta = 1
discards the noise estimate entirely.

``rng`` arguments accept either a single ``numpy.random.Generator`` or a
sequence of per-row generators (one per chain of a batched state), which
keeps each chain on its own reproducible substream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import NumericError
from .gmm import Denoiser
from .schedule import Schedule, TimeGrid, eval_schedule

RngLike = Union[np.random.Generator, Sequence[np.random.Generator]]


@dataclass(frozen=True)
class BridgeKernel:
    """Stochasticity level of the reverse transition family."""

    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")

    def coefficients(self, sched: Schedule, s: float) -> tuple[float, float, float]:
        """(alpha_s, beta_s, eta_s) of the transition mean/noise at time s."""
        alpha_s, sigma_s = eval_schedule(sched, s)
        beta_s = sigma_s * math.sqrt(max(0.0, 1.0 - self.eta**2))
        return alpha_s, beta_s, self.eta * sigma_s


@dataclass(frozen=True)
class TransitionParams:
    """Isotropic Gaussian transition: N(mean, std^2 I)."""

    mean: np.ndarray
    std: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", float(self.std))
        if self.std < 0:
            raise ValueError("transition std must be non-negative")
        if not np.all(np.isfinite(mean)):
            raise NumericError("transition mean must be finite")


def standard_normal(rng: RngLike, shape: tuple[int, ...]) -> np.ndarray:
    """Draw standard normals from one generator or one generator per row."""
    if isinstance(rng, np.random.Generator):
        return rng.standard_normal(shape)
    if len(rng) != shape[0]:
        raise ValueError(f"got {len(rng)} generators for {shape[0]} rows")
    return np.stack([g.standard_normal(shape[1:]) for g in rng])


def transition_params(
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
    x_t: np.ndarray,
    s: float,
    t: float,
) -> TransitionParams:
    """Parameters of the reverse transition from x_t at time t to time s < t."""
    if not 0.0 <= s < t <= 1.0:
        raise ValueError(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    alpha_s, beta_s, eta_s = kernel.coefficients(sched, s)
    xhat0 = denoiser.denoise(x_t, t)
    xhat1 = denoiser.noise_predict(x_t, t)
    return TransitionParams(alpha_s * xhat0 + beta_s * xhat1, eta_s)


def sample_transition(params: TransitionParams, rng: RngLike) -> np.ndarray:
    """mean + std * eps.  A fresh normal is drawn even for std = 0 so that
    every step consumes the stream identically regardless of eta."""
    eps = standard_normal(rng, params.mean.shape)
    return params.mean + params.std * eps


def run_unconditional(
    denoiser: Denoiser,
    sched: Schedule,
    grid: TimeGrid,
    kernel: BridgeKernel,
    rng: RngLike,
    n_chains: int,
):
    """Run the reverse chain from x ~ N(0, I) at t = 1 down the grid.

    Returns a SampleSet of the (n_chains, d) terminal states at t = 0.
    Chains are advanced as one batch, with per-chain substreams when
    ``rng`` is a sequence of generators.
    """
    from .metrics import SampleSet

    if n_chains < 1:
        raise ValueError("n_chains must be positive")
    x = standard_normal(rng, (n_chains, _probe_dim(denoiser)))
    knots = grid.knots
    for k in range(grid.num_steps, 0, -1):
        params = transition_params(kernel, sched, denoiser, x, knots[k - 1], knots[k])
        x = sample_transition(params, rng)
    return SampleSet(samples=x, provenance=("unconditional", "", 0))


def _probe_dim(denoiser: Denoiser) -> int:
    dim = getattr(denoiser, "dim", None)
    if dim is not None:
        return int(dim)
    prior = getattr(denoiser, "prior", None)
    if prior is not None:
        return prior.dim
    raise ValueError("denoiser does not expose its dimension")
