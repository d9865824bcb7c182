"""Inpainting problem: mask operator, observation, Gaussian consistency term.

The observation is y = m * x_star on the coordinates the binary mask
keeps (1 = observed / preserved), inducing

    log l(y | x0) = -||y - m * x0||^2 / (2 gamma^2)

up to an additive constant that is dropped throughout.  gamma acts as a
consistency temperature: smaller values bind reconstructions more tightly
to the observed coordinates.  The likelihood never looks at masked
coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bridge import RngLike, standard_normal


@dataclass(frozen=True)
class MaskOperator:
    """Binary coordinate mask; 1 marks an observed (preserved) entry."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m)
        if not np.all(np.isin(m, (0, 1))):
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "m", m.astype(float))

    @property
    def observed_count(self) -> int:
        return int(self.m.sum())

    @property
    def dim(self) -> int:
        return self.m.size

    @property
    def observed_idx(self) -> np.ndarray:
        return np.flatnonzero(self.m)


@dataclass(frozen=True)
class InpaintingProblem:
    mask: MaskOperator
    y: np.ndarray
    gamma: float
    x_star: np.ndarray | None = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if self.gamma <= 0:
            raise ValueError("gamma must be strictly positive")
        if y.shape != self.mask.m.shape:
            raise ValueError("observation and mask dimensions differ")
        if np.any(y[self.mask.m == 0] != 0):
            raise ValueError("y must be zero on unobserved coordinates")
        if self.x_star is not None:
            object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float))


def make_observation(
    x_star: np.ndarray,
    mask: MaskOperator,
    gamma: float,
    rng: RngLike | None = None,
    noisy: bool = False,
) -> InpaintingProblem:
    """Observe x_star through the mask.

    Noiseless by default (gamma is a consistency temperature, not a
    measured noise level); with ``noisy`` set, gamma-scaled Gaussian noise
    is added on the observed coordinates only.
    """
    if gamma <= 0:
        raise ValueError("gamma must be strictly positive")
    x_star = np.asarray(x_star, dtype=float)
    if mask.observed_count == 0:
        warnings.warn("all-zero mask: posterior equals the prior", stacklevel=2)
    y = mask.m * x_star
    if noisy:
        if rng is None:
            raise ValueError("noisy observation requires an rng")
        y = y + gamma * mask.m * standard_normal(rng, x_star.shape)
    return InpaintingProblem(mask=mask, y=y, gamma=gamma, x_star=x_star)


def log_likelihood(problem: InpaintingProblem, x0: np.ndarray) -> np.ndarray:
    """-||y - m * x0||^2 / (2 gamma^2), constant dropped.

    Exactly invariant to any change of x0 off the observed support.
    Accepts (d,) points or (n, d) batches.
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    resid = problem.y - problem.mask.m * x0
    return -0.5 * np.sum(resid**2, axis=-1) / problem.gamma**2
