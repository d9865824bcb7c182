"""Training-free guided samplers for inpainting.

Five ways of biasing the reverse transitions toward the conditional law
of the clean sample given the observation:

- ``blended``: replay the noised reference on the observed support after
  every unconditional step.
- ``dps``: gradient correction of the denoiser output through the
  denoiser Jacobian, using the likelihood evaluated at the point estimate.
- ``ding``: Jacobian-free two-stage step.  A proposal z is drawn from the
  unconditional transition and only its noise prediction e enters the
  likelihood, which becomes Gaussian and linear in the new state; the
  step then samples the product of N(mean, eta_s^2 I) with that
  likelihood exactly, coordinate by coordinate, via Gaussian conjugacy.
- ``ddnm``: hard projection of the denoised estimate onto the data on the
  observed support (null-space component kept from the denoiser).
- ``diffpir``: proximal blend of the denoised estimate with the data,
  weighted by rho_t = lambda * alpha_t^2 / sigma_t^2.

Per-step randomness is drawn in a fixed order so that seeds are
comparable across methods: first the proposal noise (the transition
sample, or the z draws for ding), then any method-specific draw (the
blend noise for blended, the conjugate draw for ding).  blended skips its
blend draw when the mask observes nothing, which makes blended, ddnm and
diffpir chains bit-identical to the unconditional chain on an empty mask.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .bridge import (
    BridgeKernel,
    RngLike,
    TransitionParams,
    sample_transition,
    standard_normal,
    transition_params,
)
from .errors import ConfigError
from .gmm import Denoiser
from .problem import InpaintingProblem
from .schedule import Schedule, TimeGrid, eval_schedule

METHODS = ("blended", "dps", "ding", "ddnm", "diffpir")

# fixed per-method stream offsets: chain j of method m draws from the
# substream seeded by (master seed, METHOD_CODES[m], j)
METHOD_CODES = {name: code for code, name in enumerate(METHODS, start=1)}


@dataclass(frozen=True)
class SamplerConfig:
    """Method selection plus the knobs the step functions read.

    Fields that a method does not use are ignored by it (ddnm and blended
    read no gamma, only ding reads ding_nz, and so on).
    """

    method: str
    grid: TimeGrid
    eta: float = 1.0
    gamma: float = 0.1
    dps_scale: float = 1.0
    diffpir_lambda: float = 1.0
    ding_nz: int = 1
    final_replacement: bool = True
    seed: int = 0
    n_chains: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta must lie in [0, 1]")
        for name in ("gamma", "dps_scale", "diffpir_lambda"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.ding_nz < 1:
            raise ConfigError("ding_nz must be a positive integer")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be a positive integer")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def digest(self) -> str:
        """Short stable hash of the configuration, for provenance records."""
        knots = np.asarray(self.grid.knots)
        payload = "|".join(
            [
                self.method,
                knots.tobytes().hex(),
                repr(
                    (
                        self.eta,
                        self.gamma,
                        self.dps_scale,
                        self.diffpir_lambda,
                        self.ding_nz,
                        self.final_replacement,
                        self.seed,
                        self.n_chains,
                    )
                ),
            ]
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


@dataclass
class Trajectory:
    """Chain diagnostics in simulation order (time 1 down to 0)."""

    times: np.ndarray
    states: np.ndarray
    denoised: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def _pair_transition(
    kernel: BridgeKernel, sched: Schedule, s: float, xhat0: np.ndarray, xhat1: np.ndarray
) -> TransitionParams:
    alpha_s, beta_s, eta_s = kernel.coefficients(sched, s)
    return TransitionParams(alpha_s * xhat0 + beta_s * xhat1, eta_s)


def _check_step_times(s: float, t: float) -> None:
    if not 0.0 <= s < t <= 1.0:
        raise ValueError(f"need 0 <= s < t <= 1, got s={s}, t={t}")


# ---------------------------------------------------------------------------
# blended
# ---------------------------------------------------------------------------


def step_blended(
    x_t: np.ndarray,
    s: float,
    t: float,
    problem: InpaintingProblem,
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
    rng: RngLike,
) -> np.ndarray:
    """Unconditional step, then the noised reference replayed on the support."""
    _check_step_times(s, t)
    if problem.x_star is None:
        raise ValueError("blended requires the reference x_star on the problem")
    x_s = sample_transition(transition_params(kernel, sched, denoiser, x_t, s, t), rng)
    if problem.mask.observed_count == 0:
        return x_s
    alpha_s, sigma_s = eval_schedule(sched, s)
    eps = standard_normal(rng, x_s.shape)
    replay = alpha_s * problem.x_star + sigma_s * eps
    return np.where(problem.mask.m == 1, replay, x_s)


# ---------------------------------------------------------------------------
# dps
# ---------------------------------------------------------------------------


def dps_transition(
    x_t: np.ndarray,
    s: float,
    t: float,
    problem: InpaintingProblem,
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
    cfg: SamplerConfig,
) -> TransitionParams:
    """Transition with the denoiser corrected along the likelihood gradient.

    The correction is x0' = x0_hat + zeta * (sigma_t^2 / alpha_t) * J^T g
    with g the masked residual scaled by 1/gamma^2.  At t = 1 exactly
    (alpha_t = 0) the scale is evaluated one-sidedly at the first interior
    grid point, i.e. at s of that step.
    """
    _check_step_times(s, t)
    if not denoiser.has_jacobian:
        raise ValueError("dps requires a denoiser that exposes a Jacobian")
    alpha_t, sigma_t = eval_schedule(sched, t)
    xhat0 = denoiser.denoise(x_t, t)
    jac = denoiser.jacobian(x_t, t)
    m = problem.mask.m
    resid = m * (problem.y - m * xhat0)
    grad = np.einsum("...ij,...i->...j", jac, resid) / cfg.gamma**2
    alpha_eval, sigma_eval = (alpha_t, sigma_t) if alpha_t > 0 else eval_schedule(sched, s)
    xhat0 = xhat0 + cfg.dps_scale * (sigma_eval**2 / alpha_eval) * grad
    xhat1 = (x_t - alpha_t * xhat0) / sigma_t if sigma_t > 0 else np.zeros_like(x_t)
    return _pair_transition(kernel, sched, s, xhat0, xhat1)


def step_dps(
    x_t: np.ndarray,
    s: float,
    t: float,
    problem: InpaintingProblem,
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
    cfg: SamplerConfig,
    rng: RngLike,
) -> np.ndarray:
    return sample_transition(dps_transition(x_t, s, t, problem, kernel, sched, denoiser, cfg), rng)


# ---------------------------------------------------------------------------
# ding
# ---------------------------------------------------------------------------


def conjugate_update(
    prior_mean: np.ndarray,
    prior_var: float,
    obs: np.ndarray,
    obs_var: np.ndarray | float,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance of a Gaussian mean under a Gaussian
    observation, coordinatewise."""
    post_var = prior_var * obs_var / (prior_var + obs_var)
    post_mean = (obs_var * prior_mean + prior_var * obs) / (prior_var + obs_var)
    return post_mean, post_var


def ding_posterior(
    mean: np.ndarray,
    eta_s: float,
    e: np.ndarray,
    problem: InpaintingProblem,
    alpha_s: float,
    sigma_s: float,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate law of the conjugate step given the noise estimate e.

    On the observed support each coordinate i sees the pseudo-observation
    u_i = alpha_s * y_i + sigma_s * e_i with variance alpha_s^2 gamma^2,
    conjugated against the prior N(mean_i, eta_s^2); off the support the
    prior is returned untouched.  Returns (posterior mean, posterior std),
    both broadcast to the shape of ``mean``.
    """
    m = problem.mask.m
    u = alpha_s * problem.y + sigma_s * e
    post_mean, post_var = conjugate_update(mean, eta_s**2, u, (alpha_s * gamma) ** 2)
    out_mean = np.where(m == 1, post_mean, mean)
    out_std = np.where(m == 1, np.sqrt(post_var), eta_s)
    return out_mean, np.broadcast_to(out_std, np.shape(mean))


def step_ding(
    x_t: np.ndarray,
    s: float,
    t: float,
    problem: InpaintingProblem,
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
    cfg: SamplerConfig,
    rng: RngLike,
) -> np.ndarray:
    """Jacobian-free conjugate step.

    Draw z from the unconditional transition, read the noise prediction
    e = x1_hat(z, s) (averaged over ding_nz draws), then sample the new
    state exactly from prior x likelihood with the likelihood linearized
    through z instead of the model: no differentiation anywhere.
    """
    _check_step_times(s, t)
    params = transition_params(kernel, sched, denoiser, x_t, s, t)
    nz = cfg.ding_nz
    eps = standard_normal(rng, np.shape(x_t)[:-1] + (nz, np.shape(x_t)[-1]))
    if params.std == 0.0:
        return params.mean
    z = params.mean[..., None, :] + params.std * eps
    e = denoiser.noise_predict(z, s).mean(axis=-2)
    alpha_s, sigma_s = eval_schedule(sched, s)
    post_mean, post_std = ding_posterior(
        params.mean, params.std, e, problem, alpha_s, sigma_s, cfg.gamma
    )
    return post_mean + post_std * standard_normal(rng, np.shape(x_t))


# ---------------------------------------------------------------------------
# ddnm
# ---------------------------------------------------------------------------


def ddnm_transition(
    x_t: np.ndarray,
    s: float,
    t: float,
    problem: InpaintingProblem,
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
) -> TransitionParams:
    """Transition with the denoised estimate hard-projected onto the data.

    Mask-specialized range/null-space split: observed coordinates come
    from y, unobserved from the denoiser.  Hyperparameter-free; gamma
    never enters.
    """
    _check_step_times(s, t)
    alpha_t, sigma_t = eval_schedule(sched, t)
    xhat0 = denoiser.denoise(x_t, t)
    m = problem.mask.m
    xhat0 = m * problem.y + (1.0 - m) * xhat0
    xhat1 = (x_t - alpha_t * xhat0) / sigma_t if sigma_t > 0 else np.zeros_like(x_t)
    return _pair_transition(kernel, sched, s, xhat0, xhat1)


def step_ddnm(
    x_t: np.ndarray,
    s: float,
    t: float,
    problem: InpaintingProblem,
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
    rng: RngLike,
) -> np.ndarray:
    return sample_transition(ddnm_transition(x_t, s, t, problem, kernel, sched, denoiser), rng)


# ---------------------------------------------------------------------------
# diffpir
# ---------------------------------------------------------------------------


def diffpir_transition(
    x_t: np.ndarray,
    s: float,
    t: float,
    problem: InpaintingProblem,
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
    cfg: SamplerConfig,
) -> TransitionParams:
    """Transition with a data-proximal denoiser.

    Observed coordinates are pulled toward y with weight 1/gamma^2 against
    rho_t = lambda * alpha_t^2 / sigma_t^2; sigma_t = 0 is the
    rho -> infinity limit where the pull vanishes.  Hyperparameters are
    this laboratory's calibration, not taken from any reference setup.
    """
    _check_step_times(s, t)
    alpha_t, sigma_t = eval_schedule(sched, t)
    xhat0 = denoiser.denoise(x_t, t)
    m = problem.mask.m
    if sigma_t > 0:
        rho_t = cfg.diffpir_lambda * alpha_t**2 / sigma_t**2
        pulled = (problem.y / cfg.gamma**2 + rho_t * xhat0) / (1.0 / cfg.gamma**2 + rho_t)
        xhat0 = np.where(m == 1, pulled, xhat0)
        xhat1 = (x_t - alpha_t * xhat0) / sigma_t
    else:
        xhat1 = np.zeros_like(x_t)
    return _pair_transition(kernel, sched, s, xhat0, xhat1)


def step_diffpir(
    x_t: np.ndarray,
    s: float,
    t: float,
    problem: InpaintingProblem,
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
    cfg: SamplerConfig,
    rng: RngLike,
) -> np.ndarray:
    return sample_transition(
        diffpir_transition(x_t, s, t, problem, kernel, sched, denoiser, cfg), rng
    )


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def chain_rngs(seed: int, method: str, chain_indices) -> list[np.random.Generator]:
    """One substream per chain, a pure function of (seed, method, chain index)."""
    code = METHOD_CODES[method]
    return [
        np.random.default_rng(np.random.SeedSequence((seed, code, int(j))))
        for j in chain_indices
    ]


def _apply_step(
    method: str,
    x: np.ndarray,
    s: float,
    t: float,
    problem: InpaintingProblem,
    kernel: BridgeKernel,
    sched: Schedule,
    denoiser: Denoiser,
    cfg: SamplerConfig,
    rng: RngLike,
) -> np.ndarray:
    if method == "blended":
        return step_blended(x, s, t, problem, kernel, sched, denoiser, rng)
    if method == "dps":
        return step_dps(x, s, t, problem, kernel, sched, denoiser, cfg, rng)
    if method == "ding":
        return step_ding(x, s, t, problem, kernel, sched, denoiser, cfg, rng)
    if method == "ddnm":
        return step_ddnm(x, s, t, problem, kernel, sched, denoiser, rng)
    if method == "diffpir":
        return step_diffpir(x, s, t, problem, kernel, sched, denoiser, cfg, rng)
    raise ConfigError(f"unknown method {method!r}")


def run_conditional(
    problem: InpaintingProblem,
    denoiser: Denoiser,
    sched: Schedule,
    cfg: SamplerConfig,
    record_trajectories: bool = False,
    chain_indices=None,
):
    """Run the selected guided sampler over all chains.

    Chains start at x ~ N(0, I), walk the grid backward, and (with
    final_replacement on) have their observed coordinates overwritten by
    y at the end.  Deterministic given (seed, config).  Returns a
    SampleSet and the recorded trajectories (empty list unless requested).

    ``chain_indices`` restricts the run to a subset of chains (used to
    split a batch across workers); chain j produces the same draw either
    way because its stream depends only on (seed, method, j).
    """
    from .metrics import SampleSet

    kernel = BridgeKernel(cfg.eta)
    knots = cfg.grid.knots
    if chain_indices is None:
        chain_indices = range(cfg.n_chains)
    n, d = len(chain_indices), problem.mask.dim
    rngs = chain_rngs(cfg.seed, cfg.method, chain_indices)
    x = standard_normal(rngs, (n, d))

    times, states, denoised = [], [], []

    def record(tk: float, state: np.ndarray):
        if record_trajectories:
            times.append(tk)
            states.append(state.copy())
            denoised.append(denoiser.denoise(state, tk))

    record(knots[-1], x)
    for k in range(cfg.grid.num_steps, 0, -1):
        x = _apply_step(
            cfg.method, x, knots[k - 1], knots[k], problem, kernel, sched, denoiser, cfg, rngs
        )
        if k > 1:
            record(knots[k - 1], x)
    if cfg.final_replacement:
        x = np.where(problem.mask.m == 1, problem.y, x)
    record(knots[0], x)

    trajectories = []
    if record_trajectories:
        times_arr = np.array(times)
        states_arr = np.stack(states)  # (K+1, n, d)
        den_arr = np.stack(denoised)
        trajectories = [
            Trajectory(times_arr, states_arr[:, j], den_arr[:, j]) for j in range(n)
        ]
    sample_set = SampleSet(samples=x, provenance=(cfg.method, cfg.digest(), cfg.seed))
    return sample_set, trajectories
