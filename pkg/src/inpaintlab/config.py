"""Flat key = value experiment configuration.

The config file is plain text, one ``key = value`` pair per line, ``#``
comments, no nesting in the syntax (dots in keys carry the structure), so
no language-specific serialization is assumed.  See the README for the
full schema; the shape is:

    prior.component.0.weight = 0.5
    prior.component.0.mean   = -2, -2, -2, -2
    prior.component.0.cov    = 1, 1, 1, 1        # d values: diagonal, d*d: full
    schedule        = linear-flow
    grid.k          = 100
    grid.spacing    = uniform
    eta             = 0.8
    gamma           = 0.1
    n_chains        = 4000
    seed            = 0
    out_dir         = results
    methods         = ding, dps, ddnm
    method.ding.gamma = 0.05                     # per-method overrides
    mask.inline     = 1, 1, 0, 0                 # or mask.pgm = path
    xstar.inline    = 0.3, -1.2, 0.0, 0.4        # or xstar.dsmp = path (row 0)

A prior may instead come from ``prior.csv = file``: one component per
row, ``weight, mean_0..mean_{d-1}, var_0..var_{d-1}`` (diagonal layout).
Parse errors report the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .gmm import GaussianMixture
from .guidance import METHODS, SamplerConfig
from .io import read_pgm_mask, read_samples
from .problem import InpaintingProblem, MaskOperator, make_observation
from .schedule import Schedule, TimeGrid, make_grid

_BOOL_WORDS = {"on": True, "true": True, "1": True, "yes": True,
               "off": False, "false": False, "0": False, "no": False}

_GLOBAL_KEYS = {
    "schedule", "grid.k", "grid.spacing", "eta", "gamma", "zeta", "lambda",
    "ding_nz", "final_replacement", "n_chains", "seed", "out_dir", "methods",
    "mask.inline", "mask.pgm", "xstar.inline", "xstar.dsmp", "prior.csv",
    "observation.noisy", "sw2.projections", "sw2.seed", "cpsnr.peak",
    "trajectories", "oracle.n",
}
_METHOD_OVERRIDE_KEYS = {"eta", "gamma", "zeta", "lambda", "ding_nz", "final_replacement"}


def parse_flat(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines into a flat dict, with line diagnostics."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _floats(value: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in value.replace(",", " ").split()])
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {value!r}: {exc}") from None


def _get_float(pairs: dict[str, str], key: str, default: float) -> float:
    if key not in pairs:
        return default
    try:
        return float(pairs[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {pairs[key]!r}") from None


def _get_int(pairs: dict[str, str], key: str, default: int) -> int:
    if key not in pairs:
        return default
    try:
        return int(pairs[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {pairs[key]!r}") from None


def _get_bool(pairs: dict[str, str], key: str, default: bool) -> bool:
    if key not in pairs:
        return default
    word = pairs[key].lower()
    if word not in _BOOL_WORDS:
        raise ConfigError(f"{key}: expected on/off, got {pairs[key]!r}")
    return _BOOL_WORDS[word]


def _load_prior_csv(path: Path) -> GaussianMixture:
    rows = [
        _floats(line.split("#", 1)[0])
        for line in path.read_text().splitlines()
        if line.split("#", 1)[0].strip()
    ]
    if not rows:
        raise ConfigError(f"{path}: empty prior CSV")
    width = rows[0].size
    if width % 2 == 0 or width < 3:
        raise ConfigError(f"{path}: rows must hold weight, d means, d variances")
    d = (width - 1) // 2
    if any(r.size != width for r in rows):
        raise ConfigError(f"{path}: ragged rows")
    mat = np.stack(rows)
    return GaussianMixture(mat[:, 0], mat[:, 1 : 1 + d], mat[:, 1 + d :])


def _load_prior_inline(pairs: dict[str, str]) -> GaussianMixture:
    indices = sorted(
        {
            int(key.split(".")[2])
            for key in pairs
            if key.startswith("prior.component.")
        }
    )
    if not indices:
        raise ConfigError("no prior given (prior.csv or prior.component.* keys)")
    if indices != list(range(len(indices))):
        raise ConfigError(f"prior component indices must be 0..{len(indices) - 1}")
    weights, means, covs = [], [], []
    for i in indices:
        base = f"prior.component.{i}"
        for suffix in ("weight", "mean", "cov"):
            if f"{base}.{suffix}" not in pairs:
                raise ConfigError(f"missing key {base}.{suffix}")
        weights.append(float(pairs[f"{base}.weight"]))
        means.append(_floats(pairs[f"{base}.mean"]))
        covs.append(_floats(pairs[f"{base}.cov"]))
    d = means[0].size
    if any(m.size != d for m in means):
        raise ConfigError("prior component means have inconsistent dimensions")
    cov_sizes = {c.size for c in covs}
    if not cov_sizes <= {d, d * d}:
        raise ConfigError(f"prior covariances must have {d} (diagonal) or {d * d} (full) entries")
    if cov_sizes == {d}:
        cov_arr = np.stack(covs)
    else:  # at least one full matrix: promote any diagonals
        cov_arr = np.stack(
            [c.reshape(d, d) if c.size == d * d else np.diag(c) for c in covs]
        )
    try:
        return GaussianMixture(np.array(weights), np.stack(means), cov_arr)
    except ValueError as exc:
        raise ConfigError(f"invalid prior: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    prior: GaussianMixture
    sched: Schedule
    grid: TimeGrid
    methods: tuple[str, ...]
    mask: MaskOperator
    x_star: np.ndarray
    gamma: float
    eta: float
    zeta: float
    lam: float
    ding_nz: int
    final_replacement: bool
    n_chains: int
    seed: int
    out_dir: Path
    noisy_observation: bool = False
    sw2_projections: int = 128
    sw2_seed: int | None = None
    cpsnr_peak: float = 1.0
    record_trajectories: bool = False
    oracle_n: int | None = None
    overrides: dict = field(default_factory=dict)

    def sampler_config(self, method: str) -> SamplerConfig:
        ov = self.overrides.get(method, {})
        try:
            return SamplerConfig(
                method=method,
                grid=self.grid,
                eta=ov.get("eta", self.eta),
                gamma=ov.get("gamma", self.gamma),
                dps_scale=ov.get("zeta", self.zeta),
                diffpir_lambda=ov.get("lambda", self.lam),
                ding_nz=ov.get("ding_nz", self.ding_nz),
                final_replacement=ov.get("final_replacement", self.final_replacement),
                seed=self.seed,
                n_chains=self.n_chains,
            )
        except ConfigError as exc:
            raise ConfigError(f"method {method}: {exc}") from None

    def problem(self, rng: np.random.Generator | None = None) -> InpaintingProblem:
        return make_observation(
            self.x_star, self.mask, self.gamma, rng=rng, noisy=self.noisy_observation
        )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    pairs = parse_flat(path.read_text())
    base = path.parent

    for key in pairs:
        if key in _GLOBAL_KEYS or key.startswith("prior.component."):
            continue
        parts = key.split(".")
        if len(parts) == 3 and parts[0] == "method":
            if parts[1] not in METHODS:
                raise ConfigError(f"{key}: unknown method {parts[1]!r}")
            if parts[2] not in _METHOD_OVERRIDE_KEYS:
                raise ConfigError(f"{key}: unknown override {parts[2]!r}")
            continue
        raise ConfigError(f"unknown config key {key!r}")

    if "prior.csv" in pairs:
        prior = _load_prior_csv(base / pairs["prior.csv"])
    else:
        prior = _load_prior_inline(pairs)
    d = prior.dim

    sched_kind = pairs.get("schedule", "linear-flow")
    try:
        sched = Schedule(sched_kind)
        grid = make_grid(_get_int(pairs, "grid.k", 50), pairs.get("grid.spacing", "uniform"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    if "mask.inline" in pairs:
        mask_vals = _floats(pairs["mask.inline"])
    elif "mask.pgm" in pairs:
        mask_vals = read_pgm_mask(base / pairs["mask.pgm"]).grid.reshape(-1)
    else:
        raise ConfigError("no mask given (mask.inline or mask.pgm)")
    if mask_vals.size != d:
        raise ConfigError(f"mask has {mask_vals.size} entries, prior dimension is {d}")
    try:
        mask = MaskOperator(mask_vals)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    if "xstar.inline" in pairs:
        x_star = _floats(pairs["xstar.inline"])
    elif "xstar.dsmp" in pairs:
        x_star = read_samples(base / pairs["xstar.dsmp"])[0]
    else:
        raise ConfigError("no reference given (xstar.inline or xstar.dsmp)")
    if x_star.size != d:
        raise ConfigError(f"x_star has {x_star.size} entries, prior dimension is {d}")

    if "methods" not in pairs:
        raise ConfigError("no methods listed")
    methods = tuple(m.strip() for m in pairs["methods"].split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
    if not methods:
        raise ConfigError("methods list is empty")

    overrides: dict[str, dict] = {}
    for key, value in pairs.items():
        parts = key.split(".")
        if len(parts) == 3 and parts[0] == "method":
            _, mname, oname = parts
            slot = overrides.setdefault(mname, {})
            if oname == "final_replacement":
                slot[oname] = _get_bool(pairs, key, True)
            elif oname == "ding_nz":
                slot[oname] = _get_int(pairs, key, 1)
            else:
                slot[oname] = _get_float(pairs, key, 0.0)

    cfg = ExperimentConfig(
        prior=prior,
        sched=sched,
        grid=grid,
        methods=methods,
        mask=mask,
        x_star=x_star,
        gamma=_get_float(pairs, "gamma", 0.1),
        eta=_get_float(pairs, "eta", 1.0),
        zeta=_get_float(pairs, "zeta", 1.0),
        lam=_get_float(pairs, "lambda", 1.0),
        ding_nz=_get_int(pairs, "ding_nz", 1),
        final_replacement=_get_bool(pairs, "final_replacement", True),
        n_chains=_get_int(pairs, "n_chains", 100),
        seed=_get_int(pairs, "seed", 0),
        # inputs resolve against the config file; outputs against the cwd
        out_dir=Path(pairs.get("out_dir", "results")),
        noisy_observation=_get_bool(pairs, "observation.noisy", False),
        sw2_projections=_get_int(pairs, "sw2.projections", 128),
        sw2_seed=_get_int(pairs, "sw2.seed", 0) if "sw2.seed" in pairs else None,
        cpsnr_peak=_get_float(pairs, "cpsnr.peak", 1.0),
        record_trajectories=_get_bool(pairs, "trajectories", False),
        oracle_n=_get_int(pairs, "oracle.n", 0) if "oracle.n" in pairs else None,
        overrides=overrides,
    )
    for m in methods:
        cfg.sampler_config(m)  # validate overrides eagerly
    return cfg
