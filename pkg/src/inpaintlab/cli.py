"""Command-line harness.

Subcommands:

- ``run``: execute every method in a config file against the exact
  posterior, writing one CSV row per method plus ``.dsmp`` sample files.
- ``oracle``: dump the posterior mixture parameters (and optionally
  samples) for a config.
- ``masklift``: lift a pixel mask to a latent grid and report leakage.
- ``metrics``: score two sample files.

Exit codes: 0 success, 2 config error (also argparse usage errors),
3 I/O error, 4 numeric failure.  ``INPAINTLAB_THREADS`` splits the chains
of each method across that many worker threads; per-chain substreams make
the output independent of the scheduling.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ConfigError, NumericError
from .gmm import GMMDenoiser
from .guidance import METHODS, run_conditional
from .io import (
    read_dmsk,
    read_pgm_mask,
    read_samples,
    write_dmsk,
    write_pgm_mask,
    write_samples,
)
from .masklift import PixelMask, leakage_report, lift_mask
from .metrics import SampleSet, cpsnr, sliced_w2
from .oracle import exact_posterior
from .problem import MaskOperator


@dataclass(frozen=True)
class ResultRow:
    method: str
    k: int
    eta: float
    gamma: float
    seed: int
    sw2_to_oracle: float
    cpsnr: float
    runtime_ms: float
    n_chains: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("eta", "gamma", "sw2_to_oracle", "runtime_ms"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if math.isnan(self.cpsnr):  # +inf is the documented exact-match sentinel
            raise ValueError("cpsnr must not be NaN")

    def values(self) -> list:
        return [
            self.method, self.k, repr(self.eta), repr(self.gamma), self.seed,
            repr(self.sw2_to_oracle), repr(self.cpsnr), repr(self.runtime_ms),
            self.n_chains,
        ]


RESULT_COLUMNS = [
    "method", "K", "eta", "gamma", "seed", "sw2_to_oracle", "cpsnr",
    "runtime_ms", "n_chains",
]


def _thread_count() -> int:
    raw = os.environ.get("INPAINTLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"INPAINTLAB_THREADS must be an integer, got {raw!r}") from None


def _run_method(problem, denoiser, cfg: ExperimentConfig, method: str):
    scfg = cfg.sampler_config(method)
    threads = _thread_count()
    if threads == 1 or scfg.n_chains < 2 * threads:
        return run_conditional(
            problem, denoiser, cfg.sched, scfg, record_trajectories=cfg.record_trajectories
        )
    blocks = np.array_split(np.arange(scfg.n_chains), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(
            pool.map(
                lambda idx: run_conditional(
                    problem, denoiser, cfg.sched, scfg,
                    record_trajectories=cfg.record_trajectories,
                    chain_indices=idx,
                ),
                blocks,
            )
        )
    samples = np.concatenate([p[0].samples for p in parts])
    trajectories = [traj for p in parts for traj in p[1]]
    return SampleSet(samples, parts[0][0].provenance), trajectories


def _write_trajectories(path: Path, trajectories) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "k", "t", "coord", "x", "xhat0"])
        for j, traj in enumerate(trajectories):
            for k, t in enumerate(traj.times):
                for i in range(traj.states.shape[1]):
                    writer.writerow(
                        [j, k, repr(float(t)), i,
                         repr(float(traj.states[k, i])), repr(float(traj.denoised[k, i]))]
                    )


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Run every configured method and score it against the exact posterior.

    Writes ``results.csv`` (flushed row by row so partial results survive
    a failure), ``<method>_<seed>.dsmp`` per method, and
    ``oracle_<seed>.dsmp``.  Deterministic given the master seed except
    for the runtime column.
    """
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    obs_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0, 1)))
    problem = cfg.problem(rng=obs_rng)
    denoiser = GMMDenoiser(cfg.prior, cfg.sched)

    posterior = exact_posterior(problem, cfg.prior)
    oracle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0, 0)))
    oracle_samples = posterior.sample(cfg.oracle_n or cfg.n_chains, oracle_rng)
    write_samples(cfg.out_dir / f"oracle_{cfg.seed}.dsmp", oracle_samples)

    sw2_seed = cfg.seed if cfg.sw2_seed is None else cfg.sw2_seed
    rows: list[ResultRow] = []
    with open(cfg.out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        fh.flush()
        for method in cfg.methods:
            start = time.perf_counter()
            sample_set, trajectories = _run_method(problem, denoiser, cfg, method)
            runtime_ms = (time.perf_counter() - start) * 1000.0
            sw2 = sliced_w2(sample_set, oracle_samples, cfg.sw2_projections, sw2_seed)
            context = float(
                np.mean(
                    [
                        cpsnr(row, cfg.x_star, cfg.mask, cfg.cpsnr_peak)
                        for row in sample_set.samples
                    ]
                )
            ) if cfg.mask.observed_count else math.inf
            row = ResultRow(
                method=method,
                k=cfg.grid.num_steps,
                eta=cfg.sampler_config(method).eta,
                gamma=cfg.sampler_config(method).gamma,
                seed=cfg.seed,
                sw2_to_oracle=sw2,
                cpsnr=context,
                runtime_ms=runtime_ms,
                n_chains=cfg.n_chains,
            )
            rows.append(row)
            writer.writerow(row.values())
            fh.flush()
            write_samples(cfg.out_dir / f"{method}_{cfg.seed}.dsmp", sample_set.samples)
            if cfg.record_trajectories:
                _write_trajectories(
                    cfg.out_dir / f"{method}_{cfg.seed}_trajectories.csv", trajectories
                )
    return rows


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    rows = run_experiment(cfg)
    for row in rows:
        print(f"{row.method}: sw2_to_oracle={row.sw2_to_oracle:.6f} cpsnr={row.cpsnr:.4f}")
    print(f"wrote {cfg.out_dir / 'results.csv'}")
    return 0


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    problem = cfg.problem(
        rng=np.random.default_rng(np.random.SeedSequence((seed, 0, 1)))
    )
    posterior = exact_posterior(problem, cfg.prior)
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        d = posterior.dim
        cov_cols = (
            [f"var_{i}" for i in range(d)]
            if posterior.is_diagonal
            else [f"cov_{i}_{j}" for i in range(d) for j in range(d)]
        )
        writer.writerow(["weight"] + [f"mean_{i}" for i in range(d)] + cov_cols)
        for k in range(posterior.n_components):
            cov = posterior.covariances[k].reshape(-1)
            writer.writerow(
                [repr(float(posterior.weights[k]))]
                + [repr(float(v)) for v in posterior.means[k]]
                + [repr(float(v)) for v in cov]
            )
    if args.samples:
        n = args.n or cfg.oracle_n or cfg.n_chains
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0, 0)))
        write_samples(args.samples, posterior.sample(n, rng))
    print(f"wrote {out}")
    return 0


def _read_mask_file(path: str) -> PixelMask:
    if path.endswith(".dmsk"):
        return read_dmsk(path)
    return read_pgm_mask(path)


def _cmd_masklift(args) -> int:
    mask = _read_mask_file(args.infile)
    factors = [int(f) for f in args.factors.split(",")]
    if len(factors) == 2:
        factors = [1] + factors
    if len(factors) != 3:
        raise ConfigError("--factors takes f_h,f_w or f_t,f_h,f_w")
    f_t, f_h, f_w = factors
    r = args.dilate if args.dilate is not None else f_h // 2
    latent = lift_mask(mask, (f_t, f_h, f_w), r, args.dilate_t)
    fmt = args.format or ("dmsk" if args.out.endswith(".dmsk") else "pgm")
    if fmt == "pgm":
        write_pgm_mask(args.out, PixelMask(latent.grid))
    elif fmt == "dmsk":
        write_dmsk(args.out, PixelMask(latent.grid))
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    report = leakage_report(mask, latent)
    lines = [
        "edited_pixels_in_observed_cells,observed_pixels_in_edited_cells",
        f"{report.edited_pixels_in_observed_cells},{report.observed_pixels_in_edited_cells}",
    ]
    text = "\n".join(lines) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_metrics(args) -> int:
    a = read_samples(args.a)
    b = read_samples(args.b)
    if args.metric == "sw2":
        value = sliced_w2(a, b, args.projections, args.seed)
    elif args.metric == "cpsnr":
        if not args.mask:
            raise ConfigError("cpsnr needs --mask")
        mask = MaskOperator(_read_mask_file(args.mask).grid.reshape(-1))
        value = float(np.mean([cpsnr(row, b[0], mask, args.peak) for row in a]))
    else:
        raise ConfigError(f"unknown metric {args.metric!r}")
    line = f"{args.metric},{value!r},{a.shape[0]},{args.seed}\n"
    header = "metric,value,n,seed\n"
    if args.out:
        Path(args.out).write_text(header + line)
    else:
        sys.stdout.write(header + line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inpaintlab",
        description="Posterior-sampling laboratory for inpainting with analytic priors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured methods and score them")
    p_run.add_argument("--config", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser("oracle", help="dump the exact posterior mixture")
    p_oracle.add_argument("--config", required=True)
    p_oracle.add_argument("--out", required=True, help="posterior parameter CSV")
    p_oracle.add_argument("--samples", help="also draw posterior samples to this .dsmp")
    p_oracle.add_argument("--n", type=int, help="number of posterior samples")
    p_oracle.add_argument("--seed", type=int, help="override the config seed")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_lift = sub.add_parser("masklift", help="lift a pixel mask to a latent grid")
    p_lift.add_argument("--in", dest="infile", required=True, help="PGM or .dmsk mask")
    p_lift.add_argument("--factors", required=True, help="f_h,f_w or f_t,f_h,f_w")
    p_lift.add_argument("--dilate", type=int, help="spatial radius (default f_h//2)")
    p_lift.add_argument("--dilate-t", type=int, default=0, help="temporal radius")
    p_lift.add_argument("--out", required=True)
    p_lift.add_argument("--format", choices=("pgm", "dmsk"))
    p_lift.add_argument("--report", help="leakage CSV (default: stdout)")
    p_lift.set_defaults(func=_cmd_masklift)

    p_met = sub.add_parser("metrics", help="score two sample files")
    p_met.add_argument("--a", required=True)
    p_met.add_argument("--b", required=True)
    p_met.add_argument("--metric", default="sw2", choices=("sw2", "cpsnr"))
    p_met.add_argument("--projections", type=int, default=128)
    p_met.add_argument("--seed", type=int, default=0)
    p_met.add_argument("--mask", help="mask file for cpsnr")
    p_met.add_argument("--peak", type=float, default=1.0)
    p_met.add_argument("--out", help="write the CSV row here instead of stdout")
    p_met.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
