"""Command-line driver.

    sssampling gen grid3d 6 6 6 --seed 1 --out grid.ising
    sssampling sample --config run.cfg --out draws.csv
    sssampling diag draws.csv --problem grid.ising --out scatter.csv
    sssampling mcmc --config chain.cfg --out chain.csv
    sssampling suggest-params --m 200 --m0 100 --n0 2000 --theta0 0.05

Exit codes: 0 success, 2 bad configuration or input, 3 refused because an
exact computation would be too large.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import states
from .heuristic import SaSchedule, make_heuristic, request_seed
from .io import (
    FormatError,
    RunConfig,
    format_problem,
    format_table,
    generator_comment,
    read_problem,
    read_table,
    summary_float,
)
from .ising import (
    FAMILIES,
    IsingModel,
    SizeGuardError,
    energy,
    enumerate_distribution,
    exact_logz_chain,
    exact_logz_independent,
    generate_problem,
    is_chain,
)
from .montecarlo import McmcState, boltzmann_fit, estimate_logz, mcmc_step, weigh, weight_diagnostics
from .sampler import DrawResult, SamplerParams, StateSpaceSampler, scp_basic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIZE = 3

SAMPLE_COLUMNS = ["index", "state", "energy", "log_q", "refresh_calls", "fallback"]
CHAIN_COLUMNS = ["step", "state", "energy", "accepted"]
_TREE_SALT = 0x7265657354524545


def _parse_size(text: str):
    parts = [int(p) for p in str(text).replace("x", " ").split()]
    return parts[0] if len(parts) == 1 else tuple(parts)


def build_model(config: RunConfig) -> IsingModel:
    if config.get("problem"):
        return read_problem(config.get("problem"))
    try:
        return generate_problem(
            config.get("problem.family"),
            _parse_size(config.get("problem.size")),
            config.get("problem.seed", 0),
            periodic=config.get("problem.periodic", True),
        )
    except ValueError as exc:
        raise FormatError(str(exc), None, config.source) from None


def build_params(config: RunConfig) -> SamplerParams:
    try:
        return SamplerParams(**config.sampler_kwargs())
    except ValueError as exc:
        raise FormatError(str(exc), None, config.source) from None


def build_heuristic(config: RunConfig, beta: float):
    name = config.get("heuristic", "sa")
    try:
        schedule = SaSchedule(**{"beta_end": beta, **config.schedule_kwargs()})
        return make_heuristic(name, beta, schedule)
    except ValueError as exc:
        raise FormatError(str(exc), None, config.source) from None


def tree_seed(master: int, tree: int, trees: int) -> int:
    """Seed of one of several independent trees; a single tree keeps the master seed."""
    return master if trees == 1 else request_seed(master ^ _TREE_SALT, tree)


def _run_tree(job) -> list[DrawResult]:
    model, heuristic, params, count = job
    return StateSpaceSampler(model, heuristic, params).draws(count)


def run_sss(model, heuristic, params: SamplerParams, draws: int, trees: int = 1, threads: int = 1) -> list[DrawResult]:
    """Draws split as evenly as possible over ``trees`` independent trees, in tree order.

    The result does not depend on ``threads``.
    """
    shares = [draws // trees + (1 if k < draws % trees else 0) for k in range(trees)]
    jobs = [(model, heuristic, params.replace(seed=tree_seed(params.seed, k, trees)), c) for k, c in enumerate(shares)]
    if threads > 1 and trees > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_run_tree, jobs))
    else:
        parts = [_run_tree(job) for job in jobs]
    return [d for part in parts for d in part]


def run_scp(model, heuristic, params: SamplerParams, draws: int) -> list[DrawResult]:
    rng = np.random.default_rng(params.seed)
    return [scp_basic(model, heuristic, params, rng, counter=k * model.m) for k in range(draws)]


def sample_summary(draws: list[DrawResult], model: IsingModel, beta: float) -> dict:
    summary = {
        "draws": len(draws),
        "heuristic_calls": sum(d.refresh_calls for d in draws),
        "fallbacks": sum(int(d.fallback) for d in draws),
    }
    if len(draws) < 2:
        summary.update(log_z="nan", log_se_z="nan", relative_se_z="nan", weight_variance="nan", ess="nan")
        summary["note"] = "too few draws for estimates"
        return summary
    weighted = weigh(draws, model, beta)
    est = estimate_logz(weighted)
    diag = weight_diagnostics(weighted)
    summary.update(
        log_z=est.log_z,
        log_se_z=est.log_se,
        relative_se_z=est.relative_se,
        weight_variance=diag["variance"],
        ess=diag["ess"],
    )
    return summary


def _header(config: RunConfig, params: SamplerParams, mode: str, model: IsingModel) -> dict:
    return {"config_hash": config.digest(), "seed": params.seed, "beta": params.beta, "mode": mode, "m": model.m}


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _load_config(args) -> RunConfig:
    if not args.config:
        raise FormatError("--config is required")
    config = RunConfig.parse(args.config)
    overrides = {"seed": args.seed, "estimator": args.estimator, "branch_rule": args.branch_rule}
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    for key, value in overrides.items():
        if value is not None:
            config.set(key, value)
    config.validate()
    return config


def cmd_gen(args) -> int:
    size = args.size[0] if len(args.size) == 1 else tuple(args.size)
    if args.family == "grid3d" and len(args.size) == 1:
        size = (args.size[0],) * 3
    if args.family != "grid3d" and len(args.size) != 1:
        raise FormatError(f"family {args.family} takes a single size")
    model = generate_problem(args.family, size, args.seed, periodic=not args.open)
    _write(format_problem(model, [generator_comment(args.family, size, args.seed)]), args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    config = _load_config(args)
    model = build_model(config)
    params = build_params(config)
    heuristic = build_heuristic(config, params.beta)
    mode = config.get("mode", "sss")
    if mode == "mcmc":
        raise FormatError("mode mcmc is run by the 'mcmc' subcommand", None, config.source)
    n_draws = config.get("draws", 100)
    start = time.perf_counter()
    if mode == "sss":
        draws = run_sss(model, heuristic, params, n_draws, config.get("trees", 1), args.threads)
    else:
        draws = run_scp(model, heuristic, params, n_draws)
    wall = time.perf_counter() - start
    rows = [
        [k, states.to_string(d.state), energy(model, d.state), d.log_q, d.refresh_calls, d.fallback]
        for k, d in enumerate(draws)
    ]
    summary = sample_summary(draws, model, params.beta)
    summary["wall_time"] = round(wall, 3)
    text = format_table(_header(config, params, mode, model), SAMPLE_COLUMNS, rows, summary)
    _write(text, args.out or config.get("out"))
    return EXIT_OK


def exact_logz(model: IsingModel, beta: float) -> float:
    if not model.couplings:
        return exact_logz_independent(model, beta)
    if is_chain(model):
        return exact_logz_chain(model, beta)
    return enumerate_distribution(model, beta).log_z


def cmd_diag(args) -> int:
    table = read_table(args.samples)
    beta = args.beta if args.beta is not None else float(table.header.get("beta", "nan"))
    if not math.isfinite(beta):
        raise FormatError("beta is neither in the sample file nor given with --beta")
    log_q = table.floats("log_q")
    if args.problem:
        model = read_problem(args.problem)
        energies = energy(model, table.states())
        energies = np.atleast_1d(energies)
    else:
        model = None
        energies = table.floats("energy")
    if args.log_z is not None:
        log_z, origin = args.log_z, "given"
    elif args.exact:
        if model is None:
            raise FormatError("--exact needs --problem")
        log_z, origin = exact_logz(model, beta), "exact"
    else:
        log_z, origin = summary_float(table, "log_z"), "importance-sampling estimate"
        if not math.isfinite(log_z):
            lw = -beta * energies - log_q
            log_z = float(np.logaddexp.reduce(lw) - np.log(len(lw))) if len(lw) else math.nan
    fit = boltzmann_fit(energies, log_q, beta, log_z)
    summary = {
        "log_z": log_z,
        "log_z_source": origin,
        "boltzmann_slope": fit.slope,
        "boltzmann_intercept": fit.intercept,
        "fitted_slope": fit.fitted_slope,
        "fitted_intercept": fit.fitted_intercept,
        "residual_mean": fit.residual_mean,
        "residual_sd": fit.residual_sd,
    }
    rows = [[e, q] for e, q in zip(energies, log_q)]
    header = {"source": Path(args.samples).name, "beta": beta}
    _write(format_table(header, ["energy", "log_q"], rows, summary), args.out)
    return EXIT_OK


def cmd_mcmc(args) -> int:
    config = _load_config(args)
    model = build_model(config)
    params = build_params(config)
    heuristic = build_heuristic(config, params.beta)
    rng = np.random.default_rng(params.seed)
    if config.get("initial"):
        initial = states.from_string(config.get("initial"))
        try:
            states.check_spins(initial, model.m)
        except ValueError as exc:
            raise FormatError(f"initial state: {exc}", None, config.source) from None
    else:
        initial = np.where(rng.random(model.m) < 0.5, 1, -1).astype(np.int8)
    chain = McmcState.start(model, initial, params.beta)
    rows = [[0, states.to_string(chain.state), energy(model, chain.state), 1]]
    start = time.perf_counter()
    for step in range(1, config.get("steps", 1000) + 1):
        before = chain.accepted
        chain = mcmc_step(chain, model, heuristic, params, rng)
        rows.append([step, states.to_string(chain.state), energy(model, chain.state), int(chain.accepted > before)])
    summary = {
        "steps": chain.steps,
        "accepted": chain.accepted,
        "acceptance_rate": chain.acceptance_rate,
        "heuristic_calls": chain.requests,
        "wall_time": round(time.perf_counter() - start, 3),
    }
    text = format_table(_header(config, params, "mcmc", model), CHAIN_COLUMNS, rows, summary)
    _write(text, args.out or config.get("out"))
    return EXIT_OK


def suggest_params(m: int, m0: int, n0: int, theta0: float) -> tuple[int, float]:
    """Population size and KL threshold scaled from a reference system size."""
    if min(m, m0, n0) <= 0 or theta0 <= 0:
        raise ValueError("sizes and threshold must be positive")
    return math.ceil(n0 * m / m0), theta0 * m0 / m


def cmd_suggest(args) -> int:
    n, theta = suggest_params(args.m, args.m0, args.n0, args.theta0)
    print(f"n={n}\ntheta={theta!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sssampling", description="Importance sampling and MCMC from constrained heuristics.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a random problem file")
    gen.add_argument("family", choices=FAMILIES)
    gen.add_argument("size", type=int, nargs="+", help="spin count, or Lx Ly Lz for grid3d")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--periodic", action="store_true", help="periodic grid (the default)")
    gen.add_argument("--open", action="store_true", help="open grid boundaries")
    gen.add_argument("--out")
    gen.set_defaults(func=cmd_gen)

    def run_flags(p, with_mode):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--estimator", choices=("count", "rb"))
        p.add_argument("--branch-rule", dest="branch_rule", choices=("fixed", "random", "neighbour", "bisection"))
        if with_mode:
            p.add_argument("--mode", choices=("sss", "scp-basic"))

    sample = sub.add_parser("sample", help="draw scored states and summarise importance weights")
    run_flags(sample, True)
    sample.set_defaults(func=cmd_sample)

    mcmc = sub.add_parser("mcmc", help="run a Metropolis-Hastings chain with sequential-constraining proposals")
    run_flags(mcmc, False)
    mcmc.set_defaults(func=cmd_mcmc)

    diag = sub.add_parser("diag", help="energy versus log q scatter and Boltzmann-line statistics")
    diag.add_argument("samples")
    diag.add_argument("--problem")
    diag.add_argument("--beta", type=float)
    group = diag.add_mutually_exclusive_group()
    group.add_argument("--log-z", dest="log_z", type=float)
    group.add_argument("--exact", action="store_true", help="compute log Z exactly from the problem")
    diag.add_argument("--out")
    diag.set_defaults(func=cmd_diag)

    suggest = sub.add_parser("suggest-params", help="scale N and theta from a reference system size")
    suggest.add_argument("--m", type=int, required=True)
    suggest.add_argument("--m0", type=int, default=100)
    suggest.add_argument("--n0", type=int, default=2000)
    suggest.add_argument("--theta0", type=float, default=0.05)
    suggest.set_defaults(func=cmd_suggest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SizeGuardError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except (FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
