"""Experiment assembly shared by the CLI and the acceptance tests."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .chain import (
    ChainConfig,
    ChainSample,
    run_annealing,
    run_mf_chain,
    run_sf_chain,
    run_two_stage_chain,
    thin_samples,
)
from .estimator import CostLedger, Estimator, LevelCursor
from .io import (
    ExperimentConfig,
    load_coal_dataset,
    load_lynx_hare,
    write_json,
    write_samples,
    write_summary,
)
from .models import (
    GPRegressionModel,
    HeatPDEProblem,
    LGCPModel,
    LotkaVolterraModel,
    ToyConjugateModel,
    generate_gp_data,
    generate_lv_data,
    generate_toy_data,
)
from .numerics import Grid1D, cg_solve, ode_solve, trapezoid
from .samplers import (
    EllipticalSliceKernel,
    GaussianRandomWalk,
    LogarithmicSchedule,
    MetropolisKernel,
    SliceKernel,
    SliceSpec,
    TruncatedNormal,
)
from .truncation import Geometric

THREADS_ENV = "MFMC_THREADS"


def seeds(seed: int, chains: int) -> tuple[np.random.SeedSequence, list[np.random.SeedSequence]]:
    """Data seed and per-chain seeds; chain ``i`` does not depend on ``chains``."""
    data_ss, chain_root = np.random.SeedSequence(seed).spawn(2)
    return data_ss, chain_root.spawn(chains)


@dataclass
class Setup:
    model: object
    functionals: dict
    dim: int


def build_model(cfg: ExperimentConfig) -> Setup:
    block = cfg.model_block()
    data_rng = np.random.default_rng(seeds(cfg.seed, 1)[0])
    if cfg.experiment == "toy":
        data, _ = generate_toy_data(data_rng, block.n)
        funcs = {"theta_0_mean": lambda t: t[0], "theta_0_sq": lambda t: t[0] ** 2}
        return Setup(ToyConjugateModel(data), funcs, 1)
    if cfg.experiment == "gp":
        X, y = generate_gp_data(data_rng, block.n, block.lengthscale0, block.noise_var, block.x_range)
        model = GPRegressionModel(X, y, block.noise_var, block.nu0, block.nu1)
        funcs = {"theta_0_mean": lambda t: t[0], "theta_0_sq": lambda t: t[0] ** 2}
        return Setup(model, funcs, 1)
    if cfg.experiment == "lgcp":
        events = load_coal_dataset(block.data_path)
        model = LGCPModel(events, block.domain, block.lengthscale, block.variance, block.offset)
        W = model.predictive_weights(block.report_at)
        funcs = {f"intensity_{x:g}": (lambda f, w=w: float(np.exp(w @ f)))
                 for x, w in zip(block.report_at, W)}
        return Setup(model, funcs, model.dim)
    if cfg.experiment == "lv":
        if block.data_path is not None:
            years, hare, lynx = load_lynx_hare(block.data_path)
            t_obs = years - years[0]
            y = np.column_stack([hare, lynx])
            # first row supplies the known initial condition
            z0 = block.z0 or (hare[0], lynx[0])
            t_obs, y = t_obs[1:], y[1:]
        else:
            t_obs = np.linspace(block.synth_t_end / block.synth_n, block.synth_t_end, block.synth_n)
            z0 = block.z0 or (1.0, 1.0)
            y = generate_lv_data(data_rng, t_obs, z0=z0, sigma=block.synth_sigma)
        model = LotkaVolterraModel(t_obs, y, z0=z0, sigma=block.sigma, method=block.solver,
                                   s=block.s, c=block.c)
        names = ["alpha", "beta", "gamma", "delta"]
        funcs = {}
        for i, name in enumerate(names):
            funcs[f"log_{name}_mean"] = lambda t, i=i: t[i] + model.prior_mean[i]
            funcs[f"{name}_mean"] = lambda t, i=i: math.exp(t[i] + model.prior_mean[i])
        return Setup(model, funcs, 4)
    if cfg.experiment == "pde":
        return Setup(HeatPDEProblem((block.alpha0, block.beta0), block.c, block.reference_dx), {}, 2)
    raise ValueError(f"no model for experiment {cfg.experiment!r}")


def build_kernel(cfg: ExperimentConfig, model):
    p = cfg.sampler_params
    if cfg.sampler == "ess":
        return EllipticalSliceKernel(model.prior_chol)
    if cfg.sampler == "slice":
        return SliceKernel(SliceSpec(p.width or 1.0, p.max_stepout, p.max_shrink))
    return MetropolisKernel(build_proposal(cfg))


def build_proposal(cfg: ExperimentConfig):
    scale = cfg.sampler_params.scale or 1.0
    if cfg.experiment in ("gp", "pde"):
        return TruncatedNormal(scale)
    return GaussianRandomWalk(scale)


def chain_config(cfg: ExperimentConfig) -> ChainConfig:
    return ChainConfig(cfg.iterations, cfg.burn_in, cfg.thin, cfg.gamma0 or 0.1, cfg.seed, cfg.scheme)


def run_chain(cfg: ExperimentConfig, index: int, setup: Setup | None = None):
    """Run chain ``index``; returns ``(samples, total_cost)``."""
    setup = setup or build_model(cfg)
    rng = np.random.default_rng(seeds(cfg.seed, index + 1)[1][index])
    model = setup.model
    ledger = CostLedger()
    if cfg.experiment == "pde":
        block = cfg.model_block()
        sched = LogarithmicSchedule(block.T0)
        kw = {"gamma0": cfg.gamma0} if cfg.mode == "multi-fidelity" else {"k": cfg.k}
        samples = list(run_annealing(model, build_proposal(cfg), rng, block.start, sched,
                                     max_evaluations=block.max_evaluations, **kw))
        return samples, (samples[-1].cum_cost if samples else 0.0)
    ccfg = chain_config(cfg)
    if cfg.mode == "multi-fidelity":
        stream = run_mf_chain(ccfg, model, build_kernel(cfg, model), rng, ledger=ledger)
    elif cfg.mode == "single-fidelity":
        stream = run_sf_chain(ccfg, model, build_kernel(cfg, model), rng, cfg.k, ledger=ledger)
    else:
        stream = run_two_stage_chain(ccfg, model, build_proposal(cfg), rng, cfg.k_hf, cfg.k_lf,
                                     ledger=ledger)
    samples = list(stream)
    return samples, ledger.total


def _worker(args):
    cfg_dict, index = args
    cfg = ExperimentConfig(**cfg_dict)
    return run_chain(cfg, index)


def max_workers(chains: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(chains, limit))


def run_all_chains(cfg: ExperimentConfig) -> list[tuple[list, float]]:
    workers = max_workers(cfg.chains)
    if workers == 1:
        setup = build_model(cfg)
        return [run_chain(cfg, i, setup) for i in range(cfg.chains)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_worker, [(cfg.model_dump(), i) for i in range(cfg.chains)]))


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run every chain, write per-chain CSVs and ``summary.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    start = time.perf_counter()
    results = run_all_chains(cfg)
    setup_dim = 2 if cfg.experiment == "pde" else None
    paths = []
    for i, (samples, _) in enumerate(results):
        path = out_dir / f"samples_chain{i}.csv"
        if cfg.experiment == "pde":
            rows = [ChainSample(s.iter, s.theta, s.K, 1, s.cum_cost) for s in samples]
            write_samples(rows, path, dim=setup_dim)
        else:
            write_samples(samples, path)
        paths.append(str(path))
    meta = {"config": cfg.model_dump(), "version": __version__,
            "wallclock_seconds": time.perf_counter() - start, "samples_files": paths}
    if cfg.experiment == "pde":
        runs = []
        for samples, cost in results:
            last = samples[-1]
            runs.append({"best_theta": last.best_theta, "best_energy": last.best_energy,
                         "final_theta": last.theta, "final_K": last.K,
                         "energy_evaluations": last.evaluations, "total_cost": cost})
        doc = {"annealing": runs, **meta}
        write_json(doc, out_dir / "summary.json")
        return doc
    setup = build_model(cfg)
    kept = [thin_samples(s, cfg.burn_in, cfg.thin) for s, _ in results]
    return write_summary(kept, setup.functionals, out_dir / "summary.json",
                         total_costs=[c for _, c in results], extra=meta)


# --------------------------------------------------------------------------
# standalone checks


def estimator_check(thetas=(-1.0, 0.5, 2.0), replicates: int = 100_000, gamma0: float = 0.1,
                    n: int = 1, seed: int = 0, tolerance_se: float = 4.0, scheme: str = "rr") -> list[dict]:
    """Monte Carlo unbiasedness test of the estimator on the toy sequence.

    Compares the replicate mean of ``pi_hat / pi_inf`` with 1 at each theta.
    """
    data_ss, (chain_ss,) = seeds(seed, 1)
    data, _ = generate_toy_data(np.random.default_rng(data_ss), n)
    model = ToyConjugateModel(data)
    dist = Geometric(gamma0)
    est = Estimator(scheme, dist)
    rng = np.random.default_rng(chain_ss)
    out = []
    for theta in thetas:
        th = np.array([theta])
        cursor = LevelCursor(model, th)
        log_limit = model.log_pi_limit(th)
        Ks = np.array([dist.sample(rng) for _ in range(replicates)])
        values = {}
        for K in np.unique(Ks):
            rec = est(cursor, int(K))
            values[int(K)] = rec.sign * math.exp(rec.log_abs - log_limit) if rec.sign else 0.0
        ratios = np.array([values[int(K)] for K in Ks])
        mean = float(ratios.mean())
        se = float(ratios.std(ddof=1) / math.sqrt(replicates))
        out.append({"theta": theta, "mean_ratio": mean, "se": se,
                    "z": (mean - 1.0) / se if se > 0 else (0.0 if mean == 1.0 else math.inf),
                    "passed": abs(mean - 1.0) <= tolerance_se * se})
    return out


def halving_ratio(method: str, dt: float = 0.1) -> float:
    """Error ratio ``e(dt) / e(dt / 2)`` for ``dz/dt = z`` on ``[0, 1]``."""
    def err(h):
        z = ode_solve(lambda t, z: z, np.array([1.0]), [1.0], h, method)[0, 0]
        return abs(z - math.e)
    return err(dt) / err(dt / 2)


def trapezoid_order(n: int = 16) -> float:
    """Observed order of the trapezoid rule on ``x^2`` over ``[0, 1]``."""
    def err(m):
        g = Grid1D.uniform(0.0, 1.0, m + 1)
        return abs(trapezoid(g.nodes**2, g) - 1.0 / 3.0)
    return math.log2(err(n) / err(2 * n))


def cg_direct_gap(n: int = 8, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    A = M @ M.T + n * np.eye(n)
    b = rng.standard_normal(n)
    z = cg_solve(lambda v: A @ v, b, n).z
    direct = np.linalg.solve(A, b)
    return float(np.linalg.norm(z - direct) / np.linalg.norm(direct))


def convergence_check() -> list[dict]:
    checks = []
    r = halving_ratio("euler")
    checks.append({"name": "euler halving ratio", "value": r, "passed": 1.6 <= r <= 2.4})
    r = halving_ratio("rk4")
    checks.append({"name": "rk4 halving ratio", "value": r, "passed": 12.0 <= r <= 20.0})
    p = trapezoid_order()
    checks.append({"name": "trapezoid order", "value": p, "passed": abs(p - 2.0) < 0.05})
    g = cg_direct_gap()
    checks.append({"name": "cg k=n vs direct (relative)", "value": g, "passed": g <= 1e-8})
    return checks
