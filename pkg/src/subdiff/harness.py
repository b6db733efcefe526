"""Experiment orchestration: seeded Monte Carlo runs, MSD curves, theory comparison.

Builds one network/problem instance from its seeds, runs each configured
algorithm over independent trajectories, records the learning curve
MSD(i) = mean over runs of ||w_star - w_i||^2 / K together with its
subspace/orthogonal decomposition, estimates the steady state over the
post-burn-in window, evaluates the theoretical predictions, and writes
curves.csv plus summary.json.

Reproducibility: trajectory r of algorithm a uses the stream pair spawned
from SeedSequence((master_seed, ALGORITHM_IDS[a], r)); the network retry
rule and derived sub-seeds are recorded in the summary. Identical config
and seeds give byte-identical CSV output.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from subdiff import __version__, algorithms, combiner as combiner_mod, netgraph, predictor, problem as problem_mod
from subdiff.errors import GraphDisconnected, OutputUnwritable, SubdiffError

ALGORITHM_IDS = {
    "exact_diffusion": 0,
    "approx_projection": 1,
    "dispo": 2,
    "centralized": 3,
}

# dB floor: squared deviations at or below 1e-20 are clipped to -200 dB
DB_FLOOR = -200.0

# Monte Carlo runs are raised (doubling, in run-index order) until the
# steady-state standard error passes this gate or the cap is reached.
STDERR_GATE_DB = 0.5
MAX_MONTE_CARLO_RUNS = 400

_SEED_TAG_TARGETS = 1
_MAX_CONNECT_ATTEMPTS = 100


def to_db(x: float) -> float:
    """10 log10(x), clipped at the -200 dB floor."""
    if x <= 1e-20:
        return DB_FLOOR
    return max(10.0 * math.log10(x), DB_FLOOR)


@dataclass
class NetworkConfig:
    K: int = 50
    P: int = 3
    M: int = 5
    radius: float = 0.5
    kernel_width: float = 0.25
    tau: float = 0.5
    seed: int = 1


@dataclass
class ProblemConfig:
    sigma_h2_range: tuple[float, float] = (0.5, 2.0)
    sigma_v2_range: tuple[float, float] = (0.2, 0.8)
    seed: int = 2


@dataclass
class RunConfig:
    algorithms: tuple[str, ...] = ("exact_diffusion", "approx_projection")
    mu: float = 1e-3
    local_updates: int = 1
    iterations: int = 50_000
    monte_carlo_runs: int = 50
    burn_in_fraction: float = 0.8
    master_seed: int = 1234
    deterministic: bool = False
    workers: int = 1
    stderr_gate_db: float = STDERR_GATE_DB
    max_monte_carlo_runs: int = MAX_MONTE_CARLO_RUNS


@dataclass
class OutputConfig:
    directory: str = "results"
    trace_stride: int = 50


@dataclass
class ExperimentConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    run: RunConfig = field(default_factory=RunConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "ExperimentConfig":
        r = self.run
        if r.iterations <= 0:
            raise ValueError("iterations must be positive")
        if not 0.0 <= r.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must be in [0, 1)")
        if r.monte_carlo_runs < 1:
            raise ValueError("monte_carlo_runs must be at least 1")
        if r.local_updates < 1:
            raise ValueError("local_updates must be at least 1")
        if r.mu <= 0:
            raise ValueError("mu must be positive")
        if r.workers < 1:
            raise ValueError("workers must be at least 1")
        unknown = [a for a in r.algorithms if a not in ALGORITHM_IDS]
        if unknown:
            raise ValueError(f"unknown algorithms: {unknown}; known: {sorted(ALGORITHM_IDS)}")
        if not r.algorithms:
            raise ValueError("at least one algorithm is required")
        if self.outputs.trace_stride < 1 or self.outputs.trace_stride > r.iterations:
            raise ValueError("trace_stride must be in [1, iterations]")
        n_records = r.iterations // self.outputs.trace_stride
        if not any(
            (i + 1) * self.outputs.trace_stride > r.burn_in_fraction * r.iterations
            for i in range(n_records)
        ):
            raise ValueError("no logged iterations fall after the burn-in window")
        return self


def config_to_json(config: ExperimentConfig) -> dict:
    doc = asdict(config)
    doc["run"]["algorithms"] = list(config.run.algorithms)
    doc["problem"]["sigma_h2_range"] = list(config.problem.sigma_h2_range)
    doc["problem"]["sigma_v2_range"] = list(config.problem.sigma_v2_range)
    return doc


def config_from_json(doc: dict) -> ExperimentConfig:
    unknown = set(doc) - {"network", "problem", "run", "outputs"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    try:
        network = NetworkConfig(**doc.get("network", {}))
        prob = doc.get("problem", {})
        prob = dict(prob)
        for key in ("sigma_h2_range", "sigma_v2_range"):
            if key in prob:
                prob[key] = tuple(prob[key])
        problem = ProblemConfig(**prob)
        run = dict(doc.get("run", {}))
        if "algorithms" in run:
            run["algorithms"] = tuple(run["algorithms"])
        run_cfg = RunConfig(**run)
        outputs = OutputConfig(**doc.get("outputs", {}))
    except TypeError as exc:
        raise ValueError(f"invalid configuration: {exc}") from exc
    return ExperimentConfig(network=network, problem=problem, run=run_cfg, outputs=outputs).validate()


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError as exc:
        raise ValueError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_json(doc)


@dataclass
class Instance:
    """One fully built experiment instance shared by all algorithm runs."""

    topology: netgraph.NetworkTopology
    decomposition: netgraph.SpectralDecomposition
    subspace: netgraph.Subspace
    problem: problem_mod.QuadraticNetworkProblem
    combiner: combiner_mod.BlockCombiner
    w_star: np.ndarray
    network_seed_used: int
    targets_seed: int


def build_instance(config: ExperimentConfig) -> Instance:
    """Build topology, subspace, targets, problem and combiner from seeds.

    Disconnected draws retry with the next integer seed (recorded in the
    summary as network_seed_used).
    """
    net = config.network
    seed = net.seed
    topology = None
    for _ in range(_MAX_CONNECT_ATTEMPTS):
        try:
            topology = netgraph.generate_geometric_graph(net.K, seed, net.kernel_width, net.radius)
            break
        except GraphDisconnected:
            seed += 1
    if topology is None:
        raise GraphDisconnected(
            f"no connected draw in {_MAX_CONNECT_ATTEMPTS} attempts from seed {net.seed}; "
            "increase the radius"
        )
    decomposition = netgraph.spectral(topology)
    subspace = netgraph.build_subspace(decomposition, net.P, net.M)
    targets_seed = int(np.random.SeedSequence((seed, _SEED_TAG_TARGETS)).generate_state(1)[0])
    w_o = netgraph.smooth_targets(decomposition, net.M, net.tau, targets_seed)
    sigma_h2, sigma_v2 = problem_mod.draw_variances(
        net.K, config.problem.sigma_h2_range, config.problem.sigma_v2_range, config.problem.seed
    )
    prob = problem_mod.QuadraticNetworkProblem(
        K=net.K, M=net.M, w_o=w_o, sigma_h2=sigma_h2, sigma_v2=sigma_v2, subspace=subspace
    )
    comb = combiner_mod.build_combiner(subspace, topology)
    w_star = problem_mod.optimum(prob)
    return Instance(
        topology=topology,
        decomposition=decomposition,
        subspace=subspace,
        problem=prob,
        combiner=comb,
        w_star=w_star,
        network_seed_used=seed,
        targets_seed=targets_seed,
    )


def theory_inputs(instance: Instance, mu: float) -> predictor.TheoryInputs:
    return predictor.TheoryInputs(
        A=instance.combiner.A,
        H_star=problem_mod.network_hessian(instance.problem),
        R_star=problem_mod.noise_covariance_at_optimum(instance.problem),
        U=instance.subspace.U,
        mu=mu,
        K=instance.problem.K,
    )


def theory_values(instance: Instance, mu: float) -> dict:
    """Both series variants plus the small-step formula, linear and dB."""
    inputs = theory_inputs(instance, mu)
    exact = predictor.msd_exact(inputs)
    exact_t = predictor.msd_exact(inputs, transpose=True)
    small = predictor.msd_small_mu(inputs)
    return {
        "msd_exact": exact,
        "msd_exact_db": to_db(exact),
        "msd_exact_transposed": exact_t,
        "msd_exact_transposed_db": to_db(exact_t),
        "msd_small_mu": small,
        "msd_small_mu_db": to_db(small),
    }


@dataclass
class AlgorithmCurve:
    """Logged learning curve and steady-state estimate of one algorithm."""

    algorithm: str
    iterations: np.ndarray
    msd: np.ndarray
    msd_component_u: np.ndarray
    msd_component_perp: np.ndarray
    steady_state_msd: float
    steady_state_stderr: float
    n_runs: int

    @property
    def steady_state_msd_db(self) -> float:
        return to_db(self.steady_state_msd)

    @property
    def stderr_db(self) -> float:
        if self.steady_state_msd <= 0 or not np.isfinite(self.steady_state_stderr):
            return float("nan")
        return 10.0 / math.log(10.0) * self.steady_state_stderr / self.steady_state_msd

    @property
    def final_msd(self) -> float:
        return float(self.msd[-1])


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    curves: dict[str, AlgorithmCurve]
    theory: dict
    network_seed_used: int
    targets_seed: int
    lambda_A: float
    lambda_Abar: float

    def summary(self) -> dict:
        algo_doc = {}
        for name, curve in self.curves.items():
            stderr_db = curve.stderr_db
            algo_doc[name] = {
                "steady_state_msd": curve.steady_state_msd,
                "steady_state_msd_db": curve.steady_state_msd_db,
                # strict JSON has no NaN; single-run estimates carry null
                "stderr_db": stderr_db if math.isfinite(stderr_db) else None,
                "n_runs": curve.n_runs,
                "final_msd": curve.final_msd,
                "final_msd_db": to_db(curve.final_msd),
            }
        return {
            "code_version": __version__,
            "config": config_to_json(self.config),
            "seeds": {
                "network_seed": self.config.network.seed,
                "network_seed_used": self.network_seed_used,
                "targets_seed": self.targets_seed,
                "problem_seed": self.config.problem.seed,
                "master_seed": self.config.run.master_seed,
            },
            "combiner": {"lambda_A": self.lambda_A, "lambda_Abar": self.lambda_Abar},
            "theory": self.theory,
            "algorithms": algo_doc,
        }


def _step_factory(name: str, instance: Instance, mu: float, local_updates: int, n_traj: int):
    dim = instance.subspace.dim
    comb = instance.combiner
    if name == "exact_diffusion":
        state = algorithms.init_exact_diffusion(dim, mu, local_updates, n_traj)
        return state, lambda st, src: algorithms.step_exact_diffusion(st, comb, src)
    if name == "approx_projection":
        state = algorithms.init_baseline(dim, mu, n_traj)
        return state, lambda st, src: algorithms.step_approx_projection(st, comb, src)
    if name == "dispo":
        state = algorithms.init_baseline(dim, mu, n_traj)
        return state, lambda st, src: algorithms.step_dispo(st, comb, src)
    if name == "centralized":
        state = algorithms.init_baseline(dim, mu, n_traj)
        return state, lambda st, src: algorithms.step_centralized(st, instance.subspace, src)
    raise ValueError(f"unknown algorithm {name!r}")


def _simulate_batch(
    name: str,
    instance: Instance,
    run_cfg: RunConfig,
    stride: int,
    run_indices: range,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance a batch of trajectories, logging strided squared deviations.

    Returns (total, component_u, component_perp), each (n_records, R),
    already divided by K (per-agent average convention).
    """
    R = len(run_indices)
    if run_cfg.deterministic:
        source = algorithms.ExactGradientSource(instance.problem)
    else:
        seeds = [
            np.random.SeedSequence((run_cfg.master_seed, ALGORITHM_IDS[name], r))
            for r in run_indices
        ]
        source = algorithms.StochasticGradientSource(instance.problem, seeds)
    state, step = _step_factory(name, instance, run_cfg.mu, run_cfg.local_updates, R)
    K = instance.problem.K
    P_U = instance.subspace.projector
    w_star = instance.w_star[:, None]
    n_records = run_cfg.iterations // stride
    total = np.empty((n_records, R))
    comp_u = np.empty((n_records, R))
    comp_perp = np.empty((n_records, R))
    rec = 0
    for i in range(1, run_cfg.iterations + 1):
        step(state, source)
        if i % stride == 0:
            w = state.w
            projected = P_U @ w
            dev = w - w_star
            dev_u = projected - w_star
            dev_perp = w - projected
            total[rec] = np.einsum("ir,ir->r", dev, dev) / K
            comp_u[rec] = np.einsum("ir,ir->r", dev_u, dev_u) / K
            comp_perp[rec] = np.einsum("ir,ir->r", dev_perp, dev_perp) / K
            rec += 1
    return total, comp_u, comp_perp


def _simulate_ranges(name, instance, run_cfg, stride, run_indices: range):
    """Split a run range across workers; merge in run-index order."""
    workers = min(run_cfg.workers, len(run_indices))
    if workers <= 1:
        return _simulate_batch(name, instance, run_cfg, stride, run_indices)
    bounds = np.linspace(run_indices.start, run_indices.stop, workers + 1).astype(int)
    groups = [range(bounds[i], bounds[i + 1]) for i in range(workers) if bounds[i] < bounds[i + 1]]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda g: _simulate_batch(name, instance, run_cfg, stride, g), groups))
    return tuple(np.concatenate([p[j] for p in parts], axis=1) for j in range(3))


def simulate_algorithm(
    name: str, instance: Instance, run_cfg: RunConfig, stride: int
) -> AlgorithmCurve:
    """Monte Carlo learning curve with automatic run-count escalation.

    Runs are added (doubling, capped) until the steady-state standard
    error passes the gate; trajectory r is identical regardless of how
    many total runs are requested.
    """
    iters = np.arange(1, run_cfg.iterations // stride + 1) * stride
    window = iters > run_cfg.burn_in_fraction * run_cfg.iterations
    n_runs = 1 if run_cfg.deterministic else run_cfg.monte_carlo_runs
    total, comp_u, comp_perp = _simulate_ranges(name, instance, run_cfg, stride, range(n_runs))
    while True:
        run_means = total[window].mean(axis=0)
        steady = float(run_means.mean())
        stderr = (
            float(run_means.std(ddof=1) / math.sqrt(len(run_means)))
            if len(run_means) > 1
            else float("nan")
        )
        stderr_db = 10.0 / math.log(10.0) * stderr / steady if steady > 0 else 0.0
        if (
            run_cfg.deterministic
            or n_runs >= run_cfg.max_monte_carlo_runs
            or (np.isfinite(stderr_db) and stderr_db < run_cfg.stderr_gate_db)
        ):
            break
        new_runs = min(2 * n_runs, run_cfg.max_monte_carlo_runs)
        extra = _simulate_ranges(name, instance, run_cfg, stride, range(n_runs, new_runs))
        total = np.concatenate([total, extra[0]], axis=1)
        comp_u = np.concatenate([comp_u, extra[1]], axis=1)
        comp_perp = np.concatenate([comp_perp, extra[2]], axis=1)
        n_runs = new_runs
    return AlgorithmCurve(
        algorithm=name,
        iterations=iters,
        msd=total.mean(axis=1),
        msd_component_u=comp_u.mean(axis=1),
        msd_component_perp=comp_perp.mean(axis=1),
        steady_state_msd=steady,
        steady_state_stderr=stderr,
        n_runs=n_runs,
    )


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Execute the configured experiment and (optionally) write outputs."""
    config.validate()
    instance = build_instance(config)
    theory = theory_values(instance, config.run.mu)
    curves = {}
    for name in config.run.algorithms:
        curves[name] = simulate_algorithm(name, instance, config.run, config.outputs.trace_stride)
    result = ExperimentResult(
        config=config,
        curves=curves,
        theory=theory,
        network_seed_used=instance.network_seed_used,
        targets_seed=instance.targets_seed,
        lambda_A=instance.combiner.lambda_A,
        lambda_Abar=instance.combiner.lambda_Abar,
    )
    if write:
        write_outputs(result)
    return result


def write_outputs(result: ExperimentResult) -> tuple[str, str]:
    """Write curves.csv and summary.json under the output directory."""
    out_dir = result.config.outputs.directory
    try:
        os.makedirs(out_dir, exist_ok=True)
        curves_path = os.path.join(out_dir, "curves.csv")
        with open(curves_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["iteration", "algorithm", "msd_db", "msd_component_U_db", "msd_component_perp_db"]
            )
            for name in result.config.run.algorithms:
                curve = result.curves[name]
                for i in range(len(curve.iterations)):
                    writer.writerow(
                        [
                            int(curve.iterations[i]),
                            name,
                            repr(to_db(float(curve.msd[i]))),
                            repr(to_db(float(curve.msd_component_u[i]))),
                            repr(to_db(float(curve.msd_component_perp[i]))),
                        ]
                    )
        summary_path = os.path.join(out_dir, "summary.json")
        with open(summary_path, "w") as f:
            json.dump(result.summary(), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise OutputUnwritable(f"cannot write outputs under {out_dir}: {exc}") from exc
    return curves_path, summary_path


def sweep_mu(config: ExperimentConfig, mu_list, write: bool = True) -> list[dict]:
    """Steady-state MSD versus step-size, one experiment per mu.

    Stability is pre-checked via the spectral radius of A (I - mu H);
    per-mu failures are recorded as rows with an ``error`` field and the
    sweep continues. Returns the table and optionally writes sweep.csv.
    """
    config.validate()
    mu_list = list(mu_list)
    rows: list[dict] = []
    if not mu_list:
        if write:
            _write_sweep(config, rows)
        return rows
    instance = build_instance(config)
    H = problem_mod.network_hessian(instance.problem)
    n = instance.subspace.dim
    for mu in mu_list:
        radius = predictor.estimate_spectral_radius(
            instance.combiner.A @ (np.eye(n) - mu * H)
        )
        if radius >= 1.0:
            rows.append({"mu": mu, "error": f"unstable: rho(C) ~= {radius:.4f} >= 1"})
            continue
        try:
            theory = theory_values(instance, mu)
            for name in config.run.algorithms:
                run_cfg = RunConfig(**{**asdict(config.run), "mu": mu, "algorithms": (name,)})
                curve = simulate_algorithm(name, instance, run_cfg, config.outputs.trace_stride)
                rows.append(
                    {
                        "mu": mu,
                        "algorithm": name,
                        "msd_db": curve.steady_state_msd_db,
                        "msd_theory_exact_db": theory["msd_exact_db"],
                        "msd_theory_small_mu_db": theory["msd_small_mu_db"],
                        "stderr_db": curve.stderr_db,
                    }
                )
        except SubdiffError as exc:
            rows.append({"mu": mu, "error": str(exc)})
    if write:
        _write_sweep(config, rows)
    return rows


def _write_sweep(config: ExperimentConfig, rows: list[dict]) -> str:
    out_dir = config.outputs.directory
    try:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "sweep.csv")
        fields = ["mu", "algorithm", "msd_db", "msd_theory_exact_db", "msd_theory_small_mu_db", "stderr_db", "error"]
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fields)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row.get(k, "") for k in fields})
    except OSError as exc:
        raise OutputUnwritable(f"cannot write sweep under {out_dir}: {exc}") from exc
    return path
