"""Seeded instance generation, trial campaigns, and leave-one-out diagnostics.

Reproducibility contract
------------------------
Instances are generated from a Philox (4x64, 10 rounds) counter-based bit
stream keyed by ``SeedSequence(master_seed, spawn_key=(grid_index,
trial_index))``, so every trial owns an independent stream addressable
without sequential dependence. Standard normals use the inverse-CDF method:
each raw 64-bit word maps to the open-interval uniform
``u = ((word >> 11) + 0.5) * 2**-53`` and then through
``scipy.special.ndtri``. Per instance the draw order is the sensing matrix
(row-major), then the noise vector, then (only in ``random_signs`` mode) one
uniform per coordinate with positive sign iff u >= 0.5. Campaign outputs are
therefore pure functions of the configuration, independent of scheduling or
thread count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import stats
from .decoder import DecoderSolution, ProblemInstance, _apg_box, _power_iteration_bound, solve_box_ls
from .stats import EmpiricalSummary
from .theory import SystemParams, TheoryPrediction, predict

RECORD_LEVELS = ("summary", "per_trial", "full_vectors")
BETA_MODES = ("all_minus_one", "random_signs")

# At most this many coordinates feed the pairwise error-correlation estimate.
CORR_COORDS = 50

TRIALS_CSV_HEADER = (
    "grid_index,trial_index,p,n,delta,sigma2,n_errors,ber,converged,"
    "kkt_residual,objective_per_p,u_norm_over_sqrt_p,noise_dot_residual"
)

_L_MARGIN = 1.01


def _uniforms(bitgen, count: int) -> np.ndarray:
    """Open-interval (0,1) doubles from raw 64-bit words, 53 significant bits."""
    if count == 0:
        return np.empty(0)
    raw = bitgen.random_raw(count)
    # values below 2**53 are exact in int64, whose float conversion is fast
    return ((raw >> np.uint64(11)).view(np.int64).astype(np.float64) + 0.5) * 2.0**-53


def _normals(bitgen, count: int) -> np.ndarray:
    return ndtri(_uniforms(bitgen, count))


def _as_seed_sequence(stream_seed) -> np.random.SeedSequence:
    if isinstance(stream_seed, np.random.SeedSequence):
        return stream_seed
    return np.random.SeedSequence(stream_seed)


def trial_seed(master_seed: int, grid_index: int, trial_index: int) -> np.random.SeedSequence:
    """The per-trial stream key: a counter-based split of the master seed."""
    return np.random.SeedSequence(master_seed, spawn_key=(grid_index, trial_index))


def generate_instance(
    params: SystemParams,
    beta_mode: str = "all_minus_one",
    stream_seed=0,
) -> ProblemInstance:
    """Draw one problem instance; fully determined by the stream seed.

    A has i.i.d. N(0, 1/p) entries, w ~ N(0, sigma2 I_n), n = round(delta*p),
    y = A beta + w.
    """
    if beta_mode not in BETA_MODES:
        raise ValueError(f"unknown beta_mode {beta_mode!r}; expected one of {BETA_MODES}")
    p = params.p
    n = int(round(params.delta_p * p))
    if n < 1:
        raise ValueError(f"grid point rounds to n={n} measurements")
    if n / p <= 0.5:
        raise ValueError(
            f"grid point (p={p}, delta={params.delta_p}) rounds to n/p <= 1/2"
        )
    ss = _as_seed_sequence(stream_seed)
    bitgen = np.random.Philox(ss)
    a = _normals(bitgen, n * p).reshape(n, p)
    a /= math.sqrt(p)
    w = math.sqrt(params.sigma2_p) * _normals(bitgen, n)
    if beta_mode == "all_minus_one":
        beta = np.full(p, -1.0)
    else:
        beta = np.where(_uniforms(bitgen, p) >= 0.5, 1.0, -1.0)
    y = a @ beta + w
    trace = {
        "bit_generator": "Philox",
        "method": "inverse-cdf",
        "entropy": int(ss.entropy),
        "spawn_key": [int(k) for k in ss.spawn_key],
        "beta_mode": beta_mode,
    }
    return ProblemInstance(
        n=n, p=p, a_matrix=a, beta=beta, noise=w, y=y,
        sigma2_p=params.sigma2_p, seed_trace=trace,
    )


@dataclass
class ExperimentConfig:
    """Declarative description of a Monte Carlo campaign."""

    grid: list[SystemParams]
    trials: int
    master_seed: int
    solver_tol: float = 1.0e-10
    max_iter: int | None = None
    record_level: str = "per_trial"
    beta_mode: str = "all_minus_one"

    def __post_init__(self):
        if not self.grid:
            raise ValueError("grid must contain at least one point")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        self.trials = int(self.trials)
        if int(self.master_seed) != self.master_seed or not (
            0 <= self.master_seed < 2**64
        ):
            raise ValueError(f"master_seed must be a 64-bit unsigned integer")
        self.master_seed = int(self.master_seed)
        if not (math.isfinite(self.solver_tol) and self.solver_tol > 0.0):
            raise ValueError(f"solver_tol must be positive, got {self.solver_tol!r}")
        if self.max_iter is not None and (int(self.max_iter) != self.max_iter or self.max_iter < 1):
            raise ValueError(f"max_iter must be a positive integer or None")
        if self.record_level not in RECORD_LEVELS:
            raise ValueError(f"record_level must be one of {RECORD_LEVELS}")
        if self.beta_mode not in BETA_MODES:
            raise ValueError(f"beta_mode must be one of {BETA_MODES}")


def config_from_json(obj) -> ExperimentConfig:
    """Build a config from a JSON document (dict, JSON text, or file path)."""
    if isinstance(obj, str):
        if os.path.exists(obj):
            with open(obj) as fh:
                obj = json.load(fh)
        else:
            obj = json.loads(obj)
    if not isinstance(obj, dict):
        raise ValueError("config document must be a JSON object")
    try:
        grid = [
            SystemParams(int(g["p"]), float(g["delta"]), float(g["sigma2"]))
            for g in obj["grid"]
        ]
        cfg = ExperimentConfig(
            grid=grid,
            trials=obj["trials"],
            master_seed=obj["master_seed"],
            solver_tol=float(obj.get("solver_tol", 1.0e-10)),
            max_iter=obj.get("max_iter"),
            record_level=obj.get("record_level", "per_trial"),
            beta_mode=obj.get("beta_mode", "all_minus_one"),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed config document: {exc}") from exc
    return cfg


@dataclass
class TrialRecord:
    """Scalar diagnostics of a single decoded instance."""

    grid_index: int
    trial_index: int
    n_errors: int
    ber: float
    converged: bool
    kkt_residual: float
    objective_per_p: float
    u_norm_over_sqrt_p: float
    noise_dot_residual: float


@dataclass
class CampaignResult:
    """Everything a campaign produced, in (grid_index, trial_index) order."""

    config: ExperimentConfig
    realized_n: list[int]
    predictions: list[TheoryPrediction]
    records: list[TrialRecord]
    summaries: list[EmpiricalSummary]
    excluded: list[int]
    warning: bool
    full_records: list | None = field(default=None, repr=False)


def _run_trial(config: ExperimentConfig, grid_index: int, trial_index: int):
    params = config.grid[grid_index]
    instance = generate_instance(
        params, config.beta_mode,
        trial_seed(config.master_seed, grid_index, trial_index),
    )
    solution = solve_box_ls(instance, tol=config.solver_tol, max_iter=config.max_iter)
    u = instance.a_matrix @ solution.x_star - instance.y
    record = TrialRecord(
        grid_index=grid_index,
        trial_index=trial_index,
        n_errors=solution.n_errors,
        ber=solution.n_errors / params.p,
        converged=solution.converged,
        kkt_residual=solution.kkt_residual,
        objective_per_p=solution.objective / params.p,
        u_norm_over_sqrt_p=float(np.linalg.norm(u)) / math.sqrt(params.p),
        noise_dot_residual=float(instance.noise @ (-u)),
    )
    coords = min(CORR_COORDS, params.p)
    bit_errors = solution.beta_hat[:coords] != instance.beta[:coords]
    keep_vectors = config.record_level == "full_vectors"
    return record, bit_errors, (instance, solution) if keep_vectors else None


def run_campaign(config: ExperimentConfig, threads: int = 1) -> CampaignResult:
    """Run every (grid point, trial) pair and aggregate per-grid summaries.

    Unconverged trials stay in the raw records but are excluded from the
    summaries; more than 1% exclusions at any grid point raises the
    campaign-level warning flag. Results are merged in task order, so any
    thread count produces identical output.
    """
    if int(threads) != threads or threads < 1:
        raise ValueError(f"threads must be a positive integer, got {threads!r}")
    tasks = [
        (g, t) for g in range(len(config.grid)) for t in range(config.trials)
    ]
    if threads == 1:
        outputs = [_run_trial(config, g, t) for g, t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            outputs = list(pool.map(lambda gt: _run_trial(config, *gt), tasks))

    records = [out[0] for out in outputs]
    full = [out[2] for out in outputs] if config.record_level == "full_vectors" else None

    realized_n, predictions, summaries, excluded = [], [], [], []
    warning = False
    for g, params in enumerate(config.grid):
        n = int(round(params.delta_p * params.p))
        realized_n.append(n)
        realized = SystemParams(params.p, n / params.p, params.sigma2_p)
        prediction = predict(realized)
        predictions.append(prediction)
        rows = [out for out, (gi, _) in zip(outputs, tasks) if gi == g]
        used = [(rec, bits) for rec, bits, _ in rows if rec.converged]
        n_excluded = len(rows) - len(used)
        excluded.append(n_excluded)
        if n_excluded > 0.01 * len(rows):
            warning = True
        if not used:
            raise RuntimeError(
                f"grid point {g}: no converged trials; systematic solver failure"
            )
        ne_values = [rec.n_errors for rec, _ in used]
        bit_matrix = np.array([bits for _, bits in used], dtype=bool)
        summaries.append(
            stats.summarize_trials(
                grid_index=g,
                ne_values=ne_values,
                p=params.p,
                lambda_p=prediction.lambda_p,
                bit_error_matrix=bit_matrix,
            )
        )
    return CampaignResult(
        config=config,
        realized_n=realized_n,
        predictions=predictions,
        records=records,
        summaries=summaries,
        excluded=excluded,
        warning=warning,
        full_records=full,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trials_to_csv(result: CampaignResult) -> str:
    """Render the per-trial records as CSV with the documented column set."""
    lines = [TRIALS_CSV_HEADER]
    for rec in result.records:
        params = result.config.grid[rec.grid_index]
        n = result.realized_n[rec.grid_index]
        lines.append(
            ",".join(
                [
                    str(rec.grid_index),
                    str(rec.trial_index),
                    str(params.p),
                    str(n),
                    _fmt(n / params.p),
                    _fmt(params.sigma2_p),
                    str(rec.n_errors),
                    _fmt(rec.ber),
                    str(rec.converged),
                    _fmt(rec.kkt_residual),
                    _fmt(rec.objective_per_p),
                    _fmt(rec.u_norm_over_sqrt_p),
                    _fmt(rec.noise_dot_residual),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _reduced_system(instance: ProblemInstance, i: int):
    """The system with column i removed; never reads that column.

    The reduced observation is rebuilt from the model identity
    y_reduced = A_reduced beta_reduced + w.
    """
    if int(i) != i or not 0 <= i < instance.p:
        raise ValueError(f"coordinate index {i!r} outside [0, {instance.p})")
    i = int(i)
    a_red = np.delete(instance.a_matrix, i, axis=1)
    beta_red = np.delete(instance.beta, i)
    y_red = a_red @ beta_red + instance.noise
    return a_red, beta_red, y_red


def _solve_gram(gram, b, c0, lip, tol, max_iter, x0):
    x, r, _, _ = _apg_box(gram, b, c0, lip, tol, max_iter, x0=x0)
    if r > tol:
        raise RuntimeError(f"reduced solve failed to reach tolerance {tol} (residual {r})")
    return x


def leave_one_out_dual(
    instance: ProblemInstance,
    i: int,
    tol: float = 1.0e-11,
    max_iter: int | None = None,
) -> np.ndarray:
    """Optimal residual of the box LS problem with column i left out.

    Solves the reduced problem on (A_red, y_red) only, so the result is
    independent of column a_i by construction, and returns
    u = A_red x_red - y_red.
    """
    a_red, beta_red, y_red = _reduced_system(instance, i)
    if max_iter is None:
        max_iter = 50 * instance.p
    gram = a_red.T @ a_red
    lip = _L_MARGIN * _power_iteration_bound(gram)
    x_red = _solve_gram(
        gram, a_red.T @ y_red, 0.5 * float(y_red @ y_red), lip, tol, max_iter, beta_red
    )
    return a_red @ x_red - y_red


def surrogate_x(
    instance: ProblemInstance,
    i: int,
    a_p_star: float,
    u_loo: np.ndarray | None = None,
    tol: float = 1.0e-11,
) -> float:
    """One-coordinate closed-form surrogate clip(beta_i - a_i'u_loo / A*, -1, 1)."""
    a_p_star = float(a_p_star)
    if not (math.isfinite(a_p_star) and a_p_star > 0.0):
        raise ValueError(f"a_p_star must be positive, got {a_p_star!r}")
    if u_loo is None:
        u_loo = leave_one_out_dual(instance, i, tol=tol)
    gap = float(instance.a_matrix[:, int(i)] @ u_loo)
    return float(np.clip(instance.beta[int(i)] - gap / a_p_star, -1.0, 1.0))


def g_curve(
    instance: ProblemInstance,
    i: int,
    v_grid,
    tol: float = 1.0e-11,
    max_iter: int | None = None,
) -> np.ndarray:
    """Perturbation response of the leave-one-out problem along direction a_i.

    Evaluated through the primal route: g(v) = Q(v) - Q(0) - v * a_i'u_loo,
    where Q(v) is the reduced box-LS value with target shifted by a_i * v and
    u_loo is the reduced optimal residual. The linear term is the tilt of the
    value function at v = 0, so g(0) = 0 exactly, g is convex, and its
    limiting shape is the half-quadratic with curvature f/tau.
    """
    v_grid = np.asarray(v_grid, dtype=np.float64)
    if v_grid.size == 0:
        raise ValueError("v_grid must be nonempty")
    if np.max(np.abs(v_grid)) > 2.0:
        raise ValueError("v_grid values must lie in [-2, 2]")
    a_red, beta_red, y_red = _reduced_system(instance, i)
    ai = instance.a_matrix[:, int(i)]
    if max_iter is None:
        max_iter = 50 * instance.p
    gram = a_red.T @ a_red
    lip = _L_MARGIN * _power_iteration_bound(gram)

    def value_at(y_target, x0):
        x = _solve_gram(
            gram, a_red.T @ y_target, 0.5 * float(y_target @ y_target),
            lip, tol, max_iter, x0,
        )
        res = a_red @ x - y_target
        return 0.5 * float(res @ res), x, res

    q0, x0_sol, u_loo = value_at(y_red, beta_red)
    tilt = float(ai @ u_loo)
    out = np.empty(v_grid.size)
    x_warm = x0_sol
    for j, v in enumerate(v_grid):
        if v == 0.0:
            out[j] = 0.0
            continue
        qv, x_warm, _ = value_at(y_red - ai * v, x_warm)
        out[j] = qv - q0 - v * tilt
    return out


def empirical_a_p(records, sigma2: float, p: int) -> float:
    """Mean of noise_dot_residual/(sigma2*p) over converged trial records."""
    sigma2 = float(sigma2)
    if not (math.isfinite(sigma2) and sigma2 > 0.0):
        raise ValueError(f"sigma2 must be positive, got {sigma2!r}")
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    records = list(records)
    if not records:
        raise ValueError("empirical_a_p requires at least one record")
    converged = [rec for rec in records if rec.converged]
    if not converged:
        raise ValueError("empirical_a_p requires at least one converged record")
    return float(
        np.mean([rec.noise_dot_residual for rec in converged]) / (sigma2 * p)
    )
