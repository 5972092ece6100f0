"""Heterogeneous viewpoints: route selection as a 4-choice, 2-budget knapsack.

Each viewpoint picks one of four routes.  Route ``j`` of viewpoint ``i``
earns ``profits[i, j]`` (rate saved versus MEC computing) and consumes
``cache_costs[i, j]`` bits and ``energy_costs[i, j]`` joules.  The binary
problem is relaxed to ``x in [0, 1]`` with a concave penalty
``-mu * sum(x * (x - 1))`` and solved by CCCP: each step linearizes the
penalty at the current iterate and solves the resulting LP.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EnumerationTooLarge, LpFailure, NonDecreasingObjective, ShapeMismatch, Vr3cError
from .lp import LinearProgram, LpResult, LpStatus, WarmStart, solve_lp
from .model import BUDGET_RTOL, DeviceCapability, JointPolicy, ViewpointArrays, ViewpointParams

N_ROUTES = 4
ORACLE_MAX_N = 14
LpBackend = Callable[[LinearProgram], LpResult]


@dataclass(frozen=True, eq=False)
class MmkpInstance:
    """Profit and cost matrices, one row per viewpoint, columns are routes 1..4.

    ``allowed[i, j]`` is False for routes 2 and 3 when the device cannot
    project viewpoint ``i`` before its deadline; those entries carry a large
    negative profit so every matrix stays rectangular.
    """

    profits: np.ndarray
    cache_costs: np.ndarray
    energy_costs: np.ndarray
    cache_budget: float
    energy_budget: float
    allowed: np.ndarray
    base_rate: float

    def __post_init__(self):
        shape = np.shape(self.profits)
        if len(shape) != 2 or shape[1] != N_ROUTES:
            raise ShapeMismatch(f"profits must be (N, 4), got {shape}")
        for name in ("cache_costs", "energy_costs", "allowed"):
            if np.shape(getattr(self, name)) != shape:
                raise ShapeMismatch(f"{name} has shape {np.shape(getattr(self, name))}, expected {shape}")

    @property
    def n(self) -> int:
        return self.profits.shape[0]

    def rate_of(self, routes: np.ndarray) -> float:
        """Average rate of a route vector (0-based route indices)."""
        return self.base_rate - math.fsum(self.profits[np.arange(self.n), routes])

    def usage(self, routes: np.ndarray) -> tuple[float, float]:
        idx = np.arange(self.n), routes
        return math.fsum(self.cache_costs[idx]), math.fsum(self.energy_costs[idx])

    def feasible(self, routes: np.ndarray) -> bool:
        cache, energy = self.usage(routes)
        return (np.all(self.allowed[np.arange(self.n), routes])
                and not _over(cache, self.cache_budget) and not _over(energy, self.energy_budget))


def _over(usage, limit) -> bool:
    return usage > limit + BUDGET_RTOL * max(limit, usage)


def build_mmkp(viewpoints: Sequence[ViewpointParams], dev: DeviceCapability) -> MmkpInstance:
    cols = ViewpointArrays.build(viewpoints, dev)
    n = len(viewpoints)
    p = cols.popularity
    gain_mec = p * cols.rate_mec
    with np.errstate(invalid="ignore"):
        gain_local = np.where(cols.feasible, p * (cols.rate_mec - cols.rate_local), 0.0)
    profits = np.column_stack([gain_mec, gain_mec, gain_local, np.zeros(n)])
    cache = np.column_stack([cols.d_out, cols.d_in, np.zeros(n), np.zeros(n)])
    energy_unit = p * cols.energy
    energy = np.column_stack([np.zeros(n), energy_unit, energy_unit, np.zeros(n)])
    allowed = np.ones((n, N_ROUTES), dtype=bool)
    allowed[:, 1] = cols.feasible
    allowed[:, 2] = cols.feasible
    if not np.all(allowed):
        disabled = -(1.0 + 2.0 * float(np.sum(np.abs(profits))))
        profits = np.where(allowed, profits, disabled)
    for arr in (profits, cache, energy, allowed):
        arr.setflags(write=False)
    return MmkpInstance(profits, cache, energy, float(dev.cache_bits), float(dev.energy_budget), allowed,
                        math.fsum(p * cols.rate_mec))


def objective(x: np.ndarray, inst: MmkpInstance) -> float:
    """``-sum(profits * x)``; for a one-hot ``x`` the average rate is ``base_rate + objective``."""
    x = np.asarray(x, dtype=float)
    if x.shape != inst.profits.shape:
        raise ShapeMismatch(f"x has shape {x.shape}, expected {inst.profits.shape}")
    return -float(np.sum(inst.profits * x))


def penalty(x: np.ndarray) -> float:
    """``sum(x * (1 - x))``: zero exactly on binary points, positive inside the box."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * (1.0 - x)))


@dataclass(frozen=True)
class CccpConfig:
    mu: float = 1e5
    delta: float = 1e-3
    max_iters: int = 200
    restarts: int = 100
    rng_seed: int = 0
    # 0 means one worker per CPU; VR3C_THREADS caps it
    workers: int = 1


@dataclass
class CccpTrace:
    objectives: list[float] = field(default_factory=list)
    converged: bool = False
    lp_iterations: int = 0
    max_relative_gap: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.objectives) - 1


def relaxation_lp(inst: MmkpInstance, cost: np.ndarray) -> LinearProgram:
    n = inst.n
    A_ub = np.vstack([inst.cache_costs.ravel(), inst.energy_costs.ravel()])
    b_ub = np.array([inst.cache_budget, inst.energy_budget])
    A_eq = np.kron(np.eye(n), np.ones(N_ROUTES))
    return LinearProgram(np.asarray(cost, dtype=float).ravel(), A_ub, b_ub, A_eq, np.ones(n),
                         inst.allowed.astype(float).ravel())


def _objective_scale(inst: MmkpInstance, mu: float) -> float:
    finite = np.where(inst.allowed, np.abs(inst.profits), 0.0)
    return float(np.sum(finite)) + mu * inst.profits.size


def cccp_solve(inst: MmkpInstance, x0: np.ndarray, cfg: CccpConfig = CccpConfig(),
               lp: LpBackend = solve_lp) -> tuple[np.ndarray, CccpTrace]:
    """Run CCCP from the feasible point ``x0``.

    Step t solves ``min -profits.x - mu * Hlin(x; x_t)`` over the relaxed
    polytope, where ``Hlin`` is the first-order expansion of
    ``sum(x * (x - 1))`` at ``x_t``.  The recorded objective is the surrogate
    value at the new iterate; it never increases, and the run stops once it
    drops by at most ``cfg.delta``.
    """
    x = np.asarray(x0, dtype=float)
    if x.shape != inst.profits.shape:
        raise ShapeMismatch(f"x0 has shape {x.shape}, expected {inst.profits.shape}")
    mu = cfg.mu
    slack = 1e-9 * _objective_scale(inst, mu)
    trace = CccpTrace(objectives=[objective(x, inst) + mu * penalty(x)])
    A_ub = np.vstack([inst.cache_costs.ravel(), inst.energy_costs.ravel()])
    b_ub = np.array([inst.cache_budget, inst.energy_budget])
    A_eq = np.kron(np.eye(inst.n), np.ones(N_ROUTES))
    upper = inst.allowed.astype(float).ravel()
    profits = inst.profits.ravel()
    warm = getattr(lp, "supports_warm_start", False)
    start = _vertex_basis(x, inst) if warm else None

    for t in range(1, cfg.max_iters + 1):
        slope = 2.0 * x - 1.0
        cost = -profits - mu * slope.ravel()
        program = LinearProgram(cost, A_ub, b_ub, A_eq, np.ones(inst.n), upper)
        res = lp(program, warm_start=start) if warm else lp(program)
        if res.status is not LpStatus.OPTIMAL:
            raise LpFailure(f"LP subproblem returned {res.status.value}", iteration=t)
        if warm:
            start = res.info.get("next_start")
        trace.lp_iterations += res.iterations
        trace.max_relative_gap = max(trace.max_relative_gap, res.relative_gap)
        x_new = res.x.reshape(x.shape)
        linearized = -penalty(x) + float(np.sum(slope * (x_new - x)))
        value = objective(x_new, inst) - mu * linearized
        if value > trace.objectives[-1] + slack:
            raise NonDecreasingObjective(
                f"surrogate rose from {trace.objectives[-1]!r} to {value!r} at iteration {t}")
        trace.objectives.append(value)
        x = x_new
        if trace.objectives[-2] - value <= cfg.delta:
            trace.converged = True
            break
    return x, trace


def _vertex_basis(x: np.ndarray, inst: MmkpInstance) -> WarmStart | None:
    """Basis for a one-hot ``x``: the chosen route of every viewpoint plus both slacks."""
    if not np.all((x == 0.0) | (x == 1.0)) or not np.all(x.sum(axis=1) == 1.0):
        return None
    n_struct = inst.profits.size
    chosen = np.flatnonzero(x.ravel())
    return WarmStart(np.concatenate([[n_struct, n_struct + 1], chosen]), np.zeros(n_struct + 2, dtype=bool))


def _repair(inst: MmkpInstance, routes: np.ndarray) -> np.ndarray:
    """Demote viewpoints to MEC computing until both budgets hold.

    The victim each round is the viewpoint whose current route earns the
    least profit per unit of the violated resources (each resource measured
    as a share of its current total use); ties go to the lowest index.
    """
    routes = routes.copy()
    idx = np.arange(inst.n)
    while True:
        cache_use, energy_use = inst.usage(routes)
        over_cache = _over(cache_use, inst.cache_budget)
        over_energy = _over(energy_use, inst.energy_budget)
        if not (over_cache or over_energy):
            return routes
        burden = np.zeros(inst.n)
        if over_cache:
            burden += inst.cache_costs[idx, routes] / cache_use
        if over_energy:
            burden += inst.energy_costs[idx, routes] / energy_use
        movable = (routes != 3) & (burden > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(movable, inst.profits[idx, routes] / np.where(movable, burden, 1.0), np.inf)
        victim = int(np.argmin(ratio))
        routes[victim] = 3


def round_and_repair(x: np.ndarray, inst: MmkpInstance) -> JointPolicy:
    """Row-wise argmax (lowest route on ties), then budget repair."""
    return JointPolicy.from_routes(_round_routes(x, inst) + 1)


def _round_routes(x: np.ndarray, inst: MmkpInstance) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != inst.profits.shape:
        raise ShapeMismatch(f"x has shape {x.shape}, expected {inst.profits.shape}")
    routes = np.argmax(np.where(inst.allowed, x, -np.inf), axis=1)
    return _repair(inst, routes)


def initial_feasible_point(inst: MmkpInstance, rng: np.random.Generator) -> np.ndarray:
    """A random one-hot assignment (uniform over allowed routes), repaired to feasibility."""
    u = rng.random((inst.n, N_ROUTES))
    routes = np.argmax(np.where(inst.allowed, u, -1.0), axis=1)
    return _one_hot(_repair(inst, routes))


def _one_hot(routes: np.ndarray) -> np.ndarray:
    x = np.zeros((routes.size, N_ROUTES))
    x[np.arange(routes.size), routes] = 1.0
    return x


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(restart)])))


@dataclass
class RestartRecord:
    index: int
    final_objective: float
    iterations: int
    converged: bool
    rate: float
    max_relative_gap: float = 0.0
    error: str | None = None
    trace: list[float] = field(default_factory=list, repr=False)


@dataclass
class SolveReport:
    """Best policy over all restarts plus everything needed to audit it."""

    policy: JointPolicy
    average_rate: float
    best_restart: int
    restarts: list[RestartRecord]
    baselines: dict[str, float]
    oracle_rate: float | None = None

    @property
    def fell_back_to_mec(self) -> bool:
        return self.best_restart < 0

    def to_dict(self) -> dict:
        out = {
            "schema": "v1",
            "average_rate": self.average_rate,
            "best_restart": self.best_restart,
            "policy": {
                "cache3d": self.policy.cache3d.tolist(),
                "cache2d": self.policy.cache2d.tolist(),
                "compute_local": self.policy.compute_local.tolist(),
            },
            "restarts": [
                {
                    "index": r.index,
                    "final_objective": r.final_objective,
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "rate": r.rate,
                    "max_relative_gap": r.max_relative_gap,
                    "error": r.error,
                }
                for r in self.restarts
            ],
            "baselines": dict(self.baselines),
            "oracle_rate": self.oracle_rate,
        }
        return out


def _worker_count(requested: int) -> int:
    env = os.environ.get("VR3C_THREADS")
    cap = int(env) if env not in (None, "") else 0
    n = requested if requested > 0 else (os.cpu_count() or 1)
    if cap > 0:
        n = min(n, cap)
    return max(1, n)


def _run_restart(inst, cfg, lp, r) -> tuple[RestartRecord, np.ndarray | None]:
    rng = restart_rng(cfg.rng_seed, r)
    x0 = initial_feasible_point(inst, rng)
    try:
        x, trace = cccp_solve(inst, x0, cfg, lp)
    except Vr3cError as exc:
        return RestartRecord(r, math.nan, 0, False, math.inf, error=f"{type(exc).__name__}: {exc}"), None
    routes = _round_routes(x, inst)
    return RestartRecord(r, trace.objectives[-1], trace.iterations, trace.converged, inst.rate_of(routes),
                         trace.max_relative_gap, trace=list(trace.objectives)), routes


def multi_start(inst: MmkpInstance, cfg: CccpConfig = CccpConfig(), lp: LpBackend = solve_lp,
                with_oracle: bool = False) -> SolveReport:
    """CCCP from ``cfg.restarts`` random feasible points; keep the lowest-rate rounded policy."""
    workers = _worker_count(cfg.workers)
    indices = range(cfg.restarts)
    if workers > 1 and cfg.restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda r: _run_restart(inst, cfg, lp, r), indices))
    else:
        outcomes = [_run_restart(inst, cfg, lp, r) for r in indices]

    records = [rec for rec, _ in outcomes]
    best_rate, best_index, best_routes = inst.base_rate, -1, np.full(inst.n, 3)
    for rec, routes in sorted(outcomes, key=lambda o: (o[0].rate, o[0].index)):
        if routes is not None and rec.rate <= inst.base_rate:
            best_rate, best_index, best_routes = rec.rate, rec.index, routes
        break

    baselines = {
        "all_mec": inst.base_rate,
        "greedy_3d_caching": inst.rate_of(_greedy_3d_routes(inst)),
        "greedy_caching_computing": inst.rate_of(_greedy_cc_routes(inst)),
    }
    oracle_rate = brute_force_routes(inst)[1] if with_oracle else None
    return SolveReport(JointPolicy.from_routes(best_routes + 1), best_rate, best_index, records, baselines,
                       oracle_rate)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    r = np.where(den > 0, r, np.where(num > 0, np.inf, 0.0))
    return r


def _descending(keys: np.ndarray) -> np.ndarray:
    return np.argsort(-keys, kind="stable")


def _greedy_3d_routes(inst: MmkpInstance, routes: np.ndarray | None = None,
                      cache_used: float = 0.0) -> np.ndarray:
    routes = np.full(inst.n, 3) if routes is None else routes.copy()
    candidates = np.flatnonzero(routes == 3)
    order = candidates[_descending(_ratio(inst.profits[candidates, 0], inst.cache_costs[candidates, 0]))]
    for i in order:
        need = cache_used + inst.cache_costs[i, 0]
        if _over(need, inst.cache_budget):
            break
        cache_used = need
        routes[i] = 0
    return routes


def _greedy_cc_routes(inst: MmkpInstance) -> np.ndarray:
    routes = np.full(inst.n, 3)
    cache_used = energy_used = 0.0
    key = _ratio(inst.profits[:, 1], inst.cache_costs[:, 1] + inst.energy_costs[:, 1])
    for i in _descending(key):
        if not inst.allowed[i, 1]:
            continue
        c = cache_used + inst.cache_costs[i, 1]
        e = energy_used + inst.energy_costs[i, 1]
        if _over(c, inst.cache_budget) or _over(e, inst.energy_budget):
            break
        cache_used, energy_used = c, e
        routes[i] = 1

    if cache_used < inst.cache_budget:
        return _greedy_3d_routes(inst, routes, cache_used)
    if energy_used < inst.energy_budget:
        candidates = np.flatnonzero(routes == 3)
        order = candidates[_descending(_ratio(inst.profits[candidates, 2], inst.energy_costs[candidates, 2]))]
        for i in order:
            if not inst.allowed[i, 2] or inst.profits[i, 2] < 0:
                continue
            e = energy_used + inst.energy_costs[i, 2]
            if _over(e, inst.energy_budget):
                break
            energy_used = e
            routes[i] = 2
    return routes


def greedy_3d_caching(viewpoints: Sequence[ViewpointParams], dev: DeviceCapability) -> JointPolicy:
    """Cache 3D FOVs in descending ``P_i R_S_i / D_out_i`` until the next one does not fit."""
    return JointPolicy.from_routes(_greedy_3d_routes(build_mmkp(viewpoints, dev)) + 1)


def greedy_caching_computing(viewpoints: Sequence[ViewpointParams], dev: DeviceCapability) -> JointPolicy:
    """Two-phase greedy baseline.

    Phase one assigns local computing with a cached 2D FOV in descending
    ``P R_S / (D_in + P k D_in w f^2)`` until an item breaks either budget.
    If cache space is left, 3D caching fills it greedily; otherwise, if energy
    is left, local computing without cache is added by
    ``P (R_S - R_V) / (P k D_in w f^2)``, skipping unprofitable viewpoints.
    """
    return JointPolicy.from_routes(_greedy_cc_routes(build_mmkp(viewpoints, dev)) + 1)


def brute_force_routes(inst: MmkpInstance) -> tuple[np.ndarray, float]:
    """Exact optimum (0-based routes, rate); ties go to the lexicographically smallest route vector."""
    n = inst.n
    if n > ORACLE_MAX_N:
        raise EnumerationTooLarge(f"exhaustive search over 4^{n} assignments is not supported (N <= {ORACLE_MAX_N})")
    inner = min(n, 9)
    outer = n - inner
    grid = np.indices((N_ROUTES,) * inner).reshape(inner, -1).T  # lexicographic rows
    cols = np.arange(outer, n)
    profits = np.where(inst.allowed, inst.profits, -np.inf)
    in_profit = profits[cols, grid].sum(axis=1) if inner else np.zeros(1)
    in_cache = inst.cache_costs[cols, grid].sum(axis=1) if inner else np.zeros(1)
    in_energy = inst.energy_costs[cols, grid].sum(axis=1) if inner else np.zeros(1)

    best_profit, best_routes = -np.inf, None
    for head in itertools.product(range(N_ROUTES), repeat=outer):
        head_idx = np.arange(outer), np.array(head, dtype=np.int64)
        h_profit = float(profits[head_idx].sum()) if outer else 0.0
        if h_profit == -np.inf:
            continue
        cache = in_cache + (float(inst.cache_costs[head_idx].sum()) if outer else 0.0)
        energy = in_energy + (float(inst.energy_costs[head_idx].sum()) if outer else 0.0)
        ok = (cache <= inst.cache_budget + BUDGET_RTOL * np.maximum(inst.cache_budget, cache)) & \
             (energy <= inst.energy_budget + BUDGET_RTOL * np.maximum(inst.energy_budget, energy))
        total = np.where(ok, in_profit + h_profit, -np.inf)
        j = int(np.argmax(total))
        top = total[j]
        if top == -np.inf:
            continue
        j = int(np.flatnonzero(total >= top - 1e-12 * abs(top))[0])
        if best_routes is None or total[j] > best_profit + 1e-12 * abs(best_profit):
            best_profit = float(total[j])
            best_routes = np.concatenate([np.array(head, dtype=np.int64), grid[j]])
    return best_routes, inst.rate_of(best_routes)


def brute_force_mmkp(inst: MmkpInstance) -> tuple[JointPolicy, float]:
    routes, rate = brute_force_routes(inst)
    return JointPolicy.from_routes(routes + 1), rate
