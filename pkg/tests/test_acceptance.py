"""Acceptance criteria, one test each, every test printing a single PASS/FAIL line."""

import math
import time
import warnings

import numpy as np
import pytest

from vr3c.heterogeneous import (CccpConfig, brute_force_mmkp, build_mmkp, greedy_3d_caching,
                                greedy_caching_computing, multi_start)
from vr3c.homogeneous import (HomogeneousInstance, Regime, brute_force_problem2, closed_form, expand_counts,
                              optimal_frequency, sweep, tradeoff_rate)
from vr3c.instances import generate_instance
from vr3c.lp import LinearProgram, LpStatus, check_certificate, solve_lp
from vr3c.model import (DeviceCapability, JointPolicy, ProjectionTask, average_rate, crossover_frequency,
                        rate_local_compute, rate_mec, uniform_viewpoints, validate_policy)
from vr3c.sim import generate_stream, simulate

from conftest import K_EFF, N_FIG3, device_for_capacity, fig3_task, random_program, report_criterion
from oracles import lp_vertex_minimum

REPLICA_SEEDS = range(20)
REPLICA_CACHE_FRACTION = 0.2
ORACLE_SEEDS = range(1000, 1050)
RESTARTS = 100


# ---------------------------------------------------------------- shared runs

@pytest.fixture(scope="module")
def replica_runs():
    """Multi-start CCCP and baselines on the 20 N=100 replica instances."""
    start = time.perf_counter()
    runs = []
    for seed in REPLICA_SEEDS:
        h = generate_instance(100, seed=seed, cache_fraction=REPLICA_CACHE_FRACTION)
        vps = list(h.viewpoints)
        rep = multi_start(build_mmkp(vps, h.device), CccpConfig(restarts=RESTARTS, rng_seed=seed))
        runs.append((vps, h.device, rep))
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def oracle_runs():
    """Multi-start CCCP against exhaustive search on 50 random N=10 instances."""
    start = time.perf_counter()
    runs = []
    for seed in ORACLE_SEEDS:
        rng = np.random.default_rng(seed)
        h = generate_instance(10, seed=seed, cache_fraction=float(rng.uniform(0.1, 0.4)),
                              energy_fraction=float(rng.uniform(0.1, 0.4)),
                              distribution=str(rng.choice(["uniform", "loguniform"])))
        vps = list(h.viewpoints)
        inst = build_mmkp(vps, h.device)
        rep = multi_start(inst, CccpConfig(restarts=RESTARTS, rng_seed=seed))
        _, best = brute_force_mmkp(inst)
        runs.append((vps, h.device, rep, best))
    return runs, time.perf_counter() - start


# ---------------------------------------------------------------- criterion 1

def random_divisible_instance(rng):
    n = int(rng.integers(1, 201))
    alpha = int(rng.choice([2, 3]))
    d_in = float(rng.uniform(1e6, 30e6))
    task = ProjectionTask(d_in, alpha * d_in, float(rng.uniform(5, 20)), float(rng.uniform(0.01, 0.05)))
    # both regimes, local projection always meets the deadline (f/F > (alpha-1)/alpha)
    ratio = float(rng.uniform(0.7, 0.95) if rng.random() < 0.5 else rng.uniform(1.05, 3.0))
    f = ratio * crossover_frequency(task)
    cap = int(rng.integers(0, n + 1))
    c_max = alpha * (n - cap)  # C/alpha + cap <= n
    if c_max <= cap or rng.random() < 0.5:
        cache = int(rng.integers(0, min(cap, c_max) + 1))
    else:
        cache = cap + alpha * int(rng.integers(0, (c_max - cap) // alpha + 1))
    return HomogeneousInstance(task, n, cache, device_for_capacity(task, n, cap, f))


def test_criterion_1_closed_form_equals_oracle():
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    worst, count_mismatch, regimes = 0.0, 0, set()
    for _ in range(1000):
        inst = random_divisible_instance(rng)
        res = closed_form(inst)
        counts, rate = brute_force_problem2(inst)
        regimes.add(res.regime)
        assert res.remainder == 0.0
        worst = max(worst, abs(res.rate - rate) / max(abs(rate), 1e-300) if rate else abs(res.rate))
        count_mismatch += counts != res.counts
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and count_mismatch == 0 and elapsed < 30 and regimes == set(Regime)
    report_criterion(1, ok, f"1000 instances, max rel diff {worst:.2e}, count mismatches {count_mismatch}, "
                            f"regimes {sorted(r.value for r in regimes)}, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 2

def test_criterion_2_regime_slopes():
    task = fig3_task()
    F = crossover_frequency(task)
    rs = rate_mec(task)
    fractions = np.round(np.arange(0, 21) * 0.05, 10)  # C multiples of 3000, all even
    details, ok = [], True
    for ratio in (0.7, 1.2):
        f = ratio * F
        template = HomogeneousInstance(task, N_FIG3, 0, device_for_capacity(task, N_FIG3, 18000, f))
        rows = sweep(template, cache_fractions=fractions, energy_fractions=[0.3])
        assert all(r.status == "ok" for r in rows)
        C = np.array([r.cache_units for r in rows], dtype=float)
        R = np.array([r.rate for r in rows])
        cap = rows[0].capacity
        slopes = np.diff(R) / np.diff(C)
        below = rs / N_FIG3 if f < F else rate_local_compute(task, template.dev) / N_FIG3
        above = rs / (task.alpha * N_FIG3)
        left = C[1:] <= cap
        expect = np.where(left, -below, -above)
        err = float(np.max(np.abs(slopes - expect) / np.abs(expect)))
        # the kink sits exactly at C = cap: last left segment ends there
        kink = float(C[1:][left][-1]) == cap and cap == 18000
        ok &= err <= 1e-9 and kink
        details.append(f"f={ratio}F max rel slope err {err:.1e}, kink at C={cap}")
    report_criterion(2, ok, "; ".join(details))
    assert ok


# ---------------------------------------------------------------- criterion 3

def test_criterion_3_optimal_frequency():
    task = fig3_task()
    F = crossover_frequency(task)
    start = time.perf_counter()
    # energy budget fixed so that capacity is 30% of N at f = 1.2F, shrinking as 1/f^2
    energy = 0.3 * K_EFF * (1.2 * F) ** 2 * task.d_in * task.cycles_per_bit
    grid = np.linspace(F, 4 * F, 10_000)
    rates = np.array([tradeoff_rate(task, N_FIG3, 0, N_FIG3 * energy / (K_EFF * f * f * task.d_in * task.cycles_per_bit), f)
                      for f in grid])
    f_grid = float(grid[int(np.argmin(rates))])
    f_opt = optimal_frequency(task)
    step = float(grid[1] - grid[0])
    elapsed = time.perf_counter() - start
    ok = abs(f_grid - f_opt) <= step and elapsed < 5
    report_criterion(3, ok, f"grid argmin {f_grid / F:.6f}F, formula {f_opt / F:.6f}F, step {step / F:.2e}F, "
                            f"{elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------- criterion 4

def test_criterion_4_trivial_anchors():
    task = fig3_task()
    F = crossover_frequency(task)
    checks = []
    for ratio in (0.7, 1.2):
        none = HomogeneousInstance(task, 100, 0, DeviceCapability(0.0, 0.0, ratio * F, K_EFF))
        checks.append(("C=0,E=0", closed_form(none).rate == rate_mec(task)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for cap in (0, 30, 100):
                full = HomogeneousInstance(task, 100, 200, device_for_capacity(task, 100, cap, ratio * F))
                checks.append((f"C=alpha*N cap={cap}", closed_form(full).rate == 0.0))
    n = 50
    sim = simulate(JointPolicy.all_mec(n), uniform_viewpoints(task, n), DeviceCapability(0, 0, F, K_EFF),
                   generate_stream(np.full(n, 1 / n), 100_000, 0))
    checks.append(("all-MEC simulated", sim.empirical_avg_rate == rate_mec(task)))
    ok = all(c for _, c in checks)
    failed = [name for name, c in checks if not c]
    report_criterion(4, ok, f"{len(checks)} anchors hold" if ok else f"failed: {failed}")
    assert ok


# ---------------------------------------------------------------- criterion 5

@pytest.mark.slow
def test_criterion_5_heterogeneous_ordering(replica_runs):
    runs, elapsed = replica_runs
    rates = np.array([[rep.average_rate, rep.baselines["greedy_caching_computing"],
                       rep.baselines["greedy_3d_caching"], rep.baselines["all_mec"]] for _, _, rep in runs])
    mean = rates.mean(axis=0)
    gain = 1.0 - mean[0] / mean[3]
    per_instance_gain = float(np.mean(1.0 - rates[:, 0] / rates[:, 3]))
    ordered = mean[0] <= mean[1] <= mean[2] <= mean[3]
    ok = ordered and 0.50 <= gain <= 0.75 and elapsed < 600
    report_criterion(5, ok, f"mean rates cccp {mean[0]:.4e} <= gcc {mean[1]:.4e} <= g3d {mean[2]:.4e} <= mec "
                            f"{mean[3]:.4e}: {ordered}; cccp gain {gain:.1%} (per-instance mean {per_instance_gain:.1%}, "
                            f"gcc {1 - mean[1] / mean[3]:.1%}, g3d {1 - mean[2] / mean[3]:.1%}); {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- criterion 6

@pytest.mark.slow
def test_criterion_6_oracle_gap(oracle_runs):
    runs, elapsed = oracle_runs
    ratios = np.array([rep.average_rate / best for _, _, rep, best in runs])
    within = int(np.sum(ratios <= 1.05))
    below = int(np.sum(ratios < 1.0 - 1e-12))
    ok = within >= 0.9 * len(runs) and below == 0 and elapsed < 300
    report_criterion(6, ok, f"{within}/{len(runs)} within 5% of the exhaustive optimum, worst ratio "
                            f"{ratios.max():.4f}, {below} below it, {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- criterion 7

@pytest.mark.slow
def test_criterion_7_monotone_traces_and_valid_policies(replica_runs, oracle_runs):
    worst_rise, traces, failures = -math.inf, 0, 0
    invalid = 0
    everything = [(vps, dev, rep) for vps, dev, rep in replica_runs[0]] + \
                 [(vps, dev, rep) for vps, dev, rep, _ in oracle_runs[0]]
    for vps, dev, rep in everything:
        inst = build_mmkp(vps, dev)
        scale = float(np.sum(np.where(inst.allowed, np.abs(inst.profits), 0.0))) + CccpConfig().mu * inst.profits.size
        for rec in rep.restarts:
            if rec.error:
                failures += 1
                continue
            traces += 1
            rise = float(np.max(np.diff(rec.trace), initial=-math.inf)) / scale
            worst_rise = max(worst_rise, rise)
        for policy in (rep.policy, greedy_3d_caching(vps, dev), greedy_caching_computing(vps, dev)):
            invalid += bool(validate_policy(policy, vps, dev))
    ok = worst_rise <= 1e-9 and invalid == 0 and failures == 0
    report_criterion(7, ok, f"{traces} traces, largest step change {worst_rise:.2e} of the objective scale, "
                            f"{failures} failed restarts, {invalid} invalid emitted policies")
    assert ok


# ---------------------------------------------------------------- criterion 8

@pytest.mark.slow
def test_criterion_8_lp_correctness(replica_runs):
    rng = np.random.default_rng(8)
    mismatches, certs, infeasible = 0, 0, 0
    for _ in range(500):
        c, A_ub, b_ub, A_eq, b_eq, upper = random_program(rng)
        lp = LinearProgram(c, A_ub, b_ub, A_eq, b_eq, upper)
        val, _ = lp_vertex_minimum(c, A_ub, b_ub, A_eq, b_eq, upper)
        res = solve_lp(lp)
        if val is None:
            infeasible += 1
            mismatches += res.status is not LpStatus.INFEASIBLE
            continue
        mismatches += res.status is not LpStatus.OPTIMAL or abs(res.objective - val) > 1e-9
        certs += not check_certificate(lp, res)["ok"]
    gap = max(rec.max_relative_gap for _, _, rep in replica_runs[0] for rec in rep.restarts)
    ok = mismatches == 0 and certs == 0 and gap <= 1e-9
    report_criterion(8, ok, f"500 programs ({infeasible} infeasible): {mismatches} mismatches, {certs} failed "
                            f"certificates; largest CCCP subproblem duality gap {gap:.1e} (relative)")
    assert ok


# ---------------------------------------------------------------- criterion 9

def test_criterion_9_simulation_concentration():
    task = fig3_task()
    f = 0.7 * crossover_frequency(task)
    inst = HomogeneousInstance(task, N_FIG3, 18000, device_for_capacity(task, N_FIG3, 18000, f))
    res = closed_form(inst)
    policy = expand_counts(res.counts, N_FIG3)
    vps = uniform_viewpoints(task, N_FIG3)
    sim = simulate(policy, vps, inst.dev, generate_stream(np.full(N_FIG3, 1 / N_FIG3), 1_000_000, 0))
    budget = inst.dev.energy_budget
    # the policy's expected per-request energy is what the budget constrains
    expected_energy = math.fsum(v.popularity * inst.dev.projection_energy(task) for v, d in
                                zip(vps, policy.compute_local) if d)
    rate_err = abs(sim.empirical_avg_rate - 1.75e9) / 1.75e9
    energy_ok = expected_energy <= budget * (1 + 1e-9) and sim.mean_energy <= budget + 3 * sim.energy_stderr
    ok = rate_err <= 0.01 and sim.deadline_violations == 0 and energy_ok
    report_criterion(9, ok, f"rate {sim.empirical_avg_rate:.5e} ({rate_err:.3%} off 1.75e9), "
                            f"{sim.deadline_violations} deadline violations, energy expected {expected_energy:.6g} J / "
                            f"sample {sim.mean_energy:.6g} J (se {sim.energy_stderr:.2g}) vs budget {budget:.6g} J; "
                            f"sample mean within budget: {sim.mean_energy <= budget}")
    assert ok
