"""Homogeneous viewpoints: closed-form optimum, count expansion and oracle.

With identical tasks and uniform popularity the vector problem collapses to
three counts: ``n_cache3d`` cached 3D FOVs, ``n_cache2d`` cached 2D FOVs and
``n_compute`` local projections.  The minimum rate over those counts is

    R_S - R_S/N * c3d - R_S/N * min(c2d, d) - (R_S - R_V)/N * (d - min(c2d, d))

and its minimizer has a closed form that depends only on which side of the
crossover frequency the device CPU runs.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AlphaDegenerate,
    CountsExceedN,
    EnumerationTooLarge,
    InfeasibleCompute,
    InvalidParameter,
    InvalidPolicy,
    NegativeDiscriminant,
    Vr3cError,
)
from .model import (
    DeviceCapability,
    JointPolicy,
    ProjectionTask,
    compute_feasible,
    crossover_frequency,
    rate_local_compute,
    rate_mec,
)

# capacities within this relative distance of an integer snap to it before flooring
_CAPACITY_SNAP = 1e-9
ORACLE_LIMIT = 10 ** 8


class Regime(enum.Enum):
    LOCAL_COMPUTE_LIMITED = "LocalComputeLimited"
    MEC_COMPUTE_LIMITED = "MecComputeLimited"


def regime_of(task: ProjectionTask, cpu_freq: float) -> Regime:
    # f == F belongs to the MEC-limited side
    if cpu_freq < crossover_frequency(task):
        return Regime.LOCAL_COMPUTE_LIMITED
    return Regime.MEC_COMPUTE_LIMITED


def snap_floor(x: float) -> int:
    nearest = round(x)
    if abs(x - nearest) <= _CAPACITY_SNAP * max(1.0, abs(x)):
        return int(nearest)
    return math.floor(x)


@dataclass(frozen=True)
class HomogeneousInstance:
    """``n`` identical viewpoints, a cache of ``cache_units * task.d_in`` bits.

    ``dev.cache_bits`` is overwritten with ``cache_units * task.d_in`` so the
    device description stays consistent with the unit count.
    """

    task: ProjectionTask
    n: int
    cache_units: int
    dev: DeviceCapability

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameter(f"n must be a positive integer, got {self.n!r}")
        if int(self.cache_units) != self.cache_units or self.cache_units < 0:
            raise InvalidParameter(f"cache_units must be a non-negative integer, got {self.cache_units!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "cache_units", int(self.cache_units))
        object.__setattr__(self, "dev", dataclasses.replace(self.dev, cache_bits=self.cache_units * self.task.d_in))
        if self.cache_units / self.task.alpha + self.capacity > self.n:
            warnings.warn("C/alpha + compute capacity exceeds N; the instance is outside the usual design range",
                          stacklevel=3)

    @property
    def capacity_real(self) -> float:
        """``N * E / (k f^2 D_in w)``: how many projections the energy budget pays for."""
        unit = self.dev.projection_energy(self.task)
        if unit == 0:
            return math.inf
        return self.n * self.dev.energy_budget / unit

    @property
    def capacity(self) -> int:
        real = self.capacity_real
        if math.isinf(real):
            return self.n
        return min(snap_floor(real), self.n)

    @property
    def crossover(self) -> float:
        return crossover_frequency(self.task)

    @property
    def regime(self) -> Regime:
        return regime_of(self.task, self.dev.cpu_freq)


@dataclass(frozen=True)
class CountPolicy:
    n_cache3d: int
    n_cache2d: int
    n_compute: int

    def __post_init__(self):
        for name in ("n_cache3d", "n_cache2d", "n_compute"):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"{name} must be >= 0")

    def cache_usage_units(self, alpha: float) -> float:
        return self.n_cache2d + alpha * self.n_cache3d

    def fits(self, inst: HomogeneousInstance) -> bool:
        cache_ok = (self.n_cache2d + inst.task.alpha * self.n_cache3d) * inst.task.d_in \
            <= inst.cache_units * inst.task.d_in * (1 + 1e-12)
        return cache_ok and self.n_compute <= inst.capacity


@dataclass(frozen=True)
class ClosedFormResult:
    counts: CountPolicy
    rate: float
    regime: Regime
    # cache units left idle because alpha does not divide C - n_cache2d
    remainder: float


def max_cache3d(free_units: int, alpha: float) -> int:
    """Largest number of 3D FOVs whose ``alpha * d_in`` bits fit into ``free_units`` 2D slots."""
    if free_units <= 0:
        return 0
    count = math.floor(free_units / alpha)
    if (count + 1) * alpha <= free_units * (1 + 1e-12):
        count += 1
    while count > 0 and count * alpha > free_units * (1 + 1e-12):
        count -= 1
    return count


def problem_rate(inst: HomogeneousInstance, counts: CountPolicy) -> float:
    """Average rate of the count policy (the collapsed objective)."""
    n = inst.n
    rs = rate_mec(inst.task)
    served_2d = min(counts.n_cache2d, counts.n_compute)
    uncached = counts.n_compute - served_2d
    rate = rs * (n - counts.n_cache3d - served_2d) / n
    if uncached:
        rv = rate_local_compute(inst.task, inst.dev)
        rate -= (rs - rv) / n * uncached
    return rate


def closed_form(inst: HomogeneousInstance) -> ClosedFormResult:
    """Optimal counts and minimum rate.

    Both regimes cache ``min(C, cap)`` 2D FOVs and spend the rest of the cache
    on 3D FOVs; they differ in how many projections run locally: ``min(C, cap)``
    below the crossover frequency, all ``cap`` of them at or above it.
    """
    cap = inst.capacity
    regime = inst.regime
    n_2d = min(inst.cache_units, cap)
    n_compute = n_2d if regime is Regime.LOCAL_COMPUTE_LIMITED else cap
    if n_compute > 0 and not compute_feasible(inst.task, inst.dev):
        raise InfeasibleCompute(
            f"optimal policy projects {n_compute} FOVs locally but D_in*w/f_V >= tau at f_V={inst.dev.cpu_freq:g}"
        )
    free = inst.cache_units - n_2d
    # a viewpoint cannot be both 3D-cached and projected locally
    n_3d = min(max_cache3d(free, inst.task.alpha), inst.n - n_compute)
    counts = CountPolicy(n_3d, n_2d, n_compute)
    remainder = free - inst.task.alpha * n_3d
    if abs(remainder) <= 1e-9 * max(1.0, free):
        remainder = 0.0
    return ClosedFormResult(counts, problem_rate(inst, counts), regime, remainder)


def tradeoff_rate(task: ProjectionTask, n: int, cache_units: float, capacity: float, cpu_freq: float) -> float:
    """Real-valued minimum rate surface (no integer rounding of C/alpha or capacity)."""
    rs = rate_mec(task)
    alpha = task.alpha
    shared = min(cache_units, capacity)
    rate = rs - rs / n * (cache_units / alpha + (1 - 1 / alpha) * shared)
    dev = DeviceCapability(0.0, 0.0, cpu_freq, 0.0)
    if shared > 0 and not compute_feasible(task, dev):
        raise InfeasibleCompute(f"local projection misses the deadline at f_V={cpu_freq:g}")
    if cpu_freq >= crossover_frequency(task) and capacity > shared:
        rv = rate_local_compute(task, dev)
        rate -= (rs - rv) / n * (capacity - shared)
    return rate


def expand_counts(counts: CountPolicy, n: int) -> JointPolicy:
    """Lay the counts out as vectors: 3D caches first, then 2D caches and local projections."""
    c3, c2, d = counts.n_cache3d, counts.n_cache2d, counts.n_compute
    if c2 > d:
        raise InvalidPolicy(f"{c2} cached 2D FOVs but only {d} local projections")
    if c3 + d > n:
        raise CountsExceedN(f"{c3} 3D caches plus {d} local projections exceed N={n}")
    cache3d = np.zeros(n, dtype=np.int8)
    cache2d = np.zeros(n, dtype=np.int8)
    compute = np.zeros(n, dtype=np.int8)
    cache3d[:c3] = 1
    cache2d[c3:c3 + c2] = 1
    compute[c3:c3 + d] = 1
    return JointPolicy(cache3d, cache2d, compute)


def brute_force_problem2(inst: HomogeneousInstance, limit: int = ORACLE_LIMIT) -> tuple[CountPolicy, float]:
    """Exhaustive minimum over all ``(n_cache2d, n_compute)``.

    ``n_cache3d`` takes the largest value the leftover cache allows, capped at
    ``n - n_compute`` so every candidate is realisable by some policy.

    Among equal rates the smallest ``n_compute`` wins, then the smallest
    ``n_cache3d``, then the smallest ``n_cache2d``.
    """
    C = inst.cache_units
    cap = inst.capacity
    if not compute_feasible(inst.task, inst.dev):
        cap = 0
    if (C + 1) * (cap + 1) > limit:
        raise EnumerationTooLarge(f"{(C + 1) * (cap + 1)} candidates exceed the limit {limit}")
    n = inst.n
    rs = rate_mec(inst.task)
    rv = rate_local_compute(inst.task, inst.dev) if cap > 0 else rs
    alpha = inst.task.alpha

    d = np.arange(cap + 1)
    # rates live on the scale of R_S; differences below this are rounding
    tie = 1e-12 * rs
    best_key = None
    best = None
    for c2 in range(C + 1):
        c3 = np.minimum(max_cache3d(C - c2, alpha), np.maximum(n - d, 0))
        served = np.minimum(c2, d)
        rate = rs * (n - c3 - served) / n - (rs - rv) * (d - served) / n
        j = int(np.argmin(rate))
        tied = np.flatnonzero(rate <= rate[j] + tie)
        for dj in tied:
            key = (float(rate[dj]), int(dj), int(c3[dj]), c2)
            if best is None or _better(key, best_key, tie):
                best_key = key
                best = CountPolicy(int(c3[dj]), c2, int(dj))
    return best, problem_rate(inst, best)


def _better(key, incumbent, tie: float) -> bool:
    rate, d, c3, c2 = key
    rate0, d0, c30, c20 = incumbent
    if rate < rate0 - tie:
        return True
    if rate > rate0 + tie:
        return False
    return (d, c3, c2) < (d0, c30, c20)


def optimal_frequency(task: ProjectionTask) -> float:
    """CPU frequency minimizing the rate with no cache, at or above the crossover.

    Depends on the task only, not on the energy budget or ``k``.
    """
    if task.alpha <= 1:
        raise AlphaDegenerate(f"alpha must exceed 1, got {task.alpha!r}")
    F = crossover_frequency(task)
    rs = rate_mec(task)
    lead = 1.0 - task.d_in / (4.0 * rs * task.deadline)
    radicand = lead * lead * F * F - task.d_in * task.cycles_per_bit / task.deadline * F
    if radicand < 0:
        raise NegativeDiscriminant(f"radicand {radicand:g} < 0 for alpha={task.alpha:g}")
    return lead * F + math.sqrt(radicand)


@dataclass(frozen=True)
class SweepRow:
    cache_fraction: float
    energy_fraction: float
    cpu_freq: float
    cache_units: int
    capacity: int
    rate: float
    regime: str
    counts: CountPolicy | None
    status: str


SWEEP_AXES = ("cache_fraction", "energy_fraction", "cpu_freq")


def sweep(template: HomogeneousInstance,
          cache_fractions: Iterable[float] | None = None,
          energy_fractions: Iterable[float] | None = None,
          cpu_freqs: Iterable[float] | None = None) -> list[SweepRow]:
    """Closed-form rate over a grid, row-major in (cache, energy, frequency).

    ``cache_fraction`` is ``C/N`` (rounded to an integer C).  ``energy_fraction``
    is ``E / (k f_ref^2 D_in w)`` at the template's own CPU frequency ``f_ref``,
    so the energy budget in joules stays fixed while the frequency axis moves
    and the capacity shrinks as ``(f_ref/f)^2``.
    """
    task, n, dev = template.task, template.n, template.dev
    ref_unit = dev.projection_energy(task)
    if cache_fractions is None:
        cache_fractions = [template.cache_units / n]
    if energy_fractions is None:
        energy_fractions = [dev.energy_budget / ref_unit if ref_unit else 0.0]
    if cpu_freqs is None:
        cpu_freqs = [dev.cpu_freq]
    cache_fractions, energy_fractions, cpu_freqs = list(cache_fractions), list(energy_fractions), list(cpu_freqs)

    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for cf in cache_fractions:
            for ef in energy_fractions:
                for f in cpu_freqs:
                    rows.append(_sweep_point(task, n, dev, ref_unit, cf, ef, f))
    return rows


def _sweep_point(task, n, dev, ref_unit, cf, ef, f) -> SweepRow:
    units = int(round(cf * n))
    point_dev = dataclasses.replace(dev, energy_budget=ef * ref_unit, cpu_freq=f)
    try:
        inst = HomogeneousInstance(task, n, units, point_dev)
        res = closed_form(inst)
    except Vr3cError as exc:
        return SweepRow(cf, ef, f, units, -1, math.nan, "", None, type(exc).__name__)
    status = "ok" if res.remainder <= 1e-9 else "remainder"
    return SweepRow(cf, ef, f, units, inst.capacity, res.rate, res.regime.value, res.counts, status)


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*SWEEP_AXES, "rate", "regime", "c3d", "c2d", "d", "status"])
        for r in rows:
            c = r.counts
            writer.writerow([
                repr(float(r.cache_fraction)), repr(float(r.energy_fraction)), repr(float(r.cpu_freq)),
                repr(float(r.rate)), r.regime,
                "" if c is None else c.n_cache3d,
                "" if c is None else c.n_cache2d,
                "" if c is None else c.n_compute,
                r.status,
            ])
