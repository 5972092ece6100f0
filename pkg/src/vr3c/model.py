"""Domain types and route arithmetic for MEC-based mobile VR delivery.

A request for viewpoint ``i`` is served by one of four routes, determined by
the device-side decision triple ``(c3d, c2d, d)``:

====  ===========================  =====  ============================
route  decision                    rate   latency
====  ===========================  =====  ============================
1      3D FOV cached locally        0      0
2      2D cached, local projection  0      D_in*w/f
3      2D downloaded, local proj.   R_V    D_in/R_V + D_in*w/f  (= tau)
4      3D projected at MEC          R_S    D_out/R_S            (= tau)
====  ===========================  =====  ============================

All quantities are SI: bits, seconds, cycles, joules.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AlphaDegenerate, InfeasibleCompute, InvalidParameter, InvalidPolicy

# relative slack allowed on the cache/energy budgets before a policy is flagged
BUDGET_RTOL = 1e-9


class ServiceRoute(enum.IntEnum):
    LOCAL_3D_CACHE = 1
    LOCAL_COMPUTE_2D_CACHE = 2
    LOCAL_COMPUTE_NO_CACHE = 3
    MEC_COMPUTE = 4

    @property
    def decision(self) -> tuple[int, int, int]:
        """The ``(cache3d, cache2d, compute_local)`` triple of this route."""
        return _ROUTE_DECISIONS[self]

    @classmethod
    def from_decision(cls, cache3d: int, cache2d: int, compute_local: int) -> "ServiceRoute":
        try:
            return _DECISION_ROUTES[(int(cache3d), int(cache2d), int(compute_local))]
        except KeyError:
            raise InvalidPolicy(
                f"decision ({cache3d}, {cache2d}, {compute_local}) violates the caching/computing structure"
            ) from None


_ROUTE_DECISIONS = {
    ServiceRoute.LOCAL_3D_CACHE: (1, 0, 0),
    ServiceRoute.LOCAL_COMPUTE_2D_CACHE: (0, 1, 1),
    ServiceRoute.LOCAL_COMPUTE_NO_CACHE: (0, 0, 1),
    ServiceRoute.MEC_COMPUTE: (0, 0, 0),
}
_DECISION_ROUTES = {v: k for k, v in _ROUTE_DECISIONS.items()}


@dataclass(frozen=True)
class ProjectionTask:
    """One FOV projection workload.

    Attributes:
        d_in: size of the 2D FOV in bits.
        d_out: size of the 3D FOV in bits.
        cycles_per_bit: CPU cycles needed per input bit.
        deadline: maximum tolerable service latency in seconds.
    """

    d_in: float
    d_out: float
    cycles_per_bit: float
    deadline: float

    def __post_init__(self):
        for name in ("d_in", "d_out", "cycles_per_bit", "deadline"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameter(f"{name} must be finite and > 0, got {value!r}")
        alpha = self.d_out / self.d_in
        if alpha <= 1:
            raise AlphaDegenerate(f"d_out/d_in must exceed 1, got {alpha!r}")
        if alpha < 2:
            warnings.warn(f"d_out/d_in = {alpha:g} < 2; stereoscopic 3D FOVs are normally at least twice the 2D size",
                          stacklevel=3)

    @property
    def alpha(self) -> float:
        return self.d_out / self.d_in

    @property
    def compute_cycles(self) -> float:
        return self.d_in * self.cycles_per_bit


@dataclass(frozen=True)
class DeviceCapability:
    """Caching/computing resources of the VR device.

    ``energy_budget`` is the average energy allowed per request (joules),
    ``k_eff`` the power-efficiency constant, so one cycle at ``cpu_freq``
    costs ``k_eff * cpu_freq**2`` joules.
    """

    cache_bits: float
    energy_budget: float
    cpu_freq: float
    k_eff: float

    def __post_init__(self):
        for name in ("cache_bits", "energy_budget", "cpu_freq", "k_eff"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise InvalidParameter(f"{name} must be finite and >= 0, got {value!r}")

    def energy_per_cycle(self) -> float:
        return self.k_eff * self.cpu_freq ** 2

    def projection_energy(self, task: ProjectionTask) -> float:
        """Energy of one local projection of ``task``."""
        return self.energy_per_cycle() * task.compute_cycles


@dataclass(frozen=True)
class ViewpointParams:
    task: ProjectionTask
    popularity: float

    def __post_init__(self):
        if not (0.0 <= self.popularity <= 1.0):
            raise InvalidParameter(f"popularity must lie in [0, 1], got {self.popularity!r}")


def _as_bits(values, n=None) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise InvalidPolicy("policy vectors must be one-dimensional")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise InvalidPolicy("policy vectors must be binary")
    out = arr.astype(np.int8)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """Per-viewpoint binary decisions.

    Construction only checks shape and binarity; structural properties
    (3D cache excludes 2D cache and local compute, 2D cache implies local
    compute) are checked by :func:`validate_policy` and enforced by
    :func:`average_rate`.
    """

    cache3d: np.ndarray
    cache2d: np.ndarray
    compute_local: np.ndarray

    def __post_init__(self):
        c3 = _as_bits(self.cache3d)
        c2 = _as_bits(self.cache2d)
        d = _as_bits(self.compute_local)
        if not (c3.shape == c2.shape == d.shape):
            raise InvalidPolicy("policy vectors differ in length")
        object.__setattr__(self, "cache3d", c3)
        object.__setattr__(self, "cache2d", c2)
        object.__setattr__(self, "compute_local", d)

    def __len__(self):
        return self.cache3d.shape[0]

    def __eq__(self, other):
        if not isinstance(other, JointPolicy):
            return NotImplemented
        return (np.array_equal(self.cache3d, other.cache3d)
                and np.array_equal(self.cache2d, other.cache2d)
                and np.array_equal(self.compute_local, other.compute_local))

    __hash__ = None

    @classmethod
    def all_mec(cls, n: int) -> "JointPolicy":
        z = np.zeros(n, dtype=np.int8)
        return cls(z, z, z)

    @classmethod
    def from_routes(cls, routes: Sequence[int]) -> "JointPolicy":
        r = np.asarray(routes, dtype=np.int64)
        if r.size and (r.min() < 1 or r.max() > 4):
            raise InvalidPolicy("routes must be in 1..4")
        return cls(r == 1, r == 2, (r == 2) | (r == 3))

    def structure_ok(self) -> np.ndarray:
        """Boolean mask of viewpoints whose triple is one of the four routes."""
        c3, c2, d = self.cache3d, self.cache2d, self.compute_local
        return (c3 + d <= 1) & (c2 <= d) & ~((c3 == 1) & (c2 == 1))

    def routes(self) -> np.ndarray:
        if not np.all(self.structure_ok()):
            bad = np.flatnonzero(~self.structure_ok())
            raise InvalidPolicy(f"viewpoints {bad[:10].tolist()} do not map to a service route")
        r = np.full(len(self), 4, dtype=np.int64)
        r[self.compute_local == 1] = 3
        r[self.cache2d == 1] = 2
        r[self.cache3d == 1] = 1
        return r


@dataclass(frozen=True)
class Violation:
    """One failed constraint of a policy.

    ``usage``/``limit`` are in the constraint's units; ``slack = limit - usage``
    is negative for a violation. ``index`` is set for per-viewpoint checks.
    """

    kind: str
    usage: float
    limit: float
    index: int | None = None

    @property
    def slack(self) -> float:
        return self.limit - self.usage

    @property
    def overflow(self) -> float:
        return self.usage - self.limit


def rate_mec(task: ProjectionTask) -> float:
    """Minimum rate when the projection runs at the MEC server (``R_S``)."""
    return task.d_out / task.deadline


def compute_latency(task: ProjectionTask, dev: DeviceCapability) -> float:
    if dev.cpu_freq <= 0:
        return math.inf
    return task.compute_cycles / dev.cpu_freq


def compute_feasible(task: ProjectionTask, dev: DeviceCapability) -> bool:
    return compute_latency(task, dev) < task.deadline


def rate_local_compute(task: ProjectionTask, dev: DeviceCapability) -> float:
    """Minimum rate when the 2D FOV is downloaded and projected on the device (``R_V``)."""
    latency = compute_latency(task, dev)
    if not latency < task.deadline:
        raise InfeasibleCompute(
            f"local projection takes {latency:g} s, deadline is {task.deadline:g} s"
        )
    return task.d_in / (task.deadline - latency)


def crossover_frequency(task: ProjectionTask) -> float:
    """CPU frequency at which local-compute and MEC rates coincide.

    Below it downloading the 2D FOV and projecting locally needs *more*
    bandwidth than fetching the 3D FOV.
    """
    alpha = task.alpha
    if alpha <= 1:
        raise AlphaDegenerate(f"alpha must exceed 1, got {alpha!r}")
    return task.d_out * task.cycles_per_bit / ((alpha - 1.0) * task.deadline)


def zipf_popularities(gamma: float, n: int) -> np.ndarray:
    """``P_i`` proportional to ``1/i**gamma`` for ``i = 1..n``, normalized."""
    if n < 1:
        raise InvalidParameter("zipf needs n >= 1")
    if not math.isfinite(gamma) or gamma < 0:
        raise InvalidParameter(f"zipf exponent must be >= 0, got {gamma!r}")
    weights = np.arange(1, n + 1, dtype=float) ** -gamma
    return weights / math.fsum(weights)


@dataclass(frozen=True, eq=False)
class ViewpointArrays:
    """Column view of a viewpoint list; internal helper for vectorised maths."""

    d_in: np.ndarray
    d_out: np.ndarray
    cycles_per_bit: np.ndarray
    deadline: np.ndarray
    popularity: np.ndarray
    rate_mec: np.ndarray
    latency: np.ndarray = field(repr=False)
    feasible: np.ndarray = field(repr=False)
    rate_local: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, viewpoints: Sequence[ViewpointParams], dev: DeviceCapability) -> "ViewpointArrays":
        d_in = np.array([v.task.d_in for v in viewpoints], dtype=float)
        d_out = np.array([v.task.d_out for v in viewpoints], dtype=float)
        w = np.array([v.task.cycles_per_bit for v in viewpoints], dtype=float)
        tau = np.array([v.task.deadline for v in viewpoints], dtype=float)
        p = np.array([v.popularity for v in viewpoints], dtype=float)
        with np.errstate(divide="ignore"):
            latency = d_in * w / dev.cpu_freq if dev.cpu_freq > 0 else np.full_like(d_in, np.inf)
            feasible = latency < tau
            rate_local = np.where(feasible, d_in / np.where(feasible, tau - latency, 1.0), np.inf)
        energy = dev.energy_per_cycle() * d_in * w
        return cls(d_in, d_out, w, tau, p, d_out / tau, latency, feasible, rate_local, energy)


def _cache_usage(policy: JointPolicy, cols: ViewpointArrays) -> float:
    return math.fsum(cols.d_in * policy.cache2d + cols.d_out * policy.cache3d)


def _energy_usage(policy: JointPolicy, cols: ViewpointArrays) -> float:
    return math.fsum(cols.popularity * cols.energy * policy.compute_local)


def over_budget(usage: float, limit: float) -> bool:
    return usage > limit + BUDGET_RTOL * max(limit, usage)


def validate_policy(policy: JointPolicy, viewpoints: Sequence[ViewpointParams],
                    dev: DeviceCapability) -> list[Violation]:
    """Every failed constraint of ``policy``; an empty list means feasible."""
    if len(policy) != len(viewpoints):
        raise InvalidPolicy(f"policy covers {len(policy)} viewpoints, instance has {len(viewpoints)}")
    cols = ViewpointArrays.build(viewpoints, dev)
    found = []
    c3, c2, d = policy.cache3d, policy.cache2d, policy.compute_local
    for i in np.flatnonzero((c3 == 1) & (c2 == 1)):
        found.append(Violation("Property1", usage=2.0, limit=1.0, index=int(i)))
    for i in np.flatnonzero(c3 + d > 1):
        found.append(Violation("Property3Exclusive", usage=float(c3[i] + d[i]), limit=1.0, index=int(i)))
    for i in np.flatnonzero(c2 > d):
        found.append(Violation("Property3Compute", usage=float(c2[i]), limit=float(d[i]), index=int(i)))
    for i in np.flatnonzero((d == 1) & ~cols.feasible):
        found.append(Violation("ComputeDeadline", usage=float(cols.latency[i]),
                               limit=float(cols.deadline[i]), index=int(i)))
    cache = _cache_usage(policy, cols)
    if over_budget(cache, dev.cache_bits):
        found.append(Violation("CacheOverflow", usage=cache, limit=dev.cache_bits))
    energy = _energy_usage(policy, cols)
    if over_budget(energy, dev.energy_budget):
        found.append(Violation("EnergyOverflow", usage=energy, limit=dev.energy_budget))
    return found


def route_rates(policy: JointPolicy, cols: ViewpointArrays) -> np.ndarray:
    """Per-viewpoint minimum rate under ``policy`` (0, 0, R_V or R_S by route)."""
    routes = policy.routes()
    bad = np.flatnonzero(((routes == 2) | (routes == 3)) & ~cols.feasible)
    if bad.size:
        raise InfeasibleCompute(f"viewpoints {bad[:10].tolist()} cannot be projected locally before the deadline")
    rates = np.zeros(len(policy))
    rates[routes == 3] = cols.rate_local[routes == 3]
    rates[routes == 4] = cols.rate_mec[routes == 4]
    return rates


def average_rate(policy: JointPolicy, viewpoints: Sequence[ViewpointParams], dev: DeviceCapability) -> float:
    """Popularity-weighted minimum transmission rate of ``policy`` in bit/s."""
    if len(policy) != len(viewpoints):
        raise InvalidPolicy(f"policy covers {len(policy)} viewpoints, instance has {len(viewpoints)}")
    cols = ViewpointArrays.build(viewpoints, dev)
    if not np.all(policy.structure_ok()):
        raise InvalidPolicy("policy violates the caching/computing structure")
    return math.fsum(cols.popularity * route_rates(policy, cols))


def uniform_viewpoints(task: ProjectionTask, n: int) -> list[ViewpointParams]:
    """``n`` identical viewpoints with popularity ``1/n``."""
    vp = ViewpointParams(task, 1.0 / n)
    return [vp] * n
