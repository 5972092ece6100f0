"""Request-stream simulator.

Requests arrive one at a time, each naming a viewpoint drawn independently
from the popularity distribution.  Every request is served along the route
its viewpoint is assigned by the policy and is charged that route's minimum
rate, latency and device energy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadDistribution, InfeasibleRoute, InvalidParameter, InvalidPolicy
from .model import DeviceCapability, JointPolicy, ViewpointArrays, ViewpointParams

POPULARITY_TOL = 1e-12
# latency this close to the deadline still counts as on time
DEADLINE_RTOL = 1e-12
_BATCH = 1 << 20


@dataclass(frozen=True, eq=False)
class RequestStream:
    """Viewpoint indices (1-based) of ``length`` consecutive requests."""

    indices: np.ndarray
    seed: int

    @property
    def length(self) -> int:
        return int(self.indices.size)

    def counts(self, n: int) -> np.ndarray:
        return np.bincount(self.indices - 1, minlength=n)


@dataclass(frozen=True)
class SimResult:
    n_requests: int
    empirical_avg_rate: float
    rate_stderr: float
    route_counts: tuple[int, int, int, int]
    mean_energy: float
    energy_stderr: float
    deadline_violations: int
    max_latency: float

    def to_dict(self) -> dict:
        return {
            "n_requests": self.n_requests,
            "empirical_avg_rate": self.empirical_avg_rate,
            "rate_stderr": self.rate_stderr,
            "route_counts": {str(r): c for r, c in enumerate(self.route_counts, start=1)},
            "mean_energy": self.mean_energy,
            "energy_stderr": self.energy_stderr,
            "deadline_violations": self.deadline_violations,
            "max_latency": self.max_latency,
        }


def generate_stream(popularities, T: int, seed: int) -> RequestStream:
    """Draw ``T`` i.i.d. requests by inverse-CDF sampling on a Philox stream."""
    p = np.asarray(popularities, dtype=float).ravel()
    if p.size == 0 or np.any(~np.isfinite(p)) or np.any(p < 0):
        raise BadDistribution("popularities must be finite and non-negative")
    total = math.fsum(p)
    if abs(total - 1.0) > POPULARITY_TOL:
        raise BadDistribution(f"popularities sum to {total!r}, expected 1")
    T = int(T)
    if T < 1:
        raise InvalidParameter("stream length must be >= 1")
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    u = rng.random(T)
    idx = np.searchsorted(cdf, u, side="right")
    # zero-popularity tail entries share the final cdf value; never land on them
    np.minimum(idx, int(np.flatnonzero(p > 0)[-1]), out=idx)
    return RequestStream(idx.astype(np.int64) + 1, int(seed))


def _per_viewpoint(policy: JointPolicy, cols: ViewpointArrays):
    routes = policy.routes()
    local = (routes == 2) | (routes == 3)
    bad = np.flatnonzero(local & ~cols.feasible)
    if bad.size:
        raise InfeasibleRoute(f"viewpoints {(bad[:10] + 1).tolist()} cannot be projected locally in time")
    n = len(policy)
    rate = np.zeros(n)
    latency = np.zeros(n)
    energy = np.zeros(n)
    r3 = routes == 3
    r4 = routes == 4
    rate[r3] = cols.rate_local[r3]
    rate[r4] = cols.rate_mec[r4]
    latency[local] = cols.latency[local]
    latency[r3] += cols.d_in[r3] / cols.rate_local[r3]
    latency[r4] = cols.d_out[r4] / cols.rate_mec[r4]
    energy[local] = cols.energy[local]
    return routes, rate, latency, energy


def _mean_and_se(counts: np.ndarray, values: np.ndarray, total: int) -> tuple[float, float]:
    mean = math.fsum(counts * values) / total
    if total < 2:
        return mean, 0.0
    var = math.fsum(counts * (values - mean) ** 2) / (total - 1)
    return mean, math.sqrt(var / total)


def simulate(policy: JointPolicy, viewpoints: Sequence[ViewpointParams], dev: DeviceCapability,
             stream: RequestStream) -> SimResult:
    """Serve every request of ``stream`` under ``policy`` and aggregate."""
    n = len(viewpoints)
    if len(policy) != n:
        raise InvalidPolicy(f"policy covers {len(policy)} viewpoints, instance has {n}")
    if stream.length and (stream.indices.min() < 1 or stream.indices.max() > n):
        raise InvalidParameter("stream refers to a viewpoint outside the instance")
    cols = ViewpointArrays.build(viewpoints, dev)
    routes, rate, latency, energy = _per_viewpoint(policy, cols)

    # per-viewpoint request counts are an associative summary of the stream
    counts = np.zeros(n, dtype=np.int64)
    for start in range(0, stream.length, _BATCH):
        counts += np.bincount(stream.indices[start:start + _BATCH] - 1, minlength=n)

    total = stream.length
    avg_rate, rate_se = _mean_and_se(counts, rate, total)
    mean_energy, energy_se = _mean_and_se(counts, energy, total)
    late = latency > cols.deadline * (1.0 + DEADLINE_RTOL)
    requested = counts > 0
    route_counts = tuple(int(counts[routes == r].sum()) for r in (1, 2, 3, 4))
    return SimResult(
        n_requests=total,
        empirical_avg_rate=avg_rate,
        rate_stderr=rate_se,
        route_counts=route_counts,
        mean_energy=mean_energy,
        energy_stderr=energy_se,
        deadline_violations=int(counts[late].sum()),
        max_latency=float(np.max(latency[requested], initial=0.0)),
    )


def write_route_histogram(result: SimResult, path) -> None:
    """One row per route: request count and share of the stream."""
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["route", "requests", "share"])
        for r, c in enumerate(result.route_counts, start=1):
            out.writerow([r, c, repr(c / result.n_requests) if result.n_requests else "0.0"])
