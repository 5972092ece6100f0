"""Instance files (JSON) and the random heterogeneous instance generator.

Heterogeneous form::

    {"viewpoints": [{"d_in": ..., "d_out": ..., "cycles_per_bit": ...,
                     "deadline": ..., "popularity": ...}, ...],
     "device": {"cache_bits": ..., "energy_budget": ..., "cpu_freq": ..., "k_eff": ...}}

Popularities may instead come from ``"zipf": {"gamma": g, "n": N}`` at top
level, in which case the viewpoint entries omit ``popularity``.

Homogeneous form::

    {"homogeneous": {"task": {"d_in": ..., "d_out": ..., "cycles_per_bit": ..., "deadline": ...},
                     "n": N, "cache_units": C},
     "device": {...}}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InstanceParseError, InvalidParameter, Vr3cError
from .homogeneous import HomogeneousInstance
from .model import DeviceCapability, ProjectionTask, ViewpointParams, zipf_popularities

POPULARITY_TOL = 1e-12


@dataclass(frozen=True)
class HeterogeneousInstance:
    viewpoints: tuple[ViewpointParams, ...]
    device: DeviceCapability

    def __post_init__(self):
        object.__setattr__(self, "viewpoints", tuple(self.viewpoints))
        if not self.viewpoints:
            raise InvalidParameter("an instance needs at least one viewpoint")
        total = math.fsum(v.popularity for v in self.viewpoints)
        if abs(total - 1.0) > POPULARITY_TOL:
            raise InvalidParameter(f"popularities sum to {total!r}, expected 1")

    @property
    def n(self) -> int:
        return len(self.viewpoints)


def _task(obj: dict, where: str) -> ProjectionTask:
    try:
        return ProjectionTask(float(obj["d_in"]), float(obj["d_out"]), float(obj["cycles_per_bit"]),
                              float(obj["deadline"]))
    except KeyError as exc:
        raise InstanceParseError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InstanceParseError(f"{where}: {exc}") from None


def _device(obj: dict, where: str) -> DeviceCapability:
    try:
        return DeviceCapability(float(obj.get("cache_bits", 0.0)), float(obj["energy_budget"]),
                                float(obj["cpu_freq"]), float(obj["k_eff"]))
    except KeyError as exc:
        raise InstanceParseError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InstanceParseError(f"{where}: {exc}") from None


def instance_from_dict(doc: dict, source: str = "<instance>") -> HeterogeneousInstance | HomogeneousInstance:
    if not isinstance(doc, dict):
        raise InstanceParseError(f"{source}: top level must be an object")
    if "device" not in doc:
        raise InstanceParseError(f"{source}: missing 'device'")
    device = _device(doc["device"], f"{source}: device")
    try:
        if "homogeneous" in doc:
            h = doc["homogeneous"]
            return HomogeneousInstance(_task(h.get("task", {}), f"{source}: homogeneous.task"),
                                       int(h["n"]), int(h["cache_units"]), device)
        raw = doc.get("viewpoints")
        if not isinstance(raw, list) or not raw:
            raise InstanceParseError(f"{source}: 'viewpoints' must be a non-empty list")
        if "zipf" in doc:
            z = doc["zipf"]
            n = int(z.get("n", len(raw)))
            if n != len(raw):
                raise InstanceParseError(f"{source}: zipf.n={n} but {len(raw)} viewpoints listed")
            pops = zipf_popularities(float(z["gamma"]), n).tolist()
        else:
            try:
                pops = [float(v["popularity"]) for v in raw]
            except KeyError:
                raise InstanceParseError(f"{source}: every viewpoint needs 'popularity' (or give 'zipf')") from None
        viewpoints = [ViewpointParams(_task(v, f"{source}: viewpoints[{i}]"), p)
                      for i, (v, p) in enumerate(zip(raw, pops))]
        return HeterogeneousInstance(tuple(viewpoints), device)
    except KeyError as exc:
        raise InstanceParseError(f"{source}: missing field {exc.args[0]!r}") from None
    except InstanceParseError:
        raise
    except (Vr3cError, TypeError, ValueError) as exc:
        raise InstanceParseError(f"{source}: {exc}") from None


def load_instance(path) -> HeterogeneousInstance | HomogeneousInstance:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InstanceParseError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return instance_from_dict(doc, str(path))


def _task_dict(t: ProjectionTask) -> dict[str, float]:
    return {"d_in": t.d_in, "d_out": t.d_out, "cycles_per_bit": t.cycles_per_bit, "deadline": t.deadline}


def instance_to_dict(inst: HeterogeneousInstance | HomogeneousInstance) -> dict[str, Any]:
    if isinstance(inst, HomogeneousInstance):
        dev = inst.dev
        body = {"homogeneous": {"task": _task_dict(inst.task), "n": inst.n, "cache_units": inst.cache_units}}
    else:
        dev = inst.device
        body = {"viewpoints": [{**_task_dict(v.task), "popularity": v.popularity} for v in inst.viewpoints]}
    body["device"] = {"cache_bits": dev.cache_bits, "energy_budget": dev.energy_budget,
                      "cpu_freq": dev.cpu_freq, "k_eff": dev.k_eff}
    return body


def dump_instance(inst, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2) + "\n")


def generate_instance(n: int = 100, seed: int = 0, *, d_in_range: tuple[float, float] = (1e6, 25e6),
                      alpha: float = 2.0, cycles_per_bit: float = 10.0, deadline: float = 0.02,
                      gamma: float = 0.8, cpu_freq: float = 50e9, k_eff: float = 1e-27,
                      cache_fraction: float = 0.3, energy_fraction: float = 0.25,
                      distribution: str = "uniform") -> HeterogeneousInstance:
    """Random heterogeneous instance in the style of the Zipf/50 GHz experiments.

    2D FOV sizes are drawn from ``d_in_range`` (uniformly by default, or
    log-uniformly), the cache holds ``cache_fraction`` of all 2D FOV bits and
    the energy budget pays for ``energy_fraction`` of the popularity-weighted
    projection work.
    """
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    lo, hi = d_in_range
    if distribution == "uniform":
        d_in = rng.uniform(lo, hi, size=n)
    elif distribution == "loguniform":
        d_in = np.exp(rng.uniform(math.log(lo), math.log(hi), size=n))
    else:
        raise InvalidParameter(f"unknown size distribution {distribution!r}")
    pops = zipf_popularities(gamma, n)
    cache_bits = cache_fraction * math.fsum(d_in)
    energy = energy_fraction * k_eff * cycles_per_bit * cpu_freq ** 2 * math.fsum(pops * d_in)
    viewpoints = tuple(
        ViewpointParams(ProjectionTask(float(d), float(alpha * d), cycles_per_bit, deadline), float(p))
        for d, p in zip(d_in, pops)
    )
    return HeterogeneousInstance(viewpoints, DeviceCapability(cache_bits, energy, cpu_freq, k_eff))
