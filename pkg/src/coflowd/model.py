"""Big-switch coflow model: ports, flows, coflows, realizations, port loads.

Ports are global indices ``0..L-1``; the first ``L/2`` are ingress, the rest
egress.  A flow touches exactly one ingress and one egress port, so the set of
flows of coflow ``k`` at port ``l`` is recovered from the flow endpoints.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .distributions import ConfigError, SizeSpec, expected_size

INGRESS = "ingress"
EGRESS = "egress"


class ValidationError(ValueError):
    """Structural inconsistency in an instance or realization."""


@dataclass(frozen=True)
class Port:
    id: int
    kind: str
    capacity: float = 1.0

    def __post_init__(self):
        if self.kind not in (INGRESS, EGRESS):
            raise ValidationError(f"port {self.id}: bad kind {self.kind!r}")
        if not self.capacity > 0:
            raise ValidationError(f"port {self.id}: capacity must be positive")


@dataclass(frozen=True)
class FlowSpec:
    coflow_id: int
    flow_id: int
    src: int
    dst: int
    size: SizeSpec


@dataclass(frozen=True)
class Coflow:
    id: int
    flows: tuple[FlowSpec, ...]
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValidationError(f"coflow {self.id}: negative weight")
        if not self.flows:
            raise ValidationError(f"coflow {self.id}: no flows")


def make_ports(num_ports: int, capacities: Sequence[float] | None = None) -> tuple[Port, ...]:
    if num_ports < 2 or num_ports % 2:
        raise ValidationError(f"number of ports must be even and >= 2, got {num_ports}")
    caps = [1.0] * num_ports if capacities is None else list(capacities)
    if len(caps) != num_ports:
        raise ValidationError("capacities length does not match number of ports")
    half = num_ports // 2
    return tuple(Port(i, INGRESS if i < half else EGRESS, float(c)) for i, c in enumerate(caps))


@dataclass(frozen=True)
class Instance:
    ports: tuple[Port, ...]
    coflows: tuple[Coflow, ...]

    def __post_init__(self):
        L = len(self.ports)
        if L < 2 or L % 2:
            raise ValidationError(f"number of ports must be even, got {L}")
        for i, p in enumerate(self.ports):
            if p.id != i:
                raise ValidationError("ports must be listed in id order")
            if p.kind != (INGRESS if i < L // 2 else EGRESS):
                raise ValidationError(f"port {i} kind breaks the ingress/egress split")
        seen = set()
        for c in self.coflows:
            if c.id in seen:
                raise ValidationError(f"duplicate coflow id {c.id}")
            seen.add(c.id)
            for f in c.flows:
                if f.coflow_id != c.id:
                    raise ValidationError(f"flow {f.flow_id} filed under wrong coflow {c.id}")
                if not (0 <= f.src < L and 0 <= f.dst < L):
                    raise ValidationError(f"coflow {c.id} flow {f.flow_id}: unknown port")
                if self.ports[f.src].kind != INGRESS or self.ports[f.dst].kind != EGRESS:
                    raise ValidationError(
                        f"coflow {c.id} flow {f.flow_id}: src must be ingress, dst egress")

    @property
    def num_ports(self) -> int:
        return len(self.ports)

    @property
    def num_coflows(self) -> int:
        return len(self.coflows)

    @cached_property
    def capacities(self) -> np.ndarray:
        return np.array([p.capacity for p in self.ports])

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.coflows], dtype=float)

    @cached_property
    def flows(self) -> tuple[FlowSpec, ...]:
        """All flows, coflow-major. This is the canonical flat order."""
        return tuple(f for c in self.coflows for f in c.flows)

    @cached_property
    def flow_index(self) -> dict[tuple[int, int], int]:
        return {(f.coflow_id, f.flow_id): i for i, f in enumerate(self.flows)}

    @cached_property
    def src(self) -> np.ndarray:
        return np.array([f.src for f in self.flows], dtype=np.int64)

    @cached_property
    def dst(self) -> np.ndarray:
        return np.array([f.dst for f in self.flows], dtype=np.int64)

    @cached_property
    def flow_coflow(self) -> np.ndarray:
        """Position of each flow's coflow in ``self.coflows``."""
        pos = {c.id: k for k, c in enumerate(self.coflows)}
        return np.array([pos[f.coflow_id] for f in self.flows], dtype=np.int64)

    @cached_property
    def expected_sizes(self) -> np.ndarray:
        return np.array([expected_size(f.size) for f in self.flows])

    @cached_property
    def incidence(self) -> np.ndarray:
        """(L*n, F) matrix mapping flow sizes to capacity-scaled port loads."""
        L, n, F = self.num_ports, self.num_coflows, len(self.flows)
        m = np.zeros((L * n, F))
        cols = np.arange(F)
        k = self.flow_coflow
        m[self.src * n + k, cols] += 1.0 / self.capacities[self.src]
        m[self.dst * n + k, cols] += 1.0 / self.capacities[self.dst]
        return m

    def with_weights(self, weights: Sequence[float]) -> "Instance":
        cfs = tuple(Coflow(c.id, c.flows, float(w)) for c, w in zip(self.coflows, weights))
        return Instance(self.ports, cfs)


@dataclass(frozen=True)
class Realization:
    volumes: Mapping[tuple[int, int], float]
    seed: int | None = None

    def as_array(self, instance: Instance) -> np.ndarray:
        idx = instance.flow_index
        missing = set(idx) - set(self.volumes)
        if missing:
            raise ConfigError(f"realization lacks volumes for flows {sorted(missing)[:5]}")
        extra = set(self.volumes) - set(idx)
        if extra:
            raise ValidationError(f"realization has unknown flows {sorted(extra)[:5]}")
        out = np.empty(len(idx))
        for key, i in idx.items():
            v = float(self.volumes[key])
            if v < 0:
                raise ValidationError(f"negative volume for flow {key}")
            out[i] = v
        return out

    @classmethod
    def from_array(cls, instance: Instance, values, seed=None) -> "Realization":
        return cls({(f.coflow_id, f.flow_id): float(v) for f, v in zip(instance.flows, values)}, seed)


@dataclass(frozen=True)
class LoadMatrix:
    """``values[l, k]``: processing time of coflow ``k`` at port ``l`` in isolation."""
    values: np.ndarray
    kind: str = "expected"  # or "realized"
    coflow_ids: tuple[int, ...] = field(default=())

    @property
    def num_ports(self) -> int:
        return self.values.shape[0]

    @property
    def num_coflows(self) -> int:
        return self.values.shape[1]


def _sizes_array(instance: Instance, sizes) -> tuple[np.ndarray, str]:
    if sizes is None:
        return instance.expected_sizes, "expected"
    if isinstance(sizes, Realization):
        return sizes.as_array(instance), "realized"
    if isinstance(sizes, Mapping):
        return Realization(sizes).as_array(instance), "realized"
    arr = np.asarray(sizes, dtype=float)
    if arr.shape != (len(instance.flows),):
        raise ConfigError(f"expected {len(instance.flows)} flow sizes, got shape {arr.shape}")
    return arr, "realized"


def aggregate_loads(instance: Instance, sizes=None) -> LoadMatrix:
    """Port-by-coflow processing times; ``sizes=None`` uses expected sizes."""
    arr, kind = _sizes_array(instance, sizes)
    L, n = instance.num_ports, instance.num_coflows
    vals = np.zeros((L, n))
    k = instance.flow_coflow
    np.add.at(vals, (instance.src, k), arr)
    np.add.at(vals, (instance.dst, k), arr)
    vals /= instance.capacities[:, None]
    return LoadMatrix(vals, kind, tuple(c.id for c in instance.coflows))


def batch_loads(instance: Instance, volumes: np.ndarray) -> np.ndarray:
    """Loads for a stack of realizations: (R, F) volumes -> (R, L, n)."""
    R = volumes.shape[0]
    flat = volumes @ instance.incidence.T
    return flat.reshape(R, instance.num_ports, instance.num_coflows)


# -- canonical JSON ---------------------------------------------------------

def instance_to_json(instance: Instance) -> dict:
    return {
        "num_ports": instance.num_ports,
        "capacities": [p.capacity for p in instance.ports],
        "coflows": [
            {"id": c.id, "weight": c.weight,
             "flows": [{"id": f.flow_id, "src": f.src, "dst": f.dst, "size_spec": f.size.to_json()}
                       for f in c.flows]}
            for c in instance.coflows
        ],
    }


def instance_from_json(obj: dict) -> Instance:
    ports = make_ports(int(obj["num_ports"]), obj.get("capacities"))
    coflows = []
    for c in obj["coflows"]:
        cid = int(c["id"])
        flows = tuple(
            FlowSpec(cid, int(f.get("id", j)), int(f["src"]), int(f["dst"]),
                     SizeSpec.from_json(f["size_spec"]))
            for j, f in enumerate(c["flows"]))
        coflows.append(Coflow(cid, flows, float(c.get("weight", 1.0))))
    return Instance(ports, tuple(coflows))


def realization_to_json(instance: Instance, real: Realization) -> dict:
    return {"seed": real.seed,
            "volumes": [[f.coflow_id, f.flow_id, real.volumes[(f.coflow_id, f.flow_id)]]
                        for f in instance.flows]}


def realization_from_json(obj: dict) -> Realization:
    return Realization({(int(c), int(j)): float(v) for c, j, v in obj["volumes"]}, obj.get("seed"))


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_json(json.load(fh))


def save_instance(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_json(instance), fh, indent=1)
