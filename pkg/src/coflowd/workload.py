"""Random instance generation and import of the coflow-benchmark trace format.

Trace format (whitespace separated)::

    <num_machines> <num_coflows>
    <id> <arrival_ms> <num_mappers> <m_1> ... <num_reducers> <r_1:MB> ...

A reducer's megabytes are split evenly over the coflow's mappers, giving one
flow per (mapper, reducer) pair.  Machine ``i`` maps to ingress port ``i`` and
egress port ``num_machines + i``, so a trace spans ``2 * num_machines`` ports.
Arrival times are parsed and dropped; every coflow is present at time 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distributions import ConfigError, SizeSpec, empirical_from_trace
from .model import Coflow, FlowSpec, Instance, ValidationError, make_ports


class TraceParseError(ValueError):
    def __init__(self, msg, lineno=None):
        super().__init__(f"line {lineno}: {msg}" if lineno else msg)
        self.lineno = lineno


@dataclass(frozen=True)
class CoflowSkeleton:
    id: int
    arrival_ms: float
    mappers: tuple[int, ...]
    reducers: tuple[tuple[int, float], ...]  # (machine, MB received)

    @property
    def flows(self) -> list[tuple[int, int, float]]:
        """(mapper, reducer, MB) triples, mapper-major."""
        m = len(self.mappers)
        return [(a, r, mb / m) for a in self.mappers for r, mb in self.reducers]


@dataclass(frozen=True)
class Trace:
    num_machines: int
    coflows: tuple[CoflowSkeleton, ...]

    @property
    def num_ports(self) -> int:
        return 2 * self.num_machines

    def flow_sizes(self) -> list[float]:
        return [s for c in self.coflows for _, _, s in c.flows]

    def port_coflow_sizes(self) -> list[float]:
        """Aggregated volume of each coflow at each port it touches."""
        out = []
        for c in self.coflows:
            agg: dict[int, float] = {}
            for a, r, s in c.flows:
                agg[a] = agg.get(a, 0.0) + s
                agg[self.num_machines + r] = agg.get(self.num_machines + r, 0.0) + s
            out.extend(agg.values())
        return out


def parse_trace(text: str) -> Trace:
    lines = [(i, ln.split()) for i, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    if not lines:
        raise TraceParseError("empty trace")
    lineno, head = lines[0]
    try:
        num_machines, num_coflows = int(head[0]), int(head[1])
    except (IndexError, ValueError):
        raise TraceParseError("header must be '<num_ports> <num_coflows>'", lineno) from None
    coflows = []
    for lineno, tok in lines[1:]:
        try:
            cid, arrival = int(tok[0]), float(tok[1])
            nm = int(tok[2])
            mappers = tuple(int(t) for t in tok[3:3 + nm])
            nr = int(tok[3 + nm])
            red_tok = tok[4 + nm:4 + nm + nr]
            reducers = []
            for t in red_tok:
                port, mb = t.split(":")
                reducers.append((int(port), float(mb)))
        except (IndexError, ValueError):
            raise TraceParseError("malformed coflow line", lineno) from None
        if len(mappers) != nm or len(reducers) != nr or len(tok) != 4 + nm + nr:
            raise TraceParseError("token count does not match mapper/reducer counts", lineno)
        if nm < 1 or nr < 1:
            raise TraceParseError("coflow needs at least one mapper and one reducer", lineno)
        for p in list(mappers) + [r for r, _ in reducers]:
            if not 0 <= p < num_machines:
                raise ValidationError(f"line {lineno}: machine {p} outside [0, {num_machines})")
        coflows.append(CoflowSkeleton(cid, arrival, mappers, tuple(reducers)))
    if len(coflows) != num_coflows:
        raise TraceParseError(f"header announces {num_coflows} coflows, found {len(coflows)}", 1)
    return Trace(num_machines, tuple(coflows))


def import_trace(path) -> Trace:
    return parse_trace(Path(path).read_text())


def format_trace(trace: Trace) -> str:
    rows = [f"{trace.num_machines} {len(trace.coflows)}"]
    for c in trace.coflows:
        red = " ".join(f"{r}:{mb:g}" for r, mb in c.reducers)
        maps = " ".join(str(m) for m in c.mappers)
        rows.append(f"{c.id} {c.arrival_ms:g} {len(c.mappers)} {maps} {len(c.reducers)} {red}")
    return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class GenConfig:
    num_ports: int
    num_coflows: int
    size_spec: SizeSpec
    seed: int = 0
    structure: str = "synthetic"  # or "trace:<path>"
    trace: Trace | None = None    # pre-parsed trace, overrides the path

    def __post_init__(self):
        if self.num_ports < 2 or self.num_ports % 2:
            raise ConfigError(f"num_ports must be even and >= 2, got {self.num_ports}")
        if self.num_coflows < 1:
            raise ConfigError("num_coflows must be >= 1")
        if not (self.structure == "synthetic" or self.structure.startswith("trace")):
            raise ConfigError(f"unknown structure {self.structure!r}")

    @property
    def label(self) -> str:
        return "synthetic" if self.structure == "synthetic" else "trace-upsample"

    def load_trace(self) -> Trace:
        if self.trace is not None:
            return self.trace
        path = self.structure.partition(":")[2]
        if not path:
            raise ConfigError("trace structure requires a path: 'trace:<path>'")
        if not Path(path).exists():
            raise ConfigError(f"trace file not found: {path}")
        return import_trace(path)


def _pick_ports(rng, count, half, offset):
    replace = count > half
    return [int(p) + offset for p in rng.choice(half, size=count, replace=replace)]


def generate_instance(cfg: GenConfig, rng: np.random.Generator | None = None) -> Instance:
    """Random instance; flow sizes are left as ``cfg.size_spec`` descriptors."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    L, n, half = cfg.num_ports, cfg.num_coflows, cfg.num_ports // 2
    ports = make_ports(L)
    coflows = []
    if cfg.structure == "synthetic":
        for k in range(n):
            m = int(rng.integers(1, half + 1))
            r = int(rng.integers(1, half + 1))
            srcs = sorted(_pick_ports(rng, m, half, 0))
            dsts = sorted(_pick_ports(rng, r, half, half))
            flows = [(a, b) for a in srcs for b in dsts]
            coflows.append(Coflow(k, tuple(FlowSpec(k, j, a, b, cfg.size_spec)
                                           for j, (a, b) in enumerate(flows))))
        return Instance(ports, tuple(coflows))

    trace = cfg.load_trace()
    if n == len(trace.coflows) and L == trace.num_ports:
        # identity upsample: keep the trace's own port assignment
        skeletons = trace.coflows
        maps = [({a: a for a in s.mappers}, {r: half + r for r, _ in s.reducers}) for s in skeletons]
    else:
        picks = rng.integers(0, len(trace.coflows), size=n)
        skeletons = [trace.coflows[i] for i in picks]
        maps = []
        for s in skeletons:
            srcs = _pick_ports(rng, len(s.mappers), half, 0)
            dsts = _pick_ports(rng, len(s.reducers), half, half)
            maps.append((dict(zip(s.mappers, srcs)), dict(zip([r for r, _ in s.reducers], dsts))))
    for k, (s, (mmap, rmap)) in enumerate(zip(skeletons, maps)):
        flows = tuple(FlowSpec(k, j, mmap[a], rmap[r], cfg.size_spec)
                      for j, (a, r, _) in enumerate(s.flows))
        coflows.append(Coflow(k, flows))
    return Instance(ports, tuple(coflows))


def trace_empirical_spec(trace: Trace) -> SizeSpec:
    """Empirical per-flow size distribution of a trace."""
    return empirical_from_trace(trace.flow_sizes())


def trace_volumes(trace: Trace) -> np.ndarray:
    """Trace MB per flow, in the flat flow order of the identity upsample."""
    return np.array(trace.flow_sizes(), dtype=float)
