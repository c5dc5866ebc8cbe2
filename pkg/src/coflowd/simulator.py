"""Fluid big-switch simulator.

Rates are constant between decision epochs (time 0 and flow completions).
Policies:

* ``PriorityGreedy`` -- scan flows in priority order and give each the
  residual min(ingress, egress) capacity.  The order is fixed (NC), drawn
  per realization (RO), or recomputed from realized loads (CL).
* ``RoundRobin`` -- rate min(b_i / n_i, b_o / n_o).
* ``Philae`` -- simplified multi-queue weighted sharing driven by known
  mean coflow sizes.

``simulate`` is the instrumented reference engine (full rate log).
``completion_times`` runs the compiled kernels and is what the Monte-Carlo
paths use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .distributions import sample_many
from .model import Instance, Realization, aggregate_loads, batch_loads
from .ordering import PriorityOrder, bottleneck_prefix, sincronia_order

FINISH_RTOL = _kernels.FINISH_RTOL
RATE_FLOOR = _kernels.RATE_FLOOR


@dataclass(frozen=True)
class PhConfig:
    num_queues: int = 10
    first_threshold: float = 10.0
    growth: float = 10.0
    decay: float = 10.0

    def __post_init__(self):
        if self.num_queues < 1:
            raise ValueError("need at least one queue")
        if not (self.first_threshold > 0 and self.growth > 1 and self.decay > 0):
            raise ValueError("thresholds must grow geometrically from a positive start")

    def thresholds(self) -> np.ndarray:
        return self.first_threshold * self.growth ** np.arange(self.num_queues - 1)

    def queue_of(self, size: float) -> int:
        """Lowest queue whose upper threshold is >= size; last queue is unbounded."""
        for q, hi in enumerate(self.thresholds()):
            if size <= hi:
                return q
        return self.num_queues - 1


@dataclass(frozen=True, eq=False)
class PriorityGreedy:
    order: PriorityOrder | tuple | None = None
    source: str = "fixed"  # fixed | realized | random
    tag: str = "nc"

    def __post_init__(self):
        if self.source not in ("fixed", "realized", "random"):
            raise ValueError(f"unknown order source {self.source!r}")
        if self.source == "fixed" and self.order is None:
            raise ValueError("a fixed-order policy needs an order")


@dataclass(frozen=True)
class RoundRobin:
    tag: str = "rr"


@dataclass(frozen=True)
class Philae:
    cfg: PhConfig = PhConfig()
    tag: str = "ph"


POLICY_NAMES = ("cl", "nc", "ro", "rr", "ph")


def make_policy(name: str, instance: Instance, ph: PhConfig | None = None):
    if name == "nc":
        return PriorityGreedy(sincronia_order(aggregate_loads(instance), instance.weights), "fixed", "nc")
    if name == "cl":
        return PriorityGreedy(None, "realized", "cl")
    if name == "ro":
        return PriorityGreedy(None, "random", "ro")
    if name == "rr":
        return RoundRobin()
    if name == "ph":
        return Philae(ph or PhConfig())
    raise ValueError(f"unknown policy {name!r}; choose from {POLICY_NAMES}")


def _pi(order) -> tuple[int, ...]:
    return order.pi if isinstance(order, PriorityOrder) else tuple(order)


@dataclass(eq=False)
class Segment:
    start: float
    end: float
    rates: np.ndarray
    duration: float = math.nan  # exact epoch length; end - start loses digits late in a run

    def __post_init__(self):
        if math.isnan(self.duration):
            self.duration = self.end - self.start


@dataclass(eq=False)
class ScheduleResult:
    completion: np.ndarray          # per coflow position
    flow_completion: np.ndarray     # per flow, flat order
    events: list = field(default_factory=list)
    policy: str = ""
    seed: int | None = None
    order: tuple | None = None      # priority order used, if any

    def weighted_cct(self, weights) -> float:
        return float(np.dot(weights, self.completion))


# -- per-epoch rate rules -----------------------------------------------------

def flow_scan_order(instance: Instance, pi) -> np.ndarray:
    """Flow indices by (coflow priority, decreasing expected size, flow id)."""
    rank = np.empty(instance.num_coflows, dtype=np.int64)
    rank[list(pi)] = np.arange(len(pi))
    fid = np.array([f.flow_id for f in instance.flows])
    return np.lexsort((fid, -instance.expected_sizes, rank[instance.flow_coflow])).astype(np.int64)


def greedy_rates(instance: Instance, active: np.ndarray, scan: np.ndarray) -> np.ndarray:
    cap = instance.capacities
    res = cap.astype(float).copy()
    floor = RATE_FLOOR * cap.max()
    rates = np.zeros(len(active))
    for f in scan:
        if not active[f]:
            continue
        a, b = instance.src[f], instance.dst[f]
        r = min(res[a], res[b])
        if r > floor:
            rates[f] = r
            res[a] -= r
            res[b] -= r
    return rates


def round_robin_rates(instance: Instance, active: np.ndarray) -> np.ndarray:
    """r = min(b_src / n_src, b_dst / n_dst) with n counting ongoing flows per port."""
    L = instance.num_ports
    src, dst = instance.src[active], instance.dst[active]
    counts = np.bincount(src, minlength=L) + np.bincount(dst, minlength=L)
    cap = instance.capacities
    rates = np.zeros(len(active))
    rates[active] = np.minimum(cap[src] / counts[src], cap[dst] / counts[dst])
    return rates


def philae_queues(instance: Instance, cfg: PhConfig, expected_sizes=None) -> np.ndarray:
    """Queue index per coflow from its known mean total size."""
    sizes = instance.expected_sizes if expected_sizes is None else np.asarray(expected_sizes)
    totals = np.bincount(instance.flow_coflow, weights=sizes, minlength=instance.num_coflows)
    return np.array([cfg.queue_of(s) for s in totals], dtype=np.int64)


def philae_rates(instance: Instance, active: np.ndarray, cfg: PhConfig,
                 expected_sizes=None, queues=None) -> np.ndarray:
    """Per port: queue q gets weight decay**-q among nonempty queues, split
    evenly between that queue's flows there; a flow takes the min of its two
    port shares.  One pass, no redistribution of unused share."""
    if queues is None:
        queues = philae_queues(instance, cfg, expected_sizes)
    fq = queues[instance.flow_coflow]
    L, K = instance.num_ports, cfg.num_queues
    cnt = np.zeros((L, K))
    idx = np.flatnonzero(active)
    np.add.at(cnt, (instance.src[idx], fq[idx]), 1.0)
    np.add.at(cnt, (instance.dst[idx], fq[idx]), 1.0)
    qw = cfg.decay ** -np.arange(K, dtype=float)
    wsum = (cnt > 0) @ qw
    cap = instance.capacities
    rates = np.zeros(len(active))
    for f in idx:
        q = fq[f]
        a, b = instance.src[f], instance.dst[f]
        rates[f] = min(cap[a] * qw[q] / wsum[a] / cnt[a, q], cap[b] * qw[q] / wsum[b] / cnt[b, q])
    return rates


# -- reference event loop ---------------------------------------------------

def _run(instance: Instance, vol: np.ndarray, rate_fn, record: bool):
    F = len(vol)
    resid = vol.astype(float).copy()
    comp = np.zeros(F)
    active = resid > 0
    t = 0.0
    events = []
    total = resid.sum()
    while active.any():
        rates = rate_fn(active)
        moving = active & (rates > 0)
        if not moving.any():
            raise RuntimeError(f"stalled at t={t}: no active flow has a positive rate")
        ttf = np.full(F, np.inf)
        ttf[moving] = resid[moving] / rates[moving]
        dt = ttf.min()
        if record:
            events.append(Segment(t, t + dt, rates.copy(), dt))
        t += dt
        done = moving & (ttf <= dt * (1 + FINISH_RTOL))
        resid[moving] -= rates[moving] * dt
        resid[done] = 0.0
        comp[done] = t
        active &= ~done
        new_total = resid.sum()
        assert new_total < total or not active.any(), "residual volume did not decrease"
        total = new_total
    return comp, events


def _resolve_order(instance, vol, policy: PriorityGreedy, rng):
    if policy.source == "fixed":
        return _pi(policy.order)
    if policy.source == "realized":
        return sincronia_order(aggregate_loads(instance, vol), instance.weights).pi
    if rng is None:
        raise ValueError("random-order policy needs an rng")
    return tuple(int(k) for k in rng.permutation(instance.num_coflows))


def simulate(instance: Instance, realization, policy, rng: np.random.Generator | None = None,
             record: bool = True) -> ScheduleResult:
    """Run one realization through the reference engine."""
    vol = realization.as_array(instance) if isinstance(realization, Realization) \
        else np.asarray(realization, dtype=float)
    seed = realization.seed if isinstance(realization, Realization) else None
    order = None
    if isinstance(policy, PriorityGreedy):
        order = _resolve_order(instance, vol, policy, rng)
        scan = flow_scan_order(instance, order)
        fn = lambda act: greedy_rates(instance, act, scan)
    elif isinstance(policy, RoundRobin):
        fn = lambda act: round_robin_rates(instance, act)
    elif isinstance(policy, Philae):
        queues = philae_queues(instance, policy.cfg)
        fn = lambda act: philae_rates(instance, act, policy.cfg, queues=queues)
    else:
        raise TypeError(f"unsupported policy {policy!r}")
    comp, events = _run(instance, vol, fn, record)
    cof = _kernels.coflow_max(comp, instance.flow_coflow, instance.num_coflows)
    return ScheduleResult(cof, comp, events, policy.tag, seed, order)


def greedy_rate_allocation(instance: Instance, realization, order) -> ScheduleResult:
    return simulate(instance, realization, PriorityGreedy(order, "fixed", "greedy"))


# -- compiled path ------------------------------------------------------------

def completion_times(instance: Instance, vol: np.ndarray, policy,
                     rng: np.random.Generator | None = None, loads=None) -> np.ndarray:
    """Per-coflow completion times via the compiled kernels."""
    vol = np.ascontiguousarray(vol, dtype=float)
    src, dst, cap = instance.src, instance.dst, instance.capacities.astype(float)
    if isinstance(policy, PriorityGreedy):
        if policy.source == "realized" and loads is not None:
            pi = sincronia_order(loads, instance.weights).pi
        else:
            pi = _resolve_order(instance, vol, policy, rng)
        comp = _kernels.greedy_completions(src, dst, cap, vol, flow_scan_order(instance, pi))
    elif isinstance(policy, RoundRobin):
        comp = _kernels.share_completions(src, dst, cap, vol, np.zeros(len(vol), np.int64), 1.0, 1, 0)
    elif isinstance(policy, Philae):
        fq = philae_queues(instance, policy.cfg)[instance.flow_coflow]
        comp = _kernels.share_completions(src, dst, cap, vol, fq, float(policy.cfg.decay),
                                          policy.cfg.num_queues, 1)
    else:
        raise TypeError(f"unsupported policy {policy!r}")
    return _kernels.coflow_max(comp, instance.flow_coflow, instance.num_coflows)


def draw_volumes(instance: Instance, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """(count, F) i.i.d. flow volumes; flows sharing a spec are drawn together."""
    F = len(instance.flows)
    out = np.empty((count, F))
    groups: dict = {}
    for i, f in enumerate(instance.flows):
        groups.setdefault(f.size, []).append(i)
    for spec, idx in groups.items():
        out[:, idx] = sample_many(spec, rng, count * len(idx)).reshape(count, len(idx))
    return out


def realization_rng(seed: int, instance_id: int, rep: int, stream: int = 0) -> np.random.Generator:
    """Generator for one (instance, replication, stream) leaf of the seed tree."""
    return np.random.default_rng([seed, instance_id, rep, stream])


STREAM_VOLUMES = 0
STREAM_RANDOM_ORDER = 1


@dataclass(eq=False)
class PolicyEstimate:
    mean: float
    se: float
    costs: np.ndarray

    @property
    def ci95(self) -> tuple[float, float]:
        return self.mean - 1.96 * self.se, self.mean + 1.96 * self.se


def estimate(costs) -> PolicyEstimate:
    costs = np.asarray(costs, dtype=float)
    se = costs.std(ddof=1) / math.sqrt(len(costs)) if len(costs) > 1 else 0.0
    return PolicyEstimate(float(costs.mean()), float(se), costs)


def evaluate_policy(instance: Instance, policy, num_realizations: int, seed: int = 0,
                    instance_id: int = 0, engine: str = "fast") -> PolicyEstimate:
    """Mean weighted CCT over independent realizations, with standard error.

    Realization ``r`` is drawn from ``realization_rng(seed, instance_id, r)``
    so every policy evaluated with the same seed sees the same volumes.
    """
    if num_realizations < 1:
        raise ValueError("need at least one realization")
    w = instance.weights
    costs = np.empty(num_realizations)
    for r in range(num_realizations):
        vol = draw_volumes(instance, realization_rng(seed, instance_id, r, STREAM_VOLUMES))[0]
        rng = realization_rng(seed, instance_id, r, STREAM_RANDOM_ORDER)
        if engine == "fast":
            comp = completion_times(instance, vol, policy, rng)
        else:
            comp = simulate(instance, vol, policy, rng, record=False).completion
        costs[r] = w @ comp
    return estimate(costs)


# -- invariant checks -----------------------------------------------------------

def capacity_violation(instance: Instance, result: ScheduleResult) -> float:
    """Largest excess of port rate sum over capacity across all segments."""
    worst = 0.0
    L = instance.num_ports
    for seg in result.events:
        use = np.bincount(instance.src, seg.rates, L) + np.bincount(instance.dst, seg.rates, L)
        worst = max(worst, float((use - instance.capacities).max()))
    return worst


def volume_error(result: ScheduleResult, vol) -> float:
    """Largest relative gap between integrated rate and realized volume."""
    vol = np.asarray(vol, dtype=float)
    sent = np.zeros_like(vol)
    for seg in result.events:
        sent += seg.rates * seg.duration
    scale = np.maximum(vol, 1e-300)
    err = np.abs(sent - vol) / scale
    err[vol == 0] = np.abs(sent[vol == 0])
    return float(err.max(initial=0.0))


def priority_violations(instance: Instance, result: ScheduleResult, tol: float = 1e-9) -> int:
    """Count (segment, flow) pairs breaking greedy priority preservation.

    An active flow must leave one of its two ports saturated by itself and
    the flows ahead of it in scan order; otherwise a lower-priority flow was
    served at its expense or capacity was left idle.
    """
    scan = flow_scan_order(instance, result.order)
    cap = instance.capacities
    bad = 0
    done_before = result.flow_completion
    for seg in result.events:
        used = np.zeros(instance.num_ports)
        for f in scan:
            active = done_before[f] > seg.start + 1e-15 * max(1.0, seg.start)
            r = seg.rates[f]
            a, b = instance.src[f], instance.dst[f]
            used[a] += r
            used[b] += r
            if not active:
                if r > 0:
                    bad += 1
                continue
            if used[a] < cap[a] * (1 - tol) and used[b] < cap[b] * (1 - tol):
                bad += 1
    return bad


def prefix_bound_slack(instance: Instance, result: ScheduleResult, vol) -> np.ndarray:
    """2 * max_l prefix realized load - completion, per priority position."""
    p = aggregate_loads(instance, vol).values
    pi = list(result.order)
    return 2 * bottleneck_prefix(p, pi) - result.completion[pi]


def clairvoyant_loads(instance: Instance, volumes: np.ndarray) -> np.ndarray:
    return batch_loads(instance, volumes)
