"""Sincronia primal-dual priority ordering over coflows.

Works on a port-by-coflow load matrix (expected loads for the
non-clairvoyant policy, realized loads for the clairvoyant one).  Besides
the permutation, the run records the dual variables it sets, so callers can
evaluate the dual objective and check dual feasibility afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lpbound import f_value
from .model import LoadMatrix

WEIGHT_TOL = 1e-12
TIE_RTOL = 1e-12  # values this close count as tied, so ties never hinge on rounding


@dataclass(frozen=True)
class DualVar:
    port: int
    coflows: tuple[int, ...]  # sorted coflow positions forming the set
    value: float

    @property
    def mask(self) -> int:
        m = 0
        for k in self.coflows:
            m |= 1 << k
        return m


@dataclass(frozen=True, eq=False)
class PriorityOrder:
    pi: tuple[int, ...]          # coflow positions, highest priority first
    primal_C: np.ndarray         # per coflow position
    duals: tuple[DualVar, ...]
    loads: LoadMatrix
    weights: np.ndarray          # original weights
    weight_trajectory: tuple[np.ndarray, ...] = field(default=(), repr=False)

    @property
    def rank(self) -> np.ndarray:
        """rank[k] = priority index of coflow position k (0 = highest)."""
        r = np.empty(len(self.pi), dtype=np.int64)
        r[list(self.pi)] = np.arange(len(self.pi))
        return r

    def primal_cost(self) -> float:
        return float(self.weights @ self.primal_C)

    def coflow_ids(self) -> list:
        ids = self.loads.coflow_ids
        return [ids[k] for k in self.pi] if ids else list(self.pi)


def bottleneck_prefix(values: np.ndarray, pi) -> np.ndarray:
    """max over ports of the prefix sums along ``pi``; entry t covers pi[:t+1].

    ``values`` is (L, n) or a stack (R, L, n).
    """
    cols = np.asarray(pi)
    v = values[..., cols]
    return np.cumsum(v, axis=-1).max(axis=-2)


def sincronia_order(loads: LoadMatrix | np.ndarray, weights=None) -> PriorityOrder:
    """Run the primal-dual ordering; O(n^2 L).

    Ties: bottleneck port -> lowest port index; selected coflow -> lowest
    coflow position.  Coflows with zero load at the bottleneck and zero
    residual weight (0/0) are not candidates.
    """
    if not isinstance(loads, LoadMatrix):
        loads = LoadMatrix(np.asarray(loads, dtype=float))
    mu = loads.values
    L, n = mu.shape
    w0 = np.ones(n) if weights is None else np.asarray(weights, dtype=float).copy()
    if w0.shape != (n,):
        raise ValueError(f"expected {n} weights, got {w0.shape}")
    if (w0 < 0).any():
        raise ValueError("weights must be nonnegative")
    if (mu < 0).any():
        raise ValueError("loads must be nonnegative")
    if n and not (mu.max(axis=0) > 0).all():
        raise ValueError("every coflow needs a positive load on some port")

    w = w0.copy()
    active = np.ones(n, dtype=bool)
    port_sums = mu.sum(axis=1)
    C = np.zeros(n)
    pi = [0] * n
    duals = []
    traj = [w.copy()]
    scale = max(1.0, float(w0.max(initial=0.0)))
    for t in range(n - 1, -1, -1):
        top = port_sums.max()
        b = int(np.flatnonzero(port_sums >= top - TIE_RTOL * abs(top))[0])
        idx = np.flatnonzero(active)
        mb = mu[b, idx]
        wa = w[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(mb > 0, wa / np.where(mb > 0, mb, 1.0), np.where(wa > 0, np.inf, np.nan))
        valid = ~np.isnan(ratio)
        r = np.where(valid, ratio, np.inf)
        lo = r.min()
        j = int(np.flatnonzero(r <= lo + TIE_RTOL * abs(lo))[0]) if np.isfinite(lo) else \
            (int(np.flatnonzero(valid)[0]) if valid.any() else 0)
        k = int(idx[j])
        C[k] = port_sums[b]
        y = w[k] / mu[b, k] if mu[b, k] > 0 else 0.0
        duals.append(DualVar(b, tuple(int(i) for i in idx), float(y)))
        w[idx] -= y * mu[b, idx]
        w[k] = 0.0
        low = w[idx] < 0
        if low.any():
            worst = float(-w[idx][low].min())
            assert worst <= WEIGHT_TOL * scale * max(1, n), f"weight update went negative by {worst}"
            w[idx[low]] = 0.0
        traj.append(w.copy())
        pi[t] = k
        active[k] = False
        # recomputed, not decremented: drift would perturb bottleneck ties
        port_sums = mu[:, active].sum(axis=1)
    return PriorityOrder(tuple(pi), C, tuple(duals), loads, w0, tuple(traj))


def dual_objective(order: PriorityOrder) -> float:
    mu = order.loads.values
    return float(sum(f_value(d.port, d.coflows, mu) * d.value for d in order.duals))


def check_dual_feasibility(order: PriorityOrder) -> np.ndarray:
    """Slack w_k - sum of mu[l,k] * y[l,A] over recorded sets containing k."""
    mu = order.loads.values
    used = np.zeros(mu.shape[1])
    for d in order.duals:
        cols = list(d.coflows)
        used[cols] += mu[d.port, cols] * d.value
    return order.weights - used


def random_order(n: int, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(k) for k in rng.permutation(n))
