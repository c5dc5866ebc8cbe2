"""Closed-form upper bounds on alpha and a Monte-Carlo estimator of alpha.

alpha is the worst ratio, over priority prefixes, between the expected
realized bottleneck load and the bottleneck of expected loads.  The
non-clairvoyant order is within 4 * alpha of the LP bound, so every
function here is reported both as alpha and as the factor 4 * alpha.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .distributions import SizeSpec, moments_to_params, sample_many, spec_moments
from .model import Instance, aggregate_loads, batch_loads
from .ordering import PriorityOrder, bottleneck_prefix

EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class BoundInputs:
    L: int
    p: float = 2.0
    m_p: float = 0.0        # bound on E|X|^p of centred processing times
    sigma_max: float = 0.0
    mu_min: float = 1.0     # smallest strictly positive expected processing time
    eta_max: float = 0.0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be positive")
        if not self.p > 1:
            raise ValueError("moment order p must exceed 1")
        if not self.mu_min > 0:
            raise ValueError("mu_min must be positive")
        if self.m_p < 0 or self.sigma_max < 0 or self.eta_max < 0:
            raise ValueError("dispersion inputs must be nonnegative")

    @property
    def gamma(self) -> float:
        return (self.sigma_max / self.mu_min) ** 2

    @classmethod
    def from_instance(cls, instance: Instance) -> "BoundInputs":
        """p = 2 inputs from the per-(port, coflow) processing-time moments."""
        mu = aggregate_loads(instance).values
        var_flow = np.array([spec_moments(f.size)[1] ** 2 for f in instance.flows])
        var = np.zeros_like(mu)
        k = instance.flow_coflow
        np.add.at(var, (instance.src, k), var_flow)
        np.add.at(var, (instance.dst, k), var_flow)
        sd = np.sqrt(var) / instance.capacities[:, None]
        pos = mu > 0
        eta = float((sd[pos] / mu[pos]).max(initial=0.0))
        smax = float(sd.max(initial=0.0))
        return cls(instance.num_ports, 2.0, smax ** 2, smax, float(mu[pos].min()), eta)


def ub_general_p(inp: BoundInputs) -> float:
    """1 + L^(1/p) m_p^(1/p) / mu_min; p = 2 with m_p = sigma_max^2 gives 1 + sqrt(L) sigma_max / mu_min."""
    return 1.0 + inp.L ** (1.0 / inp.p) * inp.m_p ** (1.0 / inp.p) / inp.mu_min


def _gamma_excess(d: float) -> float:
    """closed form minus 1 for c = 1 + d, written to avoid cancellation near c = 1."""
    return d + math.log1p(d + math.sqrt(d * (2.0 + d)))


def ub_gamma(L: int, gamma: float) -> float:
    if L < 2 or gamma < 0:
        raise ValueError("need L >= 2 and gamma >= 0")
    if gamma == 0:
        return 1.0
    return 1.0 + _gamma_excess(gamma * math.log(L))


def ub_normal(L: int, eta_max: float) -> float:
    if L < 2 or eta_max < 0:
        raise ValueError("need L >= 2 and eta_max >= 0")
    return 1.0 + math.sqrt(2.0 * math.log(L)) * eta_max


TABLE_FAMILIES = ("gamma", "normal", "pareto", "general")


def ub_table(family: str, L: int, eta: float) -> float:
    """Table-mode alpha bound: per-flow sigma/mu is taken to be eta."""
    if family == "gamma":
        return ub_gamma(L, eta * eta)
    if family == "normal":
        return ub_normal(L, eta)
    if family in ("pareto", "general"):
        return ub_general_p(BoundInputs(L, 2.0, eta * eta, eta, 1.0, eta))
    raise ValueError(f"no closed-form bound for family {family!r}")


def _scaled_u_minus_log1p(v: float, s: float) -> float:
    """(u - log(1 + u)) / s^2 at u = s v, by its power series for small u."""
    if s * v < 0.01:
        return sum((-1) ** k * s ** (k - 2) * v ** k / k for k in range(2, 14))
    u = s * v
    return (u - math.log1p(u)) / (s * s)


def gamma_bound_root_check(L: int, gamma: float, xtol: float = 1e-12) -> tuple[float, float]:
    """Exact root of z - ln z = 1 + gamma ln L (z >= 1) next to the closed form.

    Both are solved for v = (z - 1) / s with s = sqrt(gamma ln L) when that is
    small, so the comparison keeps its meaning when the root sits within
    float resolution of 1.
    """
    if L < 2 or gamma < 0:
        raise ValueError("need L >= 2 and gamma >= 0")
    d = gamma * math.log(L)
    if d == 0.0:
        return 1.0, 1.0
    s = math.sqrt(d) if d < 1e-4 else 1.0
    target = d / (s * s)
    closed_v = (d / s) + math.log1p(d + s * math.sqrt(target * (2.0 + d))) / s
    root_v = bisect(lambda v: _scaled_u_minus_log1p(v, s) - target, 0.0, closed_v + 1.0,
                    xtol=min(xtol, 4 * EPS * closed_v), rtol=4 * EPS)
    assert closed_v >= root_v * (1 - 1e-12), (L, gamma, closed_v, root_v)
    return 1.0 + s * root_v, 1.0 + s * closed_v


@dataclass(frozen=True, eq=False)
class AlphaEstimate:
    value: float
    se: float
    ratios: np.ndarray     # per prefix length t = 1..n (nan when skipped)
    ratio_se: np.ndarray
    order: tuple[int, ...]
    num_samples: int

    @property
    def argmax(self) -> int:
        return int(np.nanargmax(self.ratios))

    def ci(self, z: float = 1.96) -> tuple[float, float]:
        return self.value - z * self.se, self.value + z * self.se


def estimate_alpha(instance: Instance, order, num_samples: int, rng: np.random.Generator,
                   chunk: int = 500) -> AlphaEstimate:
    """Monte-Carlo alpha along one priority order."""
    from .simulator import draw_volumes

    pi = order.pi if isinstance(order, PriorityOrder) else tuple(order)
    if sorted(pi) != list(range(instance.num_coflows)):
        raise ValueError("order must be a permutation of all coflows")
    denom = bottleneck_prefix(aggregate_loads(instance).values, pi)
    n = len(pi)
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    done = 0
    while done < num_samples:
        m = min(chunk, num_samples - done)
        vol = draw_volumes(instance, rng, m)
        bp = bottleneck_prefix(batch_loads(instance, vol), pi)
        s1 += bp.sum(axis=0)
        s2 += (bp * bp).sum(axis=0)
        done += m
    mean = s1 / num_samples
    var = np.maximum(s2 / num_samples - mean * mean, 0.0) * num_samples / max(num_samples - 1, 1)
    se = np.sqrt(var / num_samples)
    ok = denom > 0
    ratios = np.full(n, np.nan)
    rse = np.full(n, np.nan)
    ratios[ok] = mean[ok] / denom[ok]
    rse[ok] = se[ok] / denom[ok]
    if not ok.any():
        raise ValueError("every prefix has zero expected bottleneck load")
    t = int(np.nanargmax(ratios))
    return AlphaEstimate(float(ratios[t]), float(rse[t]), ratios, rse, tuple(pi), num_samples)


def pareto_scaling_report(Ls, eta: float, k: int, num_samples: int,
                          rng: np.random.Generator, mean: float = 10.0) -> dict:
    """Empirical growth exponent of E max_l sum_{j<=k} P_lj / (k mu) against L.

    Compared with the tail index 1/zeta only as a report; nothing is asserted.
    """
    spec = SizeSpec("pareto", mean, eta)
    zeta = moments_to_params(spec).shape
    pts = []
    for L in Ls:
        x = sample_many(spec, rng, num_samples * L * k).reshape(num_samples, L, k)
        pts.append(float((x.sum(axis=2).max(axis=1) / (k * mean)).mean()))
    slope = float(np.polyfit(np.log(Ls), np.log(pts), 1)[0])
    return {"L": list(Ls), "ratio": pts, "slope": slope, "inverse_shape": 1.0 / zeta, "zeta": zeta}
