"""LP lower bound over the stochastic parallel-inequality polyhedron.

    minimize  sum_k w_k C_k
    s.t.      sum_{k in A} mu[l,k] C_k >= f_l(A)    for every port l, set A
              C >= 0

The LP is solved through its dual (max f.y  s.t.  M y <= w, y >= 0), which
has one row per coflow and a feasible starting basis at y = 0, so a dense
tableau simplex needs no phase 1.  Primal values C are the dual prices of
the tableau's slack columns.  ``solve_lp`` generates constraints lazily with
a prefix-based separation routine; ``brute_force_lp`` enumerates every set
and is the test oracle for it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class LpError(RuntimeError):
    pass


def f_value(port: int, coflows, loads: np.ndarray) -> float:
    """f_l(A) = ((sum mu)^2 + sum mu^2) / 2 over the set; 0 for an empty set."""
    cols = list(coflows)
    if not cols:
        return 0.0
    m = loads[port, cols]
    s = m.sum()
    return 0.5 * (s * s + (m * m).sum())


@dataclass(frozen=True)
class Cut:
    port: int
    coflows: tuple[int, ...]
    rhs: float
    violation: float = 0.0  # lhs - rhs at the point it was separated from


@dataclass(eq=False)
class LpSolution:
    C: np.ndarray
    objective: float
    cuts: list = field(default_factory=list)
    iterations: int = 0
    pivots: int = 0
    certified: bool = False


# -- dense simplex ------------------------------------------------------------

def simplex_max(c: np.ndarray, A: np.ndarray, b: np.ndarray, tol: float = 1e-11,
                max_pivots: int = 100_000):
    """maximize c.y  s.t.  A y <= b, y >= 0, with b >= 0.

    Dense tableau, Bland's rule on both the entering and leaving choice.
    Returns (y, objective, row prices, pivot count).  Raises on unbounded.
    """
    m, N = A.shape
    if (b < -tol).any():
        raise LpError("right-hand side must be nonnegative")
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = np.maximum(b, 0.0)
    T[m, :N] = -c
    basis = np.arange(N, N + m)
    pivots = 0
    while True:
        neg = np.flatnonzero(T[m, :-1] < -tol)
        if neg.size == 0:
            break
        j = int(neg[0])
        col = T[:m, j]
        pos = col > tol
        if not pos.any():
            raise LpError("LP is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + tol * max(1.0, abs(rmin)))
        i = int(ties[np.argmin(basis[ties])])
        T[i] /= T[i, j]
        others = np.arange(m + 1) != i
        T[others] -= np.outer(T[others, j], T[i])
        basis[i] = j
        pivots += 1
        if pivots > max_pivots:
            raise LpError("simplex pivot limit reached")
    y = np.zeros(N + m)
    y[basis] = T[:m, -1]
    return y[:N], float(T[m, -1]), T[m, N:N + m].copy(), pivots


# -- separation ---------------------------------------------------------------

def separate(C, loads: np.ndarray, tol: float = 1e-9) -> Cut | None:
    """Most violated parallel inequality at ``C`` among per-port prefixes.

    For each port the coflows with positive load are sorted by ascending
    C (ties by position) and every prefix is checked.  Returns ``None`` when
    no prefix is violated by more than ``tol`` relative to its rhs.
    """
    C = np.asarray(C, dtype=float)
    best = None
    best_v = 0.0
    for l in range(loads.shape[0]):
        ks = np.flatnonzero(loads[l] > 0)
        if ks.size == 0:
            continue
        ks = ks[np.argsort(C[ks], kind="stable")]
        m = loads[l, ks]
        lhs = np.cumsum(m * C[ks])
        csum = np.cumsum(m)
        rhs = 0.5 * (csum * csum + np.cumsum(m * m))
        viol = lhs - rhs
        t = int(np.argmin(viol))
        v = viol[t]
        if v < -tol * max(1.0, rhs[t]) and v < best_v:
            best_v = v
            best = Cut(l, tuple(sorted(int(k) for k in ks[:t + 1])), float(rhs[t]), float(v))
    return best


def subset_min_violation(C, loads: np.ndarray) -> tuple[float, Cut | None]:
    """Exact minimum of lhs - rhs over all nonempty subsets of every port (2^n)."""
    C = np.asarray(C, dtype=float)
    L, n = loads.shape
    members = _membership(n)
    best, arg = np.inf, None
    for l in range(L):
        m = loads[l]
        lhs = members @ (m * C)
        s = members @ m
        rhs = 0.5 * (s * s + members @ (m * m))
        viol = lhs - rhs
        t = int(np.argmin(viol))
        if viol[t] < best:
            best = float(viol[t])
            arg = Cut(l, tuple(int(k) for k in np.flatnonzero(members[t])), float(rhs[t]), best)
    return best, arg


def _membership(n: int) -> np.ndarray:
    masks = np.arange(1, 1 << n, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(float)


# -- LP drivers ---------------------------------------------------------------

def _solve_restricted(cuts, mu, w):
    """Solve the LP restricted to ``cuts``; inputs already scaled."""
    n = mu.shape[1]
    A = np.zeros((n, len(cuts)))
    f = np.empty(len(cuts))
    for j, (l, ks) in enumerate(cuts):
        ks = list(ks)
        A[ks, j] = mu[l, ks]
        f[j] = f_value(l, ks, mu)
    y, obj, C, piv = simplex_max(f, A, w)
    return C, obj, y, piv


def _scales(loads, weights):
    mu = np.asarray(loads, dtype=float)
    w = np.ones(mu.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    if (w < 0).any() or (mu < 0).any():
        raise ValueError("loads and weights must be nonnegative")
    s_mu = float(mu.max(initial=0.0)) or 1.0
    s_w = float(w.max(initial=0.0)) or 1.0
    return mu / s_mu, w / s_w, s_mu, s_w


def _check_loads(mu):
    if mu.shape[1] and not (mu.max(axis=0) > 0).all():
        raise ValueError("every coflow needs a positive expected load on some port")


def solve_lp(loads, weights=None, tol: float = 1e-9, exhaustive: bool = False) -> LpSolution:
    """Cutting-plane solve; the result is certified when separation finds nothing.

    With ``exhaustive`` (n <= 12) the final point is also checked against
    every subset, and any violated subset is added as a cut before resuming.
    """
    loads = getattr(loads, "values", loads)
    mu, w, s_mu, s_w = _scales(loads, weights)
    _check_loads(mu)
    L, n = mu.shape
    cuts, seen = [], set()

    def add(l, ks):
        key = (l, tuple(sorted(ks)))
        if ks and key not in seen:
            seen.add(key)
            cuts.append(key)
            return True
        return False

    for l in range(L):
        ks = [int(k) for k in np.flatnonzero(mu[l] > 0)]
        for k in ks:
            add(l, [k])
        add(l, ks)
    cap = max(10 * n * L, len(cuts) + 1)
    iterations = pivots = 0
    while True:
        iterations += 1
        C, obj, _, piv = _solve_restricted(cuts, mu, w)
        pivots += piv
        cut = separate(C, mu, tol)
        if cut is None and exhaustive and n <= 12:
            v, sub = subset_min_violation(C, mu)
            if sub is not None and v < -tol * max(1.0, sub.rhs):
                cut = sub
        if cut is None:
            break
        if not add(cut.port, list(cut.coflows)):
            raise LpError(f"separation returned an existing cut {cut}; tolerance too tight")
        if len(cuts) > cap:
            raise LpError(f"cut cap {cap} exceeded (n={n}, L={L}); report this instance")
    C = C * s_mu
    rows = [Cut(l, ks, f_value(l, ks, loads)) for l, ks in cuts]
    return LpSolution(C, float(obj * s_w * s_mu), rows, iterations, pivots, certified=True)


def brute_force_lp(loads, weights=None, max_coflows: int = 12) -> LpSolution:
    """Solve with every (port, nonempty set) constraint materialized."""
    loads = getattr(loads, "values", loads)
    mu, w, s_mu, s_w = _scales(loads, weights)
    L, n = mu.shape
    if n > max_coflows:
        raise ValueError(f"brute force refuses n={n} > {max_coflows}")
    if n == 0 or not mu.any():
        return LpSolution(np.zeros(n), 0.0, [], 0, 0, certified=True)
    _check_loads(mu)
    members = _membership(n)
    blocks_A, blocks_f = [], []
    for l in range(L):
        m = mu[l]
        if not m.any():
            continue
        s = members @ m
        blocks_f.append(0.5 * (s * s + members @ (m * m)))
        blocks_A.append((members * m).T)
    A = np.hstack(blocks_A)
    f = np.concatenate(blocks_f)
    _, obj, C, piv = simplex_max(f, A, w)
    return LpSolution(C * s_mu, float(obj * s_w * s_mu), [], 1, piv, certified=True)
