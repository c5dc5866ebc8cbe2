"""Compiled event loops used for bulk Monte-Carlo evaluation.

Each kernel returns per-flow completion times only; ``simulator.simulate``
is the instrumented reference that also logs rates.  Both follow the same
epoch rules, and the test-suite checks they agree.
"""
import numpy as np
from numba import njit

FINISH_RTOL = 1e-12
RATE_FLOOR = 1e-12


@njit(cache=True)
def greedy_completions(src, dst, cap, vol, scan):
    F = vol.shape[0]
    resid = vol.copy()
    comp = np.zeros(F)
    rate = np.zeros(F)
    res = np.empty(cap.shape[0])
    floor = RATE_FLOOR * cap.max()
    order = np.empty(F, dtype=np.int64)
    m = 0
    for i in range(F):
        f = scan[i]
        if resid[f] > 0.0:
            order[m] = f
            m += 1
    t = 0.0
    while m > 0:
        res[:] = cap
        dt = np.inf
        for i in range(m):
            f = order[i]
            r = min(res[src[f]], res[dst[f]])
            if r > floor:
                rate[f] = r
                res[src[f]] -= r
                res[dst[f]] -= r
                ttf = resid[f] / r
                if ttf < dt:
                    dt = ttf
            else:
                rate[f] = 0.0
        if not np.isfinite(dt):
            raise RuntimeError("no flow received a positive rate")
        t += dt
        j = 0
        lim = dt * (1.0 + FINISH_RTOL)
        for i in range(m):
            f = order[i]
            r = rate[f]
            if r > 0.0:
                if resid[f] / r <= lim:
                    comp[f] = t
                    resid[f] = 0.0
                    continue
                resid[f] -= r * dt
            order[j] = f
            j += 1
        m = j
    return comp


@njit(cache=True)
def share_completions(src, dst, cap, vol, queue, decay, nqueues, mode):
    """Round-robin (mode 0) or weighted multi-queue sharing (mode 1)."""
    F = vol.shape[0]
    L = cap.shape[0]
    resid = vol.copy()
    comp = np.zeros(F)
    rate = np.zeros(F)
    cnt = np.zeros((L, nqueues))
    qw = np.empty(nqueues)
    for q in range(nqueues):
        qw[q] = decay ** (-q)
    wsum = np.zeros(L)
    order = np.empty(F, dtype=np.int64)
    m = 0
    for f in range(F):
        if resid[f] > 0.0:
            order[m] = f
            m += 1
    t = 0.0
    while m > 0:
        cnt[:, :] = 0.0
        for i in range(m):
            f = order[i]
            q = queue[f] if mode == 1 else 0
            cnt[src[f], q] += 1.0
            cnt[dst[f], q] += 1.0
        if mode == 1:
            for l in range(L):
                s = 0.0
                for q in range(nqueues):
                    if cnt[l, q] > 0.0:
                        s += qw[q]
                wsum[l] = s
        dt = np.inf
        for i in range(m):
            f = order[i]
            a = src[f]
            b = dst[f]
            if mode == 0:
                r = min(cap[a] / cnt[a, 0], cap[b] / cnt[b, 0])
            else:
                q = queue[f]
                ra = cap[a] * qw[q] / wsum[a] / cnt[a, q]
                rb = cap[b] * qw[q] / wsum[b] / cnt[b, q]
                r = min(ra, rb)
            rate[f] = r
            ttf = resid[f] / r
            if ttf < dt:
                dt = ttf
        t += dt
        j = 0
        lim = dt * (1.0 + FINISH_RTOL)
        for i in range(m):
            f = order[i]
            r = rate[f]
            if resid[f] / r <= lim:
                comp[f] = t
                resid[f] = 0.0
                continue
            resid[f] -= r * dt
            order[j] = f
            j += 1
        m = j
    return comp


@njit(cache=True)
def coflow_max(flow_comp, flow_coflow, n):
    out = np.zeros(n)
    for f in range(flow_comp.shape[0]):
        k = flow_coflow[f]
        if flow_comp[f] > out[k]:
            out[k] = flow_comp[f]
    return out
