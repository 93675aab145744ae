"""Independent reference implementations used by the tests.

Nothing here calls into the library's numerical cores: the rate model is
re-derived with scalar root finding, feasibility with brute-force enumeration,
and optimal scheduling with an LP over randomized stationary policies.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, linprog

GAMMA_MAX = 6.0


# -- budget and rates -------------------------------------------------------------

def budget_from_table(bandwidth=10e6, noise_psd=-174.0, nf_bs=8.0, nf_user=9.0, sim_db=80.0,
                      d_cal=50.0 * math.sqrt(2.0)):
    """(Pu, Pd, Nu, Nd, psi) in watts, from the table values by hand."""
    nu_dbm = noise_psd + 10 * math.log10(bandwidth) + nf_bs
    nd_dbm = noise_psd + 10 * math.log10(bandwidth) + nf_user
    pl = 147.4 + 43.3 * math.log10(d_cal / 1000.0)
    w = lambda dbm: 10 ** ((dbm - 30) / 10)  # noqa: E731
    return w(nu_dbm + pl), w(nd_dbm + pl), w(nu_dbm), w(nd_dbm), 10 ** (-sim_db / 10)


def crate(x, gmax=GAMMA_MAX):
    return min(math.log2(1.0 + x), gmax)


def sinr_fd(sic, gi, gj, h, pu, pd, nu, nd, psi):
    ul_bs = pu * gi / (pd * psi + nu)
    if sic:
        return min(ul_bs, pu * h / (pd * gj + nd)), pd * gj / nd
    return ul_bs, pd * gj / (pu * h + nd)


def maxmin_oracle(sic, gi, gj, h, Pu, Pd, nu, nd, psi, gmax=GAMMA_MAX):
    """Max-min powered rates via root finding on the two outer edges of the power box.

    Returns (min_rate, rate_ul, rate_dl). When both rates can reach ``gmax``
    only the rates are meaningful.
    """
    def rates(pu, pd):
        su, sd = sinr_fd(sic, gi, gj, h, pu, pd, nu, nd, psi)
        return crate(su, gmax), crate(sd, gmax)

    pts = [(Pu, Pd), (Pu, 0.0), (0.0, Pd)]
    f_u = lambda pd: np.subtract(*sinr_fd(sic, gi, gj, h, Pu, pd, nu, nd, psi))  # noqa: E731
    if f_u(0.0) > 0 and f_u(Pd) < 0:
        pts.append((Pu, brentq(f_u, 0.0, Pd, xtol=1e-300, rtol=8.9e-16, maxiter=500)))
    f_d = lambda pu: np.subtract(*sinr_fd(sic, gi, gj, h, pu, Pd, nu, nd, psi))  # noqa: E731
    if f_d(0.0) < 0 and f_d(Pu) > 0:
        pts.append((brentq(f_d, 0.0, Pu, xtol=1e-300, rtol=8.9e-16, maxiter=500), Pd))
    best = max((min(*rates(*p)), sum(rates(*p)), p[1]) for p in pts)
    ru, rd = rates(*[p for p in pts if p[1] == best[2]][0])
    if best[0] >= gmax:
        return gmax, gmax, gmax
    cands = [p for p in pts if abs(min(*rates(*p)) - best[0]) <= 1e-12 * max(1.0, best[0])]
    p = max(cands, key=lambda q: (sum(rates(*q)), q[1]))
    ru, rd = rates(*p)
    return min(ru, rd), ru, rd


def perf_oracle(g, h, sic, budget, gmax=GAMMA_MAX):
    """Utility matrix (n+1, n+1) with NaN diagonal, straight from the SINR definitions."""
    Pu, Pd, nu, nd, psi = budget
    n = len(g)
    u = np.full((n + 1, n + 1), np.nan)
    for i in range(n + 1):
        for j in range(n + 1):
            if i == j:
                continue
            if j == 0:
                u[i, j] = crate(Pu * g[i - 1] / nu, gmax)
            elif i == 0:
                u[i, j] = crate(Pd * g[j - 1] / nd, gmax)
            else:
                args = (g[i - 1], g[j - 1], h[i - 1][j - 1], Pu, Pd, nu, nd, psi, gmax)
                _, a, b = maxmin_oracle(False, *args)
                best = a + b
                if sic[j - 1]:
                    _, a, b = maxmin_oracle(True, *args)
                    best = max(best, a + b)
                u[i, j] = best
    return u


def _grid_min_rate(sic, gi, gj, h, pu, pd, nu, nd, psi, gmax):
    pu, pd = pu[:, None], pd[None, :]
    ul_bs = pu * gi / (pd * psi + nu)
    if sic:
        su = np.minimum(ul_bs, pu * h / (pd * gj + nd))
        sd = np.broadcast_to(pd * gj / nd, su.shape)
    else:
        su, sd = ul_bs, pd * gj / (pu * h + nd)
    return np.minimum(np.minimum(np.log2(1 + su), gmax), np.minimum(np.log2(1 + sd), gmax))


def grid_maxmin(sic, gi, gj, h, Pu, Pd, nu, nd, psi, pts=201, span_db=100.0, zooms=2,
                gmax=GAMMA_MAX):
    """Max-min rate by exhaustive search on a ``pts x pts`` power grid.

    The grid is uniform in dB over ``span_db`` below the maximum powers (plus
    zero power), then re-gridded ``zooms`` times around the best cell.
    """
    lo_u = lo_d = -span_db
    hi_u = hi_d = 0.0
    best = -np.inf
    for _ in range(zooms + 1):
        du = np.linspace(lo_u, hi_u, pts)
        dd = np.linspace(lo_d, hi_d, pts)
        pu = np.concatenate([[0.0], Pu * 10 ** (du / 10)])
        pd = np.concatenate([[0.0], Pd * 10 ** (dd / 10)])
        m = _grid_min_rate(sic, gi, gj, h, pu, pd, nu, nd, psi, gmax)
        best = max(best, float(m.max()))
        a, b = np.unravel_index(np.argmax(m[1:, 1:]), (pts, pts))
        su, sd = du[1] - du[0], dd[1] - dd[0]
        lo_u, hi_u = du[a] - su, min(du[a] + su, 0.0)
        lo_d, hi_d = dd[b] - sd, min(dd[b] + sd, 0.0)
    return best


# -- feasibility ----------------------------------------------------------------

def longterm_oracle(u, d, tol=1e-9):
    u, d = list(u), list(d)
    return (sum(u) <= 1 + tol and sum(d) <= 1 + tol and sum(u) + sum(d) >= 1 - tol
            and all(a + b <= 1 + tol for a, b in zip(u, d)))


@lru_cache(maxsize=None)
def achievable_counts(n: int, s: int) -> frozenset:
    """All (k_ul, k_dl) count vectors produced by some length-``s`` schedule."""
    vus = [(i, j) for i in range(n + 1) for j in range(n + 1) if i != j]
    out = set()
    for combo in itertools.combinations_with_replacement(vus, s):
        ku = [0] * n
        kd = [0] * n
        for i, j in combo:
            if i:
                ku[i - 1] += 1
            if j:
                kd[j - 1] += 1
        out.add((tuple(ku), tuple(kd)))
    return frozenset(out)


def box_feasible_brute(n, s, lo_u, hi_u, lo_d, hi_d) -> bool:
    return any(all(lo_u[i] <= ku[i] <= hi_u[i] and lo_d[i] <= kd[i] <= hi_d[i] for i in range(n))
               for ku, kd in achievable_counts(n, s))


# -- scheduling -----------------------------------------------------------------

def measure_argmax(R, lam_u, lam_d, n, allowed=None):
    """Brute-force TBS choice over (i, j) in lexicographic order."""
    best, pick = -math.inf, None
    for i in range(n + 1):
        for j in range(n + 1):
            if i == j or (allowed is not None and (i, j) not in allowed):
                continue
            m = R[i][j] + (lam_u[i - 1] if i else 0.0) + (lam_d[j - 1] if j else 0.0)
            if m > best:
                best, pick = m, (i, j)
    return pick


def optimal_stationary(R, probs, ul, dl, lower_ul, lower_dl):
    """LP optimum over randomized stationary schedulers meeting lower demands.

    ``R`` has shape (states, |V|) in flat virtual-user order.
    """
    S, V = R.shape
    n = len(lower_ul)
    c = -(R * probs[:, None]).ravel()
    A, b = [], []
    for i in range(1, n + 1):
        A.append(-np.kron(probs, (ul == i).astype(float)))
        b.append(-lower_ul[i - 1])
        A.append(-np.kron(probs, (dl == i).astype(float)))
        b.append(-lower_dl[i - 1])
    res = linprog(c, A_ub=np.array(A), b_ub=b, A_eq=np.kron(np.eye(S), np.ones(V)),
                  b_eq=np.ones(S), bounds=(0, 1), method="highs")
    assert res.status == 0
    return -res.fun


def grid_tbs_best(R, probs, ul, dl, lower_ul, lower_dl, grid):
    """Best demand-meeting deterministic TBS over a threshold grid, evaluated exactly."""
    n = len(lower_ul)
    L = np.array(list(itertools.product(grid, repeat=2 * n)))
    lu = np.hstack([np.zeros((len(L), 1)), L[:, :n]])
    ld = np.hstack([np.zeros((len(L), 1)), L[:, n:]])
    add = lu[:, ul] + ld[:, dl]
    util = np.zeros(len(L))
    cu = np.zeros((len(L), n + 1))
    cd = np.zeros((len(L), n + 1))
    rows = np.arange(len(L))
    for s in range(len(R)):
        k = np.argmax(R[s][None, :] + add, axis=1)
        util += probs[s] * R[s][k]
        np.add.at(cu, (rows, ul[k]), probs[s])
        np.add.at(cd, (rows, dl[k]), probs[s])
    ok = np.all(cu[:, 1:] >= np.asarray(lower_ul) - 1e-9, axis=1) & \
        np.all(cd[:, 1:] >= np.asarray(lower_dl) - 1e-9, axis=1)
    return float(util[ok].max()) if ok.any() else float("nan")
