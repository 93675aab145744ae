"""Per-slot SINRs, truncated Shannon rates, max-min powers and the performance matrix.

Virtual users are indexed ``(ul, dl)`` with users numbered ``1..n`` and ``0``
meaning the direction is idle. Per-user arrays (gains, flags) are 0-based, so
user ``k`` lives at position ``k - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit
from numba.cpython.unsafe.tuple import tuple_setitem

from .geomchan import ChannelParams, ChannelRealization, calibrate_pmax, dbm_to_watt


class Mode(IntEnum):
    HD_UL = 0
    HD_DL = 1
    FD_IN = 2
    FD_SIC = 3


class VirtualUser(NamedTuple):
    ul: int
    dl: int

    @property
    def is_fd(self) -> bool:
        return self.ul > 0 and self.dl > 0


def check_virtual_user(v: VirtualUser, n: int) -> None:
    ul, dl = v
    if not (0 <= ul <= n and 0 <= dl <= n):
        raise ValueError(f"virtual user {v} out of range for n={n}")
    if ul == dl:
        raise ValueError(f"virtual user {v} is not valid: users are half-duplex")


@lru_cache(maxsize=None)
def virtual_users(n: int) -> tuple[VirtualUser, ...]:
    """All ``v_{i,j}``, ``i != j``, in lexicographic order."""
    return tuple(VirtualUser(i, j) for i in range(n + 1) for j in range(n + 1) if i != j)


@lru_cache(maxsize=None)
def vu_index_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    vus = virtual_users(n)
    ul = np.array([v.ul for v in vus], dtype=np.int64)
    dl = np.array([v.dl for v in vus], dtype=np.int64)
    ul.flags.writeable = False
    dl.flags.writeable = False
    return ul, dl


@dataclass(frozen=True)
class LinkBudget:
    p_max_ul: float   # W
    p_max_dl: float   # W
    noise_ul: float   # W
    noise_dl: float   # W
    psi_b: float
    gamma_max: float


def link_budget(ch: ChannelParams) -> LinkBudget:
    p_ul, p_dl = calibrate_pmax(ch)
    return LinkBudget(p_ul, p_dl, float(dbm_to_watt(ch.noise_ul_dbm)),
                      float(dbm_to_watt(ch.noise_dl_dbm)), ch.psi_b, ch.gamma_max)


@dataclass(frozen=True)
class ModeRates:
    mode: Mode
    rate_ul: float
    rate_dl: float
    p_ul: float
    p_dl: float

    @property
    def utility(self) -> float:
        return self.rate_ul + self.rate_dl


def truncated_rate(sinr, gamma_max: float = 6.0):
    """``min(log2(1 + sinr), gamma_max)``."""
    x = np.asarray(sinr, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("SINR must be non-negative")
    r = np.minimum(np.log2(1.0 + x), gamma_max)
    return float(r) if r.ndim == 0 else r


# -- compiled scalar core ---------------------------------------------------

_TIE_TOL = 1e-12


@njit(cache=True)
def _crate(x, gmax):
    r = math.log2(1.0 + x)
    return r if r < gmax else gmax


@njit(cache=True)
def _fd_sinrs(sic, gi, gj, h, pu, pd, nu, nd, psi):
    su = pu * gi / (pd * psi + nu)
    if sic:
        s2 = pu * h / (pd * gj + nd)
        if s2 < su:
            su = s2
        sd = pd * gj / nd
    else:
        sd = pd * gj / (pu * h + nd)
    return su, sd


@njit(cache=True)
def _pos_root(a, b, c):
    # positive root of a*x^2 + b*x = c with a, b, c >= 0
    if c <= 0.0:
        return 0.0
    den = b + math.sqrt(b * b + 4.0 * a * c)
    if den <= 0.0:
        return math.inf
    return 2.0 * c / den


@njit(cache=True)
def _capped_point(sic, gi, gj, h, Pu, Pd, nu, nd, psi, gmax):
    # Largest p_dl (then p_ul) keeping both rates at gamma_max. Every SINR
    # constraint is affine in (p_ul, p_dl): p_ul is bounded below by the UL
    # constraints (lo_a + lo_b*p_dl) and above by Pu and, for FD-IN, by the
    # DL constraint (up_a + up_b*p_dl).
    th = 2.0 ** gmax - 1.0
    lo = ((th * nu / gi, th * psi / gi),
          (th * nd / h, th * gj / h) if sic else (0.0, 0.0))
    has_up = (not sic) and h > 0.0
    up = ((Pu, 0.0), (-nd / h, gj / (th * h)) if has_up else (Pu, 0.0))
    pd = Pd
    for a in range(2):
        for b in range(2):
            slope = lo[a][1] - up[b][1]
            if slope > 0.0:
                lim = (up[b][0] - lo[a][0]) / slope
                if lim < pd:
                    pd = lim
    if pd < 0.0:
        pd = 0.0
    pu = min(up[0][0] + up[0][1] * pd, up[1][0] + up[1][1] * pd)
    floor = max(0.0, lo[0][0] + lo[0][1] * pd, lo[1][0] + lo[1][1] * pd)
    return max(pu, floor), pd


@njit(cache=True)
def _maxmin(sic, gi, gj, h, Pu, Pd, nu, nd, psi, gmax):
    # balanced point on the edge p_ul = Pu
    if sic:
        x = min(_pos_root(psi * gj, gj * nu, Pu * gi * nd),
                _pos_root(gj * gj, gj * nd, Pu * h * nd))
    else:
        x = _pos_root(psi * gj, gj * nu, Pu * gi * (Pu * h + nd))
    edge_u = min(x, Pd)
    # balanced point on the edge p_dl = Pd
    if sic:
        k = min(gi / (Pd * psi + nu), h / (Pd * gj + nd))
        x = (Pd * gj / nd) / k if k > 0.0 else math.inf
    else:
        x = _pos_root(gi * h, gi * nd, Pd * gj * (Pd * psi + nu))
    edge_d = min(x, Pu)
    cpu = (Pu, Pu, 0.0, Pu, edge_d)
    cpd = (Pd, 0.0, Pd, edge_u, Pd)

    best_min = -1.0
    mins = (0.0, 0.0, 0.0, 0.0, 0.0)
    sums = (0.0, 0.0, 0.0, 0.0, 0.0)
    for c in range(5):
        su, sd = _fd_sinrs(sic, gi, gj, h, cpu[c], cpd[c], nu, nd, psi)
        ru = _crate(su, gmax)
        rd = _crate(sd, gmax)
        m = min(ru, rd)
        mins = tuple_setitem(mins, c, m)
        sums = tuple_setitem(sums, c, ru + rd)
        best_min = max(best_min, m)

    if best_min >= gmax * (1.0 - _TIE_TOL) and gi > 0.0:
        pu, pd = _capped_point(sic, gi, gj, h, Pu, Pd, nu, nd, psi, gmax)
    else:
        floor_min = best_min - _TIE_TOL * max(1.0, best_min)
        best_sum = -1.0
        for c in range(5):
            if mins[c] >= floor_min and sums[c] > best_sum:
                best_sum = sums[c]
        floor_sum = best_sum - _TIE_TOL * max(1.0, best_sum)
        pick = -1
        for c in range(5):
            if mins[c] >= floor_min and sums[c] >= floor_sum:
                if pick < 0 or cpd[c] > cpd[pick]:
                    pick = c
        pu, pd = cpu[pick], cpd[pick]
    su, sd = _fd_sinrs(sic, gi, gj, h, pu, pd, nu, nd, psi)
    return pu, pd, _crate(su, gmax), _crate(sd, gmax)


@njit(cache=True)
def _perf_kernel(g, hh, sic, Pu, Pd, nu, nd, psi, gmax,
                 util, mode, rul, rdl, pul, pdl):
    T, n = g.shape
    for t in range(T):
        for i in range(n + 1):
            for j in range(n + 1):
                if i == j:
                    util[t, i, j] = np.nan
                    mode[t, i, j] = -1
                    rul[t, i, j] = np.nan
                    rdl[t, i, j] = np.nan
                    pul[t, i, j] = np.nan
                    pdl[t, i, j] = np.nan
                elif j == 0:
                    r = _crate(Pu * g[t, i - 1] / nu, gmax)
                    util[t, i, j] = r
                    mode[t, i, j] = 0
                    rul[t, i, j] = r
                    rdl[t, i, j] = 0.0
                    pul[t, i, j] = Pu
                    pdl[t, i, j] = 0.0
                elif i == 0:
                    r = _crate(Pd * g[t, j - 1] / nd, gmax)
                    util[t, i, j] = r
                    mode[t, i, j] = 1
                    rul[t, i, j] = 0.0
                    rdl[t, i, j] = r
                    pul[t, i, j] = 0.0
                    pdl[t, i, j] = Pd
                else:
                    gi = g[t, i - 1]
                    gj = g[t, j - 1]
                    h = hh[t, i - 1, j - 1]
                    pu, pd, ru, rd = _maxmin(False, gi, gj, h, Pu, Pd, nu, nd, psi, gmax)
                    m = 2
                    if sic[j - 1]:
                        pu2, pd2, ru2, rd2 = _maxmin(True, gi, gj, h, Pu, Pd, nu, nd, psi, gmax)
                        if ru2 + rd2 > ru + rd:
                            pu, pd, ru, rd, m = pu2, pd2, ru2, rd2, 3
                    util[t, i, j] = ru + rd
                    mode[t, i, j] = m
                    rul[t, i, j] = ru
                    rdl[t, i, j] = rd
                    pul[t, i, j] = pu
                    pdl[t, i, j] = pd


# -- public API -------------------------------------------------------------

@dataclass(frozen=True)
class PerformanceMatrix:
    """Utilities of every virtual user, optionally stacked over slots.

    All arrays have shape ``(..., n+1, n+1)``; the diagonal is NaN (mode -1).
    """

    utility: np.ndarray
    mode: np.ndarray
    rate_ul: np.ndarray
    rate_dl: np.ndarray
    p_ul: np.ndarray
    p_dl: np.ndarray

    @property
    def n_users(self) -> int:
        return self.utility.shape[-1] - 1

    def chosen(self, v: VirtualUser) -> ModeRates:
        i, j = v
        return ModeRates(Mode(int(self.mode[..., i, j])), float(self.rate_ul[..., i, j]),
                         float(self.rate_dl[..., i, j]), float(self.p_ul[..., i, j]),
                         float(self.p_dl[..., i, j]))

    def flat(self) -> np.ndarray:
        """Utilities in :func:`virtual_users` order, shape ``(..., n*(n+1))``."""
        ul, dl = vu_index_arrays(self.n_users)
        return self.utility[..., ul, dl]

    def slot(self, k: int) -> "PerformanceMatrix":
        return PerformanceMatrix(self.utility[k], self.mode[k], self.rate_ul[k],
                                 self.rate_dl[k], self.p_ul[k], self.p_dl[k])


def _sic_array(sic, n) -> np.ndarray:
    if sic is None:
        return np.zeros(n, dtype=np.bool_)
    s = np.asarray(sic, dtype=np.bool_)
    if s.shape != (n,):
        raise ValueError(f"SIC flags must have shape ({n},)")
    return s


def sic_flags(n: int, scenario: int) -> np.ndarray:
    """Scenario 1: nobody performs SIC. Scenario 2: every user does."""
    if scenario not in (1, 2):
        raise ValueError("scenario must be 1 or 2")
    return np.full(n, scenario == 2)


def performance_matrices(ch: ChannelRealization, budget: LinkBudget,
                         sic: Sequence[bool] | None = None) -> PerformanceMatrix:
    g = np.ascontiguousarray(ch.g_sq, dtype=float)
    h = np.ascontiguousarray(ch.h_sq, dtype=float)
    single = g.ndim == 1
    if single:
        g, h = g[None], h[None]
    T, n = g.shape
    s = _sic_array(sic, n)
    shape = (T, n + 1, n + 1)
    util, rul, rdl = np.empty(shape), np.empty(shape), np.empty(shape)
    pul, pdl = np.empty(shape), np.empty(shape)
    mode = np.empty(shape, dtype=np.int8)
    b = budget
    _perf_kernel(g, h, s, b.p_max_ul, b.p_max_dl, b.noise_ul, b.noise_dl, b.psi_b,
                 b.gamma_max, util, mode, rul, rdl, pul, pdl)
    pm = PerformanceMatrix(util, mode, rul, rdl, pul, pdl)
    return pm.slot(0) if single else pm


def performance_matrix(ch: ChannelRealization, budget: LinkBudget,
                       sic: Sequence[bool] | None = None) -> PerformanceMatrix:
    if np.ndim(ch.g_sq) != 1:
        raise ValueError("expected a single-slot realization; use performance_matrices")
    return performance_matrices(ch, budget, sic)


def mode_sinrs(v: VirtualUser, mode: Mode, ch: ChannelRealization,
               p_ul: float, p_dl: float, budget: LinkBudget) -> tuple[float, float]:
    n = len(ch.g_sq)
    v = VirtualUser(*v)
    check_virtual_user(v, n)
    i, j = v
    b = budget
    if not (0 <= p_ul <= b.p_max_ul * (1 + 1e-12) and 0 <= p_dl <= b.p_max_dl * (1 + 1e-12)):
        raise ValueError("transmit powers outside [0, p_max]")
    mode = Mode(mode)
    if mode is Mode.HD_UL:
        if j != 0:
            raise ValueError("HD-UL needs a virtual user without a DL user")
        return p_ul * ch.g_sq[i - 1] / b.noise_ul, 0.0
    if mode is Mode.HD_DL:
        if i != 0:
            raise ValueError("HD-DL needs a virtual user without an UL user")
        return 0.0, p_dl * ch.g_sq[j - 1] / b.noise_dl
    if not v.is_fd:
        raise ValueError(f"{mode.name} needs two users, got {v}")
    su, sd = _fd_sinrs(mode is Mode.FD_SIC, ch.g_sq[i - 1], ch.g_sq[j - 1],
                       ch.h_sq[i - 1, j - 1], p_ul, p_dl, b.noise_ul, b.noise_dl, b.psi_b)
    return float(su), float(sd)


def hd_rates(v: VirtualUser, ch: ChannelRealization, budget: LinkBudget) -> ModeRates:
    v = VirtualUser(*v)
    check_virtual_user(v, len(ch.g_sq))
    if v.is_fd:
        raise ValueError("hd_rates needs a single-user virtual user")
    b = budget
    if v.dl == 0:
        su, _ = mode_sinrs(v, Mode.HD_UL, ch, b.p_max_ul, 0.0, b)
        return ModeRates(Mode.HD_UL, truncated_rate(su, b.gamma_max), 0.0, b.p_max_ul, 0.0)
    _, sd = mode_sinrs(v, Mode.HD_DL, ch, 0.0, b.p_max_dl, b)
    return ModeRates(Mode.HD_DL, 0.0, truncated_rate(sd, b.gamma_max), 0.0, b.p_max_dl)


def maxmin_power(v: VirtualUser, mode: Mode, ch: ChannelRealization, budget: LinkBudget,
                 sic: Sequence[bool] | None = None) -> ModeRates:
    """Powers maximizing ``min(rate_ul, rate_dl)`` for an FD virtual user.

    Ties go to the higher sum rate, then to the higher DL power.
    """
    n = len(ch.g_sq)
    v = VirtualUser(*v)
    check_virtual_user(v, n)
    mode = Mode(mode)
    if not v.is_fd or mode not in (Mode.FD_IN, Mode.FD_SIC):
        raise ValueError("maxmin_power needs an FD virtual user and an FD mode")
    if mode is Mode.FD_SIC and not _sic_array(sic, n)[v.dl - 1]:
        raise ValueError(f"user {v.dl} cannot perform SIC")
    i, j = v
    b = budget
    pu, pd, ru, rd = _maxmin(mode is Mode.FD_SIC, ch.g_sq[i - 1], ch.g_sq[j - 1],
                             ch.h_sq[i - 1, j - 1], b.p_max_ul, b.p_max_dl,
                             b.noise_ul, b.noise_dl, b.psi_b, b.gamma_max)
    return ModeRates(mode, float(ru), float(rd), float(pu), float(pd))
