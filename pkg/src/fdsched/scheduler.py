"""Threshold-based scheduling (TBS), its window-constrained variant (ATBS) and the HD baseline.

The per-slot functions (:func:`tbs_select`, :func:`state_update`,
:func:`atbs_feasible_set`, :func:`atbs_select`) are the reference
implementation. :class:`TBSRunner` and :class:`ATBSRunner` run the same rules
over long slot streams with compiled kernels that consume flattened
performance matrices (see :meth:`PerformanceMatrix.flat`).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .feasibility import TemporalDemands
from .ratemodel import PerformanceMatrix, VirtualUser, virtual_users, vu_index_arrays


class EmptyCandidateSetError(RuntimeError):
    """No virtual user keeps the window demands satisfiable."""


@dataclass(frozen=True)
class ThresholdVector:
    lambda_ul: np.ndarray
    lambda_dl: np.ndarray

    def __post_init__(self):
        u = np.array(self.lambda_ul, dtype=float)
        d = np.array(self.lambda_dl, dtype=float)
        if u.shape != d.shape or u.ndim != 1:
            raise ValueError("UL and DL thresholds must be 1-D and equally long")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(d))):
            raise ValueError("thresholds must be finite")
        object.__setattr__(self, "lambda_ul", u)
        object.__setattr__(self, "lambda_dl", d)

    @classmethod
    def zeros(cls, n: int) -> "ThresholdVector":
        return cls(np.zeros(n), np.zeros(n))

    @property
    def n_users(self) -> int:
        return len(self.lambda_ul)

    def extended(self) -> tuple[np.ndarray, np.ndarray]:
        """Thresholds indexed by user number, with the idle slot 0 fixed at 0."""
        return np.concatenate([[0.0], self.lambda_ul]), np.concatenate([[0.0], self.lambda_dl])


@dataclass(frozen=True)
class ScheduleState:
    t: int
    count_ul: np.ndarray
    count_dl: np.ndarray
    utility_sum: float = 0.0
    last_choice: VirtualUser | None = None

    @classmethod
    def fresh(cls, n: int) -> "ScheduleState":
        return cls(0, np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64))

    @property
    def n_users(self) -> int:
        return len(self.count_ul)

    @property
    def shares_ul(self) -> np.ndarray:
        return self.count_ul / max(self.t, 1)

    @property
    def shares_dl(self) -> np.ndarray:
        return self.count_dl / max(self.t, 1)

    @property
    def utility(self) -> float:
        return self.utility_sum / self.t if self.t else 0.0

    def check(self) -> None:
        u, d, t = self.count_ul, self.count_dl, self.t
        ok = (np.all(u <= t) and np.all(d <= t) and np.all(u + d <= t)
              and u.sum() <= t and d.sum() <= t and u.sum() + d.sum() >= t)
        if not ok:
            raise AssertionError(f"inconsistent schedule state: {self}")


# -- candidate sets -----------------------------------------------------------

@lru_cache(maxsize=None)
def _full_mask(n: int) -> np.ndarray:
    m = np.ones(len(virtual_users(n)), dtype=np.bool_)
    m.flags.writeable = False
    return m


@lru_cache(maxsize=None)
def _hd_mask(n: int) -> np.ndarray:
    ul, dl = vu_index_arrays(n)
    m = (ul == 0) | (dl == 0)
    m.flags.writeable = False
    return m


def full_set(n: int) -> np.ndarray:
    """Every virtual user, as a boolean mask over :func:`virtual_users` order."""
    return _full_mask(n)


def hd_set(n: int) -> np.ndarray:
    """Only the single-user virtual users ``v_{i,0}`` and ``v_{0,j}``."""
    return _hd_mask(n)


def members(mask: np.ndarray, n: int) -> list[VirtualUser]:
    return [v for v, keep in zip(virtual_users(n), mask) if keep]


# -- reference per-slot rules ---------------------------------------------------

def scheduling_measure(pm: PerformanceMatrix, th: ThresholdVector) -> np.ndarray:
    n = pm.n_users
    ul, dl = vu_index_arrays(n)
    lu, ld = th.extended()
    return pm.flat() + lu[ul] + ld[dl]


def tbs_select(pm: PerformanceMatrix, th: ThresholdVector,
               candidates: np.ndarray | None = None) -> VirtualUser:
    """Candidate with the largest rate-plus-thresholds measure; ties go to the lowest ``(i, j)``."""
    n = pm.n_users
    if th.n_users != n:
        raise ValueError("threshold and matrix sizes disagree")
    mask = full_set(n) if candidates is None else np.asarray(candidates, dtype=bool)
    if not mask.any():
        raise ValueError("empty candidate set")
    m = np.where(mask, scheduling_measure(pm, th), -np.inf)
    return virtual_users(n)[int(np.argmax(m))]


def hd_baseline_select(pm: PerformanceMatrix, th_hd: ThresholdVector) -> VirtualUser:
    return tbs_select(pm, th_hd, hd_set(pm.n_users))


def state_update(st: ScheduleState, choice: VirtualUser, pm: PerformanceMatrix) -> ScheduleState:
    i, j = choice
    if i == j or not (0 <= i <= st.n_users and 0 <= j <= st.n_users):
        raise ValueError(f"{choice} is not a virtual user")
    cu, cd = st.count_ul.copy(), st.count_dl.copy()
    if i:
        cu[i - 1] += 1
    if j:
        cd[j - 1] += 1
    return ScheduleState(st.t + 1, cu, cd, st.utility_sum + float(pm.utility[i, j]), choice)


def atbs_feasible_set(st: ScheduleState, d: TemporalDemands, s: int) -> np.ndarray:
    """Mask of virtual users whose activation now keeps the window-``s`` demands satisfiable.

    Each candidate is tested with its own activation counted. Besides the
    deficit and headroom sums, a candidate that would push its own user past
    ``floor(s * upper)`` is excluded.
    """
    if not 0 <= st.t < s:
        raise ValueError(f"slot {st.t} is outside a window of {s}")
    n = st.n_users
    lo_u, hi_u, lo_d, hi_d = d.window_counts(s)
    ul, dl = vu_index_arrays(n)
    users = np.arange(1, n + 1)
    act_u = (users[None, :] == ul[:, None]).astype(np.int64)   # (V, n)
    act_d = (users[None, :] == dl[:, None]).astype(np.int64)
    cu = st.count_ul[None, :] + act_u
    cd = st.count_dl[None, :] + act_d
    def_u = np.maximum(lo_u[None, :] - cu, 0)
    def_d = np.maximum(lo_d[None, :] - cd, 0)
    head_u = hi_u[None, :] - cu
    head_d = hi_d[None, :] - cd
    left = s - st.t - 1
    keep = ((def_u.sum(axis=1) <= left)
            & (def_d.sum(axis=1) <= left)
            & (head_u.sum(axis=1) + head_d.sum(axis=1) >= left)
            & ((def_u + def_d).max(axis=1) <= left)
            & (head_u.min(axis=1) >= 0) & (head_d.min(axis=1) >= 0))
    if not keep.any():
        raise EmptyCandidateSetError(f"no feasible virtual user at slot {st.t} of {s}")
    return keep


def atbs_select(pm: PerformanceMatrix, th: ThresholdVector, st: ScheduleState,
                d: TemporalDemands, s: int) -> VirtualUser:
    return tbs_select(pm, th, atbs_feasible_set(st, d, s))


# -- compiled kernels -------------------------------------------------------

@njit(cache=True)
def _argmax_measure(R, t, ul, dl, lam_u, lam_d, allowed):
    best = -np.inf
    pick = -1
    for k in range(R.shape[1]):
        if allowed[k]:
            m = R[t, k] + lam_u[ul[k]] + lam_d[dl[k]]
            if m > best:
                best = m
                pick = k
    return pick


@njit(cache=True)
def _tbs_kernel(R, ul, dl, lam_u, lam_d, allowed, cnt_u, cnt_d, usum, choices):
    for t in range(R.shape[0]):
        k = _argmax_measure(R, t, ul, dl, lam_u, lam_d, allowed)
        choices[t] = k
        cnt_u[ul[k]] += 1
        cnt_d[dl[k]] += 1
        usum[0] += R[t, k]


@njit(cache=True)
def _atbs_admissible(k, ul, dl, cnt_u, cnt_d, lo_u, hi_u, lo_d, hi_d, left):
    n = cnt_u.shape[0] - 1
    a = ul[k]
    b = dl[k]
    su = 0
    sd = 0
    head = 0
    worst = 0
    for i in range(1, n + 1):
        cu = cnt_u[i] + (1 if i == a else 0)
        cd = cnt_d[i] + (1 if i == b else 0)
        du = lo_u[i] - cu
        dd = lo_d[i] - cd
        du = du if du > 0 else 0
        dd = dd if dd > 0 else 0
        hu = hi_u[i] - cu
        hd = hi_d[i] - cd
        if hu < 0 or hd < 0:
            return False
        su += du
        sd += dd
        head += hu + hd
        if du + dd > worst:
            worst = du + dd
    return su <= left and sd <= left and head >= left and worst <= left


@njit(cache=True)
def _atbs_kernel(R, ul, dl, lam_u, lam_d, allowed, s, lo_u, hi_u, lo_d, hi_d,
                 cnt_u, cnt_d, tw, usum_w, win_util, win_viol, n_win, choices):
    # Returns -1 on success, otherwise the slot at which no candidate was admissible.
    V = R.shape[1]
    n = cnt_u.shape[0] - 1
    feas = np.zeros(V, dtype=np.bool_)
    for t in range(R.shape[0]):
        left = s - tw[0] - 1
        for k in range(V):
            feas[k] = allowed[k] and _atbs_admissible(k, ul, dl, cnt_u, cnt_d,
                                                      lo_u, hi_u, lo_d, hi_d, left)
        k = _argmax_measure(R, t, ul, dl, lam_u[t], lam_d[t], feas)
        if k < 0:
            return t
        choices[t] = k
        cnt_u[ul[k]] += 1
        cnt_d[dl[k]] += 1
        usum_w[0] += R[t, k]
        tw[0] += 1
        if tw[0] == s:
            bad = 0
            for i in range(1, n + 1):
                if (cnt_u[i] < lo_u[i] or cnt_u[i] > hi_u[i]
                        or cnt_d[i] < lo_d[i] or cnt_d[i] > hi_d[i]):
                    bad += 1
            win_util[n_win[0]] = usum_w[0] / s
            win_viol[n_win[0]] = bad
            n_win[0] += 1
            tw[0] = 0
            usum_w[0] = 0.0
            for i in range(n + 1):
                cnt_u[i] = 0
                cnt_d[i] = 0
    return -1


@dataclass
class TBSRunner:
    """Fixed-threshold TBS over a stream of flattened performance matrices."""

    th: ThresholdVector
    candidates: np.ndarray | None = None

    def __post_init__(self):
        n = self.th.n_users
        self.t = 0
        self.utility_sum = 0.0
        self._ext = self.th.extended()
        self._allowed = np.ascontiguousarray(
            full_set(n) if self.candidates is None else self.candidates, dtype=np.bool_)
        self._cu = np.zeros(n + 1, dtype=np.int64)
        self._cd = np.zeros(n + 1, dtype=np.int64)

    @property
    def count_ul(self):
        return self._cu[1:].copy()

    @property
    def count_dl(self):
        return self._cd[1:].copy()

    def feed(self, R: np.ndarray) -> np.ndarray:
        """Schedule every slot of ``R`` (shape ``(T, |V|)``); returns chosen flat indices."""
        n = self.th.n_users
        ul, dl = vu_index_arrays(n)
        choices = np.empty(len(R), dtype=np.int64)
        usum = np.zeros(1)
        _tbs_kernel(np.ascontiguousarray(R), ul, dl, self._ext[0], self._ext[1],
                    self._allowed, self._cu, self._cd, usum, choices)
        self.t += len(R)
        self.utility_sum += usum[0]
        return choices

    @property
    def utility(self) -> float:
        return self.utility_sum / self.t if self.t else 0.0


@dataclass
class ATBSRunner:
    """ATBS over back-to-back windows of ``s`` slots."""

    th: ThresholdVector
    demands: TemporalDemands
    window: int
    candidates: np.ndarray | None = None

    def __post_init__(self):
        n = self.th.n_users
        if self.demands.n_users != n:
            raise ValueError("threshold and demand sizes disagree")
        if self.window < 1:
            raise ValueError("window must be at least one slot")
        self._ext = self.th.extended()
        self._allowed = np.ascontiguousarray(
            full_set(n) if self.candidates is None else self.candidates, dtype=np.bool_)
        pad = lambda a: np.concatenate([[0], a]).astype(np.int64)  # noqa: E731
        self._bounds = tuple(pad(a) for a in self.demands.window_counts(self.window))
        self._cu = np.zeros(n + 1, dtype=np.int64)
        self._cd = np.zeros(n + 1, dtype=np.int64)
        self._tw = np.zeros(1, dtype=np.int64)
        self._usum = np.zeros(1)
        self.window_utility: list[float] = []
        self.window_violations: list[int] = []

    def feed(self, R: np.ndarray, lambdas: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
        """Schedule every slot of ``R``.

        ``lambdas`` optionally overrides the fixed thresholds with per-slot
        extended vectors ``(lam_ul, lam_dl)`` of shape ``(T, n+1)``.
        """
        n = self.th.n_users
        ul, dl = vu_index_arrays(n)
        T = len(R)
        if lambdas is None:
            lam_u = np.broadcast_to(self._ext[0], (T, n + 1))
            lam_d = np.broadcast_to(self._ext[1], (T, n + 1))
        else:
            lam_u, lam_d = (np.asarray(a, dtype=float) for a in lambdas)
            if lam_u.shape != (T, n + 1) or lam_d.shape != (T, n + 1):
                raise ValueError("per-slot thresholds must have shape (T, n+1)")
        cap = T // self.window + 2
        win_util = np.empty(cap)
        win_viol = np.empty(cap, dtype=np.int64)
        n_win = np.zeros(1, dtype=np.int64)
        choices = np.empty(T, dtype=np.int64)
        lo_u, hi_u, lo_d, hi_d = self._bounds
        bad = _atbs_kernel(np.ascontiguousarray(R), ul, dl, lam_u, lam_d,
                           self._allowed, self.window, lo_u, hi_u, lo_d, hi_d,
                           self._cu, self._cd, self._tw, self._usum,
                           win_util, win_viol, n_win, choices)
        if bad >= 0:
            raise EmptyCandidateSetError(f"no admissible virtual user at block slot {bad}")
        k = int(n_win[0])
        self.window_utility.extend(win_util[:k].tolist())
        self.window_violations.extend(win_viol[:k].tolist())
        return choices

    @property
    def in_window(self) -> int:
        return int(self._tw[0])
