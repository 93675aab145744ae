"""Online learning of TBS thresholds from observed performance matrices.

Each slot schedules with the current thresholds, updates running temporal
shares, then moves every threshold multiplicatively relative to the smallest
one. Thresholds sitting at the minimum are repaired upward when their user
falls short of its lower demand.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .feasibility import TemporalDemands
from .ratemodel import PerformanceMatrix, VirtualUser, vu_index_arrays
from .scheduler import ThresholdVector, _argmax_measure, full_set, tbs_select

DEFAULT_STEP = 0.001
MIN_TIE_TOL = 1e-9   # "threshold equals the minimum" comparison


@dataclass(frozen=True)
class OptimizerState:
    th: ThresholdVector
    shares_ul: np.ndarray
    shares_dl: np.ndarray
    t: int = 0
    c: float = DEFAULT_STEP

    @classmethod
    def initial(cls, n: int, c: float = DEFAULT_STEP) -> "OptimizerState":
        return cls(ThresholdVector.zeros(n), np.zeros(n), np.zeros(n), 0, c)


def opt_step(st: OptimizerState, pm: PerformanceMatrix, d: TemporalDemands,
             candidates: np.ndarray | None = None) -> tuple[OptimizerState, VirtualUser]:
    v = tbs_select(pm, st.th, candidates)
    n = st.th.n_users
    sel_u = np.arange(1, n + 1) == v.ul
    sel_d = np.arange(1, n + 1) == v.dl
    t1 = st.t + 1
    a_u = st.shares_ul + (sel_u - st.shares_ul) / t1
    a_d = st.shares_dl + (sel_d - st.shares_dl) / t1

    lu, ld = st.th.lambda_ul, st.th.lambda_dl
    lmin = min(lu.min(), ld.min())
    c = st.c
    new_u = lu - c * (lu - lmin) * (sel_u - d.lower_ul)
    new_d = ld - c * (ld - lmin) * (sel_d - d.lower_dl)
    for lam, new, a, w in ((lu, new_u, a_u, d.lower_ul), (ld, new_d, a_d, d.lower_dl)):
        at_min = np.abs(lam - lmin) <= MIN_TIE_TOL
        short = at_min & (a < w)
        new[short] = lam[short] + c * (w[short] - a[short])
        if lmin < 0:
            new[at_min] += c
    return OptimizerState(ThresholdVector(new_u, new_d), a_u, a_d, t1, c), v


@dataclass(frozen=True)
class SlacknessReport:
    product_ul: np.ndarray     # |lambda * (A - lower)|
    product_dl: np.ndarray
    gap_ul: np.ndarray         # signed distance outside [lower, upper]; 0 inside
    gap_dl: np.ndarray
    tol: float

    @property
    def converged(self) -> bool:
        return bool(np.all(self.product_ul < self.tol) and np.all(self.product_dl < self.tol)
                    and np.all(self.gap_ul <= self.tol) and np.all(self.gap_dl <= self.tol))


def _outside(a, lo, hi):
    return np.maximum(np.maximum(lo - a, a - hi), 0.0)


def check_slackness(st: OptimizerState, d: TemporalDemands, tol: float) -> SlacknessReport:
    return SlacknessReport(
        np.abs(st.th.lambda_ul * (st.shares_ul - d.lower_ul)),
        np.abs(st.th.lambda_dl * (st.shares_dl - d.lower_dl)),
        _outside(st.shares_ul, d.lower_ul, d.upper_ul),
        _outside(st.shares_dl, d.lower_dl, d.upper_dl),
        tol,
    )


@njit(cache=True)
def _learn_kernel(R, ul, dl, allowed, lam_u, lam_d, a_u, a_d, w_u, w_d, c, tol,
                  cnt_u, cnt_d, t0, usum, every, ck_t, ck_usum, ck_au, ck_ad, ck_lu, ck_ld,
                  n_ck, choices, trace_u, trace_d):
    # trace_u/trace_d: thresholds in force at each slot (skipped when empty)
    n = lam_u.shape[0] - 1
    keep = trace_u.shape[0] > 0
    new_u = np.empty(n + 1)
    new_d = np.empty(n + 1)
    t = t0
    for s in range(R.shape[0]):
        if keep:
            trace_u[s] = lam_u
            trace_d[s] = lam_d
        k = _argmax_measure(R, s, ul, dl, lam_u, lam_d, allowed)
        choices[s] = k
        i_sel = ul[k]
        j_sel = dl[k]
        t += 1
        cnt_u[i_sel] += 1
        cnt_d[j_sel] += 1
        usum[0] += R[s, k]
        lmin = np.inf
        for i in range(1, n + 1):
            a_u[i] += ((1.0 if i == i_sel else 0.0) - a_u[i]) / t
            a_d[i] += ((1.0 if i == j_sel else 0.0) - a_d[i]) / t
            lmin = min(lmin, lam_u[i], lam_d[i])
        for i in range(1, n + 1):
            new_u[i] = lam_u[i] - c * (lam_u[i] - lmin) * ((1.0 if i == i_sel else 0.0) - w_u[i])
            new_d[i] = lam_d[i] - c * (lam_d[i] - lmin) * ((1.0 if i == j_sel else 0.0) - w_d[i])
            if abs(lam_u[i] - lmin) <= tol:
                if a_u[i] < w_u[i]:
                    new_u[i] = lam_u[i] + c * (w_u[i] - a_u[i])
                if lmin < 0.0:
                    new_u[i] += c
            if abs(lam_d[i] - lmin) <= tol:
                if a_d[i] < w_d[i]:
                    new_d[i] = lam_d[i] + c * (w_d[i] - a_d[i])
                if lmin < 0.0:
                    new_d[i] += c
        for i in range(1, n + 1):
            lam_u[i] = new_u[i]
            lam_d[i] = new_d[i]
        if every > 0 and t % every == 0:
            m = n_ck[0]
            ck_t[m] = t
            ck_usum[m] = usum[0]
            for i in range(n + 1):
                ck_au[m, i] = a_u[i]
                ck_ad[m, i] = a_d[i]
                ck_lu[m, i] = lam_u[i]
                ck_ld[m, i] = lam_d[i]
            n_ck[0] = m + 1


@dataclass(frozen=True)
class Checkpoint:
    t: int
    utility_sum: float
    shares_ul: np.ndarray
    shares_dl: np.ndarray
    lambda_ul: np.ndarray
    lambda_dl: np.ndarray

    @property
    def utility(self) -> float:
        return self.utility_sum / self.t


class ThresholdLearner:
    """Runs the threshold update jointly with TBS decisions over a slot stream.

    ``candidates`` restricts scheduling (e.g. to HD virtual users for the
    baseline). Checkpoints are taken every ``checkpoint_every`` slots.
    """

    def __init__(self, demands: TemporalDemands, c: float = DEFAULT_STEP,
                 candidates: np.ndarray | None = None, checkpoint_every: int = 0,
                 tol: float = MIN_TIE_TOL):
        n = demands.n_users
        self.demands = demands
        self.c = float(c)
        self.tol = tol
        self.every = int(checkpoint_every)
        self._allowed = np.ascontiguousarray(
            full_set(n) if candidates is None else candidates, dtype=np.bool_)
        self._lu = np.zeros(n + 1)
        self._ld = np.zeros(n + 1)
        self._au = np.zeros(n + 1)
        self._ad = np.zeros(n + 1)
        self._wu = np.concatenate([[0.0], demands.lower_ul])
        self._wd = np.concatenate([[0.0], demands.lower_dl])
        self._cu = np.zeros(n + 1, dtype=np.int64)
        self._cd = np.zeros(n + 1, dtype=np.int64)
        self._usum = np.zeros(1)
        self.t = 0
        self.checkpoints: list[Checkpoint] = []

    @property
    def n_users(self) -> int:
        return self.demands.n_users

    def feed(self, R: np.ndarray, trace: bool = False):
        """Schedule and learn over every slot of ``R``; returns the chosen flat indices.

        With ``trace=True`` also returns the extended threshold vectors in force
        at each slot, shape ``(T, n+1)`` per direction.
        """
        n = self.n_users
        ul, dl = vu_index_arrays(n)
        T = len(R)
        cap = T // self.every + 1 if self.every > 0 else 0
        ck_t = np.zeros(cap, dtype=np.int64)
        ck_usum = np.zeros(cap)
        ck = [np.zeros((cap, n + 1)) for _ in range(4)]
        n_ck = np.zeros(1, dtype=np.int64)
        choices = np.empty(T, dtype=np.int64)
        rows = T if trace else 0
        tr_u = np.empty((rows, n + 1))
        tr_d = np.empty((rows, n + 1))
        _learn_kernel(np.ascontiguousarray(R), ul, dl, self._allowed, self._lu, self._ld,
                      self._au, self._ad, self._wu, self._wd, self.c, self.tol,
                      self._cu, self._cd, self.t, self._usum, self.every,
                      ck_t, ck_usum, *ck, n_ck, choices, tr_u, tr_d)
        self.t += T
        for m in range(int(n_ck[0])):
            self.checkpoints.append(Checkpoint(int(ck_t[m]), float(ck_usum[m]),
                                               ck[0][m, 1:].copy(), ck[1][m, 1:].copy(),
                                               ck[2][m, 1:].copy(), ck[3][m, 1:].copy()))
        return (choices, tr_u, tr_d) if trace else choices

    @property
    def thresholds(self) -> ThresholdVector:
        return ThresholdVector(self._lu[1:].copy(), self._ld[1:].copy())

    @property
    def state(self) -> OptimizerState:
        return OptimizerState(self.thresholds, self._au[1:].copy(), self._ad[1:].copy(),
                              self.t, self.c)

    @property
    def count_ul(self) -> np.ndarray:
        return self._cu[1:].copy()

    @property
    def count_dl(self) -> np.ndarray:
        return self._cd[1:].copy()

    @property
    def utility_sum(self) -> float:
        return float(self._usum[0])

    @property
    def utility(self) -> float:
        return self.utility_sum / self.t if self.t else 0.0


def with_step(st: OptimizerState, c: float) -> OptimizerState:
    return replace(st, c=c)
