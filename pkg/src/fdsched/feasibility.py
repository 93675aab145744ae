"""Feasibility of temporal demands and witness schedules.

Long-term feasibility is the four-inequality region over equality demands
``(w_ul, w_dl)``; short-term feasibility over a window of ``s`` slots is an
integer transportation problem on slot counts ``a[i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .ratemodel import VirtualUser

TOL = 1e-9


class NonIntegralDemandError(ValueError):
    """``s * w`` is not an integer, so no window-``s`` schedule can meet ``w`` exactly."""


class InfeasibleDemandError(ValueError):
    pass


@dataclass(frozen=True)
class TemporalDemands:
    lower_ul: np.ndarray
    upper_ul: np.ndarray
    lower_dl: np.ndarray
    upper_dl: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in
                (self.lower_ul, self.upper_ul, self.lower_dl, self.upper_dl)]
        n = len(arrs[0])
        if any(a.shape != (n,) for a in arrs):
            raise ValueError("demand vectors must share one length")
        if any(np.any((a < 0) | (a > 1)) for a in arrs):
            raise ValueError("demands must lie in [0, 1]")
        if np.any(arrs[0] > arrs[1] + TOL) or np.any(arrs[2] > arrs[3] + TOL):
            raise ValueError("lower demand exceeds upper demand")
        for name, a in zip(("lower_ul", "upper_ul", "lower_dl", "upper_dl"), arrs):
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def n_users(self) -> int:
        return len(self.lower_ul)

    @classmethod
    def lower_only(cls, lower_ul, lower_dl) -> "TemporalDemands":
        lo_u = np.asarray(lower_ul, dtype=float)
        lo_d = np.asarray(lower_dl, dtype=float)
        return cls(lo_u, np.ones_like(lo_u), lo_d, np.ones_like(lo_d))

    @classmethod
    def equality(cls, w_ul, w_dl) -> "TemporalDemands":
        return cls(w_ul, w_ul, w_dl, w_dl)

    @classmethod
    def uniform(cls, n: int, lower_ul: float, lower_dl: float) -> "TemporalDemands":
        return cls.lower_only(np.full(n, lower_ul), np.full(n, lower_dl))

    def window_counts(self, s: int):
        """Integer count bounds ``(ceil(s*lower), floor(s*upper))`` per direction."""
        def ceil(x):
            return np.ceil(s * x - TOL).astype(np.int64)

        def floor(x):
            return np.floor(s * x + TOL).astype(np.int64)
        return (ceil(self.lower_ul), floor(self.upper_ul),
                ceil(self.lower_dl), floor(self.upper_dl))


@dataclass(frozen=True)
class SlotAllocation:
    """Slot counts ``a[i, j]`` of every virtual user over one window."""

    counts: np.ndarray   # (n+1, n+1) int, a[i, i] = 0

    @property
    def n_users(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def window(self) -> int:
        return int(self.counts.sum())

    def ul_counts(self) -> np.ndarray:
        return self.counts[1:, :].sum(axis=1)

    def dl_counts(self) -> np.ndarray:
        return self.counts[:, 1:].sum(axis=0)


def feasible_longterm(w_ul: Sequence[float], w_dl: Sequence[float], tol: float = TOL) -> bool:
    """Membership of equality demands in the long-term feasible region."""
    u = np.asarray(w_ul, dtype=float)
    d = np.asarray(w_dl, dtype=float)
    return bool(u.sum() <= 1 + tol and d.sum() <= 1 + tol
                and u.sum() + d.sum() >= 1 - tol and np.all(u + d <= 1 + tol))


def feasible_longterm_box(d: TemporalDemands) -> bool:
    """Whether some equality demand inside the boxes is long-term feasible (LP)."""
    n = d.n_users
    eye = np.eye(n)
    a_ub = np.vstack([
        np.concatenate([np.ones(n), np.zeros(n)]),
        np.concatenate([np.zeros(n), np.ones(n)]),
        -np.ones(2 * n),
        np.hstack([eye, eye]),
    ])
    b_ub = np.concatenate([[1.0, 1.0, -1.0], np.ones(n)])
    bounds = list(zip(np.concatenate([d.lower_ul, d.lower_dl]),
                      np.concatenate([d.upper_ul, d.upper_dl])))
    res = linprog(np.zeros(2 * n), A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    return res.status == 0


def demand_counts(s: int, w: Sequence[float], tol: float = TOL) -> np.ndarray:
    x = s * np.asarray(w, dtype=float)
    k = np.rint(x)
    if np.any(np.abs(x - k) > tol):
        raise NonIntegralDemandError(f"s*w = {x} is not integral for s={s}")
    return k.astype(np.int64)


def shortterm_violations(s: int, k_ul: np.ndarray, k_dl: np.ndarray) -> list[str]:
    """Human-readable reasons why counts ``(k_ul, k_dl)`` cannot fit a window of ``s``."""
    out = []
    if k_ul.sum() > s:
        out.append(f"total UL slots {k_ul.sum()} exceed the window {s}")
    if k_dl.sum() > s:
        out.append(f"total DL slots {k_dl.sum()} exceed the window {s}")
    if k_ul.sum() + k_dl.sum() < s:
        out.append(f"UL+DL slots {k_ul.sum() + k_dl.sum()} cannot fill the window {s}")
    for i in np.flatnonzero(k_ul + k_dl > s):
        out.append(f"user {i + 1} needs {k_ul[i] + k_dl[i]} slots in a window of {s}")
    return out


def allocate_counts(s: int, k_ul: Sequence[int], k_dl: Sequence[int]) -> SlotAllocation | None:
    """Solve the slot-count system for integer demands, or return None."""
    k_ul = np.asarray(k_ul, dtype=np.int64)
    k_dl = np.asarray(k_dl, dtype=np.int64)
    n = len(k_ul)
    if s < 1:
        raise ValueError("window must be at least one slot")
    if np.any(k_ul < 0) or np.any(k_dl < 0) or np.any(k_ul > s) or np.any(k_dl > s):
        return None
    n_fd = int(k_ul.sum() + k_dl.sum() - s)
    if n_fd < 0 or n_fd > min(k_ul.sum(), k_dl.sum()):
        return None

    fd = np.zeros((n, n), dtype=np.int64)
    if n_fd > 0:
        # super-source(0) -> source(1) -> UL_i(2+i) -> DL_j(2+n+j) -> sink(2+2n)
        size = 3 + 2 * n
        cap = np.zeros((size, size), dtype=np.int32)
        cap[0, 1] = n_fd
        cap[1, 2:2 + n] = k_ul
        cap[2 + n:2 + 2 * n, size - 1] = k_dl
        block = np.full((n, n), n_fd, dtype=np.int32)
        np.fill_diagonal(block, 0)
        cap[2:2 + n, 2 + n:2 + 2 * n] = block
        res = maximum_flow(csr_matrix(cap), 0, size - 1)
        if res.flow_value < n_fd:
            return None
        flow = res.flow.toarray()
        fd = np.maximum(flow[2:2 + n, 2 + n:2 + 2 * n], 0).astype(np.int64)

    a = np.zeros((n + 1, n + 1), dtype=np.int64)
    a[1:, 1:] = fd
    a[1:, 0] = k_ul - fd.sum(axis=1)
    a[0, 1:] = k_dl - fd.sum(axis=0)
    alloc = SlotAllocation(a)
    if not check_allocation(alloc, s, k_ul, k_dl):
        raise RuntimeError("max-flow allocation failed its own consistency check")
    return alloc


def check_allocation(alloc: SlotAllocation, s: int, k_ul, k_dl) -> bool:
    """Re-evaluate every condition of the slot-count system."""
    a = alloc.counts
    return bool(a[0, 0] == 0 and np.all(np.diag(a) == 0) and np.all(a >= 0)
                and a.sum() == s
                and np.array_equal(alloc.ul_counts(), np.asarray(k_ul))
                and np.array_equal(alloc.dl_counts(), np.asarray(k_dl)))


def feasible_shortterm(s: int, w_ul: Sequence[float], w_dl: Sequence[float]) -> SlotAllocation | None:
    """Witness allocation meeting ``(w_ul, w_dl)`` exactly over ``s`` slots, or None.

    Raises :class:`NonIntegralDemandError` when ``s*w`` is not integral.
    """
    if s < 1:
        raise ValueError("window must be at least one slot")
    return allocate_counts(s, demand_counts(s, w_ul), demand_counts(s, w_dl))


def window_allocation(d: TemporalDemands, s: int) -> SlotAllocation | None:
    """Slot counts meeting box demands ``[ceil(s*lower), floor(s*upper)]`` over ``s`` slots.

    When the lower counts already fill the window they are the easiest target
    (raising any count only adds FD time). Otherwise counts are raised toward
    their upper bounds, user by user, until they fill the window.
    """
    if s < 1:
        raise ValueError("window must be at least one slot")
    lo_u, hi_u, lo_d, hi_d = d.window_counts(s)
    if np.any(lo_u > hi_u) or np.any(lo_d > hi_d):
        return None
    k_u, k_d = lo_u.copy(), lo_d.copy()
    short = s - int(k_u.sum() + k_d.sum())
    for k, hi in ((k_u, hi_u), (k_d, hi_d)):
        for i in range(len(k)):
            if short <= 0:
                break
            add = min(short, int(hi[i] - k[i]), s - int(k_u[i] + k_d[i]))
            if add > 0:
                k[i] += add
                short -= add
    if short > 0:
        return None
    return allocate_counts(s, k_u, k_d)


def window_violations(d: TemporalDemands, s: int) -> list[str]:
    """Why no window-``s`` schedule meets ``d``; empty when one exists."""
    if window_allocation(d, s) is not None:
        return []
    lo_u, hi_u, lo_d, hi_d = d.window_counts(s)
    out = []
    for name, lo, hi in (("UL", lo_u, hi_u), ("DL", lo_d, hi_d)):
        for i in np.flatnonzero(lo > hi):
            out.append(f"user {i + 1} {name}: no integer count in [{_lower(d, name)[i]}, "
                       f"{_upper(d, name)[i]}] x {s}")
    if hi_u.sum() + hi_d.sum() < s:
        out.append(f"upper demands allow only {hi_u.sum() + hi_d.sum()} activations in a window of {s}")
    out.extend(shortterm_violations(s, lo_u, lo_d))
    return out or [f"no slot assignment meets the demands in a window of {s}"]


def _lower(d: TemporalDemands, name: str) -> np.ndarray:
    return d.lower_ul if name == "UL" else d.lower_dl


def _upper(d: TemporalDemands, name: str) -> np.ndarray:
    return d.upper_ul if name == "UL" else d.upper_dl


def witness_schedule(alloc: SlotAllocation) -> list[VirtualUser]:
    """Round robin over the allocation: each ``v_{i,j}`` repeated ``a[i,j]`` times, lexicographic."""
    out = []
    m = alloc.counts.shape[0]
    for i in range(m):
        for j in range(m):
            if i != j:
                out.extend([VirtualUser(i, j)] * int(alloc.counts[i, j]))
    return out


def longterm_witness(w_ul: Sequence[float], w_dl: Sequence[float]) -> np.ndarray:
    """Fractional time shares ``a[i, j]`` meeting equality demands in the long run.

    FD time ``alpha = sum(w_ul) + sum(w_dl) - 1`` is filled greedily over pairs in
    lexicographic order, the rest is HD time. The greedy sweep can stall with FD
    time left when the only residual demand sits on one user in both directions;
    the FD block is then re-solved as a transportation LP.
    """
    u = np.asarray(w_ul, dtype=float)
    d = np.asarray(w_dl, dtype=float)
    if not feasible_longterm(u, d):
        raise InfeasibleDemandError("demands are outside the long-term feasible region")
    n = len(u)
    alpha = max(u.sum() + d.sum() - 1.0, 0.0)
    fd = np.zeros((n, n))
    rem_a, rem_u, rem_d = alpha, u.copy(), d.copy()
    for i in range(n):
        for j in range(n):
            if i == j or rem_a <= 0:
                continue
            x = max(min(rem_a, rem_u[i], rem_d[j]), 0.0)
            fd[i, j] = x
            rem_a -= x
            rem_u[i] -= x
            rem_d[j] -= x
    if rem_a > TOL:
        fd = _fd_transport(u, d, alpha)

    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = fd
    a[1:, 0] = np.maximum(u - fd.sum(axis=1), 0.0)
    a[0, 1:] = np.maximum(d - fd.sum(axis=0), 0.0)
    return a


def _fd_transport(u, d, alpha):
    n = len(u)
    idx = [(i, j) for i in range(n) for j in range(n) if i != j]
    a_ub = np.zeros((2 * n, len(idx)))
    for k, (i, j) in enumerate(idx):
        a_ub[i, k] = 1.0
        a_ub[n + j, k] = 1.0
    res = linprog(np.zeros(len(idx)), A_ub=a_ub, b_ub=np.concatenate([u, d]),
                  A_eq=np.ones((1, len(idx))), b_eq=[alpha], bounds=(0, None), method="highs")
    if res.status != 0:
        raise InfeasibleDemandError("no FD time-sharing meets the demands")
    fd = np.zeros((n, n))
    for k, (i, j) in enumerate(idx):
        fd[i, j] = max(res.x[k], 0.0)
    return fd
