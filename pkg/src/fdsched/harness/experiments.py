"""Experiment drivers: long-term learning, FD-vs-HD gain sweeps and window studies.

Each drop is an independent work unit seeded with ``(run.seed, drop)``. Sweep
cells reuse the same drop seeds, so cells that share a placement also share
every channel realization (paired comparisons). Within a drop all schedulers
consume the same performance-matrix blocks.
"""

from __future__ import annotations

import dataclasses
import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ..feasibility import InfeasibleDemandError, window_violations
from ..geomchan import CellDrop, Hotspot, Uniform, draw_realizations, make_drop
from ..ratemodel import link_budget, performance_matrices
from ..scheduler import ATBSRunner, TBSRunner, hd_set
from ..threshopt import ThresholdLearner
from .config import SimConfig, placement_label

SIM_LEVELS = (60.0, 80.0, 100.0)
BURN_IN = 0.1      # fraction of slots discarded by the steady-state share estimate


@dataclass(frozen=True)
class TraceRow:
    """State of one learning run at a checkpoint."""

    cell: str
    drop: int
    scheduler: str
    slot: int
    utility: float           # running average, bps/Hz
    shares_ul: tuple
    shares_dl: tuple
    lambda_ul: tuple
    lambda_dl: tuple


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one scheduler on one drop (and one window length, if any)."""

    cell: str
    drop: int
    scheduler: str
    window: int               # 0 for long-term runs
    n_slots: int
    utility_sum: float
    shares_ul: tuple          # cumulative
    shares_dl: tuple
    steady_ul: tuple          # after burn-in (equals cumulative for evaluation runs)
    steady_dl: tuple
    lambda_ul: tuple
    lambda_dl: tuple
    checksum: str             # digest of the channel realizations consumed
    n_windows: int = 0
    violations: int = 0       # windows with any count outside its bounds
    window_utility: tuple = field(default=(), repr=False)

    @property
    def utility(self) -> float:
        return self.utility_sum / self.n_slots


@dataclass
class MetricsReport:
    experiment: str
    config: dict
    bandwidth: float
    records: list[RunRecord] = field(default_factory=list)
    traces: list[TraceRow] = field(default_factory=list)

    def mbps(self, utility: float) -> float:
        """Spectral efficiency (bps/Hz) to throughput in Mbps."""
        return utility * self.bandwidth / 1e6

    def cells(self) -> list[str]:
        return list(dict.fromkeys(r.cell for r in self.records))

    def select(self, cell: str, scheduler: str, window: int = 0) -> list[RunRecord]:
        return sorted((r for r in self.records
                       if r.cell == cell and r.scheduler == scheduler and r.window == window),
                      key=lambda r: r.drop)

    def utilities(self, cell: str, scheduler: str, window: int = 0) -> np.ndarray:
        return np.array([r.utility for r in self.select(cell, scheduler, window)])

    def mean_utility(self, cell: str, scheduler: str, window: int = 0) -> float:
        return float(self.utilities(cell, scheduler, window).mean())

    def se_utility(self, cell: str, scheduler: str, window: int = 0) -> float:
        """Standard error; over windows for ATBS, over drops otherwise."""
        recs = self.select(cell, scheduler, window)
        if window:
            x = np.concatenate([r.window_utility for r in recs])
        else:
            x = np.array([r.utility for r in recs])
        return float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0

    def gain(self, cell: str, fd: str = "tbs", hd: str = "hd") -> float:
        """FD gain in percent: ratio of drop-mean utilities on identical drops."""
        u_fd = self.utilities(cell, fd)
        u_hd = self.utilities(cell, hd)
        if len(u_fd) != len(u_hd) or len(u_fd) == 0:
            raise ValueError(f"cell {cell!r} lacks paired {fd}/{hd} runs")
        return gain_percent(u_fd, u_hd)

    def extend(self, other: "MetricsReport") -> None:
        self.records.extend(other.records)
        self.traces.extend(other.traces)


def gain_percent(u_fd: np.ndarray, u_hd: np.ndarray) -> float:
    return float(100.0 * (np.mean(u_fd) - np.mean(u_hd)) / np.mean(u_hd))


def bootstrap_gains(report: MetricsReport, cells: Sequence[str], n_boot: int = 2000,
                    seed: int = 0) -> np.ndarray:
    """Gains per cell over drop resamples shared by all cells, shape ``(n_boot, len(cells))``."""
    fd = np.stack([report.utilities(c, "tbs") for c in cells], axis=1)
    hd = np.stack([report.utilities(c, "hd") for c in cells], axis=1)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(fd), size=(n_boot, len(fd)))
    m_fd = fd[idx].mean(axis=1)
    m_hd = hd[idx].mean(axis=1)
    return 100.0 * (m_fd - m_hd) / m_hd


# -- per-drop work -----------------------------------------------------------

def _drop_seed(cfg: SimConfig, d: int) -> tuple[int, int]:
    return (cfg.run.seed, d)


def _blocks(cfg: SimConfig, drop: CellDrop, seed, start: int, count: int, digest):
    """Yield flattened performance matrices for slots ``start .. start+count-1``."""
    budget = link_budget(cfg.channel)
    sic = cfg.sic_flags()
    end = start + count
    for a in range(start, end, cfg.run.block):
        r = draw_realizations(drop, seed, a, min(cfg.run.block, end - a))
        digest.update(r.g_sq.tobytes())
        digest.update(r.h_sq.tobytes())
        yield performance_matrices(r, budget, sic).flat()


def _tup(a) -> tuple:
    return tuple(float(x) for x in a)


def _learn(cfg: SimConfig, cell: str, d: int, drop: CellDrop, names: Sequence[str]):
    """Learn thresholds jointly for each scheduler in ``names`` over ``run.n_slots`` slots."""
    seed = _drop_seed(cfg, d)
    n, T = cfg.n_users, cfg.run.n_slots
    burn = int(BURN_IN * T)
    learners = {s: ThresholdLearner(cfg.demands, cfg.run.step_size,
                                    hd_set(n) if s == "hd" else None,
                                    cfg.run.checkpoint_interval) for s in names}
    snap = {}
    digest = hashlib.blake2b(digest_size=16)
    # split at the burn-in boundary so counts can be snapshotted there
    for start, count in ((0, burn), (burn, T - burn)):
        for R in _blocks(cfg, drop, seed, start, count, digest):
            for L in learners.values():
                L.feed(R)
        if start == 0:
            snap = {s: (L.count_ul, L.count_dl) for s, L in learners.items()}
    checksum = digest.hexdigest()

    records, traces = [], []
    for s, L in learners.items():
        cu0, cd0 = snap[s]
        th = L.thresholds
        records.append(RunRecord(
            cell, d, s, 0, T, L.utility_sum,
            _tup(L.count_ul / T), _tup(L.count_dl / T),
            _tup((L.count_ul - cu0) / (T - burn)), _tup((L.count_dl - cd0) / (T - burn)),
            _tup(th.lambda_ul), _tup(th.lambda_dl), checksum))
        cks = list(L.checkpoints)
        for ck in cks:
            traces.append(TraceRow(cell, d, s, ck.t, ck.utility, _tup(ck.shares_ul),
                                   _tup(ck.shares_dl), _tup(ck.lambda_ul), _tup(ck.lambda_dl)))
        if not cks or cks[-1].t != T:
            st = L.state
            traces.append(TraceRow(cell, d, s, T, L.utility, _tup(st.shares_ul), _tup(st.shares_dl),
                                   _tup(th.lambda_ul), _tup(th.lambda_dl)))
    return records, traces, learners


def _longterm_job(args):
    cfg, cell, d = args
    drop = make_drop(cfg.cell, cfg.channel, _drop_seed(cfg, d))
    names = [s for s in cfg.schedulers if s != "atbs"] or ["tbs"]
    records, traces, _ = _learn(cfg, cell, d, drop, names)
    return records, traces


def _shortterm_job(args):
    cfg, cell, d = args
    seed = _drop_seed(cfg, d)
    drop = make_drop(cfg.cell, cfg.channel, seed)
    records, traces, learners = _learn(cfg, cell, d, drop, ["tbs"])
    learner = learners["tbs"]
    th = learner.thresholds
    tracking = cfg.run.atbs_thresholds == "tracking"

    # Fresh slots. Frozen: TBS and ATBS share the learned thresholds. Tracking: the
    # learner keeps running as the reference and ATBS follows its thresholds slot by slot.
    tbs = TBSRunner(th)
    atbs = {s: ATBSRunner(th, cfg.demands, s) for s in cfg.windows}
    digest = hashlib.blake2b(digest_size=16)
    E = cfg.run.eval_slots
    cu0, cd0, usum0 = learner.count_ul, learner.count_dl, learner.utility_sum
    for R in _blocks(cfg, drop, seed, cfg.run.n_slots, E, digest):
        if tracking:
            _, lam_u, lam_d = learner.feed(R, trace=True)
            for a in atbs.values():
                a.feed(R, (lam_u, lam_d))
        else:
            tbs.feed(R)
            for a in atbs.values():
                a.feed(R)
    checksum = digest.hexdigest()
    lu, ld = _tup(th.lambda_ul), _tup(th.lambda_dl)
    if tracking:
        su, sd = _tup((learner.count_ul - cu0) / E), _tup((learner.count_dl - cd0) / E)
        ref = RunRecord(cell, d, "tbs_online", 0, E, learner.utility_sum - usum0, su, sd, su, sd,
                        _tup(learner.thresholds.lambda_ul), _tup(learner.thresholds.lambda_dl),
                        checksum)
    else:
        su, sd = _tup(tbs.count_ul / E), _tup(tbs.count_dl / E)
        ref = RunRecord(cell, d, "tbs_fixed", 0, E, tbs.utility_sum, su, sd, su, sd, lu, ld, checksum)
    records.append(ref)
    nan = tuple(float("nan") for _ in range(cfg.n_users))
    for s, a in atbs.items():
        k = len(a.window_utility)
        wu = tuple(a.window_utility)
        records.append(RunRecord(cell, d, "atbs", s, k * s, float(np.sum(wu)) * s, nan, nan, nan, nan,
                                 lu, ld, checksum, k, int(np.count_nonzero(a.window_violations)), wu))
    return records, traces


def _run(job: Callable, cells: Iterable[tuple[str, SimConfig]], experiment: str,
         cfg: SimConfig) -> MetricsReport:
    work = [(c, label, d) for label, c in cells for d in range(c.run.n_drops)]
    if cfg.run.workers > 1:
        with ProcessPoolExecutor(cfg.run.workers) as ex:
            results = list(ex.map(job, work))
    else:
        results = [job(w) for w in work]
    rep = MetricsReport(experiment, cfg.echo(), cfg.channel.bandwidth)
    for records, traces in results:
        rep.records.extend(records)
        rep.traces.extend(traces)
    return rep


# -- public drivers ------------------------------------------------------------

def run_longterm(cfg: SimConfig, cell: str = "base") -> MetricsReport:
    """Learn thresholds per drop for each configured long-term scheduler."""
    cfg.check_demands()
    return _run(_longterm_job, [(cell, cfg)], "longterm", cfg)


def sweep_cells(cfg: SimConfig, axis: str, values: Sequence | None = None):
    """Labelled configurations of a gain sweep along ``axis`` ('sim' or 'placement')."""
    cfg = cfg.with_(schedulers=("tbs", "hd"))
    if axis == "sim":
        return [(f"sim{v:g}", cfg.with_channel(sim_db=float(v))) for v in (values or SIM_LEVELS)]
    if axis == "placement":
        pl = cfg.cell.placement
        radius = pl.hotspot_radius if isinstance(pl, Hotspot) else 10.0
        placements = values or (Uniform(), Hotspot(1, radius), Hotspot(2, radius))
        out = []
        for p in placements:
            c = cfg.with_(cell=_with_placement(cfg, p))
            for sc in (1, 2):
                out.append((f"{placement_label(c)}/scenario{sc}", c.with_(scenario=sc, sic=None)))
        return out
    raise ValueError(f"unknown sweep axis {axis!r}; use 'sim' or 'placement'")


def _with_placement(cfg: SimConfig, p):
    return dataclasses.replace(cfg.cell, placement=p)


def run_gain_sweep(cfg: SimConfig, axis: str, values: Sequence | None = None) -> MetricsReport:
    """FD TBS versus the HD baseline in every cell of the sweep; see :meth:`MetricsReport.gain`."""
    cfg.check_demands()
    return _run(_longterm_job, sweep_cells(cfg, axis, values), f"sweep-{axis}", cfg)


def run_shortterm(cfg: SimConfig, windows: Sequence[int] | None = None) -> MetricsReport:
    """Window study: learned thresholds frozen, then ATBS per window on fresh slots."""
    cfg.check_demands()
    if windows is not None:
        cfg = cfg.with_(windows=tuple(int(s) for s in windows))
    for s in cfg.windows:
        why = window_violations(cfg.demands, s)
        if why:
            raise InfeasibleDemandError(f"window {s} is infeasible: " + "; ".join(why))
        if cfg.run.eval_slots < s:
            raise ValueError(f"eval_slots={cfg.run.eval_slots} is shorter than window {s}")
    return _run(_shortterm_job, [("base", cfg)], "shortterm", cfg)
