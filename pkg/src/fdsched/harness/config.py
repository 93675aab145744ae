"""Simulation configuration: a YAML key tree mapped onto typed dataclasses.

Every channel value defaults to the indoor single-cell setup and may be
overridden per run. Example::

    cell:
      n_users: 4
      placement: {kind: hotspot, n_hotspots: 1, radius: 10}
      los: {kind: nlos}
    channel: {sim_db: 80}
    demands: {lower_ul: 0.125, lower_dl: 0.125}
    scenario: 1
    schedulers: [tbs, hd]
    windows: [8, 80, 800, 8000]
    run: {n_slots: 100000, n_drops: 20, seed: 0}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from ..feasibility import InfeasibleDemandError, TemporalDemands, feasible_longterm_box
from ..geomchan import (AllNlos, CellConfig, ChannelParams, FixedLosProbability, Hotspot,
                        Uniform)
from ..ratemodel import sic_flags

SCHEDULERS = ("tbs", "hd", "atbs")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunParams:
    n_slots: int = 100_000
    n_drops: int = 20
    seed: int = 0
    step_size: float = 0.001
    checkpoint_interval: int = 10_000
    eval_slots: int = 80_000      # fresh slots for fixed-threshold evaluation (short-term study)
    block: int = 16_384           # slots per channel/performance batch
    workers: int = 1
    atbs_thresholds: str = "frozen"   # or "tracking": follow the still-learning thresholds

    def __post_init__(self):
        if self.n_slots < 1 or self.n_drops < 1:
            raise ConfigError("n_slots and n_drops must be at least 1")
        if self.step_size < 0:
            raise ConfigError("step_size must be non-negative")
        if self.checkpoint_interval < 0 or self.eval_slots < 0:
            raise ConfigError("checkpoint_interval and eval_slots must be non-negative")
        if self.block < 1 or self.workers < 1:
            raise ConfigError("block and workers must be at least 1")
        if self.atbs_thresholds not in ("frozen", "tracking"):
            raise ConfigError("atbs_thresholds must be 'frozen' or 'tracking'")


@dataclass(frozen=True)
class SimConfig:
    cell: CellConfig = field(default_factory=CellConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    demands: TemporalDemands | None = None
    scenario: int = 1
    sic: tuple[bool, ...] | None = None    # per-user override of the scenario
    schedulers: tuple[str, ...] = ("tbs", "hd")
    windows: tuple[int, ...] = (8, 80, 800, 8000)
    run: RunParams = field(default_factory=RunParams)

    def __post_init__(self):
        n = self.cell.n_users
        if self.demands is None:
            object.__setattr__(self, "demands", TemporalDemands.uniform(n, 0.0, 0.0))
        if self.demands.n_users != n:
            raise ConfigError(f"demands cover {self.demands.n_users} users, cell has {n}")
        if self.scenario not in (1, 2):
            raise ConfigError("scenario must be 1 (no SIC) or 2 (all users SIC)")
        if self.sic is not None and len(self.sic) != n:
            raise ConfigError("sic flags must list one entry per user")
        bad = set(self.schedulers) - set(SCHEDULERS)
        if bad or not self.schedulers:
            raise ConfigError(f"unknown schedulers {sorted(bad)}; choose from {SCHEDULERS}")
        if any(s < 1 for s in self.windows):
            raise ConfigError("windows must be positive")

    @property
    def n_users(self) -> int:
        return self.cell.n_users

    def sic_flags(self) -> np.ndarray:
        if self.sic is not None:
            return np.asarray(self.sic, dtype=bool)
        return sic_flags(self.n_users, self.scenario)

    def check_demands(self) -> None:
        """Reject demands with no long-term feasible point."""
        if not feasible_longterm_box(self.demands):
            raise InfeasibleDemandError("temporal demands admit no long-term feasible schedule")

    def with_(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def with_channel(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, channel=dataclasses.replace(self.channel, **changes))

    def with_run(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, **changes))

    def echo(self) -> dict[str, Any]:
        """Plain-data view for report headers."""
        return to_dict(self)


# -- parsing ------------------------------------------------------------------

def _placement(spec: Mapping | None):
    spec = dict(spec or {"kind": "uniform"})
    kind = spec.pop("kind", "uniform")
    if kind == "uniform":
        return Uniform()
    if kind == "hotspot":
        return Hotspot(int(spec.pop("n_hotspots", 1)), float(spec.pop("radius", 10.0)))
    raise ConfigError(f"unknown placement kind {kind!r}")


def _los(spec: Mapping | None):
    spec = dict(spec or {"kind": "nlos"})
    kind = spec.pop("kind", "nlos")
    if kind == "nlos":
        return AllNlos()
    if kind == "fixed":
        return FixedLosProbability(float(spec["p"]))
    raise ConfigError(f"unknown los kind {kind!r}")


def _vec(x, n):
    a = np.asarray(x, dtype=float)
    return np.full(n, float(a)) if a.ndim == 0 else a


def _demands(spec: Mapping | None, n: int) -> TemporalDemands:
    spec = dict(spec or {})
    unknown = set(spec) - {"lower_ul", "lower_dl", "upper_ul", "upper_dl"}
    if unknown:
        raise ConfigError(f"unknown demand keys {sorted(unknown)}")
    return TemporalDemands(_vec(spec.get("lower_ul", 0.0), n), _vec(spec.get("upper_ul", 1.0), n),
                           _vec(spec.get("lower_dl", 0.0), n), _vec(spec.get("upper_dl", 1.0), n))


def _fields(cls, spec: Mapping, section: str) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(spec) - names
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
    return dict(spec)


def from_dict(raw: Mapping[str, Any]) -> SimConfig:
    raw = dict(raw or {})
    unknown = set(raw) - {"cell", "channel", "demands", "scenario", "sic", "schedulers",
                          "windows", "run"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    try:
        cell_raw = dict(raw.get("cell") or {})
        placement = _placement(cell_raw.pop("placement", None))
        los = _los(cell_raw.pop("los", None))
        cell = CellConfig(placement=placement, los_mode=los,
                          **_fields(CellConfig, cell_raw, "cell"))
        channel = ChannelParams(**_fields(ChannelParams, raw.get("channel") or {}, "channel"))
        run = RunParams(**_fields(RunParams, raw.get("run") or {}, "run"))
        sic = raw.get("sic")
        return SimConfig(
            cell=cell, channel=channel,
            demands=_demands(raw.get("demands"), cell.n_users),
            scenario=int(raw.get("scenario", 1)),
            sic=None if sic is None else tuple(bool(x) for x in sic),
            schedulers=tuple(raw.get("schedulers", ("tbs", "hd"))),
            windows=tuple(int(w) for w in raw.get("windows", (8, 80, 800, 8000))),
            run=run,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def load_config(path: str | Path) -> SimConfig:
    with open(path) as f:
        return from_dict(yaml.safe_load(f))


def to_dict(cfg: SimConfig) -> dict[str, Any]:
    pl = cfg.cell.placement
    los = cfg.cell.los_mode
    return {
        "cell": {
            "n_users": cfg.cell.n_users,
            "cell_side": cfg.cell.cell_side,
            "exclusion_radius": cfg.cell.exclusion_radius,
            "placement": ({"kind": "hotspot", "n_hotspots": pl.n_hotspots, "radius": pl.hotspot_radius}
                          if isinstance(pl, Hotspot) else {"kind": "uniform"}),
            "los": ({"kind": "fixed", "p": los.p} if isinstance(los, FixedLosProbability)
                    else {"kind": "nlos"}),
        },
        "channel": dataclasses.asdict(cfg.channel),
        "demands": {k: getattr(cfg.demands, k).tolist()
                    for k in ("lower_ul", "upper_ul", "lower_dl", "upper_dl")},
        "scenario": cfg.scenario,
        "sic": None if cfg.sic is None else list(cfg.sic),
        "schedulers": list(cfg.schedulers),
        "windows": list(cfg.windows),
        "run": dataclasses.asdict(cfg.run),
    }


def placement_label(cfg: SimConfig) -> str:
    pl = cfg.cell.placement
    return f"hotspot{pl.n_hotspots}" if isinstance(pl, Hotspot) else "uniform"
