"""User placement and channel generation for a single square indoor cell.

The BS sits at the origin of a ``cell_side`` x ``cell_side`` square. Large-scale
state (positions, path loss, log-normal shadowing) is drawn once per drop;
Rayleigh block fading is redrawn every slot.

Randomness is derived from one seed through :class:`numpy.random.SeedSequence`
spawn keys, so any slot can be regenerated on its own and a parallel run
reproduces a serial one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

# Indoor hotzone path-loss model, d in km.
PL_LOS_A, PL_LOS_B = 89.5, 16.9
PL_NLOS_A, PL_NLOS_B = 147.4, 43.3

# Slots are generated in fixed blocks, one RNG stream per block.
FADING_BLOCK = 1024

_PLACEMENT_KEY = 0
_FADING_KEY = 1
_MAX_PLACEMENT_TRIES = 10_000

Seed = Union[int, Sequence[int]]


class PlacementError(RuntimeError):
    """Rejection sampling could not place a user within the iteration cap."""


@dataclass(frozen=True)
class Uniform:
    pass


@dataclass(frozen=True)
class Hotspot:
    n_hotspots: int = 1
    hotspot_radius: float = 10.0


@dataclass(frozen=True)
class AllNlos:
    pass


@dataclass(frozen=True)
class FixedLosProbability:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"LOS probability must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class CellConfig:
    n_users: int = 4
    cell_side: float = 50.0
    exclusion_radius: float = 5.0
    placement: Union[Uniform, Hotspot] = field(default_factory=Uniform)
    los_mode: Union[AllNlos, FixedLosProbability] = field(default_factory=AllNlos)

    def __post_init__(self):
        if self.cell_side <= 0:
            raise ValueError("cell_side must be positive")
        if not 0 <= self.exclusion_radius < self.cell_side / 2:
            raise ValueError("exclusion_radius must lie in [0, cell_side/2)")
        if self.n_users < 1:
            raise ValueError("need at least one user")
        if isinstance(self.placement, Hotspot):
            if self.placement.n_hotspots < 1 or self.placement.hotspot_radius <= 0:
                raise ValueError("invalid hotspot parameters")
            if self.n_users % self.placement.n_hotspots:
                raise ValueError("n_users must be divisible by n_hotspots")


@dataclass(frozen=True)
class ChannelParams:
    bandwidth: float = 10e6          # Hz
    noise_psd: float = -174.0        # dBm/Hz
    nf_bs: float = 8.0               # dB
    nf_user: float = 9.0             # dB
    sim_db: float = 80.0             # self-interference mitigation at the BS
    shadow_std_los: float = 3.0      # dB
    shadow_std_nlos: float = 4.0     # dB
    gamma_max: float = 6.0           # bps/Hz
    calibration_distance: float = 50.0 * math.sqrt(2.0)  # m
    min_distance: float = 1.0        # m, floor applied before path loss

    def __post_init__(self):
        vals = (self.bandwidth, self.noise_psd, self.nf_bs, self.nf_user, self.sim_db,
                self.shadow_std_los, self.shadow_std_nlos, self.gamma_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("channel parameters must be finite")
        if self.bandwidth <= 0 or self.sim_db < 0 or self.gamma_max <= 0:
            raise ValueError("bandwidth and gamma_max must be positive, sim_db >= 0")
        if self.min_distance <= 0:
            raise ValueError("min_distance must be positive")

    @property
    def noise_ul_dbm(self) -> float:
        return self.noise_psd + 10 * math.log10(self.bandwidth) + self.nf_bs

    @property
    def noise_dl_dbm(self) -> float:
        return self.noise_psd + 10 * math.log10(self.bandwidth) + self.nf_user

    @property
    def psi_b(self) -> float:
        """Residual linear self-interference leakage at the BS."""
        return 10.0 ** (-self.sim_db / 10.0)

    def pathloss_nlos(self, d_m):
        d_km = np.maximum(d_m, self.min_distance) / 1000.0
        return PL_NLOS_A + PL_NLOS_B * np.log10(d_km)

    def pathloss_los(self, d_m):
        d_km = np.maximum(d_m, self.min_distance) / 1000.0
        return PL_LOS_A + PL_LOS_B * np.log10(d_km)


@dataclass(frozen=True)
class CellDrop:
    positions: np.ndarray          # (n, 2) meters, BS at origin
    bs_user_pathloss: np.ndarray   # (n,) dB, shadowing included
    user_user_pathloss: np.ndarray # (n, n) dB, symmetric, zero diagonal
    bs_user_shadowing: np.ndarray  # (n,) dB
    user_user_shadowing: np.ndarray
    bs_user_los: np.ndarray        # (n,) bool
    user_user_los: np.ndarray      # (n, n) bool
    p_max_ul: float                # W
    p_max_dl: float                # W

    @property
    def n_users(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class ChannelRealization:
    g_sq: np.ndarray   # (..., n) |G_i|^2
    h_sq: np.ndarray   # (..., n, n) |H_ij|^2, symmetric, zero diagonal


def seed_sequence(seed: Seed, *key: int) -> np.random.SeedSequence:
    entropy = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return np.random.SeedSequence(entropy, spawn_key=tuple(key))


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


def calibrate_pmax(ch: ChannelParams) -> tuple[float, float]:
    """Max UL/DL powers (W) giving 0 dB mean SNR at the calibration distance over NLOS."""
    pl = float(ch.pathloss_nlos(ch.calibration_distance))
    p_ul = float(dbm_to_watt(ch.noise_ul_dbm + pl))
    p_dl = float(dbm_to_watt(ch.noise_dl_dbm + pl))
    return p_ul, p_dl


def _in_cell(xy, half):
    return np.all(np.abs(xy) <= half, axis=-1)


def _place_uniform(rng, n, half, r_min):
    out = np.empty((n, 2))
    for k in range(n):
        for _ in range(_MAX_PLACEMENT_TRIES):
            xy = rng.uniform(-half, half, size=2)
            if math.hypot(*xy) >= r_min:
                out[k] = xy
                break
        else:
            raise PlacementError("uniform placement exceeded the iteration cap")
    return out


def _place_hotspots(rng, n, half, r_min, spot: Hotspot):
    per_spot = n // spot.n_hotspots
    centers = rng.uniform(-half, half, size=(spot.n_hotspots, 2))
    out = np.empty((n, 2))
    k = 0
    for c in centers:
        for _ in range(per_spot):
            for _ in range(_MAX_PLACEMENT_TRIES):
                r = spot.hotspot_radius * math.sqrt(rng.uniform())
                phi = rng.uniform(0.0, 2 * math.pi)
                xy = c + r * np.array([math.cos(phi), math.sin(phi)])
                if _in_cell(xy, half) and math.hypot(*xy) >= r_min:
                    out[k] = xy
                    k += 1
                    break
            else:
                raise PlacementError("hotspot placement exceeded the iteration cap")
    return out, centers


def make_drop(cfg: CellConfig, ch: ChannelParams, seed: Seed) -> CellDrop:
    rng = np.random.default_rng(seed_sequence(seed, _PLACEMENT_KEY))
    n, half = cfg.n_users, cfg.cell_side / 2
    if isinstance(cfg.placement, Hotspot):
        pos, _ = _place_hotspots(rng, n, half, cfg.exclusion_radius, cfg.placement)
    else:
        pos = _place_uniform(rng, n, half, cfg.exclusion_radius)

    d_bs = np.hypot(pos[:, 0], pos[:, 1])
    d_uu = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))
    iu = np.triu_indices(n, k=1)

    p_los = cfg.los_mode.p if isinstance(cfg.los_mode, FixedLosProbability) else 0.0
    los_bs = rng.uniform(size=n) < p_los
    los_pair = rng.uniform(size=len(iu[0])) < p_los
    z_bs = rng.standard_normal(n)
    z_pair = rng.standard_normal(len(iu[0]))

    def _loss(d, los, z):
        std = np.where(los, ch.shadow_std_los, ch.shadow_std_nlos)
        pl = np.where(los, ch.pathloss_los(d), ch.pathloss_nlos(d))
        return pl + std * z, std * z

    pl_bs, sh_bs = _loss(d_bs, los_bs, z_bs)
    pl_pair, sh_pair = _loss(d_uu[iu], los_pair, z_pair)

    pl_uu = np.zeros((n, n))
    sh_uu = np.zeros((n, n))
    los_uu = np.zeros((n, n), dtype=bool)
    for mat, vals in ((pl_uu, pl_pair), (sh_uu, sh_pair), (los_uu, los_pair)):
        mat[iu] = vals
        mat[(iu[1], iu[0])] = vals

    p_ul, p_dl = calibrate_pmax(ch)
    return CellDrop(positions=pos, bs_user_pathloss=pl_bs, user_user_pathloss=pl_uu,
                    bs_user_shadowing=sh_bs, user_user_shadowing=sh_uu,
                    bs_user_los=los_bs, user_user_los=los_uu,
                    p_max_ul=p_ul, p_max_dl=p_dl)


def _fading_block(drop: CellDrop, seed: Seed, block: int):
    n = drop.n_users
    iu = np.triu_indices(n, k=1)
    rng = np.random.default_rng(seed_sequence(seed, _FADING_KEY, block))
    e = rng.standard_exponential((FADING_BLOCK, n + len(iu[0])))
    g = 10.0 ** (-drop.bs_user_pathloss / 10.0) * e[:, :n]
    h = np.zeros((FADING_BLOCK, n, n))
    pair = 10.0 ** (-drop.user_user_pathloss[iu] / 10.0) * e[:, n:]
    h[:, iu[0], iu[1]] = pair
    h[:, iu[1], iu[0]] = pair
    return g, h


def draw_realizations(drop: CellDrop, seed: Seed, start: int, count: int) -> ChannelRealization:
    """Fading for slots ``start .. start+count-1`` stacked on a leading axis."""
    if start < 0 or count < 0:
        raise ValueError("slot range must be non-negative")
    n = drop.n_users
    g_out = np.empty((count, n))
    h_out = np.empty((count, n, n))
    pos = 0
    while pos < count:
        slot = start + pos
        block, off = divmod(slot, FADING_BLOCK)
        take = min(FADING_BLOCK - off, count - pos)
        g, h = _fading_block(drop, seed, block)
        g_out[pos:pos + take] = g[off:off + take]
        h_out[pos:pos + take] = h[off:off + take]
        pos += take
    return ChannelRealization(g_out, h_out)


def draw_realization(drop: CellDrop, seed: Seed, slot: int) -> ChannelRealization:
    r = draw_realizations(drop, seed, slot, 1)
    return ChannelRealization(r.g_sq[0], r.h_sq[0])
