"""
Monte-Carlo comparison of unicast and coded-caching delivery in an XR room.

Every trial drops K users uniformly in the environment, each requesting the
file of its STU, and draws a fading channel to the TRP.  For a fixed master
seed all schemes see the same trials (common random numbers): trial i uses
``SeedSequence(seed).spawn(trials)[i]`` for positions, then for the channel.

Schemes
-------
uniform_unicast      every user caches gamma of each file, missing bits are
                     sent by zero-forcing unicast, L users at a time
nonuniform_unicast   the same, with location-dependent cache fractions
baseline_cc          uniform MN placement, bit-level multi-antenna delivery
                     (grouped signal-level delivery when the bit-level
                     schedule would be too large)
nonuniform_cc        location-dependent fractions; each file is stored as MN
                     portions at levels 0, t and K (see
                     :func:`anchored_level_portions`), the level-t portions
                     go out with signal-level delivery so every user decodes
                     its own chunk size, level 0 by zero-forcing unicast

A transmission lasts until its slowest active user has decoded all streams
addressed to it (joint decoding, see :func:`xrcache.phy.mac_time`).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .delivery import (TransmissionSchedule, build_schedule_bit_level,
                       build_schedule_signal_level)
from .phy import (BEAM_RULES, ChannelParams, _desired_and_interference, _stream_sets, large_scale_gain,
                  mac_time, null_space_beamformers, sample_channel)
from .placement import (StuAllocation, anchored_level_portions, UnsupportedParameterError, coded_caching_gain,
                        grouped_placement, level_portions, location_dependent_allocation,
                        mn_placement, rate_matched_allocation)
from .xr import build_grid

SCHEMES = ("uniform_unicast", "nonuniform_unicast", "baseline_cc", "nonuniform_cc")

# bit-level schedules with more groups than this fall back to the grouped scheme
MAX_BIT_LEVEL_GROUPS = 5000


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "baseline_cc"
    users: int = 8
    gamma: Fraction = Fraction(1, 4)
    L: int = 2
    n_tx: int | None = 4
    env_m: tuple[float, float] = (5.0, 5.0)
    stu_m: float = 0.5
    trp: tuple[float, float, float] = (0.0, 0.0, 1.0)
    file_bits: float = 8e8
    channel: ChannelParams = field(default_factory=lambda: ChannelParams(
        pathloss_exponent=3.0, shadowing_db=7.0, noise_power=1e-6, tx_power=1.0,
        bandwidth_hz=1e8))
    cc_scheme: str = "auto"
    baseline_delivery: str = "bit"
    nonuniform_delivery: str = "signal"
    level_split: str = "anchored"
    allocation: str = "inverse_rate"
    allocation_exponent: float = 1.0
    beam_rule: str = "principal"
    trials: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.cc_scheme not in ("auto", "bit_level", "grouped"):
            raise ValueError(f"unknown cc_scheme {self.cc_scheme!r}")
        if self.allocation not in ("rate_matched", "inverse_rate"):
            raise ValueError(f"unknown allocation {self.allocation!r}")
        if self.n_tx is not None and self.n_tx < self.L:
            raise ValueError(f"n_tx={self.n_tx} cannot multiplex L={self.L} streams")
        if self.beam_rule not in BEAM_RULES:
            raise ValueError(f"unknown beam_rule {self.beam_rule!r}")
        if self.level_split not in ("anchored", "adjacent"):
            raise ValueError(f"unknown level_split {self.level_split!r}")
        for d in (self.baseline_delivery, self.nonuniform_delivery):
            if d not in ("signal", "bit"):
                raise ValueError(f"unknown CC delivery {d!r}; expected 'bit' or 'signal'")

    @property
    def antennas(self) -> int:
        return self.L if self.n_tx is None else self.n_tx

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "channel" in d:
            # unspecified channel fields keep the experiment defaults
            d["channel"] = replace(cls().channel, **d["channel"])
        if "gamma" in d:
            d["gamma"] = Fraction(str(d["gamma"]))
        for key in ("env_m", "trp"):
            if key in d:
                d[key] = tuple(float(x) for x in d[key])
        return cls(**d)


def desk_config(**overrides) -> ExperimentConfig:
    """K=8, gamma=1/4, L=2 on a 5 m x 5 m room of 100 STUs, sigma_s = 7 dB.

    The TRP has 4 antennas, so multicast beams keep some freedom after
    nulling; the noise power sits in the high-SNR regime where caching gains
    dominate.
    """
    return replace(ExperimentConfig(), **overrides)


def crowd_config(**overrides) -> ExperimentConfig:
    """K=36, gamma=1/3, L=6 (slow preset; uses the grouped delivery)."""
    return replace(ExperimentConfig(users=36, gamma=Fraction(1, 3), L=6, n_tx=6,
                                    env_m=(5.0, 5.0)), **overrides)


@dataclass
class MetricReport:
    scheme: str
    total_time: np.ndarray          # (trials,)
    per_user_time: np.ndarray       # (trials, K)
    link_load: np.ndarray           # (trials,) in file units
    dof: np.ndarray                 # (trials,) users served per transmission
    outages: int = 0
    failed_trials: list = field(default_factory=list)

    def cdf(self) -> list[tuple[float, float]]:
        return empirical_cdf(self.total_time)

    @property
    def mean(self) -> float:
        return float(np.mean(self.total_time))

    @property
    def variance(self) -> float:
        return float(np.var(self.total_time))


def empirical_cdf(samples: Sequence[float]) -> list[tuple[float, float]]:
    """Right-continuous empirical CDF as (value, P[X <= value]) pairs."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("empirical CDF of an empty sample")
    values, idx = np.unique(x, return_index=True)
    upper = np.append(idx[1:], x.size)
    return [(float(v), float(u / x.size)) for v, u in zip(values, upper)]


# -- trials ------------------------------------------------------------------

@dataclass
class _Trials:
    positions: np.ndarray   # (B, K, 2)
    H: np.ndarray           # (B, K, n_tx)
    demand: np.ndarray      # (B, K) file ids
    failed: list


def _draw_trials(cfg: ExperimentConfig) -> _Trials:
    grid = build_grid(cfg.env_m[0], cfg.env_m[1], cfg.stu_m)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.trials)
    pos, Hs, dem, failed = [], [], [], []
    for i, child in enumerate(children):
        try:
            rng = np.random.default_rng(child)
            p = rng.uniform((0.0, 0.0), cfg.env_m, size=(cfg.users, 2))
            ch = sample_channel(cfg.users, cfg.antennas, np.column_stack([p, np.zeros(cfg.users)]),
                                [cfg.trp], cfg.channel, rng)
            d = [grid.file_of_stu[grid.stu_of(q)] for q in p]
        except (ValueError, np.linalg.LinAlgError) as exc:
            failed.append((i, repr(exc)))
            continue
        pos.append(p)
        Hs.append(ch.H)
        dem.append(d)
    if not pos:
        raise RuntimeError(f"all {cfg.trials} trials failed: {failed[:3]}")
    return _Trials(np.array(pos), np.array(Hs), np.array(dem), failed)


def stu_rates(cfg: ExperimentConfig) -> np.ndarray:
    """Mean-channel unicast rate per STU (no fading, no shadowing)."""
    grid = build_grid(cfg.env_m[0], cfg.env_m[1], cfg.stu_m)
    c = grid.stu_centers()
    pl = large_scale_gain(np.column_stack([c, np.zeros(len(c))]), [cfg.trp], cfg.channel)
    return np.log2(1 + cfg.channel.tx_power * pl / max(cfg.channel.noise_power, 1e-300))


def stu_allocation(cfg: ExperimentConfig) -> StuAllocation:
    if cfg.allocation == "inverse_rate":
        return location_dependent_allocation(stu_rates(cfg), cfg.gamma,
                                            exponent=cfg.allocation_exponent)
    return rate_matched_allocation(stu_rates(cfg), cfg.gamma, cfg.allocation_exponent)


# -- delivery structures -------------------------------------------------------

def _use_grouped(cfg: ExperimentConfig, t: int) -> bool:
    K, L = cfg.users, cfg.L
    divisible = K % L == 0 and t % L == 0
    if cfg.cc_scheme == "grouped":
        if not divisible:
            raise UnsupportedParameterError("grouped delivery needs L | K and L | t")
        return True
    if cfg.cc_scheme == "bit_level":
        return False
    return divisible and math.comb(K, min(t + L, K)) > MAX_BIT_LEVEL_GROUPS


def _level_schedule(cfg: ExperimentConfig, level: int, grouped: bool,
                    delivery: str) -> TransmissionSchedule:
    """Demand-independent schedule skeleton for one MN level (entities)."""
    K, L = cfg.users, cfg.L
    demand = [0] * K
    if grouped:
        pl = grouped_placement(K, L, Fraction(level * L, K), N=1)
        return build_schedule_signal_level(pl, demand, L)
    pl = mn_placement(K, 1, Fraction(level, K), L=L)
    if delivery == "signal":
        return build_schedule_signal_level(pl, demand, L)
    return build_schedule_bit_level(pl, demand, L)


def _cc_times(cfg: ExperimentConfig, H: np.ndarray, chunk_by_level: dict[int, np.ndarray],
              grouped: bool, delivery: str = "bit"):
    """Delivery time of per-level MN schedules with per-user chunk sizes.

    `chunk_by_level[m]` holds (B, K) bits each user needs per subpacket of
    level m.  Returns total time (B,), per-user time (B, K), load in
    subpacket-bits (B,) and served-user counts.
    """
    B, K, _ = H.shape
    prm = cfg.channel
    total = np.zeros(B)
    per_user = np.zeros((B, K))
    load_bits = np.zeros(B)
    served = np.zeros(B)
    n_tx = np.zeros(B)
    for level, chunk_full in sorted(chunk_by_level.items()):
        if level == 0 and not grouped:
            # no multicasting at level 0: zero-forcing unicast to the users
            # that actually need bits, L at a time
            tt, pu, ld, _ = _active_unicast(cfg, H, chunk_full)
            total += tt
            per_user += pu
            load_bits += ld
            active = chunk_full > 0
            served += active.sum(axis=1)
            n_tx += -(-active.sum(axis=1) // cfg.L)
            continue
        sched = _level_schedule(cfg, level, grouped, delivery)
        if not sched.transmissions:
            continue
        chunk = chunk_full / sched.placement.subpacketization
        for tx in sched.transmissions:
            sets = _stream_sets(tx)
            roles = _desired_and_interference(tx, sched.placement)
            lens = np.stack([chunk[:, list(tg)].max(axis=1) for tg, _ in sets], axis=1)
            need_bits = chunk[:, list(tx.served)]
            active = lens > 0                                     # (B, ns)
            n_active = active.sum(axis=1)
            if not n_active.any():
                continue
            V = np.stack([null_space_beamformers(H, tg, nl, cfg.beam_rule) for tg, nl in sets],
                         axis=1)
            p = prm.tx_power / np.maximum(n_active, 1)
            # G[b, k, s] = p |h_k^T v_s|^2 for active streams
            G = np.abs(np.einsum("bkn,bsn->bks", H, V)) ** 2 * (p[:, None, None]
                                                                * active[:, None, :])
            tx_time = np.zeros(B)
            for k, (desired, interf) in roles.items():
                need = need_bits[:, list(tx.served).index(k)] > 0
                if not need.any() or not desired:
                    continue
                noise = prm.noise_power + G[:, k, interf].sum(axis=1)
                tk = mac_time(lens[:, desired], G[:, k, desired], noise, prm.bandwidth_hz)
                tk = np.where(need, tk, 0.0)
                tx_time = np.maximum(tx_time, tk)
            total += tx_time
            users = list(tx.served)
            busy = need_bits > 0
            per_user[:, users] += tx_time[:, None] * busy
            load_bits += np.where(n_active > 0, lens.max(axis=1), 0.0)
            served += busy.sum(axis=1)
            n_tx += n_active > 0
    return total, per_user, load_bits, served / np.maximum(n_tx, 1)


def _unicast_times(cfg: ExperimentConfig, H: np.ndarray, bits: np.ndarray):
    """Zero-forcing unicast to users 0..L-1, then L..2L-1, and so on."""
    B, K, _ = H.shape
    prm = cfg.channel
    total = np.zeros(B)
    per_user = np.zeros((B, K))
    load = np.zeros(B)
    for start in range(0, K, cfg.L):
        batch = list(range(start, min(start + cfg.L, K)))
        V = np.stack([null_space_beamformers(H, [k], [j for j in batch if j != k])
                      for k in batch], axis=1)
        p = prm.tx_power / len(batch)
        Hb = H[:, batch, :]
        G = np.abs(np.einsum("bkn,bsn->bks", Hb, V)) ** 2 * p
        own = np.einsum("bkk->bk", G)
        interf = G.sum(axis=2) - own
        rate = prm.bandwidth_hz * np.log2(1 + own / (prm.noise_power + interf))
        with np.errstate(divide="ignore", invalid="ignore"):
            tk = np.where(bits[:, batch] > 0, bits[:, batch] / rate, 0.0)
        t_batch = tk.max(axis=1)
        total += t_batch
        per_user[:, batch] += t_batch[:, None]
        load += bits[:, batch].max(axis=1)
    return total, per_user, load, np.full(B, float(min(cfg.L, K)))


def _active_unicast(cfg: ExperimentConfig, H: np.ndarray, bits: np.ndarray):
    """Unicast batches formed among users with bits > 0, in index order."""
    order = np.argsort(bits <= 0, axis=1, kind="stable")
    Hp = np.take_along_axis(H, order[:, :, None], axis=1)
    total, pu, load, dof = _unicast_times(cfg, Hp, np.take_along_axis(bits, order, axis=1))
    per_user = np.empty_like(pu)
    np.put_along_axis(per_user, order, pu, axis=1)
    return total, per_user, load, dof


def run_experiment(cfg: ExperimentConfig, trials: _Trials | None = None) -> MetricReport:
    """Run all trials of one scheme."""
    tr = trials if trials is not None else _draw_trials(cfg)
    K, F = cfg.users, cfg.file_bits
    t = coded_caching_gain(K, cfg.gamma)
    g = float(cfg.gamma)
    if cfg.scheme.startswith("nonuniform"):
        frac = stu_allocation(cfg).fractions[tr.demand]          # (B, K)
    else:
        frac = np.full(tr.demand.shape, g)

    if cfg.scheme.endswith("unicast"):
        total, per_user, load, dof = _unicast_times(cfg, tr.H, (1 - frac) * F)
    else:
        grouped = _use_grouped(cfg, t)
        n_ent = K // cfg.L if grouped else K
        chunks: dict[int, np.ndarray] = {}
        flat = frac.ravel()
        t_ent = t // cfg.L if grouped else t
        for i, f in enumerate(flat):
            split = (anchored_level_portions(float(f), t_ent, n_ent)
                     if cfg.level_split == "anchored" else level_portions(float(f), n_ent))
            for m, share in split.items():
                if share > 0 and m < n_ent:
                    arr = chunks.setdefault(m, np.zeros(flat.size))
                    arr[i] = share * F
        chunks = {m: a.reshape(frac.shape) for m, a in chunks.items()}
        delivery = cfg.baseline_delivery if cfg.scheme == "baseline_cc" else cfg.nonuniform_delivery
        total, per_user, load, dof = _cc_times(cfg, tr.H, chunks, grouped, delivery)
    outages = int(np.sum(~np.isfinite(total)))
    return MetricReport(scheme=cfg.scheme, total_time=total, per_user_time=per_user,
                        link_load=load / F, dof=dof, outages=outages,
                        failed_trials=list(tr.failed))


def run_all(cfg: ExperimentConfig, schemes: Sequence[str] = SCHEMES) -> dict[str, MetricReport]:
    """Every scheme on the same trials."""
    tr = _draw_trials(cfg)
    return {s: run_experiment(replace(cfg, scheme=s), tr) for s in schemes}


def reports_csv(reports: dict[str, MetricReport]) -> str:
    """Long-format CDF table: scheme, total_time, cdf."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "total_time", "cdf"])
    for name, rep in reports.items():
        for v, p in rep.cdf():
            w.writerow([name, repr(v), repr(p)])
    return buf.getvalue()


def summary_csv(reports: dict[str, MetricReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "mean_time", "var_time", "p5", "p95", "mean_load", "mean_dof",
                "outages", "failed_trials"])
    for name, rep in reports.items():
        x = rep.total_time
        w.writerow([name, repr(float(x.mean())), repr(float(x.var())),
                    repr(float(np.percentile(x, 5))), repr(float(np.percentile(x, 95))),
                    repr(float(rep.link_load.mean())), repr(float(rep.dof.mean())),
                    rep.outages, len(rep.failed_trials)])
    return buf.getvalue()
