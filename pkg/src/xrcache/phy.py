"""
MISO physical layer: channel sampling, null-space beamforming, SINR/rate
evaluation and delivery-time accounting.

Signal model: user k receives ``y_k = h_k^T x + z_k`` with
``x = sum_s sqrt(p_s) v_s s_s``.  A beamformer nulls user j when
``h_j^T v = 0``.

Receivers use idealized successive interference cancellation: every stream
a user wants (all codewords or entries it is a target of) is decoded
jointly, so the streams delivered to one user share that user's
multiple-access capacity region.  Streams that are cached (signal-level)
are removed before decoding; everything else counts as interference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .delivery import (ReceivedLayer, Transmission, TransmissionSchedule,
                       received_layers)


class BeamformingError(ValueError):
    pass


BEAM_RULES = ("principal", "maxmin")
MAXMIN_STEPS = 10


@dataclass(frozen=True)
class ChannelParams:
    pathloss_exponent: float = 3.0
    shadowing_db: float = 0.0
    noise_power: float = 1.0
    tx_power: float = 1.0
    bandwidth_hz: float = 1.0
    reference_distance: float = 1.0

    def __post_init__(self):
        if self.shadowing_db < 0:
            raise ValueError("shadowing std must be non-negative")
        if self.tx_power <= 0 or self.bandwidth_hz <= 0 or self.noise_power < 0:
            raise ValueError("powers and bandwidth must be positive")

    def pathloss(self, d):
        d = np.maximum(np.asarray(d, dtype=float), self.reference_distance)
        return (d / self.reference_distance) ** (-self.pathloss_exponent)


@dataclass(frozen=True)
class ChannelMatrix:
    H: np.ndarray   # (K, n_tx), row k is h_k
    L: int | None = None

    def __post_init__(self):
        if self.H.ndim != 2 or not np.all(np.isfinite(self.H)):
            raise ValueError("channel matrix must be a finite 2-D array")

    @property
    def n_users(self) -> int:
        return self.H.shape[0]

    @property
    def n_tx(self) -> int:
        return self.H.shape[1]


def _distances(user_positions, trp_positions) -> np.ndarray:
    u = np.atleast_2d(np.asarray(user_positions, dtype=float))
    r = np.atleast_2d(np.asarray(trp_positions, dtype=float))
    dim = max(u.shape[1], r.shape[1])
    u = np.pad(u, ((0, 0), (0, dim - u.shape[1])))
    r = np.pad(r, ((0, 0), (0, dim - r.shape[1])))
    d = np.linalg.norm(u[:, None, :] - r[None, :, :], axis=-1)
    return d.min(axis=1)


def large_scale_gain(user_positions, trp_positions, params: ChannelParams) -> np.ndarray:
    """Pathloss to the nearest TRP (no shadowing)."""
    return params.pathloss(_distances(user_positions, trp_positions))


def sample_channel(K: int, n_tx: int, user_positions=None, trp_positions=None,
                   params: ChannelParams | None = None, seed=None) -> ChannelMatrix:
    """Rayleigh fading with pathloss and log-normal shadowing.

    ``h_k = sqrt(pl(d_k) * 10^(X_k/10)) * g_k`` with X_k ~ N(0, sigma_s^2) dB
    and g_k i.i.d. CN(0, I).  Without positions the pathloss is 1.
    `seed` may be an int, a SeedSequence or a numpy Generator.
    """
    if K < 1 or n_tx < 1:
        raise ValueError("K and n_tx must be positive")
    params = params or ChannelParams()
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((K, n_tx)) + 1j * rng.standard_normal((K, n_tx))) / math.sqrt(2)
    if user_positions is None:
        pl = np.ones(K)
    else:
        pl = large_scale_gain(user_positions, trp_positions, params)
        if pl.shape != (K,):
            raise ValueError(f"expected {K} user positions")
    shadow = rng.normal(0.0, params.shadowing_db, K) if params.shadowing_db > 0 else np.zeros(K)
    scale = np.sqrt(pl * 10 ** (shadow / 10))
    return ChannelMatrix(H=scale[:, None] * g)


def _null_basis(A: np.ndarray, n_tx: int) -> np.ndarray:
    """Orthonormal basis (batch, n_tx, d) of {v : A v = 0}."""
    T, n = A.shape[0], A.shape[1]
    if n == 0:
        return np.broadcast_to(np.eye(n_tx, dtype=complex), (T, n_tx, n_tx))
    if n >= n_tx:
        raise BeamformingError(f"cannot null {n} users with {n_tx} antennas")
    _, s, vh = np.linalg.svd(A, full_matrices=True)
    return np.conj(np.swapaxes(vh[:, n:, :], 1, 2))


def _maxmin_refine(B: np.ndarray, u: np.ndarray, iters: int) -> np.ndarray:
    """Reweight the principal direction toward the weakest unit-norm row.

    Each step recomputes the principal direction with row weights 1/gain,
    and the iterate with the largest minimum gain is kept.
    """
    best = u
    best_min = np.abs(np.einsum("bmd,bd->bm", B, u)).min(axis=1)
    for _ in range(iters):
        g = np.abs(np.einsum("bmd,bd->bm", B, u))
        w = 1.0 / np.maximum(g, 1e-12)
        _, _, vh = np.linalg.svd(B * w[:, :, None], full_matrices=False)
        u = np.conj(vh[:, 0, :])
        m = np.abs(np.einsum("bmd,bd->bm", B, u)).min(axis=1)
        better = m > best_min
        best = np.where(better[:, None], u, best)
        best_min = np.maximum(m, best_min)
    return best


def null_space_beamformers(H: np.ndarray, serve_set: Sequence[int],
                           null_set: Sequence[int], rule: str = "principal") -> np.ndarray:
    """Batched :func:`null_space_beamformer` over a stack of channels.

    `H` has shape (batch, K, n_tx); returns unit vectors of shape (batch, n_tx).
    """
    if rule not in BEAM_RULES:
        raise ValueError(f"unknown beam rule {rule!r}; expected one of {BEAM_RULES}")
    H = np.asarray(H, dtype=complex)
    serve, null = list(serve_set), list(null_set)
    if set(serve) & set(null):
        raise BeamformingError("serve and null sets overlap")
    n_tx = H.shape[-1]
    N = _null_basis(H[:, null, :], n_tx)
    if not serve:
        return N[:, :, 0].copy()
    B = H[:, serve, :] @ N                      # effective serve channels in the null space
    if rule == "maxmin" and len(serve) > 1:
        # unit-norm rows so a strong target cannot pull the beam off a weak one
        B = B / np.maximum(np.linalg.norm(B, axis=2, keepdims=True), 1e-300)
    _, _, vh = np.linalg.svd(B, full_matrices=False)
    u = np.conj(vh[:, 0, :])
    if rule == "maxmin" and len(serve) > 1:
        u = _maxmin_refine(B, u, MAXMIN_STEPS)
    v = np.einsum("bij,bj->bi", N, u)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    # fix the phase: first served user sees a real positive gain
    g0 = np.einsum("bi,bi->b", H[:, serve[0], :], v)
    return v * np.exp(-1j * np.angle(g0))[:, None]


def null_space_beamformer(H, serve_set: Sequence[int], null_set: Sequence[int],
                          rule: str = "principal") -> np.ndarray:
    """Unit-norm beamformer nulling `null_set`, steered at `serve_set`.

    Inside the null space of the null-set channels, v is the dominant
    direction of the serve-set channels (principal right singular vector of
    the projected channels).  With no null set and one served user this is
    the matched filter ``conj(h_k) / ||h_k||``.

    ``rule="maxmin"`` changes multicast beams only: the projected channels
    are scaled to unit norm first and the principal direction is then
    reweighted toward the weakest target, so no target is left with a
    near-zero gain.
    """
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=complex)
    return null_space_beamformers(H[None], serve_set, null_set, rule)[0]


@dataclass(frozen=True)
class BeamformerSet:
    vectors: np.ndarray          # (n_streams, n_tx)
    powers: np.ndarray           # (n_streams,)

    def gains(self, H: np.ndarray) -> np.ndarray:
        """Received power |h_k^T v_s|^2 p_s, shape (K, n_streams)."""
        return np.abs(H @ self.vectors.T) ** 2 * self.powers[None, :]


def _stream_sets(tx: Transmission) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    if tx.codewords:
        return [(cw.targets, cw.null_set) for cw in tx.codewords]
    return [((e.target,), e.null_set) for e in tx.entries]


def design_beamformers(H, transmission: Transmission, params: ChannelParams) -> BeamformerSet:
    """Null-space beamformer per stream, equal power split of the budget."""
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H)
    sets = _stream_sets(transmission)
    V = np.array([null_space_beamformer(H, s, n) for s, n in sets])
    p = np.full(len(sets), params.tx_power / max(len(sets), 1))
    return BeamformerSet(vectors=V, powers=p)


def _desired_and_interference(tx: Transmission, placement=None):
    """Per served user: desired stream indices and interfering stream indices."""
    n = len(tx.streams)
    out = {}
    for k in tx.served:
        if tx.codewords:
            desired = [i for i, cw in enumerate(tx.codewords) if k in cw.targets]
            interf = [i for i in range(n) if i not in desired]
        else:
            cached = placement.cached_parts(k) if placement is not None else frozenset()
            desired = [i for i, e in enumerate(tx.entries) if e.target == k]
            interf = [i for i, e in enumerate(tx.entries)
                      if e.target != k and e.part not in cached]
        out[k] = (desired, interf)
    return out


def _subset_masks(m: int) -> np.ndarray:
    return np.array([[(s >> i) & 1 for i in range(m)] for s in range(1, 2 ** m)], dtype=float)


_MAX_EXACT = 12


def mac_time(lengths: np.ndarray, gains: np.ndarray, noise: np.ndarray,
             bandwidth: float = 1.0) -> np.ndarray:
    """Time for one receiver to decode several streams jointly.

    `lengths` (bits) and `gains` (received power) have shape (..., m),
    `noise` (noise plus interference) has shape (...).  The result is the
    smallest T with ``sum_S lengths / T <= B log2(1 + sum_S gains / noise)``
    for every subset S of streams.  Beyond 12 streams only the subsets made
    of the weakest streams first are checked.
    """
    lengths = np.asarray(lengths, dtype=float)
    gains = np.asarray(gains, dtype=float)
    noise = np.asarray(noise, dtype=float)[..., None]
    m = lengths.shape[-1]
    if m == 0:
        return np.zeros(lengths.shape[:-1])
    if m <= _MAX_EXACT:
        M = _subset_masks(m)
        bits = lengths @ M.T
        snr = (gains / noise) @ M.T
    else:
        order = np.argsort(gains / np.maximum(lengths, 1e-300), axis=-1)
        bits = np.cumsum(np.take_along_axis(lengths, order, -1), axis=-1)
        snr = np.cumsum(np.take_along_axis(gains / noise, order, -1), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cap = bandwidth * np.log2(1.0 + snr)
        t = np.where(bits > 0, bits / cap, 0.0)
    return np.max(t, axis=-1)


def symmetric_rate(gains: np.ndarray, noise: float) -> float:
    """Largest common rate at which all desired streams can be decoded."""
    g = np.sort(np.asarray(gains, dtype=float))
    if g.size == 0:
        return math.inf
    s = np.arange(1, g.size + 1)
    return float(np.min(np.log2(1 + np.cumsum(g) / noise) / s))


@dataclass(frozen=True)
class TransmissionRates:
    sinr: dict           # (user, stream) -> SINR of that stream at that user
    user_rate: dict      # user -> common per-stream rate (bit/s/Hz)
    stream_rate: np.ndarray  # per stream: min rate over its targets

    @property
    def bottleneck(self) -> float:
        return float(self.stream_rate.min()) if self.stream_rate.size else math.inf


def sinr_and_rates(H, transmission: Transmission, beamformers: BeamformerSet,
                   params: ChannelParams, placement=None) -> TransmissionRates:
    """SINR per (user, desired stream) and multicast-bottleneck rates.

    Interference at user k sums the streams k does not want; for
    signal-level entries, entries whose subpacket k has cached are not
    interference.  `placement` is needed to know cache contents for
    signal-level transmissions.
    """
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H)
    G = beamformers.gains(H)
    sets = _desired_and_interference(transmission, placement)
    sinr, user_rate = {}, {}
    for k, (desired, interf) in sets.items():
        noise = params.noise_power + G[k, interf].sum()
        for i in desired:
            sinr[(k, i)] = G[k, i] / noise if noise > 0 else math.inf
        user_rate[k] = symmetric_rate(G[k, desired], noise) if desired else math.inf
    targets = [s for s, _ in _stream_sets(transmission)]
    stream_rate = np.array([min(user_rate[k] for k in tg) for tg in targets])
    return TransmissionRates(sinr=sinr, user_rate=user_rate, stream_rate=stream_rate)


@dataclass(frozen=True)
class DeliveryTime:
    total: float
    per_user: np.ndarray
    per_transmission: np.ndarray
    outages: int = 0


def delivery_time(schedule: TransmissionSchedule, rates: Sequence[TransmissionRates],
                  subpacket_bits: float, params: ChannelParams) -> DeliveryTime:
    """Sum of transmission durations; a zero-rate transmission is an outage."""
    K = schedule.placement.n_users
    per_tx = np.zeros(len(schedule.transmissions))
    per_user = np.zeros(K)
    outages = 0
    for i, (tx, r) in enumerate(zip(schedule.transmissions, rates)):
        rate = r.bottleneck
        if rate == math.inf:
            per_tx[i] = 0.0
        elif not rate > 0:
            outages += 1
            per_tx[i] = math.inf
        else:
            per_tx[i] = subpacket_bits / (params.bandwidth_hz * rate)
        per_user[list(tx.served)] += per_tx[i]
    return DeliveryTime(total=float(per_tx.sum()), per_user=per_user,
                        per_transmission=per_tx, outages=outages)


def evaluate_schedule(schedule: TransmissionSchedule, H, params: ChannelParams,
                      file_bits: float) -> DeliveryTime:
    """Beamformers, rates and delivery time of a whole schedule."""
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H)
    bits = file_bits / schedule.placement.subpacketization
    rates = []
    for tx in schedule.transmissions:
        bf = design_beamformers(H, tx, params)
        rates.append(sinr_and_rates(H, tx, bf, params, schedule.placement))
    return delivery_time(schedule, rates, bits, params)


def signal_level_reception(schedule: TransmissionSchedule, H, user: int,
                           params: ChannelParams, noise_std: float = 0.0, rng=None
                           ) -> tuple[list[ReceivedLayer], list[np.ndarray]]:
    """Received layers and effective channels at `user` for a signal-level schedule."""
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H)
    bfs = [design_beamformers(H, tx, params) for tx in schedule.transmissions]

    def gain(ti, i):
        bf = bfs[ti]
        return complex(np.sqrt(bf.powers[i]) * (H[user] @ bf.vectors[i]))

    noise = None
    if noise_std > 0:
        gen = np.random.default_rng(rng)
        noise = lambda n: noise_std / math.sqrt(2) * (gen.standard_normal(n)
                                                     + 1j * gen.standard_normal(n))
    return received_layers(schedule, user, gain, noise)
