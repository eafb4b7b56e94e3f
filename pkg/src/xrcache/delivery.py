"""
Delivery-phase schedules and user-side decoding.

Four delivery modes are covered:

* classic (uncoded) caching, for the whole-file baseline load;
* single-antenna MN delivery, one XOR codeword per (t+1)-subset of users;
* bit-level multi-antenna delivery: every transmission serves a group of
  t+L users with C(t+L, t+1) XOR codewords, each beamformed to null the
  group members outside its target set;
* signal-level delivery: the same subpackets (or those of the grouped
  placement) are sent as separate unicast entries and undesired cached
  entries are removed from the received signal before decoding.

Users and files are 0-based everywhere except in the text dumps, which use
the 1-based user numbering of the usual worked examples (A2 is the part of
file A labelled by user 2).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .codec import enumerate_subsets, file_label, join_parts, subset_rank, xor_combine
from .placement import (BIT_LEVEL_MULTI, GROUPED_SIGNAL_LEVEL, SINGLE_ANTENNA_MN,
                        PlacementSpec, effective_streams)


class DeliveryError(ValueError):
    pass


class DecodeError(RuntimeError):
    """Placement and schedule are inconsistent: a user cannot decode."""


class ResidualInterferenceError(DecodeError):
    """An entry is neither desired, cached nor nulled at the receiving user."""


@dataclass(frozen=True)
class Term:
    """One XOR operand: subpacket ``part`` of ``file_id`` intended for ``user``."""
    user: int
    file_id: int
    part: int


@dataclass(frozen=True)
class Codeword:
    targets: tuple[int, ...]
    null_set: tuple[int, ...]
    terms: tuple[Term, ...]
    payload: bytes | None = field(default=None, repr=False)


@dataclass(frozen=True)
class SignalEntry:
    """A single subpacket sent as its own beamformed stream."""
    target: int
    file_id: int
    part: int
    null_set: tuple[int, ...]
    layer: int
    payload: bytes | None = field(default=None, repr=False)


@dataclass(frozen=True)
class Transmission:
    served: tuple[int, ...]
    codewords: tuple[Codeword, ...] = ()
    entries: tuple[SignalEntry, ...] = ()

    @property
    def streams(self) -> tuple:
        """Independently beamformed streams (codewords or entries)."""
        return self.codewords if self.codewords else self.entries

    def layers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i, e in enumerate(self.entries):
            out.setdefault(e.layer, []).append(i)
        return out


@dataclass(frozen=True)
class TransmissionSchedule:
    scheme: str
    transmissions: tuple[Transmission, ...]
    placement: PlacementSpec = field(repr=False)
    demand: tuple[int, ...]
    L: int
    signal_level: bool = False

    @property
    def file_size(self) -> int | None:
        lib = self.placement.library
        return None if lib is None else lib.file_size

    def dump(self) -> str:
        return dump_schedule(self)


def _check_demand(placement: PlacementSpec, demand: Sequence[int]) -> tuple[int, ...]:
    demand = tuple(int(d) for d in demand)
    if len(demand) != placement.n_users:
        raise DeliveryError(f"demand has {len(demand)} entries, expected {placement.n_users}")
    for d in demand:
        if not 0 <= d < placement.n_files:
            raise DeliveryError(f"requested file {d} not in library of {placement.n_files}")
    return demand


def classic_baseline_load(cached_files: Sequence[Sequence[int]], demand: Sequence[int]) -> Fraction:
    """Uncoded delivery load in file units.

    Each distinct requested file missing from at least one requester's cache
    is broadcast once.
    """
    if len(cached_files) != len(demand):
        raise DeliveryError("one cache per user is required")
    missing = {d for d, cache in zip(demand, cached_files) if d not in set(cache)}
    return Fraction(len(missing))


def _payload(placement: PlacementSpec, term: Term) -> bytes | None:
    if placement.library is None:
        return None
    return placement.parts(term.file_id)[term.part]


def _bit_level_subpart(K: int, tau: tuple[int, ...], k: int, group: Sequence[int]) -> int:
    """Index of the subpart of part ``tau`` sent to ``k`` inside ``group``.

    For a fixed (k, tau), the groups containing tau and k are in bijection with
    the (L-1)-subsets of the remaining users, which is exactly the subpart
    count C(K-t-1, L-1).
    """
    excluded = set(tau) | {k}
    rest = [u for u in range(K) if u not in excluded]
    pos = {u: i for i, u in enumerate(rest)}
    extra = tuple(pos[u] for u in group if u not in excluded)
    return subset_rank(extra, len(rest))


def _mn_codeword_terms(placement: PlacementSpec, demand, group, U) -> tuple[Term, ...]:
    K = placement.n_users
    terms = []
    for k in U:
        tau = tuple(u for u in U if u != k)
        sub = _bit_level_subpart(K, tau, k, group) if placement.n_subparts > 1 else 0
        terms.append(Term(k, demand[k], placement.part_index(tau, sub)))
    return tuple(terms)


def _mn_groups(K: int, t: int, L: int) -> list[tuple[int, ...]]:
    if t >= K:
        return []
    return enumerate_subsets(K, t + effective_streams(K, t, L))


def _bit_level(placement: PlacementSpec, demand, L: int, scheme: str) -> TransmissionSchedule:
    K, t = placement.n_users, placement.t
    transmissions = []
    for group in _mn_groups(K, t, L):
        codewords = []
        for U in itertools.combinations(group, t + 1):
            terms = _mn_codeword_terms(placement, demand, group, U)
            payload = None
            if placement.library is not None:
                payload = xor_combine(_payload(placement, x) for x in terms)
            null = tuple(u for u in group if u not in U)
            codewords.append(Codeword(targets=U, null_set=null, terms=terms, payload=payload))
        transmissions.append(Transmission(served=group, codewords=tuple(codewords)))
    return TransmissionSchedule(scheme=scheme, transmissions=tuple(transmissions),
                                placement=placement, demand=demand, L=L)


def _check_mn(placement: PlacementSpec, L: int):
    if placement.scheme not in (SINGLE_ANTENNA_MN, BIT_LEVEL_MULTI):
        raise DeliveryError(f"MN delivery cannot use a {placement.scheme} placement")
    if L < 1:
        raise DeliveryError("L must be >= 1")
    K, t = placement.n_users, placement.t
    if t < K and placement.L != L and (effective_streams(K, t, L)
                                       != effective_streams(K, t, placement.L)):
        raise DeliveryError(
            f"placement subpacketization was built for L={placement.L}, not L={L}")


def build_schedule_single_antenna(placement: PlacementSpec, demand: Sequence[int]
                                  ) -> TransmissionSchedule:
    """One XOR codeword per (t+1)-subset of users, sent one after another."""
    if placement.scheme != SINGLE_ANTENNA_MN:
        raise DeliveryError(f"single-antenna delivery needs an MN placement, "
                            f"got {placement.scheme}")
    demand = _check_demand(placement, demand)
    return _bit_level(placement, demand, 1, SINGLE_ANTENNA_MN)


def build_schedule_bit_level(placement: PlacementSpec, demand: Sequence[int],
                             L: int | None = None) -> TransmissionSchedule:
    """Multi-antenna XOR delivery over all (t+L)-groups in lexicographic order."""
    L = placement.L if L is None else L
    _check_mn(placement, L)
    demand = _check_demand(placement, demand)
    return _bit_level(placement, demand, L, BIT_LEVEL_MULTI)


def build_schedule_signal_level(placement: PlacementSpec, demand: Sequence[int],
                                L: int | None = None) -> TransmissionSchedule:
    """Per-subpacket unicast entries with cache-aided cancellation.

    For MN placements the entries are the XOR operands of the bit-level
    schedule, each keeping the null set of its codeword; the layer index is
    the position of that codeword.  For the grouped placement a transmission
    picks t/L + 1 profiles and serves all of their users, each entry nulled
    at the other users of its own profile.
    """
    L = placement.L if L is None else L
    demand = _check_demand(placement, demand)
    if placement.scheme == GROUPED_SIGNAL_LEVEL:
        if L != placement.L:
            raise DeliveryError(f"grouped placement was built for L={placement.L}")
        return _grouped_signal_level(placement, demand)
    _check_mn(placement, L)
    bit = _bit_level(placement, demand, L, placement.scheme)
    transmissions = []
    for tx in bit.transmissions:
        entries = []
        for layer, cw in enumerate(tx.codewords):
            for term in cw.terms:
                entries.append(SignalEntry(term.user, term.file_id, term.part, cw.null_set,
                                           layer, _payload(placement, term)))
        transmissions.append(Transmission(served=tx.served, entries=tuple(entries)))
    return TransmissionSchedule(scheme=placement.scheme, transmissions=tuple(transmissions),
                                placement=placement, demand=demand, L=L, signal_level=True)


def _grouped_signal_level(placement: PlacementSpec, demand) -> TransmissionSchedule:
    P = placement.n_entities
    tp = placement.t // placement.L
    members = [[u for u in range(placement.n_users) if placement.entity_of_user[u] == q]
               for q in range(P)]
    transmissions = []
    if tp < P:
        for Q in itertools.combinations(range(P), tp + 1):
            entries = []
            for q in Q:
                part = placement.part_index(tuple(p for p in Q if p != q))
                for u in members[q]:
                    null = tuple(v for v in members[q] if v != u)
                    term = Term(u, demand[u], part)
                    entries.append(SignalEntry(u, demand[u], part, null, 0,
                                               _payload(placement, term)))
            served = tuple(sorted(u for q in Q for u in members[q]))
            transmissions.append(Transmission(served=served, entries=tuple(entries)))
    return TransmissionSchedule(scheme=GROUPED_SIGNAL_LEVEL, transmissions=tuple(transmissions),
                                placement=placement, demand=demand, L=placement.L,
                                signal_level=True)


def _assemble(placement: PlacementSpec, user: int, file_id: int,
              cache: Mapping[tuple[int, int], bytes], recovered: Mapping[tuple[int, int], bytes],
              file_size: int) -> bytes:
    parts = []
    for p in range(placement.subpacketization):
        key = (file_id, p)
        if key in cache:
            parts.append(cache[key])
        elif key in recovered:
            parts.append(recovered[key])
        else:
            raise DecodeError(f"user {user} is missing {placement.part_name(file_id, p)}")
    return join_parts(parts, file_size)


def decode_bit_level(user: int, schedule: TransmissionSchedule,
                     cache: Mapping[tuple[int, int], bytes],
                     demand: Sequence[int] | None = None) -> bytes:
    """Recover the requested file of `user` from XOR codewords and its cache."""
    demand = schedule.demand if demand is None else tuple(demand)
    placement = schedule.placement
    recovered = {}
    for tx in schedule.transmissions:
        for cw in tx.codewords:
            if user not in cw.targets:
                continue
            if cw.payload is None:
                raise DecodeError("schedule carries no payloads")
            mine = None
            operands = [cw.payload]
            for term in cw.terms:
                if term.user == user:
                    mine = term
                    continue
                key = (term.file_id, term.part)
                if key not in cache:
                    raise DecodeError(
                        f"user {user} lacks operand {placement.part_name(*key)}")
                operands.append(cache[key])
            recovered[(mine.file_id, mine.part)] = xor_combine(operands)
    if schedule.file_size is None:
        raise DecodeError("schedule carries no payloads")
    return _assemble(placement, user, demand[user], cache, recovered, schedule.file_size)


# -- signal domain -----------------------------------------------------------

def modulate(payload: bytes) -> np.ndarray:
    """Map bytes to real-valued symbols (one per byte)."""
    return np.frombuffer(payload, dtype=np.uint8).astype(float)


def demodulate(symbols: np.ndarray) -> bytes:
    return np.clip(np.rint(np.real(symbols)), 0, 255).astype(np.uint8).tobytes()


@dataclass(frozen=True)
class ReceivedLayer:
    """Received samples of one layer of one transmission at one user."""
    transmission: int
    entries: tuple[SignalEntry, ...]
    samples: np.ndarray


def received_layers(schedule: TransmissionSchedule, user: int,
                    effective_gain: Callable[[int, int], complex],
                    noise: Callable[[int], np.ndarray] | None = None
                    ) -> tuple[list[ReceivedLayer], list[np.ndarray]]:
    """Superpose the entries of every transmission as seen by `user`.

    ``effective_gain(tx, i)`` returns h_user^T v for entry i of transmission
    tx.  Returns the received layers and the matching effective channels.
    Layers are kept apart by the idealized SIC receiver; inside a layer the
    entries are superposed in the signal domain.
    """
    layers, gains = [], []
    for ti, tx in enumerate(schedule.transmissions):
        if user not in tx.served:
            continue
        for _, idx in sorted(tx.layers().items()):
            g = np.array([effective_gain(ti, i) for i in idx], dtype=complex)
            y = sum(gi * modulate(tx.entries[i].payload) for gi, i in zip(g, idx))
            if noise is not None:
                y = y + noise(len(y))
            layers.append(ReceivedLayer(ti, tuple(tx.entries[i] for i in idx), np.asarray(y)))
            gains.append(g)
    return layers, gains


def decode_signal_level(user: int, received: Sequence[ReceivedLayer],
                        effective_channels: Sequence[np.ndarray],
                        cache: Mapping[tuple[int, int], bytes],
                        null_tol: float = 1e-6) -> dict[tuple[int, int], bytes]:
    """Cancel cached entries in the signal domain, then detect the desired one.

    Returns the recovered subpackets keyed by (file, part).  Nulled entries
    are assumed suppressed by the transmitter; an entry that is neither
    desired, cached nor nulled at `user` raises ResidualInterferenceError.
    """
    out = {}
    for layer, gains in zip(received, effective_channels):
        residual = np.array(layer.samples, dtype=complex)
        desired = []
        for e, g in zip(layer.entries, gains):
            key = (e.file_id, e.part)
            if e.target == user:
                desired.append((e, g))
            elif key in cache:
                residual = residual - g * modulate(cache[key])
            elif user in e.null_set:
                if abs(g) > null_tol:
                    raise ResidualInterferenceError(
                        f"entry for user {e.target} leaks |g|={abs(g):.3g} into user {user}")
            else:
                raise ResidualInterferenceError(
                    f"user {user} can neither cancel nor ignore entry "
                    f"{file_label(e.file_id)}/{e.part} for user {e.target}")
        if len(desired) > 1:
            raise DecodeError(f"layer carries {len(desired)} entries for user {user}")
        if desired:
            e, g = desired[0]
            if g == 0:
                raise DecodeError(f"zero effective channel for user {user}")
            out[(e.file_id, e.part)] = demodulate(residual / g)
    return out


def assemble_file(schedule: TransmissionSchedule, user: int,
                  cache: Mapping[tuple[int, int], bytes],
                  recovered: Mapping[tuple[int, int], bytes]) -> bytes:
    """Full requested file of `user` from cached and recovered subpackets."""
    return _assemble(schedule.placement, user, schedule.demand[user], cache, recovered,
                     schedule.file_size)


# -- accounting and dumps ----------------------------------------------------

def link_load(schedule: TransmissionSchedule, file_size: int | None = None) -> Fraction:
    """Delivery time in file units.

    Each transmission occupies one subpacket duration: all its codewords (or
    entries) are sent in parallel.  With `file_size` the padded payload size
    ``ceil(F/S)`` is used instead of the exact F/S.
    """
    n = len(schedule.transmissions)
    S = schedule.placement.subpacketization
    if file_size is None:
        return Fraction(n, S)
    return Fraction(n * -(-file_size // S), file_size)


def _users(us) -> str:
    return "{" + ",".join(str(u + 1) for u in us) + "}"


def dump_schedule(schedule: TransmissionSchedule) -> str:
    """Text dump, one codeword (or signal-level entry) per line."""
    pl = schedule.placement
    lines = []
    for ti, tx in enumerate(schedule.transmissions, start=1):
        for cw in tx.codewords:
            comp = "^".join(pl.part_name(x.file_id, x.part) for x in cw.terms)
            lines.append(f"tx={ti} target={_users(cw.targets)} null={_users(cw.null_set)} {comp}")
        for e in tx.entries:
            lines.append(f"tx={ti} layer={e.layer + 1} user={e.target + 1} "
                         f"null={_users(e.null_set)} {pl.part_name(e.file_id, e.part)}")
    return "\n".join(lines) + ("\n" if lines else "")
