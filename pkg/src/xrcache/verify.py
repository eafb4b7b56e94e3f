"""
Exhaustive decodability checks over small parameter sets.

Signal-level schedules are decoded with idealized effective channels: every
entry reaches a user through a random nonzero gain unless the user is in
the entry's null set, where the gain is exactly zero.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator

import numpy as np

from .codec import FileLibrary
from .delivery import (DecodeError, TransmissionSchedule, assemble_file,
                       build_schedule_bit_level, build_schedule_signal_level,
                       build_schedule_single_antenna, decode_bit_level, decode_signal_level,
                       received_layers)
from .placement import grouped_placement, mn_placement

SCHEMES = ("single_antenna", "bit_level", "signal_level", "grouped_signal_level")


def ideal_gain(schedule: TransmissionSchedule, user: int, rng) -> Callable[[int, int], complex]:
    cache = {}

    def gain(ti, i):
        e = schedule.transmissions[ti].entries[i]
        if user in e.null_set:
            return 0j
        if (ti, i) not in cache:
            cache[(ti, i)] = complex(*rng.uniform(0.5, 2.0, 2))
        return cache[(ti, i)]
    return gain


def decode_user(schedule: TransmissionSchedule, user: int, seed=0) -> bytes:
    """File recovered by `user`, whatever the delivery scheme."""
    placement = schedule.placement
    cache = placement.cache_contents(user)
    if not schedule.signal_level:
        return decode_bit_level(user, schedule, cache)
    rng = np.random.default_rng(seed)
    layers, gains = received_layers(schedule, user, ideal_gain(schedule, user, rng))
    recovered = decode_signal_level(user, layers, gains, cache)
    return assemble_file(schedule, user, cache, recovered)


def _build(scheme: str, K: int, N: int, t: int, L: int, library: FileLibrary):
    gamma = Fraction(t, K)
    if scheme == "single_antenna":
        pl = mn_placement(K, N, gamma, library)
        return pl, lambda d: build_schedule_single_antenna(pl, d)
    if scheme == "grouped_signal_level":
        pl = grouped_placement(K, L, gamma, library)
        return pl, lambda d: build_schedule_signal_level(pl, d, L)
    pl = mn_placement(K, N, gamma, library, L=L)
    build = build_schedule_bit_level if scheme == "bit_level" else build_schedule_signal_level
    return pl, lambda d: build(pl, d, L)


@dataclass(frozen=True)
class VerifyResult:
    scheme: str
    K: int
    N: int
    t: int
    L: int
    demands: int
    decodes: int
    failures: int


def verify_case(scheme: str, K: int, N: int, t: int, L: int, file_size: int = 24,
                seed: int = 0) -> VerifyResult:
    """Decode every user under every one of the N^K demand vectors."""
    library = FileLibrary.synthetic(N, file_size, seed)
    _, build = _build(scheme, K, N, t, L, library)
    decodes = failures = 0
    for demand in itertools.product(range(N), repeat=K):
        sched = build(demand)
        for k in range(K):
            decodes += 1
            try:
                ok = decode_user(sched, k, seed=seed + k) == library[demand[k]]
            except DecodeError:
                ok = False
            failures += not ok
    return VerifyResult(scheme, K, N, t, L, N ** K, decodes, failures)


def exhaustive_cases(max_users: int = 4, max_files: int = 4,
                     Ls=(1, 2)) -> Iterator[tuple[str, int, int, int, int]]:
    """(scheme, K, N, t, L) for every supported small configuration."""
    for K in range(1, max_users + 1):
        for N in range(1, max_files + 1):
            for t in range(K + 1):
                yield ("single_antenna", K, N, t, 1)
                for L in Ls:
                    yield ("bit_level", K, N, t, L)
                    yield ("signal_level", K, N, t, L)
                    if L > 1 and K % L == 0 and t % L == 0:
                        yield ("grouped_signal_level", K, N, t, L)


def exhaustive_report(max_users: int = 4, max_files: int = 4, Ls=(1, 2),
                      seed: int = 0) -> list[VerifyResult]:
    return [verify_case(*case, seed=seed) for case in exhaustive_cases(max_users, max_files, Ls)]
