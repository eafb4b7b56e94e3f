"""
Shared-cache dynamic coded caching.

Users are assigned to P predefined cache profiles, possibly unevenly.  A
transmission can serve users of the same profile only through spatial
multiplexing, while users of distinct profiles also enjoy the caching gain:
with d distinct profiles among the served users, at most
``L + min(d, t+1) - 1`` users (never more than t+L) fit in one transmission.

Each user's request is split into equal delivery units; a transmission gives
one unit to each served user.  The greedy scheduler fills every
transmission with users from the profiles holding the most outstanding
units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ProfileAssignment:
    n_profiles: int
    assignment: tuple[int, ...]

    @property
    def occupancy(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_profiles)

    @property
    def sigma(self) -> float:
        return float(np.std(self.occupancy))

    @property
    def n_users(self) -> int:
        return len(self.assignment)


def max_sigma(K: int, P: int) -> float:
    """Occupancy std when every user sits on one profile."""
    occ = np.zeros(P)
    occ[0] = K
    return float(np.std(occ))


def _balanced(K: int, P: int) -> np.ndarray:
    occ = np.full(P, K // P)
    occ[:K % P] += 1
    return occ


def assign_users(K: int, P: int, target_sigma: float, seed=None, rel_tol: float = 0.05,
                 max_batches: int = 1000, batch: int = 512) -> ProfileAssignment:
    """Random user-to-profile assignment with a prescribed occupancy spread.

    Occupancy vectors are drawn as multinomials over Dirichlet-distributed
    profile probabilities, with the Dirichlet concentration itself drawn
    log-uniformly so that every spread is reachable; the first draw whose
    std is within `rel_tol` of the target is kept.  ``target_sigma == 0``
    gives the balanced occupancy and the maximal sigma puts everyone on one
    profile.
    """
    if P < 1 or K < 1:
        raise ValueError("K and P must be positive")
    smax = max_sigma(K, P)
    if target_sigma < 0 or target_sigma > smax * (1 + 1e-12):
        raise ValueError(f"sigma {target_sigma} not achievable (max {smax:.6g})")
    rng = np.random.default_rng(seed)
    if target_sigma == 0:
        occ = _balanced(K, P)
    elif target_sigma >= smax * (1 - 1e-12):
        # only the all-on-one occupancy has the maximal spread
        occ = np.zeros(P, dtype=np.int64)
        occ[rng.integers(P)] = K
    else:
        occ = None
        for _ in range(max_batches):
            alpha = 10 ** rng.uniform(-3, 2, size=batch)
            probs = rng.gamma(np.repeat(alpha[:, None], P, axis=1))
            dead = probs.sum(axis=1) == 0   # underflow: the limit is one-hot
            probs[dead, rng.integers(0, P, dead.sum())] = 1.0
            probs /= probs.sum(axis=1, keepdims=True)
            draws = rng.multinomial(K, probs)
            s = draws.std(axis=1)
            ok = np.flatnonzero(np.abs(s - target_sigma) <= rel_tol * target_sigma)
            if ok.size:
                occ = draws[ok[0]]
                break
        if occ is None:
            raise ValueError(f"no assignment with sigma within {rel_tol:.0%} of {target_sigma}")
    users = rng.permutation(np.repeat(np.arange(P), occ))
    return ProfileAssignment(P, tuple(int(q) for q in users))


def default_units(K: int, t: int, L: int) -> int:
    """Units per user making K*units a multiple of both t+L and L."""
    m = math.lcm(t + L, L)
    return m // math.gcd(K, m)


def _greedy_counts(occ: np.ndarray, units: int, t: int, L: int) -> np.ndarray:
    """Per-round, per-profile numbers of served users, batched over rows.

    `occ` has shape (B, P).  Inside a profile the scheduler always serves the
    users with the most remaining units, so a profile's users stay balanced
    and its state reduces to its outstanding unit count.
    Returns an int array of shape (rounds, B, P).
    """
    occ = np.asarray(occ, dtype=np.int64)
    B, P = occ.shape
    R = occ * units
    rows = np.arange(B)
    rounds = []
    while R.sum() > 0:
        live = np.minimum(occ, R)                       # users with units left
        n = np.zeros_like(R)
        # one user from each of the t+1 fullest profiles
        order = np.argsort(-R, axis=1, kind="stable")
        top = order[:, :t + 1]
        has = np.take_along_axis(R, top, 1) > 0
        np.put_along_axis(n, top, has.astype(np.int64), 1)
        d = has.sum(axis=1)
        cap = np.minimum(t + L, L + d - 1)
        cap = np.where(d > 0, cap, 0)
        for _ in range(t + L):
            room = n.sum(axis=1) < cap
            elig = n < live
            pri = np.where(elig, R - n, -1)
            best = pri.argmax(axis=1)
            take = room & (pri[rows, best] >= 0)
            if not take.any():
                break
            n[rows[take], best[take]] += 1
        R = R - n
        rounds.append(n)
    return np.array(rounds) if rounds else np.zeros((0, B, P), dtype=np.int64)


@dataclass(frozen=True)
class DynamicSchedule:
    transmissions: tuple[tuple[int, ...], ...]   # served users per transmission
    t: int
    L: int
    units_per_user: int

    @property
    def served_counts(self) -> np.ndarray:
        return np.array([len(x) for x in self.transmissions])


def schedule_dynamic(assignment: ProfileAssignment, t: int, L: int,
                     units_per_user: int | None = None) -> DynamicSchedule:
    """Greedy delivery schedule for a profile assignment."""
    if t < 0 or L < 1:
        raise ValueError("need t >= 0 and L >= 1")
    K = assignment.n_users
    units = default_units(K, t, L) if units_per_user is None else units_per_user
    counts = _greedy_counts(assignment.occupancy[None, :], units, t, L)[:, 0, :]
    members = [[u for u in range(K) if assignment.assignment[u] == q]
               for q in range(assignment.n_profiles)]
    remaining = np.full(K, units)
    txs = []
    for n in counts:
        served = []
        for q, c in enumerate(n):
            if c:
                us = sorted(members[q], key=lambda u: (-remaining[u], u))[:c]
                served.extend(us)
        remaining[served] -= 1
        txs.append(tuple(sorted(served)))
    return DynamicSchedule(tuple(txs), t, L, units)


def normalized_dof(schedule: DynamicSchedule) -> float:
    """Average users per transmission divided by t+L."""
    counts = schedule.served_counts
    if counts.size == 0:
        raise ValueError("empty schedule")
    return float(counts.sum() / counts.size / (schedule.t + schedule.L))


def dof_sweep(K: int, P: int, t: int, L: int, sigma_grid: Sequence[float],
              n_seeds: int = 200, seed: int = 0) -> list[tuple[float, float, float]]:
    """(sigma, mean normalized DoF, std) over seeded assignments per sigma."""
    units = default_units(K, t, L)
    out = []
    for i, sigma in enumerate(sigma_grid):
        occ = np.array([
            assign_users(K, P, sigma, np.random.SeedSequence([seed, i, j])).occupancy
            for j in range(n_seeds)])
        counts = _greedy_counts(occ, units, t, L).sum(axis=2)   # (rounds, B)
        served = counts.sum(axis=0)
        n_tx = (counts > 0).sum(axis=0)
        dof = served / n_tx / (t + L)
        out.append((float(sigma), float(dof.mean()), float(dof.std())))
    return out
