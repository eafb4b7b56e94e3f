"""
Cache placement: centralized MN placement (single- and multi-antenna
subpacketization), the grouped low-subpacketization placement, and the
location-dependent cache allocation over STUs.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .codec import FileLibrary, enumerate_subsets, file_label, split_file, subset_rank

SINGLE_ANTENNA_MN = "single_antenna_mn"
BIT_LEVEL_MULTI = "bit_level_multi"
GROUPED_SIGNAL_LEVEL = "grouped_signal_level"


class UnsupportedParameterError(ValueError):
    """Parameters outside what the implemented schemes support."""


def _as_fraction(gamma) -> Fraction:
    if isinstance(gamma, float):
        # floats like 0.4 should mean 2/5, not the binary approximation
        return Fraction(gamma).limit_denominator(10**6)
    return Fraction(gamma)


def coded_caching_gain(K: int, gamma) -> int:
    """t = K * gamma; non-integer values are rejected (no memory sharing)."""
    gamma = _as_fraction(gamma)
    if K < 1:
        raise ValueError("K must be positive")
    if not 0 <= gamma <= 1:
        raise ValueError(f"cache fraction {gamma} outside [0, 1]")
    t = K * gamma
    if t.denominator != 1:
        raise UnsupportedParameterError(
            f"K*gamma = {t} is not an integer; memory sharing between integer "
            "gains is not supported")
    return int(t)


def effective_streams(K: int, t: int, L: int) -> int:
    """Spatial multiplexing gain actually usable when t + L exceeds K."""
    return max(min(L, K - t), 0)


def bit_level_subpacketization(K: int, t: int, L: int = 1) -> int:
    """S = C(K,t) * C(K-t-1, L-1), with t+L clipped to K."""
    if L < 1 or not 0 <= t <= K:
        raise ValueError(f"invalid parameters K={K}, t={t}, L={L}")
    if t == K:
        return 1
    Le = effective_streams(K, t, L)
    return math.comb(K, t) * math.comb(K - t - 1, Le - 1)


@dataclass(frozen=True)
class PlacementSpec:
    """Cache placement over subpacket indices.

    Cache entities are users for MN placements and cache profiles for the
    grouped placement.  Every file is split into the same labelled parts, so
    an entity's cache is the set of part indices it stores for *every* file.
    """
    n_users: int
    n_files: int
    gamma: Fraction
    t: int
    subpacketization: int
    scheme: str
    labels: tuple[tuple[tuple[int, ...], int], ...]  # part index -> (subset label, subpart)
    cache_map: tuple[frozenset[int], ...]             # entity -> cached part indices
    entity_of_user: tuple[int, ...]
    L: int = 1
    n_subparts: int = 1
    library: FileLibrary | None = field(default=None, compare=False, repr=False)

    @property
    def K(self) -> int:
        return self.n_users

    @property
    def S(self) -> int:
        return self.subpacketization

    @property
    def n_entities(self) -> int:
        return len(self.cache_map)

    def cached_parts(self, user: int) -> frozenset[int]:
        return self.cache_map[self.entity_of_user[user]]

    def part_index(self, subset: Sequence[int], subpart: int = 0) -> int:
        n = self.n_entities
        return subset_rank(tuple(subset), n) * self.n_subparts + subpart

    def is_cached(self, user: int, file_id: int, part: int) -> bool:
        return part in self.cached_parts(user)

    def parts(self, file_id: int) -> tuple[bytes, ...]:
        if self.library is None:
            raise ValueError("placement was built without a file library")
        return _split_cached(self.library, file_id, self.subpacketization)

    def cache_contents(self, user: int) -> dict[tuple[int, int], bytes]:
        """Payload bytes stored at `user`, keyed by (file, part)."""
        out = {}
        for f in range(self.n_files):
            parts = self.parts(f)
            for p in self.cached_parts(user):
                out[(f, p)] = parts[p]
        return out

    def cached_bytes(self, user: int, file_size: int) -> Fraction:
        """Stored bytes, counting subpackets at their exact size F/S."""
        return Fraction(len(self.cached_parts(user)) * self.n_files * file_size,
                        self.subpacketization)

    def part_name(self, file_id: int, part: int) -> str:
        """Label in the usual notation, e.g. ``A2`` or ``B13.2`` (1-based ids)."""
        subset, sub = self.labels[part]
        name = file_label(file_id) + "".join(str(u + 1) for u in subset)
        if not subset:
            name += "0"
        if self.n_subparts > 1:
            name += f".{sub + 1}"
        return name

    def dump(self) -> str:
        """One line per user: sorted cached part indices."""
        lines = []
        for k in range(self.n_users):
            parts = " ".join(str(p) for p in sorted(self.cached_parts(k)))
            lines.append(f"user {k + 1}: {parts}".rstrip())
        return "\n".join(lines) + "\n"


@functools.lru_cache(maxsize=4096)
def _split_cached(library: FileLibrary, file_id: int, S: int) -> tuple[bytes, ...]:
    return tuple(split_file(file_id, S, library))


def _mn_over_entities(n_entities: int, t: int, n_subparts: int):
    subsets = enumerate_subsets(n_entities, t)
    labels = tuple((s, j) for s in subsets for j in range(n_subparts))
    cache_map = tuple(
        frozenset(i for i, (s, _) in enumerate(labels) if e in s)
        for e in range(n_entities))
    return labels, cache_map


def mn_placement(K: int, N: int, gamma, library: FileLibrary | None = None,
                 L: int = 1) -> PlacementSpec:
    """Centralized MN placement.

    With ``L == 1`` this is the single-antenna scheme (S = C(K,t)).  With
    ``L > 1`` every MN part is further split into C(K-t-1, L-1) subparts as
    required by the bit-level multi-antenna delivery.
    """
    if library is not None and library.n_files != N:
        raise ValueError(f"library has {library.n_files} files, expected {N}")
    gamma = _as_fraction(gamma)
    t = coded_caching_gain(K, gamma)
    S = bit_level_subpacketization(K, t, L)
    n_sub = S // math.comb(K, t)
    labels, cache_map = _mn_over_entities(K, t, n_sub)
    return PlacementSpec(
        n_users=K, n_files=N, gamma=gamma, t=t, subpacketization=S,
        scheme=SINGLE_ANTENNA_MN if L == 1 else BIT_LEVEL_MULTI,
        labels=labels, cache_map=cache_map, entity_of_user=tuple(range(K)),
        L=L, n_subparts=n_sub, library=library)


def grouped_placement(K: int, L: int, gamma, library: FileLibrary | None = None,
                      N: int | None = None) -> PlacementSpec:
    """Grouped placement: K/L cache profiles, users k*L..k*L+L-1 share profile k.

    MN placement runs over the profiles with gain t/L, so S = C(K/L, t/L).
    """
    gamma = _as_fraction(gamma)
    t = coded_caching_gain(K, gamma)
    if L < 1 or K % L or t % L:
        raise UnsupportedParameterError(
            f"grouped placement needs L | K and L | t (K={K}, t={t}, L={L}); "
            "use the bit-level scheme instead")
    if N is None:
        if library is None:
            raise ValueError("either N or library is required")
        N = library.n_files
    P = K // L
    tp = t // L
    labels, cache_map = _mn_over_entities(P, tp, 1)
    return PlacementSpec(
        n_users=K, n_files=N, gamma=gamma, t=t, subpacketization=len(labels),
        scheme=GROUPED_SIGNAL_LEVEL, labels=labels, cache_map=cache_map,
        entity_of_user=tuple(k // L for k in range(K)), L=L, n_subparts=1,
        library=library)


@dataclass(frozen=True)
class StuAllocation:
    """Per-STU (equivalently per-file) cache fractions."""
    fractions: np.ndarray
    budget: float

    def __post_init__(self):
        self.fractions.setflags(write=False)


def location_dependent_allocation(rates: Sequence[float], gamma, n_files: int | None = None,
                                  exponent: float = 1.0) -> StuAllocation:
    """Cache fractions proportional to rate**-exponent, capped at one file each.

    The total budget is ``gamma * n_files`` file-equivalents; with the default
    ``n_files = len(rates)`` that is gamma per STU on average.  Mass removed
    by the cap is redistributed over the uncapped STUs.
    """
    r = np.asarray(rates, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("rates must be a non-empty 1-D sequence")
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise ValueError("all rates must be finite and positive")
    n = r.size if n_files is None else n_files
    budget = float(_as_fraction(gamma)) * n
    if budget > r.size + 1e-12:
        raise ValueError(f"budget {budget} exceeds one file per STU")
    w = r ** -float(exponent)
    frac = np.zeros_like(w)
    free = np.ones(r.size, dtype=bool)
    remaining = budget
    while True:
        share = remaining * w[free] / w[free].sum()
        over = share > 1.0
        if not over.any():
            frac[free] = share
            break
        idx = np.flatnonzero(free)[over]
        frac[idx] = 1.0
        free[idx] = False
        remaining = budget - frac[~free].sum()
        if not free.any():
            break
    return StuAllocation(fractions=frac, budget=budget)


def level_portions(fraction: float, K: int, tol: float = 1e-12) -> dict[int, float]:
    """Split a per-file cache fraction over integer MN levels.

    A file cached at fraction g is stored as two MN-placed portions at levels
    floor(K g) and ceil(K g), with sizes chosen so each user stores exactly
    g of the file.  Returns ``{level: portion of the file}``.
    """
    x = fraction * K
    lo = math.floor(x + tol)
    if abs(x - round(x)) <= tol:
        return {int(round(x)): 1.0}
    hi = lo + 1
    return {lo: hi - x, hi: x - lo}


def anchored_level_portions(fraction: float, t: int, K: int, tol: float = 1e-12) -> dict[int, float]:
    """Split a per-file cache fraction over levels 0, t and K.

    Most of the file stays at the common level t; files cached above t/K
    move a share to level K (stored by everyone), files cached below move a
    share to level 0 (stored by no one).  Each user stores exactly
    `fraction` of the file.
    """
    if not 0 <= fraction <= 1 + tol:
        raise ValueError(f"cache fraction {fraction} outside [0, 1]")
    if not 0 <= t <= K:
        raise ValueError("need 0 <= t <= K")
    base = t / K
    if abs(fraction - base) <= tol or t in (0, K):
        return level_portions(fraction, K, tol) if t in (0, K) else {t: 1.0}
    if fraction < base:
        a = fraction / base
        return {0: 1.0 - a, t: a}
    a = (1.0 - fraction) / (1.0 - base)
    return {t: a, K: 1.0 - a}


def rate_matched_allocation(rates: Sequence[float], gamma, exponent: float = 1.0,
                            n_files: int | None = None) -> StuAllocation:
    """Cache fractions making the uncached share of each file track rate**exponent.

    ``1 - g_s = c * r_s**exponent`` clipped to [0, 1], with c set by bisection
    so the fractions spend the budget ``gamma * n_files``.  With exponent 1
    every STU needs the same unicast download time.
    """
    r = np.asarray(rates, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("rates must be a non-empty 1-D sequence")
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise ValueError("all rates must be finite and positive")
    n = r.size if n_files is None else n_files
    budget = float(_as_fraction(gamma)) * n
    if budget > r.size + 1e-12:
        raise ValueError(f"budget {budget} exceeds one file per STU")
    w = r ** float(exponent)
    lo, hi = 0.0, 1.0 / w.min()
    for _ in range(200):
        c = 0.5 * (lo + hi)
        if np.clip(1 - c * w, 0, 1).sum() > budget:
            lo = c
        else:
            hi = c
    return StuAllocation(fractions=np.clip(1 - hi * w, 0, 1), budget=budget)
