"""
XR application geometry.

The environment is tiled into square single transmission units (STUs);
each STU has its own static 3D image, i.e. one library file.  Zones are
rectangular blocks of STUs sharing one delivery session.  Users move by the
random-waypoint model and request the file of the STU they stand in.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .placement import (UnsupportedParameterError, bit_level_subpacketization,
                        coded_caching_gain)

MB = 10**6
GB = 10**9


def _exact_ratio(a: float, b: float) -> int:
    q = a / b
    n = round(q)
    if n < 1 or not math.isclose(q, n, rel_tol=1e-9, abs_tol=1e-9):
        raise ValueError(f"{a} is not a positive multiple of {b}")
    return n


@dataclass(frozen=True)
class StuGrid:
    width: float
    height: float
    stu_size: float
    n_cols: int
    n_rows: int
    file_of_stu: tuple[int, ...]

    @property
    def n_stus(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def n_files(self) -> int:
        return len(set(self.file_of_stu))

    def stu_of(self, position) -> int:
        """Row-major STU index; tiles are closed on the left/bottom edge.

        Points on the far right/top border of the environment belong to the
        last column/row.
        """
        x, y = float(position[0]), float(position[1])
        if not (0 <= x <= self.width and 0 <= y <= self.height):
            raise ValueError(f"position {position} outside the environment")
        col = min(int(math.floor(x / self.stu_size + 1e-12)), self.n_cols - 1)
        row = min(int(math.floor(y / self.stu_size + 1e-12)), self.n_rows - 1)
        return row * self.n_cols + col

    def stu_centers(self) -> np.ndarray:
        idx = np.arange(self.n_stus)
        return np.column_stack([(idx % self.n_cols + 0.5) * self.stu_size,
                                (idx // self.n_cols + 0.5) * self.stu_size])


def build_grid(env_w: float, env_h: float, stu_size: float) -> StuGrid:
    """Row-major STU grid with one file per STU."""
    if stu_size <= 0:
        raise ValueError("STU size must be positive")
    cols = _exact_ratio(env_w, stu_size)
    rows = _exact_ratio(env_h, stu_size)
    return StuGrid(float(env_w), float(env_h), float(stu_size), cols, rows,
                   tuple(range(cols * rows)))


def demand_from_position(grid: StuGrid, position) -> int:
    return grid.file_of_stu[grid.stu_of(position)]


@dataclass(frozen=True)
class ZonePartition:
    zone_of_stu: tuple[int, ...]
    trp_positions: tuple[tuple[float, float], ...]
    grid: StuGrid

    def __post_init__(self):
        if len(self.zone_of_stu) != self.grid.n_stus:
            raise ValueError("one zone id per STU is required")
        zones = set(self.zone_of_stu)
        if zones != set(range(len(zones))):
            raise ValueError("zone ids must be 0..Z-1 with every zone non-empty")

    @property
    def n_zones(self) -> int:
        return len(set(self.zone_of_stu))

    def zone_of(self, position) -> int:
        return self.zone_of_stu[self.grid.stu_of(position)]


def block_zones(grid: StuGrid, zones_x: int, zones_y: int) -> ZonePartition:
    """Axis-aligned rectangular zones, each with a TRP at its center."""
    if grid.n_cols % zones_x or grid.n_rows % zones_y:
        raise ValueError("zone blocks must tile the STU grid")
    bw, bh = grid.n_cols // zones_x, grid.n_rows // zones_y
    zone = tuple((s // grid.n_cols // bh) * zones_x + (s % grid.n_cols) // bw
                 for s in range(grid.n_stus))
    zw, zh = grid.width / zones_x, grid.height / zones_y
    trps = tuple(((i % zones_x + 0.5) * zw, (i // zones_x + 0.5) * zh)
                 for i in range(zones_x * zones_y))
    return ZonePartition(zone, trps, grid)


@dataclass(frozen=True)
class UserState:
    position: tuple[float, float]
    waypoint: tuple[float, float]
    speed: float
    zone: int | None = None
    profile: int | None = None


def random_waypoint_step(user: UserState, dt: float, speed_range: tuple[float, float],
                         env: tuple[float, float], rng) -> UserState:
    """Advance one user by `dt` seconds of random-waypoint motion.

    The user walks straight toward its waypoint; on arrival it stops there
    and draws a new waypoint (uniform over the environment) and a new speed
    (uniform over `speed_range`).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rng = np.random.default_rng(rng)
    pos = np.asarray(user.position, dtype=float)
    wp = np.asarray(user.waypoint, dtype=float)
    gap = wp - pos
    dist = float(np.hypot(*gap))
    step = user.speed * dt
    if step < dist:
        new = pos + gap * (step / dist)
        new = np.clip(new, 0.0, env)
        return replace(user, position=(float(new[0]), float(new[1])))
    new_wp = rng.uniform((0.0, 0.0), env)
    speed = float(rng.uniform(*speed_range))
    return replace(user, position=(float(wp[0]), float(wp[1])),
                   waypoint=(float(new_wp[0]), float(new_wp[1])), speed=speed)


@dataclass(frozen=True)
class CacheUpdateCost:
    transitions: int
    bytes_refreshed: int


def cache_update_cost(trajectory: Sequence, zones: ZonePartition,
                      zone_cache_bytes: int) -> CacheUpdateCost:
    """Zone changes along a trajectory, each refreshing the whole cache."""
    ids = [zones.zone_of(p) for p in trajectory]
    n = sum(a != b for a, b in zip(ids, ids[1:]))
    return CacheUpdateCost(n, n * int(zone_cache_bytes))


# -- scenario dimensioning ------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    env_m: tuple[float, float]
    stu_m: float
    users: int
    files: int
    cache_bytes: int
    image_bytes: int
    L: int
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        env = d["env_m"]
        if isinstance(env, (int, float)):
            env = (env, env)
        return cls(env_m=(float(env[0]), float(env[1])), stu_m=float(d["stu_m"]),
                   users=int(d["users"]), files=int(d["files"]),
                   cache_bytes=int(d["cache_bytes"]), image_bytes=int(d["image_bytes"]),
                   L=int(d["L"]), name=str(d.get("name", "")))


REFERENCE_SCENARIOS = (
    ScenarioSpec((5, 5), 0.5, 5, 100, 4 * GB, 100 * MB, 2, "Scenario I"),
    ScenarioSpec((5, 5), 0.5, 10, 100, 4 * GB, 100 * MB, 2, "Scenario II"),
    ScenarioSpec((5, 5), 0.5, 10, 100, 8 * GB, 100 * MB, 2, "Scenario III"),
    ScenarioSpec((10, 10), 0.5, 10, 400, 8 * GB, 100 * MB, 2, "Scenario IV"),
    ScenarioSpec((10, 10), 0.5, 40, 400, 8 * GB, 100 * MB, 2, "Scenario V"),
)


@dataclass(frozen=True)
class ScenarioRow:
    spec: ScenarioSpec
    gamma: Fraction
    t: int
    scheme: str
    subpacketization: int
    packet_bytes: Fraction
    streams: int
    improvement_pct: Fraction


def scenario_metrics(spec: ScenarioSpec) -> ScenarioRow:
    """Coded caching gain, packet size, stream count and gain of a setup.

    The grouped (low-subpacketization) scheme is used when L divides both
    K and t; otherwise the bit-level multi-antenna scheme.
    """
    grid = build_grid(spec.env_m[0], spec.env_m[1], spec.stu_m)
    if grid.n_stus != spec.files:
        raise ValueError(f"{grid.n_stus} STUs but {spec.files} library files")
    gamma = Fraction(spec.cache_bytes, spec.files * spec.image_bytes)
    if not 0 < gamma <= 1:
        raise UnsupportedParameterError(f"infeasible cache: gamma = {gamma}")
    K, L = spec.users, spec.L
    t = coded_caching_gain(K, gamma)
    if K % L == 0 and t % L == 0:
        scheme = "grouped_signal_level"
        S = math.comb(K // L, t // L)
    else:
        scheme = "bit_level_multi"
        S = bit_level_subpacketization(K, t, L)
    return ScenarioRow(spec=spec, gamma=gamma, t=t, scheme=scheme, subpacketization=S,
                     packet_bytes=Fraction(spec.image_bytes, S), streams=min(t + L, K),
                     improvement_pct=Fraction(100 * t, L))


def _fmt_size(b) -> str:
    b = Fraction(b)
    for unit, name in ((GB, "GB"), (MB, "MB"), (10**3, "KB")):
        if b >= unit and (b / unit).denominator == 1:
            return f"{b // unit} {name}"
    return f"{round(b)} B"


def _fmt_num(x) -> str:
    return f"{x:g}"


def scenario_table_csv(rows: Sequence[ScenarioRow]) -> str:
    """Parameter-by-scenario CSV with the row labels of the original table."""
    labels = [
        ("Application environment size",
         lambda r: f"{_fmt_num(r.spec.env_m[0])}m x {_fmt_num(r.spec.env_m[1])}m"),
        ("User count", lambda r: str(r.spec.users)),
        ("Library file count", lambda r: str(r.spec.files)),
        ("User cache size", lambda r: _fmt_size(r.spec.cache_bytes)),
        ("The coded caching gain (t)", lambda r: str(r.t)),
        ("CC packet size", lambda r: _fmt_size(r.packet_bytes)),
        ("CC packet size (bytes)", lambda r: f"{float(r.packet_bytes):.2f}"),
        ("Transmitter spatial multiplexing gain (L)", lambda r: str(r.spec.L)),
        ("Parallel streams w/ CC (t+L)", lambda r: str(r.streams)),
        ("Improvement by CC", lambda r: f"{_fmt_num(float(r.improvement_pct))}%"),
        ("Scheme", lambda r: r.scheme),
    ]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Parameter"] + [r.spec.name or f"Scenario {i + 1}" for i, r in enumerate(rows)])
    for label, fn in labels:
        w.writerow([label] + [fn(r) for r in rows])
    return buf.getvalue()
