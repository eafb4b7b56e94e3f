import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xrcache.placement import UnsupportedParameterError
from xrcache.xr import (GB, MB, REFERENCE_SCENARIOS, ScenarioSpec, UserState, block_zones,
                        build_grid, cache_update_cost, demand_from_position,
                        random_waypoint_step, scenario_metrics, scenario_table_csv)


@pytest.mark.parametrize("w,h,s,n", [(5, 5, 0.5, 100), (10, 10, 0.5, 400), (0.5, 0.5, 0.5, 1),
                                     (3, 1, 0.5, 12)])
def test_grid_sizes(w, h, s, n):
    g = build_grid(w, h, s)
    assert g.n_stus == n and g.n_files == n


def test_grid_rejects_non_divisible():
    with pytest.raises(ValueError):
        build_grid(5, 5, 0.3)


def test_row_major_and_boundaries():
    g = build_grid(2, 1, 0.5)
    assert demand_from_position(g, (0.1, 0.1)) == 0
    assert g.stu_of((0.6, 0.1)) == 1
    assert g.stu_of((0.1, 0.6)) == 4
    # an inner edge belongs to the tile that starts there
    assert g.stu_of((0.5, 0.2)) == 1
    assert g.stu_of((0.2, 0.5)) == 4
    # the outer border stays in the last tile
    assert g.stu_of((2.0, 1.0)) == 7
    with pytest.raises(ValueError):
        g.stu_of((2.1, 0.0))


def test_demand_histogram_matches_occupancy():
    g = build_grid(2, 2, 0.5)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 2, size=(4000, 2))
    files = np.array([demand_from_position(g, p) for p in pts])
    col = np.minimum((pts[:, 0] // 0.5).astype(int), 3)
    row = np.minimum((pts[:, 1] // 0.5).astype(int), 3)
    assert np.array_equal(files, row * 4 + col)


def test_stu_centers_map_back():
    g = build_grid(5, 5, 0.5)
    assert [g.stu_of(c) for c in g.stu_centers()] == list(range(100))


def test_block_zones_partition():
    g = build_grid(4, 4, 0.5)
    z = block_zones(g, 2, 2)
    assert z.n_zones == 4
    assert sorted(np.bincount(z.zone_of_stu)) == [16] * 4
    assert z.zone_of((0.1, 0.1)) == 0 and z.zone_of((3.9, 3.9)) == 3
    assert z.trp_positions[0] == (1.0, 1.0)
    with pytest.raises(ValueError):
        block_zones(g, 3, 1)


def test_reference_rows():
    rows = [scenario_metrics(s) for s in REFERENCE_SCENARIOS]
    assert [r.t for r in rows] == [2, 4, 8, 2, 8]
    assert [r.packet_bytes for r in rows] == [5 * MB, 10 * MB, 20 * MB, 20 * MB,
                                               Fraction(100 * MB, 4845)]
    assert [r.streams for r in rows] == [4, 6, 10, 4, 10]
    assert [r.improvement_pct for r in rows] == [100, 200, 400, 100, 400]
    assert rows[4].subpacketization == math.comb(20, 4)
    assert round(float(rows[4].packet_bytes)) == 20640


def test_scenario_table_csv_shape():
    text = scenario_table_csv([scenario_metrics(s) for s in REFERENCE_SCENARIOS])
    lines = text.splitlines()
    assert lines[0].startswith("Parameter,Scenario I")
    assert "The coded caching gain (t),2,4,8,2,8" in lines
    assert "CC packet size,5 MB,10 MB,20 MB,20 MB,20640 B" in lines
    assert "Improvement by CC,100%,200%,400%,100%,400%" in lines


@given(st.sampled_from([2, 4, 5, 8, 10, 20, 40]), st.integers(1, 4), st.integers(1, 4))
def test_improvement_identity(K, L, tq):
    files = 100
    t = min(tq, K)
    spec = ScenarioSpec((5, 5), 0.5, K, files, t * files * MB // K, MB, L)
    if (t * files) % K:
        return
    r = scenario_metrics(spec)
    assert r.improvement_pct == Fraction(100 * r.t, L)


def test_infeasible_cache():
    with pytest.raises(UnsupportedParameterError):
        scenario_metrics(ScenarioSpec((5, 5), 0.5, 5, 100, 20 * GB, 100 * MB, 2))
    with pytest.raises(UnsupportedParameterError):
        scenario_metrics(ScenarioSpec((5, 5), 0.5, 5, 100, 3 * GB, 100 * MB, 2))
    with pytest.raises(ValueError):
        scenario_metrics(ScenarioSpec((5, 5), 0.5, 5, 99, 4 * GB, 100 * MB, 2))


def test_waypoint_speed_zero():
    u = UserState((1.0, 1.0), (3.0, 3.0), 0.0)
    assert random_waypoint_step(u, 1.0, (0.5, 1.5), (5, 5), 0).position == (1.0, 1.0)


def test_waypoint_straight_line():
    u = UserState((1.0, 1.0), (4.0, 5.0), 1.0)
    v = random_waypoint_step(u, 2.0, (0.5, 1.5), (5, 5), 0)
    assert math.dist(u.position, v.position) == pytest.approx(2.0)
    assert v.waypoint == u.waypoint


def test_waypoint_arrival_resamples():
    u = UserState((1.0, 1.0), (1.5, 1.0), 1.0)
    v = random_waypoint_step(u, 1.0, (0.5, 1.5), (5, 5), 3)
    assert v.position == (1.5, 1.0)
    assert v.waypoint != u.waypoint and 0.5 <= v.speed <= 1.5
    with pytest.raises(ValueError):
        random_waypoint_step(u, 0.0, (0.5, 1.5), (5, 5), 3)


def _walk(n, seed, env=(5.0, 5.0)):
    rng = np.random.default_rng(seed)
    u = UserState((2.5, 2.5), tuple(rng.uniform((0, 0), env)), 1.0)
    out = []
    for _ in range(n):
        u = random_waypoint_step(u, 0.5, (0.5, 1.5), env, rng)
        out.append(u.position)
    return np.array(out)


def test_waypoint_center_bias():
    pos = _walk(100_000, 1)
    assert np.all((pos >= 0) & (pos <= 5))
    # 5x5 histogram against uniform: chi-square far above the 0.1% critical value
    hist, _, _ = np.histogram2d(pos[:, 0], pos[:, 1], bins=5, range=[[0, 5], [0, 5]])
    exp = len(pos) / 25
    chi2 = ((hist - exp) ** 2 / exp).sum()
    assert chi2 > 51.2
    assert hist[2, 2] > hist[0, 0]


def test_cache_update_cost_examples():
    z = block_zones(build_grid(4, 4, 0.5), 2, 2)
    inside = [(0.2, 0.2), (1.0, 1.0), (1.9, 0.1)]
    c = cache_update_cost(inside, z, 4 * GB)
    assert (c.transitions, c.bytes_refreshed) == (0, 0)
    c = cache_update_cost([(0.2, 0.2), (2.5, 0.2)], z, 4 * GB)
    assert (c.transitions, c.bytes_refreshed) == (1, 4 * GB)


def test_cache_update_cost_recount():
    z = block_zones(build_grid(4, 4, 0.5), 2, 2)
    pos = _walk(1000, 5, env=(4.0, 4.0))
    # zone boundaries are the lines x = 2 and y = 2
    side = (pos >= 2.0).astype(int)
    zone = side[:, 1] * 2 + side[:, 0]
    expect = int(np.sum(zone[1:] != zone[:-1]))
    assert cache_update_cost(pos, z, 7).transitions == expect
    assert cache_update_cost(pos, z, 7).bytes_refreshed == 7 * expect


def test_scenario_from_dict():
    s = ScenarioSpec.from_dict({"env_m": 5, "stu_m": 0.5, "users": 5, "files": 100,
                                "cache_bytes": 4 * GB, "image_bytes": 100 * MB, "L": 2})
    assert s.env_m == (5.0, 5.0)
    assert scenario_metrics(s).t == 2
