import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xrcache.codec import FileLibrary
from xrcache.delivery import (assemble_file, build_schedule_bit_level,
                              build_schedule_signal_level, build_schedule_single_antenna,
                              decode_signal_level)
from xrcache.phy import (BeamformingError, ChannelParams, design_beamformers, evaluate_schedule,
                         large_scale_gain, mac_time, null_space_beamformer,
                         null_space_beamformers, sample_channel, signal_level_reception,
                         sinr_and_rates, symmetric_rate)
from xrcache.placement import mn_placement


def test_matched_filter():
    H = sample_channel(3, 4, seed=1).H
    v = null_space_beamformer(H, [1], [])
    mf = np.conj(H[1]) / np.linalg.norm(H[1])
    assert abs(abs(np.vdot(mf, v)) - 1) < 1e-12
    assert np.isclose(H[1] @ v, np.linalg.norm(H[1]))


@settings(max_examples=60)
@given(st.integers(2, 8), st.integers(0, 2**31), st.data())
def test_null_residuals(n_tx, seed, data):
    K = data.draw(st.integers(2, 8))
    n_null = data.draw(st.integers(0, min(n_tx - 1, K - 1)))
    users = np.random.default_rng(seed).permutation(K)
    null, serve = list(users[:n_null]), [int(users[n_null])]
    H = sample_channel(K, n_tx, seed=seed).H
    v = null_space_beamformer(H, serve, null)
    assert np.isclose(np.linalg.norm(v), 1)
    for j in null:
        assert abs(H[j] @ v) / np.linalg.norm(H[j]) <= 1e-9
    assert abs(H[serve[0]] @ v) > 0


def test_batched_matches_single():
    H = np.stack([sample_channel(5, 4, seed=s).H for s in range(6)])
    V = null_space_beamformers(H, [0, 1], [2, 3])
    for b in range(6):
        assert np.allclose(V[b], null_space_beamformer(H[b], [0, 1], [2, 3]))


def test_beamformer_errors():
    H = sample_channel(4, 2, seed=0).H
    with pytest.raises(BeamformingError):
        null_space_beamformer(H, [0], [1, 2])
    with pytest.raises(BeamformingError):
        null_space_beamformer(H, [0], [0])
    with pytest.raises(ValueError):
        null_space_beamformer(H, [0], [1], rule="widest")


def test_sinr_orthogonal_channels():
    # identity channel, unicast to both users: no interference at all
    pl = mn_placement(2, 2, 0, L=2)
    s = build_schedule_bit_level(pl, (0, 1))
    params = ChannelParams(noise_power=0.5, tx_power=2.0)
    H = np.eye(2, dtype=complex)
    tx = s.transmissions[0]
    bf = design_beamformers(H, tx, params)
    r = sinr_and_rates(H, tx, bf, params)
    for (k, i), val in r.sinr.items():
        assert val == pytest.approx(1.0 / 0.5)
    assert r.bottleneck == pytest.approx(math.log2(3))


def test_single_antenna_common_rate():
    pl = mn_placement(2, 2, Fraction(1, 2))
    s = build_schedule_single_antenna(pl, (0, 1))
    H = np.array([[1.0 + 0j], [0.5 + 0j]])
    params = ChannelParams(noise_power=0.25)
    dt = evaluate_schedule(s, H, params, file_bits=100)
    # weakest user has SNR 1, rate 1 bit/s/Hz, 50 bits per subpacket
    assert dt.total == pytest.approx(50.0)


def test_bandwidth_scaling():
    pl = mn_placement(4, 4, Fraction(1, 4), L=2)
    s = build_schedule_bit_level(pl, (0, 1, 2, 3))
    H = sample_channel(4, 2, seed=3).H
    t1 = evaluate_schedule(s, H, ChannelParams(bandwidth_hz=1e6), 1e6).total
    t2 = evaluate_schedule(s, H, ChannelParams(bandwidth_hz=2e6), 1e6).total
    assert t2 == pytest.approx(t1 / 2)


def test_pathloss_monte_carlo():
    params = ChannelParams(pathloss_exponent=3.0)
    d = 4.0
    pos = np.tile([[d, 0.0]], (20000, 1))
    gains = np.abs(sample_channel(20000, 1, pos, [[0.0, 0.0]], params, seed=7).H[:, 0]) ** 2
    assert gains.mean() == pytest.approx(d ** -3, rel=0.05)
    assert large_scale_gain([[d, 0]], [[0, 0]], params)[0] == pytest.approx(d ** -3)


def test_shadowing_spread():
    params = ChannelParams(pathloss_exponent=2.0, shadowing_db=7.0)
    # averaging 64 antennas leaves mostly the shadowing term
    H = sample_channel(50000, 64, np.ones((50000, 2)), [[0, 0]], params, seed=2).H
    db = 10 * np.log10(np.mean(np.abs(H) ** 2, axis=1) * 2.0)
    assert np.std(db) == pytest.approx(7.0, rel=0.05)


def test_channel_determinism():
    a = sample_channel(6, 3, seed=np.random.SeedSequence(5)).H
    b = sample_channel(6, 3, seed=np.random.SeedSequence(5)).H
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_channel(6, 3, seed=6).H)


def test_mac_time():
    assert mac_time([8.0], [3.0], 1.0) == pytest.approx(4.0)
    # two streams: sum constraint dominates when both are strong
    got = mac_time(np.array([1.0, 1.0]), np.array([3.0, 3.0]), 1.0)
    assert got == pytest.approx(max(1 / 2, 2 / math.log2(7)))
    assert mac_time(np.zeros((3, 0)), np.zeros((3, 0)), np.ones(3)).shape == (3,)
    assert mac_time([0.0], [0.0], 1.0) == 0


def test_symmetric_rate():
    assert symmetric_rate([3.0], 1.0) == pytest.approx(2.0)
    assert symmetric_rate([1.0, 1.0], 1.0) == pytest.approx(math.log2(3) / 2)
    assert symmetric_rate([], 1.0) == math.inf


def test_noiseless_signal_level_through_phy():
    lib = FileLibrary.synthetic(3, 30, 4)
    pl = mn_placement(4, 3, Fraction(1, 4), lib, L=2)
    demand = (2, 0, 1, 2)
    s = build_schedule_signal_level(pl, demand)
    H = sample_channel(4, 2, seed=11).H
    for k in range(4):
        cache = pl.cache_contents(k)
        layers, gains = signal_level_reception(s, H, k, ChannelParams())
        rec = decode_signal_level(k, layers, gains, cache)
        assert assemble_file(s, k, cache, rec) == lib[demand[k]]


def test_too_few_antennas_for_scheme():
    pl = mn_placement(4, 2, Fraction(1, 4), L=3)
    s = build_schedule_signal_level(pl, (0, 1, 0, 1))
    H = sample_channel(4, 2, seed=0).H
    with pytest.raises(BeamformingError):
        evaluate_schedule(s, H, ChannelParams(), 1.0)


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(shadowing_db=-1)
    with pytest.raises(ValueError):
        ChannelParams(bandwidth_hz=0)
    with pytest.raises(ValueError):
        sample_channel(0, 2)


def test_multicast_beam_ignores_channel_strength():
    H = np.array([[10.0, 5.0], [0.05, 0.1]], dtype=complex)
    v = null_space_beamformer(H, [0, 1], [], rule="maxmin")
    g = np.abs(H @ v) / np.linalg.norm(H, axis=1)
    assert g[0] == pytest.approx(g[1])
