import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtmec.errors import InvalidParameterError
from dtmec.netmodel import (LatencyParams, RadioParams, Topology, TopologyConfig,
                            achievable_rate, average_interaction_latency,
                            construction_latency, dbm_to_watt, interaction_latency,
                            noise_power_watt, sample_topology, update_latency)


def radio_with_snr_one(bandwidth=20e6):
    """Radio params engineered so gain=1 gives SNR exactly 1."""
    return RadioParams(bandwidth_hz=bandwidth, tx_power_watt=1.0, noise_power_watt=1.0)


def two_bs_topology(distance=500.0):
    return Topology(
        device_positions=np.array([[0.0, 0.0]]),
        bs_positions=np.array([[0.0, 0.0], [distance, 0.0]]),
        channel_gains=np.array([[1.0, 1.0]]),
        server_cycles=np.array([20e9, 20e9]),
        server_dt_capacity=np.array([4, 4]),
    )


def test_rate_at_snr_one_and_three():
    radio = radio_with_snr_one()
    assert achievable_rate(1.0, radio) == pytest.approx(20e6, rel=1e-12)
    assert achievable_rate(3.0, radio) == pytest.approx(40e6, rel=1e-12)


def test_rate_vanishes_as_gain_vanishes():
    radio = radio_with_snr_one()
    assert achievable_rate(1e-15, radio) == pytest.approx(0.0, abs=1e-4)


def test_rate_rejects_nonpositive_gain():
    radio = radio_with_snr_one()
    with pytest.raises(InvalidParameterError):
        achievable_rate(0.0, radio)
    with pytest.raises(InvalidParameterError):
        achievable_rate(-1.0, radio)
    with pytest.raises(InvalidParameterError):
        RadioParams(bandwidth_hz=-1.0, tx_power_watt=1.0, noise_power_watt=1.0)


@given(gain=st.floats(1e-9, 1e3), factor=st.floats(1.0, 100.0))
def test_rate_monotone_in_gain_power_bandwidth(gain, factor):
    radio = radio_with_snr_one()
    base = achievable_rate(gain, radio)
    assert achievable_rate(gain * factor, radio) >= base
    more_power = RadioParams(20e6, factor, 1.0)
    assert achievable_rate(gain, more_power) >= base
    more_band = RadioParams(20e6 * factor, 1.0, 1.0)
    assert achievable_rate(gain, more_band) >= base


def test_noise_power_from_density():
    # -174 dBm/Hz over 20 MHz
    expected = 10 ** ((-174 - 30) / 10) * 20e6
    assert noise_power_watt(20e6) == pytest.approx(expected, rel=1e-12)
    assert dbm_to_watt(23.0) == pytest.approx(0.19952623149688797, rel=1e-12)


def test_construction_latency_worked_example():
    topo = two_bs_topology(distance=500.0)
    lat = LatencyParams(history_bits=8e6, update_bits=8e4, backhaul_coeff=1e-11)
    got = construction_latency(0, 0, 1, topo, lat, rate=20e6, f_alloc=20e6)
    assert got == pytest.approx(0.4 + 0.04 + 0.4, rel=1e-12)


def test_construction_latency_colocated_zero_backhaul():
    topo = two_bs_topology()
    lat = LatencyParams(history_bits=8e6, update_bits=8e4)
    same = construction_latency(0, 1, 1, topo, lat, rate=20e6, f_alloc=20e6)
    assert same == pytest.approx(0.4 + 0.4, rel=1e-12)


def test_update_latency_worked_example():
    topo = two_bs_topology(distance=500.0)
    lat = LatencyParams(history_bits=8e6, update_bits=8e4, backhaul_coeff=1e-11)
    got = update_latency(0, 0, 1, topo, lat, rate=20e6, f_alloc=20e6)
    assert got == pytest.approx(0.004 + 0.0004 + 0.004, rel=1e-12)
    # equal payload sizes collapse the two latencies onto each other
    lat_eq = LatencyParams(history_bits=8e4, update_bits=8e4, backhaul_coeff=1e-11)
    assert update_latency(0, 0, 1, topo, lat_eq, 20e6, 20e6) == pytest.approx(
        construction_latency(0, 0, 1, topo, lat_eq, 20e6, 20e6), rel=1e-15)


def test_interaction_latency_sums_both_phases():
    topo = two_bs_topology(distance=500.0)
    lat = LatencyParams(history_bits=8e6, update_bits=8e4, backhaul_coeff=1e-11)
    got = interaction_latency(0, 0, 1, topo, lat, rate=20e6, f_alloc=20e6)
    assert got == pytest.approx(0.84 + 0.0084, rel=1e-12)


def test_latency_rejects_zero_rate_or_alloc():
    topo = two_bs_topology()
    lat = LatencyParams(history_bits=8e6, update_bits=8e4)
    with pytest.raises(InvalidParameterError):
        construction_latency(0, 0, 1, topo, lat, rate=0.0, f_alloc=1e6)
    with pytest.raises(InvalidParameterError):
        update_latency(0, 0, 1, topo, lat, rate=1e6, f_alloc=0.0)


@given(scale=st.floats(0.1, 50.0))
def test_construction_latency_linear_in_history_size(scale):
    topo = two_bs_topology(distance=320.0)
    base = LatencyParams(history_bits=1e6, update_bits=1e4)
    scaled = LatencyParams(history_bits=1e6 * scale, update_bits=1e4)
    a = construction_latency(0, 0, 1, topo, base, 15e6, 8e6)
    b = construction_latency(0, 0, 1, topo, scaled, 15e6, 8e6)
    assert b == pytest.approx(a * scale, rel=1e-9)


def test_latency_params_invariants():
    with pytest.raises(InvalidParameterError):
        LatencyParams(history_bits=1e4, update_bits=1e6)
    with pytest.raises(InvalidParameterError):
        LatencyParams(history_bits=1e6, update_bits=1e4, backhaul_coeff=0.0)


def naive_average_latency(sol, topo, lat, radio):
    """Independent double loop over Eq.-style terms, no shared helpers."""
    K, B = topo.num_devices, topo.num_bs
    counts = sol.association.sum(axis=0)
    total = 0.0
    for k in range(K):
        for m in range(B):
            if not sol.association[k, m]:
                continue
            b = int(np.argmax(sol.access_assoc[k]))
            rate = radio.bandwidth_hz * np.log2(
                1 + topo.channel_gains[k, b] * radio.tx_power_watt / radio.noise_power_watt)
            d = np.linalg.norm(topo.bs_positions[b] - topo.bs_positions[m]) if b != m else 0.0
            f = topo.server_cycles[m] / (lat.cycles_per_bit * max(counts[m], 1))
            for bits in (lat.history_bits, lat.update_bits):
                total += bits / rate + lat.backhaul_coeff * bits * d + bits / f
    return total / (K * B)


def test_average_latency_single_pair():
    topo = Topology(
        device_positions=np.array([[10.0, 10.0]]),
        bs_positions=np.array([[0.0, 0.0]]),
        channel_gains=np.array([[0.5]]),
        server_cycles=np.array([10e9]),
        server_dt_capacity=np.array([2]),
    )
    lat = LatencyParams(history_bits=8e6, update_bits=8e4)
    radio = radio_with_snr_one()
    from dtmec.deploy import DeploymentSolution
    sol = DeploymentSolution(host_flags=np.array([1], dtype=np.int8),
                             association=np.array([[1]], dtype=np.int8),
                             access_assoc=np.array([[1]], dtype=np.int8))
    rate = achievable_rate(0.5, radio)
    f = 10e9 / 1000.0
    expected = interaction_latency(0, 0, 0, topo, lat, rate, f)
    assert average_interaction_latency(sol, topo, lat, radio) == pytest.approx(
        expected, rel=1e-12)


def test_average_latency_matches_naive_loop_on_seeded_instances():
    from dtmec.deploy import nearest_baseline, random_baseline
    radio = RadioParams.from_noise_density(20e6, 23.0)
    lat = LatencyParams(history_bits=5e6, update_bits=5e4)
    for seed in range(4):
        topo = sample_topology(seed, TopologyConfig(num_devices=3, num_bs=2))
        rng = np.random.default_rng(seed)
        for sol in (nearest_baseline(topo, lat, radio),
                    random_baseline(topo, rng, lat, radio)):
            assert average_interaction_latency(sol, topo, lat, radio) == \
                naive_average_latency(sol, topo, lat, radio)


def test_sample_topology_deterministic_and_valid():
    cfg = TopologyConfig(num_devices=8, num_bs=3)
    a = sample_topology(42, cfg)
    b = sample_topology(42, cfg)
    assert np.array_equal(a.device_positions, b.device_positions)
    assert np.array_equal(a.channel_gains, b.channel_gains)
    assert np.array_equal(a.server_cycles, b.server_cycles)
    assert (a.channel_gains > 0).all()
    c = sample_topology(43, cfg)
    assert not np.array_equal(a.device_positions, c.device_positions)


def test_sample_topology_fading_is_unit_mean():
    cfg = TopologyConfig(num_devices=250, num_bs=4, pathloss_exponent=3.5)
    gains = []
    for seed in range(100):
        topo = sample_topology(seed, cfg)
        dist = np.linalg.norm(
            topo.device_positions[:, None, :] - topo.bs_positions[None, :, :], axis=-1)
        dist = np.maximum(dist, cfg.pathloss_ref_m)
        gains.append(topo.channel_gains / dist ** -cfg.pathloss_exponent)
    fading = np.concatenate([g.reshape(-1) for g in gains])
    assert fading.size == 100_000
    assert fading.mean() == pytest.approx(1.0, rel=0.02)


def test_topology_invariants_rejected():
    with pytest.raises(InvalidParameterError):
        Topology(device_positions=np.array([[2000.0, 0.0]]),
                 bs_positions=np.array([[0.0, 0.0]]),
                 channel_gains=np.array([[1.0]]),
                 server_cycles=np.array([1e9]),
                 server_dt_capacity=np.array([1]))
    with pytest.raises(InvalidParameterError):
        Topology(device_positions=np.array([[0.0, 0.0]]),
                 bs_positions=np.array([[0.0, 0.0]]),
                 channel_gains=np.array([[0.0]]),
                 server_cycles=np.array([1e9]),
                 server_dt_capacity=np.array([1]))
