"""Geometry, channel, and latency arithmetic for the DT-MEC network.

Units are SI throughout: Hz, W, bits, seconds, meters. Server compute is
kept in cycles/s and converted to an effective bit rate through
`cycles_per_bit`, so the processing term stays size/rate shaped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

DBM_PER_HZ_THERMAL_NOISE = -174.0


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def noise_power_watt(bandwidth_hz: float, density_dbm_per_hz: float = DBM_PER_HZ_THERMAL_NOISE) -> float:
    """Total noise power over a bandwidth from a spectral density in dBm/Hz."""
    return dbm_to_watt(density_dbm_per_hz) * bandwidth_hz


@dataclass(frozen=True)
class RadioParams:
    bandwidth_hz: float
    tx_power_watt: float
    noise_power_watt: float

    def __post_init__(self) -> None:
        for name in ("bandwidth_hz", "tx_power_watt", "noise_power_watt"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be > 0")

    @classmethod
    def from_noise_density(cls, bandwidth_hz: float, tx_power_dbm: float,
                           noise_dbm_per_hz: float = DBM_PER_HZ_THERMAL_NOISE) -> "RadioParams":
        return cls(bandwidth_hz=bandwidth_hz,
                   tx_power_watt=dbm_to_watt(tx_power_dbm),
                   noise_power_watt=noise_power_watt(bandwidth_hz, noise_dbm_per_hz))


@dataclass(frozen=True)
class LatencyParams:
    """Data sizes and link/compute coefficients for one PT-DT profile.

    history_bits is the full historical record pushed at construction time;
    update_bits is one status update. backhaul_coeff is seconds per bit per
    meter on the wired BS-to-server path.
    """

    history_bits: float
    update_bits: float
    backhaul_coeff: float = 1e-11
    cycles_per_bit: float = 1000.0

    def __post_init__(self) -> None:
        for name in ("history_bits", "update_bits", "backhaul_coeff", "cycles_per_bit"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be > 0")
        if self.update_bits > self.history_bits:
            raise InvalidParameterError("update_bits must not exceed history_bits")


@dataclass(frozen=True)
class Topology:
    """Physical substrate: device/BS positions, channel gains, server resources.

    channel_gains[k, b] is the dimensionless power gain of the device-k to
    BS-b link. server_dt_capacity[m] is the max number of DTs BS m may host.
    """

    device_positions: np.ndarray      # (K, 2) meters
    bs_positions: np.ndarray          # (B, 2) meters
    channel_gains: np.ndarray         # (K, B) power ratios
    server_cycles: np.ndarray         # (B,) cycles/s
    server_dt_capacity: np.ndarray    # (B,) ints
    area_m: tuple[float, float] = (1000.0, 1000.0)

    def __post_init__(self) -> None:
        K, B = self.num_devices, self.num_bs
        if self.channel_gains.shape != (K, B):
            raise InvalidParameterError("channel_gains must be K x B")
        w, h = self.area_m
        for pos, what in ((self.device_positions, "device"), (self.bs_positions, "BS")):
            if np.any(pos < 0) or np.any(pos[:, 0] > w) or np.any(pos[:, 1] > h):
                raise InvalidParameterError(f"{what} positions outside area rectangle")
        if np.any(self.channel_gains <= 0):
            raise InvalidParameterError("channel gains must be strictly positive")
        if np.any(self.server_cycles <= 0):
            raise InvalidParameterError("server_cycles must be strictly positive")
        if np.any(self.server_dt_capacity < 1):
            raise InvalidParameterError("server_dt_capacity must be >= 1")

    @property
    def num_devices(self) -> int:
        return self.device_positions.shape[0]

    @property
    def num_bs(self) -> int:
        return self.bs_positions.shape[0]

    def bs_distance(self, b: int, m: int) -> float:
        """Euclidean backhaul distance between BS b and BS m; zero when co-located indices."""
        if b == m:
            return 0.0
        return float(np.linalg.norm(self.bs_positions[b] - self.bs_positions[m]))

    def bs_distance_matrix(self) -> np.ndarray:
        diff = self.bs_positions[:, None, :] - self.bs_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class TopologyConfig:
    """Sampling parameters for random topologies."""

    num_devices: int = 20
    num_bs: int = 6
    area_m: tuple[float, float] = (1000.0, 1000.0)
    pathloss_exponent: float = 3.5
    pathloss_ref_m: float = 1.0
    server_cycles_range: tuple[float, float] = (5e9, 20e9)   # 5-20 GHz
    dt_capacity: int | None = None   # None -> ceil(K/B) + 2

    def __post_init__(self) -> None:
        if self.num_devices < 1 or self.num_bs < 1:
            raise InvalidParameterError("need at least one device and one BS")
        if self.area_m[0] <= 0 or self.area_m[1] <= 0:
            raise InvalidParameterError("area dimensions must be > 0")
        if self.pathloss_exponent <= 0 or self.pathloss_ref_m <= 0:
            raise InvalidParameterError("path loss parameters must be > 0")
        lo, hi = self.server_cycles_range
        if not (0 < lo <= hi):
            raise InvalidParameterError("server_cycles_range must satisfy 0 < lo <= hi")
        if self.dt_capacity is not None and self.dt_capacity < 1:
            raise InvalidParameterError("dt_capacity must be >= 1")

    def resolved_capacity(self) -> int:
        if self.dt_capacity is not None:
            return self.dt_capacity
        return int(np.ceil(self.num_devices / self.num_bs)) + 2


def achievable_rate(gain, radio: RadioParams):
    """Noise-limited link rate W * log2(1 + gain * p / sigma^2) in bits/s.

    Accepts a scalar gain or an array of gains.
    """
    g = np.asarray(gain, dtype=float)
    if np.any(g <= 0):
        raise InvalidParameterError("gain must be strictly positive")
    snr = g * radio.tx_power_watt / radio.noise_power_watt
    out = radio.bandwidth_hz * np.log2(1.0 + snr)
    return float(out) if np.isscalar(gain) or g.ndim == 0 else out


def _three_term_latency(bits: float, rate: float, backhaul_coeff: float,
                        distance_m: float, f_alloc: float) -> float:
    if rate <= 0 or f_alloc <= 0:
        raise InvalidParameterError("rate and f_alloc must be > 0")
    if bits < 0:
        raise InvalidParameterError("payload size must be >= 0")
    return bits / rate + backhaul_coeff * bits * distance_m + bits / f_alloc


def construction_latency(k: int, b: int, m: int, topo: Topology, lat: LatencyParams,
                         rate: float, f_alloc: float) -> float:
    """History upload + backhaul relay + server processing, in seconds.

    b is the wireless access BS of device k, m the hosting server;
    f_alloc is the compute share in effective bits/s.
    """
    return _three_term_latency(lat.history_bits, rate, lat.backhaul_coeff,
                               topo.bs_distance(b, m), f_alloc)


def update_latency(k: int, b: int, m: int, topo: Topology, lat: LatencyParams,
                   rate: float, f_alloc: float) -> float:
    """Same path as construction_latency but for one status update."""
    return _three_term_latency(lat.update_bits, rate, lat.backhaul_coeff,
                               topo.bs_distance(b, m), f_alloc)


def interaction_latency(k: int, b: int, m: int, topo: Topology, lat: LatencyParams,
                        rate: float, f_alloc: float) -> float:
    """Construction plus one update round for a PT-DT pair."""
    return (construction_latency(k, b, m, topo, lat, rate, f_alloc)
            + update_latency(k, b, m, topo, lat, rate, f_alloc))


def compute_allocation_bits_per_s(topo: Topology, lat: LatencyParams,
                                  hosted_counts: np.ndarray) -> np.ndarray:
    """Equal-split per-DT compute share at each server, as effective bits/s.

    Servers hosting zero DTs get their full (unsplit) rate; the value is
    unused for them.
    """
    split = np.maximum(hosted_counts, 1)
    return topo.server_cycles / (lat.cycles_per_bit * split)


def average_interaction_latency(sol, topo: Topology, lat: LatencyParams,
                                radio: RadioParams) -> float:
    """Association-weighted interaction latency, normalized by K * B.

    `sol` needs host/association/access arrays shaped like
    deploy.DeploymentSolution. Compute at each server is split equally
    among its hosted DTs.
    """
    K, B = topo.num_devices, topo.num_bs
    hosted = sol.association.sum(axis=0)
    f_alloc = compute_allocation_bits_per_s(topo, lat, hosted)
    rates = achievable_rate(topo.channel_gains, radio)
    total = 0.0
    for k in range(K):
        for m in range(B):
            if sol.association[k, m]:
                b = int(np.argmax(sol.access_assoc[k]))
                total += interaction_latency(k, b, m, topo, lat,
                                             float(rates[k, b]), float(f_alloc[m]))
    return total / (K * B)


def sample_topology(seed, config: TopologyConfig) -> Topology:
    """Random topology: uniform positions, log-distance path loss with
    unit-mean exponential (Rayleigh power) fading, uniform server cycles.

    `seed` may be an int or a numpy Generator; results are deterministic
    given an int seed.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w, h = config.area_m
    K, B = config.num_devices, config.num_bs
    dev = rng.uniform([0, 0], [w, h], size=(K, 2))
    bs = rng.uniform([0, 0], [w, h], size=(B, 2))
    dist = np.linalg.norm(dev[:, None, :] - bs[None, :, :], axis=-1)
    dist = np.maximum(dist, config.pathloss_ref_m)
    pathloss = (dist / config.pathloss_ref_m) ** (-config.pathloss_exponent)
    fading = rng.exponential(1.0, size=(K, B))
    lo, hi = config.server_cycles_range
    cycles = rng.uniform(lo, hi, size=B)
    cap = np.full(B, config.resolved_capacity(), dtype=int)
    return Topology(device_positions=dev, bs_positions=bs,
                    channel_gains=fading * pathloss, server_cycles=cycles,
                    server_dt_capacity=cap, area_m=config.area_m)
