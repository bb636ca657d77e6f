"""Experiment configuration: defaults, YAML file loading, CLI overrides.

Precedence is flags > file > defaults. The file is flat YAML with one
section per parameter group; unknown sections or keys are rejected so typos
fail loudly before any run starts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

import yaml

from .deploy import DynamicsConfig, LearnerConfig, RewardParams
from .errors import ConfigError, InvalidParameterError
from .netmodel import LatencyParams, RadioParams, TopologyConfig
from .schedmdp import MdpSpec
from .simulator import SimulationSetup
from .stateproc import DeliveryModel


@dataclass
class RadioConfig:
    bandwidth_hz: float = 20e6          # 20 MHz channel
    tx_power_dbm: float = 23.0
    noise_dbm_per_hz: float = -174.0


@dataclass
class LatencyConfig:
    history_bits: float = 8e6
    update_bits: float = 80e3
    backhaul_coeff: float = 1e-11       # s per bit per meter
    cycles_per_bit: float = 1000.0
    draw_sizes: bool = True             # per-scenario draws for deployment runs
    history_bits_range: list = field(default_factory=lambda: [1e6, 1e7])
    update_bits_range: list = field(default_factory=lambda: [1e4, 1e5])


@dataclass
class TopologySection:
    num_devices: int = 20
    num_bs: int = 6
    area_m: list = field(default_factory=lambda: [1000.0, 1000.0])
    pathloss_exponent: float = 3.5
    pathloss_ref_m: float = 1.0
    server_cycles_range: list = field(default_factory=lambda: [5e9, 20e9])
    dt_capacity: int | None = None


@dataclass
class ChainConfig:
    flip_prob: float = 0.3


@dataclass
class DeliverySection:
    mode: str = "fixed"
    p_tx: float = 0.8
    snr_threshold: float = 1.0
    mean_snr: float = 10.0


@dataclass
class MdpSection:
    aoci_cap: int = 100
    aoi_cap: int = 100
    update_cost: float = 12.0
    weight: float = 1.0


@dataclass
class LearnerSection:
    actor_hidden: list = field(default_factory=lambda: [64, 64])
    critic_hidden: list = field(default_factory=lambda: [64, 64])
    learning_rate: float = 1e-3
    discount: float = 0.6
    noise_scale: float = 2.0
    noise_anneal_frac: float = 0.9
    iterations: int = 5000
    episode_length: int = 50
    batch_size: int = 8
    restarts: int = 3
    latency_weight: float = 0.5
    per_dt_cost: float = 1.0
    resample_positions: bool = False
    resample_gains: bool = False


@dataclass
class SimulationSection:
    horizon_slots: int = 1000
    num_runs: int = 1000
    slot_seconds: float = 0.01
    burn_in_slots: int = 0


@dataclass
class SweepSection:
    p_tx: list = field(default_factory=lambda: [0.8])
    q: list = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 10)])
    omega: list = field(default_factory=lambda: [1.0])
    update_cost: list = field(default_factory=lambda: [12.0])
    num_devices: list = field(default_factory=lambda: [20, 40, 60])
    num_bs: list = field(default_factory=lambda: [6])
    num_seeds: int = 20
    convergence_pairs: list = field(default_factory=lambda: [[10, 4], [20, 4], [20, 6]])


_SECTIONS = {
    "radio": RadioConfig,
    "latency": LatencyConfig,
    "topology": TopologySection,
    "chain": ChainConfig,
    "delivery": DeliverySection,
    "mdp": MdpSection,
    "learner": LearnerSection,
    "simulation": SimulationSection,
    "sweep": SweepSection,
}


@dataclass
class ExperimentConfig:
    scenario: str = "default"
    seed: int = 12345
    radio: RadioConfig = field(default_factory=RadioConfig)
    latency: LatencyConfig = field(default_factory=LatencyConfig)
    topology: TopologySection = field(default_factory=TopologySection)
    chain: ChainConfig = field(default_factory=ChainConfig)
    delivery: DeliverySection = field(default_factory=DeliverySection)
    mdp: MdpSection = field(default_factory=MdpSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    # ------------------------------------------------------------------ build
    def radio_params(self) -> RadioParams:
        return RadioParams.from_noise_density(
            self.radio.bandwidth_hz, self.radio.tx_power_dbm,
            self.radio.noise_dbm_per_hz)

    def latency_params(self) -> LatencyParams:
        return LatencyParams(history_bits=self.latency.history_bits,
                             update_bits=self.latency.update_bits,
                             backhaul_coeff=self.latency.backhaul_coeff,
                             cycles_per_bit=self.latency.cycles_per_bit)

    def topology_config(self, num_devices=None, num_bs=None) -> TopologyConfig:
        t = self.topology
        return TopologyConfig(
            num_devices=int(num_devices if num_devices is not None else t.num_devices),
            num_bs=int(num_bs if num_bs is not None else t.num_bs),
            area_m=tuple(t.area_m),
            pathloss_exponent=t.pathloss_exponent,
            pathloss_ref_m=t.pathloss_ref_m,
            server_cycles_range=tuple(t.server_cycles_range),
            dt_capacity=t.dt_capacity)

    def delivery_model(self, p_tx=None) -> DeliveryModel:
        d = self.delivery
        if d.mode == "fixed":
            return DeliveryModel.fixed(d.p_tx if p_tx is None else p_tx)
        if p_tx is not None:
            return DeliveryModel.fixed(p_tx)
        return DeliveryModel.rayleigh_outage(d.snr_threshold, d.mean_snr)

    def mdp_spec(self, p_tx=None, q=None, omega=None, update_cost=None) -> MdpSpec:
        return MdpSpec(
            aoci_cap=self.mdp.aoci_cap, aoi_cap=self.mdp.aoi_cap,
            p_tx=self.delivery_model(p_tx).p_tx,
            content_q=self.chain.flip_prob if q is None else q,
            update_cost=self.mdp.update_cost if update_cost is None else update_cost,
            weight=self.mdp.weight if omega is None else omega)

    def simulation_setup(self, spec: MdpSpec) -> SimulationSetup:
        return SimulationSetup.from_spec(
            spec, horizon_slots=self.simulation.horizon_slots,
            burn_in_slots=self.simulation.burn_in_slots)

    def learner_config(self, iterations=None) -> LearnerConfig:
        ln = self.learner
        return LearnerConfig(
            actor_hidden=tuple(ln.actor_hidden), critic_hidden=tuple(ln.critic_hidden),
            learning_rate=ln.learning_rate, discount=ln.discount,
            noise_scale=ln.noise_scale, noise_anneal_frac=ln.noise_anneal_frac,
            iterations=int(iterations if iterations is not None else ln.iterations),
            episode_length=ln.episode_length, batch_size=ln.batch_size,
            restarts=ln.restarts)

    def dynamics_config(self) -> DynamicsConfig:
        return DynamicsConfig(resample_positions=self.learner.resample_positions,
                              resample_gains=self.learner.resample_gains)

    # --------------------------------------------------------------- validate
    def validate(self) -> None:
        """Builds every derived object so range errors surface with the
        offending parameter named."""
        try:
            if not (0.0 <= self.chain.flip_prob <= 1.0):
                raise InvalidParameterError(
                    f"chain.flip_prob must lie in [0, 1], got {self.chain.flip_prob}")
            self.radio_params()
            self.latency_params()
            self.topology_config()
            self.delivery_model()
            spec = self.mdp_spec()
            self.simulation_setup(spec)
            self.learner_config()
            RewardParams(latency_weight=self.learner.latency_weight,
                         per_dt_cost=self.learner.per_dt_cost)
            if self.simulation.num_runs < 1:
                raise InvalidParameterError("simulation.num_runs must be >= 1")
            if self.simulation.slot_seconds <= 0:
                raise InvalidParameterError("simulation.slot_seconds must be > 0")
            sw = self.sweep
            for name in ("p_tx", "q", "omega", "update_cost", "num_devices", "num_bs"):
                if not getattr(sw, name):
                    raise InvalidParameterError(f"sweep.{name} must be non-empty")
            for p in sw.p_tx:
                if not (0.0 <= p <= 1.0):
                    raise InvalidParameterError(f"sweep.p_tx entry {p} outside [0, 1]")
            for q in sw.q:
                if not (0.0 <= q <= 1.0):
                    raise InvalidParameterError(f"sweep.q entry {q} outside [0, 1]")
            if sw.num_seeds < 1:
                raise InvalidParameterError("sweep.num_seeds must be >= 1")
        except InvalidParameterError as exc:
            raise ConfigError(str(exc)) from exc

    # ------------------------------------------------------------------ io
    def to_dict(self) -> dict:
        out = {"scenario": self.scenario, "seed": self.seed}
        for name, _ in _SECTIONS.items():
            out[name] = dataclasses.asdict(getattr(self, name))
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _coerce_section(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    return cls(**data)


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Config from defaults, then a YAML file, then `section.key=value` overrides."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
    cfg = ExperimentConfig()
    top_known = {"scenario", "seed", *(_SECTIONS)}
    unknown = set(data) - top_known
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {sorted(unknown)}")
    if "scenario" in data:
        cfg.scenario = str(data["scenario"])
    if "seed" in data:
        cfg.seed = int(data["seed"])
    for section, cls in _SECTIONS.items():
        if section in data:
            if not isinstance(data[section], dict):
                raise ConfigError(f"[{section}] must be a mapping")
            merged = dataclasses.asdict(getattr(cfg, section))
            merged.update(data[section])
            setattr(cfg, section, _coerce_section(cls, merged, section))
    for item in overrides or []:
        _apply_override(cfg, item)
    cfg.validate()
    return cfg


def _apply_override(cfg: ExperimentConfig, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    key, raw = item.split("=", 1)
    value = yaml.safe_load(raw)
    if key in ("scenario", "seed"):
        setattr(cfg, key, int(value) if key == "seed" else str(value))
        return
    if "." not in key:
        raise ConfigError(f"override key {key!r} must be section.key")
    section, name = key.split(".", 1)
    if section not in _SECTIONS:
        raise ConfigError(f"unknown config section {section!r}")
    target = getattr(cfg, section)
    if not hasattr(target, name):
        raise ConfigError(f"unknown key {name!r} in section {section!r}")
    setattr(target, name, value)
