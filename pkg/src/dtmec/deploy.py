"""DT placement and association: feasibility, exact oracle, baselines, and an
actor-critic learner over the joint (host, access) action space.

A solution carries three coupled structures: per-BS host flags, the wireless
access association, and the DT hosting association. A raw action fixes the
host set and each device's access BS; the hosting side follows as the
nearest hosting server to the access BS, then capacity repair makes the
result feasible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError, TrainingFailureError
from .netmodel import (LatencyParams, RadioParams, Topology, TopologyConfig,
                       achievable_rate, average_interaction_latency,
                       sample_topology)

ORACLE_MAX_BS = 4
ORACLE_MAX_DEVICES = 6


@dataclass(frozen=True)
class DeploymentSolution:
    host_flags: np.ndarray    # (B,) 0/1
    association: np.ndarray   # (K, B) 0/1, DT hosting
    access_assoc: np.ndarray  # (K, B) 0/1, wireless access

    @property
    def hosted_counts(self) -> np.ndarray:
        return self.association.sum(axis=0)

    @property
    def device_host(self) -> np.ndarray:
        return self.association.argmax(axis=1)

    @property
    def device_access(self) -> np.ndarray:
        return self.access_assoc.argmax(axis=1)


def check_feasible(sol: DeploymentSolution, topo: Topology) -> list:
    """Every violated constraint with indices; an empty list means feasible."""
    violations = []
    K, B = topo.num_devices, topo.num_bs
    for name, arr in (("host_flags", sol.host_flags),
                      ("association", sol.association),
                      ("access", sol.access_assoc)):
        if not np.isin(arr, (0, 1)).all():
            violations.append(f"C1: {name} has non-binary entries")
    col = sol.association.sum(axis=0)
    for m in range(B):
        if sol.host_flags[m]:
            if col[m] > topo.server_dt_capacity[m]:
                violations.append(
                    f"C2: server {m} hosts {col[m]} > capacity {topo.server_dt_capacity[m]}")
        elif col[m] > 0:
            violations.append(f"C2: non-hosting server {m} has {col[m]} associations")
    rows = sol.association.sum(axis=1)
    for k in range(K):
        if rows[k] != 1:
            violations.append(f"C3: device {k} has {rows[k]} DT associations")
    acc_rows = sol.access_assoc.sum(axis=1)
    for k in range(K):
        if acc_rows[k] != 1:
            violations.append(f"access: device {k} has {acc_rows[k]} access links")
    # C4 under equal split: sum of shares equals the hosting server's budget
    for m in range(B):
        if col[m] > 0:
            total = col[m] * (topo.server_cycles[m] / col[m])
            if total > topo.server_cycles[m] * (1 + 1e-12):
                violations.append(f"C4: server {m} compute over-allocated")
    return violations


def deployment_objective(sol: DeploymentSolution, topo: Topology,
                         lat: LatencyParams, radio: RadioParams) -> float:
    """Average interaction latency of a feasible solution (equal compute split)."""
    return average_interaction_latency(sol, topo, lat, radio)


# ---------------------------------------------------------------------------
# solution construction and repair


def _solution_arrays(K: int, B: int, hosts: np.ndarray, access: np.ndarray,
                     device_host: np.ndarray) -> DeploymentSolution:
    assoc = np.zeros((K, B), dtype=np.int8)
    assoc[np.arange(K), device_host] = 1
    acc = np.zeros((K, B), dtype=np.int8)
    acc[np.arange(K), access] = 1
    return DeploymentSolution(host_flags=hosts.astype(np.int8),
                              association=assoc, access_assoc=acc)


def _nearest_host_per_bs(topo: Topology, hosts: np.ndarray) -> np.ndarray:
    """For each BS, the hosting BS with the smallest backhaul distance.

    A BS that hosts is its own nearest host; remaining ties go to the lowest
    index."""
    host_idx = np.flatnonzero(hosts)
    dist = topo.bs_distance_matrix()[:, host_idx]
    nearest = host_idx[np.argmin(dist, axis=1)]
    own = np.flatnonzero(hosts)
    nearest[own] = own
    return nearest


def build_solution(host_flags, access_choice, topo: Topology, lat: LatencyParams,
                   radio: RadioParams) -> DeploymentSolution:
    """Raw joint action -> feasible solution (derive hosting, then repair)."""
    hosts = np.asarray(host_flags, dtype=np.int8).copy()
    access = np.asarray(access_choice, dtype=int)
    K, B = topo.num_devices, topo.num_bs
    if hosts.sum() == 0:
        hosts[int(np.argmax(topo.server_dt_capacity))] = 1
    device_host = _nearest_host_per_bs(topo, hosts)[access]
    sol = _solution_arrays(K, B, hosts, access, device_host)
    return repair_action(sol, topo, lat, radio)


def _interaction_terms(topo: Topology, lat: LatencyParams, radio: RadioParams):
    """(link[k, b, m], comp_coeff[m]) so that a solution's total latency is
    sum_k link[k, b_k, m_k] + sum_m comp_coeff[m] * J_m^2."""
    rates = achievable_rate(topo.channel_gains, radio)
    size = lat.history_bits + lat.update_bits
    dist = topo.bs_distance_matrix()
    link = size * (1.0 / rates[:, :, None] + lat.backhaul_coeff * dist[None, :, :])
    comp_coeff = size * lat.cycles_per_bit / topo.server_cycles
    return link, comp_coeff


def repair_action(sol: DeploymentSolution, topo: Topology, lat: LatencyParams,
                  radio: RadioParams) -> DeploymentSolution:
    """Minimal fix-up to a feasible solution; feasible inputs pass through.

    Steps: force one host if none; give every device exactly one access link
    and one hosting assignment (preferring the nearest hosting BS with
    slack); then drain over-capacity servers, moving their largest-latency
    devices to the nearest hosting BS with room.
    """
    if not check_feasible(sol, topo):
        return sol
    K, B = topo.num_devices, topo.num_bs
    hosts = sol.host_flags.astype(np.int8).copy()
    if hosts.sum() == 0:
        hosts[int(np.argmax(topo.server_dt_capacity))] = 1
    cap = topo.server_dt_capacity
    if cap[hosts == 1].sum() < K:
        # open further servers, largest capacity first, until demand fits
        for m in np.argsort(-cap, kind="stable"):
            if cap[hosts == 1].sum() >= K:
                break
            hosts[m] = 1
        if cap[hosts == 1].sum() < K:
            raise InvalidParameterError(
                f"total DT capacity {cap.sum()} cannot hold {K} devices")

    bs_dist = topo.bs_distance_matrix()
    dev_bs_dist = np.linalg.norm(
        topo.device_positions[:, None, :] - topo.bs_positions[None, :, :], axis=-1)

    access = np.full(K, -1, dtype=int)
    acc_rows = sol.access_assoc.sum(axis=1)
    for k in range(K):
        if acc_rows[k] == 1:
            access[k] = int(sol.access_assoc[k].argmax())
        else:
            access[k] = int(np.argmin(dev_bs_dist[k]))

    device_host = np.full(K, -1, dtype=int)
    rows = sol.association.sum(axis=1)
    for k in range(K):
        if rows[k] >= 1:
            m = int(sol.association[k].argmax())
            if hosts[m]:
                device_host[k] = m
    counts = np.zeros(B, dtype=int)
    for k in range(K):
        if device_host[k] >= 0:
            counts[device_host[k]] += 1

    host_idx = np.flatnonzero(hosts)
    for k in range(K):
        if device_host[k] >= 0:
            continue
        order = host_idx[np.argsort(bs_dist[access[k], host_idx], kind="stable")]
        slack = [m for m in order if counts[m] < cap[m]]
        m = slack[0] if slack else order[0]
        device_host[k] = int(m)
        counts[m] += 1

    link, comp_coeff = _interaction_terms(topo, lat, radio)
    while True:
        over = np.flatnonzero(counts > cap)
        if len(over) == 0:
            break
        m = int(over[np.argmax((counts - cap)[over])])
        members = np.flatnonzero(device_host == m)
        latencies = link[members, access[members], m] + comp_coeff[m] * counts[m]
        k = int(members[np.argmax(latencies)])
        others = host_idx[(host_idx != m) & (counts[host_idx] < cap[host_idx])]
        target = int(others[np.argmin(bs_dist[access[k], others])])
        device_host[k] = target
        counts[m] -= 1
        counts[target] += 1

    out = _solution_arrays(K, B, hosts, access, device_host)
    bad = check_feasible(out, topo)
    if bad:
        raise InvalidParameterError(f"repair failed to reach feasibility: {bad}")
    return out


# ---------------------------------------------------------------------------
# baselines and the exhaustive oracle


def nearest_baseline(topo: Topology, lat: LatencyParams,
                     radio: RadioParams) -> DeploymentSolution:
    """Every BS hosts; each device attaches to its closest BS, spilling to the
    next-closest when full. Access and hosting coincide."""
    K, B = topo.num_devices, topo.num_bs
    if topo.server_dt_capacity.sum() < K:
        raise InvalidParameterError("total DT capacity below device count")
    dev_bs_dist = np.linalg.norm(
        topo.device_positions[:, None, :] - topo.bs_positions[None, :, :], axis=-1)
    counts = np.zeros(B, dtype=int)
    choice = np.zeros(K, dtype=int)
    for k in range(K):
        for m in np.argsort(dev_bs_dist[k], kind="stable"):
            if counts[m] < topo.server_dt_capacity[m]:
                choice[k] = m
                counts[m] += 1
                break
    hosts = np.ones(B, dtype=np.int8)
    return _solution_arrays(K, B, hosts, choice, choice)


def random_baseline(topo: Topology, rng: np.random.Generator, lat: LatencyParams,
                    radio: RadioParams) -> DeploymentSolution:
    """Uniform host subset and access choices, made feasible by repair."""
    B = topo.num_bs
    K = topo.num_devices
    for _ in range(1000):
        hosts = (rng.random(B) < 0.5).astype(np.int8)
        if hosts.sum() >= 1 and topo.server_dt_capacity[hosts == 1].sum() >= K:
            break
    else:
        hosts = np.ones(B, dtype=np.int8)
    access = rng.integers(0, B, size=K)
    return build_solution(hosts, access, topo, lat, radio)


@dataclass(frozen=True)
class OracleResult:
    solution: DeploymentSolution
    objective: float
    candidates: int


def exhaustive_oracle(topo: Topology, lat: LatencyParams, radio: RadioParams,
                      max_bs: int = ORACLE_MAX_BS,
                      max_devices: int = ORACLE_MAX_DEVICES) -> OracleResult:
    """Minimum-latency solution over every host subset x access assignment.

    Hosting follows the nearest-host derivation; candidates violating
    capacity are rejected rather than repaired. Ties keep the first
    (lexicographically smallest) encoding.
    """
    K, B = topo.num_devices, topo.num_bs
    if B > max_bs or K > max_devices:
        raise InvalidParameterError(
            f"oracle limited to B <= {max_bs}, K <= {max_devices}")
    link, comp_coeff = _interaction_terms(topo, lat, radio)
    access_combos = np.array(list(itertools.product(range(B), repeat=K)), dtype=int)
    best = None
    candidates = 0
    for mask in range(1, 1 << B):
        hosts = np.array([(mask >> m) & 1 for m in range(B)], dtype=np.int8)
        host_idx = np.flatnonzero(hosts)
        if topo.server_dt_capacity[host_idx].sum() < K:
            continue
        nearest = _nearest_host_per_bs(topo, hosts)
        v = nearest[access_combos]                      # (C, K)
        counts = np.stack([(v == m).sum(axis=1) for m in range(B)], axis=1)
        feasible = (counts <= topo.server_dt_capacity[None, :]).all(axis=1)
        candidates += int(feasible.sum())
        if not feasible.any():
            continue
        total = np.zeros(len(access_combos))
        for k in range(K):
            total += link[k, access_combos[:, k], v[:, k]]
        total += (comp_coeff[None, :] * counts.astype(float) ** 2).sum(axis=1)
        total = np.where(feasible, total, np.inf)
        i = int(np.argmin(total))
        obj = total[i] / (K * B)
        if best is None or obj < best[0]:
            sol = _solution_arrays(K, B, hosts, access_combos[i], v[i])
            best = (obj, sol)
    if best is None:
        raise InvalidParameterError("no feasible deployment exists")
    return OracleResult(solution=best[1], objective=float(best[0]),
                        candidates=candidates)


# ---------------------------------------------------------------------------
# environment


@dataclass(frozen=True)
class RewardParams:
    latency_weight: float = 0.5     # balance between latency and hosting cost
    per_dt_cost: float = 1.0
    latency_scale: float = 1.0
    cost_scale: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.latency_weight <= 1.0):
            raise InvalidParameterError("latency_weight must lie in [0, 1]")
        if self.latency_scale <= 0 or self.cost_scale <= 0:
            raise InvalidParameterError("scales must be > 0")
        if self.per_dt_cost < 0:
            raise InvalidParameterError("per_dt_cost must be >= 0")


@dataclass(frozen=True)
class DynamicsConfig:
    resample_positions: bool = False
    resample_gains: bool = False


@dataclass(frozen=True)
class LearnerConfig:
    actor_hidden: tuple = (64, 64)
    critic_hidden: tuple = (64, 64)
    learning_rate: float = 1e-3
    discount: float = 0.6
    noise_scale: float = 2.0
    noise_anneal_frac: float = 0.9
    iterations: int = 5000
    episode_length: int = 50
    batch_size: int = 8    # sampled actions per gradient step
    restarts: int = 3      # independent trainings; greedy-best one is kept

    def __post_init__(self) -> None:
        if not (0.0 < self.discount <= 1.0):
            raise InvalidParameterError("discount must lie in (0, 1]")
        if self.learning_rate <= 0:
            raise InvalidParameterError("learning_rate must be > 0")
        if self.iterations < 1 or self.episode_length < 1:
            raise InvalidParameterError("iterations and episode_length must be >= 1")
        if self.batch_size < 1 or self.restarts < 1:
            raise InvalidParameterError("batch_size and restarts must be >= 1")
        if self.noise_scale < 0 or not (0.0 < self.noise_anneal_frac <= 1.0):
            raise InvalidParameterError("bad exploration-noise settings")


class PlacementEnv:
    """The joint placement/association decision process over one network.

    Step: apply a joint action (host bits + access choice), compute the
    reward from the resulting feasible solution, then optionally resample
    device positions and channel fading for the next slot.
    """

    def __init__(self, topo: Topology, lat: LatencyParams, radio: RadioParams,
                 reward: RewardParams | None = None,
                 dynamics: DynamicsConfig = DynamicsConfig(),
                 topo_config: TopologyConfig | None = None,
                 rng: np.random.Generator | int | None = None):
        self.topo = topo
        self.lat = lat
        self.radio = radio
        self.dynamics = dynamics
        self.topo_config = topo_config
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        if (dynamics.resample_positions or dynamics.resample_gains) and topo_config is None:
            raise InvalidParameterError("dynamics resampling needs a TopologyConfig")
        if reward is None:
            base = deployment_objective(nearest_baseline(topo, lat, radio),
                                        topo, lat, radio)
            theta = 1.0
            reward = RewardParams(latency_weight=0.5, per_dt_cost=theta,
                                  latency_scale=base,
                                  cost_scale=topo.num_devices * theta)
        self.reward_params = reward
        self.solution = nearest_baseline(topo, lat, radio)
        self._tables = None

    @property
    def num_devices(self) -> int:
        return self.topo.num_devices

    @property
    def num_bs(self) -> int:
        return self.topo.num_bs

    @property
    def feature_dim(self) -> int:
        K, B = self.num_devices, self.num_bs
        return 2 * B + 2 * K * B

    def features(self, solution: DeploymentSolution | None = None) -> np.ndarray:
        sol = solution if solution is not None else self.solution
        rates = achievable_rate(self.topo.channel_gains, self.radio)
        rates = rates / rates.max()
        counts = sol.hosted_counts / np.maximum(self.topo.server_dt_capacity, 1)
        return np.concatenate([
            sol.host_flags.astype(float),
            sol.access_assoc.reshape(-1).astype(float),
            counts.astype(float),
            rates.reshape(-1),
        ])

    def reset(self) -> np.ndarray:
        self.solution = random_baseline(self.topo, self.rng, self.lat, self.radio)
        return self.features()

    def solution_from_action(self, host_bits, access_choice) -> DeploymentSolution:
        return build_solution(host_bits, access_choice, self.topo, self.lat, self.radio)

    def _objective_fast(self, sol: DeploymentSolution) -> float:
        """Table-based objective, identical to deployment_objective."""
        if self._tables is None:
            self._tables = _interaction_terms(self.topo, self.lat, self.radio)
        link, comp_coeff = self._tables
        access = sol.device_access
        host = sol.device_host
        counts = sol.hosted_counts.astype(float)
        total = link[np.arange(self.num_devices), access, host].sum()
        total += (comp_coeff * counts ** 2).sum()
        return float(total / (self.num_devices * self.num_bs))

    def normalized_cost(self, solution: DeploymentSolution):
        """(deployment cost, raw latency) of a solution on the current topology."""
        rp = self.reward_params
        latency = self._objective_fast(solution)
        hosted_cost = solution.association.sum() * rp.per_dt_cost
        cost = (rp.latency_weight * latency / rp.latency_scale
                + (1.0 - rp.latency_weight) * hosted_cost / rp.cost_scale)
        return float(cost), float(latency)

    def step(self, host_bits, access_choice):
        """Returns (next features, reward, info dict)."""
        sol = self.solution_from_action(host_bits, access_choice)
        cost, latency = self.normalized_cost(sol)
        reward = -cost
        self.solution = sol
        self._resample_dynamics()
        info = {"latency": latency, "deployment_cost": cost, "solution": sol}
        return self.features(), reward, info

    def _resample_dynamics(self) -> None:
        if not (self.dynamics.resample_positions or self.dynamics.resample_gains):
            return
        cfg = self.topo_config
        topo = self.topo
        dev = topo.device_positions
        if self.dynamics.resample_positions:
            w, h = cfg.area_m
            dev = self.rng.uniform([0, 0], [w, h], size=dev.shape)
        dist = np.linalg.norm(dev[:, None, :] - topo.bs_positions[None, :, :], axis=-1)
        dist = np.maximum(dist, cfg.pathloss_ref_m)
        pathloss = (dist / cfg.pathloss_ref_m) ** (-cfg.pathloss_exponent)
        if self.dynamics.resample_gains:
            fading = self.rng.exponential(1.0, size=dist.shape)
        else:
            rates_gain = topo.channel_gains
            old_dist = np.linalg.norm(
                topo.device_positions[:, None, :] - topo.bs_positions[None, :, :],
                axis=-1)
            old_dist = np.maximum(old_dist, cfg.pathloss_ref_m)
            fading = rates_gain / (old_dist / cfg.pathloss_ref_m) ** (-cfg.pathloss_exponent)
        self.topo = replace(topo, device_positions=dev, channel_gains=fading * pathloss)
        self._tables = None


# ---------------------------------------------------------------------------
# manual MLP + Adam


class Mlp:
    """tanh hidden layers, linear output; hand-rolled backprop and Adam."""

    def __init__(self, in_dim: int, hidden, out_dim: int, rng: np.random.Generator):
        dims = [in_dim, *hidden, out_dim]
        self.W = [rng.normal(0.0, 1.0 / math.sqrt(dims[i]), (dims[i], dims[i + 1]))
                  for i in range(len(dims) - 1)]
        self.b = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
        self._m = [np.zeros_like(w) for w in self.W] + [np.zeros_like(b) for b in self.b]
        self._v = [np.zeros_like(w) for w in self.W] + [np.zeros_like(b) for b in self.b]
        self._t = 0

    def forward(self, x: np.ndarray):
        acts = [x]
        h = x
        last = len(self.W) - 1
        for layer, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            h = z if layer == last else np.tanh(z)
            acts.append(h)
        return h, acts

    def gradients(self, acts, grad_out: np.ndarray):
        gW = [None] * len(self.W)
        gb = [None] * len(self.b)
        g = grad_out
        for layer in reversed(range(len(self.W))):
            gW[layer] = np.outer(acts[layer], g)
            gb[layer] = g
            if layer > 0:
                g = (self.W[layer] @ g) * (1.0 - acts[layer] ** 2)
        return gW, gb

    def adam_step(self, gW, gb, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self._t += 1
        params = self.W + self.b
        grads = list(gW) + list(gb)
        t = self._t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g * g
            mhat = m / (1 - beta1 ** t)
            vhat = v / (1 - beta2 ** t)
            p -= lr * mhat / (np.sqrt(vhat) + eps)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax_rows(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class DeployPolicy:
    """Actor network over host logits (B) and association logits (K x B)."""

    def __init__(self, actor: Mlp, num_devices: int, num_bs: int):
        self.actor = actor
        self.K = num_devices
        self.B = num_bs

    def _split(self, out: np.ndarray):
        return out[:self.B], out[self.B:].reshape(self.K, self.B)

    def sample(self, feats: np.ndarray, noise_scale: float, rng: np.random.Generator):
        out, acts = self.actor.forward(feats)
        host_logits, assoc_logits = self._split(out)
        if noise_scale > 0:
            host_logits = host_logits + rng.normal(0, noise_scale, self.B)
            assoc_logits = assoc_logits + rng.normal(0, noise_scale, (self.K, self.B))
        host_p = _sigmoid(host_logits)
        host_bits = (rng.random(self.B) < host_p).astype(np.int8)
        assoc_p = _softmax_rows(assoc_logits)
        u = rng.random(self.K)
        cum = assoc_p.cumsum(axis=1)
        access = (u[:, None] > cum).sum(axis=1)
        cache = {"acts": acts, "host_p": host_p, "host_bits": host_bits,
                 "assoc_p": assoc_p, "access": access}
        return (host_bits, access), cache

    def score_gradient(self, cache):
        """d log pi / d actor-output for the sampled action."""
        g_host = cache["host_bits"] - cache["host_p"]
        onehot = np.zeros_like(cache["assoc_p"])
        onehot[np.arange(self.K), cache["access"]] = 1.0
        g_assoc = onehot - cache["assoc_p"]
        return np.concatenate([g_host, g_assoc.reshape(-1)])

    def greedy_action(self, feats: np.ndarray):
        out, _ = self.actor.forward(feats)
        host_logits, assoc_logits = self._split(out)
        host_bits = (host_logits > 0).astype(np.int8)
        return host_bits, assoc_logits.argmax(axis=1)

    def greedy_solution(self, env: PlacementEnv, refine_passes: int = 2):
        """Deterministic solution on the env's current topology."""
        sol = env.solution
        for _ in range(max(1, refine_passes)):
            host_bits, access = self.greedy_action(env.features(sol))
            sol = env.solution_from_action(host_bits, access)
        return sol


@dataclass
class TrainResult:
    policy: DeployPolicy
    cost_curve: np.ndarray
    critic: Mlp = field(repr=False, default=None)


def _train_once(env: PlacementEnv, config: LearnerConfig,
                rng: np.random.Generator) -> TrainResult:
    K, B = env.num_devices, env.num_bs
    actor = Mlp(env.feature_dim, config.actor_hidden, B + K * B, rng)
    critic = Mlp(env.feature_dim, config.critic_hidden, 1, rng)
    policy = DeployPolicy(actor, K, B)

    feats = env.reset()
    cost_curve = np.empty(config.iterations)
    anneal = max(1, int(config.noise_anneal_frac * config.iterations))
    blowups = 0
    for it in range(config.iterations):
        noise = config.noise_scale * max(0.0, 1.0 - it / anneal)

        samples = []
        for _ in range(config.batch_size):
            action, cache = policy.sample(feats, noise, rng)
            sol = env.solution_from_action(*action)
            cost, _ = env.normalized_cost(sol)
            samples.append((cache, sol, cost))
        rewards = np.array([-cost for _, _, cost in samples])

        # critic regression on a TD(0) target for the committed transition
        v, acts_c = critic.forward(feats)
        v_next, _ = critic.forward(env.features(samples[0][1]))
        target = rewards[0] + config.discount * float(v_next[0])
        gW_c, gb_c = critic.gradients(acts_c, np.array([float(v[0]) - target]))
        critic.adam_step(gW_c, gb_c, config.learning_rate)

        # the actor's advantage is the batch-centered immediate reward: the
        # joint action fully determines the next solution, so continuation
        # values are action-independent and only add estimation noise
        if config.batch_size > 1:
            advantages = rewards - rewards.mean()
        else:
            advantages = rewards - float(v[0])

        # one shared forward pass: exploration noise is added after the net
        acts_a = samples[0][0]["acts"]
        grad_logits = np.zeros(B + K * B)
        for (cache, _, _), adv in zip(samples, advantages):
            grad_logits -= (adv / config.batch_size) * policy.score_gradient(cache)
        gW_a, gb_a = actor.gradients(acts_a, grad_logits)
        actor.adam_step(gW_a, gb_a, config.learning_rate)

        commit_sol, commit_cost = samples[0][1], samples[0][2]
        cost_curve[it] = commit_cost
        env.solution = commit_sol
        env._resample_dynamics()
        feats = env.features()

        if not np.isfinite(cost_curve[it]):
            raise TrainingFailureError(f"cost became non-finite at iteration {it}")
        if cost_curve[it] > 10.0 * max(cost_curve[0], 1e-12):
            blowups += 1
            if blowups >= 100:
                raise TrainingFailureError(
                    f"cost stayed above 10x initial for 100 iterations (it={it})")
        else:
            blowups = 0

        if (it + 1) % config.episode_length == 0:
            feats = env.reset()
    return TrainResult(policy=policy, cost_curve=cost_curve, critic=critic)


def actor_critic_train(env: PlacementEnv, config: LearnerConfig,
                       seed) -> TrainResult:
    """Advantage actor-critic with annealed logit noise and restarts.

    Each gradient step averages the score gradient over a small batch of
    actions sampled at the current state; the first sample is the one the
    environment commits to. config.restarts independent trainings run back
    to back and the one whose greedy solution scores best is returned.
    Deterministic given the seed. Raises TrainingFailureError when the cost
    curve goes non-finite or stays above ten times its initial value for 100
    consecutive iterations.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    best = None
    best_obj = np.inf
    for _ in range(config.restarts):
        result = _train_once(env, config, rng)
        obj, _ = env.normalized_cost(result.policy.greedy_solution(env))
        if obj < best_obj:
            best, best_obj = result, obj
    return best


# ---------------------------------------------------------------------------
# scenario sampling


@dataclass(frozen=True)
class ScenarioParams:
    """One seeded deployment instance: topology plus drawn data sizes."""

    topo: Topology
    lat: LatencyParams
    radio: RadioParams


def sample_scenario(seed, topo_config: TopologyConfig, radio: RadioParams,
                    history_bits_range=(1e6, 1e7), update_bits_range=(1e4, 1e5),
                    backhaul_coeff: float = 1e-11,
                    cycles_per_bit: float = 1000.0) -> ScenarioParams:
    """Topology plus per-scenario data sizes drawn from the given ranges."""
    rng = np.random.default_rng(seed)
    topo = sample_topology(rng, topo_config)
    hist = rng.uniform(*history_bits_range)
    upd = rng.uniform(*update_bits_range)
    lat = LatencyParams(history_bits=hist, update_bits=min(upd, hist),
                        backhaul_coeff=backhaul_coeff, cycles_per_bit=cycles_per_bit)
    return ScenarioParams(topo=topo, lat=lat, radio=radio)
