"""Slotted Monte-Carlo engine for update policies against the content and
delivery processes.

Each slot: the content chain steps, the policy decides, a delivery coin is
flipped, and the (aoci, aoi) pair advances. The delivery coin is drawn every
slot whether or not a transmission happens, so the random streams stay
aligned across policies under a common seed (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .schedmdp import MdpSpec, PolicyTable, threshold_for
from .stateproc import ContentChain, DeliveryModel, draw_delivery, step_content

Z95 = 1.959963984540054   # two-sided 95% normal quantile


@dataclass(frozen=True)
class SlotRecord:
    t: int
    scheduled: int
    delivered: int
    changed: int
    aoi: int
    aoci: int


@dataclass(frozen=True)
class Metrics:
    avg_aoci: float
    avg_update_cost: float
    total_avg_cost: float
    update_rate: float
    ci_half_width: float = 0.0


@dataclass(frozen=True)
class MonteCarloResult:
    mean: Metrics
    ci: Metrics          # 95% half-widths, field by field
    num_runs: int


@dataclass(frozen=True)
class SimulationSetup:
    """Everything one replication needs besides the policy and the seed."""

    flip_prob: float
    delivery: DeliveryModel
    aoci_cap: int = 100
    aoi_cap: int = 100
    weight: float = 1.0
    update_cost: float = 12.0
    horizon_slots: int = 1000
    burn_in_slots: int = 0

    def __post_init__(self) -> None:
        if self.horizon_slots < 1:
            raise InvalidParameterError("horizon_slots must be >= 1")
        if self.burn_in_slots < 0:
            raise InvalidParameterError("burn_in_slots must be >= 0")
        if self.aoci_cap < 2 or self.aoi_cap < 2 or self.aoci_cap < self.aoi_cap:
            raise InvalidParameterError("caps must be >= 2 with aoci_cap >= aoi_cap")

    @classmethod
    def from_spec(cls, spec: MdpSpec, horizon_slots: int = 1000,
                  burn_in_slots: int = 0) -> "SimulationSetup":
        return cls(flip_prob=spec.content_q, delivery=DeliveryModel.fixed(spec.p_tx),
                   aoci_cap=spec.aoci_cap, aoi_cap=spec.aoi_cap, weight=spec.weight,
                   update_cost=spec.update_cost,
                   horizon_slots=horizon_slots, burn_in_slots=burn_in_slots)


# ---------------------------------------------------------------------------
# policies


class UpdatePolicy:
    """Decides per slot from (aoci, aoi) and, for genie policies, the true
    content vs. the last delivered content."""

    name = "policy"

    def decide(self, aoci: int, aoi: int, content: int, delivered_content: int) -> int:
        raise NotImplementedError

    def decide_batch(self, aoci, aoi, content, delivered_content):
        raise NotImplementedError


class _ZeroWait(UpdatePolicy):
    name = "zw"

    def decide(self, aoci, aoi, content, delivered_content):
        return 1

    def decide_batch(self, aoci, aoi, content, delivered_content):
        return np.ones_like(aoci)


class _SampleAtChange(UpdatePolicy):
    """Transmits only when the genie-visible content differs from the last
    delivered one; an idealized benchmark, not a state-feedback policy."""

    name = "sac"

    def decide(self, aoci, aoi, content, delivered_content):
        return int(content != delivered_content)

    def decide_batch(self, aoci, aoi, content, delivered_content):
        return (content != delivered_content).astype(np.int8)


class _Threshold(UpdatePolicy):
    name = "threshold"

    def __init__(self, thresholds: np.ndarray):
        # thresholds[d-1] = smallest aoci at which to transmit for aoi d;
        # entries above the aoci cap mean "never".
        self.thresholds = np.asarray(thresholds, dtype=float)

    def decide(self, aoci, aoi, content, delivered_content):
        return int(aoci >= self.thresholds[aoi - 1])

    def decide_batch(self, aoci, aoi, content, delivered_content):
        return (aoci >= self.thresholds[aoi - 1]).astype(np.int8)


class _TablePolicy(UpdatePolicy):
    name = "solved"

    def __init__(self, table: PolicyTable):
        self.table = table

    def decide(self, aoci, aoi, content, delivered_content):
        return int(self.table.actions[aoci - 1, aoi - 1])

    def decide_batch(self, aoci, aoi, content, delivered_content):
        return self.table.actions[aoci - 1, aoi - 1]


def zw_policy() -> UpdatePolicy:
    """Transmit every slot."""
    return _ZeroWait()


def sac_policy() -> UpdatePolicy:
    """Transmit iff the current content differs from the last delivered one."""
    return _SampleAtChange()


def threshold_policy(source, spec: MdpSpec | None = None) -> UpdatePolicy:
    """Threshold rule from a PolicyTable, a per-aoi threshold table, or a
    callable aoi -> threshold. A spec is needed to tabulate a callable."""
    if isinstance(source, PolicyTable):
        return _TablePolicy(source)
    if callable(source):
        if spec is None:
            raise InvalidParameterError("tabulating a threshold callable needs a spec")
        thr = [source(d) for d in range(1, spec.aoi_cap + 1)]
        thr = [spec.aoci_cap + 1 if t is None else t for t in thr]
        return _Threshold(np.asarray(thr))
    return _Threshold(np.asarray(source))


def optimal_threshold_policy(spec: MdpSpec) -> UpdatePolicy:
    """Threshold rule from the margin inequality, tabulated over aoi."""
    return threshold_policy(lambda d: threshold_for(d, spec), spec)


# ---------------------------------------------------------------------------
# scalar engine (trace-capable)


@dataclass
class PairProcesses:
    """Per-replication mutable state: the content chain and the DT-side copy."""

    chain: ContentChain
    delivery: DeliveryModel
    delivered_content: int = 0


def advance_slot(record: SlotRecord, action: int, proc: PairProcesses,
                 rng: np.random.Generator, aoci_cap: int, aoi_cap: int) -> SlotRecord:
    """Delivery attempt and aging for one slot, after the decision.

    The caller steps the content chain at the slot boundary (before the
    decision, so genie policies see the current slot's content); a scheduled
    transmission samples that fresh content. The AoCI resets only on a
    delivered content change; the AoI resets on any delivery. Both saturate
    at their caps.
    """
    content = proc.chain.current_state
    coin = draw_delivery(proc.delivery, rng)   # drawn every slot; see module note
    delivered = bool(action) and coin
    changed = delivered and (content != proc.delivered_content)
    if delivered:
        proc.delivered_content = content
    aoci = 1 if changed else min(record.aoci + 1, aoci_cap)
    aoi = 1 if delivered else min(record.aoi + 1, aoi_cap)
    return SlotRecord(t=record.t + 1, scheduled=int(action), delivered=int(delivered),
                      changed=int(changed), aoi=aoi, aoci=aoci)


@dataclass(frozen=True)
class ReplicationResult:
    metrics: Metrics
    trace: list | None = None


def run_replication(policy: UpdatePolicy, setup: SimulationSetup, seed,
                    collect_trace: bool = False) -> ReplicationResult:
    """One T-slot replication from a synced start (aoci=aoi=1)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chain = ContentChain(flip_prob=setup.flip_prob, current_state=0)
    proc = PairProcesses(chain=chain, delivery=setup.delivery,
                         delivered_content=chain.current_state)
    record = SlotRecord(t=0, scheduled=0, delivered=0, changed=0, aoi=1, aoci=1)
    trace = [] if collect_trace else None
    omega_c = setup.weight * setup.update_cost
    aoci_sum = 0.0
    sched_sum = 0
    measured = 0
    total_slots = setup.burn_in_slots + setup.horizon_slots
    for t in range(total_slots):
        step_content(proc.chain, rng)
        a = policy.decide(record.aoci, record.aoi, proc.chain.current_state,
                          proc.delivered_content)
        if t >= setup.burn_in_slots:
            aoci_sum += record.aoci
            sched_sum += a
            measured += 1
        record = advance_slot(record, a, proc, rng, setup.aoci_cap, setup.aoi_cap)
        if collect_trace:
            trace.append(record)
    avg_aoci = aoci_sum / measured
    avg_cost = omega_c * sched_sum / measured
    metrics = Metrics(avg_aoci=avg_aoci, avg_update_cost=avg_cost,
                      total_avg_cost=avg_aoci + avg_cost,
                      update_rate=sched_sum / measured)
    return ReplicationResult(metrics=metrics, trace=trace)


# ---------------------------------------------------------------------------
# vectorized Monte Carlo


def run_monte_carlo(policy: UpdatePolicy, setup: SimulationSetup, num_runs: int,
                    seed) -> MonteCarloResult:
    """num_runs independent replications advanced in lockstep.

    Deterministic given the seed; aggregation is a plain mean, so it is
    independent of replication order by construction.
    """
    if num_runs < 1:
        raise InvalidParameterError("num_runs must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    R = num_runs
    q = setup.flip_prob
    p_tx = setup.delivery.p_tx
    omega_c = setup.weight * setup.update_cost

    aoci = np.ones(R, dtype=np.int64)
    aoi = np.ones(R, dtype=np.int64)
    content = np.zeros(R, dtype=np.int8)
    delivered_content = np.zeros(R, dtype=np.int8)
    aoci_sum = np.zeros(R)
    sched_sum = np.zeros(R)

    total_slots = setup.burn_in_slots + setup.horizon_slots
    for t in range(total_slots):
        flips = rng.random(R) < q
        content = np.where(flips, 1 - content, content)
        a = policy.decide_batch(aoci, aoi, content, delivered_content)
        coin = rng.random(R) < p_tx
        delivered = (a == 1) & coin
        changed = delivered & (content != delivered_content)
        if t >= setup.burn_in_slots:
            aoci_sum += aoci
            sched_sum += a
        delivered_content = np.where(delivered, content, delivered_content)
        aoci = np.where(changed, 1, np.minimum(aoci + 1, setup.aoci_cap))
        aoi = np.where(delivered, 1, np.minimum(aoi + 1, setup.aoi_cap))

    T = setup.horizon_slots
    per_aoci = aoci_sum / T
    per_rate = sched_sum / T
    per_cost = omega_c * per_rate
    per_total = per_aoci + per_cost

    def half_width(x):
        if R == 1:
            return 0.0
        return float(Z95 * np.std(x, ddof=1) / math.sqrt(R))

    mean = Metrics(avg_aoci=float(per_aoci.mean()),
                   avg_update_cost=float(per_cost.mean()),
                   total_avg_cost=float(per_total.mean()),
                   update_rate=float(per_rate.mean()),
                   ci_half_width=half_width(per_total))
    ci = Metrics(avg_aoci=half_width(per_aoci),
                 avg_update_cost=half_width(per_cost),
                 total_avg_cost=half_width(per_total),
                 update_rate=half_width(per_rate),
                 ci_half_width=0.0)
    return MonteCarloResult(mean=mean, ci=ci, num_runs=R)


# ---------------------------------------------------------------------------
# trace validation


def validate_trace(trace, setup: SimulationSetup) -> None:
    """Checks slot-to-slot legality of a recorded trace; raises on violation."""
    prev_aoci, prev_aoi = 1, 1
    for rec in trace:
        if rec.delivered and not rec.scheduled:
            raise AssertionError(f"slot {rec.t}: delivered without scheduling")
        if rec.changed and not rec.delivered:
            raise AssertionError(f"slot {rec.t}: content change flagged without delivery")
        if rec.aoci < rec.aoi:
            raise AssertionError(f"slot {rec.t}: aoci {rec.aoci} < aoi {rec.aoi}")
        expect_aoci = 1 if rec.changed else min(prev_aoci + 1, setup.aoci_cap)
        expect_aoi = 1 if rec.delivered else min(prev_aoi + 1, setup.aoi_cap)
        if rec.aoci != expect_aoci or rec.aoi != expect_aoi:
            raise AssertionError(
                f"slot {rec.t}: transition ({prev_aoci},{prev_aoi}) -> "
                f"({rec.aoci},{rec.aoi}) illegal for d={rec.delivered} c={rec.changed}")
        prev_aoci, prev_aoi = rec.aoci, rec.aoi
