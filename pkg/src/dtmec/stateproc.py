"""Stochastic models for the physical-twin content process and update delivery.

The content process is a symmetric two-state chain that flips with probability
q each slot; its d-step return probability is what makes the change
probability of a delivered sample depend only on the sample's age.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise InvalidParameterError(f"{name} must lie in [0, 1], got {value!r}")


def return_probability(q: float, delta):
    """Probability that the content equals its value `delta` slots earlier.

    Closed form (1 + (1-2q)^delta) / 2 for the symmetric two-state chain.
    `delta` may be a nonnegative int or an integer array.
    """
    _check_prob("q", q)
    d = np.asarray(delta)
    if not np.issubdtype(d.dtype, np.integer):
        raise InvalidParameterError(f"delta must be integer, got dtype {d.dtype}")
    if np.any(d < 0):
        raise InvalidParameterError("delta must be >= 0")
    out = (1.0 + np.power(1.0 - 2.0 * q, d)) / 2.0
    return float(out) if np.isscalar(delta) or d.ndim == 0 else out


def change_probability(q: float, delta):
    """Probability that a sample aged `delta` slots differs from the current content."""
    return 1.0 - return_probability(q, delta)


def outage_success_probability(snr_threshold: float, mean_snr: float) -> float:
    """Delivery success under exponential (Rayleigh-power) fading: P[SNR > threshold]."""
    if snr_threshold < 0:
        raise InvalidParameterError(f"snr_threshold must be >= 0, got {snr_threshold}")
    if mean_snr <= 0:
        raise InvalidParameterError(f"mean_snr must be > 0, got {mean_snr}")
    return math.exp(-snr_threshold / mean_snr)


@dataclass
class ContentChain:
    """Binary physical-twin content with per-slot flip probability.

    Each simulation replication owns its private instance; the pure
    probability functions above are freely shareable.
    """

    flip_prob: float
    current_state: int = 0

    def __post_init__(self) -> None:
        _check_prob("flip_prob", self.flip_prob)
        if self.current_state not in (0, 1):
            raise InvalidParameterError("current_state must be 0 or 1")


def step_content(chain: ContentChain, rng: np.random.Generator) -> int:
    """Advance the chain one slot; returns the new state."""
    if rng.random() < chain.flip_prob:
        chain.current_state = 1 - chain.current_state
    return chain.current_state


@dataclass(frozen=True)
class DeliveryModel:
    """Per-attempt update delivery success model.

    mode "fixed" uses p_tx directly; mode "rayleigh-outage" derives
    p_tx = exp(-snr_threshold / mean_snr) at construction.
    """

    mode: str
    p_tx: float
    snr_threshold: float | None = None
    mean_snr: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("fixed", "rayleigh-outage"):
            raise InvalidParameterError(f"unknown delivery mode {self.mode!r}")
        _check_prob("p_tx", self.p_tx)

    @classmethod
    def fixed(cls, p_tx: float) -> "DeliveryModel":
        return cls(mode="fixed", p_tx=p_tx)

    @classmethod
    def rayleigh_outage(cls, snr_threshold: float, mean_snr: float) -> "DeliveryModel":
        p = outage_success_probability(snr_threshold, mean_snr)
        return cls(mode="rayleigh-outage", p_tx=p,
                   snr_threshold=snr_threshold, mean_snr=mean_snr)


def draw_delivery(model: DeliveryModel, rng: np.random.Generator) -> bool:
    """One Bernoulli delivery attempt."""
    return bool(rng.random() < model.p_tx)
