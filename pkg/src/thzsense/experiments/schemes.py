"""Transmission schemes, the end-to-end delay model and the headline metrics.

Delay of one frame (uplink plus downlink)::

    2 * payload / rate + processing + queue wait + trainings * training_time

The queue is M/M/1 with arrivals ``U / frame_period`` and service rate
``mu``. :func:`e2e_delay` uses the mean wait ``rho / (mu (1 - rho))`` unless
a generator is passed, in which case the wait is sampled. A link that is
blocked while the scheme still points at it is an outage (infinite delay).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from ..channel import CarrierConfig, free_space_magnitude, thermal_noise_power


class SchemeKind(str, Enum):
    PROPOSED = "ProposedJSC"
    BEAM_TRACKING = "CommOnlyBeamTracking"
    STANDALONE = "StandaloneSensing"


@dataclass(frozen=True)
class Scheme:
    kind: SchemeKind
    training_s: float = 0.001
    coherence_s: float = 0.01
    reference_speed_mps: float = 1.25
    sensing_fraction: float = 0.0

    def __post_init__(self):
        if not 0 <= self.sensing_fraction <= 1:
            raise ValueError("sensing fraction must be in [0, 1]")
        if self.training_s < 0 or self.coherence_s <= 0:
            raise ValueError("training time must be >= 0 and coherence time > 0")

    def coherence_time(self, speed: float) -> float:
        """Beam coherence time; scales as 1/speed, infinite for static users."""
        if speed <= 0:
            return math.inf
        return self.coherence_s * self.reference_speed_mps / speed

    def overhead_fraction(self, speed: float = 1.25) -> float:
        if self.kind is SchemeKind.PROPOSED:
            return 0.0
        if self.kind is SchemeKind.STANDALONE:
            return self.sensing_fraction
        return min(1.0, self.training_s / self.coherence_time(speed))


def default_schemes(delay, schemes) -> dict[SchemeKind, Scheme]:
    """Schemes from the ``delay`` and ``schemes`` config sections."""
    common = dict(training_s=delay.training_s, coherence_s=delay.coherence_s,
                  reference_speed_mps=delay.reference_speed_mps)
    return {
        SchemeKind.PROPOSED: Scheme(SchemeKind.PROPOSED, **common),
        SchemeKind.BEAM_TRACKING: Scheme(SchemeKind.BEAM_TRACKING, **common),
        SchemeKind.STANDALONE: Scheme(SchemeKind.STANDALONE, sensing_fraction=schemes.sensing_fraction, **common),
    }


def link_snr(r, carrier: CarrierConfig, power_w: float = 1.0, M: int = 64, Q: int = 32):
    """Post-beamforming SNR of a LoS link of length ``r`` over the full band.

    Steering vectors are unit-norm, so aligned beams add the array gain
    ``M * Q`` explicitly.
    """
    r = np.asarray(r, dtype=float)
    k = float(np.interp(carrier.center_frequency, carrier.subcarrier_frequencies, carrier.absorption))
    g = free_space_magnitude(carrier.center_frequency, r, k)
    noise = thermal_noise_power(carrier.bandwidth, carrier.noise_figure_db, carrier.temperature_k)
    return power_w * g**2 * M * Q / noise


@dataclass
class FrameContext:
    rate_bps: float
    payload_bits: float = 1e6
    processing_s: float = 0.002
    users: int = 1
    frame_period_s: float = 0.05
    service_rate_hz: float = 450.0
    trainings: int = 0
    outage: bool = False


def utilization(users: int, frame_period_s: float, service_rate_hz: float) -> float:
    return users / frame_period_s / service_rate_hz


def mean_queue_wait(rho: float, mu: float) -> float:
    if rho >= 1:
        return math.inf
    return rho / (mu * (1 - rho))


def sample_queue_wait(rho: float, mu: float, rng: np.random.Generator, size=None):
    """M/M/1 waiting time: 0 w.p. 1 - rho, else exponential with rate mu (1 - rho)."""
    if rho >= 1:
        return np.full(size, np.inf) if size is not None else math.inf
    busy = rng.random(size) < rho
    wait = rng.exponential(1.0 / (mu * (1 - rho)), size)
    return np.where(busy, wait, 0.0) if size is not None else float(wait if busy else 0.0)


def base_delay(ctx: FrameContext, scheme: Scheme) -> float:
    """Everything except the queue wait."""
    if ctx.outage or ctx.rate_bps <= 0:
        return math.inf
    tx = 2.0 * ctx.payload_bits / ctx.rate_bps
    return tx + ctx.processing_s + ctx.trainings * scheme.training_s


def e2e_delay(ctx: FrameContext, scheme: Scheme, rng: np.random.Generator | None = None) -> float:
    rho = utilization(ctx.users, ctx.frame_period_s, ctx.service_rate_hz) if ctx.users else 0.0
    if rho >= 1:
        return math.inf
    wait = mean_queue_wait(rho, ctx.service_rate_hz) if rng is None else sample_queue_wait(rho, ctx.service_rate_hz, rng)
    return base_delay(ctx, scheme) + wait


def reliability(delays: Sequence[float], threshold: float) -> float:
    """Fraction of delays strictly below ``threshold``."""
    d = np.asarray(delays, dtype=float)
    if d.size == 0:
        raise ValueError("no delays to score")
    return float(np.mean(d < threshold))


def on_time_probability(base, threshold: float, rho: float, mu: float):
    """P(base + W < threshold) for the M/M/1 wait W, elementwise in ``base``.

    Averaging this over frames scores reliability without sampling the queue.
    """
    base = np.asarray(base, dtype=float)
    if rho >= 1:
        return np.zeros_like(base)
    slack = threshold - base
    with np.errstate(invalid="ignore", over="ignore"):
        p = 1.0 - rho * np.exp(-mu * (1 - rho) * np.where(slack > 0, slack, 0.0))
    return np.where(slack > 0, p, 0.0)


def spectral_efficiency(scheme: Scheme, snr, served=None, speed: float = 1.25) -> float:
    """``(1 - overhead) * mean log2(1 + SNR)``; unserved frames (outages) count as 0."""
    snr = np.asarray(snr, dtype=float)
    if snr.size == 0:
        raise ValueError("no frames to score")
    per = np.log2(1.0 + np.maximum(snr, 0.0))
    if served is not None:
        per = np.where(np.asarray(served, bool), per, 0.0)
    return float((1.0 - scheme.overhead_fraction(speed)) * per.mean())
