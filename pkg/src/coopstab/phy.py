"""Rayleigh-fading outage model for the four links of the PU/SU pair.

A link is in outage when its fixed transmission rate exceeds the
instantaneous capacity ``W log2(1 + |h|^2 P / N0)`` with ``|h|^2``
exponentially distributed, which gives::

    P_out = 1 - exp(-(2**(r/W) - 1) / snr)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

LINKS = ("ps_pd", "ps_ss", "ss_sd", "ss_pd")


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class LinkBudget:
    rate_bits_per_sec: float
    bandwidth_hz: float
    mean_snr: float  # linear, sigma^2 * P / N0

    def __post_init__(self):
        rate = _finite("rate_bits_per_sec", self.rate_bits_per_sec)
        bw = _finite("bandwidth_hz", self.bandwidth_hz)
        # mean_snr may be +inf (noiseless limit)
        snr = float(self.mean_snr)
        if math.isnan(snr):
            raise ValueError("mean_snr must not be NaN")
        if bw <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if rate < 0:
            raise ValueError("rate_bits_per_sec must be non-negative")
        if snr < 0:
            raise ValueError("mean_snr must be non-negative")

    @property
    def spectral_efficiency(self) -> float:
        return self.rate_bits_per_sec / self.bandwidth_hz


def outage_probability(link: LinkBudget) -> float:
    """Probability that ``link`` cannot carry its rate in a given slot."""
    return outage_from_efficiency(link.spectral_efficiency, link.mean_snr)


def outage_from_efficiency(efficiency: float, snr: float) -> float:
    """Outage probability for spectral efficiency ``r/W`` at mean SNR ``snr``."""
    if efficiency == 0:
        return 0.0
    if snr == 0:
        return 1.0
    if math.isinf(snr):
        return 0.0
    threshold = math.expm1(efficiency * math.log(2.0))
    return -math.expm1(-threshold / snr)


class LinkOutages(NamedTuple):
    ps_pd: float
    ps_ss: float
    ss_sd: float
    ss_pd: float


@dataclass(frozen=True)
class SlotGeometry:
    """Slot timing and energy constants shared by all four links.

    ``mean_gain`` maps each of :data:`LINKS` to the mean channel power gain.
    """

    packet_bits: float
    slot_seconds: float
    sensing_seconds: float
    bandwidth_hz: float
    energy_per_packet: float
    noise_power: float
    mean_gain: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("packet_bits", "slot_seconds", "sensing_seconds",
                     "bandwidth_hz", "energy_per_packet", "noise_power"):
            _finite(name, getattr(self, name))
        if self.packet_bits <= 0:
            raise ValueError("packet_bits must be positive")
        if self.energy_per_packet <= 0:
            raise ValueError("energy_per_packet must be positive")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if not 0 <= self.sensing_seconds < self.slot_seconds:
            raise ValueError("sensing time must satisfy 0 <= tau < T")
        missing = set(LINKS) - set(self.mean_gain)
        if missing:
            raise ValueError(f"mean_gain missing links: {sorted(missing)}")
        for k, g in self.mean_gain.items():
            if _finite(f"mean_gain[{k}]", g) < 0:
                raise ValueError(f"mean_gain[{k}] must be non-negative")

    @property
    def primary_rate(self) -> float:
        return self.packet_bits / self.slot_seconds

    @property
    def secondary_rate(self) -> float:
        return self.packet_bits / (self.slot_seconds - self.sensing_seconds)

    @property
    def secondary_power(self) -> float:
        return self.energy_per_packet / (self.slot_seconds - self.sensing_seconds)


def scenario_links(geom: SlotGeometry, primary_power: float) -> LinkOutages:
    """Outage probabilities of ps->pd, ps->ss, ss->sd and ss->pd.

    The primary transmits at ``b/T`` with ``primary_power`` watts; the
    secondary transmits at ``b/(T - tau)`` spending one energy packet over
    the post-sensing part of the slot.
    """
    primary_power = _finite("primary_power", primary_power)
    if primary_power < 0:
        raise ValueError("primary_power must be non-negative")
    out = {}
    for link in LINKS:
        if link.startswith("ps"):
            rate, power = geom.primary_rate, primary_power
        else:
            rate, power = geom.secondary_rate, geom.secondary_power
        snr = geom.mean_gain[link] * power / geom.noise_power
        out[link] = outage_probability(LinkBudget(rate, geom.bandwidth_hz, snr))
    return LinkOutages(**out)


def outages_from_snr(
    spectral_efficiency: float,
    sensing_fraction: float,
    snr: Mapping[str, float],
) -> LinkOutages:
    """Outages when mean SNRs are given directly, as in the figure presets.

    ``spectral_efficiency`` is ``R = b/(T W)``; secondary links carry
    ``R / (1 - tau/T)``.
    """
    if not 0 <= sensing_fraction < 1:
        raise ValueError("sensing_fraction must lie in [0, 1)")
    if spectral_efficiency < 0:
        raise ValueError("spectral_efficiency must be non-negative")
    r_s = spectral_efficiency / (1.0 - sensing_fraction)
    return LinkOutages(
        ps_pd=outage_from_efficiency(spectral_efficiency, snr["ps_pd"]),
        ps_ss=outage_from_efficiency(spectral_efficiency, snr["ps_ss"]),
        ss_sd=outage_from_efficiency(r_s, snr["ss_sd"]),
        ss_pd=outage_from_efficiency(r_s, snr["ss_pd"]),
    )
