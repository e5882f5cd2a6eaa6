"""Wireless link model: gains, Shannon rate, per-user time and energy.

All quantities are linear SI units (W, Hz, W/Hz, bits, s, J). dBm/dB
conversion happens once, when the configuration is loaded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Empirical macro-cell path loss, PL(d) = a + b log10(d_km) dB.
PATH_LOSS_INTERCEPT_DB = 128.1
PATH_LOSS_SLOPE_DB = 37.6

GAIN_MODES = ("simple", "empirical")


class ChannelDomainError(ValueError):
    pass


class InfeasibleLinkError(ChannelDomainError):
    """A selected user has zero achievable rate."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    if watt <= 0:
        return -math.inf
    return 10.0 * math.log10(watt) + 30.0


@dataclass(frozen=True)
class RadioConstants:
    noise_psd_N0: float = dbm_to_watt(-174.0)  # W/Hz
    interference_I: float = 0.0  # W
    bandwidth_cap_Bmax: float = 10e6  # Hz
    power_cap_Pmax: float = dbm_to_watt(10.0)  # W
    shadow_fading_db_sigma: float = 8.0

    def __post_init__(self):
        for name in ("noise_psd_N0", "bandwidth_cap_Bmax", "power_cap_Pmax", "shadow_fading_db_sigma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ChannelDomainError(f"{name} must be positive, got {v!r}")
        if not (math.isfinite(self.interference_I) and self.interference_I >= 0):
            raise ChannelDomainError("interference_I must be >= 0")


@dataclass
class UserChannelState:
    distance_d: float
    rayleigh_r: float
    shadow_db: float
    mode: str = "empirical"

    @property
    def gain_h(self) -> float:
        # derived on access so it can never go stale
        return channel_gain(self.distance_d, self.rayleigh_r, self.shadow_db, self.mode)


@dataclass(frozen=True)
class LinkAllocation:
    selected_beta: int
    power_P: float
    bandwidth_B: float
    compression_o: float
    payload_Z: float

    def __post_init__(self):
        if self.selected_beta not in (0, 1):
            raise ChannelDomainError("selected_beta must be 0 or 1")
        if not self.power_P >= 0:
            raise ChannelDomainError("power_P must be >= 0")
        if not self.bandwidth_B >= 0:
            raise ChannelDomainError("bandwidth_B must be >= 0")
        if not 0 < self.compression_o <= 1:
            raise ChannelDomainError("compression_o must lie in (0, 1]")
        if not self.payload_Z >= 0:
            raise ChannelDomainError("payload_Z must be >= 0")


def channel_gain(distance_km, rayleigh_sample, shadow_db=0.0, mode: str = "empirical"):
    """Large-scale times small-scale power gain.

    ``simple``: h = r / d^2.  ``empirical``: h = r * 10^(-(PL(d) + shadow) / 10).
    Works elementwise on arrays.
    """
    d = np.asarray(distance_km, dtype=float)
    if np.any(~(d > 0)):
        raise ChannelDomainError("distance must be positive")
    r = np.asarray(rayleigh_sample, dtype=float)
    if np.any(r < 0):
        raise ChannelDomainError("rayleigh sample must be >= 0")
    if mode == "simple":
        h = r * d ** -2.0
    elif mode == "empirical":
        loss_db = PATH_LOSS_INTERCEPT_DB + PATH_LOSS_SLOPE_DB * np.log10(d) + np.asarray(shadow_db, dtype=float)
        h = r * 10.0 ** (-loss_db / 10.0)
    else:
        raise ChannelDomainError(f"unknown gain mode {mode!r}; expected one of {GAIN_MODES}")
    return float(h) if np.ndim(h) == 0 else h


def achievable_rate(B, P, h, constants: RadioConstants):
    """Shannon rate B log2(1 + hP / (I + B N0)) in bit/s; B == 0 gives 0."""
    B = np.asarray(B, dtype=float)
    P = np.asarray(P, dtype=float)
    h = np.asarray(h, dtype=float)
    noise = constants.interference_I + B * constants.noise_psd_N0
    safe_noise = np.where(B > 0, noise, 1.0)
    # log1p keeps tiny SNRs from rounding to a zero rate
    rate = np.where(B > 0, B * np.log1p(h * P / safe_noise) / math.log(2.0), 0.0)
    return float(rate) if np.ndim(rate) == 0 else rate


def transmission_time(alloc: LinkAllocation, rate: float) -> float:
    if alloc.selected_beta == 0:
        return 0.0
    if not rate > 0:
        raise InfeasibleLinkError("selected user has zero achievable rate")
    return alloc.compression_o * alloc.payload_Z / rate


def transmission_energy(alloc: LinkAllocation, rate: float) -> float:
    return alloc.power_P * transmission_time(alloc, rate)


def total_energy(allocations: Sequence[LinkAllocation], rates: Sequence[float]) -> float:
    if len(allocations) != len(rates):
        raise ChannelDomainError("allocations and rates differ in length")
    return float(sum(transmission_energy(a, r) for a, r in zip(allocations, rates)))


def link_time_energy(beta, P, o, Z, rate):
    """Vectorised per-user (time, energy); unselected users give exactly 0.

    Selected users with zero rate get ``inf``; callers decide how to treat it.
    """
    beta = np.asarray(beta, dtype=float)
    rate = np.asarray(rate, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(beta > 0, np.where(rate > 0, np.asarray(o) * np.asarray(Z) / np.where(rate > 0, rate, 1.0), np.inf), 0.0)
    e = np.where(beta > 0, np.asarray(P, dtype=float) * t, 0.0)
    return t, e
