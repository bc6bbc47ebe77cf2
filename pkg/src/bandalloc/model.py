"""Physical-layer and queueing parameters of the cognitive radio network.

A :class:`SystemConfig` can be described either physically (bandwidths,
SNRs, channel variances, primary arrival rates) or through tabulated
band availabilities and non-outage probabilities.  When both descriptions
are present for the same entry they must agree to within 1e-12.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

AGREEMENT_TOL = 1e-12


class ModelError(ValueError):
    """Base class for invalid model parameters."""


class InvalidTimingError(ModelError):
    pass


class PrimaryUnstableError(ModelError):
    """Raised when a primary queue has lambda_p >= mu_p."""


class ConfigMismatchError(ModelError):
    """Raised when physical and tabulated parameters disagree."""


@dataclass(frozen=True)
class BandConfig:
    """One primary band and the primary user that owns it.

    ``availability`` and ``primary_success`` are the tabulated alternative
    to the physical fields.  A band with zero bandwidth is virtual.
    """

    bandwidth_hz: Optional[float] = None
    primary_arrival_rate: Optional[float] = None
    primary_snr: Optional[float] = None
    primary_channel_var: Optional[float] = None
    availability: Optional[float] = None
    primary_success: Optional[float] = None

    @property
    def is_virtual(self) -> bool:
        return self.bandwidth_hz is not None and self.bandwidth_hz == 0.0

    @property
    def is_physical(self) -> bool:
        return (
            self.bandwidth_hz is not None
            and self.primary_snr is not None
            and self.primary_channel_var is not None
        )


@dataclass(frozen=True)
class SuConfig:
    arrival_rate: float
    snr: Optional[float] = None
    channel_var_per_band: Optional[tuple[float, ...]] = None
    success_per_band: Optional[tuple[float, ...]] = None
    name: Optional[str] = None

    @property
    def is_physical(self) -> bool:
        return self.snr is not None and self.channel_var_per_band is not None


@dataclass(frozen=True)
class SystemConfig:
    num_bands: int
    num_sus: int
    slot_duration_s: float = 1e-3
    sensing_duration_s: float = 0.0
    packet_bits: float = 1000.0
    bands: tuple[BandConfig, ...] = field(default_factory=tuple)
    sus: tuple[SuConfig, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.num_bands < 1 or self.num_sus < 1:
            raise ModelError("need at least one band and one SU")
        if len(self.bands) != self.num_bands:
            raise ModelError(f"expected {self.num_bands} bands, got {len(self.bands)}")
        if len(self.sus) != self.num_sus:
            raise ModelError(f"expected {self.num_sus} SUs, got {len(self.sus)}")
        if self.slot_duration_s <= 0 or self.packet_bits <= 0:
            raise ModelError("slot duration and packet size must be positive")
        if self.sensing_duration_s < 0:
            raise InvalidTimingError("sensing duration must be non-negative")

    def su_name(self, k: int) -> str:
        return self.sus[k].name or f"s{k + 1}"

    @property
    def su_arrival_rates(self) -> np.ndarray:
        return np.array([su.arrival_rate for su in self.sus], dtype=float)

    def with_arrival_rates(self, rates: Sequence[float]) -> "SystemConfig":
        """Copy of the config with new secondary arrival rates."""
        if len(rates) != self.num_sus:
            raise ModelError("one rate per SU required")
        sus = tuple(replace(su, arrival_rate=float(r)) for su, r in zip(self.sus, rates))
        return replace(self, sus=sus)


@dataclass(frozen=True)
class SuccessMatrix:
    """Per-slot success probability of SU k on band j (rows are bands)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ModelError("success matrix must be two-dimensional")
        if np.any(v < 0) or np.any(v > 1):
            raise ModelError("success probabilities must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def num_bands(self) -> int:
        return self.values.shape[0]

    @property
    def num_sus(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_tables(cls, availability: Sequence[float], pout_bar) -> "SuccessMatrix":
        """Build from band availabilities and a bands x SUs non-outage table."""
        pi = np.asarray(availability, dtype=float)
        pbar = np.asarray(pout_bar, dtype=float)
        return cls(pi[:, None] * pbar)


def _check_timing(config: SystemConfig) -> None:
    if config.sensing_duration_s >= config.slot_duration_s:
        raise InvalidTimingError(
            f"sensing duration {config.sensing_duration_s} must be shorter "
            f"than the slot {config.slot_duration_s}"
        )


def secondary_rate(config: SystemConfig) -> float:
    """Bits per second an SU needs to fit one packet into T - tau."""
    _check_timing(config)
    return config.packet_bits / (config.slot_duration_s - config.sensing_duration_s)


def rayleigh_success(rate_bps: float, bandwidth_hz: float, snr: float, channel_var: float) -> float:
    """Probability that ``W log2(1 + snr * g) >= rate`` for g ~ Exp(mean channel_var)."""
    if bandwidth_hz == 0:
        return 0.0
    threshold = math.expm1(rate_bps / bandwidth_hz * math.log(2.0))
    return math.exp(-threshold / (snr * channel_var))


def _physical_secondary_success(config: SystemConfig, j: int, k: int) -> float:
    band, su = config.bands[j], config.sus[k]
    if band.bandwidth_hz == 0:
        return 0.0
    return rayleigh_success(
        secondary_rate(config), band.bandwidth_hz, su.snr, su.channel_var_per_band[j]
    )


def secondary_success_prob(config: SystemConfig, j: int, k: int) -> float:
    """Non-outage probability of SU ``k`` transmitting on band ``j``.

    Zero on virtual (zero-bandwidth) bands.
    """
    band, su = config.bands[j], config.sus[k]
    if band.is_virtual:
        return 0.0
    if su.success_per_band is not None:
        tab = float(su.success_per_band[j])
        if su.is_physical and band.bandwidth_hz is not None:
            phys = _physical_secondary_success(config, j, k)
            if abs(phys - tab) > AGREEMENT_TOL:
                raise ConfigMismatchError(
                    f"SU {k + 1} band {j + 1}: tabulated success {tab} != physical {phys}"
                )
        return tab
    if not su.is_physical or band.bandwidth_hz is None:
        raise ModelError(f"SU {k + 1} on band {j + 1}: no success probability available")
    return _physical_secondary_success(config, j, k)


def primary_success_prob(config: SystemConfig, j: int) -> float:
    """Mean service rate mu_p of the primary owning band ``j`` (perfect sensing)."""
    band = config.bands[j]
    if band.is_virtual:
        raise ModelError(f"band {j + 1} is virtual and has no primary transmitter")
    phys = None
    if band.is_physical:
        phys = rayleigh_success(
            config.packet_bits / config.slot_duration_s,
            band.bandwidth_hz,
            band.primary_snr,
            band.primary_channel_var,
        )
    if band.primary_success is not None:
        if phys is not None and abs(phys - band.primary_success) > AGREEMENT_TOL:
            raise ConfigMismatchError(
                f"band {j + 1}: tabulated primary success {band.primary_success} != physical {phys}"
            )
        return float(band.primary_success)
    if phys is None:
        raise ModelError(f"band {j + 1}: primary success probability unavailable")
    return phys


def primary_arrival_rate(config: SystemConfig, j: int) -> float:
    """Primary arrival rate, derived as (1 - pi) mu_p for tabulated bands."""
    band = config.bands[j]
    if band.primary_arrival_rate is not None:
        return float(band.primary_arrival_rate)
    if band.is_virtual:
        return 0.0
    if band.availability is None:
        raise ModelError(f"band {j + 1}: neither arrival rate nor availability given")
    return (1.0 - band.availability) * primary_success_prob(config, j)


def band_availability(config: SystemConfig, j: int) -> float:
    """Probability that the primary queue of band ``j`` is empty."""
    band = config.bands[j]
    if band.is_virtual:
        if band.primary_arrival_rate not in (None, 0.0):
            raise ModelError(f"virtual band {j + 1} cannot carry primary traffic")
        return 1.0
    derived = None
    if band.primary_arrival_rate is not None:
        lam = band.primary_arrival_rate
        mu = primary_success_prob(config, j)
        if lam >= mu:
            raise PrimaryUnstableError(
                f"band {j + 1}: primary arrival rate {lam} >= service rate {mu}"
            )
        derived = 1.0 - lam / mu
    if band.availability is not None:
        if derived is not None and abs(derived - band.availability) > AGREEMENT_TOL:
            raise ConfigMismatchError(
                f"band {j + 1}: tabulated availability {band.availability} != derived {derived}"
            )
        if not 0.0 < band.availability <= 1.0:
            raise PrimaryUnstableError(f"band {j + 1}: availability must lie in (0, 1]")
        return float(band.availability)
    if derived is None:
        raise ModelError(f"band {j + 1}: availability cannot be determined")
    return derived


def build_success_matrix(config: SystemConfig) -> SuccessMatrix:
    values = np.empty((config.num_bands, config.num_sus))
    for j in range(config.num_bands):
        pi = band_availability(config, j)
        for k in range(config.num_sus):
            values[j, k] = pi * secondary_success_prob(config, j, k)
    return SuccessMatrix(values)


def assignment_count(num_bands: int, num_sus: int) -> tuple[int, int]:
    """Number of one-to-one assignments (system S) and of free choices (system S-hat).

    Python integers are arbitrary precision, so large counts are exact.
    """
    if num_bands < 1 or num_sus < 1:
        raise ModelError("counts must be at least 1")
    if num_bands >= num_sus:
        count_s = math.perm(num_bands, num_sus)
    else:
        count_s = math.perm(num_sus, num_bands)
    return count_s, num_bands**num_sus
