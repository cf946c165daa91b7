"""Adaptive Prognostic Malfunction Unit.

Every tick the absolute lidar/radar discrepancy |S1 - S2| is written into a
16-slot FIFO-like ring. The frame size activator selects how many of the
newest slots (the effective window width, eww) take part in the verdict. The
windowed statistic is compared against a per-eww threshold from a lookup
table; the comparison is strict. The unit is division-free: sums, counts and
compares only.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from .errors import ConfigurationError, FormatMismatchError
from .numerics import (
    COUNT32,
    U0_16,
    WIDE_U16_16,
    FixedSample,
    QFormat,
    abs_diff,
    quantize,
    saturate,
)

logger = logging.getLogger(__name__)

MAX_SLOTS = 16
MIN_DECISION_DEPTH = 4
DEFAULT_TOLERANCE = 0.02

_SLOT_MASK = MAX_SLOTS - 1


class ApmuMode(str, Enum):
    SUM = "sum"
    COUNT = "count"


class ApmuStatus(str, Enum):
    WARMUP = "Warmup"
    ACTIVE = "Active"


def statistic_format(mode: ApmuMode) -> QFormat:
    return WIDE_U16_16 if mode is ApmuMode.SUM else COUNT32


def default_threshold_lut(
    mode: ApmuMode, per_sample_tolerance: FixedSample
) -> Tuple[FixedSample, ...]:
    """Threshold for every eww in 1..16.

    Sum mode scales the tolerance with the window (eww x tolerance); count
    mode alarms once more than half of the window exceeds the tolerance.
    """
    fmt = statistic_format(mode)
    if mode is ApmuMode.SUM:
        values = [eww * per_sample_tolerance.raw for eww in range(1, MAX_SLOTS + 1)]
    else:
        values = [eww >> 1 for eww in range(1, MAX_SLOTS + 1)]
    return tuple(FixedSample(saturate(v, fmt), fmt) for v in values)


def eww_from_mask(mask: int) -> int:
    """Window width selected by a contiguous newest-k FSAU mask."""
    if mask <= 0 or mask >= (1 << MAX_SLOTS):
        raise ConfigurationError(
            f"FSAU mask {mask:#x} must select between 1 and {MAX_SLOTS} slots"
        )
    if mask & (mask + 1):
        raise ConfigurationError(
            f"FSAU mask {mask:#06x} is not a contiguous newest-slot window"
        )
    return mask.bit_length()


@dataclass(frozen=True)
class ApmuConfig:
    """Window width, threshold LUT and statistic mode of one APMU."""

    eww: int
    threshold_lut: Tuple[FixedSample, ...]
    mode: ApmuMode = ApmuMode.SUM
    per_sample_tolerance: FixedSample = quantize(DEFAULT_TOLERANCE)

    def __post_init__(self):
        object.__setattr__(self, "mode", ApmuMode(self.mode))
        if not isinstance(self.eww, int) or not 1 <= self.eww <= MAX_SLOTS:
            raise ConfigurationError(
                f"eww must be within [1, {MAX_SLOTS}], got {self.eww}"
            )
        if len(self.threshold_lut) != MAX_SLOTS:
            raise ConfigurationError(
                f"threshold LUT needs {MAX_SLOTS} entries, "
                f"got {len(self.threshold_lut)}"
            )
        fmt = statistic_format(self.mode)
        for eww, entry in enumerate(self.threshold_lut, start=1):
            if entry is None:
                raise ConfigurationError(f"threshold LUT has no entry for eww={eww}")
            if entry.format != fmt:
                raise ConfigurationError(
                    f"threshold for eww={eww} must be {fmt}, got {entry.format}"
                )
        if self.per_sample_tolerance.format != U0_16:
            raise ConfigurationError("per_sample_tolerance must be U0.16")

    @classmethod
    def from_mask(
        cls,
        mask: int,
        threshold_lut: Optional[Sequence[FixedSample]] = None,
        mode: ApmuMode = ApmuMode.SUM,
        per_sample_tolerance: FixedSample = quantize(DEFAULT_TOLERANCE),
    ) -> "ApmuConfig":
        return apmu_configure(
            eww_from_mask(mask), threshold_lut, mode, per_sample_tolerance
        )

    @property
    def high_sensitivity(self) -> bool:
        """Windows shallower than the minimum decision depth raise false alarms."""
        return self.eww < MIN_DECISION_DEPTH

    @property
    def threshold(self) -> FixedSample:
        return self.threshold_lut[self.eww - 1]

    @property
    def activation_mask(self) -> int:
        return (1 << self.eww) - 1


def apmu_configure(
    eww: int,
    threshold_lut: Optional[Sequence[FixedSample]] = None,
    mode: ApmuMode = ApmuMode.SUM,
    per_sample_tolerance: FixedSample = quantize(DEFAULT_TOLERANCE),
) -> ApmuConfig:
    """Validate an APMU configuration, filling the default LUT when none is given."""
    mode = ApmuMode(mode)
    if threshold_lut is None:
        threshold_lut = default_threshold_lut(mode, per_sample_tolerance)
    config = ApmuConfig(eww, tuple(threshold_lut), mode, per_sample_tolerance)
    if config.high_sensitivity:
        logger.warning(
            "APMU window below minimum decision depth; expect more false alarms",
            extra={"eww": eww, "min_decision_depth": MIN_DECISION_DEPTH},
        )
    return config


@dataclass(frozen=True)
class ApmuVerdict:
    effective_weight: FixedSample
    threshold: FixedSample
    alarm: bool
    status: ApmuStatus


class ApmuState:
    """The 16-slot discrepancy ring and its write pointer."""

    def __init__(self):
        self.reset()

    def reset(self) -> "ApmuState":
        self.ring: List[int] = [0] * MAX_SLOTS
        self.write_index = 0
        self.samples_seen = 0
        return self

    @property
    def slots(self) -> Tuple[FixedSample, ...]:
        return tuple(FixedSample(raw, U0_16) for raw in self.ring)

    def newest(self, count: int) -> List[int]:
        """Raw |dS| values of the newest `count` written slots, newest first."""
        count = min(count, self.samples_seen, MAX_SLOTS)
        return [
            self.ring[(self.write_index - 1 - i) & _SLOT_MASK] for i in range(count)
        ]

    def status(self, config: ApmuConfig) -> ApmuStatus:
        if self.samples_seen < config.eww:
            return ApmuStatus.WARMUP
        return ApmuStatus.ACTIVE

    def effective_weight(self, config: ApmuConfig) -> FixedSample:
        """Windowed statistic over the newest eww slots.

        During warm-up the value covers the partial window and is only
        meaningful for diagnostics; check `status` first.
        """
        window = self.newest(config.eww)
        fmt = statistic_format(config.mode)
        acc = 0
        if config.mode is ApmuMode.SUM:
            for value in window:
                acc = saturate(acc + value, fmt)
        else:
            tolerance = config.per_sample_tolerance.raw
            for value in window:
                if value > tolerance:
                    acc = saturate(acc + 1, fmt)
        return FixedSample(acc, fmt)

    def step(
        self, config: ApmuConfig, s1: FixedSample, s2: FixedSample
    ) -> ApmuVerdict:
        if s1.format != U0_16 or s2.format != U0_16:
            raise FormatMismatchError("APMU expects canonical U0.16 samples")
        self.ring[self.write_index] = abs_diff(s1, s2).raw
        self.write_index = (self.write_index + 1) & _SLOT_MASK
        self.samples_seen += 1
        return self.verdict(config)

    def verdict(self, config: ApmuConfig) -> ApmuVerdict:
        weight = self.effective_weight(config)
        status = self.status(config)
        alarm = status is ApmuStatus.ACTIVE and weight.raw > config.threshold.raw
        return ApmuVerdict(weight, config.threshold, alarm, status)

    def resize(self, config: ApmuConfig, new_eww: int) -> ApmuConfig:
        """New window width over the same ring contents."""
        if not isinstance(new_eww, int) or not 1 <= new_eww <= MAX_SLOTS:
            raise ConfigurationError(
                f"eww must be within [1, {MAX_SLOTS}], got {new_eww}"
            )
        resized = replace(config, eww=new_eww)
        if resized.high_sensitivity:
            logger.warning(
                "APMU resized below minimum decision depth",
                extra={"eww": new_eww, "min_decision_depth": MIN_DECISION_DEPTH},
            )
        return resized
