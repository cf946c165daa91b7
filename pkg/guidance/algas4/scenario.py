"""Descent profiles, sensor readings and fault injection for the four corners.

Ticks run from 1 to ``duration_ticks``; tick 0 is the initial altitude. All
randomness comes from the scenario seed: every (corner, sensor) pair and
every jamming fault draws from its own sub-stream, so adding a fault never
perturbs the other streams.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .core import CORE_COUNT, LIDAR_BITS, RADAR_BITS
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_TICKS_PER_UNIT = 100
MAX_TRUTH = 1.0 - 2.0**-16


class ProfileKind(str, Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"
    HOLD = "hold"


@dataclass(frozen=True)
class DescentProfile:
    """Open-loop altitude profile; only the parameter of `kind` is used."""

    kind: ProfileKind = ProfileKind.LINEAR
    rate: float = 0.0
    tau: float = 1.0
    level: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        if self.kind is ProfileKind.EXPONENTIAL and self.tau <= 0:
            raise ConfigurationError(f"exponential tau must be > 0, got {self.tau}")

    @classmethod
    def linear(cls, rate: float) -> "DescentProfile":
        return cls(ProfileKind.LINEAR, rate=rate)

    @classmethod
    def exponential(cls, tau: float) -> "DescentProfile":
        return cls(ProfileKind.EXPONENTIAL, tau=tau)

    @classmethod
    def hold(cls, level: float) -> "DescentProfile":
        return cls(ProfileKind.HOLD, level=level)

    def altitude(self, initial: float, tick: int) -> float:
        if self.kind is ProfileKind.HOLD:
            return self.level
        if self.kind is ProfileKind.EXPONENTIAL:
            return initial * math.exp(-tick / self.tau)
        return initial - self.rate * tick


class Sensor(str, Enum):
    LIDAR = "lidar"
    RADAR = "radar"


@dataclass(frozen=True)
class SensorModel:
    """Rangefinder quantizer with Gaussian noise in normalized units."""

    bits: int
    sigma: float = 0.0

    @property
    def full_scale(self) -> int:
        return (1 << self.bits) - 1

    def code(self, value: float) -> int:
        """Nearest code for a normalized reading, clamped to the sensor range."""
        raw = math.floor(value * self.full_scale + 0.5)
        return min(max(raw, 0), self.full_scale)


@dataclass(frozen=True)
class ScenarioSpec:
    duration_ticks: int
    initial_altitude: float = 0.9
    profile: DescentProfile = DescentProfile.linear(0.0)
    corner_offsets: Tuple[float, ...] = (0.0,) * CORE_COUNT
    lidar: SensorModel = SensorModel(LIDAR_BITS)
    radar: SensorModel = SensorModel(RADAR_BITS)
    seed: int = 0
    ticks_per_unit: int = DEFAULT_TICKS_PER_UNIT

    def __post_init__(self):
        if self.duration_ticks < 1:
            raise ConfigurationError(
                f"duration_ticks must be >= 1, got {self.duration_ticks}"
            )
        if not 0.0 <= self.initial_altitude < 1.0:
            raise ConfigurationError(
                f"initial_altitude must be within [0, 1), got {self.initial_altitude}"
            )
        if len(self.corner_offsets) != CORE_COUNT:
            raise ConfigurationError(
                f"expected {CORE_COUNT} corner offsets, got {len(self.corner_offsets)}"
            )

    def model(self, sensor: Sensor) -> SensorModel:
        return self.lidar if Sensor(sensor) is Sensor.LIDAR else self.radar

    def to_ticks(self, time_units: float) -> int:
        """Map a time axis value (e.g. 3.0) to a tick index."""
        return int(round(time_units * self.ticks_per_unit))


class FaultKind(str, Enum):
    STUCK_AT = "stuck_at"
    OFFSET = "offset"
    JAM_NOISE = "jam_noise"
    DROPOUT = "dropout"


@dataclass(frozen=True)
class FaultSpec:
    """One sensor fault over the tick window [start_tick, end_tick).

    `value` is the stuck level, the offset delta or the jamming sigma, in
    normalized units; dropout ignores it.
    """

    corner: int
    sensor: Sensor
    start_tick: int
    end_tick: int
    kind: FaultKind
    value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sensor", Sensor(self.sensor))
        object.__setattr__(self, "kind", FaultKind(self.kind))
        if not 0 <= self.corner < CORE_COUNT:
            raise ConfigurationError(f"fault corner out of range: {self.corner}")
        if self.end_tick <= self.start_tick:
            raise ConfigurationError(
                f"fault window [{self.start_tick}, {self.end_tick}) is empty"
            )

    def active(self, tick: int) -> bool:
        return self.start_tick <= tick < self.end_tick

    def targets(self, corner: int, sensor: Sensor) -> bool:
        return self.corner == corner and self.sensor is Sensor(sensor)


@dataclass(frozen=True)
class CoreFailureSpec:
    """Core `core` stops at the start of tick `at_tick` and stays down."""

    core: int
    at_tick: int

    def __post_init__(self):
        if not 0 <= self.core < CORE_COUNT:
            raise ConfigurationError(f"failure core out of range: {self.core}")
        if self.at_tick < 1:
            raise ConfigurationError(
                f"failure at_tick must be >= 1, got {self.at_tick}"
            )


def gen_truth(spec: ScenarioSpec, tick: int) -> Tuple[float, ...]:
    """True normalized distance under each corner at `tick`, clamped to [0, 1)."""
    if not 0 <= tick <= spec.duration_ticks:
        raise ConfigurationError(
            f"tick {tick} outside scenario range [0, {spec.duration_ticks}]"
        )
    base = spec.profile.altitude(spec.initial_altitude, tick)
    return tuple(
        min(max(base + offset, 0.0), MAX_TRUTH) for offset in spec.corner_offsets
    )


def sensor_sample(
    true_distance: float,
    model: SensorModel,
    rng: Optional[np.random.Generator] = None,
) -> int:
    noise = 0.0
    if model.sigma > 0 and rng is not None:
        noise = model.sigma * rng.standard_normal()
    return model.code(true_distance + noise)


def inject_fault(
    code: int,
    fault: Optional[FaultSpec],
    tick: int,
    model: SensorModel,
    rng: Optional[np.random.Generator] = None,
    z: Optional[float] = None,
) -> int:
    """Apply `fault` to a sensor code when it is active at `tick`.

    Jamming adds `value * z` (normalized) where `z` is a standard-normal draw,
    taken from `rng` when not supplied.
    """
    if fault is None or not fault.active(tick):
        return code
    full_scale = model.full_scale
    if fault.kind is FaultKind.STUCK_AT:
        return model.code(fault.value)
    if fault.kind is FaultKind.DROPOUT:
        return full_scale
    if fault.kind is FaultKind.OFFSET:
        shifted = code + math.floor(fault.value * full_scale + 0.5)
    else:
        if z is None:
            z = rng.standard_normal() if rng is not None else 0.0
        shifted = code + math.floor(fault.value * z * full_scale + 0.5)
    return min(max(shifted, 0), full_scale)


# Sensor streams use spawn keys (0,) .. (7,); jam streams start with this
JAM_STREAM_KEY = CORE_COUNT * len(Sensor)


@dataclass
class ScenarioGenerator:
    """Raw code streams for all four corners, noise drawn up front."""

    spec: ScenarioSpec
    faults: Sequence[FaultSpec] = ()
    failures: Sequence[CoreFailureSpec] = ()
    _noise: Dict[Tuple[int, Sensor], np.ndarray] = field(init=False, repr=False)
    _jam: List[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        self.faults = tuple(self.faults)
        self.failures = tuple(self.failures)
        for fault in self.faults:
            if fault.start_tick < 0 or fault.end_tick > self.spec.duration_ticks + 1:
                raise ConfigurationError(
                    f"fault window [{fault.start_tick}, {fault.end_tick}) exceeds "
                    f"the {self.spec.duration_ticks}-tick scenario"
                )
        length = self.spec.duration_ticks + 1
        root = np.random.SeedSequence(self.spec.seed)
        sensor_seqs = root.spawn(CORE_COUNT * len(Sensor))
        self._noise = {}
        for index, seq in enumerate(sensor_seqs):
            corner, sensor = divmod(index, len(Sensor))
            key = (corner, list(Sensor)[sensor])
            self._noise[key] = np.random.default_rng(seq).standard_normal(length)
        # One stream per fault, keyed by its corner, sensor and window
        self._jam = [
            np.random.default_rng(
                np.random.SeedSequence(
                    root.entropy,
                    spawn_key=(
                        JAM_STREAM_KEY,
                        fault.corner,
                        list(Sensor).index(fault.sensor),
                        fault.start_tick,
                        fault.end_tick,
                    ),
                )
            ).standard_normal(length)
            for fault in self.faults
        ]
        logger.debug(
            "Scenario streams drawn",
            extra={
                "ticks": self.spec.duration_ticks,
                "seed": self.spec.seed,
                "faults": len(self.faults),
            },
        )

    def _code(self, corner: int, sensor: Sensor, truth: float, tick: int) -> int:
        model = self.spec.model(sensor)
        code = model.code(truth + model.sigma * self._noise[(corner, sensor)][tick])
        for index, fault in enumerate(self.faults):
            if fault.targets(corner, sensor):
                code = inject_fault(
                    code, fault, tick, model, z=float(self._jam[index][tick])
                )
        return code

    def readings(self, tick: int) -> List[Tuple[int, int]]:
        """(lidar, radar) code pair for each corner at `tick`."""
        truth = gen_truth(self.spec, tick)
        return [
            (
                self._code(corner, Sensor.LIDAR, truth[corner], tick),
                self._code(corner, Sensor.RADAR, truth[corner], tick),
            )
            for corner in range(CORE_COUNT)
        ]

    def failures_at(self, tick: int) -> List[int]:
        return sorted({f.core for f in self.failures if f.at_tick == tick})

    def frame(self) -> pd.DataFrame:
        """Every reading of the run, one row per (tick, corner)."""
        rows = []
        for tick in range(1, self.spec.duration_ticks + 1):
            for corner, (lidar, radar) in enumerate(self.readings(tick)):
                rows.append(
                    {
                        "tick": tick,
                        "core_id": corner,
                        "raw_lidar": lidar,
                        "raw_radar": radar,
                    }
                )
        return pd.DataFrame(rows, columns=["tick", "core_id", "raw_lidar", "raw_radar"])
