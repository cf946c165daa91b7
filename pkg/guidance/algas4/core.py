"""One ALGAS4 processing corner.

Per tick: the SIU normalizes the raw rangefinder codes and latches them; the
latched pair from the previous tick runs through both FIR filters, the FLS and
the APMU. The register boundary means a change on the sensor inputs shows up
in the outputs exactly one tick later, and the processing units stay idle on
the very first tick until some input activity has been recorded.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence

from .apmu import ApmuConfig, ApmuState, ApmuStatus, ApmuVerdict
from .errors import ConfigurationError, FailedCoreError
from .fir import FirFilter, default_coefficients
from .fls import FlsEngine, FlsStatus, default_engine
from .numerics import U0_16, FixedSample, saturate

logger = logging.getLogger(__name__)

CORE_COUNT = 4
LIDAR_BITS = 11
RADAR_BITS = 10


@dataclass(frozen=True, order=True)
class CoreId:
    index: int

    def __post_init__(self):
        if not 0 <= self.index < CORE_COUNT:
            raise ConfigurationError(
                f"core index must be within [0, {CORE_COUNT - 1}], got {self.index}"
            )

    @property
    def opposite(self) -> "CoreId":
        return CoreId((self.index + 2) % CORE_COUNT)

    def __int__(self) -> int:
        return self.index


def all_cores():
    return [CoreId(i) for i in range(CORE_COUNT)]


class CoreHealth(str, Enum):
    HEALTHY = "Healthy"
    FAILED = "Failed"


class SiuReading(NamedTuple):
    lidar: FixedSample
    radar: FixedSample
    clamped: bool


class SensorInterface:
    """Normalizes integer rangefinder codes to U0.16.

    Full scale maps to 1.0 (saturating to 1.0 - 1 LSB). The per-sensor
    reciprocal is baked at construction so ingestion is multiply-and-shift.
    """

    _RECIP_SHIFT = 16

    def __init__(self, lidar_bits: int = LIDAR_BITS, radar_bits: int = RADAR_BITS):
        self.lidar_full_scale = (1 << lidar_bits) - 1
        self.radar_full_scale = (1 << radar_bits) - 1
        self._lidar_recip = self._reciprocal(self.lidar_full_scale)
        self._radar_recip = self._reciprocal(self.radar_full_scale)

    @classmethod
    def _reciprocal(cls, full_scale: int) -> int:
        numerator = U0_16.one << cls._RECIP_SHIFT
        return (2 * numerator + full_scale) // (2 * full_scale)

    def _normalize(self, code: int, recip: int) -> FixedSample:
        half = 1 << (self._RECIP_SHIFT - 1)
        return FixedSample(
            saturate((code * recip + half) >> self._RECIP_SHIFT, U0_16), U0_16
        )

    def ingest(self, raw_lidar: int, raw_radar: int) -> SiuReading:
        lidar = min(max(int(raw_lidar), 0), self.lidar_full_scale)
        radar = min(max(int(raw_radar), 0), self.radar_full_scale)
        clamped = lidar != raw_lidar or radar != raw_radar
        return SiuReading(
            self._normalize(lidar, self._lidar_recip),
            self._normalize(radar, self._radar_recip),
            clamped,
        )


@dataclass(frozen=True)
class CoreOutput:
    tick: int
    core_id: CoreId
    raw_lidar: int
    raw_radar: int
    filtered_lidar: FixedSample
    filtered_radar: FixedSample
    crisp: FixedSample
    fls_status: FlsStatus
    apmu_verdict: ApmuVerdict
    warmup: bool
    siu_clamped: bool = False

    @property
    def distance(self) -> FixedSample:
        """Representative distance: the mean of the two filtered channels."""
        total = self.filtered_lidar.raw + self.filtered_radar.raw
        return FixedSample((total + 1) >> 1, U0_16)


class Core:
    """SIU, two FIR filters, FLS and APMU wired as one corner."""

    def __init__(
        self,
        core_id: CoreId,
        apmu_config: ApmuConfig,
        fir_coefficients: Optional[Sequence[FixedSample]] = None,
        engine: Optional[FlsEngine] = None,
        siu: Optional[SensorInterface] = None,
    ):
        self.core_id = core_id
        self._fir_coefficients = tuple(fir_coefficients or default_coefficients())
        self.engine = engine or default_engine()
        self.siu = siu or SensorInterface()
        self.initial_apmu_config = apmu_config
        self.reset()

    def reset(self) -> "Core":
        """Power-on state: registers zeroed, healthy."""
        self.fir_lidar = FirFilter(self._fir_coefficients)
        self.fir_radar = FirFilter(self._fir_coefficients)
        self.apmu = ApmuState()
        self.apmu_config = self.initial_apmu_config
        self.last_valid_crisp = FixedSample.zero(U0_16)
        self.tick_count = 0
        self.health = CoreHealth.HEALTHY
        self._latched: Optional[SiuReading] = None
        return self

    @property
    def is_healthy(self) -> bool:
        return self.health is CoreHealth.HEALTHY

    def fail(self) -> CoreHealth:
        if self.is_healthy:
            logger.warning("Core failed", extra={"core": self.core_id.index})
        self.health = CoreHealth.FAILED
        return self.health

    def resize_window(self, new_eww: int) -> ApmuConfig:
        self.apmu_config = self.apmu.resize(self.apmu_config, new_eww)
        return self.apmu_config

    def siu_ingest(self, raw_lidar: int, raw_radar: int) -> SiuReading:
        reading = self.siu.ingest(raw_lidar, raw_radar)
        if reading.clamped:
            logger.debug(
                "SIU clamped out-of-range code",
                extra={
                    "core": self.core_id.index,
                    "lidar": raw_lidar,
                    "radar": raw_radar,
                },
            )
        return reading

    def tick(self, raw_lidar: int, raw_radar: int) -> CoreOutput:
        if not self.is_healthy:
            raise FailedCoreError(f"core {self.core_id.index} has failed")
        self.tick_count += 1
        reading = self.siu_ingest(raw_lidar, raw_radar)
        latched, self._latched = self._latched, reading

        filtered_lidar = filtered_radar = FixedSample.zero(U0_16)
        crisp = self.last_valid_crisp
        status = FlsStatus.WARMUP
        verdict = None

        if latched is not None:
            filtered_lidar = self.fir_lidar.step(latched.lidar)
            filtered_radar = self.fir_radar.step(latched.radar)
            if self.fir_lidar.warm and self.fir_radar.warm:
                result = self.engine.evaluate(
                    filtered_lidar, filtered_radar, fallback=self.last_valid_crisp
                )
                status = result.status
                crisp = result.crisp
                if status is FlsStatus.VALID:
                    self.last_valid_crisp = crisp
                verdict = self.apmu.step(
                    self.apmu_config, filtered_lidar, filtered_radar
                )

        if verdict is None:
            verdict = self.apmu.verdict(self.apmu_config)

        warmup = status is FlsStatus.WARMUP or verdict.status is ApmuStatus.WARMUP
        return CoreOutput(
            tick=self.tick_count,
            core_id=self.core_id,
            raw_lidar=int(raw_lidar),
            raw_radar=int(raw_radar),
            filtered_lidar=filtered_lidar,
            filtered_radar=filtered_radar,
            crisp=crisp,
            fls_status=status,
            apmu_verdict=verdict,
            warmup=warmup,
            siu_clamped=reading.clamped,
        )
