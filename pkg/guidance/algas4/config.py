"""Run configuration for the ALGAS4 simulator.

Defines Pydantic models for every configurable unit and the JSON loader.
Process-level defaults come from the environment (optionally a .env file).
"""

import json
import os
from dataclasses import replace
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .apmu import (
    DEFAULT_TOLERANCE,
    MAX_SLOTS,
    ApmuConfig,
    ApmuMode,
    apmu_configure,
    statistic_format,
)
from .core import CORE_COUNT, LIDAR_BITS, RADAR_BITS
from .errors import ConfigError
from .fabric import packets_in_flight
from .fir import DEFAULT_CUTOFF, TAPS, design_lowpass, quantize_coefficients
from .fls import DEFAULT_CENTERS, DEFAULT_PEAKS, FlsEngine
from .numerics import FixedSample, quantize
from .scenario import (
    CoreFailureSpec,
    DescentProfile,
    FaultSpec,
    ScenarioSpec,
    SensorModel,
)

load_dotenv()


def default_workers() -> int:
    return max(1, int(os.getenv("ALGAS4_WORKERS", "1")))


def default_output_dir() -> Path:
    return Path(os.getenv("ALGAS4_OUTPUT_DIR", "output"))


class _Settings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ProfileSettings(_Settings):
    """Descent profile; `rate` per tick, `tau` in ticks."""

    kind: Literal["linear", "exponential", "hold"] = "linear"
    rate: float = Field(0.0, ge=0.0)
    tau: float = Field(1000.0, gt=0.0)
    level: float = Field(0.5, ge=0.0, lt=1.0)


class ScenarioSettings(_Settings):
    duration_ticks: int = Field(1000, ge=1)
    initial_altitude: float = Field(0.9, ge=0.0, lt=1.0)
    profile: ProfileSettings = ProfileSettings()
    corner_offsets: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    lidar_sigma: float = Field(0.002, ge=0.0)
    radar_sigma: float = Field(0.002, ge=0.0)
    lidar_bits: int = Field(LIDAR_BITS, ge=2, le=16)
    radar_bits: int = Field(RADAR_BITS, ge=2, le=16)
    seed: int = Field(0, ge=0, lt=2**64)
    ticks_per_unit: int = Field(100, ge=1)

    def to_spec(self) -> ScenarioSpec:
        profile = DescentProfile(
            self.profile.kind,
            rate=self.profile.rate,
            tau=self.profile.tau,
            level=self.profile.level,
        )
        return ScenarioSpec(
            duration_ticks=self.duration_ticks,
            initial_altitude=self.initial_altitude,
            profile=profile,
            corner_offsets=tuple(self.corner_offsets),
            lidar=SensorModel(self.lidar_bits, self.lidar_sigma),
            radar=SensorModel(self.radar_bits, self.radar_sigma),
            seed=self.seed,
            ticks_per_unit=self.ticks_per_unit,
        )


class FaultSettings(_Settings):
    """A sensor fault; the window is given in ticks or in time units, not both."""

    corner: int = Field(..., ge=0, lt=CORE_COUNT)
    sensor: Literal["lidar", "radar"]
    kind: Literal["stuck_at", "offset", "jam_noise", "dropout"]
    value: float = 0.0
    start_tick: Optional[int] = Field(None, ge=0)
    end_tick: Optional[int] = Field(None, ge=1)
    start_time: Optional[float] = Field(None, ge=0.0)
    end_time: Optional[float] = Field(None, gt=0.0)

    @model_validator(mode="after")
    def _check_window(self) -> "FaultSettings":
        by_tick = self.start_tick is not None and self.end_tick is not None
        by_time = self.start_time is not None and self.end_time is not None
        if by_tick == by_time:
            raise ValueError(
                "give either start_tick/end_tick or start_time/end_time"
            )
        if by_tick and self.end_tick <= self.start_tick:
            raise ValueError("end_tick must be greater than start_tick")
        if by_time and self.end_time <= self.start_time:
            raise ValueError("end_time must be greater than start_time")
        return self

    def window(self, ticks_per_unit: int) -> Tuple[int, int]:
        if self.start_tick is not None:
            return self.start_tick, self.end_tick
        return (
            int(round(self.start_time * ticks_per_unit)),
            int(round(self.end_time * ticks_per_unit)),
        )

    def to_spec(self, ticks_per_unit: int) -> FaultSpec:
        start, end = self.window(ticks_per_unit)
        return FaultSpec(self.corner, self.sensor, start, end, self.kind, self.value)


class CoreFailureSettings(_Settings):
    core: int = Field(..., ge=0, lt=CORE_COUNT)
    at_tick: int = Field(..., ge=1)

    def to_spec(self) -> CoreFailureSpec:
        return CoreFailureSpec(self.core, self.at_tick)


class FirSettings(_Settings):
    coefficients: Optional[List[float]] = None
    cutoff: float = Field(DEFAULT_CUTOFF, gt=0.0, lt=0.5)

    @field_validator("coefficients")
    @classmethod
    def _check_taps(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and len(value) != TAPS:
            raise ValueError(f"expected {TAPS} taps, got {len(value)}")
        if value is not None and any(not -1.0 <= c < 1.0 for c in value):
            raise ValueError("coefficients must lie in [-1, 1)")
        return value

    def real_coefficients(self) -> Tuple[float, ...]:
        if self.coefficients is not None:
            return tuple(self.coefficients)
        return design_lowpass(TAPS, self.cutoff)

    def to_fixed(self) -> Tuple[FixedSample, ...]:
        return quantize_coefficients(self.real_coefficients())


class FlsSettings(_Settings):
    input_peaks: Tuple[float, float, float, float, float] = DEFAULT_PEAKS
    output_centers: Tuple[float, float, float, float] = DEFAULT_CENTERS
    frac_bits: int = Field(16, ge=1, le=16)

    @field_validator("input_peaks")
    @classmethod
    def _check_peaks(cls, value):
        if value[0] != 0.0 or value[-1] != 1.0:
            raise ValueError("peaks must start at 0.0 and end at 1.0")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("peaks must be strictly increasing")
        return value

    @field_validator("output_centers")
    @classmethod
    def _check_centers(cls, value):
        if any(not 0.0 <= c < 1.0 for c in value):
            raise ValueError("centers must lie in [0, 1)")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("centers must be strictly increasing")
        return value

    def to_engine(self, frac_bits: Optional[int] = None) -> FlsEngine:
        return FlsEngine.from_settings(self, frac_bits or self.frac_bits)


class ApmuSettings(_Settings):
    """APMU window, statistic mode and thresholds.

    `threshold_lut` lists one threshold per eww (1..16): normalized sums in
    "sum" mode, event counts in "count" mode. `fsau_mask` is an alternative to
    `eww` given as the newest-slot activation mask.
    """

    eww: int = MAX_SLOTS
    fsau_mask: Optional[int] = None
    mode: Literal["sum", "count"] = "sum"
    per_sample_tolerance: float = Field(DEFAULT_TOLERANCE, ge=0.0, lt=1.0)
    threshold_lut: Optional[List[float]] = None

    @field_validator("eww")
    @classmethod
    def _check_eww(cls, value: int) -> int:
        if not 1 <= value <= MAX_SLOTS:
            raise ValueError(f"must be within [1, {MAX_SLOTS}], got {value}")
        return value

    @field_validator("fsau_mask")
    @classmethod
    def _check_mask(cls, value: Optional[int]) -> Optional[int]:
        if value is None:
            return value
        if value <= 0 or value >= (1 << MAX_SLOTS) or value & (value + 1):
            raise ValueError(
                f"must be a contiguous newest-slot mask of 1 to {MAX_SLOTS} bits"
            )
        return value

    @field_validator("threshold_lut")
    @classmethod
    def _check_lut(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and len(value) != MAX_SLOTS:
            raise ValueError(f"expected {MAX_SLOTS} thresholds, got {len(value)}")
        if value is not None and any(v < 0 for v in value):
            raise ValueError("thresholds must be non-negative")
        return value

    @model_validator(mode="after")
    def _check_window_source(self) -> "ApmuSettings":
        if self.fsau_mask is not None and "eww" in self.model_fields_set:
            raise ValueError("give either eww or fsau_mask, not both")
        return self

    @property
    def effective_eww(self) -> int:
        return self.fsau_mask.bit_length() if self.fsau_mask else self.eww

    def to_config(self, eww: Optional[int] = None) -> ApmuConfig:
        mode = ApmuMode(self.mode)
        lut = None
        if self.threshold_lut is not None:
            fmt = statistic_format(mode)
            lut = [quantize(v, fmt) for v in self.threshold_lut]
        return apmu_configure(
            eww or self.effective_eww,
            lut,
            mode,
            quantize(self.per_sample_tolerance),
        )


class LinkSettings(_Settings):
    latency_ticks: int = Field(1, ge=1)
    queue_capacity: int = Field(4, ge=1)
    topology: Literal["pairwise", "ring"] = "pairwise"

    @model_validator(mode="after")
    def _check_capacity(self) -> "LinkSettings":
        in_flight = packets_in_flight(self.latency_ticks, self.topology)
        if self.queue_capacity < in_flight:
            raise ValueError(
                f"queue_capacity {self.queue_capacity} is below the {in_flight} "
                f"packets in flight on a {self.topology} link"
            )
        return self


class FabricSettings(_Settings):
    tolerance: float = Field(0.05, ge=0.0, lt=1.0)
    aggregation: Literal["mean", "min", "max"] = "mean"
    handover_k: int = Field(8, ge=1)
    pilot_permit: bool = True


class RunConfig(_Settings):
    """Everything one simulator run needs; validated before any tick runs."""

    scenario: ScenarioSettings = ScenarioSettings()
    faults: List[FaultSettings] = []
    core_failures: List[CoreFailureSettings] = []
    fir: FirSettings = FirSettings()
    fls: FlsSettings = FlsSettings()
    apmu: ApmuSettings = ApmuSettings()
    link: LinkSettings = LinkSettings()
    fabric: FabricSettings = FabricSettings()
    output: Optional[str] = None
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    workers: int = Field(default_factory=default_workers, ge=1)

    @model_validator(mode="after")
    def _check_windows(self) -> "RunConfig":
        duration = self.scenario.duration_ticks
        problems = []
        for index, fault in enumerate(self.faults):
            start, end = fault.window(self.scenario.ticks_per_unit)
            if end <= start:
                problems.append(
                    f"faults.{index}: window rounds to ticks [{start}, {end}), "
                    "which is empty"
                )
            elif end > duration + 1:
                problems.append(
                    f"faults.{index}: window ends at tick {end}, after the "
                    f"{duration}-tick scenario"
                )
        for index, failure in enumerate(self.core_failures):
            if failure.at_tick > duration:
                problems.append(
                    f"core_failures.{index}: failure at tick {failure.at_tick} "
                    f"is after the {duration}-tick scenario"
                )
        if problems:
            # One line per problem, each already prefixed with its key path
            raise ValueError("\n".join(problems))
        return self

    @property
    def effective_seed(self) -> int:
        return self.scenario.seed if self.seed is None else self.seed

    def scenario_spec(self) -> ScenarioSpec:
        spec = self.scenario.to_spec()
        if self.seed is not None:
            spec = replace(spec, seed=self.seed)
        return spec

    def fault_specs(self) -> List[FaultSpec]:
        return [f.to_spec(self.scenario.ticks_per_unit) for f in self.faults]

    def failure_specs(self) -> List[CoreFailureSpec]:
        return [f.to_spec() for f in self.core_failures]

    def output_path(self, override: Optional[Union[str, Path]] = None) -> Path:
        if override is not None:
            return Path(override)
        if self.output is not None:
            return Path(self.output)
        return default_output_dir() / "trace.csv"

    def with_overrides(
        self, seed: Optional[int] = None, workers: Optional[int] = None
    ) -> "RunConfig":
        update = {}
        if seed is not None:
            update["seed"] = seed
        if workers is not None:
            update["workers"] = workers
        if not update:
            return self
        # Re-validate so overrides obey the same bounds as the file
        return RunConfig.model_validate(
            {**self.model_dump(exclude_unset=True), **update}
        )


def format_validation_errors(exc: ValidationError) -> List[str]:
    """Render each pydantic error as "dotted.key.path: message"."""
    messages = []
    for error in exc.errors():
        path = ".".join(str(part) for part in error["loc"]) or "<root>"
        message = error["msg"]
        if message.startswith("Value error, "):
            message = message[len("Value error, ") :]
        if not error["loc"]:
            messages.extend(message.splitlines())
            continue
        messages.append(f"{path}: {message}")
    return messages


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Load and validate a JSON run configuration.

    Raises:
        ConfigError: listing every violation found
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(
            f"Config file not found: {path}", [f"{path}: no such file"]
        ) from None
    except OSError as e:
        raise ConfigError(
            f"Config file unreadable: {path}", [f"{path}: {e}"]
        ) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"Malformed JSON in {path}",
            [f"<root>: line {e.lineno} column {e.colno}: {e.msg}"],
        ) from e
    return config_from_dict(data, source=str(path))


def config_from_dict(data, source: str = "<dict>") -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(
            f"Invalid configuration in {source}", format_validation_errors(e)
        ) from e


def config_schema() -> dict:
    return RunConfig.model_json_schema()
