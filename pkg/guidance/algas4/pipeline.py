"""Batch orchestration: scenario runs, accuracy report, benchmark, sweeps.

Every entry point takes a validated `RunConfig` and returns a JSON-ready
report dict; the CLI prints it.
"""

import hashlib
import logging
import time
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .apmu import MAX_SLOTS
from .config import RunConfig
from .core import CORE_COUNT, Core, CoreId, SensorInterface
from .fabric import Fabric, SystemOutput
from .fir import TAPS
from .fls import FlsEngine, FlsStatus, fls_surface
from .numerics import U0_16, FixedSample, quantize
from .reference import RefConfig, ref_fls_grid
from .scenario import FaultSpec, ScenarioGenerator
from .trace_storage import TraceRow, TraceWriter

logger = logging.getLogger(__name__)

ACCURACY_BOUND = 0.05
ACCURACY_FLOOR = 0.05
# FIR group delay plus the SIU register
ALARM_SETTLE_TICKS = (TAPS - 1) // 2 + 1


def build_cores(
    config: RunConfig,
    engine: Optional[FlsEngine] = None,
    eww: Optional[int] = None,
) -> List[Core]:
    coefficients = config.fir.to_fixed()
    engine = engine or config.fls.to_engine()
    apmu_config = config.apmu.to_config(eww)
    siu = SensorInterface(config.scenario.lidar_bits, config.scenario.radar_bits)
    return [
        Core(CoreId(i), apmu_config, coefficients, engine, siu)
        for i in range(CORE_COUNT)
    ]


def build_fabric(
    config: RunConfig, workers: Optional[int] = None, eww: Optional[int] = None
) -> Fabric:
    return Fabric(
        build_cores(config, eww=eww),
        latency_ticks=config.link.latency_ticks,
        queue_capacity=config.link.queue_capacity,
        topology=config.link.topology,
        tolerance=quantize(config.fabric.tolerance),
        aggregation=config.fabric.aggregation,
        handover_k=config.fabric.handover_k,
        pilot_permit=config.fabric.pilot_permit,
        workers=workers or config.workers,
    )


def simulate(
    config: RunConfig, workers: Optional[int] = None, eww: Optional[int] = None
) -> Iterator[Tuple[SystemOutput, Fabric]]:
    """Run the configured scenario tick by tick."""
    generator = ScenarioGenerator(
        config.scenario_spec(), config.fault_specs(), config.failure_specs()
    )
    with build_fabric(config, workers, eww) as fabric:
        for tick in range(1, config.scenario.duration_ticks + 1):
            for core in generator.failures_at(tick):
                fabric.fail_core(core)
            yield fabric.tick(generator.readings(tick)), fabric


def run_scenario(
    config: RunConfig,
    out_path: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
) -> Dict[str, object]:
    """Run a scenario, write its CSV trace and return the run summary."""
    started = time.perf_counter()
    path = config.output_path(out_path)
    first_alarm: Dict[int, Optional[int]] = {i: None for i in range(CORE_COUNT)}
    alarm_ticks = {i: 0 for i in range(CORE_COUNT)}
    flagged_ticks = 0
    fabric = None

    logger.info(
        "Starting scenario run",
        extra={
            "ticks": config.scenario.duration_ticks,
            "seed": config.effective_seed,
            "workers": workers or config.workers,
            "trace": str(path),
        },
    )
    with TraceWriter(path) as writer:
        for output, fabric in simulate(config, workers):
            if any(flag for flag in output.inclination_flags.values()):
                flagged_ticks += 1
            for core_output in output.per_core:
                if core_output is None:
                    continue
                index = core_output.core_id.index
                if core_output.apmu_verdict.alarm:
                    alarm_ticks[index] += 1
                    if first_alarm[index] is None:
                        first_alarm[index] = output.tick
                        logger.info(
                            "First APMU alarm",
                            extra={"core": index, "tick": output.tick},
                        )
                writer.add(
                    TraceRow.from_output(
                        core_output, output.pair_flag(index), output.mode
                    )
                )

    counters = fabric.link_counters()
    summary = {
        "trace": str(path),
        "ticks": config.scenario.duration_ticks,
        "seed": config.effective_seed,
        "first_alarm_tick": {str(i): t for i, t in first_alarm.items()},
        "alarm_ticks": {str(i): n for i, n in alarm_ticks.items()},
        "inclination_flag_ticks": flagged_ticks,
        "mode_transitions": list(fabric.mode_log),
        "final_mode": fabric.mode.value,
        "backpressure": sum(c["backpressure"] for c in counters.values()),
        "checksum_failures": sum(c["checksum_failures"] for c in counters.values()),
        "relayed": fabric.relayed_count,
        "links": counters,
        "success": True,
        "execution_time_s": round(time.perf_counter() - started, 3),
    }
    logger.info(
        "Scenario run finished",
        extra={
            "final_mode": summary["final_mode"],
            "execution_time_s": summary["execution_time_s"],
        },
    )
    return summary


def _grid_codes(grid: int) -> np.ndarray:
    """`grid` U0.16 codes spread evenly over the full input range."""
    return np.rint(np.linspace(0, U0_16.max_raw, grid)).astype(np.int64)


def verify_accuracy(
    config: Optional[RunConfig] = None, grid: int = 512, frac_bits: Optional[int] = None
) -> Dict[str, object]:
    """Compare the fixed-point FLS with the double-precision reference.

    Deviation is |fixed - ref| / max(ref, 0.05) over grid points where both
    report a valid result.
    """
    config = config or RunConfig()
    frac_bits = frac_bits or config.fls.frac_bits
    engine = config.fls.to_engine(frac_bits)
    ref = RefConfig.from_settings(config.fls, config.fir)
    started = time.perf_counter()

    codes = _grid_codes(grid)
    samples = [FixedSample(int(c), U0_16) for c in codes]
    fixed = np.full((grid, grid), np.nan)
    fixed_valid = np.zeros((grid, grid), dtype=bool)
    for i, lidar in enumerate(samples):
        for j, radar in enumerate(samples):
            result = engine.evaluate(lidar, radar)
            if result.status is FlsStatus.VALID:
                fixed[i, j] = result.crisp.raw / U0_16.one
                fixed_valid[i, j] = True

    values = codes / U0_16.one
    lidar_grid, radar_grid = np.meshgrid(values, values, indexing="ij")
    reference, ref_valid = ref_fls_grid(lidar_grid, radar_grid, ref)

    both = fixed_valid & ref_valid
    deviation = np.zeros((grid, grid))
    deviation[both] = np.abs(fixed[both] - reference[both]) / np.maximum(
        reference[both], ACCURACY_FLOOR
    )
    worst = np.unravel_index(int(np.argmax(deviation)), deviation.shape)
    max_dev = float(deviation[worst])
    report = {
        "grid": [grid, grid],
        "frac_bits": frac_bits,
        "points_compared": int(both.sum()),
        "status_mismatches": int((fixed_valid != ref_valid).sum()),
        "max_relative_deviation": max_dev,
        "mean_relative_deviation": float(deviation[both].mean()) if both.any() else 0.0,
        "argmax": {
            "lidar": float(values[worst[0]]),
            "radar": float(values[worst[1]]),
            "fixed": float(fixed[worst]),
            "reference": float(reference[worst]),
        },
        "bound": ACCURACY_BOUND,
        "passed": max_dev <= ACCURACY_BOUND,
        "execution_time_s": round(time.perf_counter() - started, 3),
    }
    log = logger.info if report["passed"] else logger.error
    log(
        "Accuracy check finished",
        extra={"max_relative_deviation": max_dev, "frac_bits": frac_bits},
    )
    return report


def output_digest(outputs: Iterator[SystemOutput]) -> str:
    """SHA-256 over every per-core and system-level value of a run."""
    digest = hashlib.sha256()
    for output in outputs:
        parts = [output.tick, output.mode.value]
        crisp = output.aggregate_crisp
        parts.append(None if crisp is None else crisp.raw)
        parts.extend(sorted(output.inclination_flags.items()))
        for core_output in output.per_core:
            if core_output is None:
                parts.append(None)
                continue
            parts.extend(
                (
                    core_output.filtered_lidar.raw,
                    core_output.filtered_radar.raw,
                    core_output.crisp.raw,
                    core_output.apmu_verdict.effective_weight.raw,
                    core_output.apmu_verdict.alarm,
                )
            )
        digest.update(repr(parts).encode())
    return digest.hexdigest()


def bench(
    config: Optional[RunConfig] = None,
    ticks: int = 100_000,
    workers: int = 4,
) -> Dict[str, object]:
    """Fabric throughput with one worker and with `workers` workers."""
    config = config or RunConfig()
    scenario = config.scenario.model_copy(update={"duration_ticks": ticks})
    clean = config.model_copy(
        update={"scenario": scenario, "faults": [], "core_failures": []}
    )
    runs = []
    for count in sorted({1, max(1, workers)}):
        started = time.perf_counter()
        digest = output_digest(out for out, _ in simulate(clean, workers=count))
        elapsed = time.perf_counter() - started
        runs.append(
            {
                "workers": count,
                "ticks": ticks,
                "seconds": round(elapsed, 3),
                "ticks_per_second": round(ticks / elapsed, 1) if elapsed else None,
                "digest": digest,
            }
        )
        logger.info("Benchmark run finished", extra={"workers": count, "ticks": ticks})
    return {
        "runs": runs,
        "identical": len({run["digest"] for run in runs}) == 1,
    }


def export_surface(
    config: Optional[RunConfig] = None,
    out_path: Union[str, Path] = "surface.csv",
    n: int = 64,
) -> Dict[str, object]:
    """Write the FLS control surface as CSV."""
    config = config or RunConfig()
    frame = fls_surface(config.fls.to_engine(), n)
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    no_rule = int((frame["status"] == FlsStatus.NO_RULE_FIRED.value).sum())
    return {"surface": str(path), "points": len(frame), "no_rule_fired": no_rule}


def _expected_alarm(faults: List[FaultSpec], core: int, tick: int, eww: int) -> bool:
    for fault in faults:
        if fault.corner != core:
            continue
        if fault.start_tick <= tick < fault.end_tick + ALARM_SETTLE_TICKS + eww:
            return True
    return False


def sweep_eww(config: RunConfig, workers: Optional[int] = None) -> pd.DataFrame:
    """Alarm behaviour of the scenario for every window width.

    An alarm on a core is counted as false when no fault on that corner is
    active (allowing the filter and window to settle after the fault ends).
    """
    faults = config.fault_specs()
    first_fault = min((f.start_tick for f in faults), default=None)
    rows = []
    for eww in range(1, MAX_SLOTS + 1):
        alarms = false_alarms = 0
        first = None
        for output, _ in simulate(config, workers, eww=eww):
            for core_output in output.per_core:
                if core_output is None or not core_output.apmu_verdict.alarm:
                    continue
                alarms += 1
                index = core_output.core_id.index
                if _expected_alarm(faults, index, output.tick, eww):
                    if first is None:
                        first = output.tick
                else:
                    false_alarms += 1
        rows.append(
            {
                "eww": eww,
                "alarm_ticks": alarms,
                "false_alarm_ticks": false_alarms,
                "first_detection_tick": first,
                "detection_latency": (
                    None
                    if first is None or first_fault is None
                    else first - first_fault
                ),
            }
        )
        logger.info(
            "Window width evaluated",
            extra={"eww": eww, "alarms": alarms, "false_alarms": false_alarms},
        )
    return pd.DataFrame(rows)

