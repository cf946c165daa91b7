"""
Tests for a single processing corner: SIU, FIR, FLS and APMU wired together.
"""

import logging

import numpy as np
import pytest

from ..apmu import ApmuStatus
from ..core import CoreHealth, CoreId, SensorInterface, all_cores
from ..errors import ConfigurationError, FailedCoreError
from ..fls import DEFAULT_CENTERS, FlsStatus, OutputTerm
from ..numerics import quantize

EH = quantize(DEFAULT_CENTERS[OutputTerm.EH]).raw


def run(core, readings):
    return [core.tick(lidar, radar) for lidar, radar in readings]


class TestCoreId:
    def test_opposites(self):
        assert [c.opposite.index for c in all_cores()] == [2, 3, 0, 1]

    def test_out_of_range(self):
        with pytest.raises(ConfigurationError):
            CoreId(4)


class TestSensorInterface:
    def test_mid_scale(self):
        reading = SensorInterface().ingest(1024, 512)
        assert reading.lidar.raw / 65536 == pytest.approx(1024 / 2047, abs=2**-16)
        assert reading.radar.raw / 65536 == pytest.approx(512 / 1023, abs=2**-16)
        assert not reading.clamped

    def test_zero_and_full_scale(self):
        siu = SensorInterface()
        assert siu.ingest(0, 0).lidar.raw == 0
        full = siu.ingest(2047, 1023)
        assert full.lidar.raw == full.radar.raw == 65535

    def test_out_of_range_codes_clamped(self):
        reading = SensorInterface().ingest(3000, -5)
        assert reading.clamped
        assert reading.lidar.raw == 65535
        assert reading.radar.raw == 0

    def test_monotone(self):
        siu = SensorInterface()
        codes = [siu.ingest(c, 0).lidar.raw for c in range(2048)]
        assert all(b > a for a, b in zip(codes, codes[1:]))


class TestCoreTick:
    def test_first_tick_is_warmup(self, make_core):
        output = make_core().tick(1000, 500)
        assert output.tick == 1
        assert output.warmup
        assert output.fls_status is FlsStatus.WARMUP
        assert output.filtered_lidar.raw == output.filtered_radar.raw == 0
        assert not output.apmu_verdict.alarm

    def test_warmup_ends_when_window_fills(self, make_core):
        outputs = run(make_core(), [(600, 300)] * 40)
        assert outputs[14].fls_status is FlsStatus.WARMUP
        assert outputs[15].fls_status is FlsStatus.VALID
        assert outputs[29].warmup
        assert outputs[29].apmu_verdict.status is ApmuStatus.WARMUP
        assert not outputs[30].warmup
        assert outputs[30].tick == 31
        assert outputs[30].apmu_verdict.status is ApmuStatus.ACTIVE

    def test_touchdown_inputs_give_highest_command(self, make_core):
        outputs = run(make_core(), [(0, 0)] * 32)
        assert outputs[-1].fls_status is FlsStatus.VALID
        assert outputs[-1].crisp.raw == EH
        assert not outputs[-1].apmu_verdict.alarm

    def test_failed_core_refuses_ticks(self, make_core):
        core = make_core()
        core.tick(0, 0)
        assert core.fail() is CoreHealth.FAILED
        assert not core.is_healthy
        with pytest.raises(FailedCoreError):
            core.tick(0, 0)

    def test_fail_is_idempotent(self, make_core, caplog):
        core = make_core()
        with caplog.at_level(logging.WARNING, logger="guidance.algas4.core"):
            assert core.fail() is CoreHealth.FAILED
            assert core.fail() is CoreHealth.FAILED
        assert core.health is CoreHealth.FAILED
        assert caplog.text.count("Core failed") == 1

    def test_input_change_visible_one_tick_later(self, make_core):
        steady, stepped = make_core(), make_core()
        history = [(1024, 512)] * 40
        assert run(steady, history) == run(stepped, history)
        same_tick = steady.tick(1024, 512), stepped.tick(2047, 1023)
        assert same_tick[0].filtered_lidar == same_tick[1].filtered_lidar
        assert same_tick[0].crisp == same_tick[1].crisp
        assert same_tick[0].apmu_verdict == same_tick[1].apmu_verdict
        after_steady = steady.tick(1024, 512)
        after_stepped = stepped.tick(1024, 512)
        assert after_steady.filtered_lidar != after_stepped.filtered_lidar
        assert after_steady.filtered_radar != after_stepped.filtered_radar

    def test_deterministic(self, make_core):
        rng = np.random.default_rng(17)
        readings = [
            (int(a), int(b))
            for a, b in zip(rng.integers(0, 2048, 200), rng.integers(0, 1024, 200))
        ]
        assert run(make_core(), readings) == run(make_core(), readings)

    def test_no_rule_fired_holds_last_valid_command(self, make_core):
        outputs = run(make_core(), [(0, 0)] * 32 + [(0, 1023)] * 40)
        last_valid = None
        held = 0
        for output in outputs[31:]:
            if output.fls_status is FlsStatus.VALID:
                last_valid = output.crisp
            elif output.fls_status is FlsStatus.NO_RULE_FIRED:
                assert output.crisp == last_valid
                held += 1
        assert held > 0
        assert outputs[-1].fls_status is FlsStatus.NO_RULE_FIRED

    def test_sensor_disagreement_raises_alarm(self, make_core):
        outputs = run(make_core(), [(1024, 512)] * 40 + [(1024, 100)] * 40)
        assert not any(o.apmu_verdict.alarm for o in outputs[:40])
        assert outputs[-1].apmu_verdict.alarm

    def test_reset_restores_power_on_state(self, make_core):
        core = make_core()
        readings = [(800, 400)] * 35
        first = run(core, readings)
        core.fail()
        core.reset()
        assert core.is_healthy
        assert core.tick_count == 0
        assert run(core, readings) == first

    def test_resize_window(self, make_core):
        core = make_core()
        run(core, [(800, 400)] * 25)
        assert core.resize_window(8).eww == 8
        assert not core.tick(800, 400).warmup

    def test_distance_is_channel_mean(self, make_core):
        output = run(make_core(), [(1024, 512)] * 30)[-1]
        expected = (output.filtered_lidar.raw + output.filtered_radar.raw + 1) >> 1
        assert output.distance.raw == expected
