"""
Tests for the Adaptive Prognostic Malfunction Unit.
"""

import ast
import logging
from pathlib import Path

import numpy as np
import pytest

from .. import apmu as apmu_module
from ..apmu import (
    MAX_SLOTS,
    ApmuConfig,
    ApmuMode,
    ApmuState,
    ApmuStatus,
    apmu_configure,
    default_threshold_lut,
    eww_from_mask,
)
from ..errors import ConfigurationError, FormatMismatchError
from ..numerics import COUNT32, Q1_15, U0_16, WIDE_U16_16, FixedSample, quantize
from ..reference import ref_window_statistic
from .conftest import raw

ZERO = raw(0)


def flat_lut(value: int, fmt=WIDE_U16_16):
    return [FixedSample(value, fmt)] * MAX_SLOTS


def feed(state, config, discrepancies):
    verdict = None
    for d in discrepancies:
        verdict = state.step(config, raw(d), ZERO)
    return verdict


class TestConfigure:
    @pytest.mark.parametrize("eww", [0, 17, -1])
    def test_eww_out_of_range(self, eww):
        with pytest.raises(ConfigurationError, match=r"within \[1, 16\]"):
            apmu_configure(eww)

    def test_lut_length_and_format(self):
        with pytest.raises(ConfigurationError):
            apmu_configure(8, flat_lut(5)[:15])
        with pytest.raises(ConfigurationError):
            apmu_configure(8, flat_lut(5, U0_16))
        with pytest.raises(ConfigurationError):
            apmu_configure(8, flat_lut(5), mode=ApmuMode.COUNT)

    def test_shallow_window_is_advisory(self, caplog):
        with caplog.at_level(logging.WARNING, logger="guidance.algas4.apmu"):
            config = apmu_configure(3)
        assert config.high_sensitivity
        assert "minimum decision depth" in caplog.text

        caplog.clear()
        with caplog.at_level(logging.WARNING, logger="guidance.algas4.apmu"):
            assert not apmu_configure(4).high_sensitivity
        assert caplog.text == ""

    def test_default_luts(self):
        tolerance = quantize(0.02)
        sums = default_threshold_lut(ApmuMode.SUM, tolerance)
        assert sums[15].raw == 16 * tolerance.raw
        assert sums[0].format == WIDE_U16_16
        counts = default_threshold_lut(ApmuMode.COUNT, tolerance)
        assert [c.raw for c in counts[:4]] == [0, 1, 1, 2]
        assert counts[0].format == COUNT32

    def test_mask(self):
        assert eww_from_mask(0x000F) == 4
        assert eww_from_mask(0xFFFF) == 16
        assert ApmuConfig.from_mask(0x00FF).eww == 8
        assert apmu_configure(5).activation_mask == 0b11111
        for mask in (0, 0x10000, 0x0005, 0x00F0):
            with pytest.raises(ConfigurationError):
                eww_from_mask(mask)


class TestWindowStatistic:
    def test_constant_discrepancy_against_threshold(self):
        below = apmu_configure(4, flat_lut(7))
        verdict = feed(ApmuState(), below, [2, 2, 2, 2])
        assert verdict.effective_weight.raw == 8
        assert verdict.alarm

        at = apmu_configure(4, flat_lut(8))
        verdict = feed(ApmuState(), at, [2, 2, 2, 2])
        assert not verdict.alarm

    def test_window_selects_newest_slots(self):
        state = ApmuState()
        config = apmu_configure(4)
        assert feed(state, config, [1, 2, 3, 4]).effective_weight.raw == 10
        narrow = state.resize(config, 2)
        assert state.verdict(narrow).effective_weight.raw == 7

    def test_discrepancy_is_absolute(self):
        state = ApmuState()
        config = apmu_configure(1)
        verdict = state.step(config, raw(100), raw(300))
        assert verdict.effective_weight.raw == 200

    def test_warmup_suppresses_alarm(self):
        state = ApmuState()
        config = apmu_configure(4, flat_lut(0))
        for _ in range(3):
            verdict = state.step(config, raw(1000), ZERO)
            assert verdict.status is ApmuStatus.WARMUP
            assert not verdict.alarm
        verdict = state.step(config, raw(1000), ZERO)
        assert verdict.status is ApmuStatus.ACTIVE
        assert verdict.alarm

    def test_ring_wraps_after_sixteen_slots(self):
        state = ApmuState()
        config = apmu_configure(16)
        feed(state, config, range(1, 21))
        assert state.verdict(config).effective_weight.raw == sum(range(5, 21))
        assert state.write_index == 20 % MAX_SLOTS

    def test_count_mode(self):
        config = apmu_configure(
            4, mode=ApmuMode.COUNT, per_sample_tolerance=FixedSample(10, U0_16)
        )
        verdict = feed(ApmuState(), config, [5, 11, 10, 50])
        assert verdict.effective_weight.raw == 2
        assert verdict.effective_weight.format == COUNT32
        assert not verdict.alarm
        verdict = feed(ApmuState(), config, [11, 11, 11, 0])
        assert verdict.alarm

    def test_sum_saturates(self):
        config = apmu_configure(16)
        verdict = feed(ApmuState(), config, [U0_16.max_raw] * 16)
        assert verdict.effective_weight.raw == 16 * U0_16.max_raw
        assert verdict.effective_weight.raw <= WIDE_U16_16.max_raw

    def test_wider_window_never_lowers_sum(self):
        rng = np.random.default_rng(4)
        state = ApmuState()
        config = apmu_configure(16)
        feed(state, config, [int(v) for v in rng.integers(0, 5000, size=16)])
        weights = [
            state.verdict(state.resize(config, eww)).effective_weight.raw
            for eww in range(1, MAX_SLOTS + 1)
        ]
        assert all(b >= a for a, b in zip(weights, weights[1:]))

    def test_reset_clears_history(self):
        state = ApmuState()
        feed(state, apmu_configure(4), [9, 9, 9, 9])
        state.reset()
        assert state.samples_seen == 0
        assert state.newest(16) == []

    def test_rejects_other_formats(self):
        with pytest.raises(FormatMismatchError):
            ApmuState().step(apmu_configure(4), quantize(0.1, Q1_15), ZERO)


class TestResize:
    def test_bounds(self):
        state = ApmuState()
        with pytest.raises(ConfigurationError):
            state.resize(apmu_configure(4), 17)

    def test_keeps_ring_contents(self):
        state = ApmuState()
        config = apmu_configure(16)
        feed(state, config, range(1, 17))
        before = list(state.ring)
        resized = state.resize(config, 8)
        assert state.ring == before
        assert resized.eww == 8
        assert state.verdict(resized).effective_weight.raw == sum(range(9, 17))

    def test_growing_window_rewarms(self):
        state = ApmuState()
        config = apmu_configure(4)
        feed(state, config, [1, 1, 1, 1, 1])
        assert state.status(state.resize(config, 8)) is ApmuStatus.WARMUP


def first_alarm(config, stream):
    state = ApmuState()
    for step, d in enumerate(stream):
        if state.step(config, raw(d), ZERO).alarm:
            return step
    return None


class TestSensitivity:
    TOLERANCE = 1311

    def test_narrower_window_alarms_no_later(self):
        """Threshold eww x tolerance: a sustained divergence trips eww-1 first."""
        tolerance = raw(self.TOLERANCE)
        configs = [
            apmu_configure(eww, per_sample_tolerance=tolerance)
            for eww in range(1, MAX_SLOTS + 1)
        ]
        rng = np.random.default_rng(17)
        for _ in range(100):
            quiet = rng.integers(0, self.TOLERANCE + 1, rng.integers(0, 40))
            diverged = rng.integers(self.TOLERANCE + 1, 4 * self.TOLERANCE, 40)
            stream = [int(d) for d in np.concatenate([quiet, diverged])]
            firsts = [first_alarm(config, stream) for config in configs]
            assert None not in firsts
            assert firsts == sorted(firsts)
            assert firsts[-1] >= len(quiet)


def _oracle_check(steps: int, mode: ApmuMode, seed: int):
    rng = np.random.default_rng(seed)
    tolerance = quantize(0.02)
    config = apmu_configure(16, mode=mode, per_sample_tolerance=tolerance)
    state = ApmuState()
    history = []
    values = rng.integers(0, U0_16.max_raw + 1, size=(steps, 2))
    ewws = rng.integers(4, MAX_SLOTS + 1, size=steps)
    for (a, b), eww in zip(values, ewws):
        config = state.resize(config, int(eww))
        verdict = state.step(config, raw(int(a)), raw(int(b)))
        history.append(abs(int(a) - int(b)))
        expected = ref_window_statistic(history, int(eww), mode, tolerance.raw)
        if expected is None:
            assert verdict.status is ApmuStatus.WARMUP
        else:
            assert verdict.effective_weight.raw == expected
            assert verdict.alarm == (expected > config.threshold.raw)
        if len(history) > MAX_SLOTS:
            del history[0]


class TestAgainstOracle:
    @pytest.mark.parametrize("mode", list(ApmuMode))
    def test_short_random_stream(self, mode):
        _oracle_check(20_000, mode, seed=11)

    @pytest.mark.slow
    @pytest.mark.parametrize("mode", list(ApmuMode))
    def test_million_steps(self, mode):
        _oracle_check(1_000_000, mode, seed=12)


def test_unit_is_division_free():
    tree = ast.parse(Path(apmu_module.__file__).read_text(encoding="utf-8"))
    forbidden = (ast.Div, ast.FloorDiv, ast.Mod)
    ops = [
        node.op
        for node in ast.walk(tree)
        if isinstance(node, (ast.BinOp, ast.AugAssign))
    ]
    assert not [op for op in ops if isinstance(op, forbidden)]
