#!/usr/bin/env python3
"""
Pytest configuration for the ALGAS4 simulator tests.
"""
import json

import pytest

from ..apmu import apmu_configure
from ..config import config_from_dict
from ..core import Core, CoreId
from ..fls import FlsEngine
from ..numerics import U0_16, FixedSample


def raw(value: int) -> FixedSample:
    """U0.16 sample from a raw code."""
    return FixedSample(value, U0_16)


@pytest.fixture
def engine():
    """Default fixed-point FLS engine"""
    return FlsEngine()


@pytest.fixture
def apmu16():
    """Default sum-mode APMU configuration with the full window"""
    return apmu_configure(16)


@pytest.fixture
def make_core(apmu16):
    """Factory for cores with the default units"""

    def _make(index: int = 0, apmu_config=None):
        return Core(CoreId(index), apmu_config or apmu16)

    return _make


@pytest.fixture
def clean_settings():
    """Config dict for a short fault-free descent"""
    return {
        "scenario": {
            "duration_ticks": 200,
            "initial_altitude": 0.9,
            "profile": {"kind": "linear", "rate": 0.0005},
            "lidar_sigma": 0.002,
            "radar_sigma": 0.002,
            "seed": 3,
        },
        "workers": 1,
    }


@pytest.fixture
def radar_offset_settings():
    """Config dict for the radar offset experiment on corner 0"""
    return {
        "scenario": {
            "duration_ticks": 600,
            "initial_altitude": 0.9,
            "profile": {"kind": "linear", "rate": 0.0005},
            "lidar_sigma": 0.002,
            "radar_sigma": 0.002,
            "seed": 42,
            "ticks_per_unit": 100,
        },
        "faults": [
            {
                "corner": 0,
                "sensor": "radar",
                "kind": "offset",
                "value": 0.15,
                "start_time": 3.0,
                "end_time": 4.0,
            }
        ],
        "apmu": {"eww": 16},
        "workers": 1,
    }


@pytest.fixture
def clean_config(clean_settings):
    return config_from_dict(clean_settings)


@pytest.fixture
def write_config(tmp_path):
    """Writes a config dict to a JSON file and returns its path"""

    def _write(data, name: str = "config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write
