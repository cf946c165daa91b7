"""Double-precision oracles for the fixed-point pipeline.

Shipped with the package so the accuracy report can be run by users, not only
by the test suite. The reference and fixed-point paths are instantiated from
the same settings objects.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .apmu import ApmuMode
from .fir import default_coefficients, quantize_coefficients
from .fls import DEFAULT_CENTERS, DEFAULT_PEAKS, FlsStatus, FuzzyRule, default_rulebase
from .numerics import dequantize


@dataclass(frozen=True)
class RefConfig:
    peaks: Tuple[float, ...] = DEFAULT_PEAKS
    centers: Tuple[float, ...] = DEFAULT_CENTERS
    rules: Tuple[FuzzyRule, ...] = tuple(default_rulebase())
    coefficients: Tuple[float, ...] = tuple(
        dequantize(c) for c in default_coefficients()
    )

    @classmethod
    def from_settings(cls, fls_settings=None, fir_settings=None) -> "RefConfig":
        """Mirror the settings the fixed-point path is built from.

        FIR coefficients are taken after Q1.15 quantization so both paths
        filter with the same taps.
        """
        kwargs = {}
        if fls_settings is not None:
            kwargs["peaks"] = tuple(fls_settings.input_peaks)
            kwargs["centers"] = tuple(fls_settings.output_centers)
        if fir_settings is not None and fir_settings.coefficients is not None:
            kwargs["coefficients"] = tuple(
                dequantize(c)
                for c in quantize_coefficients(fir_settings.coefficients)
            )
        return cls(**kwargs)


DEFAULT_REF = RefConfig()


class RefResult(NamedTuple):
    crisp: float
    status: FlsStatus


def _degrees(x: np.ndarray, peaks: Sequence[float]) -> np.ndarray:
    """Ruspini membership of every element of `x`, shape (terms, *x.shape)."""
    eye = np.eye(len(peaks))
    return np.stack([np.interp(x, peaks, eye[k]) for k in range(len(peaks))])


def ref_fls_grid(
    lidar: np.ndarray, radar: np.ndarray, config: RefConfig = DEFAULT_REF
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized reference FLS.

    Returns:
        (crisp, valid): crisp is NaN where no rule fired
    """
    lidar_deg = _degrees(np.asarray(lidar, dtype=float), config.peaks)
    radar_deg = _degrees(np.asarray(radar, dtype=float), config.peaks)
    activations = np.zeros((len(config.centers),) + lidar_deg.shape[1:])
    for rule in config.rules:
        strength = np.minimum(lidar_deg[rule.lidar], radar_deg[rule.radar])
        activations[rule.output] = np.maximum(activations[rule.output], strength)
    total = activations.sum(axis=0)
    valid = total > 0
    weighted = np.tensordot(np.asarray(config.centers), activations, axes=1)
    crisp = np.full(total.shape, np.nan)
    np.divide(weighted, total, out=crisp, where=valid)
    return crisp, valid


def ref_fls_eval(
    lidar: float, radar: float, config: RefConfig = DEFAULT_REF
) -> RefResult:
    crisp, valid = ref_fls_grid(np.array(lidar), np.array(radar), config)
    if not bool(valid):
        return RefResult(float("nan"), FlsStatus.NO_RULE_FIRED)
    return RefResult(float(crisp), FlsStatus.VALID)


def _windows(s1_window, s2_window) -> Tuple[np.ndarray, np.ndarray]:
    s1 = np.asarray(s1_window, dtype=float)
    s2 = np.asarray(s2_window, dtype=float)
    if s1.shape != s2.shape:
        raise ValueError(f"window lengths differ: {s1.shape} vs {s2.shape}")
    if s1.size == 0:
        raise ValueError("MAE is undefined for an empty window")
    return s1, s2


def ref_effective_weight(s1_window, s2_window) -> float:
    """Sum of absolute discrepancies over the window."""
    s1, s2 = _windows(s1_window, s2_window)
    return float(np.abs(s1 - s2).sum())


def ref_mae(s1_window, s2_window) -> float:
    s1, s2 = _windows(s1_window, s2_window)
    return float(np.abs(s1 - s2).sum() / s1.size)


def ref_convolve(coeffs: Sequence[float], stream: Sequence[float]) -> np.ndarray:
    """Direct convolution with a zero initial state, truncated to the input."""
    stream = np.asarray(stream, dtype=float)
    return np.convolve(stream, np.asarray(coeffs, dtype=float))[: stream.size]


def ref_window_statistic(
    history: Sequence[int],
    eww: int,
    mode: ApmuMode = ApmuMode.SUM,
    tolerance_raw: int = 0,
) -> Optional[int]:
    """Naive recompute of the windowed APMU statistic from the full |dS| history.

    Works on raw U0.16 codes; returns None while fewer than `eww` samples exist.
    """
    if len(history) < eww:
        return None
    window = history[len(history) - eww :]
    if ApmuMode(mode) is ApmuMode.SUM:
        return sum(window)
    return sum(1 for value in window if value > tolerance_raw)
