"""15-tap fixed-point FIR pre-filters, one per sensor channel.

Coefficients are Q1.15 and baked at construction. Products accumulate at full
precision on a 48-bit bus and are narrowed to U0.16 once per output, so a
negative response clamps to zero.
"""

import logging
from collections import deque
from typing import Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, FormatMismatchError
from .numerics import (
    FIR_ACC_BITS,
    Q1_15,
    U0_16,
    FixedSample,
    narrow,
    quantize,
    saturate_bits,
)

logger = logging.getLogger(__name__)

TAPS = 15
DEFAULT_CUTOFF = 0.1

# Fraction bits of a U0.16 x Q1.15 product
_PRODUCT_FRAC = U0_16.frac_bits + Q1_15.frac_bits


def design_lowpass(
    taps: int = TAPS, cutoff: float = DEFAULT_CUTOFF
) -> Tuple[float, ...]:
    """Hamming-windowed sinc low-pass, normalized to unit DC gain.

    Args:
        taps: Filter length
        cutoff: Cutoff frequency as a fraction of the sample rate

    Returns:
        Tuple of real coefficients summing to 1.0
    """
    n = np.arange(taps) - (taps - 1) / 2
    h = 2 * cutoff * np.sinc(2 * cutoff * n) * np.hamming(taps)
    h = h / h.sum()
    return tuple(float(c) for c in h)


def quantize_coefficients(coeffs: Sequence[float]) -> Tuple[FixedSample, ...]:
    """Quantize real coefficients to Q1.15.

    When the reals sum to 1.0 the quantized sum is pinned to 1.0 - 1 LSB by
    folding the rounding residual into the largest tap.
    """
    quantized = [quantize(c, Q1_15).raw for c in coeffs]
    if abs(sum(coeffs) - 1.0) < 1e-9:
        residual = Q1_15.max_raw - sum(quantized)
        center = int(np.argmax(np.abs(coeffs)))
        quantized[center] += residual
    return tuple(FixedSample.saturating(raw, Q1_15) for raw in quantized)


def default_coefficients() -> Tuple[FixedSample, ...]:
    return quantize_coefficients(design_lowpass())


class FirFilter:
    """Direct-form FIR filter with a zero-initialized delay line."""

    def __init__(self, coeffs: Sequence[Union[FixedSample, float]]):
        if len(coeffs) != TAPS:
            raise ConfigurationError(f"expected {TAPS} taps, got {len(coeffs)}")
        if all(isinstance(c, FixedSample) for c in coeffs):
            for c in coeffs:
                if c.format != Q1_15:
                    raise ConfigurationError(
                        f"FIR coefficients must be {Q1_15}, got {c.format}"
                    )
            self._coeffs = tuple(coeffs)
        else:
            self._coeffs = tuple(quantize(float(c), Q1_15) for c in coeffs)
        self._raw_coeffs = tuple(c.raw for c in self._coeffs)
        self._delay = deque([0] * TAPS, maxlen=TAPS)
        self.samples_seen = 0

    @property
    def coefficients(self) -> Tuple[FixedSample, ...]:
        return self._coeffs

    @property
    def delay_line(self) -> Tuple[FixedSample, ...]:
        """Newest sample first."""
        return tuple(FixedSample(raw, U0_16) for raw in self._delay)

    @property
    def dc_gain_raw(self) -> int:
        """Sum of coefficients in Q1.15 LSBs."""
        return sum(self._raw_coeffs)

    @property
    def warm(self) -> bool:
        return self.samples_seen >= TAPS

    def step(self, sample: FixedSample) -> FixedSample:
        if sample.format != U0_16:
            raise FormatMismatchError(
                f"FIR expects {U0_16} samples, got {sample.format}"
            )
        self._delay.appendleft(sample.raw)
        acc = 0
        for c, x in zip(self._raw_coeffs, self._delay):
            acc += c * x
        acc = saturate_bits(acc, FIR_ACC_BITS)
        self.samples_seen += 1
        return narrow(acc, _PRODUCT_FRAC, U0_16)

    def reset(self) -> "FirFilter":
        """Zero the delay line and the sample counter."""
        self._delay = deque([0] * TAPS, maxlen=TAPS)
        self.samples_seen = 0
        return self
