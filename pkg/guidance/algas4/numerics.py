"""Fixed-point sample representation and saturating arithmetic.

Everything downstream of the SIU works on scaled integers. Results that leave
a format's range are clamped to the nearest bound, never wrapped. Rounding is
half-away-from-zero everywhere.
"""

import math
from dataclasses import dataclass

from .errors import ConfigurationError, FormatMismatchError


@dataclass(frozen=True, slots=True)
class QFormat:
    """Bit width, fraction bits and signedness of a fixed-point bus."""

    total_bits: int
    frac_bits: int
    signed: bool = False

    def __post_init__(self):
        if not 1 <= self.total_bits <= 32:
            raise ConfigurationError(
                f"total_bits must be within [1, 32], got {self.total_bits}"
            )
        if not 0 <= self.frac_bits <= self.total_bits:
            raise ConfigurationError(
                f"frac_bits must be within [0, {self.total_bits}], "
                f"got {self.frac_bits}"
            )

    @property
    def min_raw(self) -> int:
        return -(1 << (self.total_bits - 1)) if self.signed else 0

    @property
    def max_raw(self) -> int:
        if self.signed:
            return (1 << (self.total_bits - 1)) - 1
        return (1 << self.total_bits) - 1

    @property
    def one(self) -> int:
        """Raw code of 1.0 (may lie outside the range, e.g. for U0.16)."""
        return 1 << self.frac_bits

    def unsigned(self) -> "QFormat":
        return QFormat(self.total_bits, self.frac_bits, signed=False)

    def __str__(self) -> str:
        prefix = "Q" if self.signed else "U"
        int_bits = self.total_bits - self.frac_bits
        return f"{prefix}{int_bits}.{self.frac_bits}"


# Canonical distance/command format
U0_16 = QFormat(16, 16)
# FIR coefficients
Q1_15 = QFormat(16, 15, signed=True)
# Membership degrees and rule activations; 1.0 is representable
U1_16 = QFormat(17, 16)
# APMU windowed sums
WIDE_U16_16 = QFormat(32, 16)
# APMU event counts
COUNT32 = QFormat(32, 0)

# The FIR accumulator bus: fifteen U0.16 x Q1.15 products need more than 32 bits
FIR_ACC_BITS = 48


@dataclass(frozen=True, slots=True)
class FixedSample:
    """A scaled integer together with the format it lives in."""

    raw: int
    format: QFormat

    def __post_init__(self):
        if not self.format.min_raw <= self.raw <= self.format.max_raw:
            raise ValueError(
                f"raw {self.raw} outside {self.format} range "
                f"[{self.format.min_raw}, {self.format.max_raw}]"
            )

    @classmethod
    def zero(cls, fmt: QFormat = U0_16) -> "FixedSample":
        return cls(0, fmt)

    @classmethod
    def max_of(cls, fmt: QFormat = U0_16) -> "FixedSample":
        return cls(fmt.max_raw, fmt)

    @classmethod
    def saturating(cls, raw: int, fmt: QFormat = U0_16) -> "FixedSample":
        return cls(saturate(raw, fmt), fmt)

    def __float__(self) -> float:
        return dequantize(self)


def saturate(raw: int, fmt: QFormat) -> int:
    """Clamp a raw integer into the representable range of `fmt`."""
    if raw > fmt.max_raw:
        return fmt.max_raw
    if raw < fmt.min_raw:
        return fmt.min_raw
    return raw


def saturate_bits(value: int, bits: int, signed: bool = True) -> int:
    """Clamp to an arbitrary bus width (used for accumulators wider than 32 bits)."""
    if signed:
        hi = (1 << (bits - 1)) - 1
        lo = -(1 << (bits - 1))
    else:
        hi = (1 << bits) - 1
        lo = 0
    return hi if value > hi else lo if value < lo else value


def round_shift(value: int, shift: int) -> int:
    """Divide by 2**shift, rounding half away from zero."""
    if shift <= 0:
        return value << -shift
    half = 1 << (shift - 1)
    if value >= 0:
        return (value + half) >> shift
    return -((-value + half) >> shift)


def div_round(num: int, den: int) -> int:
    """Integer division rounding half away from zero (den must be positive)."""
    if num >= 0:
        return (2 * num + den) // (2 * den)
    return -((-2 * num + den) // (2 * den))


def round_half_away(value: float) -> int:
    if value >= 0:
        return int(math.floor(value + 0.5))
    return -int(math.floor(-value + 0.5))


def quantize(value: float, fmt: QFormat = U0_16) -> FixedSample:
    """Nearest representable value, saturating at the range edges."""
    scaled = value * fmt.one
    if scaled >= fmt.max_raw:
        return FixedSample(fmt.max_raw, fmt)
    if scaled <= fmt.min_raw:
        return FixedSample(fmt.min_raw, fmt)
    return FixedSample(saturate(round_half_away(scaled), fmt), fmt)


def dequantize(sample: FixedSample) -> float:
    return sample.raw / sample.format.one


def narrow(raw: int, from_frac: int, fmt: QFormat) -> FixedSample:
    """Rescale a wide raw value with `from_frac` fraction bits into `fmt`."""
    return FixedSample(saturate(round_shift(raw, from_frac - fmt.frac_bits), fmt), fmt)


def _check_same(a: FixedSample, b: FixedSample) -> None:
    if a.format != b.format:
        raise FormatMismatchError(f"format mismatch: {a.format} vs {b.format}")


def sat_add(a: FixedSample, b: FixedSample) -> FixedSample:
    _check_same(a, b)
    return FixedSample(saturate(a.raw + b.raw, a.format), a.format)


def abs_diff(a: FixedSample, b: FixedSample) -> FixedSample:
    """|a - b| in the unsigned variant of the operands' format."""
    _check_same(a, b)
    out = a.format.unsigned()
    return FixedSample(saturate(abs(a.raw - b.raw), out), out)
