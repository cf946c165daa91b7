"""Mamdani fuzzy logic controller in fixed point.

Lidar and radar distances are fuzzified over a five-term Ruspini partition,
the eleven rules fire with min-AND and aggregate with max per output term,
and a center-of-sets weighted average produces the crisp command.
"""

import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterator, List, Optional, Sequence, Tuple

import pandas as pd

from .errors import ConfigurationError
from .numerics import (
    U0_16,
    FixedSample,
    QFormat,
    div_round,
    quantize,
    round_half_away,
)

logger = logging.getLogger(__name__)

DEFAULT_PEAKS = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_CENTERS = (0.125, 0.375, 0.625, 0.875)


class InputTerm(IntEnum):
    """Distance qualifiers: extremely near, near, middle, far, extremely far."""

    EN = 0
    N = 1
    M = 2
    F = 3
    EF = 4


class OutputTerm(IntEnum):
    """Command levels, ordered by their centers: low, middle, high, extremely high."""

    L = 0
    M = 1
    H = 2
    EH = 3


class FlsStatus(str, Enum):
    VALID = "Valid"
    NO_RULE_FIRED = "NoRuleFired"
    WARMUP = "Warmup"


@dataclass(frozen=True)
class FuzzyRule:
    lidar: InputTerm
    radar: InputTerm
    output: OutputTerm

    def __str__(self) -> str:
        return (
            f"if lidar is {self.lidar.name} and radar is {self.radar.name} "
            f"then output is {self.output.name}"
        )


@dataclass(frozen=True)
class RuleBase:
    rules: Tuple[FuzzyRule, ...]

    def __post_init__(self):
        antecedents = [(r.lidar, r.radar) for r in self.rules]
        if len(set(antecedents)) != len(antecedents):
            raise ConfigurationError("rule base has duplicate antecedents")

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self) -> Iterator[FuzzyRule]:
        return iter(self.rules)

    def lookup(self, lidar: InputTerm, radar: InputTerm) -> Optional[OutputTerm]:
        for rule in self.rules:
            if rule.lidar == lidar and rule.radar == radar:
                return rule.output
        return None

    def uncovered_pairs(self) -> List[Tuple[InputTerm, InputTerm]]:
        """Antecedent pairs no rule covers."""
        return [
            (lidar, radar)
            for lidar in InputTerm
            for radar in InputTerm
            if self.lookup(lidar, radar) is None
        ]


def default_rulebase() -> RuleBase:
    """The eleven landing rules, in firing-table order."""
    t, o = InputTerm, OutputTerm
    return RuleBase(
        (
            FuzzyRule(t.EN, t.EN, o.EH),
            FuzzyRule(t.N, t.EN, o.H),
            FuzzyRule(t.EN, t.N, o.H),
            FuzzyRule(t.N, t.N, o.H),
            FuzzyRule(t.M, t.M, o.M),
            FuzzyRule(t.F, t.M, o.M),
            FuzzyRule(t.F, t.F, o.L),
            FuzzyRule(t.EF, t.F, o.L),
            FuzzyRule(t.F, t.EF, o.L),
            FuzzyRule(t.EF, t.EF, o.L),
            FuzzyRule(t.M, t.F, o.M),
        )
    )


def degree_format(frac_bits: int) -> QFormat:
    """One integer bit so that a full membership of 1.0 is representable."""
    return QFormat(frac_bits + 1, frac_bits)


@dataclass(frozen=True)
class MembershipPartition:
    """Triangular Ruspini partition with shoulders at both ends.

    `peaks` are raw codes with `frac_bits` fraction bits; the first is 0 and
    the last is 1.0. Between adjacent peaks the two neighbouring terms
    cross-fade linearly, so degrees always sum to exactly 1.0.
    """

    peaks: Tuple[int, ...]
    frac_bits: int = 16

    @classmethod
    def from_peaks(
        cls, peaks: Sequence[float] = DEFAULT_PEAKS, frac_bits: int = 16
    ) -> "MembershipPartition":
        if len(peaks) != len(InputTerm):
            raise ConfigurationError(
                f"expected {len(InputTerm)} partition peaks, got {len(peaks)}"
            )
        if peaks[0] != 0.0 or peaks[-1] != 1.0:
            raise ConfigurationError("partition peaks must start at 0.0 and end at 1.0")
        one = 1 << frac_bits
        raw = tuple(round_half_away(p * one) for p in peaks)
        if any(b <= a for a, b in zip(raw, raw[1:])):
            raise ConfigurationError("partition peaks must be strictly increasing")
        return cls(raw, frac_bits)

    @property
    def term_count(self) -> int:
        return len(self.peaks)

    @property
    def one(self) -> int:
        return 1 << self.frac_bits

    def degrees_raw(self, x: int) -> Tuple[int, ...]:
        """Membership of raw input `x` (same fraction bits) in every term."""
        peaks = self.peaks
        degrees = [0] * len(peaks)
        if x >= peaks[-1]:
            degrees[-1] = self.one
            return tuple(degrees)
        if x <= peaks[0]:
            degrees[0] = self.one
            return tuple(degrees)
        k = 0
        while x >= peaks[k + 1]:
            k += 1
        rising = div_round((x - peaks[k]) * self.one, peaks[k + 1] - peaks[k])
        degrees[k + 1] = rising
        degrees[k] = self.one - rising
        return tuple(degrees)


@dataclass(frozen=True)
class FlsResult:
    crisp: FixedSample
    status: FlsStatus


def _to_frac(raw: int, from_frac: int, to_frac: int) -> int:
    # Truncation when narrowing; the input bus simply drops its low bits
    if to_frac >= from_frac:
        return raw << (to_frac - from_frac)
    return raw >> (from_frac - to_frac)


def _infer_raw(
    lidar: Sequence[int], radar: Sequence[int], rulebase: RuleBase
) -> List[int]:
    activations = [0] * len(OutputTerm)
    for rule in rulebase.rules:
        strength = min(lidar[rule.lidar], radar[rule.radar])
        if strength > activations[rule.output]:
            activations[rule.output] = strength
    return activations


class FlsEngine:
    """Partition, output centers, rule base and internal resolution in one unit.

    `frac_bits` sets the width of the internal value and degree buses. The
    crisp output is always returned in canonical U0.16.
    """

    def __init__(
        self,
        partition: Optional[MembershipPartition] = None,
        centers: Sequence[float] = DEFAULT_CENTERS,
        rulebase: Optional[RuleBase] = None,
        frac_bits: int = 16,
    ):
        if not 1 <= frac_bits <= 16:
            raise ConfigurationError(
                f"frac_bits must be within [1, 16], got {frac_bits}"
            )
        if len(centers) != len(OutputTerm):
            raise ConfigurationError(
                f"expected {len(OutputTerm)} output centers, got {len(centers)}"
            )
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ConfigurationError("output centers must be strictly increasing")
        if any(not 0.0 <= c < 1.0 for c in centers):
            raise ConfigurationError("output centers must lie in [0, 1)")
        self.frac_bits = frac_bits
        self.partition = partition or MembershipPartition.from_peaks(
            DEFAULT_PEAKS, frac_bits
        )
        if self.partition.frac_bits != frac_bits:
            raise ConfigurationError("partition resolution differs from the engine's")
        self.value_format = QFormat(frac_bits, frac_bits)
        self.degree_format = degree_format(frac_bits)
        self.centers = tuple(quantize(c, self.value_format).raw for c in centers)
        self.rulebase = rulebase or default_rulebase()

    @classmethod
    def from_settings(cls, settings, frac_bits: int = 16) -> "FlsEngine":
        """Build from any object exposing `input_peaks` and `output_centers`."""
        return cls(
            MembershipPartition.from_peaks(settings.input_peaks, frac_bits),
            settings.output_centers,
            frac_bits=frac_bits,
        )

    def center(self, term: OutputTerm) -> FixedSample:
        return FixedSample(
            _to_frac(self.centers[term], self.frac_bits, U0_16.frac_bits), U0_16
        )

    def fuzzify(self, x: FixedSample) -> Tuple[FixedSample, ...]:
        raw = _to_frac(x.raw, x.format.frac_bits, self.frac_bits)
        return tuple(
            FixedSample(d, self.degree_format) for d in self.partition.degrees_raw(raw)
        )

    def infer(
        self,
        lidar_degrees: Sequence[FixedSample],
        radar_degrees: Sequence[FixedSample],
    ) -> Tuple[FixedSample, ...]:
        activations = _infer_raw(
            [d.raw for d in lidar_degrees],
            [d.raw for d in radar_degrees],
            self.rulebase,
        )
        return tuple(FixedSample(a, self.degree_format) for a in activations)

    def defuzzify(
        self,
        activations: Sequence[FixedSample],
        fallback: Optional[FixedSample] = None,
    ) -> FlsResult:
        return self._defuzzify_raw([a.raw for a in activations], fallback)

    def evaluate(
        self,
        lidar: FixedSample,
        radar: FixedSample,
        fallback: Optional[FixedSample] = None,
    ) -> FlsResult:
        partition = self.partition
        lidar_deg = partition.degrees_raw(
            _to_frac(lidar.raw, lidar.format.frac_bits, self.frac_bits)
        )
        radar_deg = partition.degrees_raw(
            _to_frac(radar.raw, radar.format.frac_bits, self.frac_bits)
        )
        return self._defuzzify_raw(
            _infer_raw(lidar_deg, radar_deg, self.rulebase), fallback
        )

    def _defuzzify_raw(
        self, activations: Sequence[int], fallback: Optional[FixedSample]
    ) -> FlsResult:
        total = sum(activations)
        # Smallest nonzero activation is 1 LSB
        if total < 1:
            held = fallback or FixedSample.zero(U0_16)
            return FlsResult(held, FlsStatus.NO_RULE_FIRED)
        weighted = sum(w * c for w, c in zip(activations, self.centers))
        crisp = min(div_round(weighted, total), self.value_format.max_raw)
        crisp = _to_frac(crisp, self.frac_bits, U0_16.frac_bits)
        return FlsResult(FixedSample(crisp, U0_16), FlsStatus.VALID)


_default_engine: Optional[FlsEngine] = None


def default_engine() -> FlsEngine:
    global _default_engine
    if _default_engine is None:
        _default_engine = FlsEngine()
    return _default_engine


def fuzzify(
    x: FixedSample, partition: Optional[MembershipPartition] = None
) -> Tuple[FixedSample, ...]:
    """Membership degrees of `x` in the five input terms."""
    partition = partition or default_engine().partition
    raw = _to_frac(x.raw, x.format.frac_bits, partition.frac_bits)
    fmt = degree_format(partition.frac_bits)
    return tuple(FixedSample(d, fmt) for d in partition.degrees_raw(raw))


def infer(
    lidar_degrees: Sequence[FixedSample],
    radar_degrees: Sequence[FixedSample],
    rulebase: Optional[RuleBase] = None,
) -> Tuple[FixedSample, ...]:
    """Per-output-term activations: min over antecedents, max over rules."""
    fmt = lidar_degrees[0].format
    activations = _infer_raw(
        [d.raw for d in lidar_degrees],
        [d.raw for d in radar_degrees],
        rulebase or default_engine().rulebase,
    )
    return tuple(FixedSample(a, fmt) for a in activations)


def defuzzify(
    activations: Sequence[FixedSample], fallback: Optional[FixedSample] = None
) -> FlsResult:
    return default_engine().defuzzify(activations, fallback)


def fls_eval(lidar: FixedSample, radar: FixedSample) -> FlsResult:
    return default_engine().evaluate(lidar, radar)


def fls_surface(engine: FlsEngine, n: int = 64) -> pd.DataFrame:
    """Crisp output over an n x n grid of normalized inputs.

    Returns one row per grid point with columns lidar, radar, crisp, status;
    crisp is NaN where no rule fired.
    """
    points = [quantize(i / n) for i in range(n)]
    rows = []
    for lidar in points:
        for radar in points:
            result = engine.evaluate(lidar, radar)
            valid = result.status is FlsStatus.VALID
            rows.append(
                {
                    "lidar": lidar.raw / U0_16.one,
                    "radar": radar.raw / U0_16.one,
                    "crisp": result.crisp.raw / U0_16.one if valid else float("nan"),
                    "status": result.status.value,
                }
            )
    return pd.DataFrame(rows)
