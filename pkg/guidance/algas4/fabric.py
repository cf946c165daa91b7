"""The four-core decentralized system.

A fabric tick runs in four phases:

1. every healthy core ticks (optionally on a worker pool); the pool join is
   the barrier,
2. each core's DIC unit packs its output and the HSDCI links move packets,
3. opposed pairs compare the lagged distances delivered over the links,
4. the system mode is updated and the central processor aggregates the
   crisp commands of the healthy pairs.
"""

import logging
import struct
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, FrozenSet, List, Optional, Sequence, Tuple

from .core import CORE_COUNT, Core, CoreId, CoreOutput
from .errors import ChecksumError, ConfigurationError
from .numerics import U0_16, FixedSample, abs_diff, div_round, quantize

logger = logging.getLogger(__name__)

PAIRS: Tuple[Tuple[int, int], ...] = ((0, 2), (1, 3))

FLAG_ALARM = 0x01
FLAG_WARMUP = 0x02

# seq, tick, core_id, distance, crisp, flags
_PAYLOAD = struct.Struct("<IIBHHB")
_CHECKSUM = struct.Struct("<H")
PACKET_SIZE = _PAYLOAD.size + _CHECKSUM.size


def ones_complement_sum(data: bytes) -> int:
    """16-bit ones'-complement sum of little-endian words (odd tail zero-padded)."""
    if len(data) % 2:
        data = data + b"\x00"
    total = 0
    for (word,) in struct.iter_unpack("<H", data):
        total += word
        total = (total & 0xFFFF) + (total >> 16)
    return total & 0xFFFF


@dataclass(frozen=True)
class DicPacket:
    """Inter-core exchange payload; the checksum is derived from the fields."""

    seq: int
    tick: int
    core_id: int
    distance: FixedSample
    crisp: FixedSample
    apmu_alarm: bool
    warmup: bool = False
    checksum: int = field(init=False, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "checksum", ones_complement_sum(self.payload()))

    def payload(self) -> bytes:
        flags = (FLAG_ALARM if self.apmu_alarm else 0) | (
            FLAG_WARMUP if self.warmup else 0
        )
        return _PAYLOAD.pack(
            self.seq & 0xFFFFFFFF,
            self.tick & 0xFFFFFFFF,
            self.core_id,
            self.distance.raw,
            self.crisp.raw,
            flags,
        )

    def encode(self) -> bytes:
        return self.payload() + _CHECKSUM.pack(self.checksum)

    @classmethod
    def decode(cls, data: bytes) -> "DicPacket":
        if len(data) != PACKET_SIZE:
            raise ChecksumError(f"packet is {len(data)} bytes, expected {PACKET_SIZE}")
        payload, trailer = data[: _PAYLOAD.size], data[_PAYLOAD.size :]
        (received,) = _CHECKSUM.unpack(trailer)
        if ones_complement_sum(payload) != received:
            raise ChecksumError("DIC packet checksum mismatch")
        seq, tick, core_id, distance, crisp, flags = _PAYLOAD.unpack(payload)
        return cls(
            seq=seq,
            tick=tick,
            core_id=core_id,
            distance=FixedSample(distance, U0_16),
            crisp=FixedSample(crisp, U0_16),
            apmu_alarm=bool(flags & FLAG_ALARM),
            warmup=bool(flags & FLAG_WARMUP),
        )


class DicUnit:
    """Packs one core's per-tick output for the other cores."""

    def __init__(self, core_id: int):
        self.core_id = core_id
        self.seq = 0

    def build_packet(self, output: CoreOutput) -> DicPacket:
        self.seq += 1
        return DicPacket(
            seq=self.seq,
            tick=output.tick,
            core_id=self.core_id,
            distance=output.distance,
            crisp=output.crisp,
            apmu_alarm=output.apmu_verdict.alarm,
            warmup=output.warmup,
        )


class HsdciLink:
    """One-directional link with whole-tick latency and a bounded queue.

    A full queue drops its oldest packet and counts the event as backpressure.
    """

    def __init__(
        self, source: int, destination: int, latency_ticks: int = 1, capacity: int = 4
    ):
        if latency_ticks < 1:
            raise ConfigurationError(f"latency_ticks must be >= 1, got {latency_ticks}")
        if capacity < 1:
            raise ConfigurationError(f"queue capacity must be >= 1, got {capacity}")
        self.source = source
        self.destination = destination
        self.latency_ticks = latency_ticks
        self.capacity = capacity
        self.queue: Deque[Tuple[int, bytes]] = deque()
        self.backpressure_count = 0
        self.checksum_failures = 0
        self.late_count = 0
        self.delivered_count = 0

    def send(self, data: bytes, tick: int) -> None:
        if len(self.queue) >= self.capacity:
            self.queue.popleft()
            self.backpressure_count += 1
            logger.warning(
                "HSDCI queue full, dropped oldest packet",
                extra={"link": f"{self.source}->{self.destination}", "tick": tick},
            )
        self.queue.append((tick + self.latency_ticks, data))

    def deliver(self, current_tick: int) -> List[DicPacket]:
        delivered = []
        while self.queue and self.queue[0][0] <= current_tick:
            due, data = self.queue.popleft()
            if due < current_tick:
                self.late_count += 1
            try:
                delivered.append(DicPacket.decode(data))
            except ChecksumError:
                self.checksum_failures += 1
                logger.warning(
                    "Discarded corrupted DIC packet",
                    extra={"link": f"{self.source}->{self.destination}"},
                )
        self.delivered_count += len(delivered)
        return delivered

    def exchange(self, data: Optional[bytes], current_tick: int) -> List[DicPacket]:
        """Deliver what is due at `current_tick`, then enqueue `data` if any."""
        delivered = self.deliver(current_tick)
        if data is not None:
            self.send(data, current_tick)
        return delivered


def packets_in_flight(latency_ticks: int, topology: str = "pairwise") -> int:
    """Packets a link holds in steady state; ring links also carry relays."""
    return latency_ticks * (2 if topology == "ring" else 1)


def differential_check(
    d_a: FixedSample, d_opposite: FixedSample, tolerance: FixedSample
) -> bool:
    """True when opposite-side distances disagree by more than the tolerance."""
    return abs_diff(d_a, d_opposite).raw > tolerance.raw


class SystemMode(str, Enum):
    FULL_AUTO = "FullAuto"
    DEGRADED_PAIR = "DegradedPair"
    SEMI_AUTO_HANDOVER = "SemiAutoHandover"


def failed_pairs(failed_cores: FrozenSet[int]) -> List[Tuple[int, int]]:
    return [pair for pair in PAIRS if any(c in failed_cores for c in pair)]


def next_mode(
    mode: SystemMode,
    failed_cores: FrozenSet[int],
    pilot_permit: bool,
    sustained_alarm: bool,
) -> SystemMode:
    """Mode transition; semi-auto handover is absorbing."""
    if mode is SystemMode.SEMI_AUTO_HANDOVER:
        return mode
    broken = failed_pairs(failed_cores)
    if sustained_alarm or len(broken) > 1:
        return SystemMode.SEMI_AUTO_HANDOVER
    if len(broken) == 1 and pilot_permit:
        return SystemMode.DEGRADED_PAIR
    if broken:
        return SystemMode.SEMI_AUTO_HANDOVER
    return SystemMode.FULL_AUTO


AGGREGATIONS = ("mean", "min", "max")


def aggregate(values: Sequence[FixedSample], method: str = "mean") -> FixedSample:
    raws = [v.raw for v in values]
    if method == "min":
        return FixedSample(min(raws), U0_16)
    if method == "max":
        return FixedSample(max(raws), U0_16)
    return FixedSample.saturating(div_round(sum(raws), len(raws)), U0_16)


@dataclass(frozen=True)
class SystemOutput:
    tick: int
    per_core: Tuple[Optional[CoreOutput], ...]
    inclination_flags: Dict[Tuple[int, int], Optional[bool]]
    aggregate_crisp: Optional[FixedSample]
    mode: SystemMode

    def pair_flag(self, core: int) -> Optional[bool]:
        for pair, flag in self.inclination_flags.items():
            if core in pair:
                return flag
        return None


class Fabric:
    """Four cores, their DIC units and the HSDCI links between them."""

    def __init__(
        self,
        cores: Sequence[Core],
        latency_ticks: int = 1,
        queue_capacity: int = 4,
        topology: str = "pairwise",
        tolerance: FixedSample = quantize(0.05),
        aggregation: str = "mean",
        handover_k: int = 8,
        pilot_permit: bool = True,
        workers: int = 1,
    ):
        if len(cores) != CORE_COUNT:
            raise ConfigurationError(f"expected {CORE_COUNT} cores, got {len(cores)}")
        if topology not in ("pairwise", "ring"):
            raise ConfigurationError(f"unknown link topology {topology!r}")
        if aggregation not in AGGREGATIONS:
            raise ConfigurationError(f"unknown aggregation {aggregation!r}")
        if handover_k < 1:
            raise ConfigurationError(f"handover_k must be >= 1, got {handover_k}")
        in_flight = packets_in_flight(latency_ticks, topology)
        if queue_capacity < in_flight:
            raise ConfigurationError(
                f"queue_capacity {queue_capacity} is below the {in_flight} packets "
                f"in flight on a {topology} link with latency {latency_ticks}"
            )
        self.cores = list(cores)
        self.topology = topology
        self.tolerance = tolerance
        self.aggregation = aggregation
        self.handover_k = handover_k
        self.pilot_permit = pilot_permit
        self.workers = max(1, int(workers))
        self.dic = [DicUnit(i) for i in range(CORE_COUNT)]
        if topology == "pairwise":
            routes = [(i, CoreId(i).opposite.index) for i in range(CORE_COUNT)]
        else:
            routes = [(i, (i + 1) % CORE_COUNT) for i in range(CORE_COUNT)]
        self.links: Dict[Tuple[int, int], HsdciLink] = {
            route: HsdciLink(*route, latency_ticks, queue_capacity)
            for route in sorted(routes)
        }
        self.delivery_lag = latency_ticks * (2 if topology == "ring" else 1)
        self.relayed_count = 0
        self.tick_count = 0
        self.mode = SystemMode.FULL_AUTO
        self.mode_log: List[Dict[str, object]] = []
        self._alarm_run = [0] * CORE_COUNT
        self._flags: Dict[Tuple[int, int], Optional[bool]] = {p: None for p in PAIRS}
        self._compared_at: Dict[Tuple[int, int], Optional[int]] = {
            p: None for p in PAIRS
        }
        self._executor = (
            ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        )

    def __enter__(self) -> "Fabric":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    @property
    def failed_cores(self) -> FrozenSet[int]:
        return frozenset(i for i, core in enumerate(self.cores) if not core.is_healthy)

    def fail_core(self, index: int) -> None:
        self.cores[index].fail()
        self._alarm_run[index] = 0

    def _outgoing(self, index: int) -> HsdciLink:
        return next(link for (src, _), link in self.links.items() if src == index)

    def _tick_cores(
        self, readings: Sequence[Tuple[int, int]]
    ) -> Tuple[Optional[CoreOutput], ...]:
        healthy = [core for core in self.cores if core.is_healthy]

        def run(core: Core) -> CoreOutput:
            raw_lidar, raw_radar = readings[core.core_id.index]
            return core.tick(raw_lidar, raw_radar)

        if self._executor is not None:
            results = list(self._executor.map(run, healthy))
        else:
            results = [run(core) for core in healthy]
        outputs: List[Optional[CoreOutput]] = [None] * CORE_COUNT
        for output in results:
            outputs[output.core_id.index] = output
        return tuple(outputs)

    def _exchange(
        self, outputs: Sequence[Optional[CoreOutput]]
    ) -> Dict[int, List[DicPacket]]:
        """Move packets over every link and collect what reached the opposite core."""
        encoded: Dict[int, bytes] = {}
        for index, output in enumerate(outputs):
            if output is not None:
                encoded[index] = self.dic[index].build_packet(output).encode()

        inbox: Dict[int, List[DicPacket]] = {i: [] for i in range(CORE_COUNT)}
        relays: List[Tuple[int, DicPacket]] = []
        for (src, dst), link in self.links.items():
            for packet in link.exchange(encoded.get(src), self.tick_count):
                if not self.cores[dst].is_healthy:
                    continue
                if CoreId(packet.core_id).opposite.index == dst:
                    inbox[dst].append(packet)
                else:
                    relays.append((dst, packet))
        for via, packet in relays:
            self._outgoing(via).send(packet.encode(), self.tick_count)
            self.relayed_count += 1
        return inbox

    def _expire_flag(self, pair: Tuple[int, int]) -> None:
        """Drop a carried flag once no fresh packets arrived for one extra lag."""
        stamp = self._compared_at[pair]
        if stamp is None or self.tick_count - stamp <= 2 * self.delivery_lag:
            return
        if self._flags[pair] is not None:
            logger.warning(
                "Inclination flag expired, no fresh packets from the pair",
                extra={"pair": f"{pair[0]}-{pair[1]}", "tick": self.tick_count},
            )
        self._flags[pair] = None
        self._compared_at[pair] = None

    def _check_pairs(
        self, inbox: Dict[int, List[DicPacket]]
    ) -> Dict[Tuple[int, int], Optional[bool]]:
        failed = self.failed_cores
        for a, b in PAIRS:
            if a in failed or b in failed:
                self._flags[(a, b)] = None
                self._compared_at[(a, b)] = None
                continue
            from_a = {p.tick: p for p in inbox[b] if p.core_id == a}
            from_b = {p.tick: p for p in inbox[a] if p.core_id == b}
            common = sorted(set(from_a) & set(from_b))
            if not common:
                self._expire_flag((a, b))
                continue
            self._compared_at[(a, b)] = common[-1]
            pa, pb = from_a[common[-1]], from_b[common[-1]]
            if pa.warmup or pb.warmup:
                self._flags[(a, b)] = None
            else:
                self._flags[(a, b)] = differential_check(
                    pa.distance, pb.distance, self.tolerance
                )
        return dict(self._flags)

    def update_mode(self, pilot_permit: Optional[bool] = None) -> SystemMode:
        permit = self.pilot_permit if pilot_permit is None else pilot_permit
        sustained = any(run >= self.handover_k for run in self._alarm_run)
        mode = next_mode(self.mode, self.failed_cores, permit, sustained)
        if mode is not self.mode:
            logger.info(
                "System mode changed",
                extra={
                    "tick": self.tick_count,
                    "from_mode": self.mode.value,
                    "to_mode": mode.value,
                },
            )
            self.mode_log.append(
                {"tick": self.tick_count, "from": self.mode.value, "to": mode.value}
            )
            self.mode = mode
        return mode

    def _aggregate(
        self, outputs: Sequence[Optional[CoreOutput]]
    ) -> Optional[FixedSample]:
        crisps = []
        for pair in PAIRS:
            members = [outputs[i] for i in pair]
            if all(m is not None for m in members):
                crisps.extend(m.crisp for m in members)
        if not crisps:
            return None
        return aggregate(crisps, self.aggregation)

    def tick(self, readings: Sequence[Tuple[int, int]]) -> SystemOutput:
        """Advance every core one sample period and exchange their results."""
        if len(readings) != CORE_COUNT:
            raise ConfigurationError(
                f"expected {CORE_COUNT} reading pairs, got {len(readings)}"
            )
        self.tick_count += 1
        outputs = self._tick_cores(readings)
        inbox = self._exchange(outputs)
        flags = self._check_pairs(inbox)

        for index, output in enumerate(outputs):
            if output is not None and output.apmu_verdict.alarm:
                self._alarm_run[index] += 1
            else:
                self._alarm_run[index] = 0
        mode = self.update_mode()

        return SystemOutput(
            tick=self.tick_count,
            per_core=outputs,
            inclination_flags=flags,
            aggregate_crisp=self._aggregate(outputs),
            mode=mode,
        )

    def link_counters(self) -> Dict[str, Dict[str, int]]:
        return {
            f"{src}->{dst}": {
                "backpressure": link.backpressure_count,
                "checksum_failures": link.checksum_failures,
                "late": link.late_count,
                "delivered": link.delivered_count,
            }
            for (src, dst), link in self.links.items()
        }
