"""CSV trace storage.

One row per healthy core per tick, ordered by (tick, core_id). Fixed-point
columns hold raw U0.16 codes so a trace re-parses exactly; booleans are 0/1
and an absent inclination flag is an empty field.
"""

import logging
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, List, Optional, Union

import pandas as pd

from .core import CoreOutput

logger = logging.getLogger(__name__)

FLUSH_ROWS = 50_000


@dataclass(frozen=True)
class TraceRow:
    tick: int
    core_id: int
    raw_lidar: int
    raw_radar: int
    filt_lidar: int
    filt_radar: int
    fls_crisp: int
    fls_status: str
    apmu_weight: int
    apmu_alarm: int
    incl_flag_pair: str
    mode: str

    @classmethod
    def from_output(
        cls, output: CoreOutput, inclination_flag: Optional[bool], mode: str
    ) -> "TraceRow":
        return cls(
            tick=output.tick,
            core_id=output.core_id.index,
            raw_lidar=output.raw_lidar,
            raw_radar=output.raw_radar,
            filt_lidar=output.filtered_lidar.raw,
            filt_radar=output.filtered_radar.raw,
            fls_crisp=output.crisp.raw,
            fls_status=output.fls_status.value,
            apmu_weight=output.apmu_verdict.effective_weight.raw,
            apmu_alarm=int(output.apmu_verdict.alarm),
            incl_flag_pair=(
                "" if inclination_flag is None else str(int(inclination_flag))
            ),
            mode=getattr(mode, "value", mode),
        )


TRACE_COLUMNS = [f.name for f in fields(TraceRow)]


class TraceWriter:
    """Buffers trace rows and appends them to a CSV file in chunks."""

    def __init__(self, path: Union[str, Path], flush_rows: int = FLUSH_ROWS):
        self.path = Path(path)
        self.flush_rows = flush_rows
        self.rows_written = 0
        self._buffer: List[tuple] = []
        self._last_key = None
        self.path.parent.mkdir(parents=True, exist_ok=True)
        _frame([]).to_csv(self.path, index=False, lineterminator="\n")

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def add(self, row: TraceRow) -> None:
        key = (row.tick, row.core_id)
        if self._last_key is not None and key <= self._last_key:
            raise ValueError(f"trace rows out of order: {key} after {self._last_key}")
        self._last_key = key
        self._buffer.append(astuple(row))
        if len(self._buffer) >= self.flush_rows:
            self.flush()

    def flush(self) -> None:
        if not self._buffer:
            return
        _frame(self._buffer).to_csv(
            self.path, mode="a", header=False, index=False, lineterminator="\n"
        )
        self.rows_written += len(self._buffer)
        self._buffer = []

    def close(self) -> None:
        self.flush()
        logger.debug(
            "Trace written", extra={"path": str(self.path), "rows": self.rows_written}
        )


def _frame(rows: List[tuple]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=TRACE_COLUMNS, dtype=object)


def write_trace(
    rows: Union[Iterable[TraceRow], pd.DataFrame], path: Union[str, Path]
) -> Path:
    """Write rows (or a frame read back by `read_trace`) as a CSV trace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(rows, pd.DataFrame):
        frame = rows[TRACE_COLUMNS]
    else:
        frame = _frame([astuple(row) for row in rows])
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def read_trace(path: Union[str, Path]) -> pd.DataFrame:
    """Read a trace with every field kept as its exact text."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path} is not a trace file, missing columns {missing}")
    return frame


def trace_rows(frame: pd.DataFrame) -> List[TraceRow]:
    """Typed rows from a frame returned by `read_trace`."""
    text_columns = {"fls_status", "incl_flag_pair", "mode"}
    rows = []
    for record in frame[TRACE_COLUMNS].to_dict("records"):
        values = {
            key: value if key in text_columns else int(value)
            for key, value in record.items()
        }
        rows.append(TraceRow(**values))
    return rows
