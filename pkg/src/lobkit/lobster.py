"""LOBSTER-style message and snapshot file handling.

Message files: CSV with six columns and no header,
    time, type, order_id, size, price, direction
where time is decimal seconds after midnight with up to nine fractional
digits, prices are integers in 1e-4 currency units, and direction is +1
for buy orders and -1 for sell orders (for executions it names the side
of the resting order that was hit). Types: 1 new limit, 2 partial cancel,
3 delete, 4 visible execution, 5 hidden execution, 7 trading halt.

Snapshot files: one row per message, 4k columns
    ask price 1, ask size 1, bid price 1, bid size 1, ..., level k
with 9999999999 / -9999999999 marking unoccupied ask/bid levels.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional

import numpy as np
import pandas as pd

from . import book as _book
from .records import BUY, SELL, DEFAULT_TICK, BookEvent, EventKind, Quote

NS = 1_000_000_000

MSG_NEW = 1
MSG_PARTIAL_CANCEL = 2
MSG_DELETE = 3
MSG_EXEC_VISIBLE = 4
MSG_EXEC_HIDDEN = 5
MSG_HALT = 7

KNOWN_TYPES = (MSG_NEW, MSG_PARTIAL_CANCEL, MSG_DELETE, MSG_EXEC_VISIBLE, MSG_EXEC_HIDDEN, MSG_HALT)

_KIND_BY_TYPE = {
    MSG_NEW: EventKind.LIMIT_ARRIVAL,
    MSG_PARTIAL_CANCEL: EventKind.CANCEL,
    MSG_DELETE: EventKind.CANCEL,
    MSG_EXEC_VISIBLE: EventKind.EXECUTION,
    MSG_EXEC_HIDDEN: EventKind.HIDDEN_EXECUTION,
    MSG_HALT: EventKind.HALT,
}


class FormatError(Exception):
    """Malformed or inconsistent message/snapshot input."""


class RawMessage(NamedTuple):
    time: int       # ns after midnight
    mtype: int
    order_id: int
    size: int
    price: int
    direction: int


def _parse_time_ns(text: str) -> int:
    whole, dot, frac = text.partition(".")
    if dot and len(frac) > 9:
        raise ValueError(f"more than 9 fractional digits in time {text!r}")
    frac = frac.ljust(9, "0")
    return int(whole) * NS + (int(frac) if frac else 0)


def parse_messages(source) -> Iterator[RawMessage]:
    """Stream messages from a path or open text source, one at a time.

    Memory use is independent of file size. Times convert exactly (no
    floats); short fractions are right-padded with zeros. Raises
    FormatError with a 1-based line number on malformed rows, time
    regressions, and unknown message types.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rt") as fh:
            yield from parse_messages(fh)
        return
    prev_time = -1
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise FormatError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            time = _parse_time_ns(parts[0])
            mtype = int(parts[1])
            order_id = int(parts[2])
            size = int(parts[3])
            price = int(parts[4])
            direction = int(parts[5])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if mtype not in KNOWN_TYPES:
            raise FormatError(f"line {lineno}: unknown message type {mtype}")
        if time < prev_time:
            raise FormatError(f"line {lineno}: time regression {time} < {prev_time}")
        prev_time = time
        if mtype != MSG_HALT:
            if size <= 0:
                raise FormatError(f"line {lineno}: non-positive size {size}")
            if direction not in (BUY, SELL):
                raise FormatError(f"line {lineno}: direction must be 1 or -1, got {direction}")
            if price <= 0:
                raise FormatError(f"line {lineno}: non-positive price {price}")
        yield RawMessage(time, mtype, order_id, size, price, direction)


@dataclass
class MessageTable:
    """Columnar message stream (int64 throughout, int8 for type/direction)."""

    time: np.ndarray
    mtype: np.ndarray
    order_id: np.ndarray
    size: np.ndarray
    price: np.ndarray
    direction: np.ndarray

    def __len__(self) -> int:
        return len(self.time)

    def __getitem__(self, sel) -> "MessageTable":
        return MessageTable(
            self.time[sel], self.mtype[sel], self.order_id[sel],
            self.size[sel], self.price[sel], self.direction[sel],
        )

    def row(self, i: int) -> RawMessage:
        return RawMessage(
            int(self.time[i]), int(self.mtype[i]), int(self.order_id[i]),
            int(self.size[i]), int(self.price[i]), int(self.direction[i]),
        )

    def __iter__(self) -> Iterator[RawMessage]:
        for i in range(len(self)):
            yield self.row(i)

    @classmethod
    def from_messages(cls, messages: Iterable[RawMessage]) -> "MessageTable":
        rows = list(messages)
        if rows:
            cols = list(zip(*rows))
        else:
            cols = [[]] * 6
        return cls(
            np.asarray(cols[0], dtype=np.int64),
            np.asarray(cols[1], dtype=np.int8),
            np.asarray(cols[2], dtype=np.int64),
            np.asarray(cols[3], dtype=np.int64),
            np.asarray(cols[4], dtype=np.int64),
            np.asarray(cols[5], dtype=np.int8),
        )

    def to_csv_bytes(self) -> bytes:
        return _book.messages_to_csv(
            self.time, self.mtype, self.order_id, self.size, self.price, self.direction
        )

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_csv_bytes())


def serialize_messages(messages, sink=None):
    """Canonical CSV (nine fractional time digits). parse -> serialize ->
    parse is the identity; on already-canonical files the bytes round-trip."""
    table = messages if isinstance(messages, MessageTable) else MessageTable.from_messages(messages)
    data = table.to_csv_bytes()
    if sink is None:
        return data
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)
    return None

_READ_CHUNK = 2_000_000


def _validate_table(time, mtype, size, price, direction) -> None:
    bad = np.flatnonzero(~np.isin(mtype, KNOWN_TYPES))
    if bad.size:
        i = bad[0]
        raise FormatError(f"line {i + 1}: unknown message type {mtype[i]}")
    if len(time) > 1:
        reg = np.flatnonzero(np.diff(time) < 0)
        if reg.size:
            i = reg[0] + 1
            raise FormatError(f"line {i + 1}: time regression {time[i]} < {time[i - 1]}")
    touches = mtype != MSG_HALT
    bad = np.flatnonzero(touches & (size <= 0))
    if bad.size:
        i = bad[0]
        raise FormatError(f"line {i + 1}: non-positive size {size[i]}")
    bad = np.flatnonzero(touches & (direction != BUY) & (direction != SELL))
    if bad.size:
        i = bad[0]
        raise FormatError(f"line {i + 1}: direction must be 1 or -1, got {direction[i]}")
    bad = np.flatnonzero(touches & (price <= 0))
    if bad.size:
        i = bad[0]
        raise FormatError(f"line {i + 1}: non-positive price {price[i]}")


def read_messages(path) -> MessageTable:
    """Fast bulk reader (chunked, so peak memory stays bounded).

    Times are read as float64 and converted to integer nanoseconds; for
    well-formed inputs (<= 9 fractional digits, < ~10^5 seconds) the
    conversion is exact. Falls back to the streaming parser to produce a
    precise diagnostic when the file does not scan cleanly.
    """
    names = ["time", "mtype", "order_id", "size", "price", "direction"]
    try:
        chunks = []
        for chunk in pd.read_csv(
            path,
            header=None,
            names=names,
            dtype={
                "time": np.float64,
                "mtype": np.int8,
                "order_id": np.int64,
                "size": np.int64,
                "price": np.int64,
                "direction": np.int8,
            },
            chunksize=_READ_CHUNK,
        ):
            chunks.append(
                MessageTable(
                    np.round(chunk["time"].to_numpy() * 1e9).astype(np.int64),
                    chunk["mtype"].to_numpy(),
                    chunk["order_id"].to_numpy(),
                    chunk["size"].to_numpy(),
                    chunk["price"].to_numpy(),
                    chunk["direction"].to_numpy(),
                )
            )
    except (ValueError, pd.errors.ParserError):
        # slow path locates the offending line and raises FormatError
        return MessageTable.from_messages(parse_messages(path))
    if not chunks:
        table = MessageTable.from_messages([])
    elif len(chunks) == 1:
        table = chunks[0]
    else:
        table = MessageTable(
            *(np.concatenate([getattr(c, f) for c in chunks])
              for f in ("time", "mtype", "order_id", "size", "price", "direction"))
        )
    _validate_table(table.time, table.mtype, table.size, table.price, table.direction)
    return table


def read_snapshots(path) -> np.ndarray:
    """Snapshot file -> int64 array of shape (n_messages, 4k)."""
    frames = [
        chunk.to_numpy(dtype=np.int64)
        for chunk in pd.read_csv(path, header=None, chunksize=_READ_CHUNK)
    ]
    if not frames:
        return np.zeros((0, 0), dtype=np.int64)
    return np.vstack(frames)


def write_snapshots(snapshots: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_book.snapshots_to_csv(snapshots))


@dataclass
class Replay:
    """Result of applying a message stream to a fresh book.

    Per-message columns hold the post-message best quotes/volumes and the
    flow delta the message applied at (ev_side, ev_price). Iterating
    yields (quote_before, BookEvent, quote_after) triples.
    """

    table: MessageTable
    bid: np.ndarray
    ask: np.ndarray
    bid_vol: np.ndarray
    ask_vol: np.ndarray
    ev_side: np.ndarray
    ev_price: np.ndarray
    ev_delta: np.ndarray
    book: object
    tick: int
    snapshots: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.table)

    def quote_after(self, i: int) -> Quote:
        return Quote(
            int(self.bid[i]) or None,
            int(self.ask[i]) or None,
            int(self.bid_vol[i]),
            int(self.ask_vol[i]),
        )

    def quote_before(self, i: int) -> Quote:
        if i == 0:
            return Quote(None, None, 0, 0)
        return self.quote_after(i - 1)

    def event(self, i: int) -> BookEvent:
        m = self.table
        return BookEvent(
            _KIND_BY_TYPE[int(m.mtype[i])],
            int(m.time[i]),
            int(self.ev_side[i]),
            int(self.ev_price[i]) if self.ev_price[i] else int(m.price[i]),
            int(self.ev_delta[i]),
            int(m.order_id[i]),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self.quote_before(i), self.event(i), self.quote_after(i)

    @property
    def quote_changed(self) -> np.ndarray:
        """Per message: did either best price move."""
        pb = np.empty_like(self.bid)
        pa = np.empty_like(self.ask)
        pb[0] = 0
        pa[0] = 0
        pb[1:] = self.bid[:-1]
        pa[1:] = self.ask[:-1]
        return (self.bid != pb) | (self.ask != pa)


def replay(messages, tick: int = DEFAULT_TICK, levels: int = 0) -> Replay:
    """Replay one instrument-day through the selected book backend."""
    table = messages if isinstance(messages, MessageTable) else MessageTable.from_messages(messages)
    cols = _book.replay_arrays(
        table.mtype, table.time, table.order_id, table.size, table.price, table.direction,
        tick=tick, levels=levels,
    )
    return Replay(
        table=table,
        bid=cols["bid"],
        ask=cols["ask"],
        bid_vol=cols["bid_vol"],
        ask_vol=cols["ask_vol"],
        ev_side=cols["ev_side"],
        ev_price=cols["ev_price"],
        ev_delta=cols["ev_delta"],
        book=cols["book"],
        tick=tick,
        snapshots=cols.get("snapshots"),
    )


@dataclass
class SnapshotReport:
    """Outcome of checking reconstructed top-k levels against a snapshot file."""

    n_messages: int
    n_mismatches: int
    first_mismatches: list = field(default_factory=list)  # (index, expected, got)

    @property
    def ok(self) -> bool:
        return self.n_mismatches == 0

    def summary(self) -> str:
        if self.ok:
            return f"{self.n_messages} messages, all snapshots match"
        lines = [f"{self.n_messages} messages, {self.n_mismatches} snapshot mismatches"]
        for idx, expected, got in self.first_mismatches:
            lines.append(f"  message {idx}: expected {expected} got {got}")
        return "\n".join(lines)


def validate_snapshots(table: MessageTable, snapshots: np.ndarray, max_report: int = 20) -> SnapshotReport:
    """Replay `table` and compare top-k rows against `snapshots` (k from width)."""
    if len(table) != len(snapshots):
        raise FormatError(
            f"stream length mismatch: {len(table)} messages vs {len(snapshots)} snapshot rows"
        )
    if len(table) == 0:
        return SnapshotReport(0, 0)
    if snapshots.shape[1] % 4 != 0 or snapshots.shape[1] == 0:
        raise FormatError(f"snapshot width {snapshots.shape[1]} is not a positive multiple of 4")
    k = snapshots.shape[1] // 4
    rep = replay(table, levels=k)
    bad = np.flatnonzero((rep.snapshots != snapshots).any(axis=1))
    report = SnapshotReport(len(table), int(bad.size))
    for idx in bad[:max_report]:
        report.first_mismatches.append(
            (int(idx), snapshots[idx].tolist(), rep.snapshots[idx].tolist())
        )
    return report


@dataclass(frozen=True)
class DaySession:
    """Continuous-trading window with opening/closing trims.

    The default drops the first and last 1000 seconds of the 09:30-16:00
    session. Study windows must not cross the boundaries; flow extraction
    clips against start_ns/end_ns.
    """

    open_ns: int = int(9.5 * 3600) * NS
    close_ns: int = 16 * 3600 * NS
    trim_ns: int = 1000 * NS

    def __post_init__(self):
        if self.trim_ns < 0:
            raise ValueError("trim must be non-negative")
        if self.start_ns >= self.end_ns:
            raise ValueError("empty session window")

    @property
    def start_ns(self) -> int:
        return self.open_ns + self.trim_ns

    @property
    def end_ns(self) -> int:
        return self.close_ns - self.trim_ns

    def mask(self, times: np.ndarray) -> np.ndarray:
        return (times >= self.start_ns) & (times < self.end_ns)


def session_filter(events, session: DaySession):
    """Drop events outside the session window.

    Accepts a MessageTable (returns a filtered table) or a sequence of
    objects with a .time attribute (returns a filtered list).
    """
    if isinstance(events, MessageTable):
        return events[session.mask(events.time)]
    return [e for e in events if session.start_ns <= e.time < session.end_ns]
