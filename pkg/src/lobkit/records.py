"""Shared record types for book state and book events.

Sides use the wire convention: +1 is the buy side, -1 is the sell side.
Prices are integers in 1e-4 currency units, times are integer nanoseconds
after midnight, sizes are integer shares. No floats in book state.
"""

from __future__ import annotations

from enum import IntEnum
from typing import NamedTuple, Optional

BUY = 1
SELL = -1

# one cent, in 1e-4 currency units
DEFAULT_TICK = 100


class EventKind(IntEnum):
    LIMIT_ARRIVAL = 1
    CANCEL = 2
    EXECUTION = 3
    PRICE_CHANGE = 4
    HIDDEN_EXECUTION = 5
    HALT = 7


class BookEvent(NamedTuple):
    kind: EventKind
    time: int
    side: int
    price: int
    delta: int          # signed change of resting shares at (side, price)
    order_id: int
    taker_id: int = 0   # aggressor order id for executions, 0 if unknown


class Quote(NamedTuple):
    bid: Optional[int]
    ask: Optional[int]
    bid_vol: int
    ask_vol: int

    @property
    def spread(self) -> Optional[int]:
        if self.bid is None or self.ask is None:
            return None
        return self.ask - self.bid

    @property
    def mid(self) -> Optional[float]:
        if self.bid is None or self.ask is None:
            return None
        return (self.ask + self.bid) / 2


class BookError(Exception):
    """Rejected operation or inconsistent message stream."""
