"""Pure-Python book engine and replay kernels.

Reference implementation of the hot kernels. `lobkit._speedups` is the
compiled twin with the same surface; `lobkit.book` picks one at import.
Semantics here are authoritative: the twins must agree event for event.
"""

from __future__ import annotations

import numpy as np

from .records import BUY, SELL, DEFAULT_TICK, BookError, BookEvent, EventKind, Quote

BACKEND = "python"

# LOBSTER snapshot sentinels for unoccupied levels
ASK_ABSENT = 9999999999
BID_ABSENT = -9999999999

_NS = 1_000_000_000


class Book:
    """Price-time priority limit order book.

    Bid/ask sides are dicts of price -> [volume, fifo] where fifo is an
    insertion-ordered dict of resting order ids. Partial cancels shrink an
    order in place and keep its queue position.
    """

    def __init__(self, tick: int = DEFAULT_TICK):
        if tick <= 0:
            raise BookError(f"tick must be positive, got {tick}")
        self.tick = tick
        self._orders: dict[int, list] = {}  # id -> [side, price, remaining, seq]
        self._levels = {BUY: {}, SELL: {}}  # price -> [volume, {id: None}]
        self._best = {BUY: 0, SELL: 0}      # 0 = side empty
        self._seq = 0
        self._auto_id = 0

    # -- queries ---------------------------------------------------------

    @property
    def n_resting(self) -> int:
        return len(self._orders)

    def best(self, side: int) -> int:
        return self._best[side]

    def quotes(self) -> Quote:
        b, a = self._best[BUY], self._best[SELL]
        vb = self._levels[BUY][b][0] if b else 0
        va = self._levels[SELL][a][0] if a else 0
        return Quote(b or None, a or None, vb, va)

    def volume_at(self, side: int, price: int) -> int:
        level = self._levels[side].get(price)
        return level[0] if level else 0

    def has_order(self, order_id: int) -> bool:
        return order_id in self._orders

    def order_view(self, order_id: int):
        """(side, price, remaining, seq) of a resting order."""
        side, price, remaining, seq = self._orders[order_id]
        return side, price, remaining, seq

    def top_levels(self, k: int):
        """Top-k (prices, volumes) per side, best first."""
        bids = sorted(self._levels[BUY], reverse=True)[:k]
        asks = sorted(self._levels[SELL])[:k]
        return (
            bids,
            [self._levels[BUY][p][0] for p in bids],
            asks,
            [self._levels[SELL][p][0] for p in asks],
        )

    def level_orders(self, side: int, price: int) -> list[int]:
        """Resting order ids at a level, FIFO order (empty if no level)."""
        level = self._levels[side].get(price)
        return list(level[1]) if level else []

    def snapshot_row(self, k: int) -> list[int]:
        """LOBSTER-style row: ask p1, ask v1, bid p1, bid v1, ... level k."""
        bids, bvols, asks, avols = self.top_levels(k)
        row = []
        for i in range(k):
            if i < len(asks):
                row += [asks[i], avols[i]]
            else:
                row += [ASK_ABSENT, 0]
            if i < len(bids):
                row += [bids[i], bvols[i]]
            else:
                row += [BID_ABSENT, 0]
        return row

    # -- internals -------------------------------------------------------

    def _next_auto_id(self) -> int:
        self._auto_id += 1
        while self._auto_id in self._orders:
            self._auto_id += 1
        return self._auto_id

    def _reset_best(self, side: int) -> None:
        levels = self._levels[side]
        if not levels:
            self._best[side] = 0
        elif side == BUY:
            self._best[side] = max(levels)
        else:
            self._best[side] = min(levels)

    def _rest(self, side: int, price: int, shares: int, order_id: int) -> None:
        self._seq += 1
        self._orders[order_id] = [side, price, shares, self._seq]
        level = self._levels[side].get(price)
        if level is None:
            self._levels[side][price] = [shares, {order_id: None}]
            best = self._best[side]
            if best == 0 or (side == BUY and price > best) or (side == SELL and price < best):
                self._best[side] = price
        else:
            level[0] += shares
            level[1][order_id] = None

    def _remove(self, order_id: int, side: int, price: int) -> None:
        del self._orders[order_id]
        level = self._levels[side][price]
        del level[1][order_id]
        if level[0] == 0:
            del self._levels[side][price]
            if self._best[side] == price:
                self._reset_best(side)

    def _quote_change_events(self, events, pre_b, pre_a, time) -> None:
        b, a = self._best[BUY], self._best[SELL]
        if b != pre_b:
            events.append(BookEvent(EventKind.PRICE_CHANGE, time, BUY, b, 0, 0))
        if a != pre_a:
            events.append(BookEvent(EventKind.PRICE_CHANGE, time, SELL, a, 0, 0))

    def _check_submit(self, side, price, shares):
        if side not in (BUY, SELL):
            raise BookError(f"side must be {BUY} or {SELL}, got {side}")
        if shares <= 0:
            raise BookError(f"shares must be positive, got {shares}")
        if price <= 0 or price % self.tick != 0:
            raise BookError(f"price {price} is not a positive multiple of tick {self.tick}")

    def _check_id(self, order_id) -> int:
        if order_id is None:
            return self._next_auto_id()
        if order_id == 0:
            raise BookError("order id must be nonzero")
        if order_id in self._orders:
            raise BookError(f"duplicate order id {order_id}")
        return order_id

    # -- mutations -------------------------------------------------------

    def submit(self, side: int, price: int, shares: int, time: int = 0, order_id=None):
        """Match an arriving order, rest any remainder.

        Returns (is_market, events). is_market is True iff at least one
        fill occurred on arrival. Fills happen at resting order prices, in
        price-then-FIFO order.
        """
        self._check_submit(side, price, shares)
        order_id = self._check_id(order_id)
        pre_b, pre_a = self._best[BUY], self._best[SELL]
        events: list[BookEvent] = []
        remaining = shares
        opp = -side
        while remaining > 0:
            bp = self._best[opp]
            if bp == 0:
                break
            if (side == BUY and price < bp) or (side == SELL and price > bp):
                break
            level = self._levels[opp][bp]
            while remaining > 0 and level[0] > 0:
                rid = next(iter(level[1]))
                rec = self._orders[rid]
                fill = min(remaining, rec[2])
                rec[2] -= fill
                level[0] -= fill
                remaining -= fill
                events.append(
                    BookEvent(EventKind.EXECUTION, time, opp, bp, -fill, rid, order_id)
                )
                if rec[2] == 0:
                    del level[1][rid]
                    del self._orders[rid]
            if level[0] == 0:
                del self._levels[opp][bp]
                self._reset_best(opp)
        is_market = bool(events)
        if remaining > 0:
            self._rest(side, price, remaining, order_id)
            events.append(
                BookEvent(EventKind.LIMIT_ARRIVAL, time, side, price, remaining, order_id)
            )
        self._quote_change_events(events, pre_b, pre_a, time)
        return is_market, events

    def insert(self, side: int, price: int, shares: int, time: int = 0, order_id=None):
        """Rest a limit order that must not cross; used by stream replay."""
        self._check_submit(side, price, shares)
        opp_best = self._best[-side]
        if opp_best != 0 and (
            (side == BUY and price >= opp_best) or (side == SELL and price <= opp_best)
        ):
            raise BookError(
                f"limit arrival at {price} crosses opposite quote {opp_best}"
            )
        order_id = self._check_id(order_id)
        pre_b, pre_a = self._best[BUY], self._best[SELL]
        self._rest(side, price, shares, order_id)
        events = [BookEvent(EventKind.LIMIT_ARRIVAL, time, side, price, shares, order_id)]
        self._quote_change_events(events, pre_b, pre_a, time)
        return events

    def cancel(self, order_id: int, shares=None, time: int = 0):
        """Cancel a resting order, fully or partially (position kept)."""
        rec = self._orders.get(order_id)
        if rec is None:
            raise BookError(f"cancel of unknown order id {order_id}")
        side, price, remaining, _ = rec
        if shares is None:
            shares = remaining
        if shares <= 0 or shares > remaining:
            raise BookError(
                f"cancel of {shares} shares from order {order_id} holding {remaining}"
            )
        pre_b, pre_a = self._best[BUY], self._best[SELL]
        rec[2] -= shares
        self._levels[side][price][0] -= shares
        if rec[2] == 0:
            self._remove(order_id, side, price)
        events = [BookEvent(EventKind.CANCEL, time, side, price, -shares, order_id)]
        self._quote_change_events(events, pre_b, pre_a, time)
        return events

    def execute(self, order_id: int, shares: int, time: int = 0, taker_id: int = 0):
        """Consume a specific resting order (stream replay of a fill)."""
        rec = self._orders.get(order_id)
        if rec is None:
            raise BookError(f"execution against unknown order id {order_id}")
        side, price, remaining, _ = rec
        if shares <= 0 or shares > remaining:
            raise BookError(
                f"execution of {shares} shares against order {order_id} holding {remaining}"
            )
        pre_b, pre_a = self._best[BUY], self._best[SELL]
        rec[2] -= shares
        self._levels[side][price][0] -= shares
        if rec[2] == 0:
            self._remove(order_id, side, price)
        events = [BookEvent(EventKind.EXECUTION, time, side, price, -shares, order_id, taker_id)]
        self._quote_change_events(events, pre_b, pre_a, time)
        return events

    def take_best(self, side: int, shares: int, time: int = 0, taker_id: int = 0):
        """Consume up to `shares` FIFO from the best level on `side`.

        Stops when the level empties; never walks to deeper levels.
        Returns the execution events (possibly empty if the side is empty).
        """
        if shares <= 0:
            raise BookError(f"shares must be positive, got {shares}")
        pre_b, pre_a = self._best[BUY], self._best[SELL]
        events: list[BookEvent] = []
        bp = self._best[side]
        if bp == 0:
            return events
        level = self._levels[side][bp]
        remaining = shares
        while remaining > 0 and level[0] > 0:
            rid = next(iter(level[1]))
            rec = self._orders[rid]
            fill = min(remaining, rec[2])
            rec[2] -= fill
            level[0] -= fill
            remaining -= fill
            events.append(BookEvent(EventKind.EXECUTION, time, side, bp, -fill, rid, taker_id))
            if rec[2] == 0:
                del level[1][rid]
                del self._orders[rid]
        if level[0] == 0:
            del self._levels[side][bp]
            self._reset_best(side)
        self._quote_change_events(events, pre_b, pre_a, time)
        return events


def replay_arrays(mtype, time, oid, size, price, dirn, tick=DEFAULT_TICK, levels=0):
    """Apply a message-column stream to a fresh book.

    Returns a dict of per-message columns: post-event best quotes and
    volumes (`bid`, `ask`, `bid_vol`, `ask_vol`, 0 = absent side), the
    applied flow delta (`ev_side`, `ev_price`, `ev_delta`; delta 0 for
    hidden executions and halts), and, when `levels` = k > 0, LOBSTER-style
    top-k rows under `snapshots`.
    """
    n = len(mtype)
    bid = np.zeros(n, dtype=np.int64)
    ask = np.zeros(n, dtype=np.int64)
    bid_vol = np.zeros(n, dtype=np.int64)
    ask_vol = np.zeros(n, dtype=np.int64)
    ev_side = np.zeros(n, dtype=np.int8)
    ev_price = np.zeros(n, dtype=np.int64)
    ev_delta = np.zeros(n, dtype=np.int64)
    snapshots = np.zeros((n, 4 * levels), dtype=np.int64) if levels > 0 else None

    book = Book(tick)
    for i in range(n):
        t = int(mtype[i])
        o = int(oid[i])
        s = int(size[i])
        if t == 1:
            book.insert(int(dirn[i]), int(price[i]), s, int(time[i]), o)
            ev_side[i] = dirn[i]
            ev_price[i] = price[i]
            ev_delta[i] = s
        elif t == 2 or t == 3:
            rec = book._orders.get(o)
            if rec is None:
                raise BookError(f"message {i}: cancel of unknown order id {o}")
            if t == 3 and s != rec[2]:
                raise BookError(
                    f"message {i}: delete size {s} != resting size {rec[2]} for order {o}"
                )
            ev_side[i] = rec[0]
            ev_price[i] = rec[1]
            ev_delta[i] = -s
            book.cancel(o, s, int(time[i]))
        elif t == 4:
            rec = book._orders.get(o)
            if rec is None:
                raise BookError(f"message {i}: execution against unknown order id {o}")
            if rec[1] != price[i]:
                raise BookError(
                    f"message {i}: execution price {price[i]} != resting price {rec[1]}"
                )
            ev_side[i] = rec[0]
            ev_price[i] = rec[1]
            ev_delta[i] = -s
            book.execute(o, s, int(time[i]))
        elif t == 5 or t == 7:
            pass  # hidden executions and halts do not touch the visible book
        else:
            raise BookError(f"message {i}: unknown message type {t}")

        b = book._best[BUY]
        a = book._best[SELL]
        bid[i] = b
        ask[i] = a
        bid_vol[i] = book._levels[BUY][b][0] if b else 0
        ask_vol[i] = book._levels[SELL][a][0] if a else 0
        if levels > 0:
            snapshots[i, :] = book.snapshot_row(levels)

    out = {
        "bid": bid,
        "ask": ask,
        "bid_vol": bid_vol,
        "ask_vol": ask_vol,
        "ev_side": ev_side,
        "ev_price": ev_price,
        "ev_delta": ev_delta,
        "book": book,
    }
    if levels > 0:
        out["snapshots"] = snapshots
    return out


def messages_to_csv(time, mtype, oid, size, price, dirn) -> bytes:
    """Render message columns as canonical LOBSTER CSV bytes.

    Times are written with exactly nine fractional digits so that
    parse -> serialize is the identity on canonical files.
    """
    rows = []
    for i in range(len(mtype)):
        t = int(time[i])
        rows.append(
            f"{t // _NS}.{t % _NS:09d},{mtype[i]},{oid[i]},{size[i]},{price[i]},{dirn[i]}\n"
        )
    return "".join(rows).encode()


def snapshots_to_csv(snapshots) -> bytes:
    """Render top-k level rows (int columns) as CSV bytes."""
    return "\n".join(",".join(str(v) for v in row) for row in snapshots.tolist()).encode() + b"\n"
