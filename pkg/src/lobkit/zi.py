"""Zero-intelligence order-flow simulator.

Limit arrivals, market arrivals, and cancellations run as independent
Poisson clocks. Limit prices land uniformly on a band of levels relative
to the opposite best quote, market orders consume FIFO from the opposite
best queue, cancellations hit a uniformly random resting order. Output is
a fully consistent message/snapshot pair in the LOBSTER file formats plus
the simulator's own final book and market-order log, which downstream
tests use as ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional

import numpy as np

from . import book as _book
from .book import BUY, SELL, Book, is_price_maintaining
from .lobster import (
    MSG_DELETE,
    MSG_EXEC_VISIBLE,
    MSG_NEW,
    MSG_PARTIAL_CANCEL,
    NS,
    MessageTable,
    replay,
)


@dataclass(frozen=True)
class ZiConfig:
    limit_rate: float = 1.0          # arrivals/s per price level per side
    market_rate: float = 0.1         # arrivals/s per side
    cancel_rate: float = 0.001       # per resting order per second
    total_cancel_rate: Optional[float] = None  # fixed total rate; overrides cancel_rate
    band_levels: int = 5             # band width L relative to opposite quote
    tick: int = 100
    order_sizes: tuple = tuple(range(100, 1100, 100))
    initial_depth: int = 2000        # shares seeded per level at start
    initial_bid: int = 300000        # $30.00
    latency_floor_ns: int = 0
    horizon_s: float = 60.0
    start_ns: int = 34200 * NS       # 09:30
    seed: int = 1
    partial_cancel_prob: float = 0.2
    snapshot_levels: int = 5
    seed_orders_per_level: int = 1   # initial_depth splits across this many orders

    def __post_init__(self):
        if min(self.limit_rate, self.market_rate, self.cancel_rate) < 0:
            raise ValueError("rates must be non-negative")
        if self.total_cancel_rate is not None and self.total_cancel_rate < 0:
            raise ValueError("total_cancel_rate must be non-negative")
        if self.band_levels < 1:
            raise ValueError("band_levels must be at least 1")
        if self.horizon_s <= 0:
            raise ValueError("horizon must be positive")
        if self.tick <= 0 or self.initial_bid <= 0 or self.initial_bid % self.tick:
            raise ValueError("initial_bid must be a positive multiple of tick")
        if not self.order_sizes or min(self.order_sizes) <= 0:
            raise ValueError("order_sizes must be positive")
        if not 0 <= self.partial_cancel_prob <= 1:
            raise ValueError("partial_cancel_prob must be in [0, 1]")
        if self.latency_floor_ns < 0 or self.initial_depth < 0:
            raise ValueError("latency_floor_ns and initial_depth must be non-negative")
        if self.seed_orders_per_level < 1:
            raise ValueError("seed_orders_per_level must be at least 1")
        if 0 < self.initial_depth < self.seed_orders_per_level:
            raise ValueError("initial_depth smaller than seed_orders_per_level")
        if self.initial_depth == 0 and (
            self.limit_rate > 0 or self.market_rate > 0
        ):
            raise ValueError("initial_depth must be positive when flow rates are")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "order_sizes":
                v = ",".join(str(s) for s in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ZiConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in known:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            if key == "order_sizes":
                kwargs[key] = tuple(int(s) for s in value.split(","))
            elif key == "total_cancel_rate":
                kwargs[key] = None if value == "None" else float(value)
            elif key in ("limit_rate", "market_rate", "cancel_rate", "horizon_s",
                         "partial_cancel_prob"):
                kwargs[key] = float(value)
            else:
                kwargs[key] = int(value)
        return cls(**kwargs)


class SimMarketOrder(NamedTuple):
    time: int           # ns of all fills in the group
    direction: int      # +1 buy aggressor, -1 sell aggressor
    total_shares: int
    maintaining: bool
    n_fills: int
    first_index: int    # message index of the first fill
    last_index: int


@dataclass
class SimOutput:
    config: ZiConfig
    table: MessageTable
    snapshots: np.ndarray
    final_book: Book
    market_orders: list
    reseed_indices: list = field(default_factory=list)

    @property
    def reseed_times(self) -> list:
        return [int(self.table.time[i]) for i in self.reseed_indices]


class _Draws:
    """Batched draws off one counter-based generator (deterministic)."""

    def __init__(self, seed: int, block: int = 1 << 14):
        self._rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        self._block = block
        self._u = np.empty(0)
        self._e = np.empty(0)
        self._iu = 0
        self._ie = 0

    def uniform(self) -> float:
        if self._iu >= len(self._u):
            self._u = self._rng.random(self._block)
            self._iu = 0
        v = self._u[self._iu]
        self._iu += 1
        return v

    def exponential(self) -> float:
        if self._ie >= len(self._e):
            self._e = self._rng.standard_exponential(self._block)
            self._ie = 0
        v = self._e[self._ie]
        self._ie += 1
        return v


class _Columns:
    """Growable int64/int8 message buffers."""

    def __init__(self, cap: int = 1 << 16):
        self.n = 0
        self.time = np.empty(cap, np.int64)
        self.mtype = np.empty(cap, np.int8)
        self.oid = np.empty(cap, np.int64)
        self.size = np.empty(cap, np.int64)
        self.price = np.empty(cap, np.int64)
        self.dirn = np.empty(cap, np.int8)

    def _grow(self):
        for name in ("time", "mtype", "oid", "size", "price", "dirn"):
            old = getattr(self, name)
            new = np.empty(int(len(old) * 1.6) + 1, old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def push(self, t, ty, o, s, p, d):
        i = self.n
        if i >= len(self.time):
            self._grow()
        self.time[i] = t
        self.mtype[i] = ty
        self.oid[i] = o
        self.size[i] = s
        self.price[i] = p
        self.dirn[i] = d
        self.n = i + 1

    def table(self) -> MessageTable:
        n = self.n
        return MessageTable(
            self.time[:n].copy(), self.mtype[:n].copy(), self.oid[:n].copy(),
            self.size[:n].copy(), self.price[:n].copy(), self.dirn[:n].copy(),
        )


class _ActiveSet:
    """Uniform O(1) pick/remove over resting order ids."""

    def __init__(self):
        self.ids: list[int] = []
        self.pos: dict[int, int] = {}

    def __len__(self):
        return len(self.ids)

    def add(self, oid: int):
        self.pos[oid] = len(self.ids)
        self.ids.append(oid)

    def remove(self, oid: int):
        i = self.pos.pop(oid)
        last = self.ids.pop()
        if last != oid:
            self.ids[i] = last
            self.pos[last] = i

    def pick(self, u: float) -> int:
        return self.ids[int(u * len(self.ids))]


def inject_latency_floor(table: MessageTable, floor_ns: int) -> MessageTable:
    """Re-time a stream so distinct-timestamp events are >= floor apart.

    Messages sharing a timestamp (the fills of one market order) move as a
    unit. Each group lands at max(its own time, previous group + floor),
    so ordering and simultaneity are preserved and the minimum inter-event
    spacing becomes exactly the floor wherever it binds.
    """
    if floor_ns < 0:
        raise ValueError("floor must be non-negative")
    n = len(table)
    if floor_ns == 0 or n == 0:
        return table
    t = table.time
    new_group = np.empty(n, dtype=bool)
    new_group[0] = True
    new_group[1:] = t[1:] != t[:-1]
    gidx = np.cumsum(new_group) - 1
    gtimes = t[new_group].astype(np.int64)
    g = np.arange(len(gtimes), dtype=np.int64)
    # recurrence out[i] = max(t[i], out[i-1] + floor) solved by running max
    shifted = floor_ns * g + np.maximum.accumulate(gtimes - floor_ns * g)
    out = table[slice(None)]
    out.time = shifted[gidx]
    return out


def simulate_day(config: ZiConfig) -> SimOutput:
    """Run the Poisson order-flow model; deterministic given config.seed."""
    L = config.band_levels
    tick = config.tick
    draws = _Draws(config.seed)
    cols = _Columns()
    book = Book(tick)
    active = _ActiveSet()
    sizes = np.asarray(config.order_sizes, dtype=np.int64)
    n_sizes = len(sizes)
    mo_log_idx = []      # (first_index, direction, total, maintaining, n_fills)
    reseed_indices = []
    last_best = {BUY: 0, SELL: 0}
    next_id = 1
    t = config.start_ns
    end = config.start_ns + int(round(config.horizon_s * NS))

    def rest(side, price, shares, when):
        nonlocal next_id
        oid = next_id
        next_id += 1
        book.insert(side, price, shares, when, oid)
        active.add(oid)
        cols.push(when, MSG_NEW, oid, shares, price, side)
        return oid

    def reseed_if_empty(when):
        for side in (BUY, SELL):
            if book.best(side) == 0 and config.initial_depth > 0:
                reseed_indices.append(cols.n)
                rest(side, last_best[side], config.initial_depth, when)

    def seed_level(side, price):
        nonlocal t
        m = config.seed_orders_per_level
        part = config.initial_depth // m
        for i in range(m):
            shares = part if i < m - 1 else config.initial_depth - part * (m - 1)
            rest(side, price, shares, t)
            t += 1

    # seed the opening book, consecutive nanoseconds
    if config.initial_depth > 0:
        ask0 = config.initial_bid + tick
        for j in range(L):
            seed_level(BUY, config.initial_bid - j * tick)
            seed_level(SELL, ask0 + j * tick)
    last_best[BUY] = book.best(BUY) or config.initial_bid
    last_best[SELL] = book.best(SELL) or config.initial_bid + tick

    lam_limit = 2.0 * L * config.limit_rate
    lam_market = 2.0 * config.market_rate
    fixed_cancel = config.total_cancel_rate

    while True:
        lam_cancel = fixed_cancel if fixed_cancel is not None else config.cancel_rate * len(active)
        lam = lam_limit + lam_market + lam_cancel
        if lam <= 0:
            break
        t += max(1, int(round(draws.exponential() / lam * NS)))
        if t >= end:
            break
        pick = draws.uniform() * lam
        if pick < lam_limit:
            side = BUY if draws.uniform() < 0.5 else SELL
            offset = 1 + int(draws.uniform() * L)
            if side == BUY:
                price = book.best(SELL) - offset * tick
                if price < tick:
                    continue  # band ran off the price grid; drop the arrival
            else:
                price = book.best(BUY) + offset * tick
            rest(side, price, int(sizes[int(draws.uniform() * n_sizes)]), t)
        elif pick < lam_limit + lam_market:
            direction = BUY if draws.uniform() < 0.5 else SELL
            hit_side = -direction  # buy aggressor consumes the ask side
            shares = int(sizes[int(draws.uniform() * n_sizes)])
            pre = book.quotes()
            first_index = cols.n
            fills = book.take_best(hit_side, shares, t)
            total = 0
            for ev in fills:
                if ev.kind != _book.EventKind.EXECUTION:
                    continue
                total += -ev.delta
                if not book.has_order(ev.order_id):
                    active.remove(ev.order_id)
                cols.push(t, MSG_EXEC_VISIBLE, ev.order_id, -ev.delta, ev.price, hit_side)
            if total > 0:
                maintaining = is_price_maintaining(pre, book.quotes())
                mo_log_idx.append(
                    (first_index, direction, total, maintaining, cols.n - first_index)
                )
        else:
            if len(active) == 0:
                continue
            oid = active.pick(draws.uniform())
            side, price, remaining, _ = book.order_view(oid)
            if remaining > 1 and draws.uniform() < config.partial_cancel_prob:
                amount = 1 + int(draws.uniform() * (remaining - 1))
                book.cancel(oid, amount, t)
                cols.push(t, MSG_PARTIAL_CANCEL, oid, amount, price, side)
            else:
                book.cancel(oid, None, t)
                active.remove(oid)
                cols.push(t, MSG_DELETE, oid, remaining, price, side)
        for side in (BUY, SELL):
            best = book.best(side)
            if best:
                last_best[side] = best
        reseed_if_empty(t)

    table = cols.table()
    if config.latency_floor_ns > 0:
        table = inject_latency_floor(table, config.latency_floor_ns)

    market_orders = [
        SimMarketOrder(
            int(table.time[first]), direction, total, maintaining, n_fills,
            first, first + n_fills - 1,
        )
        for first, direction, total, maintaining, n_fills in mo_log_idx
    ]

    rep = replay(table, tick=tick, levels=config.snapshot_levels)
    return SimOutput(
        config=config,
        table=table,
        snapshots=rep.snapshots,
        final_book=book,
        market_orders=market_orders,
        reseed_indices=reseed_indices,
    )
