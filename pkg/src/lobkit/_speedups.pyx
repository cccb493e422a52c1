# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled book engine and replay kernels (twin of lobkit._pycore)."""

from cython.operator cimport dereference as deref, preincrement as inc
from cpython.bytearray cimport PyByteArray_AS_STRING
from libcpp.map cimport map as cppmap
from libcpp.unordered_map cimport unordered_map

import numpy as np

from .records import BUY, SELL, DEFAULT_TICK, BookError, BookEvent, EventKind, Quote

BACKEND = "cython"

ASK_ABSENT = 9999999999
BID_ABSENT = -9999999999

cdef long long _ASK_ABSENT = 9999999999
cdef long long _BID_ABSENT = -9999999999
cdef long long _NS = 1_000_000_000
cdef int _BUY = BUY
cdef int _SELL = SELL

_EXECUTION = EventKind.EXECUTION
_LIMIT_ARRIVAL = EventKind.LIMIT_ARRIVAL
_CANCEL = EventKind.CANCEL
_PRICE_CHANGE = EventKind.PRICE_CHANGE


cdef struct Level:
    long long volume
    long long head
    long long tail

cdef struct OrderRec:
    long long price
    long long remaining
    long long seq
    long long prev
    long long next
    Level* level
    int side


cdef class Book:
    """Compiled twin of the pure-Python Book; identical surface and events."""

    cdef public long long tick
    cdef unordered_map[long long, OrderRec] orders
    cdef cppmap[long long, Level] bids   # keyed by -price: begin() is best bid
    cdef cppmap[long long, Level] asks   # keyed by +price: begin() is best ask
    cdef long long seq
    cdef long long auto_id
    cdef long long best_bid
    cdef long long best_ask

    def __cinit__(self, long long tick=DEFAULT_TICK):
        if tick <= 0:
            raise BookError(f"tick must be positive, got {tick}")
        self.tick = tick
        self.seq = 0
        self.auto_id = 0
        self.best_bid = 0
        self.best_ask = 0

    # -- queries ---------------------------------------------------------

    @property
    def n_resting(self):
        return self.orders.size()

    def best(self, int side):
        return self.best_bid if side == _BUY else self.best_ask

    cdef long long _vol_at_best(self, int side):
        if side == _BUY:
            if self.best_bid == 0:
                return 0
            return deref(self.bids.find(-self.best_bid)).second.volume
        if self.best_ask == 0:
            return 0
        return deref(self.asks.find(self.best_ask)).second.volume

    def quotes(self):
        return Quote(
            self.best_bid if self.best_bid else None,
            self.best_ask if self.best_ask else None,
            self._vol_at_best(_BUY),
            self._vol_at_best(_SELL),
        )

    def volume_at(self, int side, long long price):
        cdef cppmap[long long, Level].iterator it
        if side == _BUY:
            it = self.bids.find(-price)
            if it == self.bids.end():
                return 0
        else:
            it = self.asks.find(price)
            if it == self.asks.end():
                return 0
        return deref(it).second.volume

    def has_order(self, long long order_id):
        return self.orders.find(order_id) != self.orders.end()

    def order_view(self, long long order_id):
        cdef unordered_map[long long, OrderRec].iterator it = self.orders.find(order_id)
        if it == self.orders.end():
            raise KeyError(order_id)
        cdef OrderRec* rec = &(deref(it).second)
        return rec.side, rec.price, rec.remaining, rec.seq

    def top_levels(self, int k):
        cdef cppmap[long long, Level].iterator it
        cdef int i
        bids, bvols, asks, avols = [], [], [], []
        it = self.bids.begin()
        i = 0
        while it != self.bids.end() and i < k:
            bids.append(-deref(it).first)
            bvols.append(deref(it).second.volume)
            i += 1
            inc(it)
        it = self.asks.begin()
        i = 0
        while it != self.asks.end() and i < k:
            asks.append(deref(it).first)
            avols.append(deref(it).second.volume)
            i += 1
            inc(it)
        return bids, bvols, asks, avols

    def level_orders(self, int side, long long price):
        """Resting order ids at a level, FIFO order (empty if no level)."""
        cdef cppmap[long long, Level].iterator it
        if side == _BUY:
            it = self.bids.find(-price)
            if it == self.bids.end():
                return []
        else:
            it = self.asks.find(price)
            if it == self.asks.end():
                return []
        out = []
        cdef long long oid = deref(it).second.head
        while oid != 0:
            out.append(oid)
            oid = deref(self.orders.find(oid)).second.next
        return out

    def snapshot_row(self, int k):
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

    cdef void _snapshot_into(self, long long* out, int k):
        cdef cppmap[long long, Level].iterator it
        cdef int i
        it = self.asks.begin()
        for i in range(k):
            if it != self.asks.end():
                out[4 * i] = deref(it).first
                out[4 * i + 1] = deref(it).second.volume
                inc(it)
            else:
                out[4 * i] = _ASK_ABSENT
                out[4 * i + 1] = 0
        it = self.bids.begin()
        for i in range(k):
            if it != self.bids.end():
                out[4 * i + 2] = -deref(it).first
                out[4 * i + 3] = deref(it).second.volume
                inc(it)
            else:
                out[4 * i + 2] = _BID_ABSENT
                out[4 * i + 3] = 0

    # -- internals -------------------------------------------------------

    cdef long long _next_auto_id(self):
        self.auto_id += 1
        while self.orders.find(self.auto_id) != self.orders.end():
            self.auto_id += 1
        return self.auto_id

    cdef OrderRec* _find(self, long long oid):
        cdef unordered_map[long long, OrderRec].iterator it = self.orders.find(oid)
        if it == self.orders.end():
            return NULL
        return &(deref(it).second)

    cdef int _c_rest(self, int side, long long price, long long shares, long long oid) except -1:
        cdef long long key = -price if side == _BUY else price
        cdef cppmap[long long, Level]* levels = &self.bids if side == _BUY else &self.asks
        cdef cppmap[long long, Level].iterator it = levels.find(key)
        cdef Level* level
        cdef OrderRec rec
        cdef Level fresh
        if it == levels.end():
            fresh.volume = 0
            fresh.head = 0
            fresh.tail = 0
            deref(levels)[key] = fresh
            it = levels.find(key)
            if side == _BUY:
                if self.best_bid == 0 or price > self.best_bid:
                    self.best_bid = price
            else:
                if self.best_ask == 0 or price < self.best_ask:
                    self.best_ask = price
        level = &(deref(it).second)
        self.seq += 1
        rec.price = price
        rec.remaining = shares
        rec.seq = self.seq
        rec.prev = level.tail
        rec.next = 0
        rec.level = level
        rec.side = side
        if level.tail != 0:
            deref(self.orders.find(level.tail)).second.next = oid
        else:
            level.head = oid
        level.tail = oid
        level.volume += shares
        self.orders[oid] = rec
        return 0

    cdef void _erase_level(self, int side, long long price):
        if side == _BUY:
            self.bids.erase(-price)
            if self.best_bid == price:
                self.best_bid = -deref(self.bids.begin()).first if self.bids.size() > 0 else 0
        else:
            self.asks.erase(price)
            if self.best_ask == price:
                self.best_ask = deref(self.asks.begin()).first if self.asks.size() > 0 else 0

    cdef void _unlink(self, long long oid, OrderRec* rec):
        # caller guarantees rec.remaining == 0 and level volume already reduced
        cdef Level* level = rec.level
        cdef int side = rec.side
        cdef long long price = rec.price
        cdef bint empty
        if rec.prev != 0:
            deref(self.orders.find(rec.prev)).second.next = rec.next
        else:
            level.head = rec.next
        if rec.next != 0:
            deref(self.orders.find(rec.next)).second.prev = rec.prev
        else:
            level.tail = rec.prev
        empty = level.volume == 0
        self.orders.erase(oid)
        if empty:
            self._erase_level(side, price)

    cdef int _c_reduce(self, long long oid, OrderRec* rec, long long shares) except -1:
        rec.remaining -= shares
        rec.level.volume -= shares
        if rec.remaining == 0:
            self._unlink(oid, rec)
        return 0

    cdef int _c_insert(self, int side, long long price, long long shares, long long oid) except -1:
        """Rest a non-crossing order; stream-replay fast path, no events."""
        if side != _BUY and side != _SELL:
            raise BookError(f"side must be {_BUY} or {_SELL}, got {side}")
        if shares <= 0:
            raise BookError(f"shares must be positive, got {shares}")
        if price <= 0 or price % self.tick != 0:
            raise BookError(f"price {price} is not a positive multiple of tick {self.tick}")
        if oid == 0:
            raise BookError("order id must be nonzero")
        if self.orders.find(oid) != self.orders.end():
            raise BookError(f"duplicate order id {oid}")
        cdef long long opp_best = self.best_ask if side == _BUY else self.best_bid
        if opp_best != 0 and (
            (side == _BUY and price >= opp_best) or (side == _SELL and price <= opp_best)
        ):
            raise BookError(f"limit arrival at {price} crosses opposite quote {opp_best}")
        self._c_rest(side, price, shares, oid)
        return 0

    cdef long long _check_new(self, int side, long long price, long long shares, object order_id) except? -2:
        if side != _BUY and side != _SELL:
            raise BookError(f"side must be {_BUY} or {_SELL}, got {side}")
        if shares <= 0:
            raise BookError(f"shares must be positive, got {shares}")
        if price <= 0 or price % self.tick != 0:
            raise BookError(f"price {price} is not a positive multiple of tick {self.tick}")
        cdef long long oid
        if order_id is None:
            oid = self._next_auto_id()
        else:
            oid = order_id
            if oid == 0:
                raise BookError("order id must be nonzero")
            if self.orders.find(oid) != self.orders.end():
                raise BookError(f"duplicate order id {oid}")
        return oid

    cdef _quote_change_events(self, list events, long long pre_b, long long pre_a, long long time):
        if self.best_bid != pre_b:
            events.append(BookEvent(_PRICE_CHANGE, time, _BUY, self.best_bid, 0, 0))
        if self.best_ask != pre_a:
            events.append(BookEvent(_PRICE_CHANGE, time, _SELL, self.best_ask, 0, 0))

    # -- mutations -------------------------------------------------------

    def submit(self, int side, long long price, long long shares, long long time=0, order_id=None):
        cdef long long oid = self._check_new(side, price, shares, order_id)
        cdef long long pre_b = self.best_bid
        cdef long long pre_a = self.best_ask
        cdef int opp = -side
        cdef long long remaining = shares
        cdef long long bp, rid, fill
        cdef Level* level
        cdef OrderRec* rec
        cdef bint level_gone
        events = []
        while remaining > 0:
            bp = self.best_bid if opp == _BUY else self.best_ask
            if bp == 0:
                break
            if (side == _BUY and price < bp) or (side == _SELL and price > bp):
                break
            if opp == _BUY:
                level = &(deref(self.bids.find(-bp)).second)
            else:
                level = &(deref(self.asks.find(bp)).second)
            level_gone = False
            while remaining > 0:
                rid = level.head
                rec = self._find(rid)
                fill = remaining if remaining < rec.remaining else rec.remaining
                rec.remaining -= fill
                level.volume -= fill
                remaining -= fill
                events.append(BookEvent(_EXECUTION, time, opp, bp, -fill, rid, oid))
                if rec.remaining == 0:
                    level_gone = level.volume == 0
                    self._unlink(rid, rec)   # erases level when it empties
                    if level_gone:
                        break
        is_market = len(events) > 0
        if remaining > 0:
            self._c_rest(side, price, remaining, oid)
            events.append(BookEvent(_LIMIT_ARRIVAL, time, side, price, remaining, oid))
        self._quote_change_events(events, pre_b, pre_a, time)
        return is_market, events

    def insert(self, int side, long long price, long long shares, long long time=0, order_id=None):
        cdef long long oid = self._check_new(side, price, shares, order_id)
        cdef long long opp_best = self.best_ask if side == _BUY else self.best_bid
        if opp_best != 0 and (
            (side == _BUY and price >= opp_best) or (side == _SELL and price <= opp_best)
        ):
            raise BookError(f"limit arrival at {price} crosses opposite quote {opp_best}")
        cdef long long pre_b = self.best_bid
        cdef long long pre_a = self.best_ask
        self._c_rest(side, price, shares, oid)
        events = [BookEvent(_LIMIT_ARRIVAL, time, side, price, shares, oid)]
        self._quote_change_events(events, pre_b, pre_a, time)
        return events

    def cancel(self, long long order_id, shares=None, long long time=0):
        cdef OrderRec* rec = self._find(order_id)
        if rec is NULL:
            raise BookError(f"cancel of unknown order id {order_id}")
        cdef long long amount = rec.remaining if shares is None else shares
        if amount <= 0 or amount > rec.remaining:
            raise BookError(
                f"cancel of {amount} shares from order {order_id} holding {rec.remaining}"
            )
        cdef long long pre_b = self.best_bid
        cdef long long pre_a = self.best_ask
        cdef int side = rec.side
        cdef long long price = rec.price
        self._c_reduce(order_id, rec, amount)
        events = [BookEvent(_CANCEL, time, side, price, -amount, order_id)]
        self._quote_change_events(events, pre_b, pre_a, time)
        return events

    def execute(self, long long order_id, long long shares, long long time=0, long long taker_id=0):
        cdef OrderRec* rec = self._find(order_id)
        if rec is NULL:
            raise BookError(f"execution against unknown order id {order_id}")
        if shares <= 0 or shares > rec.remaining:
            raise BookError(
                f"execution of {shares} shares against order {order_id} holding {rec.remaining}"
            )
        cdef long long pre_b = self.best_bid
        cdef long long pre_a = self.best_ask
        cdef int side = rec.side
        cdef long long price = rec.price
        self._c_reduce(order_id, rec, shares)
        events = [BookEvent(_EXECUTION, time, side, price, -shares, order_id, taker_id)]
        self._quote_change_events(events, pre_b, pre_a, time)
        return events

    def take_best(self, int side, long long shares, long long time=0, long long taker_id=0):
        if shares <= 0:
            raise BookError(f"shares must be positive, got {shares}")
        cdef long long pre_b = self.best_bid
        cdef long long pre_a = self.best_ask
        cdef long long bp = self.best_bid if side == _BUY else self.best_ask
        events = []
        if bp == 0:
            return events
        cdef Level* level
        if side == _BUY:
            level = &(deref(self.bids.find(-bp)).second)
        else:
            level = &(deref(self.asks.find(bp)).second)
        cdef long long remaining = shares
        cdef long long rid, fill
        cdef OrderRec* rec
        cdef bint level_gone
        while remaining > 0:
            rid = level.head
            rec = self._find(rid)
            fill = remaining if remaining < rec.remaining else rec.remaining
            rec.remaining -= fill
            level.volume -= fill
            remaining -= fill
            events.append(BookEvent(_EXECUTION, time, side, bp, -fill, rid, taker_id))
            if rec.remaining == 0:
                level_gone = level.volume == 0
                self._unlink(rid, rec)
                if level_gone:
                    break
        self._quote_change_events(events, pre_b, pre_a, time)
        return events


def replay_arrays(mtype, time, oid, size, price, dirn, long long tick=DEFAULT_TICK, int levels=0):
    """Compiled twin of _pycore.replay_arrays; same columns out."""
    cdef const signed char[::1] mt = mtype
    cdef const long long[::1] tm = time
    cdef const long long[::1] od = oid
    cdef const long long[::1] sz = size
    cdef const long long[::1] pr = price
    cdef const signed char[::1] dr = dirn
    cdef Py_ssize_t n = mt.shape[0]

    bid_arr = np.zeros(n, dtype=np.int64)
    ask_arr = np.zeros(n, dtype=np.int64)
    bvol_arr = np.zeros(n, dtype=np.int64)
    avol_arr = np.zeros(n, dtype=np.int64)
    evs_arr = np.zeros(n, dtype=np.int8)
    evp_arr = np.zeros(n, dtype=np.int64)
    evd_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] bid = bid_arr
    cdef long long[::1] ask = ask_arr
    cdef long long[::1] bvol = bvol_arr
    cdef long long[::1] avol = avol_arr
    cdef signed char[::1] evs = evs_arr
    cdef long long[::1] evp = evp_arr
    cdef long long[::1] evd = evd_arr

    snap_arr = None
    cdef long long[:, ::1] snap = None
    if levels > 0:
        snap_arr = np.zeros((n, 4 * levels), dtype=np.int64)
        snap = snap_arr

    cdef Book book = Book(tick)
    cdef Py_ssize_t i
    cdef int t
    cdef long long o, s
    cdef OrderRec* rec
    for i in range(n):
        t = mt[i]
        o = od[i]
        s = sz[i]
        if t == 1:
            try:
                book._c_insert(dr[i], pr[i], s, o)
            except BookError as exc:
                raise BookError(f"message {i}: {exc}") from None
            evs[i] = dr[i]
            evp[i] = pr[i]
            evd[i] = s
        elif t == 2 or t == 3:
            rec = book._find(o)
            if rec is NULL:
                raise BookError(f"message {i}: cancel of unknown order id {o}")
            if t == 3 and s != rec.remaining:
                raise BookError(
                    f"message {i}: delete size {s} != resting size {rec.remaining} for order {o}"
                )
            if s <= 0 or s > rec.remaining:
                raise BookError(
                    f"message {i}: cancel of {s} shares from order {o} holding {rec.remaining}"
                )
            evs[i] = <signed char>rec.side
            evp[i] = rec.price
            evd[i] = -s
            book._c_reduce(o, rec, s)
        elif t == 4:
            rec = book._find(o)
            if rec is NULL:
                raise BookError(f"message {i}: execution against unknown order id {o}")
            if rec.price != pr[i]:
                raise BookError(
                    f"message {i}: execution price {pr[i]} != resting price {rec.price}"
                )
            if s <= 0 or s > rec.remaining:
                raise BookError(
                    f"message {i}: execution of {s} shares against order {o} holding {rec.remaining}"
                )
            evs[i] = <signed char>rec.side
            evp[i] = rec.price
            evd[i] = -s
            book._c_reduce(o, rec, s)
        elif t == 5 or t == 7:
            pass  # hidden executions and halts do not touch the visible book
        else:
            raise BookError(f"message {i}: unknown message type {t}")

        bid[i] = book.best_bid
        ask[i] = book.best_ask
        bvol[i] = book._vol_at_best(_BUY)
        avol[i] = book._vol_at_best(_SELL)
        if levels > 0:
            book._snapshot_into(&snap[i, 0], levels)

    out = {
        "bid": bid_arr,
        "ask": ask_arr,
        "bid_vol": bvol_arr,
        "ask_vol": avol_arr,
        "ev_side": evs_arr,
        "ev_price": evp_arr,
        "ev_delta": evd_arr,
        "book": book,
    }
    if levels > 0:
        out["snapshots"] = snap_arr
    return out


cdef inline Py_ssize_t _write_ll(char* buf, long long v):
    cdef char tmp[24]
    cdef Py_ssize_t k = 0, j = 0
    cdef bint neg = v < 0
    if v == 0:
        buf[0] = 48  # '0'
        return 1
    if neg:
        v = -v
    while v > 0:
        tmp[k] = 48 + <char>(v % 10)
        v //= 10
        k += 1
    if neg:
        buf[j] = 45  # '-'
        j += 1
    while k > 0:
        k -= 1
        buf[j] = tmp[k]
        j += 1
    return j


cdef inline Py_ssize_t _write_frac9(char* buf, long long v):
    cdef Py_ssize_t i
    for i in range(8, -1, -1):
        buf[i] = 48 + <char>(v % 10)
        v //= 10
    return 9


def messages_to_csv(time, mtype, oid, size, price, dirn):
    """Compiled twin of _pycore.messages_to_csv; byte-identical output."""
    cdef const long long[::1] tm = time
    cdef const signed char[::1] mt = mtype
    cdef const long long[::1] od = oid
    cdef const long long[::1] sz = size
    cdef const long long[::1] pr = price
    cdef const signed char[::1] dr = dirn
    cdef Py_ssize_t n = tm.shape[0]
    out = bytearray(n * 96 + 64)
    cdef char* buf = PyByteArray_AS_STRING(out)
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t i
    for i in range(n):
        pos += _write_ll(buf + pos, tm[i] // _NS)
        buf[pos] = 46  # '.'
        pos += 1
        pos += _write_frac9(buf + pos, tm[i] % _NS)
        buf[pos] = 44  # ','
        pos += 1
        pos += _write_ll(buf + pos, mt[i])
        buf[pos] = 44
        pos += 1
        pos += _write_ll(buf + pos, od[i])
        buf[pos] = 44
        pos += 1
        pos += _write_ll(buf + pos, sz[i])
        buf[pos] = 44
        pos += 1
        pos += _write_ll(buf + pos, pr[i])
        buf[pos] = 44
        pos += 1
        pos += _write_ll(buf + pos, dr[i])
        buf[pos] = 10  # '\n'
        pos += 1
    del out[pos:]
    return bytes(out)


def snapshots_to_csv(snapshots):
    """Compiled twin of _pycore.snapshots_to_csv; byte-identical output."""
    arr = np.ascontiguousarray(snapshots, dtype=np.int64)
    cdef const long long[:, ::1] rows = arr
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t m = rows.shape[1]
    out = bytearray(n * (m * 22 + 2) + 64)
    cdef char* buf = PyByteArray_AS_STRING(out)
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            if j:
                buf[pos] = 44
                pos += 1
            pos += _write_ll(buf + pos, rows[i, j])
        buf[pos] = 10
        pos += 1
    del out[pos:]
    return bytes(out)
