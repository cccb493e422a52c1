import numpy as np
import pytest

from lobkit.book import backends
from lobkit.lobster import replay
from lobkit.zi import ZiConfig, simulate_day


@pytest.fixture(params=sorted(backends()))
def backend(request):
    return backends()[request.param]


@pytest.fixture(scope="session")
def sim_small():
    """A couple of minutes of busy flow; shared read-only by many tests."""
    cfg = ZiConfig(
        limit_rate=2.0, market_rate=0.6, cancel_rate=0.01,
        horizon_s=150.0, seed=20240301, initial_depth=3000,
        seed_orders_per_level=5,
    )
    return simulate_day(cfg)


@pytest.fixture(scope="session")
def rep_small(sim_small):
    return replay(sim_small.table, tick=sim_small.config.tick)


def random_ops(rng, n_events, n_levels=10, max_size=10, base_price=10000, tick=100):
    """Random submit/cancel/reduce sequence over a narrow price band.

    Returns an int64 array of (op, side, price, shares, oid) rows, ids
    unique and dense from 1.
    """
    ops = np.zeros((n_events, 5), dtype=np.int64)
    live = []
    next_id = 1
    for i in range(n_events):
        r = rng.random()
        if r < 0.52 or not live:
            side = 1 if rng.random() < 0.5 else -1
            price = base_price + tick * int(rng.integers(0, n_levels))
            ops[i] = (0, side, price, int(rng.integers(1, max_size + 1)), next_id)
            live.append(next_id)  # may match instead of resting; harmless
            next_id += 1
        else:
            pick = int(rng.integers(0, len(live)))
            oid = live[pick]
            if rng.random() < 0.25:
                ops[i] = (2, 0, 0, int(rng.integers(1, max_size + 1)), oid)
            else:
                ops[i] = (1, 0, 0, 0, oid)
                live.pop(pick)
    return ops


def drive_book(book_cls, ops, tick=100):
    """Apply a random_ops sequence to a production Book.

    Returns (tape, final_rows) in the reference oracle's canonical forms.
    Cancels of ids that matched away or over-reduce attempts are skipped,
    mirroring the oracle's tolerance.
    """
    from lobkit.records import EventKind

    book = book_cls(tick)
    tape = []
    for op, side, price, shares, oid in ops:
        if op == 0:
            _, events = book.submit(int(side), int(price), int(shares), 0, int(oid))
            for ev in events:
                if ev.kind == EventKind.EXECUTION:
                    tape.append((ev.order_id, ev.price, -ev.delta, ev.taker_id))
        else:
            if not book.has_order(int(oid)):
                continue
            if op == 1:
                book.cancel(int(oid))
            else:
                rem = book.order_view(int(oid))[2]
                if shares >= rem:
                    book.cancel(int(oid))
                else:
                    book.cancel(int(oid), int(shares))
    rows = []
    bids, _, asks, _ = book.top_levels(1 << 30)
    for side, prices in ((1, bids), (-1, asks)):
        for p in prices:
            for oid in book.level_orders(side, p):
                s, price, rem, seq = book.order_view(oid)
                rows.append((s, price, seq, oid, rem))
    rows.sort()
    return tape, rows
