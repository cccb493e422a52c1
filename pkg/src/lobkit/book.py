"""Order book public surface with backend selection.

The compiled engine (`lobkit._speedups`, Cython) is used when it imported
cleanly; otherwise the pure-Python twin takes over. Set LOBKIT_PURE=1 to
force the pure backend regardless. Both expose the same Book class,
replay kernel, and CSV writers, and agree event for event.
"""

from __future__ import annotations

import os

from . import _pycore
from .records import (  # noqa: F401  (re-exported surface)
    BUY,
    SELL,
    DEFAULT_TICK,
    BookError,
    BookEvent,
    EventKind,
    Quote,
)

if os.environ.get("LOBKIT_PURE"):
    _impl = _pycore
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = _pycore

BACKEND = _impl.BACKEND
Book = _impl.Book
replay_arrays = _impl.replay_arrays
messages_to_csv = _impl.messages_to_csv
snapshots_to_csv = _impl.snapshots_to_csv

ASK_ABSENT = _pycore.ASK_ABSENT
BID_ABSENT = _pycore.BID_ABSENT


def backends() -> dict:
    """All importable backends by name (for tests and benchmarks)."""
    found = {"python": _pycore}
    try:
        from . import _speedups

        found["cython"] = _speedups
    except ImportError:
        pass
    return found


def is_price_maintaining(pre: Quote, post: Quote) -> bool:
    """True iff neither best quote moved between the two snapshots."""
    return pre.bid == post.bid and pre.ask == post.ask


def book_dump(book):
    """Canonical full-depth dump: per side, [(price, [(id, remaining)...])]
    with FIFO queue order preserved. Two books with equal dumps are
    operationally indistinguishable."""
    bids, _, asks, _ = book.top_levels(1 << 30)
    return {
        side: [
            (p, [(oid, book.order_view(oid)[2]) for oid in book.level_orders(side, p)])
            for p in prices
        ]
        for side, prices in ((BUY, bids), (SELL, asks))
    }


def books_equal(a, b) -> bool:
    return a.tick == b.tick and book_dump(a) == book_dump(b)
