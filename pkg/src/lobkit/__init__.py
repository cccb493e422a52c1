"""lobkit: limit order book reconstruction, simulation, and order-flow studies.

Subpackage map:
    book     price-time priority matching engine (compiled core + fallback)
    lobster  message/snapshot file IO, replay, session filtering
    zi       zero-intelligence Poisson order-flow simulator
    flow     market-order detection, net-flow trajectories, mean curves
    stats    ECDFs, bootstrap standard errors, symlog transform
    cli      batch command-line entry point
"""

from .book import BACKEND, BUY, SELL, Book, BookError, is_price_maintaining
from .records import BookEvent, EventKind, Quote

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BUY",
    "SELL",
    "Book",
    "BookError",
    "BookEvent",
    "EventKind",
    "Quote",
    "is_price_maintaining",
    "__version__",
]
