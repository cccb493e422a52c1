import numpy as np
import pytest

from lobkit.book import book_dump, books_equal, is_price_maintaining
from lobkit.records import BUY, SELL, BookError, EventKind

from conftest import drive_book, random_ops
from reference import reference_final_book, reference_run


def test_limit_order_rests_on_empty_book(backend):
    book = backend.Book(100)
    is_market, events = book.submit(BUY, 100000, 100, time=5)
    assert not is_market
    kinds = [e.kind for e in events]
    assert kinds == [EventKind.LIMIT_ARRIVAL, EventKind.PRICE_CHANGE]
    q = book.quotes()
    assert (q.bid, q.bid_vol, q.ask) == (100000, 100, None)


def test_marketable_order_fills_at_resting_price(backend):
    book = backend.Book(100)
    book.submit(SELL, 100100, 200)
    pre = book.quotes()
    is_market, events = book.submit(BUY, 100100, 100)
    assert is_market
    fills = [e for e in events if e.kind == EventKind.EXECUTION]
    assert len(fills) == 1
    assert fills[0].price == 100100 and fills[0].delta == -100
    post = book.quotes()
    assert post.ask_vol == 100
    assert is_price_maintaining(pre, post)


def test_aggressive_remainder_rests_and_classifies_as_market(backend):
    book = backend.Book(100)
    book.submit(SELL, 100100, 50)
    is_market, events = book.submit(BUY, 100100, 80)
    assert is_market
    arrival = [e for e in events if e.kind == EventKind.LIMIT_ARRIVAL]
    assert len(arrival) == 1 and arrival[0].delta == 30
    q = book.quotes()
    assert q.bid == 100100 and q.bid_vol == 30 and q.ask is None


def test_match_price_rule_walks_levels(backend):
    book = backend.Book(100)
    book.submit(SELL, 100100, 30)
    book.submit(SELL, 100200, 30)
    _, events = book.submit(BUY, 100300, 50)
    fills = [e for e in events if e.kind == EventKind.EXECUTION]
    assert [(f.price, -f.delta) for f in fills] == [(100100, 30), (100200, 20)]


def test_fifo_within_level(backend):
    book = backend.Book(100)
    _, e1 = book.submit(SELL, 100100, 10)
    _, e2 = book.submit(SELL, 100100, 10)
    first_id = e1[0].order_id
    second_id = e2[0].order_id
    _, events = book.submit(BUY, 100100, 15)
    fills = [e for e in events if e.kind == EventKind.EXECUTION]
    assert [f.order_id for f in fills] == [first_id, second_id]
    assert [-f.delta for f in fills] == [10, 5]


def test_cancel_full_and_partial(backend):
    book = backend.Book(100)
    _, ev = book.submit(BUY, 99900, 100)
    oid = ev[0].order_id
    book.submit(BUY, 99900, 50)
    events = book.cancel(oid, 30)
    assert events[0].kind == EventKind.CANCEL and events[0].delta == -30
    # partial cancel keeps queue position
    assert book.level_orders(BUY, 99900)[0] == oid
    assert book.quotes().bid_vol == 120
    book.cancel(oid)
    assert not book.has_order(oid)
    assert book.quotes().bid_vol == 50


def test_cancel_last_order_moves_quote(backend):
    book = backend.Book(100)
    book.submit(SELL, 100100, 70)
    _, ev = book.submit(SELL, 100000, 40)
    events = book.cancel(ev[0].order_id)
    assert any(
        e.kind == EventKind.PRICE_CHANGE and e.side == SELL and e.price == 100100
        for e in events
    )
    assert book.quotes().ask == 100100


def test_quotes_definition(backend):
    book = backend.Book(100)
    assert book.quotes() == (None, None, 0, 0)
    book.submit(BUY, 99900, 100)
    book.submit(BUY, 99900, 50)
    book.submit(BUY, 99800, 20)
    book.submit(SELL, 100100, 70)
    q = book.quotes()
    assert (q.bid, q.bid_vol, q.ask, q.ask_vol) == (99900, 150, 100100, 70)
    assert q.spread == 200
    assert q.mid == 100000.0


def test_price_maintaining_full_depletion(backend):
    book = backend.Book(100)
    book.submit(SELL, 100100, 200)
    book.submit(SELL, 100200, 10)
    pre = book.quotes()
    book.submit(BUY, 100100, 200)
    assert not is_price_maintaining(pre, book.quotes())


def test_in_spread_arrival_then_trade_through(backend):
    # classification uses the aggressor event's own pre/post quotes
    book = backend.Book(100)
    book.submit(BUY, 99800, 100)
    book.submit(SELL, 100200, 100)
    book.submit(BUY, 100000, 50)  # in-spread limit improves the bid
    pre = book.quotes()
    assert pre.bid == 100000
    is_market, _ = book.submit(SELL, 100000, 20)
    assert is_market
    assert is_price_maintaining(pre, book.quotes())
    pre2 = book.quotes()
    book.submit(SELL, 100000, 30)  # consumes the improved bid entirely
    assert not is_price_maintaining(pre2, book.quotes())


def test_submit_rejections(backend):
    book = backend.Book(100)
    with pytest.raises(BookError):
        book.submit(BUY, 100000, 0)
    with pytest.raises(BookError):
        book.submit(BUY, 100050, 10)  # off-tick
    with pytest.raises(BookError):
        book.submit(BUY, -100, 10)
    with pytest.raises(BookError):
        book.submit(2, 100000, 10)


def test_cancel_errors(backend):
    book = backend.Book(100)
    with pytest.raises(BookError):
        book.cancel(77)
    _, ev = book.submit(BUY, 100000, 10)
    with pytest.raises(BookError):
        book.cancel(ev[0].order_id, 11)


def test_execute_errors(backend):
    book = backend.Book(100)
    with pytest.raises(BookError):
        book.execute(5, 1)
    _, ev = book.submit(BUY, 100000, 10)
    with pytest.raises(BookError):
        book.execute(ev[0].order_id, 11)


def test_duplicate_and_zero_ids_rejected(backend):
    book = backend.Book(100)
    book.submit(BUY, 100000, 10, 0, 42)
    with pytest.raises(BookError):
        book.submit(BUY, 99900, 10, 0, 42)
    with pytest.raises(BookError):
        book.insert(BUY, 99900, 10, 0, 0)


def test_take_best_stops_at_level(backend):
    book = backend.Book(100)
    book.submit(SELL, 100100, 30)
    book.submit(SELL, 100200, 30)
    events = book.take_best(SELL, 100)
    fills = [e for e in events if e.kind == EventKind.EXECUTION]
    assert sum(-f.delta for f in fills) == 30  # never walks deeper
    assert book.quotes().ask == 100200


def test_quote_ordering_and_conservation_random(backend):
    # invariants checked after every event of a random sequence
    rng = np.random.default_rng(7)
    book = backend.Book(100)
    live = []
    expected_vol = {}  # (side, price) -> shares
    for i in range(4000):
        if rng.random() < 0.6 or not live:
            side = BUY if rng.random() < 0.5 else SELL
            price = 100 * int(rng.integers(995, 1006))
            shares = int(rng.integers(1, 11))
            _, events = book.submit(side, price, shares, i)
        else:
            oid = live.pop(int(rng.integers(0, len(live))))
            if not book.has_order(oid):
                continue
            events = book.cancel(oid, time=i)
        for ev in events:
            if ev.kind == EventKind.PRICE_CHANGE:
                continue
            key = (ev.side, ev.price)
            expected_vol[key] = expected_vol.get(key, 0) + ev.delta
            if ev.kind == EventKind.LIMIT_ARRIVAL:
                live.append(ev.order_id)
        q = book.quotes()
        if q.bid is not None and q.ask is not None:
            assert q.bid < q.ask
        for (side, price), vol in expected_vol.items():
            assert book.volume_at(side, price) == vol
    assert all(v >= 0 for v in expected_vol.values())


def test_matching_equals_bruteforce_reference(backend):
    rng = np.random.default_rng(12345)
    for _ in range(12):
        ops = random_ops(rng, 2000)
        tape, rows = drive_book(backend.Book, ops)
        ref = reference_run(ops)
        ref_tape = [tuple(int(x) for x in r) for r in ref[0]]
        assert tape == ref_tape
        assert rows == reference_final_book(ref)


def test_book_dump_equality_helper(backend):
    a = backend.Book(100)
    b = backend.Book(100)
    for book in (a, b):
        book.submit(BUY, 99900, 10, 0, 1)
        book.submit(SELL, 100100, 5, 0, 2)
    assert books_equal(a, b)
    b.cancel(2)
    assert not books_equal(a, b)
    assert book_dump(a)[SELL] == [(100100, [(2, 5)])]
