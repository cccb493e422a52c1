import io

import numpy as np
import pytest

from lobkit import lobster
from lobkit.book import books_equal
from lobkit.lobster import (
    DaySession,
    FormatError,
    MessageTable,
    RawMessage,
    parse_messages,
    read_messages,
    replay,
    serialize_messages,
    session_filter,
    validate_snapshots,
)
from lobkit.records import BUY, SELL, BookError, EventKind
from lobkit.zi import ZiConfig, simulate_day

NS = 10**9


def _parse_str(text):
    return list(parse_messages(io.StringIO(text)))


def test_parse_single_row_fields():
    (m,) = _parse_str("34200.000000001,1,42,100,453100,1\n")
    assert m == RawMessage(34200 * NS + 1, 1, 42, 100, 453100, 1)


def test_parse_execution_row():
    (m,) = _parse_str("34200.5,4,42,100,453100,1\n")
    assert m.time == 34200 * NS + 500_000_000
    assert m.mtype == 4 and m.order_id == 42


def test_parse_pads_short_fractions():
    (m,) = _parse_str("1.5,1,1,1,100,1\n")
    assert m.time == 1_500_000_000
    (m,) = _parse_str("7,1,1,1,100,1\n")
    assert m.time == 7 * NS


@pytest.mark.parametrize(
    "row,needle",
    [
        ("34200.0,1,1,100,100,1,9\n", "expected 6 fields"),
        ("nope,1,1,100,100,1\n", "line 1"),
        ("1.0000000001,1,1,100,100,1\n", "fractional digits"),
        ("34200,6,1,100,100,1\n", "unknown message type 6"),
        ("34200,1,1,0,100,1\n", "non-positive size"),
        ("34200,1,1,100,100,2\n", "direction"),
        ("34200,1,1,100,-5,1\n", "non-positive price"),
    ],
)
def test_parse_rejects_bad_rows(row, needle):
    with pytest.raises(FormatError, match=needle):
        _parse_str(row)


def test_parse_rejects_time_regression():
    with pytest.raises(FormatError, match="line 2.*regression"):
        _parse_str("2,1,1,1,100,1\n1.999999999,1,2,1,100,1\n")


def test_halt_rows_skip_field_checks():
    (m,) = _parse_str("34200,7,0,0,-1,-1\n")
    assert m.mtype == 7


def test_serialize_parse_round_trip(tmp_path):
    canonical = (
        "34200.000000001,1,42,100,453100,1\n"
        "34200.500000000,4,42,40,453100,1\n"
        "34201.000000000,3,42,60,453100,1\n"
    ).encode()
    p = tmp_path / "m.csv"
    p.write_bytes(canonical)
    table = MessageTable.from_messages(parse_messages(p))
    assert serialize_messages(table) == canonical
    # parse . serialize . parse == parse on non-canonical input
    noncanon = "34200.5,1,1,10,100,1\n"
    t1 = MessageTable.from_messages(_parse_str(noncanon))
    b1 = serialize_messages(t1)
    t2 = MessageTable.from_messages(parse_messages(io.StringIO(b1.decode())))
    assert serialize_messages(t2) == b1


def test_fast_reader_matches_streaming_parser(tmp_path, sim_small):
    p = tmp_path / "day.csv"
    sim_small.table.write(p)
    fast = read_messages(p)
    slow = MessageTable.from_messages(parse_messages(p))
    for f in ("time", "mtype", "order_id", "size", "price", "direction"):
        assert np.array_equal(getattr(fast, f), getattr(slow, f)), f


def test_fast_reader_exact_times_random(tmp_path):
    # exact ns recovery across the whole trading day range
    rng = np.random.default_rng(3)
    ns = np.sort(rng.integers(0, 86400 * NS, size=50_000))
    rows = "".join(f"{t // NS}.{t % NS:09d},1,{i + 1},1,100,1\n" for i, t in enumerate(ns))
    p = tmp_path / "t.csv"
    p.write_text(rows)
    table = read_messages(p)
    assert np.array_equal(table.time, ns)


def test_fast_reader_falls_back_for_diagnostics(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("34200,1,1,100,100,1\n34201,1,x,100,100,1\n")
    with pytest.raises(FormatError, match="line 2"):
        read_messages(p)


def test_replay_insert_then_delete():
    msgs = [
        RawMessage(1, 1, 7, 100, 100000, BUY),
        RawMessage(2, 3, 7, 100, 100000, BUY),
    ]
    rep = replay(msgs)
    assert rep.book.n_resting == 0
    triples = list(rep)
    assert triples[0][1].kind == EventKind.LIMIT_ARRIVAL
    assert triples[1][1].kind == EventKind.CANCEL
    assert triples[1][2] == (None, None, 0, 0)


def test_replay_partial_execution_keeps_quotes():
    msgs = [
        RawMessage(1, 1, 1, 100, 100100, SELL),
        RawMessage(2, 4, 1, 40, 100100, SELL),
    ]
    rep = replay(msgs)
    before, ev, after = list(rep)[1]
    assert before.ask_vol == 100 and after.ask_vol == 60
    assert ev.delta == -40
    assert (before.bid, before.ask) == (after.bid, after.ask)


def test_replay_hidden_and_halt_do_not_touch_book():
    msgs = [
        RawMessage(1, 1, 1, 100, 100100, SELL),
        RawMessage(2, 5, 0, 50, 100000, BUY),
        RawMessage(3, 7, 0, 1, 1, 1),
    ]
    rep = replay(msgs)
    assert rep.book.quotes().ask_vol == 100
    assert rep.ev_delta[1] == 0 and rep.ev_delta[2] == 0


def test_replay_rejects_crossing_limit():
    msgs = [
        RawMessage(1, 1, 1, 100, 100100, SELL),
        RawMessage(2, 1, 2, 100, 100100, BUY),
    ]
    with pytest.raises(BookError, match="crosses"):
        replay(msgs)


def test_replay_rejects_bad_references():
    with pytest.raises(BookError, match="unknown order id"):
        replay([RawMessage(1, 4, 9, 10, 100000, BUY)])
    msgs = [
        RawMessage(1, 1, 1, 100, 100100, SELL),
        RawMessage(2, 4, 1, 500, 100100, SELL),
    ]
    with pytest.raises(BookError, match="execution of 500"):
        replay(msgs)
    msgs = [
        RawMessage(1, 1, 1, 100, 100100, SELL),
        RawMessage(2, 3, 1, 99, 100100, SELL),
    ]
    with pytest.raises(BookError, match="delete size"):
        replay(msgs)


def test_replay_of_sim_day_reproduces_final_book(sim_small):
    rep = replay(sim_small.table, tick=sim_small.config.tick)
    assert books_equal(rep.book, sim_small.final_book)


def test_validate_snapshots_clean_and_perturbed(sim_small):
    report = validate_snapshots(sim_small.table, sim_small.snapshots)
    assert report.ok and report.n_mismatches == 0
    bad = sim_small.snapshots.copy()
    bad[137, 1] += 1
    report = validate_snapshots(sim_small.table, bad)
    assert report.n_mismatches == 1
    assert report.first_mismatches[0][0] == 137
    assert "137" in report.summary()


def test_validate_snapshots_empty_day():
    table = MessageTable.from_messages([])
    report = validate_snapshots(table, np.zeros((0, 8), dtype=np.int64))
    assert report.ok and report.n_messages == 0


def test_validate_snapshots_length_mismatch(sim_small):
    with pytest.raises(FormatError, match="length mismatch"):
        validate_snapshots(sim_small.table, sim_small.snapshots[:-1])


def test_session_filter_boundaries():
    session = DaySession()
    t_open = 34200 * NS
    inside = RawMessage(12 * 3600 * NS, 1, 1, 1, 100, 1)
    early = RawMessage(t_open + 999 * NS, 1, 2, 1, 100, 1)
    kept = session_filter([early, inside], session)
    assert kept == [inside]


def test_session_filter_counting_oracle():
    # uniform stream: retained count equals an explicit scan
    session = DaySession()
    times = np.linspace(34200 * NS, 57600 * NS, 50_001).astype(np.int64)
    table = MessageTable(
        times,
        np.ones(len(times), np.int8),
        np.arange(1, len(times) + 1, dtype=np.int64),
        np.ones(len(times), np.int64),
        np.full(len(times), 100, np.int64),
        np.ones(len(times), np.int8),
    )
    kept = session_filter(table, session)
    direct = sum(1 for t in times if session.start_ns <= t < session.end_ns)
    assert len(kept) == direct
    assert 0 < len(kept) < len(table)


def test_day_session_validation():
    with pytest.raises(ValueError):
        DaySession(trim_ns=-1)
    with pytest.raises(ValueError):
        DaySession(trim_ns=13000 * NS)  # trims cross over


def test_snapshot_file_round_trip(tmp_path, sim_small):
    p = tmp_path / "s.csv"
    lobster.write_snapshots(sim_small.snapshots, p)
    back = lobster.read_snapshots(p)
    assert np.array_equal(back, sim_small.snapshots)
