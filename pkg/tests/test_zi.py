import numpy as np
import pytest
from scipy import stats as sps

from lobkit.book import books_equal
from lobkit.lobster import NS, replay, validate_snapshots
from lobkit.zi import ZiConfig, SimOutput, inject_latency_floor, simulate_day


def test_deterministic_given_seed():
    cfg = ZiConfig(limit_rate=3.0, market_rate=1.0, cancel_rate=0.01, horizon_s=20.0, seed=77)
    a, b = simulate_day(cfg), simulate_day(cfg)
    assert a.table.to_csv_bytes() == b.table.to_csv_bytes()
    assert np.array_equal(a.snapshots, b.snapshots)
    assert a.market_orders == b.market_orders


def test_different_seeds_differ():
    cfg = ZiConfig(horizon_s=20.0, seed=1)
    import dataclasses

    other = dataclasses.replace(cfg, seed=2)
    assert simulate_day(cfg).table.to_csv_bytes() != simulate_day(other).table.to_csv_bytes()


def test_all_rates_zero_empty_stream():
    cfg = ZiConfig(limit_rate=0, market_rate=0, cancel_rate=0, initial_depth=0, horizon_s=5.0)
    out = simulate_day(cfg)
    assert len(out.table) == 0
    assert out.final_book.n_resting == 0


def test_all_rates_zero_keeps_seeded_book():
    cfg = ZiConfig(limit_rate=0, market_rate=0, cancel_rate=0, horizon_s=5.0,
                   initial_depth=500, band_levels=3)
    out = simulate_day(cfg)
    assert len(out.table) == 6  # seeding rows only
    assert (out.table.mtype == 1).all()
    q = out.final_book.quotes()
    assert q.bid == cfg.initial_bid and q.ask == cfg.initial_bid + cfg.tick
    assert q.bid_vol == 500


def test_poisson_count_of_pure_limit_stream():
    cfg = ZiConfig(limit_rate=4.0, market_rate=0.0, cancel_rate=0.0,
                   band_levels=5, horizon_s=300.0, seed=5)
    out = simulate_day(cfg)
    n_seeds = 2 * cfg.band_levels * cfg.seed_orders_per_level
    observed = len(out.table) - n_seeds
    expected = 2 * cfg.band_levels * cfg.limit_rate * cfg.horizon_s
    assert (out.table.mtype[n_seeds:] == 1).all()
    assert abs(observed - expected) < 4 * np.sqrt(expected)


def test_replay_consistency(sim_small):
    rep = replay(sim_small.table, tick=sim_small.config.tick)
    assert books_equal(rep.book, sim_small.final_book)
    assert validate_snapshots(sim_small.table, sim_small.snapshots).ok


def test_event_mix_matches_fixed_rates_chi_square():
    # fixed total rates: proportions converge to the configured split
    cfg = ZiConfig(
        limit_rate=53.0 / 10, market_rate=1.0, total_cancel_rate=45.0,
        band_levels=5, horizon_s=1200.0, seed=8, initial_depth=50_000,
        seed_orders_per_level=50,
    )
    out = simulate_day(cfg)
    n_seeds = 2 * cfg.band_levels * cfg.seed_orders_per_level
    m = out.table.mtype[n_seeds:]
    n_limit = int((m == 1).sum()) - len(out.reseed_indices)
    n_cancel = int(((m == 2) | (m == 3)).sum())
    n_market = len(out.market_orders)
    total = n_limit + n_cancel + n_market
    assert total >= 100_000
    chi2, p = sps.chisquare(
        [n_market, n_limit, n_cancel],
        [total * 2 / 100, total * 53 / 100, total * 45 / 100],
    )
    assert p > 0.01


def test_interarrival_times_exponential_ks():
    # limits + fixed-rate cancels only: one message per epoch, rate constant
    cfg = ZiConfig(
        limit_rate=10.0, market_rate=0.0, total_cancel_rate=100.0,
        band_levels=5, horizon_s=600.0, seed=13, initial_depth=20_000,
        seed_orders_per_level=20, partial_cancel_prob=0.3,
    )
    out = simulate_day(cfg)
    n_seeds = 2 * cfg.band_levels * cfg.seed_orders_per_level
    times = out.table.time[n_seeds:]
    gaps = np.diff(times) / 1e9
    lam = 2 * cfg.band_levels * cfg.limit_rate + cfg.total_cancel_rate
    n = len(gaps)
    assert n >= 100_000
    d, p = sps.kstest(gaps, "expon", args=(0, 1 / lam))
    dkw = np.sqrt(np.log(2 / 0.01) / (2 * n))
    assert d < dkw


def test_sim_output_replays_without_error_random_configs():
    rng = np.random.default_rng(55)
    for _ in range(4):
        cfg = ZiConfig(
            limit_rate=float(rng.uniform(0.5, 4.0)),
            market_rate=float(rng.uniform(0.2, 2.0)),
            cancel_rate=float(rng.uniform(0.001, 0.05)),
            horizon_s=30.0,
            seed=int(rng.integers(1, 1 << 30)),
            initial_depth=int(rng.integers(500, 4000)),
            order_sizes=tuple(range(100, 600, 100)),
        )
        out = simulate_day(cfg)
        assert validate_snapshots(out.table, out.snapshots).ok


def test_depletion_reseeds_and_stays_consistent():
    # violent flow against a thin book forces reseeding
    cfg = ZiConfig(limit_rate=0.05, market_rate=4.0, cancel_rate=0.2,
                   horizon_s=60.0, seed=3, initial_depth=300,
                   order_sizes=(400,))
    out = simulate_day(cfg)
    assert len(out.reseed_indices) > 0
    assert validate_snapshots(out.table, out.snapshots).ok
    rep = replay(out.table, tick=cfg.tick)
    assert books_equal(rep.book, out.final_book)


def test_latency_floor_identity_and_shift():
    from lobkit.lobster import MessageTable

    base = MessageTable(
        np.array([1000, 1100, 5000], dtype=np.int64),
        np.array([1, 1, 1], dtype=np.int8),
        np.array([1, 2, 3], dtype=np.int64),
        np.array([10, 10, 10], dtype=np.int64),
        np.array([100000, 99900, 99800], dtype=np.int64),
        np.array([1, 1, 1], dtype=np.int8),
    )
    same = inject_latency_floor(base, 0)
    assert np.array_equal(same.time, base.time)
    moved = inject_latency_floor(base, 700)
    assert moved.time.tolist() == [1000, 1700, 5000]


def test_latency_floor_preserves_groups_and_bounds_gaps():
    times = np.array([10, 10, 10, 500, 2000, 2000], dtype=np.int64)
    from lobkit.lobster import MessageTable

    t = MessageTable(
        times,
        np.array([1, 1, 1, 1, 1, 1], dtype=np.int8),
        np.arange(1, 7, dtype=np.int64),
        np.full(6, 10, np.int64),
        np.array([99000, 99100, 99200, 99300, 99400, 99500], dtype=np.int64),
        np.ones(6, np.int8),
    )
    out = inject_latency_floor(t, 1000)
    assert out.time.tolist() == [10, 10, 10, 1010, 2010, 2010]
    distinct = np.unique(out.time)
    assert (np.diff(distinct) >= 1000).all()


def test_latency_floor_in_config_floors_market_order_gaps():
    cfg = ZiConfig(limit_rate=5.0, market_rate=3.0, cancel_rate=0.01,
                   horizon_s=60.0, seed=9, latency_floor_ns=1000)
    out = simulate_day(cfg)
    gaps = np.diff(np.unique(out.table.time))
    assert gaps.min() >= 1000
    mo_times = np.array([mo.time for mo in out.market_orders])
    assert np.diff(mo_times).min() >= 1000
    # log times still line up with the retimed messages
    for mo in out.market_orders[:20]:
        assert out.table.time[mo.first_index] == mo.time
    assert validate_snapshots(out.table, out.snapshots).ok


def test_config_text_round_trip():
    cfg = ZiConfig(limit_rate=1.5, total_cancel_rate=2.25, seed=44,
                   order_sizes=(100, 300), latency_floor_ns=700)
    again = ZiConfig.from_text(cfg.to_text())
    assert again == cfg


def test_config_rejects_unknown_key_and_bad_values():
    with pytest.raises(ValueError, match="unknown key"):
        ZiConfig.from_text("no_such_thing = 5\n")
    with pytest.raises(ValueError):
        ZiConfig(limit_rate=-1)
    with pytest.raises(ValueError):
        ZiConfig(horizon_s=0)
    with pytest.raises(ValueError):
        ZiConfig(initial_depth=0, limit_rate=1.0)
    with pytest.raises(ValueError):
        ZiConfig(band_levels=0)
