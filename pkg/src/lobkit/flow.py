"""Net order flow around market-order arrivals.

Detects market orders from replayed streams, builds per-event cumulative
net-flow trajectories at the best quotes before and after each arrival,
and averages them into mean curves with bootstrap errors.

Conventions. A market order's "same side" is the quote it consumed (ask
for a buy), "opposite" is the other one. Forward flow is measured over
(t, t+tau]: the event's own fills are excluded, an event exactly at t+tau
counts. Backward flow is V(t-) - V(t-tau), i.e. the window (t-tau, t)
open at both ends, reported against negative lags. At lag tau an event
contributes only if its gap to the next (previous, for backward) market
order is at least tau.

In strict mode flow is counted at the best price frozen at the event, and
the trajectory ends at the first change of either best quote, which makes
the cumulative flow equal the volume difference at that price, exactly.
In relaxed mode the trajectory follows the prevailing best price on the
tracked side through depletions (the final departure counts) and in-spread
arrivals (the arrival counts), and is defined out to tau_max.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .lobster import MSG_EXEC_VISIBLE, NS, DaySession, Replay
from .stats import bootstrap_stderr

SAME = "same"
OPPOSITE = "opposite"
AFTER = "after"
BEFORE = "before"
STRICT = "strict"
RELAXED = "relaxed"

_CURVE_STREAMS = {
    (SAME, AFTER): 0,
    (OPPOSITE, AFTER): 1,
    (SAME, BEFORE): 2,
    (OPPOSITE, BEFORE): 3,
}


def log_grid(tau_min: float = 1e-7, tau_max: float = 10.0, per_decade: int = 20) -> np.ndarray:
    """Logarithmic lag grid in seconds, per_decade points per decade,
    both endpoints included."""
    if not 0 < tau_min < tau_max:
        raise ValueError("need 0 < tau_min < tau_max")
    n_dec = np.log10(tau_max / tau_min)
    n = int(round(n_dec * per_decade))
    return np.logspace(np.log10(tau_min), np.log10(tau_max), n + 1)


def grid_to_ns(grid_s: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(grid_s) * NS).astype(np.int64)


class MarketOrder(NamedTuple):
    time: int            # ns of the fill group
    direction: int       # +1 buy aggressor, -1 sell aggressor
    total_shares: int
    maintaining: bool
    first_index: int     # replay message index of first/last fill
    last_index: int
    next_gap_ns: int     # time to next market order, -1 if none
    prev_gap_ns: int     # time since previous market order, -1 if none


def detect_market_orders(rep: Replay) -> list[MarketOrder]:
    """Group visible executions into market orders.

    Consecutive execution rows with the same nanosecond timestamp and the
    same aggressor direction form one market order. price-maintaining is
    judged from the quotes before the first and after the last fill.
    """
    m = rep.table
    ex = np.flatnonzero(m.mtype == MSG_EXEC_VISIBLE)
    if ex.size == 0:
        return []
    t = m.time[ex]
    d = -m.direction[ex].astype(np.int64)  # aggressor = opposite of resting side
    s = m.size[ex]
    new = np.empty(ex.size, dtype=bool)
    new[0] = True
    new[1:] = (t[1:] != t[:-1]) | (d[1:] != d[:-1])
    starts = np.flatnonzero(new)
    ends = np.append(starts[1:], ex.size) - 1
    first = ex[starts]
    last = ex[ends]
    totals = np.add.reduceat(s, starts)
    pre_b = np.where(first > 0, rep.bid[np.maximum(first - 1, 0)], 0)
    pre_a = np.where(first > 0, rep.ask[np.maximum(first - 1, 0)], 0)
    maintaining = (pre_b == rep.bid[last]) & (pre_a == rep.ask[last])
    gt = t[starts]
    out = []
    n = starts.size
    for i in range(n):
        out.append(
            MarketOrder(
                int(gt[i]),
                int(d[starts[i]]),
                int(totals[i]),
                bool(maintaining[i]),
                int(first[i]),
                int(last[i]),
                int(gt[i + 1] - gt[i]) if i + 1 < n else -1,
                int(gt[i] - gt[i - 1]) if i > 0 else -1,
            )
        )
    return out


@dataclass(frozen=True)
class EventSet:
    """T-separated (optionally price-maintaining) market orders."""

    events: tuple
    T_s: float
    maintaining_only: bool
    backward: bool = False

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


def select_event_set(
    events: Sequence[MarketOrder],
    T_s: float,
    maintaining_only: bool = True,
    backward: bool = False,
) -> EventSet:
    """Keep events whose gap to the next market order is >= T.

    The day's last event is always dropped (it has no successor). With
    backward=True the rule mirrors: gap to the previous market order,
    first event dropped.
    """
    T_ns = int(round(T_s * NS))
    kept = []
    for ev in events:
        gap = ev.prev_gap_ns if backward else ev.next_gap_ns
        if gap < 0 or gap < T_ns:
            continue
        if maintaining_only and not ev.maintaining:
            continue
        kept.append(ev)
    return EventSet(tuple(kept), T_s, maintaining_only, backward)


@dataclass
class Trajectory:
    """One event's net-flow samples on the lag grid.

    w[j] is meaningful only where defined[j]; gap_ns carries the event's
    separation for the per-lag inclusion rule (-1 = no neighbour).
    """

    event: MarketOrder
    side: str
    direction: str
    mode: str
    grid_s: np.ndarray
    w: np.ndarray
    defined: np.ndarray
    gap_ns: int
    clipped: bool = False

    @property
    def tau_s(self) -> np.ndarray:
        return -self.grid_s if self.direction == BEFORE else self.grid_s


def _clip_bounds(rep: Replay, session: Optional[DaySession]):
    if session is not None:
        return session.start_ns, session.end_ns
    times = rep.table.time
    if len(times) == 0:
        return 0, 0
    return int(times[0]), int(times[-1])


class _FlowEngine:
    """Shared per-event window extraction over replay columns."""

    def __init__(self, rep: Replay, grid_s: np.ndarray, session: Optional[DaySession]):
        self.rep = rep
        self.grid_s = np.asarray(grid_s, dtype=np.float64)
        self.grid_ns = grid_to_ns(self.grid_s)
        self.times = rep.table.time
        self.qc_idx = np.flatnonzero(rep.quote_changed)
        self.t_lo, self.t_hi = _clip_bounds(rep, session)

    def _best_arrays(self, side_sign: int):
        return (self.rep.bid, self.rep.bid_vol) if side_sign > 0 else (self.rep.ask, self.rep.ask_vol)

    def row(self, ev: MarketOrder, side: str, direction: str, mode: str):
        """(w, defined, clipped) for one event on the lag grid."""
        tracked = -ev.direction if side == SAME else ev.direction
        best, _ = self._best_arrays(tracked)
        n = len(self.times)
        grid_ns = self.grid_ns
        w = np.zeros(len(grid_ns), dtype=np.int64)
        defined = np.zeros(len(grid_ns), dtype=bool)

        if direction == AFTER:
            t0 = ev.time
            ref = int(np.searchsorted(self.times, t0, side="right")) - 1
            if ref < 0:
                return w, defined, True
            p0 = int(best[ref])
            start = ref + 1
            horizon_ns = np.iinfo(np.int64).max
            if mode == STRICT:
                if p0 == 0:
                    return w, defined, True
                pos = int(np.searchsorted(self.qc_idx, start, side="left"))
                if pos < self.qc_idx.size:
                    horizon_ns = int(self.times[self.qc_idx[pos]]) - t0
            max_tau = int(grid_ns[-1])
            if ev.next_gap_ns >= 0:
                max_tau = min(max_tau, ev.next_gap_ns)
            end = int(np.searchsorted(self.times, t0 + max_tau, side="right"))
            sl = slice(start, end)
            rel_t = self.times[sl] - t0
            clip_ok = t0 + grid_ns <= self.t_hi
            measurable = clip_ok & (grid_ns < horizon_ns) if mode == STRICT else clip_ok
        else:
            te = ev.time
            ref = int(np.searchsorted(self.times, te, side="left")) - 1
            if ref < 0:
                return w, defined, True
            p0 = int(best[ref])
            horizon_ns = np.iinfo(np.int64).max
            if mode == STRICT:
                if p0 == 0:
                    return w, defined, True
                pos = int(np.searchsorted(self.qc_idx, ref, side="right")) - 1
                if pos >= 0:
                    horizon_ns = te - int(self.times[self.qc_idx[pos]])
                else:
                    horizon_ns = te - int(self.times[0]) + 1
            max_tau = int(grid_ns[-1])
            if ev.prev_gap_ns >= 0:
                max_tau = min(max_tau, ev.prev_gap_ns)
            start = int(np.searchsorted(self.times, te - max_tau, side="left"))
            sl = slice(start, ref + 1)
            rel_t = te - self.times[sl]  # window (te - tau, te): strict inequality
            clip_ok = te - grid_ns >= self.t_lo
            measurable = clip_ok & (grid_ns < horizon_ns) if mode == STRICT else clip_ok

        sides = self.rep.ev_side[sl]
        prices = self.rep.ev_price[sl]
        deltas = self.rep.ev_delta[sl]
        if mode == STRICT:
            counted = (sides == tracked) & (prices == p0) & (deltas != 0)
        else:
            b_after = best[sl]
            lo = sl.start
            b_before = best[lo - 1 : sl.stop - 1] if lo > 0 else np.concatenate(([0], best[: sl.stop - 1]))
            counted = (sides == tracked) & (deltas != 0) & ((prices == b_before) | (prices == b_after))

        ct = rel_t[counted]
        cd = deltas[counted]
        if direction == BEFORE:
            # stored window slice is time-ascending; rel_t descends. flip so
            # cumulative sums run from the event backwards in time.
            ct = ct[::-1]
            cd = cd[::-1]
        if ct.size:
            cum = np.cumsum(cd)
            if direction == AFTER:
                pos = np.searchsorted(ct, grid_ns, side="right")
            else:
                pos = np.searchsorted(ct, grid_ns, side="left")
            w = np.where(pos > 0, cum[np.maximum(pos - 1, 0)], 0)
        defined = measurable
        clipped = bool(np.any(~clip_ok))
        return w, defined, clipped


def trajectory_after(
    rep: Replay,
    event: MarketOrder,
    side: str = SAME,
    mode: str = STRICT,
    grid_s: Optional[np.ndarray] = None,
    session: Optional[DaySession] = None,
) -> Trajectory:
    """Net-flow samples over (t, t+tau] for one market order."""
    grid = log_grid() if grid_s is None else np.asarray(grid_s)
    eng = _FlowEngine(rep, grid, session)
    w, defined, clipped = eng.row(event, side, AFTER, mode)
    return Trajectory(event, side, AFTER, mode, grid, w, defined, event.next_gap_ns, clipped)


def trajectory_before(
    rep: Replay,
    event: MarketOrder,
    side: str = SAME,
    mode: str = STRICT,
    grid_s: Optional[np.ndarray] = None,
    session: Optional[DaySession] = None,
) -> Trajectory:
    """Net-flow samples over (t-tau, t), reported against negative lags."""
    grid = log_grid() if grid_s is None else np.asarray(grid_s)
    eng = _FlowEngine(rep, grid, session)
    w, defined, clipped = eng.row(event, side, BEFORE, mode)
    return Trajectory(event, side, BEFORE, mode, grid, w, defined, event.prev_gap_ns, clipped)


@dataclass
class Curve:
    """Mean net-flow curve over the lag grid.

    Carries exact integer (sum, sum of squares, count) per lag so disjoint
    curves merge associatively; mean and stderr are divided by the
    normalization basis on access (basis 1 = raw shares).
    """

    tau_s: np.ndarray
    n: np.ndarray
    w_sum: np.ndarray
    w_sumsq: np.ndarray
    stderr_raw: np.ndarray
    basis: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n > 0, self.w_sum / np.maximum(self.n, 1), np.nan) / self.basis

    @property
    def stderr(self) -> np.ndarray:
        return self.stderr_raw / self.basis

    def csv_bytes(self) -> bytes:
        lines = ["tau,mean,stderr,n"]
        mean, err = self.mean, self.stderr
        for i in range(len(self.tau_s)):
            if self.n[i] > 0:
                m = repr(float(mean[i]))
                e = "" if np.isnan(err[i]) else repr(float(err[i]))
            else:
                m = ""
                e = ""
            lines.append(f"{repr(float(self.tau_s[i]))},{m},{e},{self.n[i]}")
        return ("\n".join(lines) + "\n").encode()

    def write_csv(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.csv_bytes())


def _curve_from_rows(tau_s, w_rows, defined_rows, gaps_ns, grid_ns, *,
                     bootstrap_b, seed, stream_base, meta) -> Curve:
    n_lags = len(grid_ns)
    n_col = np.zeros(n_lags, dtype=np.int64)
    s_col = np.zeros(n_lags, dtype=np.int64)
    q_col = np.zeros(n_lags, dtype=np.int64)
    e_col = np.full(n_lags, np.nan)
    if len(w_rows):
        W = np.vstack(w_rows)
        D = np.vstack(defined_rows)
        gaps = np.asarray(gaps_ns, dtype=np.int64)
        include = D & ((gaps[:, None] < 0) | (gaps[:, None] >= grid_ns[None, :]))
        for j in range(n_lags):
            vals = W[include[:, j], j]
            if vals.size == 0:
                continue
            n_col[j] = vals.size
            s_col[j] = int(vals.sum())
            q_col[j] = int(np.dot(vals, vals))
            if bootstrap_b > 0:
                est = bootstrap_stderr(vals, b=bootstrap_b, seed=seed, stream=stream_base + j)
                e_col[j] = est.stderr
    return Curve(np.asarray(tau_s, dtype=np.float64), n_col, s_col, q_col, e_col, meta=dict(meta))


def aggregate(
    trajectories: Sequence[Trajectory],
    bootstrap_b: int = 10000,
    seed: int = 0,
) -> Curve:
    """Average trajectories lag by lag under the separation-inclusion rule."""
    if not trajectories:
        raise ValueError("no trajectories to aggregate")
    t0 = trajectories[0]
    grid_ns = grid_to_ns(t0.grid_s)
    for tr in trajectories:
        if (tr.side, tr.direction, tr.mode) != (t0.side, t0.direction, t0.mode):
            raise ValueError("mixed trajectory kinds")
        if len(tr.grid_s) != len(t0.grid_s) or not np.allclose(tr.grid_s, t0.grid_s):
            raise ValueError("mixed lag grids")
    stream = _CURVE_STREAMS[(t0.side, t0.direction)] << 32
    meta = {"side": t0.side, "direction": t0.direction, "mode": t0.mode,
            "bootstrap_b": bootstrap_b, "seed": seed}
    return _curve_from_rows(
        t0.tau_s, [tr.w for tr in trajectories], [tr.defined for tr in trajectories],
        [tr.gap_ns for tr in trajectories], grid_ns,
        bootstrap_b=bootstrap_b, seed=seed, stream_base=stream, meta=meta,
    )


def study_curve(
    rep: Replay,
    events: EventSet,
    side: str = SAME,
    direction: str = AFTER,
    mode: str = STRICT,
    grid_s: Optional[np.ndarray] = None,
    session: Optional[DaySession] = None,
    bootstrap_b: int = 10000,
    seed: int = 0,
) -> Curve:
    """One mean curve over an event set (batched trajectory extraction)."""
    grid = log_grid() if grid_s is None else np.asarray(grid_s)
    eng = _FlowEngine(rep, grid, session)
    w_rows, d_rows, gaps = [], [], []
    for ev in events:
        w, defined, _ = eng.row(ev, side, direction, mode)
        w_rows.append(w)
        d_rows.append(defined)
        gaps.append(ev.prev_gap_ns if direction == BEFORE else ev.next_gap_ns)
    tau = -grid if direction == BEFORE else grid
    stream = _CURVE_STREAMS[(side, direction)] << 32
    meta = {
        "side": side, "direction": direction, "mode": mode,
        "T_s": events.T_s, "maintaining_only": events.maintaining_only,
        "n_events": len(events), "bootstrap_b": bootstrap_b, "seed": seed,
    }
    return _curve_from_rows(
        tau, w_rows, d_rows, gaps, eng.grid_ns,
        bootstrap_b=bootstrap_b, seed=seed, stream_base=stream, meta=meta,
    )


def merge_curves(a: Curve, b: Curve) -> Curve:
    """Exact merge of disjoint curves: sums and counts add; the merged
    mean is the count-weighted mean. Bootstrap errors do not merge and
    come back NaN."""
    if len(a.tau_s) != len(b.tau_s) or not np.array_equal(a.tau_s, b.tau_s):
        raise ValueError("lag grids differ")
    if a.basis != b.basis:
        raise ValueError("normalization bases differ")
    return Curve(
        a.tau_s.copy(),
        a.n + b.n,
        a.w_sum + b.w_sum,
        a.w_sumsq + b.w_sumsq,
        np.full(len(a.tau_s), np.nan),
        basis=a.basis,
        meta={**a.meta, "merged": True},
    )


@dataclass(frozen=True)
class NormalizationBasis:
    """Time-weighted session mean of the two best-quote volumes, pooled."""

    mean_best_volume: float

    def __post_init__(self):
        if not self.mean_best_volume > 0:
            raise ValueError("normalization basis must be positive")


def mean_best_volume(rep: Replay, t_lo: Optional[int] = None, t_hi: Optional[int] = None) -> NormalizationBasis:
    """Integrate V_bid + V_ask over [t_lo, t_hi] and divide by 2*span.

    The volume paths are piecewise constant between messages, so the
    integral is exact. Default span is the data range.
    """
    times = rep.table.time
    if len(times) == 0:
        raise ValueError("empty replay")
    lo = int(times[0]) if t_lo is None else int(t_lo)
    hi = int(times[-1]) if t_hi is None else int(t_hi)
    if hi <= lo:
        raise ValueError("empty time span")
    seg_lo = np.clip(times, lo, hi)
    seg_hi = np.clip(np.append(times[1:], hi), lo, hi)
    dur = np.maximum(seg_hi - seg_lo, 0)
    total = np.dot((rep.bid_vol + rep.ask_vol).astype(np.float64), dur.astype(np.float64))
    return NormalizationBasis(total / (2.0 * (hi - lo)))


def normalize(curve: Curve, basis: NormalizationBasis) -> Curve:
    """Dimensionless curve: mean and stderr divided by the basis."""
    return dataclasses.replace(
        curve,
        basis=curve.basis * basis.mean_best_volume,
        meta={**curve.meta, "normalization_basis": basis.mean_best_volume},
    )


def summarize(rep: Replay, mos: Sequence[MarketOrder], session: Optional[DaySession] = None) -> dict:
    """Event-mix and liquidity summary of one stream (scan command).

    Counts and means cover the session window when one is given, the whole
    stream otherwise. Spread and best-quote volume are time-weighted;
    trade price is share-weighted. Prices come back in currency units.
    """
    m = rep.table
    t_lo, t_hi = _clip_bounds(rep, session)
    in_win = (m.time >= t_lo) & (m.time <= t_hi)
    from .lobster import MSG_DELETE, MSG_EXEC_HIDDEN, MSG_HALT, MSG_NEW, MSG_PARTIAL_CANCEL

    n_limit = int(np.count_nonzero(in_win & (m.mtype == MSG_NEW)))
    n_cancel = int(np.count_nonzero(in_win & ((m.mtype == MSG_PARTIAL_CANCEL) | (m.mtype == MSG_DELETE))))
    n_hidden = int(np.count_nonzero(in_win & (m.mtype == MSG_EXEC_HIDDEN)))
    n_halt = int(np.count_nonzero(in_win & (m.mtype == MSG_HALT)))
    mos_in = [mo for mo in mos if t_lo <= mo.time <= t_hi]
    n_mo = len(mos_in)
    total = n_limit + n_cancel + n_mo

    out = {
        "n_messages": int(np.count_nonzero(in_win)),
        "n_market_orders": n_mo,
        "n_limit_arrivals": n_limit,
        "n_cancellations": n_cancel,
        "n_hidden_executions": n_hidden,
        "n_halts": n_halt,
        "pct_market_orders": 100.0 * n_mo / total if total else None,
        "pct_limit_arrivals": 100.0 * n_limit / total if total else None,
        "pct_cancellations": 100.0 * n_cancel / total if total else None,
    }

    # time-weighted spread over spans where both quotes exist
    seg_lo = np.clip(m.time, t_lo, t_hi)
    seg_hi = np.clip(np.append(m.time[1:], t_hi), t_lo, t_hi)
    dur = np.maximum(seg_hi - seg_lo, 0).astype(np.float64)
    both = (rep.bid > 0) & (rep.ask > 0)
    denom = float(np.sum(dur * both))
    if denom > 0:
        spread = float(np.sum((rep.ask - rep.bid) * both * dur)) / denom
        out["mean_spread"] = spread / 1e4
    else:
        out["mean_spread"] = None
    try:
        out["mean_best_quote_volume"] = mean_best_volume(rep, t_lo, t_hi).mean_best_volume
    except ValueError:
        out["mean_best_quote_volume"] = None

    ex = in_win & (m.mtype == MSG_EXEC_VISIBLE)
    traded = int(m.size[ex].sum())
    out["mean_trade_price"] = (
        float(np.dot(m.price[ex].astype(np.float64), m.size[ex].astype(np.float64))) / traded / 1e4
        if traded else None
    )
    out["mean_market_order_size"] = (
        float(np.mean([mo.total_shares for mo in mos_in])) if mos_in else None
    )
    maintaining = [mo.total_shares for mo in mos_in if mo.maintaining]
    out["mean_maintaining_market_order_size"] = (
        float(np.mean(maintaining)) if maintaining else None
    )
    return out


def partition_by_size(events, n_bins: int = 5):
    """Quantile bins by total executed shares, ties to the lower bin.

    Returns n_bins lists ordered small to large; heavy ties can leave
    upper bins empty (the degenerate case is preserved, not rebalanced).
    """
    evs = list(events)
    if len(evs) < n_bins:
        raise ValueError(f"need at least {n_bins} events, got {len(evs)}")
    sizes = np.sort(np.array([e.total_shares for e in evs], dtype=np.int64))
    n = len(sizes)
    thresholds = [int(sizes[int(np.ceil(k * n / n_bins)) - 1]) for k in range(1, n_bins)]
    bins = [[] for _ in range(n_bins)]
    for e in evs:
        b = int(np.searchsorted(thresholds, e.total_shares, side="left"))
        bins[b].append(e)
    if isinstance(events, EventSet):
        return [
            EventSet(tuple(b), events.T_s, events.maintaining_only, events.backward)
            for b in bins
        ]
    return bins
