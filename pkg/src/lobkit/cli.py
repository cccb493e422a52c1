"""Batch command-line entry point.

Subcommands: simulate, validate, scan, study, ecdf. Every run writes a
config echo (key = value) into the output directory; feeding that file
back through --config reproduces the run byte for byte. Flags override
config-file values. Exit codes: 0 success, 1 analytical failure
(mismatches, empty event sets), 2 usage or I/O problems.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import flow
from .book import BACKEND
from .lobster import (
    DaySession,
    FormatError,
    MessageTable,
    read_messages,
    read_snapshots,
    replay,
    validate_snapshots,
)
from .records import BookError
from .stats import ecdf as make_ecdf
from .stats import min_shifted_ecdf
from .zi import ZiConfig, simulate_day

_NS = 1_000_000_000

# per-command option schema: name -> (type, default)
_BOOL = "bool"
_SCHEMAS = {
    "simulate": {
        "out_dir": (str, None),
        "seed": (int, None),          # overrides the sim config seed
        "write_snapshots": (_BOOL, True),
        "sim_config": (str, None),    # ZiConfig key=value file
    },
    "validate": {
        "messages": (str, None),      # comma-separated list allowed
        "snapshots": (str, None),
        "levels": (int, 0),           # 0 = infer from file width
        "out_dir": (str, None),
    },
    "scan": {
        "messages": (str, None),
        "session": (_BOOL, False),
        "out_dir": (str, None),
    },
    "study": {
        "messages": (str, None),
        "T": (float, 0.0),
        "tau_min": (float, 1e-7),
        "tau_max": (float, 10.0),
        "mode": (str, flow.STRICT),
        "maintaining_only": (_BOOL, None),  # defaults to (mode == strict)
        "bins": (int, 0),
        "bootstrap_B": (int, 10000),
        "seed": (int, 0),
        "normalize": (_BOOL, False),
        "session": (_BOOL, False),
        "out_dir": (str, None),
    },
    "ecdf": {
        "messages": (str, None),
        "shifted": (_BOOL, False),
        "session": (_BOOL, False),
        "out_dir": (str, None),
    },
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _read_kv(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", 2) from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key = value", 2)
        out[key.strip()] = value.strip()
    return out


def _effective_config(command: str, args: argparse.Namespace) -> dict:
    schema = _SCHEMAS[command]
    conf = {k: default for k, (_, default) in schema.items()}
    config_path = getattr(args, "config", None)
    if config_path:
        raw = _read_kv(config_path)
        raw.pop("command", None)
        unknown = sorted(set(raw) - set(schema))
        if unknown:
            raise CliError(f"unknown config keys for {command}: {', '.join(unknown)}", 2)
        for key, text in raw.items():
            typ = schema[key][0]
            try:
                if text == "None":
                    conf[key] = None
                elif typ is _BOOL:
                    conf[key] = _parse_bool(text)
                else:
                    conf[key] = typ(text)
            except ValueError as exc:
                raise CliError(f"config key {key}: {exc}", 2) from None
    for key in schema:
        v = getattr(args, key, None)
        if v is not None:
            conf[key] = v
    return conf


def _echo_config(command: str, conf: dict, out_dir) -> None:
    if out_dir is None:
        return
    lines = [f"command = {command}"]
    for key in sorted(conf):
        lines.append(f"{key} = {conf[key]}")
    (Path(out_dir) / "config_echo.txt").write_text("\n".join(lines) + "\n")


def _ensure_out_dir(conf: dict):
    out = conf.get("out_dir")
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
    return out


def _load_messages(path) -> MessageTable:
    if path is None:
        raise CliError("--messages is required", 2)
    if not Path(path).exists():
        raise CliError(f"no such file: {path}", 2)
    return read_messages(path)


def _session_of(conf) -> DaySession | None:
    return DaySession() if conf.get("session") else None


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_simulate(conf: dict) -> int:
    out_dir = _ensure_out_dir(conf)
    if out_dir is None:
        raise CliError("simulate requires --out-dir", 2)
    if conf.get("sim_config"):
        try:
            zi_conf = ZiConfig.from_text(Path(conf["sim_config"]).read_text())
        except OSError as exc:
            raise CliError(f"cannot read sim config: {exc}", 2) from None
        except (ValueError, TypeError) as exc:
            raise CliError(str(exc), 2) from None
    else:
        zi_conf = ZiConfig()
    if conf.get("seed") is not None:
        import dataclasses

        zi_conf = dataclasses.replace(zi_conf, seed=conf["seed"])
        conf["seed"] = zi_conf.seed
    out = simulate_day(zi_conf)
    out.table.write(Path(out_dir) / "messages.csv")
    if conf["write_snapshots"]:
        from .lobster import write_snapshots

        write_snapshots(out.snapshots, Path(out_dir) / "snapshots.csv")
    mo_lines = ["time,direction,total_shares,maintaining,n_fills"]
    for mo in out.market_orders:
        mo_lines.append(
            f"{mo.time // _NS}.{mo.time % _NS:09d},{mo.direction},{mo.total_shares},"
            f"{int(mo.maintaining)},{mo.n_fills}"
        )
    (Path(out_dir) / "market_orders.csv").write_text("\n".join(mo_lines) + "\n")
    (Path(out_dir) / "reseeds.csv").write_text(
        "".join(f"{t // _NS}.{t % _NS:09d}\n" for t in out.reseed_times)
    )
    (Path(out_dir) / "sim_config_echo.txt").write_text(zi_conf.to_text())
    _echo_config("simulate", conf, out_dir)
    print(
        f"simulated {len(out.table)} messages, {len(out.market_orders)} market orders, "
        f"{len(out.reseed_indices)} reseeds -> {out_dir}"
    )
    return 0


def _validate_one(messages_path: str, snapshots_path: str):
    table = _load_messages(messages_path)
    if not Path(snapshots_path).exists():
        raise CliError(f"no such file: {snapshots_path}", 2)
    snaps = read_snapshots(snapshots_path)
    return validate_snapshots(table, snaps)


def cmd_validate(conf: dict) -> int:
    out_dir = _ensure_out_dir(conf)
    if not conf.get("messages") or not conf.get("snapshots"):
        raise CliError("validate requires --messages and --snapshots", 2)
    msg_paths = conf["messages"].split(",")
    snap_paths = conf["snapshots"].split(",")
    if len(msg_paths) != len(snap_paths):
        raise CliError("need one snapshot file per message file", 2)
    if conf["levels"]:
        k = conf["levels"]
        for p in snap_paths:
            if Path(p).exists():
                width = len(Path(p).open().readline().split(","))
                if width != 4 * k:
                    raise CliError(f"{p}: expected {4 * k} columns for {k} levels, got {width}", 2)
    threads = int(os.environ.get("LOBKIT_THREADS", "1") or 1)
    if threads > 1 and len(msg_paths) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(_validate_one, msg_paths, snap_paths))
    else:
        reports = [_validate_one(m, s) for m, s in zip(msg_paths, snap_paths)]
    bad = 0
    lines = []
    for path, report in zip(msg_paths, reports):
        lines.append(f"{path}: {report.summary()}")
        bad += report.n_mismatches
    text = "\n".join(lines)
    print(text)
    if out_dir:
        (Path(out_dir) / "validate_report.txt").write_text(text + "\n")
        _echo_config("validate", conf, out_dir)
    return 0 if bad == 0 else 1


def cmd_scan(conf: dict) -> int:
    out_dir = _ensure_out_dir(conf)
    table = _load_messages(conf.get("messages"))
    session = _session_of(conf)
    rep = replay(table)
    mos = flow.detect_market_orders(rep)
    summary = flow.summarize(rep, mos, session=session)
    if summary["n_messages"] == 0:
        print("no messages in the session window", file=sys.stderr)
        return 1
    width = max(len(k) for k in summary)
    for key, value in summary.items():
        shown = "" if value is None else (f"{value:.6g}" if isinstance(value, float) else value)
        print(f"{key:<{width}}  {shown}")
    if out_dir:
        _write_json(Path(out_dir) / "scan.json", summary)
        _echo_config("scan", conf, out_dir)
    return 0


def cmd_study(conf: dict) -> int:
    out_dir = _ensure_out_dir(conf)
    if out_dir is None:
        raise CliError("study requires --out-dir", 2)
    table = _load_messages(conf.get("messages"))
    session = _session_of(conf)
    if conf["mode"] not in (flow.STRICT, flow.RELAXED):
        raise CliError(f"mode must be strict or relaxed, got {conf['mode']}", 2)
    rep = replay(table)
    mos = flow.detect_market_orders(rep)
    if session is not None:
        mos = [mo for mo in mos if session.start_ns <= mo.time < session.end_ns]
    grid = flow.log_grid(conf["tau_min"], conf["tau_max"])
    maintaining = conf["maintaining_only"]
    if maintaining is None:
        maintaining = conf["mode"] == flow.STRICT
    conf["maintaining_only"] = maintaining  # echo the resolved value
    fwd = flow.select_event_set(mos, conf["T"], maintaining_only=maintaining)
    bwd = flow.select_event_set(mos, conf["T"], maintaining_only=maintaining, backward=True)
    if len(fwd) == 0 and len(bwd) == 0:
        print(f"no qualifying market orders (T={conf['T']}s)", file=sys.stderr)
        return 1
    basis = flow.mean_best_volume(rep, *(
        (session.start_ns, session.end_ns) if session else (None, None)
    )) if conf["normalize"] else None

    meta = {
        "messages": conf["messages"],
        "backend": BACKEND,
        "T": conf["T"],
        "mode": conf["mode"],
        "maintaining_only": maintaining,
        "bootstrap_B": conf["bootstrap_B"],
        "seed": conf["seed"],
        "n_market_orders": len(mos),
        "n_forward_events": len(fwd),
        "n_backward_events": len(bwd),
        "normalization_basis": basis.mean_best_volume if basis else None,
    }
    for side in (flow.SAME, flow.OPPOSITE):
        for direction, events in ((flow.AFTER, fwd), (flow.BEFORE, bwd)):
            if len(events) == 0:
                continue
            curve = flow.study_curve(
                rep, events, side=side, direction=direction, mode=conf["mode"],
                grid_s=grid, session=session,
                bootstrap_b=conf["bootstrap_B"], seed=conf["seed"],
            )
            if basis is not None:
                curve = flow.normalize(curve, basis)
            curve.write_csv(Path(out_dir) / f"curve_{side}_{direction}.csv")
    if conf["bins"] > 1:
        try:
            parts = flow.partition_by_size(fwd, conf["bins"])
        except ValueError as exc:
            print(f"size partition skipped: {exc}", file=sys.stderr)
            parts = []
        meta["bin_counts"] = [len(p) for p in parts]
        for b, part in enumerate(parts):
            if len(part) == 0:
                continue
            for side in (flow.SAME, flow.OPPOSITE):
                curve = flow.study_curve(
                    rep, part, side=side, direction=flow.AFTER, mode=conf["mode"],
                    grid_s=grid, session=session,
                    bootstrap_b=conf["bootstrap_B"], seed=conf["seed"],
                )
                if basis is not None:
                    curve = flow.normalize(curve, basis)
                curve.write_csv(Path(out_dir) / f"curve_{side}_after_bin{b}.csv")
    _write_json(Path(out_dir) / "study_meta.json", meta)
    _echo_config("study", conf, out_dir)
    print(f"study complete: {len(fwd)} forward / {len(bwd)} backward events -> {out_dir}")
    return 0


def cmd_ecdf(conf: dict) -> int:
    out_dir = _ensure_out_dir(conf)
    if out_dir is None:
        raise CliError("ecdf requires --out-dir", 2)
    table = _load_messages(conf.get("messages"))
    session = _session_of(conf)
    rep = replay(table)
    mos = flow.detect_market_orders(rep)
    if session is not None:
        mos = [mo for mo in mos if session.start_ns <= mo.time < session.end_ns]
    if len(mos) < 2:
        print("need at least 2 market orders for inter-arrival times", file=sys.stderr)
        return 1
    times = np.array([mo.time for mo in mos], dtype=np.int64)
    gaps_s = np.diff(times) / 1e9
    dist = min_shifted_ecdf(gaps_s) if conf["shifted"] else make_ecdf(gaps_s)
    (Path(out_dir) / "ecdf.csv").write_bytes(dist.csv_bytes())
    (Path(out_dir) / "ecdf_tail.csv").write_bytes(dist.csv_bytes(upper_tail=True))
    _echo_config("ecdf", conf, out_dir)
    print(f"{len(gaps_s)} inter-arrival times -> {out_dir}")
    return 0


_HANDLERS = {
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "scan": cmd_scan,
    "study": cmd_study,
    "ecdf": cmd_ecdf,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(cmd, help_text):
        p = sub.add_parser(cmd, help=help_text)
        p.add_argument("--config", help="key = value file; flags override it")
        schema = _SCHEMAS[cmd]
        for key, (typ, _default) in schema.items():
            flag = "--" + key.replace("_", "-")
            if typ is _BOOL:
                group = p.add_mutually_exclusive_group()
                group.add_argument(flag, dest=key, action="store_true", default=None)
                group.add_argument(
                    "--no-" + key.replace("_", "-"), dest=key, action="store_false", default=None
                )
            else:
                p.add_argument(flag, dest=key, type=typ, default=None)
        return p

    add("simulate", "generate a synthetic message/snapshot day")
    add("validate", "check reconstructed top-k levels against snapshots")
    add("scan", "event mix and liquidity summary of a message file")
    add("study", "net order flow curves around market orders")
    add("ecdf", "market-order inter-arrival time distribution")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        conf = _effective_config(args.command, args)
        return _HANDLERS[args.command](conf)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FormatError, BookError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
