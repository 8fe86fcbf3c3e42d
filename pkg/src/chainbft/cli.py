"""Command-line entry points.

Exit codes: 0 success, 2 invalid configuration, 3 liveness stall.
"""
from __future__ import annotations

import argparse
import asyncio
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

from .benchmark.config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_STALL = 0, 2, 3

# flag -> BenchConfig field; every flag defaults to None so only explicit flags override the file
_OVERRIDES = {
    "protocol": str, "n": int, "views": int, "seed": int, "strategy": str, "byzno": int, "timeout": float,
    "rate": float, "runtime": float, "bsize": int, "memsize": int, "psize": int, "delay": float,
    "concurrency": int, "master": int, "leader_policy": str, "view_change_wait": float, "scheme": str,
    "net_mean": float, "net_std": float, "bandwidth": float, "t_cpu": float, "loss_rate": float,
    "stall_views": int,
}
_FIELD = {"byzno": "byz_no"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config using the standard field names")
    for name, typ in _OVERRIDES.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("--responsive", dest="responsive", action="store_const", const=True, default=None)
    p.add_argument("--backoff", dest="backoff", action="store_const", const=True, default=None)


def _config(args):
    overrides = {_FIELD.get(k, k): getattr(args, k) for k in (*_OVERRIDES, "responsive", "backoff")}
    return load_config(args.config, **overrides)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


# ----------------------------------------------------------------------------- subcommands

def cmd_simulate(args) -> int:
    from .benchmark.runner import simulate

    cfg = _config(args)
    result = simulate(cfg)
    _emit(result.report.to_json(), args.out)
    if args.views_csv:
        Path(args.views_csv).write_text(result.trace.views_csv())
    if result.stalled:
        print(f"liveness stall: no commit for {result.trace.meta['longest_commit_gap_views']} views",
              file=sys.stderr)
        return EXIT_STALL
    return EXIT_OK


def cmd_responsiveness(args) -> int:
    from .benchmark.presets import run_responsiveness

    run = run_responsiveness(args.protocol or "hotstuff", args.setting, seed=args.seed or 1)
    out = {
        "protocol": run.protocol, "setting": run.setting, "fluctuation_ms": list(run.fluctuation),
        "crash_node": run.crash_node, "first_commit_after_ms": run.first_commit_after,
        "commits_within_2_view_times": run.commits_within(2), "qc_view_entries_after": run.qc_entries_after,
        "tc_view_entries_after": run.tc_entries_after, "seed": args.seed or 1,
        "config": run.sim.cfg.__dict__ if run.sim else {},
        "series": run.throughput_series(),
    }
    _emit(json.dumps(out, indent=2, sort_keys=True, default=str), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .benchmark.runner import simulate

    cfg = _config(args)
    rate = args.start_rate
    rows = []
    for _ in range(args.max_steps):
        point = cfg.model_copy(update={"rate": rate, "views": None})
        rep = simulate(point).report
        rows.append({"rate": rate, "arrival": rep.arrival_rate, "throughput": rep.throughput,
                     "latency_mean": rep.latency_mean, "latency_p50": rep.latency_p50,
                     "latency_p99": rep.latency_p99})
        if rep.throughput < (1 - args.saturation_gap) * rep.arrival_rate:
            break
        rate *= args.factor
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    buf.write(f"# config {json.dumps(cfg.effective(), sort_keys=True)}\n")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_node(args) -> int:
    from .runtime.http_api import serve_node

    cfg = _config(args)
    logging.basicConfig(level=logging.INFO)
    try:
        asyncio.run(serve_node(cfg, args.id, args.http_port, args.duration))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_client(args) -> int:
    from .benchmark.client import http_endpoints, run_client, send_admin

    cfg = _config(args)
    endpoints = http_endpoints(cfg)
    if args.admin:
        from .runtime.http_api import parse_admin

        try:
            _, target, _ = parse_admin(args.admin)
        except ValueError as exc:
            print(exc, file=sys.stderr)
            return EXIT_CONFIG
        if target not in endpoints:
            print(f"no replica {target} in the address map", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(asyncio.run(send_admin(endpoints[target], args.admin))))
        return EXIT_OK
    result = asyncio.run(run_client(cfg, endpoints))
    _emit(result.report.to_json(), args.out)
    return EXIT_OK


def _model_params(args):
    from .perf_model import ModelParams

    data = json.loads(Path(args.params).read_text()) if args.params else {}
    for key in ("N", "n", "lam", "mu", "sigma", "b", "m", "t_cpu", "protocol"):
        v = getattr(args, "p_" + key)
        if v is not None:
            data[key] = v
    if isinstance(data.get("b"), str):
        data["b"] = float(data["b"])
    try:
        return ModelParams(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _finite(x):
    return x if not (isinstance(x, float) and math.isinf(x)) else "inf"


def cmd_model(args) -> int:
    from . import perf_model as pm

    if args.action == "calibrate":
        return cmd_calibrate(args)
    p = _model_params(args)
    try:
        p.validate()
    except pm.ModelError as exc:
        print(f"params: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.action == "predict":
        try:
            pred = pm.predict_latency(p, args.samples, args.seed or 0)
        except pm.Saturated as exc:
            print(str(exc), file=sys.stderr)
            _emit(json.dumps({"saturated": True, "rho": exc.rho, "params": _params_dict(p)}), args.out)
            return EXIT_OK
        _emit(json.dumps({"params": _params_dict(p), **pred.as_dict()}, indent=2, sort_keys=True), args.out)
        return EXIT_OK
    rates = None
    if args.lambda_max is not None:
        rates = [args.lambda_max * (i + 1) / args.points for i in range(args.points)]
    rows = pm.predict_curve(p, rates, args.points, args.samples, args.seed or 0)
    buf = io.StringIO()
    fields = ["lam", "total", "rho", "t_L", "t_s", "t_commit", "w_Q", "saturated"]
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: _finite(row.get(k, "")) for k in fields})
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _params_dict(p) -> dict:
    return {k: _finite(v) for k, v in asdict(p).items()}


def cmd_calibrate(args) -> int:
    from . import perf_model as pm

    cfg = _config(args)
    cal = pm.calibrate_simulation(cfg.network_config(), cfg.bsize, cfg.psize, cfg.num_replicas, seed=cfg.seed)
    sign_ms = pm.measure_signing("secp256k1") if args.time_signing else None
    p = pm.ModelParams(N=cfg.num_replicas, n=cfg.bsize, lam=cfg.rate, mu=cal.mu, sigma=cal.sigma, b=cal.b,
                       m=cal.m, t_cpu=cal.t_cpu, protocol=cfg.protocol)
    out = {"params": _params_dict(p), "measured_sign_verify_ms": sign_ms, "config": cfg.effective()}
    _emit(json.dumps(out, indent=2, sort_keys=True), args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainbft", description="Chained-BFT replicas, simulator and model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="deterministic in-process run; prints a JSON report")
    _add_config_flags(p)
    p.add_argument("--out")
    p.add_argument("--views-csv", help="write the per-view trace as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("responsiveness", help="delay fluctuation followed by a crash")
    p.add_argument("--protocol", choices=["hotstuff", "2chs", "streamlet"])
    p.add_argument("--setting", choices=["t10", "t100"], default="t10")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_responsiveness)

    p = sub.add_parser("bench-sweep", help="raise the offered load until saturation; prints CSV")
    _add_config_flags(p)
    p.add_argument("--start-rate", type=float, default=1000.0)
    p.add_argument("--factor", type=float, default=1.5)
    p.add_argument("--max-steps", type=int, default=12)
    p.add_argument("--saturation-gap", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("node", help="run one replica over TCP with its HTTP API")
    _add_config_flags(p)
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--http-port", type=int)
    p.add_argument("--duration", type=float, help="stop after this many seconds")
    p.set_defaults(func=cmd_node)

    p = sub.add_parser("client", help="drive a workload against a running cluster")
    _add_config_flags(p)
    p.add_argument("--admin", help="send 'slow <node> <ms>' or 'crash <node>' instead")
    p.add_argument("--out")
    p.set_defaults(func=cmd_client)

    p = sub.add_parser("model", help="analytic latency model")
    _add_config_flags(p)
    p.add_argument("action", choices=["predict", "curve", "calibrate"])
    p.add_argument("--params", help="JSON file with N, n, lam, mu, sigma, b, m, t_cpu, protocol")
    for key, typ in (("N", int), ("n", int), ("lam", float), ("mu", float), ("sigma", float), ("b", float),
                     ("m", float), ("t_cpu", float)):
        p.add_argument(f"--p-{key}", dest=f"p_{key}", type=typ)
    p.add_argument("--p-protocol", dest="p_protocol")
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--time-signing", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("calibrate", help="measure model inputs from the simulated network")
    _add_config_flags(p)
    p.add_argument("--time-signing", action="store_true", help="also time secp256k1 sign+verify")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in str(exc).split("; "):
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
