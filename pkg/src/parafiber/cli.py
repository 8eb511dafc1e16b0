"""Command-line entry points.

    parafiber run            headless session, CSV logs and metrics
    parafiber serve          live session with the WebSocket cockpit endpoint
    parafiber compare-engines  float vs fixed vs reference on scripted input
    parafiber dump-network   write the built network in the v1 text format
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .cerebellum import dump_network
from .harness import ClosedLoop, SessionConfig, compare_engine_modes, run_session


def _load_config(args: argparse.Namespace) -> SessionConfig:
    cfg = SessionConfig.from_json_file(args.config) if args.config else SessionConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.duration is not None:
        cfg = dataclasses.replace(cfg, duration_s=args.duration)
    if getattr(args, "mode", None):
        cfg = dataclasses.replace(cfg, engine=dataclasses.replace(cfg.engine, mode=args.mode))
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="session config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--duration", type=float, default=None, help="seconds of simulated time")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="parafiber")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a headless closed-loop session")
    _add_common(p_run)
    p_run.add_argument("--mode", choices=["float64", "fixed"], default=None)
    p_run.add_argument("--out", type=Path, default=Path("out"), help="log directory")

    p_serve = sub.add_parser("serve", help="serve a live session over WebSocket")
    _add_common(p_serve)
    p_serve.add_argument("--mode", choices=["float64", "fixed"], default=None)
    p_serve.add_argument("--port", type=int, default=8750)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--speed", type=float, default=1.0, help="wall-clock multiple; 0 = unpaced")

    p_cmp = sub.add_parser("compare-engines", help="cross-validate numeric modes on scripted input")
    _add_common(p_cmp)
    p_cmp.add_argument("--out", type=Path, default=None, help="write the report JSON here")
    p_cmp.add_argument("--no-oracle", action="store_true", help="skip the event-driven reference")
    p_cmp.add_argument("--oracle-tick", type=float, default=0.1, help="tick (ms) for the reference comparison")

    p_dump = sub.add_parser("dump-network", help="serialize the built network")
    _add_common(p_dump)
    p_dump.add_argument("--out", type=Path, default=Path("network.txt"))

    args = parser.parse_args(argv)

    if args.command == "run":
        cfg = _load_config(args)
        result = run_session(cfg, out_dir=args.out)
        m = result.metrics
        print(f"telemetry: {result.telemetry_path}")
        print(f"spikes:    {result.spikes_path}")
        print(f"overall RMSE: {m.overall_rmse:.3f} deg")
        for i, r in enumerate(m.rmse_per_window):
            print(f"  window {i} ({m.window_s:.0f} s): RMSE {r:.3f} deg")
        if m.improvement_ratio is not None:
            print(f"first/last window ratio: {m.improvement_ratio:.2f}")
        return 0

    if args.command == "serve":
        from .server import serve_session

        cfg = _load_config(args)
        print(f"serving on ws://{args.host}:{args.port}/ws (speed x{args.speed})")
        serve_session(cfg, port=args.port, speed=args.speed, host=args.host)
        return 0

    if args.command == "compare-engines":
        cfg = _load_config(args)
        duration = args.duration if args.duration is not None else 60.0
        # mode agreement at the native tick; the continuous reference is
        # compared at a refined tick where discretization bias is negligible
        report = compare_engine_modes(cfg, duration_s=duration, against_oracle=False)
        worst = report["fixed_vs_float_worst_rel"]
        print(f"fixed vs float ({report['tick_ms']} ms tick): {100 * worst:.3f} % worst deviation")
        if not args.no_oracle:
            fine = compare_engine_modes(
                cfg, duration_s=duration, modes=("fixed",), tick_ms=args.oracle_tick
            )
            report["oracle_comparison"] = fine
            worst = max(worst, fine["fixed_vs_oracle_worst_rel"])
            print(
                f"fixed vs reference ({fine['tick_ms']} ms tick): "
                f"{100 * fine['fixed_vs_oracle_worst_rel']:.3f} % worst deviation"
            )
        if args.out:
            args.out.write_text(json.dumps(report, indent=2, default=str))
            print(f"report written to {args.out}")
        return 0 if worst <= 0.02 else 1

    if args.command == "dump-network":
        cfg = _load_config(args)
        loop = ClosedLoop(cfg)
        args.out.write_text(dump_network(loop.system.network))
        print(f"network written to {args.out}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
