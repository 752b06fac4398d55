"""Command line entry points.

    csi serve    --config conf.json --port 8765 [--scenario s.json --human-seats 1]
    csi replay   --log session.events.jsonl
    csi analyze  --control a.events.jsonl --treatment b.events.jsonl --out report.json
    csi simulate --scenario s.json --arm csi|control --seed 7 --out out.events.jsonl
    csi probe    --rooms 5 --origin 0 --seed 7
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

from .core import SessionConfig, SessionState
from .errors import CsiError
from .events import EventLog
from .metrics import Lexicon, analyze_logs
from .server import replay
from .simharness import load_scenario, probe_propagation, run_experiment


def _load_config(path: str) -> SessionConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return SessionConfig.from_dict(json.load(fh))


def _cmd_serve(args) -> int:
    from .netserver import LiveSessionServer  # import here: pulls in websockets

    bots = []
    config = None
    if args.scenario:
        config, bots = load_scenario(args.scenario)
    if args.config:
        config = _load_config(args.config)
    if config is None:
        print("serve needs --config or --scenario", file=sys.stderr)
        return 2
    if not bots and args.human_seats < 1:
        print("serve needs scripted bots or at least one human seat", file=sys.stderr)
        return 2
    server = LiveSessionServer(
        config,
        bots=bots,
        arm=args.arm,
        human_seats=args.human_seats,
        session_id=args.session_id,
        time_scale=args.time_scale,
        out_dir=args.out_dir,
    )
    log_path = asyncio.run(server.run(host=args.host, port=args.port))
    print(f"session closed; event log written to {log_path}")
    return 0


def _cmd_replay(args) -> int:
    session = replay(str(args.log))
    summary = {
        "session_id": session.id,
        "state": session.state.value,
        "question": session.config.question_text,
        "participants": len(session.participants),
        "rooms": [
            {"id": room.id, "members": len(room.member_ids), "messages": len(room.log)}
            for room in session.rooms
        ],
        "final_answers": {str(k): v for k, v in sorted(session.final_answers.items())},
        "aggregate_answer": session.aggregate_answer,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if session.state is SessionState.CLOSED else 1


def _cmd_analyze(args) -> int:
    lexicon = Lexicon.from_file(args.lexicon) if args.lexicon else None
    control = EventLog.load(args.control)
    treatment = EventLog.load(args.treatment)
    report = analyze_logs(
        control, treatment, resamples=args.resamples, seed=args.seed, lexicon=lexicon
    )
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"report written to {args.out}")
    else:
        print(text)
    comparison = report["comparison"]
    print(
        f"mean change: {comparison['mean_pct_change']:+.1f}%  "
        f"variance change: {comparison['variance_pct_change']:+.1f}%  "
        f"p={comparison['p_value']:.4f} ({comparison['test']})",
        file=sys.stderr,
    )
    return 0


def _cmd_simulate(args) -> int:
    config, bots = load_scenario(args.scenario)
    log = run_experiment(config, bots, arm=args.arm, seed=args.seed)
    log.dump(args.out)
    session = replay(log)
    print(
        f"{args.arm} arm: {len(session.rooms)} room(s), "
        f"{sum(len(r.log) for r in session.rooms)} messages, "
        f"aggregate answer {session.aggregate_answer!r}; log -> {args.out}"
    )
    return 0


def _cmd_probe(args) -> int:
    config = SessionConfig(
        question_text="propagation probe",
        group_size_target=args.group_size,
        relay_interval_ms=args.interval_ms,
        time_limit_ms=max(args.interval_ms, (args.rooms + 1) * args.interval_ms),
    )
    probe = probe_propagation(
        config, token=args.token, origin_room=args.origin, seed=args.seed, k=args.rooms
    )
    print(
        json.dumps(
            {
                "token": probe.token,
                "origin_room": probe.origin_room,
                "arrival_ticks": {str(r): t for r, t in sorted(probe.arrival_ticks.items())},
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csi",
        description="Conversational swarm chat: serve, simulate, replay, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="host one live session over WebSocket")
    serve.add_argument("--config", help="JSON file mirroring the session config fields")
    serve.add_argument("--port", type=int, required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--scenario", help="scenario JSON providing scripted bots")
    serve.add_argument("--arm", choices=("csi", "control"), default="csi")
    serve.add_argument("--human-seats", type=int, default=0, dest="human_seats",
                       help="number of human joins to wait for before starting")
    serve.add_argument("--session-id", dest="session_id")
    serve.add_argument("--time-scale", type=float, default=1.0, dest="time_scale",
                       help="wall-clock compression factor (demos/tests)")
    serve.add_argument("--out-dir", default=".", dest="out_dir")
    serve.set_defaults(func=_cmd_serve)

    replay_p = sub.add_parser("replay", help="rebuild a session from its event log")
    replay_p.add_argument("--log", required=True)
    replay_p.set_defaults(func=_cmd_replay)

    analyze = sub.add_parser("analyze", help="compare two arms' event logs")
    analyze.add_argument("--control", required=True)
    analyze.add_argument("--treatment", required=True)
    analyze.add_argument("--resamples", type=int, default=10_000)
    analyze.add_argument("--seed", type=int, default=42)
    analyze.add_argument("--out")
    analyze.add_argument("--lexicon", help="replacement classifier lexicon JSON")
    analyze.set_defaults(func=_cmd_analyze)

    simulate = sub.add_parser("simulate", help="run a scripted scenario to a log file")
    simulate.add_argument("--scenario", required=True)
    simulate.add_argument("--arm", choices=("csi", "control"), default="csi")
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--out", required=True)
    simulate.set_defaults(func=_cmd_simulate)

    probe = sub.add_parser("probe", help="measure token propagation around the ring")
    probe.add_argument("--rooms", type=int, required=True)
    probe.add_argument("--origin", type=int, required=True)
    probe.add_argument("--seed", type=int, default=0)
    probe.add_argument("--token", default="PROBETOKEN")
    probe.add_argument("--group-size", type=int, default=5, dest="group_size")
    probe.add_argument("--interval-ms", type=int, default=60_000, dest="interval_ms")
    probe.set_defaults(func=_cmd_probe)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CsiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
