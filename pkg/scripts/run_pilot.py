#!/usr/bin/env python3
"""Run the full bundled pilot shape and analyze the two arms.

Ten questions, 25 bots each: q01-q05 run as conversational swarms (5 rooms
of 5 linked by relay agents), q06-q10 as standard chat (one room, no
agents).  Per-user contribution counts aggregate across each arm's five
questions, then the two arms are compared.

Usage: python scripts/run_pilot.py [--out-dir runs] [--resamples 10000] [--seed 42]
"""

import argparse
import json
from pathlib import Path

from csi.metrics import (
    ContributionStats,
    arm_summary,
    compare,
)
from csi.simharness import load_scenario, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def run_arm(paths, arm, seed, out_dir):
    """Run one arm's scenarios; returns per-user counts aggregated over them."""
    totals: dict[str, float] = {}
    raw_totals: dict[str, int] = {}
    per_question = []
    for path in paths:
        config, bots = load_scenario(path)
        log = run_experiment(config, bots, arm=arm, seed=seed, session_id=f"{path.stem}-{arm}")
        out = out_dir / f"{path.stem}.{arm}.events.jsonl"
        log.dump(out)
        stats, table = arm_summary(log)
        per_question.append({"scenario": path.name, "mean": stats.mean, "table": table})
        for user, count in stats.counts.items():
            totals[user] = totals.get(user, 0) + count
        for user, count in (stats.raw_message_counts or {}).items():
            raw_totals[user] = raw_totals.get(user, 0) + count
    return ContributionStats.from_counts(totals, raw_totals), per_question


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs")
    parser.add_argument("--resamples", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(exist_ok=True)
    scenarios = sorted((ROOT / "scenarios").glob("q*.json"))
    swarm_paths, chat_paths = scenarios[:5], scenarios[5:]

    treatment, treatment_detail = run_arm(swarm_paths, "csi", args.seed, out_dir)
    control, control_detail = run_arm(chat_paths, "control", args.seed, out_dir)
    report = compare(control, treatment, resamples=args.resamples, seed=args.seed)

    summary = {
        "comparison": report.to_dict(),
        "swarm_questions": treatment_detail,
        "chat_questions": control_detail,
    }
    (out_dir / "pilot_report.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"swarm arm mean contributions/user: {treatment.mean:.2f} "
          f"(variance {treatment.variance:.1f})")
    print(f"chat arm mean contributions/user:  {control.mean:.2f} "
          f"(variance {control.variance:.1f})")
    print(f"mean change {report.mean_pct_change:+.1f}%, "
          f"variance change {report.variance_pct_change:+.1f}%, "
          f"p={report.p_value:.4f} [{report.test}]")
    print(f"full report: {out_dir / 'pilot_report.json'}")


if __name__ == "__main__":
    main()
