#!/usr/bin/env python3
"""Regenerate the bundled scenario files.

Ten questions, 25 bots each, pilot timing (60 s relay interval, 300 s limit).
The bundled runner (scripts/run_pilot.py) plays q01-q05 in the swarm arm and
q06-q10 in the standard-chat arm.  Generation is fully seeded: rerunning this
script reproduces the checked-in files byte for byte.
"""

from pathlib import Path

from csi.simharness import make_pilot_scenario, save_scenario

QUESTIONS = [
    "Question 1 (placeholder deliberation prompt)",
    "Question 2 (placeholder deliberation prompt)",
    "Question 3 (placeholder deliberation prompt)",
    "Question 4 (placeholder deliberation prompt)",
    "Question 5 (placeholder deliberation prompt)",
    "Question 6 (placeholder deliberation prompt)",
    "Question 7 (placeholder deliberation prompt)",
    "Question 8 (placeholder deliberation prompt)",
    "Question 9 (placeholder deliberation prompt)",
    "Question 10 (placeholder deliberation prompt)",
]


def main() -> None:
    out_dir = Path(__file__).resolve().parent.parent / "scenarios"
    out_dir.mkdir(exist_ok=True)
    for index, question in enumerate(QUESTIONS, start=1):
        config, bots = make_pilot_scenario(question, n_bots=25, seed=1000 + index)
        path = out_dir / f"q{index:02d}.json"
        save_scenario(path, config, bots)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
