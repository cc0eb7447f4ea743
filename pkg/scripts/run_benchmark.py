"""Run the stock benchmark scenarios and print their reports.

Usage: python3 scripts/run_benchmark.py [--trials N] [--seed N] [--out DIR]

Runs scenarios/deterministic.yaml (closed-form sanity check) followed by
scenarios/benchmark.yaml (lognormal latency models at the configured
quantiles), writing per-trial JSONL traces next to the reports.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from beacsim.bench import ScenarioConfig, run_scenario, savings_from_trace

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=Path, default=ROOT / "results")
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    for name in ("deterministic", "benchmark"):
        config = ScenarioConfig.from_yaml(
            ROOT / "scenarios" / f"{name}.yaml", seed_override=args.seed
        )
        if args.trials is not None and name == "benchmark":
            config = replace(config, trials=args.trials)
        trace = args.out / f"{name}.jsonl"
        report = run_scenario(config, trace_path=trace)
        text = report.render()
        (args.out / f"{name}.report.txt").write_text(text)
        print(f"== {name} (seed={config.seed}, trials={config.trials}) ==")
        print(text)
        recomputed = savings_from_trace(trace)
        for (fast, slow), per_pct in recomputed.items():
            pcts = " ".join(f"p{p}={v * 100:.1f}%" for p, v in per_pct.items())
            print(f"trace check: {fast} vs {slow}: {pcts}")
        print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
