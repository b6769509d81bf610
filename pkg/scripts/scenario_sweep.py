#!/usr/bin/env python3
"""Run every shipped scenario and diff its event log against the golden copy.

This is the same check the release gate runs, in a human-friendly wrapper:
prints each scenario's events, timing, and whether the log still matches the
frozen golden byte for byte. Pass --update-goldens to refreeze them after an
intentional behavior change (review the diff first).
"""

import argparse
import sys
import time

from teleop.follower_sim import run_scenario

from _util import SCENARIO_DIR


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--update-goldens", action="store_true")
    ap.add_argument("names", nargs="*", default=None)
    args = ap.parse_args()

    names = args.names or sorted(
        p.stem for p in SCENARIO_DIR.glob("*.yaml")
    )
    golden_dir = SCENARIO_DIR / "golden"
    failures = 0
    for name in names:
        t0 = time.perf_counter()
        report = run_scenario(SCENARIO_DIR / f"{name}.yaml")
        elapsed = time.perf_counter() - t0
        rendered = "".join(line + "\n" for line in report.event_lines()).encode()
        print(f"== {name} ({elapsed:.2f} s, {len(report.events)} events)")
        for line in report.event_lines():
            print(f"   {line}")
        for failure in report.failures:
            print(f"   assertion failed: {failure}")
            failures += 1
        golden = golden_dir / f"{name}.events.log"
        if args.update_goldens:
            golden_dir.mkdir(exist_ok=True)
            golden.write_bytes(rendered)
            print(f"   golden refrozen: {golden}")
        elif not golden.exists():
            print(f"   no golden at {golden} (run with --update-goldens)")
            failures += 1
        elif golden.read_bytes() != rendered:
            print("   EVENT LOG DIVERGES FROM GOLDEN")
            failures += 1
        else:
            print("   matches golden")
    print(f"\n{len(names)} scenarios, {failures} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
