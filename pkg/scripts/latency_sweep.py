#!/usr/bin/env python3
"""Sweep the loopback latency probe across send rates and print a table.

The 14 ms budget comes from the wireless deployment this stack targets;
loopback should come in two to three orders of magnitude below it. Useful
for spotting scheduler regressions after touching the transport hot path.
"""

import argparse
import json
import sys

from teleop.transport import EchoServer, latency_probe

from _util import free_udp_endpoint


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rates", type=float, nargs="+", default=[50, 100, 200, 500])
    ap.add_argument("--duration", type=float, default=3.0, help="seconds per rate")
    ap.add_argument("--json", dest="json_out", default=None, help="write results here")
    args = ap.parse_args()

    rows = []
    print(f"{'rate_hz':>8} {'mean_ms':>9} {'median_ms':>10} {'p99_ms':>9} {'loss':>7}")
    for rate in args.rates:
        endpoint = free_udp_endpoint()
        with EchoServer(endpoint):
            report = latency_probe(endpoint, duration_s=args.duration, rate_hz=rate)
        doc = report.as_dict()
        doc["rate_hz"] = rate
        rows.append(doc)
        print(
            f"{rate:8g} {doc['mean_ms']:9.4f} {doc['median_ms']:10.4f} "
            f"{doc['p99_ms']:9.4f} {report.loss_fraction:7.2%}"
        )

    budget = max(r["mean_ms"] for r in rows)
    print(f"\nworst mean one-way: {budget:.4f} ms (budget 14 ms)")
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as f:
            json.dump(rows, f, indent=2)
        print(f"wrote {args.json_out}")
    return 0 if budget <= 14.0 else 1


if __name__ == "__main__":
    sys.exit(main())
