#!/usr/bin/env python3
"""Convert an Azure Functions style invocation trace to the demand CSV format.

Input: a CSV with one row per function and one column per minute holding
invocation counts (the public Functions datasets look like
owner,app,func,1,2,...,1440). All function rows are summed per minute.

Output: a start_s,qps trace compatible with cascadesim.workload.load_trace.
With --normalize the qps column is rescaled to fractions of the busiest
minute, which is what scenarios with capacity_frac expect.
"""

import argparse
import csv
import sys


def convert(in_path: str, out_path: str, bucket_s: float, normalize: bool) -> None:
    per_minute: list[float] = []
    with open(in_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        first_minute = next(i for i, name in enumerate(header) if name.strip().isdigit())
        for row in reader:
            counts = [float(x or 0.0) for x in row[first_minute:]]
            if len(counts) > len(per_minute):
                per_minute.extend([0.0] * (len(counts) - len(per_minute)))
            for i, c in enumerate(counts):
                per_minute[i] += c
    if not per_minute:
        sys.exit("no invocation columns found")

    qps = [c / 60.0 for c in per_minute]
    if normalize:
        peak = max(qps)
        if peak <= 0:
            sys.exit("trace is empty, nothing to normalize")
        qps = [q / peak for q in qps]

    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_s", "qps"])
        for i, q in enumerate(qps):
            writer.writerow([repr(i * bucket_s), repr(round(q, 6))])
        writer.writerow(["duration_s", repr(len(qps) * bucket_s)])
    print(f"wrote {out_path}: {len(qps)} buckets of {bucket_s}s")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("input", help="per-function, per-minute invocation CSV")
    ap.add_argument("output", help="destination trace CSV")
    ap.add_argument("--bucket-s", type=float, default=60.0,
                    help="seconds represented by each input minute (default 60)")
    ap.add_argument("--normalize", action="store_true",
                    help="rescale qps to fractions of the peak minute")
    args = ap.parse_args()
    convert(args.input, args.output, args.bucket_s, args.normalize)


if __name__ == "__main__":
    main()
