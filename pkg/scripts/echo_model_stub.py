#!/usr/bin/env python3
"""
Stand-in for an external wave model binary.

Copies a prepared station CSV to the requested output path so the external
adapter can be exercised without a real model. Failure modes are selectable
for testing: nonzero exit with a stderr message, a header-only output, or
no output at all.

Example command template:
    python scripts/echo_model_stub.py --wind {wind_path} --out {out_path} --source obs.csv --drg {drg}
"""
import argparse
import shutil
import sys
import time
from pathlib import Path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="echo model stub")
    parser.add_argument("--wind", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--source", help="station CSV copied to --out")
    parser.add_argument("--drg", type=float)
    parser.add_argument("--cfw", type=float)
    parser.add_argument("--stpm", type=float)
    parser.add_argument("--exit-code", type=int, default=0, help="exit with this status after writing stderr")
    parser.add_argument("--header-only", action="store_true")
    parser.add_argument("--no-output", action="store_true")
    parser.add_argument("--sleep", type=float, default=0.0)
    args = parser.parse_args(argv)

    if not Path(args.wind).exists():
        print(f"stub: wind file missing: {args.wind}", file=sys.stderr)
        return 4
    if args.sleep:
        time.sleep(args.sleep)
    if args.exit_code:
        print(f"stub: simulated failure (drg={args.drg})", file=sys.stderr)
        return args.exit_code
    if args.no_output:
        return 0
    if args.header_only:
        Path(args.out).write_text("time,station,hs_m\n")
        return 0
    if not args.source:
        print("stub: --source is required unless a failure mode is selected", file=sys.stderr)
        return 2
    shutil.copyfile(args.source, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
