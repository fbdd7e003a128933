"""Regenerate every report table in one go.

    python3 scripts/run_all.py --data FLIR_groupA.csv --out reports
    python3 scripts/run_all.py --quick          # synthetic data, 2 seeds, short CNN runs

Each step is a plain CLI invocation, so the outputs match what the individual
commands produce.
"""
import argparse
import sys
import tempfile
import time
from pathlib import Path

from thermoreg.cli import main as cli
from thermoreg.synthetic import write_synthetic_csv

STEPS = (
    ("ingest",),
    ("select",),
    ("table-iv",),
    ("table-v",),
    ("fig-2",),
    ("sbs-audit",),
    ("table-vi",),
)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", help="dataset CSV (default: $THERMOREG_DATA)")
    ap.add_argument("--out", default="reports")
    ap.add_argument("--seeds", default=None, help="e.g. 0-9")
    ap.add_argument("--skip-cnn", action="store_true", help="leave out the CNN grid (the slow part)")
    ap.add_argument("--quick", action="store_true", help="synthetic data, seeds 0-1, 5 CNN epochs")
    args = ap.parse_args()

    common = ["--out", args.out]
    extra = {}
    if args.quick:
        tmp = Path(tempfile.mkdtemp()) / "synthetic.csv"
        write_synthetic_csv(tmp)
        args.data = args.data or str(tmp)
        args.seeds = args.seeds or "0-1"
        extra["table-vi"] = ["--epochs", "5"]
    if args.data:
        common += ["--data", args.data]
    for step in STEPS:
        if args.skip_cnn and step[0] == "table-vi":
            continue
        argv = [*step, *common, *extra.get(step[0], [])]
        if args.seeds and step[0] not in ("ingest", "select"):
            argv += ["--seeds", args.seeds]
        print(f"== thermoreg {' '.join(argv)}", flush=True)
        t0 = time.perf_counter()
        code = cli(argv)
        print(f"   ({time.perf_counter() - t0:.1f} s)", flush=True)
        if code:
            sys.exit(code)


if __name__ == "__main__":
    main()
