"""Write a synthetic CSV with the FLIR group-A column layout.

Useful for smoke-testing the pipeline when the real measurements are not at hand:
1020 raw rows, 61 of them with one blank cell, so cleaning leaves 959.
"""
import argparse

from thermoreg.synthetic import write_synthetic_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="destination CSV path")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rows", type=int, default=1020)
    ap.add_argument("--incomplete", type=int, default=61, help="rows given one missing numeric cell")
    args = ap.parse_args()
    write_synthetic_csv(args.out, n_rows=args.rows, n_incomplete=args.incomplete, seed=args.seed)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
