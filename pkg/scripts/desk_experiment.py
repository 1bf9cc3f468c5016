"""Synthesize a dataset, preprocess, train and evaluate in one go.

    python3 scripts/desk_experiment.py --out runs/desk --d-max 8 --epochs 60
"""
import argparse
import csv
import sys
from pathlib import Path

from iaqcnn import cli


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--d-max", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--patients", type=int, default=28)
    a = ap.parse_args(argv)
    data, run = a.out / "data", a.out / "run"
    common = ["--seed", str(a.seed)]
    steps = [
        ["synth", "--out", str(data), "--patients", str(a.patients)],
        ["preprocess", "--data", str(data), "--out", str(run), "--d-max", str(a.d_max)],
        ["train", "--out", str(run), "--epochs", str(a.epochs)],
        ["eval", "--out", str(run)],
    ]
    for argv_ in steps:
        print("$ iaqcnn", " ".join(argv_ + common))
        code = cli.main(argv_ + common)
        if code:
            return code
    with open(run / "metrics.csv") as fh:
        for row in csv.DictReader(fh):
            print(f"{row['metric']:>10} {row['class']:>4} {float(row['value']):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
