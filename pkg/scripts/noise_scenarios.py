"""Run the clean / image / gate / hybrid comparison and print the result table.

    python3 scripts/noise_scenarios.py --out runs/noise --image-sigma 0.03 --gate-sigma 0.02
"""
import argparse
import csv
import sys
from pathlib import Path

from iaqcnn import cli


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/noise"))
    ap.add_argument("--data", type=Path, help="existing dataset; synthesized under --out when omitted")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--d-max", type=int, default=8)
    ap.add_argument("--image-sigma", type=float, default=0.03)
    ap.add_argument("--gate-sigma", type=float, default=0.02)
    a = ap.parse_args(argv)
    data = a.data
    if data is None:
        data = a.out / "data"
        if cli.main(["synth", "--out", str(data), "--seed", str(a.seed)]):
            return 1
    code = cli.main(["noise-exp", "--data", str(data), "--out", str(a.out / "scenarios"),
                     "--seed", str(a.seed), "--d-max", str(a.d_max),
                     "--image-sigma", str(a.image_sigma), "--gate-sigma", str(a.gate_sigma)])
    if code:
        return code
    with open(a.out / "scenarios" / "noise_results.csv") as fh:
        rows = list(csv.DictReader(fh))
    cols = list(rows[0])
    print("  ".join(f"{c:>12}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>12}" if not _isnum(r[c]) else f"{float(r[c]):>12.4f}" for c in cols))
    return 0


def _isnum(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


if __name__ == "__main__":
    sys.exit(main())
