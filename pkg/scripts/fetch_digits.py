"""Write the 8x8 handwritten digits dataset to data/digits.csv.

The data are the 1797-sample UCI optdigits-derived set shipped with
scikit-learn (``sklearn.datasets.load_digits``).  Each output row holds 64
pixel intensities in [0, 16] followed by the integer class label; there is
no header line.  scikit-learn is only needed to run this script, not to use
the package.
"""

import argparse
import csv
from pathlib import Path

from sklearn.datasets import load_digits


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/digits.csv")
    args = parser.parse_args()

    digits = load_digits()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row, label in zip(digits.data, digits.target):
            writer.writerow([f"{int(v)}" for v in row] + [int(label)])
    print(f"wrote {len(digits.target)} rows to {out}")


if __name__ == "__main__":
    main()
