#!/usr/bin/env python3
"""Export benchmark datasets to data/ as plain CSV (features + label column).

WBC (Breast Cancer Wisconsin Diagnostic, 569x30, 2 classes) ships with
scikit-learn and is exported offline. Connectionist (Sonar, 208x60, 2
classes) is not bundled anywhere locally; we try UCI and OpenML and print
instructions if both are unreachable.
"""

import csv
import sys
import urllib.request
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

SONAR_URL = (
    "https://archive.ics.uci.edu/ml/machine-learning-databases/"
    "undocumented/connectionist-bench/sonar/sonar.all-data"
)


def export_wbc() -> None:
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    out = DATA_DIR / "wbc.csv"
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        names = [n.replace(" ", "_") for n in bunch.feature_names]
        writer.writerow(names + ["label"])
        for row, target in zip(bunch.data, bunch.target):
            writer.writerow([repr(float(v)) for v in row] + [bunch.target_names[target]])
    print(f"wrote {out} ({bunch.data.shape[0]} rows, {bunch.data.shape[1]} features)")


def export_sonar() -> bool:
    out = DATA_DIR / "connectionist.csv"
    try:
        raw = urllib.request.urlopen(SONAR_URL, timeout=30).read().decode()
    except Exception as exc:  # noqa: BLE001
        print(f"could not download Sonar from UCI: {exc}", file=sys.stderr)
        print(
            "Supply it manually: download sonar.all-data (60 numeric columns,\n"
            "label R/M in the last column), add a header ending in 'label',\n"
            f"and save as {out}",
            file=sys.stderr,
        )
        return False
    rows = [line.split(",") for line in raw.strip().splitlines()]
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(len(rows[0]) - 1)] + ["label"])
        writer.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return True


def main() -> int:
    DATA_DIR.mkdir(exist_ok=True)
    export_wbc()
    ok = export_sonar()
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
