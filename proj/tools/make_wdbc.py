#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Writes data/wdbc.data in the UCI layout (id, M/B, 30 features).

The feature values come from the copy of the Wisconsin Diagnostic Breast
Cancer data shipped with scikit-learn. That copy has no patient ids, so rows
are numbered 1..569 in file order.
"""
import csv
import pathlib
import sys

from sklearn import datasets


def main() -> int:
    src = pathlib.Path(datasets.__file__).parent / "data" / "breast_cancer.csv"
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent.parent / "data" / "wdbc.data")
    with src.open() as f:
        rows = list(csv.reader(f))[1:]
    with out.open("w") as f:
        for i, row in enumerate(rows, start=1):
            diagnosis = "M" if row[-1] == "0" else "B"
            f.write(",".join([str(i), diagnosis, *row[:-1]]) + "\n")
    print(f"wrote {len(rows)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
