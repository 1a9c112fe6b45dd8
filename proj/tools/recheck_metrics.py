#!/usr/bin/env python3
"""Recompute metrics.csv from queries.csv and compare.

Usage: recheck_metrics.py REPORT_DIR [--tol 1e-9]

Exit status 0 when every n row agrees (recall exactly as a percentage, RMSE
within the tolerance, empty RMSE exactly when nothing localized), 1 otherwise.
"""

import argparse
import csv
import math
import sys
from collections import OrderedDict
from pathlib import Path


def recompute(queries_path):
    groups = OrderedDict()
    with open(queries_path, newline="") as fh:
        for row in csv.DictReader(fh):
            g = groups.setdefault(int(row["n"]), {"total": 0, "e3": [], "e2": []})
            g["total"] += 1
            if row["localized"] == "1":
                g["e3"].append(float(row["err3d_m"]))
                g["e2"].append(float(row["err2d_m"]))
    out = OrderedDict()
    for n, g in groups.items():
        rmse = lambda e: math.sqrt(math.fsum(x * x for x in e) / len(e)) if e else None
        out[n] = {
            "rmse3d_m": rmse(g["e3"]),
            "rmse2d_m": rmse(g["e2"]),
            "recall_pct": 100.0 * len(g["e3"]) / g["total"] if g["total"] else 0.0,
        }
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("report_dir", type=Path)
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()

    expected = recompute(args.report_dir / "queries.csv")
    ok = True
    seen = set()
    with open(args.report_dir / "metrics.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            n = int(row["n"])
            seen.add(n)
            if n not in expected:
                print(f"n={n}: no queries logged")
                ok = False
                continue
            exp = expected[n]
            for key in ("rmse3d_m", "rmse2d_m"):
                got = float(row[key]) if row[key] != "" else None
                want = exp[key]
                if (got is None) != (want is None) or (
                    got is not None and abs(got - want) > args.tol * max(1.0, abs(want))
                ):
                    print(f"n={n} {key}: file {got} recomputed {want}")
                    ok = False
            if abs(float(row["recall_pct"]) - exp["recall_pct"]) > 1e-12:
                print(f"n={n} recall_pct: file {row['recall_pct']} recomputed {exp['recall_pct']}")
                ok = False
    for n in expected:
        if n not in seen:
            print(f"n={n}: missing from metrics.csv")
            ok = False
    print("metrics consistent" if ok else "metrics MISMATCH")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
