#!/usr/bin/env python3
"""Fetch the Los Angeles ozone dataset and write the five-column CSV.

The data (330 daily records from 1976) are not bundled with the package
for provenance reasons. This script downloads the public LAozone file,
selects the columns used in the ozone workflow, and writes ozone.csv with
the expected schema:

    Ozone    daily ozone concentration (response)
    Height   Vandenburg 500 millibar height
    Humidity humidity percent
    ITemp    inversion base temperature
    STemp    Sandburg Air Force Base temperature

Source file columns: ozone, vh, wind, humidity, temp, ibh, dpg, ibt, vis, doy.

Usage:
    python scripts/fetch_ozone.py [--out ozone.csv]

Afterwards, the analysis reported in the package README runs as:
    simr select-alpha --input ozone.csv --response Ozone \
        --transform Humidity=1.68 --transform ITemp=1.25 --transform STemp=1.11 \
        --slices 10 --criterion pvalue
"""

import argparse
import csv
import io
import sys
import urllib.request

URL = "https://hastie.su.domains/ElemStatLearn/datasets/LAozone.data"

# Map from output schema to source column names.
COLUMN_MAP = {
    "Ozone": "ozone",
    "Height": "vh",
    "Humidity": "humidity",
    "ITemp": "ibt",
    "STemp": "temp",
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="ozone.csv")
    parser.add_argument("--url", default=URL)
    args = parser.parse_args()

    print(f"downloading {args.url}")
    with urllib.request.urlopen(args.url) as resp:
        text = resp.read().decode("utf-8")

    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader)]
    missing = [src for src in COLUMN_MAP.values() if src not in header]
    if missing:
        print(f"source schema check failed; missing column(s): {missing}", file=sys.stderr)
        return 2
    idx = {out: header.index(src) for out, src in COLUMN_MAP.items()}

    rows = []
    for row in reader:
        if not row:
            continue
        rows.append([row[idx[name]].strip() for name in COLUMN_MAP])
    if len(rows) != 330:
        print(f"warning: expected 330 records, got {len(rows)}", file=sys.stderr)

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(COLUMN_MAP))
        writer.writerows(rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
