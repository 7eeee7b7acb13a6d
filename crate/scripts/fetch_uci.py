#!/usr/bin/env python3
"""Download the regression benchmarks and convert them to the CSV layout the loader expects.

Usage: scripts/fetch_uci.py [name ...] [--data-dir DIR]

Each dataset lands in DIR/<name>/<name>.csv with a header row, next to a SHA256SUMS
manifest. Boston ships with the repository and is not downloaded.
"""

import argparse
import csv
import hashlib
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
MIRROR = "https://raw.githubusercontent.com/yaringal/DropoutUncertaintyExps/master/UCI_Datasets"

DATASETS = {
    "concrete": {
        "url": f"{MIRROR}/concrete/data/data.txt",
        "columns": ["cement", "slag", "fly_ash", "water", "superplasticizer", "coarse_agg", "fine_agg", "age", "strength"],
    },
    "energy": {
        "url": f"{MIRROR}/energy/data/data.txt",
        "columns": [f"X{i}" for i in range(1, 9)] + ["Y1", "Y2"],
    },
    "kin8nm": {
        "url": f"{MIRROR}/kin8nm/data/data.txt",
        "columns": [f"theta{i}" for i in range(1, 9)] + ["y"],
    },
    "naval": {
        "url": f"{MIRROR}/naval-propulsion-plant/data/data.txt",
        "columns": [f"f{i}" for i in range(1, 17)] + ["compressor_decay", "turbine_decay"],
    },
    "power": {
        "url": f"{MIRROR}/power-plant/data/data.txt",
        "columns": ["AT", "V", "AP", "RH", "PE"],
    },
    "protein": {
        "url": f"{UCI}/00265/CASP.csv",
        "delimiter": ",",
        "header": True,
        "columns": ["RMSD"] + [f"F{i}" for i in range(1, 10)],
    },
    "wine": {
        "url": f"{UCI}/wine-quality/winequality-red.csv",
        "delimiter": ";",
        "header": True,
        "columns": [
            "fixed_acidity", "volatile_acidity", "citric_acid", "residual_sugar", "chlorides",
            "free_sulfur_dioxide", "total_sulfur_dioxide", "density", "pH", "sulphates", "alcohol", "quality",
        ],
    },
    "yacht": {
        "url": f"{UCI}/00243/yacht_hydrodynamics.data",
        "columns": ["buoyancy", "prismatic", "length_displacement", "beam_draught", "length_beam", "froude", "resistance"],
    },
    "year": {
        "url": f"{UCI}/00203/YearPredictionMSD.txt.zip",
        "delimiter": ",",
        "zip_member": "YearPredictionMSD.txt",
        "columns": ["year"] + [f"timbre{i}" for i in range(1, 91)],
    },
}


def fetch(url):
    with urllib.request.urlopen(url, timeout=120) as resp:
        return resp.read()


def rows_of(raw, spec):
    if "zip_member" in spec:
        raw = zipfile.ZipFile(io.BytesIO(raw)).read(spec["zip_member"])
    text = raw.decode("utf-8")
    delimiter = spec.get("delimiter")
    if delimiter is None:
        rows = [line.split() for line in text.splitlines()]
    else:
        rows = list(csv.reader(io.StringIO(text), delimiter=delimiter))
    if spec.get("header"):
        rows = rows[1:]
    rows = [r for r in rows if r]
    width = len(spec["columns"])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ValueError(f"row {i + 1} has {len(r)} fields, expected {width}")
        [float(v) for v in r]
    return rows


def write(name, spec, data_dir):
    out_dir = data_dir / name
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.csv"
    rows = rows_of(fetch(spec["url"]), spec)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(spec["columns"])
        w.writerows(rows)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    (out_dir / "SHA256SUMS").write_text(f"{digest}  {path.name}\n")
    print(f"{name}: {len(rows)} rows -> {path}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("names", nargs="*", help="datasets to fetch (default: all)")
    parser.add_argument("--data-dir", type=Path, default=Path("data"))
    args = parser.parse_args()
    names = args.names or list(DATASETS)
    status = 0
    for name in names:
        if name == "boston":
            print("boston: bundled with the repository")
            continue
        if name not in DATASETS:
            print(f"{name}: unknown dataset (choose from {', '.join(DATASETS)})", file=sys.stderr)
            status = 2
            continue
        try:
            write(name, DATASETS[name], args.data_dir)
        except Exception as e:  # keep going with the other datasets
            print(f"{name}: {e}", file=sys.stderr)
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
