#!/usr/bin/env python3
"""Download the NSL-KDD train+test CSV files into a data directory.

Usage: python scripts/fetch_nslkdd.py [dest_dir]

Needs outbound network access. The acceptance tests look for the files under
$GANIDS_NSLKDD_DIR or ./data/nslkdd/.
"""

import sys
import urllib.request
from pathlib import Path

MIRRORS = [
    "https://raw.githubusercontent.com/defcom17/NSL_KDD/master/",
    "https://raw.githubusercontent.com/jmnwong/NSL-KDD-Dataset/master/",
]
FILES = ["KDDTrain+.txt", "KDDTest+.txt"]


def fetch(dest: Path):
    dest.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        out = dest / name
        if out.exists():
            print(f"{out} already present")
            continue
        last_err = None
        for base in MIRRORS:
            url = base + name.replace("+", "%2B")
            try:
                print(f"fetching {url}")
                urllib.request.urlretrieve(url, out)
                break
            except OSError as e:
                last_err = e
        else:
            raise SystemExit(f"could not download {name}: {last_err}")
        print(f"wrote {out} ({out.stat().st_size} bytes)")


if __name__ == "__main__":
    fetch(Path(sys.argv[1] if len(sys.argv) > 1 else "data/nslkdd"))
