"""Small synthetic flow-feature dataset for demos, smoke tests and CI.

Five classes over 8 numeric and 1 categorical feature: a dominant normal
class, two majority attacks and two minority attacks whose imbalance ratios
sit above the default gamma of 10.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

CLASSES = ["normal", "flood", "scan", "backdoor", "escalate"]
DEFAULT_MIX = {"normal": 0.55, "flood": 0.25, "scan": 0.14,
               "backdoor": 0.04, "escalate": 0.02}

# per-class feature-mean profiles (8 numeric features)
_PROFILES = {
    "normal":   [0.30, 0.40, 0.35, 0.30, 0.45, 0.30, 0.40, 0.35],
    "flood":    [0.80, 0.40, 0.70, 0.30, 0.45, 0.75, 0.40, 0.35],
    "scan":     [0.30, 0.75, 0.35, 0.70, 0.45, 0.30, 0.75, 0.35],
    "backdoor": [0.55, 0.40, 0.35, 0.30, 0.80, 0.30, 0.40, 0.70],
    "escalate": [0.30, 0.40, 0.75, 0.65, 0.45, 0.65, 0.40, 0.35],
}
_PROTO_BIAS = {"normal": [0.7, 0.2, 0.1], "flood": [0.2, 0.7, 0.1],
               "scan": [0.3, 0.3, 0.4], "backdoor": [0.6, 0.1, 0.3],
               "escalate": [0.2, 0.4, 0.4]}
_PROTOS = ["tcp", "udp", "icmp"]


def demo_schema_dict():
    cols = [{"name": f"f{i}", "kind": "numeric"} for i in range(8)]
    cols.append({"name": "proto", "kind": "categorical"})
    cols.append({"name": "label", "kind": "label"})
    return {"columns": cols, "classes": CLASSES, "normal_class": "normal",
            "label_map": {}, "has_header": False, "class_caps": {}}


def write_demo_dataset(out_dir: Path, rows=2000, seed=0, mix=None):
    """Write demo.csv and demo_schema.json; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    mix = mix or DEFAULT_MIX
    counts = {c: int(round(rows * frac)) for c, frac in mix.items()}
    csv_path = out_dir / "demo.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        for cls in CLASSES:
            mu = np.array(_PROFILES[cls])
            for _ in range(counts.get(cls, 0)):
                x = np.clip(rng.normal(mu, 0.08), 0, 1)
                proto = rng.choice(_PROTOS, p=_PROTO_BIAS[cls])
                w.writerow([f"{v:.6f}" for v in x] + [proto, cls])
    schema_path = out_dir / "demo_schema.json"
    with open(schema_path, "w") as f:
        json.dump(demo_schema_dict(), f, indent=1)
    return {"csv": csv_path, "schema": schema_path}
