"""Identify minority attack classes and route rows for GAN training.

An attack class is a minority class when n_normal / n_class >= gamma; its rows
go to per-class fine-tuning, normal rows go to pretraining, and everything
else passes through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, EmptyDataset

DEFAULT_GAMMA = 10.0


class MissingNormalClass(ValueError):
    pass


@dataclass
class ClassCensus:
    counts: dict          # class name -> row count
    normal_class: str
    ratios: dict          # attack class name -> n_normal / n_class

    def display_ratios(self, decimals=3):
        return {k: round(v, decimals) for k, v in self.ratios.items()}

    def rows(self):
        """Report rows: (class, samples, imbalance ratio or None)."""
        out = [(self.normal_class, self.counts[self.normal_class], None)]
        for name, n in self.counts.items():
            if name != self.normal_class:
                out.append((name, n, round(self.ratios[name], 3) if n else None))
        return out


@dataclass
class FilterOutput:
    normal: Dataset
    minority: dict        # class name -> single-class Dataset
    passthrough: Dataset  # attack rows below the threshold
    gamma: float


def class_census(dataset: Dataset) -> ClassCensus:
    if len(dataset) == 0:
        raise EmptyDataset("census of an empty dataset")
    schema = dataset.schema
    normal_id = schema.normal_id
    if not np.any(dataset.labels == normal_id):
        raise MissingNormalClass(f"no rows of class {schema.normal_class!r}")
    counts = {}
    for cid in np.unique(dataset.labels):
        counts[schema.classes[cid]] = int(np.sum(dataset.labels == cid))
    n_normal = counts[schema.normal_class]
    ratios = {name: n_normal / n for name, n in counts.items()
              if name != schema.normal_class and n > 0}
    return ClassCensus(counts, schema.normal_class, ratios)


def filter_minority(dataset: Dataset, gamma=DEFAULT_GAMMA) -> FilterOutput:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    census = class_census(dataset)
    schema = dataset.schema
    normal_id = schema.normal_id
    minority = {}
    minority_ids = []
    for name, ratio in census.ratios.items():
        if ratio >= gamma:
            cid = schema.class_id(name)
            minority[name] = dataset.select(dataset.labels == cid,
                                            provenance=f"minority:{name}")
            minority_ids.append(cid)
    normal = dataset.select(dataset.labels == normal_id, provenance="normal")
    keep = (dataset.labels != normal_id) & ~np.isin(dataset.labels, minority_ids)
    passthrough = dataset.select(keep, provenance="passthrough")
    return FilterOutput(normal, minority, passthrough, gamma)
