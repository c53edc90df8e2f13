"""Shared fixtures and oracle helpers for the test suite."""

import numpy as np
import pytest

from ganids.data import Column, Dataset, DatasetSchema


def make_schema(n_features, classes, normal=None):
    cols = [Column(f"f{i}", "numeric") for i in range(n_features)]
    cols.append(Column("label", "label"))
    return DatasetSchema(cols, list(classes), normal or classes[0])


def encoded_dataset(matrix, labels, classes, normal=None):
    matrix = np.asarray(matrix, dtype=np.float64)
    schema = make_schema(matrix.shape[1], classes, normal)
    return Dataset(matrix, np.asarray(labels, dtype=np.int64), schema,
                   encoded=True,
                   feature_names=[f"f{i}" for i in range(matrix.shape[1])])


def raw_dataset(rows, labels, kinds, classes, normal=None):
    """Raw (object-matrix) dataset; kinds is a list of numeric/categorical."""
    cols = [Column(f"f{i}", kind) for i, kind in enumerate(kinds)]
    cols.append(Column("label", "label"))
    schema = DatasetSchema(cols, list(classes), normal or classes[0])
    matrix = np.empty((len(rows), len(kinds)), dtype=object)
    for i, r in enumerate(rows):
        matrix[i] = r
    return Dataset(matrix, np.asarray(labels, dtype=np.int64), schema,
                   encoded=False, feature_names=[c.name for c in cols[:-1]])


def fd_param_grad(loss_fn, params, name, index, h=1e-5):
    """Central finite difference of loss_fn(params) in one parameter entry.

    loss_fn must return (scalar, relu_sign_patterns); the probe is rejected
    (returns None) when the activation sign pattern changes under +-h, i.e.
    the step crossed a piecewise-linear kink.
    """
    base = params.copy()
    _, signs0 = loss_fn(base)

    def shifted(delta):
        p = params.copy()
        p.tensors[name].flat[index] += delta
        return loss_fn(p)

    up, signs_u = shifted(h)
    dn, signs_d = shifted(-h)
    for s0, su, sd in zip(signs0, signs_u, signs_d):
        if not (np.array_equal(s0, su) and np.array_equal(s0, sd)):
            return None
    return (up - dn) / (2 * h)


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
