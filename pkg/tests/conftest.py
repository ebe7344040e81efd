import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from pairclust import AnnotationGraphs, Assignment, Dataset


@pytest.fixture(scope="session")
def fixture6():
    """Six samples in two lobes with three must-links and two cannot-links.

    Small enough to enumerate every labeling; used wherever a test needs a
    ground-truth optimum or a hand-checkable relocation trajectory.
    """
    samples = np.array([
        [0.0, 0.0],
        [0.3, 0.1],
        [1.4, 0.2],
        [2.6, 0.1],
        [3.0, 0.0],
        [3.2, -0.2],
    ])
    must = np.array([[0, 1, 1], [1, 2, 1], [3, 4, 1]], dtype=np.int64)
    cannot = np.array([[2, 3, 1], [0, 5, 1]], dtype=np.int64)
    return {
        "dataset": Dataset(samples),
        "graphs": AnnotationGraphs(6, must, cannot),
        "must": must,
        "cannot": cannot,
        "k": 2,
    }


def random_instance(rng, n=None, d=None, k=None, n_draws=None, p=0.8,
                    allow_unannotated=True):
    """Random dataset + annotation graphs + valid assignment for property
    tests.  Draw counts refer to raw annotation draws, so duplicates fold."""
    n = int(rng.integers(8, 26)) if n is None else n
    d = int(rng.integers(1, 4)) if d is None else d
    k = int(rng.integers(2, 4)) if k is None else k
    samples = rng.normal(size=(n, d)) * rng.uniform(0.5, 2.0)
    labels = _valid_labels(rng, n, k)
    if n_draws is None:
        n_draws = int(rng.integers(1, 3 * n))
    rows = []
    for _ in range(n_draws):
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        same = labels[i] == labels[j]
        correct = rng.random() < p
        t = 1 if (same == correct) else -1
        rows.append((i, j, t))
    must = np.array([r[:2] + (1,) for r in rows if r[2] == 1], dtype=np.int64).reshape(-1, 3)
    cannot = np.array([r[:2] + (1,) for r in rows if r[2] == -1], dtype=np.int64).reshape(-1, 3)
    graphs = AnnotationGraphs(n, must, cannot)
    if not allow_unannotated and graphs.unannotated_samples.size:
        return random_instance(rng, n, d, k, n_draws + n, p, allow_unannotated)
    return Dataset(samples), graphs, Assignment(labels, k)


def _valid_labels(rng, n, k):
    while True:
        labels = rng.integers(0, k, size=n).astype(np.int64)
        if np.unique(labels).size == k:
            return labels


def stored_edges(graphs):
    """(must_rows, cannot_rows) as python tuples (i, j, count)."""
    must = [tuple(int(v) for v in row) for row in graphs.must_edges]
    cannot = [tuple(int(v) for v in row) for row in graphs.cannot_edges]
    return must, cannot
