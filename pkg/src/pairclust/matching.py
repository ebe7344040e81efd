"""Exact minimum-cost square assignment with a deterministic tie-break.

Used by the crossover (matching parent centers), the mixture KL metric and
the centroid-index helper.  Among all cost-minimal permutations (within a
relative tolerance absorbing float reassociation), the lexicographically
smallest one is returned, so results are reproducible across platforms.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import ContractViolation

# Full permutation search below this size: cheap, exact, and naturally
# lexicographic.  Larger instances use the Hungarian solver plus a
# column-fixing pass for the tie-break.
_ENUM_LIMIT = 5

_perm_cache: dict[int, np.ndarray] = {}


def _perms(k: int) -> np.ndarray:
    if k not in _perm_cache:
        _perm_cache[k] = np.array(list(itertools.permutations(range(k))),
                                  dtype=np.int64)
    return _perm_cache[k]


def _check(costs) -> np.ndarray:
    arr = np.asarray(costs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ContractViolation("cost matrix must be square and non-empty")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("cost matrix contains non-finite entries")
    return arr


def _optimal_total(costs: np.ndarray) -> float:
    k = costs.shape[0]
    if k <= _ENUM_LIMIT:
        perms = _perms(k)
        return float(costs[np.arange(k), perms].sum(axis=1).min())
    rows, cols = linear_sum_assignment(costs)
    return float(costs[rows, cols].sum())


def min_cost_matching(costs) -> tuple[np.ndarray, float]:
    """Return (pi, total) minimizing sum_r costs[r, pi[r]] over permutations.

    Ties (totals within 1e-9 relative of the minimum) resolve to the
    lexicographically smallest permutation.
    """
    costs = _check(costs)
    k = costs.shape[0]
    if k == 1:
        return np.zeros(1, dtype=np.int64), float(costs[0, 0])
    best = _optimal_total(costs)
    tol = 1.0e-9 * max(1.0, float(np.abs(costs).max()) * k, abs(best))
    if k <= _ENUM_LIMIT:
        perms = _perms(k)
        totals = costs[np.arange(k), perms].sum(axis=1)
        pick = int(np.flatnonzero(totals <= best + tol)[0])
        perm = perms[pick].copy()
        return perm, float(totals[pick])
    # Fix columns row by row, keeping the completion within tolerance of
    # the optimum; this constructs the lexicographically smallest tie.
    perm = np.empty(k, dtype=np.int64)
    free = list(range(k))
    fixed = 0.0
    for r in range(k):
        chosen = -1
        for pos, c in enumerate(free):
            rest = fixed + costs[r, c]
            if r + 1 < k:
                rest += _optimal_total(costs[np.ix_(range(r + 1, k),
                                                    free[:pos] + free[pos + 1:])])
            if rest <= best + tol:
                chosen = pos
                break
        if chosen < 0:
            raise AssertionError("no column completes within tolerance")
        perm[r] = free.pop(chosen)
        fixed += costs[r, perm[r]]
    return perm, float(costs[np.arange(k), perm].sum())
