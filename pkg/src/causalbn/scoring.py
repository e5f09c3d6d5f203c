"""Decomposable BIC / log-likelihood scoring and G^2 independence testing.

All scores use natural logarithms and maximum-likelihood conditional
frequencies from the data itself: local score of a node is its
log-likelihood contribution minus ``(r - 1) * q / 2 * ln(n)``, where r is
the node's state count and q the product of its parents' state counts.
Zero-count cells contribute 0 throughout (the 0 * ln 0 = 0 convention).

The independence test is the likelihood-ratio G^2 = 2 n MI(x; y | z),
calibrated against the chi-squared distribution with
``(r_x - 1)(r_y - 1) * prod(r_z)`` degrees of freedom over the declared
state spaces (no reduction for structural zeros).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import chi2

from .dataset import MISSING, CategoricalDataset, DataError
from .graph import Dag


def _columns(d: CategoricalDataset, names: Sequence[str]) -> np.ndarray:
    cols = [d.index_of(n) for n in names]
    sub = d.codes[:, cols]
    if (sub == MISSING).any():
        bad = [names[j] for j in range(len(names)) if (sub[:, j] == MISSING).any()]
        raise DataError(f"missing data present in {bad}; impute first")
    return sub


def _flat_index(sub: np.ndarray, cards: Sequence[int]) -> np.ndarray:
    """Row-major flat configuration index; first column varies slowest."""
    flat = np.zeros(sub.shape[0], dtype=np.int64)
    for j, c in enumerate(cards):
        flat *= c
        flat += sub[:, j]
    return flat


def free_parameters(g: Dag, d: CategoricalDataset) -> int:
    """Sum over nodes of (states - 1) * parent-configuration count."""
    total = 0
    for node in g.nodes:
        r = d.cardinality(node)
        q = 1
        for p in g.parents(node):
            q *= d.cardinality(p)
        total += (r - 1) * q
    return total


def _node_table(node: str, parents: Sequence[str], d: CategoricalDataset) -> np.ndarray:
    """Counts shaped (parent configurations, node states)."""
    names = list(parents) + [node]
    sub = _columns(d, names)
    cards = [d.cardinality(n) for n in names]
    flat = _flat_index(sub, cards)
    size = int(np.prod(cards, dtype=np.int64))
    r = cards[-1]
    return np.bincount(flat, minlength=size).reshape(size // r, r)


def _ll_from_table(table: np.ndarray) -> float:
    row = table.sum(axis=1, keepdims=True)
    mask = table > 0
    out = np.zeros_like(table, dtype=np.float64)
    out[mask] = table[mask] * (np.log(table[mask])
                               - np.log(np.broadcast_to(row, table.shape)[mask]))
    return float(out.sum())


def local_log_likelihood(node: str, parents: Sequence[str], d: CategoricalDataset) -> float:
    if node in parents:
        raise DataError(f"{node!r} cannot be its own parent")
    return _ll_from_table(_node_table(node, sorted(parents), d))


def local_bic(node: str, parents: Sequence[str], d: CategoricalDataset) -> float:
    """Node's log-likelihood contribution minus its BIC penalty."""
    r = d.cardinality(node)
    q = 1
    for p in parents:
        q *= d.cardinality(p)
    return (local_log_likelihood(node, parents, d)
            - 0.5 * (r - 1) * q * math.log(d.n))


def log_likelihood(g: Dag, d: CategoricalDataset) -> float:
    return sum(local_log_likelihood(node, sorted(g.parents(node)), d)
               for node in g.nodes)


def bic(g: Dag, d: CategoricalDataset, cache: "LocalScoreCache | None" = None) -> float:
    """Decomposable BIC: higher is better."""
    if cache is not None:
        return sum(cache.local_bic(node, g.parents(node)) for node in g.nodes)
    return sum(local_bic(node, sorted(g.parents(node)), d) for node in g.nodes)


class LocalScoreCache:
    """Memoized local BIC scores for one dataset.

    Keys are (node, sorted parent tuple); safe for concurrent use.
    """

    def __init__(self, d: CategoricalDataset):
        self._d = d
        self._store: dict[tuple, float] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def local_bic(self, node: str, parents: Iterable[str]) -> float:
        key = (node, tuple(sorted(parents)))
        with self._lock:
            if key in self._store:
                self.hits += 1
                return self._store[key]
        value = local_bic(key[0], key[1], self._d)
        with self._lock:
            self.misses += 1
            self._store[key] = value
        return value

    def __len__(self) -> int:
        return len(self._store)


@dataclass(frozen=True)
class CiTestResult:
    statistic: float
    dof: int
    p_value: float
    independent: bool
    degenerate: bool = False


def ci_test(x: str, y: str, z: Sequence[str], d: CategoricalDataset,
            alpha: float = 0.05) -> CiTestResult:
    """G^2 conditional-independence test of x and y given z.

    Degenerate variables (a single observed state for x or y) test as
    independent with statistic 0 and are flagged, so constraint-based
    learners can proceed on real data slices.
    """
    z = list(z)
    if x == y:
        raise DataError("ci_test requires two distinct variables")
    if x in z or y in z:
        raise DataError("conditioning set must exclude the tested pair")
    if len(set(z)) != len(z):
        raise DataError("duplicate conditioning variables")

    rx, ry = d.cardinality(x), d.cardinality(y)
    rz = [d.cardinality(name) for name in z]
    dof = max(1, (rx - 1) * (ry - 1) * int(np.prod(rz, dtype=np.int64) if rz else 1))

    sub = _columns(d, [x, y] + z)
    if len(np.unique(sub[:, 0])) < 2 or len(np.unique(sub[:, 1])) < 2:
        return CiTestResult(0.0, dof, 1.0, independent=True, degenerate=True)

    if z:
        zflat = _flat_index(sub[:, 2:], rz)
        _, zinv = np.unique(zflat, return_inverse=True)
        q = int(zinv.max()) + 1
    else:
        zinv = np.zeros(d.n, dtype=np.int64)
        q = 1
    cell = (sub[:, 0].astype(np.int64) * ry + sub[:, 1]) * q + zinv
    table = np.bincount(cell, minlength=rx * ry * q).reshape(rx, ry, q).astype(np.float64)

    n_xz = table.sum(axis=1, keepdims=True)
    n_yz = table.sum(axis=0, keepdims=True)
    n_z = table.sum(axis=(0, 1), keepdims=True)
    mask = table > 0
    terms = np.zeros_like(table)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = table * n_z / (n_xz * n_yz)
    terms[mask] = table[mask] * np.log(ratio[mask])
    g2 = max(0.0, 2.0 * float(terms.sum()))
    p = float(chi2.sf(g2, dof))
    return CiTestResult(g2, dof, p, independent=p > alpha)
