"""Causal Bayesian networks over discrete variables.

A :class:`DiscreteBayesNet` couples a DAG with one conditional
probability table per node. Supported operations: maximum-likelihood /
smoothed fitting from data, exact posterior queries by variable
elimination, forward sampling, and interventional queries by graph
surgery (incoming edges of intervened nodes are severed and their CPTs
replaced by point masses, i.e. truncated factorization).

CPT layout: a node's table has one axis per parent in lexicographic
name order followed by the node's own axis. Serialized tables are
row-major over parent configurations, so the last-listed parent varies
fastest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import CategoricalDataset, DataError, Variable
from .graph import Dag
from .scoring import _columns, _node_table

ROW_SUM_TOLERANCE = 1e-12


class InferenceError(RuntimeError):
    """Query cannot be answered exactly (zero evidence or oversized model)."""


@dataclass(frozen=True)
class Query:
    """A probability query: target state given evidence and interventions."""

    target: str
    state: str
    evidence: Mapping[str, str] = field(default_factory=dict)
    interventions: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.target in self.interventions:
            raise DataError("cannot query a variable while intervening on it")
        overlap = set(self.evidence) & set(self.interventions)
        if overlap:
            raise DataError(f"variables both observed and intervened: {sorted(overlap)}")


class DiscreteBayesNet:
    """Immutable DAG plus per-node CPTs."""

    def __init__(self, dag: Dag, variables: Sequence[Variable],
                 cpts: Mapping[str, np.ndarray]):
        vs = tuple(variables)
        names = tuple(v.name for v in vs)
        if set(names) != set(dag.nodes):
            raise DataError("variable roster does not match DAG nodes")
        self._dag = dag
        self._variables = vs
        self._var_of = {v.name: v for v in vs}
        self._parents = {n: tuple(sorted(dag.parents(n))) for n in dag.nodes}
        tables: dict[str, np.ndarray] = {}
        for n in dag.nodes:
            want = tuple(self._var_of[p].cardinality for p in self._parents[n])
            want += (self._var_of[n].cardinality,)
            t = np.asarray(cpts[n], dtype=np.float64).reshape(want)
            if (t < -ROW_SUM_TOLERANCE).any():
                raise DataError(f"negative probability in CPT of {n!r}")
            sums = t.sum(axis=-1)
            if not np.allclose(sums, 1.0, atol=ROW_SUM_TOLERANCE, rtol=0.0):
                worst = float(np.abs(sums - 1.0).max())
                raise DataError(f"CPT rows of {n!r} do not sum to 1 (off by {worst:g})")
            t = t.copy()
            t.setflags(write=False)
            tables[n] = t
        self._cpts = tables

    @property
    def dag(self) -> Dag:
        return self._dag

    @property
    def variables(self) -> tuple[Variable, ...]:
        return self._variables

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self._variables)

    def parents(self, node: str) -> tuple[str, ...]:
        return self._parents[node]

    def cpt(self, node: str) -> np.ndarray:
        return self._cpts[node]

    def states(self, node: str) -> tuple[str, ...]:
        return self._var_of[node].states

    def cardinality(self, node: str) -> int:
        return self._var_of[node].cardinality

    def state_index(self, node: str, state: str) -> int:
        try:
            return self.states(node).index(state)
        except ValueError:
            raise DataError(f"{state!r} is not a state of {node!r}") from None

    def __repr__(self) -> str:
        return f"DiscreteBayesNet(nodes={len(self._variables)}, edges={len(self._dag.edges)})"


def fit(g: Dag, d: CategoricalDataset, smoothing: float = 1.0) -> DiscreteBayesNet:
    """Estimate CPTs as (count + smoothing) / (total + smoothing * states).

    With ``smoothing=0`` this is the maximum-likelihood estimate and
    parent configurations unseen in the data get a uniform row.
    """
    if set(g.nodes) != set(d.variable_names):
        raise DataError("graph nodes must equal dataset variables")
    if smoothing < 0:
        raise DataError("smoothing must be non-negative")
    variables = list(d.variables)
    cpts: dict[str, np.ndarray] = {}
    for node in g.nodes:
        parents = tuple(sorted(g.parents(node)))
        table = _node_table(node, parents, d).astype(np.float64)
        r = d.cardinality(node)
        totals = table.sum(axis=1, keepdims=True)
        if smoothing == 0.0:
            unseen = (totals == 0).ravel()
            with np.errstate(invalid="ignore", divide="ignore"):
                probs = table / totals
            probs[unseen] = 1.0 / r
        else:
            probs = (table + smoothing) / (totals + smoothing * r)
        shape = tuple(d.cardinality(p) for p in parents) + (r,)
        cpts[node] = probs.reshape(shape)
    return DiscreteBayesNet(g, variables, cpts)


# --- exact inference --------------------------------------------------------

@dataclass
class _Factor:
    vars: tuple[str, ...]
    table: np.ndarray


def _multiply(a: _Factor, b: _Factor) -> _Factor:
    out_vars = list(a.vars) + [v for v in b.vars if v not in a.vars]
    ax = a.table.reshape(a.table.shape + (1,) * (len(out_vars) - len(a.vars)))
    # Move b's axes into out_vars order, adding singleton axes where absent.
    b_shape = [b.table.shape[b.vars.index(v)] if v in b.vars else 1 for v in out_vars]
    perm = [b.vars.index(v) for v in out_vars if v in b.vars]
    bx = np.transpose(b.table, perm).reshape(b_shape)
    return _Factor(tuple(out_vars), ax * bx)


def _marginalize(f: _Factor, var: str) -> _Factor:
    i = f.vars.index(var)
    return _Factor(f.vars[:i] + f.vars[i + 1:], f.table.sum(axis=i))


def _slice_evidence(f: _Factor, evidence_idx: Mapping[str, int]) -> _Factor:
    idx: list = []
    keep: list[str] = []
    for v in f.vars:
        if v in evidence_idx:
            idx.append(evidence_idx[v])
        else:
            idx.append(slice(None))
            keep.append(v)
    return _Factor(tuple(keep), f.table[tuple(idx)])


def posterior(net: DiscreteBayesNet, target: str,
              evidence: Mapping[str, str] | None = None,
              max_factor_cells: int = 2 ** 22) -> np.ndarray:
    """Exact posterior distribution of ``target`` given evidence.

    Variable elimination with a min-degree elimination order
    (lexicographic tie-break). Raises :class:`InferenceError` on
    zero-probability evidence, or when an intermediate factor would
    exceed ``max_factor_cells`` (use forward sampling for such models).
    """
    evidence = dict(evidence or {})
    ev_idx = {v: net.state_index(v, s) for v, s in evidence.items()}
    if target in ev_idx:
        out = np.zeros(net.cardinality(target))
        out[ev_idx[target]] = 1.0
        return out

    factors = []
    for n in net.variable_names:
        f = _Factor(net.parents(n) + (n,), net.cpt(n))
        f = _slice_evidence(f, ev_idx)
        factors.append(f)

    hidden = [n for n in net.variable_names if n != target and n not in ev_idx]
    remaining = list(factors)
    while hidden:
        # Min-degree: eliminate the variable entangled with fewest others.
        degree = {}
        for h in hidden:
            others: set[str] = set()
            size = 1
            for f in remaining:
                if h in f.vars:
                    others |= set(f.vars)
            others.discard(h)
            degree[h] = len(others)
        pick = min(hidden, key=lambda h: (degree[h], h))
        hidden.remove(pick)
        related = [f for f in remaining if pick in f.vars]
        remaining = [f for f in remaining if pick not in f.vars]
        if not related:
            continue
        prod = related[0]
        for f in related[1:]:
            cells = int(np.prod(prod.table.shape, dtype=np.int64))
            more = int(np.prod([s for v, s in zip(f.vars, f.table.shape)
                                if v not in prod.vars], dtype=np.int64))
            if cells * more > max_factor_cells:
                raise InferenceError(
                    "intermediate factor too large for exact inference; "
                    "use forward sampling instead")
            prod = _multiply(prod, f)
        remaining.append(_marginalize(prod, pick))

    result = _Factor((), np.array(1.0))
    for f in remaining:
        result = _multiply(result, f)
    if result.vars != (target,):
        raise InferenceError(f"elimination left unexpected scope {result.vars}")
    total = float(result.table.sum())
    if total <= 0.0:
        raise InferenceError("evidence has zero probability under the model")
    return result.table / total


def infer(net: DiscreteBayesNet, q: Query) -> float:
    """Exact P(target = state | evidence), honoring interventions if any."""
    if q.interventions:
        return intervene(net, q)
    dist = posterior(net, q.target, q.evidence)
    return float(dist[net.state_index(q.target, q.state)])


def mutilate(net: DiscreteBayesNet, interventions: Mapping[str, str]) -> DiscreteBayesNet:
    """Graph surgery: sever incoming edges and fix intervened nodes."""
    for v in interventions:
        net.state_index(v, interventions[v])  # validates
    new_edges = [(u, v) for u, v in net.dag.edges if v not in interventions]
    new_dag = Dag(net.dag.nodes, new_edges)
    cpts: dict[str, np.ndarray] = {}
    for n in net.variable_names:
        if n in interventions:
            point = np.zeros(net.cardinality(n))
            point[net.state_index(n, interventions[n])] = 1.0
            cpts[n] = point
        else:
            cpts[n] = net.cpt(n)
    return DiscreteBayesNet(new_dag, net.variables, cpts)


def intervene(net: DiscreteBayesNet, q: Query) -> float:
    """P(target = state | do(interventions), remaining evidence)."""
    if not q.interventions:
        return infer(net, q)
    cut = mutilate(net, q.interventions)
    dist = posterior(cut, q.target, q.evidence)
    return float(dist[net.state_index(q.target, q.state)])


# --- sampling ---------------------------------------------------------------

def sample(net: DiscreteBayesNet, n: int, seed: int = 0) -> CategoricalDataset:
    """Forward-sample ``n`` rows in topological order; seed-deterministic."""
    if n < 1:
        raise DataError("need n >= 1 samples")
    from .graph import topological_sort

    rng = np.random.default_rng(seed)
    order = topological_sort(net.dag)
    col_idx = {name: j for j, name in enumerate(net.variable_names)}
    out = np.zeros((n, len(net.variables)), dtype=np.int16)
    for node in order:
        parents = net.parents(node)
        r = net.cardinality(node)
        table = net.cpt(node).reshape(-1, r)
        if parents:
            cards = [net.cardinality(p) for p in parents]
            flat = np.zeros(n, dtype=np.int64)
            for p, c in zip(parents, cards):
                flat *= c
                flat += out[:, col_idx[p]]
        else:
            flat = np.zeros(n, dtype=np.int64)
        cumulative = np.cumsum(table[flat], axis=1)
        u = rng.random(n)
        out[:, col_idx[node]] = (u[:, None] > cumulative).sum(axis=1)
    return CategoricalDataset(net.variables, out)


def posterior_given_rows(net: DiscreteBayesNet, target: str,
                         d: CategoricalDataset) -> np.ndarray:
    """P(target | all other variables) for every row, vectorized.

    With complete rows the posterior depends only on the target's Markov
    blanket factors, so this equals full-evidence variable elimination
    while scoring all rows at once. Returns an (n, r_target) array.
    """
    names = list(net.variable_names)
    if sorted(names) != sorted(d.variable_names):
        raise DataError("dataset variables must match the network")
    sub = _columns(d, names)
    col = {name: j for j, name in enumerate(names)}
    r = net.cardinality(target)
    n = d.n
    log_post = np.zeros((n, r))
    involved = [target] + [c for c in sorted(net.dag.children(target))]
    for node in involved:
        parents = net.parents(node)
        table = net.cpt(node).reshape(-1, net.cardinality(node))
        cards = [net.cardinality(p) for p in parents]
        for t in range(r):
            flat = np.zeros(n, dtype=np.int64)
            for p, c in zip(parents, cards):
                flat *= c
                flat += (np.full(n, t, dtype=np.int64) if p == target
                         else sub[:, col[p]])
            val = (np.full(n, t, dtype=np.int64) if node == target
                   else sub[:, col[node]])
            probs = table[flat, val]
            if (probs <= 0.0).any():
                raise InferenceError(
                    "zero-probability evidence row; fit the prediction net "
                    "with positive smoothing")
            log_post[:, t] += np.log(probs)
    log_post -= log_post.max(axis=1, keepdims=True)
    post = np.exp(log_post)
    post /= post.sum(axis=1, keepdims=True)
    return post


# --- intervention reporting --------------------------------------------------

@dataclass(frozen=True)
class EffectReport:
    """Interventional contrast of a binary exposure on a binary target."""

    exposure: str
    target: str
    exposure_on: str
    exposure_off: str
    target_state: str
    p_exposed: float
    p_unexposed: float
    absolute_change: float
    relative_change: float | None
    summary: str

    def to_json(self) -> dict:
        return {
            "exposure": self.exposure,
            "target": self.target,
            "exposure_on": self.exposure_on,
            "exposure_off": self.exposure_off,
            "target_state": self.target_state,
            "p_target_given_do_exposure_on": self.p_exposed,
            "p_target_given_do_exposure_off": self.p_unexposed,
            "absolute_change": self.absolute_change,
            "relative_change": self.relative_change,
            "summary": self.summary,
        }


def effect_report(net: DiscreteBayesNet, exposure: str, target: str,
                  digits: int = 1) -> EffectReport:
    """Contrast P(target | do(exposure on)) vs do(exposure off).

    Both variables must be binary; the second state of each is read as
    the "present" state. Relative change is (p1 - p0) / p1 and is
    undefined when p1 = 0.
    """
    if exposure == target:
        raise DataError("exposure and target must differ")
    for v in (exposure, target):
        if net.cardinality(v) != 2:
            raise DataError(f"{v!r} must be binary for effect reporting "
                            f"(has {net.cardinality(v)} states)")
    off, on = net.states(exposure)
    target_state = net.states(target)[1]
    p1 = intervene(net, Query(target, target_state, interventions={exposure: on}))
    p0 = intervene(net, Query(target, target_state, interventions={exposure: off}))
    absolute = p1 - p0
    relative = (p1 - p0) / p1 if p1 > 0 else None

    def pct(x: float) -> str:
        return f"{round(100 * x, digits):.{digits}f}%"

    direction = "decrease" if absolute >= 0 else "increase"
    if relative is None:
        rel_text = "relative change undefined"
    else:
        rel_text = f"{pct(abs(relative))} relative {direction}"
    summary = (
        f"{target} = {target_state}: {pct(p1)} under do({exposure} = {on}) vs "
        f"{pct(p0)} under do({exposure} = {off}); "
        f"{direction} of {pct(abs(absolute))} ({rel_text})"
    )
    return EffectReport(exposure, target, on, off, target_state,
                        p1, p0, absolute, relative, summary)


# --- serialization ----------------------------------------------------------

def net_to_json(net: DiscreteBayesNet) -> dict:
    nodes = []
    for v in net.variables:
        parents = net.parents(v.name)
        table = net.cpt(v.name).reshape(-1, v.cardinality)
        nodes.append({
            "name": v.name,
            "states": list(v.states),
            "parents": list(parents),
            "cpt": [[float(x) for x in row] for row in table],
        })
    return {"nodes": nodes}


def net_from_json(obj: dict) -> DiscreteBayesNet:
    variables = [Variable(e["name"], tuple(e["states"])) for e in obj["nodes"]]
    edges = [(p, e["name"]) for e in obj["nodes"] for p in e["parents"]]
    dag = Dag([v.name for v in variables], edges)
    cpts = {e["name"]: np.array(e["cpt"], dtype=np.float64) for e in obj["nodes"]}
    return DiscreteBayesNet(dag, variables, cpts)


def write_net_json(net: DiscreteBayesNet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net_to_json(net), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_net_json(path) -> DiscreteBayesNet:
    with open(path, encoding="utf-8") as fh:
        return net_from_json(json.load(fh))
