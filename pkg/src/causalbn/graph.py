"""Graph algebra for causal discovery.

Directed acyclic graphs (:class:`Dag`) and partially directed graphs
(:class:`Pdag`) over named variables, plus the operations every learner
needs: CPDAG conversion via v-structure detection and Meek-rule closure,
structural Hamming distance over pair statuses, fragment counting,
deterministic consistent extension, and DOT / JSON export.

Graphs are immutable values once constructed; all "mutations" return new
graphs. :class:`PdagBuilder` is the single-owner mutable structure used
internally during orientation.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator


class GraphError(ValueError):
    """Invalid graph construction or graph-operation argument."""


class CycleError(GraphError):
    """An edge set that should be acyclic contains a directed cycle."""


Edge = tuple[str, str]


def _check_nodes(nodes: Iterable[str]) -> tuple[str, ...]:
    names = tuple(nodes)
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise GraphError(f"duplicate node names: {dupes}")
    return names


class Dag:
    """Directed acyclic graph over named nodes.

    Invariants enforced at construction: unique node names, no self-loops,
    no directed cycles. Instances are immutable; ``with_edge`` /
    ``without_edge`` / ``with_reversed_edge`` return new graphs and raise
    :class:`CycleError` if the result would be cyclic.
    """

    __slots__ = ("_nodes", "_edges", "_parents", "_children", "_index")

    def __init__(self, nodes: Iterable[str], edges: Iterable[Edge] = ()):
        self._nodes = _check_nodes(nodes)
        self._index = {n: i for i, n in enumerate(self._nodes)}
        edge_set = frozenset((str(u), str(v)) for u, v in edges)
        for u, v in edge_set:
            if u == v:
                raise GraphError(f"self-loop on {u!r}")
            if u not in self._index or v not in self._index:
                missing = sorted({u, v} - set(self._nodes))
                raise GraphError(f"edge endpoints not in node set: {missing}")
        self._edges = edge_set
        self._parents: dict[str, frozenset[str]] = {n: frozenset() for n in self._nodes}
        self._children: dict[str, frozenset[str]] = {n: frozenset() for n in self._nodes}
        par: dict[str, set[str]] = {n: set() for n in self._nodes}
        chl: dict[str, set[str]] = {n: set() for n in self._nodes}
        for u, v in edge_set:
            par[v].add(u)
            chl[u].add(v)
        self._parents = {n: frozenset(par[n]) for n in self._nodes}
        self._children = {n: frozenset(chl[n]) for n in self._nodes}
        # Raises CycleError if the edge set is cyclic.
        topological_sort(self)

    @property
    def nodes(self) -> tuple[str, ...]:
        return self._nodes

    @property
    def edges(self) -> frozenset[Edge]:
        return self._edges

    def parents(self, node: str) -> frozenset[str]:
        return self._parents[node]

    def children(self, node: str) -> frozenset[str]:
        return self._children[node]

    def has_edge(self, u: str, v: str) -> bool:
        return (u, v) in self._edges

    def adjacent(self, u: str, v: str) -> bool:
        return (u, v) in self._edges or (v, u) in self._edges

    def with_edge(self, u: str, v: str) -> "Dag":
        return Dag(self._nodes, self._edges | {(u, v)})

    def without_edge(self, u: str, v: str) -> "Dag":
        return Dag(self._nodes, self._edges - {(u, v)})

    def with_reversed_edge(self, u: str, v: str) -> "Dag":
        if (u, v) not in self._edges:
            raise GraphError(f"no edge {u!r} -> {v!r} to reverse")
        return Dag(self._nodes, (self._edges - {(u, v)}) | {(v, u)})

    def as_pdag(self) -> "Pdag":
        """View this DAG as a fully directed PDAG."""
        return Pdag(self._nodes, directed=self._edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return set(self._nodes) == set(other._nodes) and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((frozenset(self._nodes), self._edges))

    def __repr__(self) -> str:
        return f"Dag(nodes={len(self._nodes)}, edges={len(self._edges)})"


class Pdag:
    """Partially directed graph: directed plus undirected edges.

    A node pair appears in at most one of the two edge sets; undirected
    pairs are stored canonically as ``(min, max)``. No acyclicity
    requirement.
    """

    __slots__ = ("_nodes", "_directed", "_undirected", "_index")

    def __init__(
        self,
        nodes: Iterable[str],
        directed: Iterable[Edge] = (),
        undirected: Iterable[Edge] = (),
    ):
        self._nodes = _check_nodes(nodes)
        self._index = {n: i for i, n in enumerate(self._nodes)}
        d = frozenset((str(u), str(v)) for u, v in directed)
        u_t = frozenset((min(a, b), max(a, b)) for a, b in undirected)
        for a, b in d | u_t:
            if a == b:
                raise GraphError(f"self-loop on {a!r}")
            if a not in self._index or b not in self._index:
                missing = sorted({a, b} - set(self._nodes))
                raise GraphError(f"edge endpoints not in node set: {missing}")
        for a, b in u_t:
            if (a, b) in d or (b, a) in d:
                raise GraphError(f"pair ({a!r}, {b!r}) is both directed and undirected")
        dir_pairs = {(min(a, b), max(a, b)) for a, b in d}
        if len(dir_pairs) != len(d):
            two_cycles = sorted(p for p in dir_pairs
                                if (p[0], p[1]) in d and (p[1], p[0]) in d)
            raise GraphError(f"pair directed both ways: {two_cycles}")
        self._directed = d
        self._undirected = u_t

    @property
    def nodes(self) -> tuple[str, ...]:
        return self._nodes

    @property
    def directed_edges(self) -> frozenset[Edge]:
        return self._directed

    @property
    def undirected_edges(self) -> frozenset[Edge]:
        return self._undirected

    def skeleton_pairs(self) -> frozenset[Edge]:
        """All adjacent pairs as canonical ``(min, max)`` tuples."""
        return frozenset({(min(u, v), max(u, v)) for u, v in self._directed}
                         | self._undirected)

    def adjacent(self, u: str, v: str) -> bool:
        key = (min(u, v), max(u, v))
        return key in self.skeleton_pairs()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pdag):
            return NotImplemented
        return (set(self._nodes) == set(other._nodes)
                and self._directed == other._directed
                and self._undirected == other._undirected)

    def __hash__(self) -> int:
        return hash((frozenset(self._nodes), self._directed, self._undirected))

    def __repr__(self) -> str:
        return (f"Pdag(nodes={len(self._nodes)}, directed={len(self._directed)}, "
                f"undirected={len(self._undirected)})")


def topological_sort(g: Dag) -> list[str]:
    """Order nodes so every parent precedes its children.

    Ties are broken by lexicographic node name, so the result is unique
    and deterministic. Raises :class:`CycleError` on cyclic edge sets
    (unreachable through the public ``Dag`` API, which rejects cycles).
    """
    indeg = {n: 0 for n in g.nodes}
    for _, v in g.edges:
        indeg[v] += 1
    ready = [n for n in g.nodes if indeg[n] == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for c in sorted(g.children(n)):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(g.nodes):
        cyclic = sorted(n for n, d in indeg.items() if d > 0)
        raise CycleError(f"directed cycle through: {cyclic}")
    return order


def _directed_part_has_cycle(nodes: Iterable[str], directed: set[Edge]) -> bool:
    indeg = {n: 0 for n in nodes}
    children: dict[str, list[str]] = {n: [] for n in indeg}
    for u, v in directed:
        indeg[v] += 1
        children[u].append(v)
    stack = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while stack:
        n = stack.pop()
        seen += 1
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    return seen != len(indeg)


class PdagBuilder:
    """Mutable orientation state used while turning skeletons into PDAGs.

    Holds a skeleton with per-pair orientation status and supports
    constraint-aware orienting: ``fixed`` edges can never be flipped and
    ``forbidden`` directions are never produced by :meth:`orient`. Single
    owner; build the immutable :class:`Pdag` with :meth:`build`.
    """

    def __init__(
        self,
        nodes: Iterable[str],
        skeleton: Iterable[Edge],
        forbidden: Iterable[Edge] = (),
        fixed: Iterable[Edge] = (),
    ):
        self.nodes = tuple(nodes)
        self.adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        self.pairs: set[Edge] = set()
        for a, b in skeleton:
            key = (min(a, b), max(a, b))
            self.pairs.add(key)
            self.adj[a].add(b)
            self.adj[b].add(a)
        self.directed: set[Edge] = set()
        self.forbidden = set(forbidden)
        self.fixed: set[Edge] = set()
        self.conflicts: list[str] = []
        for u, v in fixed:
            self.orient(u, v)
            self.fixed.add((u, v))

    def is_adjacent(self, u: str, v: str) -> bool:
        return v in self.adj[u]

    def has_directed(self, u: str, v: str) -> bool:
        return (u, v) in self.directed

    def is_undirected(self, u: str, v: str) -> bool:
        return (v in self.adj[u] and (u, v) not in self.directed
                and (v, u) not in self.directed)

    def orient(self, u: str, v: str) -> bool:
        """Try to orient the pair as ``u -> v``; report whether anything changed.

        Refuses (and records a conflict) when the pair is fixed or already
        directed the other way, or when ``u -> v`` is forbidden.
        """
        if v not in self.adj[u]:
            return False
        if (u, v) in self.directed:
            return False
        if (v, u) in self.directed:
            self.conflicts.append(f"orientation conflict on ({u}, {v})")
            return False
        if (u, v) in self.forbidden:
            self.conflicts.append(f"forbidden orientation {u} -> {v} skipped")
            return False
        self.directed.add((u, v))
        return True

    def orient_v_structures(self, sepsets: dict[Edge, frozenset[str] | None]) -> None:
        """Orient colliders ``x -> z <- y`` for unshielded triples.

        A triple qualifies when x and y are non-adjacent and z is absent
        from their recorded separating set. Pairs without a recorded
        sepset (e.g. removed by constraints, not by tests) are skipped.
        First-found orientation wins on conflict.
        """
        for z in sorted(self.nodes):
            for x, y in combinations(sorted(self.adj[z]), 2):
                if y in self.adj[x]:
                    continue
                sep = sepsets.get((min(x, y), max(x, y)))
                if sep is None:
                    continue
                if z not in sep:
                    self.orient(x, z)
                    self.orient(y, z)

    def force_forbidden_orientations(self) -> None:
        """Direct every undirected pair that has one forbidden direction."""
        for a, b in sorted(self.pairs):
            if not self.is_undirected(a, b):
                continue
            if (a, b) in self.forbidden and (b, a) not in self.forbidden:
                self.orient(b, a)
            elif (b, a) in self.forbidden and (a, b) not in self.forbidden:
                self.orient(a, b)

    # Meek's orientation rules. Each returns True if it oriented an edge.

    def _rule1(self) -> bool:
        # a -> b and b - c with a, c non-adjacent  =>  b -> c
        changed = False
        for a, b in sorted(self.directed):
            for c in sorted(self.adj[b]):
                if c == a or c in self.adj[a]:
                    continue
                if self.is_undirected(b, c):
                    changed |= self.orient(b, c)
        return changed

    def _rule2(self) -> bool:
        # a -> b -> c and a - c  =>  a -> c
        changed = False
        for a, b in sorted(self.directed):
            for c in sorted(self.adj[b]):
                if (b, c) in self.directed and self.is_undirected(a, c):
                    changed |= self.orient(a, c)
        return changed

    def _rule3(self) -> bool:
        # a - b, a - c, b -> d, c -> d, a - d, b and c non-adjacent  =>  a -> d
        changed = False
        for a in sorted(self.nodes):
            und = [n for n in sorted(self.adj[a]) if self.is_undirected(a, n)]
            for d in und:
                ins = [p for p in und if p != d and (p, d) in self.directed]
                for b, c in combinations(ins, 2):
                    if c not in self.adj[b]:
                        changed |= self.orient(a, d)
                        break
        return changed

    def _rule4(self) -> bool:
        # a - b with chains a - k -> l and l -> b, where k, b non-adjacent
        # and a, l adjacent  =>  a -> b. Only fires under background
        # knowledge (fixed/forbidden edges); never from v-structures alone.
        changed = False
        for a in sorted(self.nodes):
            und = [n for n in sorted(self.adj[a]) if self.is_undirected(a, n)]
            for b in und:
                found = False
                for k in und:
                    if k == b or k in self.adj[b]:
                        continue
                    for l in sorted(self.adj[k]):
                        if ((k, l) in self.directed and (l, b) in self.directed
                                and l in self.adj[a]):
                            changed |= self.orient(a, b)
                            found = True
                            break
                    if found:
                        break
        return changed

    def meek_closure(self) -> None:
        """Apply Meek rules 1-4 until no rule orients another edge."""
        while self._rule1() | self._rule2() | self._rule3() | self._rule4():
            pass

    def build(self) -> Pdag:
        undirected = [(a, b) for a, b in sorted(self.pairs)
                      if (a, b) not in self.directed and (b, a) not in self.directed]
        return Pdag(self.nodes, directed=self.directed, undirected=undirected)


def to_cpdag(g: Dag) -> Pdag:
    """Completed PDAG of ``g``'s Markov equivalence class.

    Skeleton is preserved; v-structure arms are directed; remaining
    compelled edges are directed by Meek-rule closure; everything else is
    left undirected.
    """
    builder = PdagBuilder(g.nodes, [(u, v) for u, v in g.edges])
    for z in sorted(g.nodes):
        for x, y in combinations(sorted(g.parents(z)), 2):
            if not g.adjacent(x, y):
                builder.orient(x, z)
                builder.orient(y, z)
    builder.meek_closure()
    return builder.build()


_ABSENT = 0
_UNDIRECTED = 1
_FORWARD = 2   # min -> max
_BACKWARD = 3  # max -> min


def _pair_statuses(g: Dag | Pdag) -> dict[Edge, int]:
    p = g.as_pdag() if isinstance(g, Dag) else g
    status: dict[Edge, int] = {}
    for u, v in p.directed_edges:
        key = (min(u, v), max(u, v))
        status[key] = _FORWARD if u < v else _BACKWARD
    for key in p.undirected_edges:
        status[key] = _UNDIRECTED
    return status


def shd(a: Dag | Pdag, b: Dag | Pdag) -> int:
    """Structural Hamming distance: node pairs whose edge status differs.

    Each pair's status is one of absent / undirected / directed either
    way; any difference counts exactly 1. Callers comparing DAGs by
    equivalence class should pass ``to_cpdag`` outputs.
    """
    if set(a.nodes) != set(b.nodes):
        only_a = sorted(set(a.nodes) - set(b.nodes))
        only_b = sorted(set(b.nodes) - set(a.nodes))
        raise GraphError(f"node sets differ: only in first={only_a}, only in second={only_b}")
    sa, sb = _pair_statuses(a), _pair_statuses(b)
    return sum(1 for key in set(sa) | set(sb)
               if sa.get(key, _ABSENT) != sb.get(key, _ABSENT))


def count_fragments(g: Dag | Pdag) -> int:
    """Connected components of the skeleton; isolated nodes count."""
    p = g.as_pdag() if isinstance(g, Dag) else g
    parent = {n: n for n in p.nodes}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in p.skeleton_pairs():
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return len({find(n) for n in p.nodes})


@dataclass(frozen=True)
class Extension:
    """A DAG extension of a PDAG plus whether any orientation was forced."""

    dag: Dag
    forced: bool = False
    dropped_edges: tuple[Edge, ...] = field(default_factory=tuple)


def _break_directed_cycles(nodes: tuple[str, ...], directed: set[Edge]) -> list[Edge]:
    """Drop edges until the directed set is acyclic; return what was dropped.

    Deterministic: while a cycle exists, remove the lexicographically
    smallest edge that lies on some cycle (an edge (u, v) where v still
    reaches u).
    """
    dropped: list[Edge] = []
    while _directed_part_has_cycle(nodes, directed):
        for u, v in sorted(directed):
            if _reaches(v, u, directed):
                directed.discard((u, v))
                dropped.append((u, v))
                break
    return dropped


def _reaches(src: str, dst: str, directed: set[Edge]) -> bool:
    children: dict[str, list[str]] = {}
    for u, v in directed:
        children.setdefault(u, []).append(v)
    stack, seen = [src], {src}
    while stack:
        n = stack.pop()
        if n == dst:
            return True
        for c in children.get(n, ()):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def _ok_orientation(u: str, v: str, directed: set[Edge], skeleton: frozenset[Edge]) -> bool:
    """Neither a directed cycle nor a new v-structure at ``v``."""
    if _reaches(v, u, directed):
        return False
    for w, t in directed:
        if t == v and w != u and (min(w, u), max(w, u)) not in skeleton:
            return False
    return True


def consistent_extension(p: Pdag) -> Extension:
    """Orient a PDAG's undirected edges into a DAG, deterministically.

    Processes unordered pairs in lexicographic order. Each pair is
    oriented the way that creates neither a directed cycle nor a new
    v-structure (lexicographic direction preferred), and the implied
    orientations are propagated by Meek closure before moving on; the
    propagation is what keeps the result inside the input's equivalence
    class whenever the input is a completed PDAG. If some pair cannot be
    oriented consistently, or the input's directed part is itself cyclic,
    the extension falls back to cycle-avoidance only and is flagged
    ``forced``.
    """
    directed: set[Edge] = set(p.directed_edges)
    forced = False
    dropped: list[Edge] = []
    if _directed_part_has_cycle(p.nodes, directed):
        forced = True
        dropped = _break_directed_cycles(p.nodes, directed)

    skeleton = p.skeleton_pairs()
    builder = PdagBuilder(p.nodes, skeleton)
    for u, v in sorted(directed):
        builder.orient(u, v)
    builder.meek_closure()

    stuck = False
    for a, b in sorted(p.undirected_edges):
        if not builder.is_undirected(a, b):
            continue
        if _ok_orientation(a, b, builder.directed, skeleton):
            builder.orient(a, b)
        elif _ok_orientation(b, a, builder.directed, skeleton):
            builder.orient(b, a)
        else:
            stuck = True
            break
        builder.meek_closure()

    if not stuck and not _directed_part_has_cycle(p.nodes, builder.directed):
        oriented = set(builder.directed)
    else:
        # Forced fallback: lexicographic greedy, cycle avoidance only.
        forced = True
        oriented = {(u, v) for u, v in directed}
        for a, b in sorted(p.undirected_edges):
            if (a, b) in oriented or (b, a) in oriented:
                continue
            if not _reaches(b, a, oriented):
                oriented.add((a, b))
            else:
                oriented.add((b, a))

    return Extension(Dag(p.nodes, oriented), forced=forced, dropped_edges=tuple(dropped))


def to_dot(g: Dag | Pdag, highlight: Iterable[Edge] | None = None) -> str:
    """Render as DOT text; undirected edges use ``dir=none``."""
    p = g.as_pdag() if isinstance(g, Dag) else g
    hl = {(u, v) for u, v in highlight or ()} | {(v, u) for u, v in highlight or ()}

    def q(name: str) -> str:
        return '"%s"' % name.replace('"', r"\"")

    lines = ["digraph G {"]
    for n in p.nodes:
        lines.append(f"  {q(n)};")
    for u, v in sorted(p.directed_edges):
        attrs = ["color=red"] if (u, v) in hl else []
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  {q(u)} -> {q(v)}{suffix};")
    for a, b in sorted(p.undirected_edges):
        attrs = ["dir=none"]
        if (a, b) in hl:
            attrs.append("color=red")
        lines.append(f"  {q(a)} -> {q(b)} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_json(g: Dag | Pdag) -> dict:
    """JSON-ready dict: ``{"nodes": [...], "edges": [{from, to, directed}]}``."""
    p = g.as_pdag() if isinstance(g, Dag) else g
    edges = [{"from": u, "to": v, "directed": True} for u, v in sorted(p.directed_edges)]
    edges += [{"from": a, "to": b, "directed": False} for a, b in sorted(p.undirected_edges)]
    return {"nodes": list(p.nodes), "edges": edges}


def pdag_from_json(obj: dict) -> Pdag:
    directed = [(e["from"], e["to"]) for e in obj.get("edges", ()) if e.get("directed", True)]
    undirected = [(e["from"], e["to"]) for e in obj.get("edges", ()) if not e.get("directed", True)]
    return Pdag(obj["nodes"], directed=directed, undirected=undirected)


def dag_from_json(obj: dict) -> Dag:
    undirected = [e for e in obj.get("edges", ()) if not e.get("directed", True)]
    if undirected:
        raise GraphError(f"{len(undirected)} undirected edge(s) in DAG serialization")
    return Dag(obj["nodes"], [(e["from"], e["to"]) for e in obj.get("edges", ())])


def write_graph_json(g: Dag | Pdag, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_json(g), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_dag_json(path) -> Dag:
    with open(path, encoding="utf-8") as fh:
        return dag_from_json(json.load(fh))


def read_pdag_json(path) -> Pdag:
    with open(path, encoding="utf-8") as fh:
        return pdag_from_json(json.load(fh))
