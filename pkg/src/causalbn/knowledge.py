"""Knowledge-based learning constraints.

Required directed edges, forbidden directed edges, temporal tiers
(later-tier variables cannot cause earlier-tier variables; a tier may
also forbid edges among its own members), and orientation preferences
used by ensemble tie-breaking. Variables not assigned to any tier are
treated as one final implicit tier with internal edges allowed.

A worked example file covering a critical-care risk-factor study ships
with the package; see :func:`example_constraints_path`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from typing import Iterable, Sequence

Edge = tuple[str, str]


class ConstraintError(ValueError):
    """Malformed or contradictory knowledge constraints."""


@dataclass(frozen=True)
class Tier:
    level: int
    variables: frozenset[str]
    intra_tier_edges: bool = True


@dataclass(frozen=True)
class KnowledgeConstraints:
    required: frozenset[Edge] = frozenset()
    forbidden: frozenset[Edge] = frozenset()
    tiers: tuple[Tier, ...] = ()
    orientation_preferences: dict[frozenset, Edge] = field(default_factory=dict)

    def __post_init__(self):
        overlap = self.required & self.forbidden
        if overlap:
            raise ConstraintError(f"edges both required and forbidden: {sorted(overlap)}")
        cycle = _required_cycle(self.required)
        if cycle:
            raise ConstraintError(f"required edges contain a cycle through {cycle}")
        seen: set[str] = set()
        for t in self.tiers:
            dup = t.variables & seen
            if dup:
                raise ConstraintError(f"variables in multiple tiers: {sorted(dup)}")
            seen |= t.variables
        for pair, pref in self.orientation_preferences.items():
            if set(pref) != set(pair):
                raise ConstraintError(f"preference {pref} does not match pair {sorted(pair)}")

    @classmethod
    def empty(cls) -> "KnowledgeConstraints":
        return cls()

    def tier_level(self, variable: str) -> int | None:
        for t in self.tiers:
            if variable in t.variables:
                return t.level
        return None

    def preferred_direction(self, a: str, b: str) -> Edge | None:
        return self.orientation_preferences.get(frozenset((a, b)))


def _required_cycle(required: Iterable[Edge]) -> list[str] | None:
    children: dict[str, list[str]] = {}
    nodes: set[str] = set()
    for u, v in required:
        children.setdefault(u, []).append(v)
        nodes |= {u, v}
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {n: WHITE for n in nodes}

    def visit(n: str, stack: list[str]) -> list[str] | None:
        colour[n] = GREY
        stack.append(n)
        for c in children.get(n, ()):
            if colour[c] == GREY:
                return stack[stack.index(c):]
            if colour[c] == WHITE:
                hit = visit(c, stack)
                if hit:
                    return hit
        stack.pop()
        colour[n] = BLACK
        return None

    for n in sorted(nodes):
        if colour[n] == WHITE:
            hit = visit(n, [])
            if hit:
                return hit
    return None


def expand_tiers(k: KnowledgeConstraints, all_variables: Sequence[str]) -> frozenset[Edge]:
    """Tier-implied forbidden edges, unioned with the explicit ones.

    Forbids every edge from a higher tier (untiered counts as highest)
    into a lower tier, and all edges inside tiers that disallow them.
    """
    known = set(all_variables)
    for t in k.tiers:
        unknown = t.variables - known
        if unknown:
            raise ConstraintError(f"tier {t.level} references unknown variables: "
                                  f"{sorted(unknown)}")
    out: set[Edge] = set(k.forbidden)
    levels = {v: k.tier_level(v) for v in all_variables}
    top = max((t.level for t in k.tiers), default=0) + 1
    rank = {v: (levels[v] if levels[v] is not None else top) for v in all_variables}
    for u in all_variables:
        for v in all_variables:
            if u != v and rank[u] > rank[v]:
                out.add((u, v))
    for t in k.tiers:
        if not t.intra_tier_edges:
            for a, b in combinations(sorted(t.variables), 2):
                out.add((a, b))
                out.add((b, a))
    return frozenset(out)


def validate(k: KnowledgeConstraints, all_variables: Sequence[str]) -> list[str]:
    """Diagnostics for a constraint set against a variable roster.

    Returns an empty list when everything is consistent; otherwise one
    message per problem (unknown variables, required/forbidden
    contradictions including tier-induced ones, required-set cycles).
    """
    known = set(all_variables)
    problems: list[str] = []

    referenced: set[str] = set()
    for u, v in sorted(k.required | k.forbidden):
        referenced |= {u, v}
    for t in k.tiers:
        referenced |= t.variables
    for pair in k.orientation_preferences:
        referenced |= set(pair)
    unknown = sorted(referenced - known)
    if unknown:
        problems.append(f"unknown variables: {unknown}")

    direct = k.required & k.forbidden
    for u, v in sorted(direct):
        problems.append(f"edge {u} -> {v} both required and forbidden")

    if not unknown:
        tier_forbidden = expand_tiers(k, list(all_variables))
        for u, v in sorted(k.required & tier_forbidden):
            if (u, v) not in direct:
                problems.append(f"required edge {u} -> {v} forbidden by tiers")

    cycle = _required_cycle(k.required)
    if cycle:
        problems.append(f"required edges form a cycle: {' -> '.join(cycle)}")
    return problems


def constraints_from_json(obj: dict) -> KnowledgeConstraints:
    def read_edge(entry, where: str) -> Edge:
        try:
            return (str(entry["from"]), str(entry["to"]))
        except (KeyError, TypeError):
            raise ConstraintError(f"malformed {where} entry: {entry!r}") from None

    required = frozenset(read_edge(e, "required") for e in obj.get("required", ()))
    forbidden = frozenset(read_edge(e, "forbidden") for e in obj.get("forbidden", ()))
    tiers = []
    for entry in obj.get("tiers", ()):
        try:
            tiers.append(Tier(
                level=int(entry["level"]),
                variables=frozenset(str(v) for v in entry["variables"]),
                intra_tier_edges=bool(entry.get("intra_tier_edges", True)),
            ))
        except (KeyError, TypeError):
            raise ConstraintError(f"malformed tier entry: {entry!r}") from None
    tiers.sort(key=lambda t: t.level)
    prefs: dict[frozenset, Edge] = {}
    for entry in obj.get("orientation_preferences", ()):
        try:
            a, b, prefer = str(entry["a"]), str(entry["b"]), entry["prefer"]
        except (KeyError, TypeError):
            raise ConstraintError(f"malformed preference entry: {entry!r}") from None
        if prefer == "a->b":
            prefs[frozenset((a, b))] = (a, b)
        elif prefer == "b->a":
            prefs[frozenset((a, b))] = (b, a)
        else:
            raise ConstraintError(f"preference must be 'a->b' or 'b->a', got {prefer!r}")
    return KnowledgeConstraints(required, forbidden, tuple(tiers), prefs)


def load_constraints(path) -> KnowledgeConstraints:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConstraintError(f"constraint file {path} is not valid JSON: {exc}") from exc
    return constraints_from_json(obj)


def constraints_to_json(k: KnowledgeConstraints) -> dict:
    out: dict = {
        "required": [{"from": u, "to": v} for u, v in sorted(k.required)],
        "forbidden": [{"from": u, "to": v} for u, v in sorted(k.forbidden)],
        "tiers": [{"level": t.level, "variables": sorted(t.variables),
                   "intra_tier_edges": t.intra_tier_edges} for t in k.tiers],
    }
    if k.orientation_preferences:
        out["orientation_preferences"] = [
            {"a": pref[0], "b": pref[1], "prefer": "a->b"}
            for pref in sorted(k.orientation_preferences.values())
        ]
    return out


def example_constraints_path():
    """Path of the bundled critical-care constraint example."""
    return resources.files("causalbn.data") / "sepsis_constraints.json"


def load_example_constraints() -> KnowledgeConstraints:
    with resources.files("causalbn.data").joinpath("sepsis_constraints.json").open() as fh:
        return constraints_from_json(json.load(fh))
