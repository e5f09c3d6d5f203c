"""Categorical data handling: CSV ingestion, cleaning, imputation, counting.

A :class:`CategoricalDataset` stores rows as a matrix of state indices
(int16) with ``-1`` marking missing cells. Datasets are immutable after
construction; every transformation returns a new dataset.

Cleaning follows a declared pipeline: value rules run in declaration
order against cell labels, then numeric binning converts raw-coded
columns into banded states. Columns may be declared with an explicit
state list (unknown tokens become missing) or as ``raw`` (observed
tokens become the states), which is how columns destined for cleaning
or binning are loaded.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING = -1


class DataError(ValueError):
    """Invalid dataset, schema, or data operation."""


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.states)) != len(self.states):
            raise DataError(f"duplicate states for {self.name!r}")
        if not self.states:
            raise DataError(f"empty state list for {self.name!r}")

    @property
    def cardinality(self) -> int:
        return len(self.states)


class CategoricalDataset:
    """Rows of categorical observations with per-variable state spaces."""

    def __init__(self, variables: Sequence[Variable | tuple], codes: np.ndarray):
        vs = tuple(v if isinstance(v, Variable) else Variable(v[0], tuple(v[1]))
                   for v in variables)
        names = [v.name for v in vs]
        if len(set(names)) != len(names):
            raise DataError("duplicate variable names")
        codes = np.asarray(codes, dtype=np.int16)
        if codes.ndim != 2 or codes.shape[1] != len(vs):
            raise DataError(f"codes shape {codes.shape} does not match "
                            f"{len(vs)} variables")
        for j, v in enumerate(vs):
            col = codes[:, j]
            bad = col[(col != MISSING) & ((col < 0) | (col >= v.cardinality))]
            if bad.size:
                raise DataError(f"out-of-range state index for {v.name!r}")
        self._variables = vs
        self._codes = codes.copy()
        self._codes.setflags(write=False)
        self._index = {v.name: j for j, v in enumerate(vs)}

    @property
    def variables(self) -> tuple[Variable, ...]:
        return self._variables

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self._variables)

    @property
    def codes(self) -> np.ndarray:
        return self._codes

    @property
    def n(self) -> int:
        return self._codes.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self._codes[:, self.index_of(name)]

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise DataError(f"unknown variable {name!r}") from None

    def states(self, name: str) -> tuple[str, ...]:
        return self._variables[self.index_of(name)].states

    def cardinality(self, name: str) -> int:
        return len(self.states(name))

    def cards(self) -> np.ndarray:
        return np.array([v.cardinality for v in self._variables], dtype=np.int64)

    def has_missing(self) -> bool:
        return bool((self._codes == MISSING).any())

    def missing_count(self) -> int:
        return int((self._codes == MISSING).sum())

    def subset_rows(self, rows: np.ndarray) -> "CategoricalDataset":
        return CategoricalDataset(self._variables, self._codes[np.asarray(rows)])

    def reorder(self, names: Sequence[str]) -> "CategoricalDataset":
        """Same data with columns permuted into the given name order."""
        if sorted(names) != sorted(self.variable_names):
            raise DataError("reorder must use exactly the existing variable names")
        idx = [self.index_of(n) for n in names]
        return CategoricalDataset([self._variables[i] for i in idx],
                                  self._codes[:, idx])

    def __repr__(self) -> str:
        return f"CategoricalDataset(n={self.n}, p={len(self._variables)})"


# --- schema -----------------------------------------------------------------

@dataclass(frozen=True)
class Bins:
    """Numeric banding: value v maps to labels[#breaks <= v]."""

    breaks: tuple[float, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if list(self.breaks) != sorted(self.breaks):
            raise DataError("bin breaks must be ascending")
        if len(self.labels) != len(self.breaks) + 1:
            raise DataError("need exactly len(breaks) + 1 bin labels")

    def band(self, value: float) -> str:
        i = 0
        for b in self.breaks:
            if value >= b:
                i += 1
        return self.labels[i]


@dataclass(frozen=True)
class VariableSpec:
    name: str
    states: tuple[str, ...] | None = None
    raw: bool = False

    def __post_init__(self):
        if self.states is None and not self.raw:
            raise DataError(f"variable {self.name!r} needs states or raw=true")


_MATCHER_KEYS = {"equals", "gt", "ge", "lt", "le", "regex"}


@dataclass(frozen=True)
class Rule:
    """One cleaning rule: a match predicate and an action on matching cells."""

    variable: str
    action: str  # set_missing | map_to_state | zero_fill
    match: dict = field(default_factory=dict)
    state: str | None = None
    template: str | None = None

    def __post_init__(self):
        if self.action not in ("set_missing", "map_to_state", "zero_fill"):
            raise DataError(f"unknown cleaning action {self.action!r}")
        unknown = set(self.match) - _MATCHER_KEYS
        if unknown:
            raise DataError(f"unknown matcher keys {sorted(unknown)}")
        if self.action == "map_to_state" and self.state is None and self.template is None:
            raise DataError("map_to_state needs a state or a template")
        if self.action == "zero_fill" and self.state is None:
            raise DataError("zero_fill needs the absence state")
        if self.template is not None and "regex" not in self.match:
            raise DataError("template requires a regex matcher")

    def matches(self, label: str) -> re.Match | bool:
        m = self.match
        if "equals" in m and label != m["equals"]:
            return False
        if "regex" in m:
            hit = re.fullmatch(m["regex"], label)
            if hit is None:
                return False
            numeric_ok = self._numeric_ok(label)
            return hit if numeric_ok else False
        return self._numeric_ok(label)

    def _numeric_ok(self, label: str) -> bool:
        keys = [k for k in ("gt", "ge", "lt", "le") if k in self.match]
        if not keys:
            return True
        try:
            x = float(label)
        except ValueError:
            return False
        ok = True
        for k in keys:
            t = self.match[k]
            ok &= {"gt": x > t, "ge": x >= t, "lt": x < t, "le": x <= t}[k]
        return ok


@dataclass(frozen=True)
class CleaningRules:
    rules: tuple[Rule, ...] = ()
    bins: dict[str, Bins] = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetConfig:
    variables: tuple[VariableSpec, ...]
    cleaning: CleaningRules


def parse_config(obj: dict) -> DatasetConfig:
    """Parse the JSON schema/cleaning config into a :class:`DatasetConfig`."""
    specs = []
    bins: dict[str, Bins] = {}
    for entry in obj.get("variables", ()):
        name = entry["name"]
        if "bins" in entry:
            b = entry["bins"]
            bins[name] = Bins(tuple(float(x) for x in b["breaks"]), tuple(b["labels"]))
            specs.append(VariableSpec(name, raw=True))
        elif entry.get("raw"):
            specs.append(VariableSpec(name, raw=True))
        else:
            specs.append(VariableSpec(name, states=tuple(entry["states"])))
    rules = []
    for i, entry in enumerate(obj.get("cleaning", ())):
        try:
            rules.append(Rule(
                variable=entry["variable"],
                action=entry["action"],
                match=dict(entry.get("match", {})),
                state=entry.get("state"),
                template=entry.get("template"),
            ))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed cleaning rule #{i}: {entry!r}") from exc
    known = {s.name for s in specs}
    for r in rules:
        if r.variable not in known:
            raise DataError(f"cleaning rule references unknown variable {r.variable!r}")
    return DatasetConfig(tuple(specs), CleaningRules(tuple(rules), bins))


def load_config(path) -> DatasetConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(json.load(fh))


def config_to_json(ds: CategoricalDataset) -> dict:
    """Schema dict (explicit states, no cleaning) describing a dataset."""
    return {"variables": [{"name": v.name, "states": list(v.states)}
                          for v in ds.variables]}


# --- loading ----------------------------------------------------------------

def load_csv(path, schema: Sequence[VariableSpec]) -> CategoricalDataset:
    """Read a CSV into a dataset under the declared schema.

    Columns with explicit states map unknown tokens (and empty cells) to
    missing. ``raw`` columns take their observed tokens, sorted, as the
    state list; empty cells are missing. Undeclared CSV columns are
    ignored; declared-but-absent columns raise.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        rows = list(reader)
    col_of = {name: i for i, name in enumerate(header)}
    for spec in schema:
        if spec.name not in col_of:
            raise DataError(f"declared column {spec.name!r} absent from header")

    variables: list[Variable] = []
    columns: list[np.ndarray] = []
    for spec in schema:
        tokens = [row[col_of[spec.name]] if col_of[spec.name] < len(row) else ""
                  for row in rows]
        if spec.raw:
            states = tuple(sorted({t for t in tokens if t != ""}))
            if not states:
                raise DataError(f"raw column {spec.name!r} has no non-empty values")
        else:
            states = spec.states
        lookup = {s: i for i, s in enumerate(states)}
        codes = np.array([lookup.get(t, MISSING) for t in tokens], dtype=np.int16)
        variables.append(Variable(spec.name, states))
        columns.append(codes)
    if not rows:
        raise DataError(f"no data rows in {path}")
    return CategoricalDataset(variables, np.stack(columns, axis=1))


def load_dataset(csv_path, config: DatasetConfig) -> CategoricalDataset:
    """Load and clean in one step (the CLI entry path)."""
    return apply_cleaning(load_csv(csv_path, config.variables), config.cleaning)


# --- cleaning ---------------------------------------------------------------

def apply_cleaning(d: CategoricalDataset, rules: CleaningRules) -> CategoricalDataset:
    """Apply value rules in declaration order, then numeric binning.

    ``map_to_state`` may introduce its target state; variables that had a
    mapping rule applied are compacted afterwards so replaced labels do
    not linger as learnable states. Binning is skipped for columns whose
    states already equal the band labels, making the whole pass
    idempotent.
    """
    variables = list(d.variables)
    codes = np.array(d.codes, dtype=np.int16)
    mapped_vars: set[str] = set()

    for rule in rules.rules:
        j = d.index_of(rule.variable)
        var = variables[j]
        col = codes[:, j]
        if rule.action == "zero_fill":
            states, idx = _ensure_state(var.states, rule.state)
            if states is not var.states:
                variables[j] = Variable(var.name, states)
            col[col == MISSING] = idx
            continue
        # Label-matching actions: evaluate each current state once.
        for s_idx, label in enumerate(variables[j].states):
            hit = rule.matches(label)
            if not hit:
                continue
            if rule.action == "set_missing":
                col[col == s_idx] = MISSING
            else:  # map_to_state
                if rule.template is not None and isinstance(hit, re.Match):
                    target = hit.expand(rule.template)
                else:
                    target = rule.state
                states, t_idx = _ensure_state(variables[j].states, target)
                if states is not variables[j].states:
                    variables[j] = Variable(var.name, states)
                col[col == s_idx] = t_idx
                mapped_vars.add(var.name)

    for j, var in enumerate(variables):
        b = rules.bins.get(var.name)
        if b is None or var.states == b.labels:
            continue
        remap = np.full(len(var.states), MISSING, dtype=np.int16)
        for s_idx, label in enumerate(var.states):
            try:
                remap[s_idx] = b.labels.index(b.band(float(label)))
            except ValueError:
                remap[s_idx] = MISSING
        col = codes[:, j]
        ok = col != MISSING
        col[ok] = remap[col[ok]]
        variables[j] = Variable(var.name, b.labels)

    out = CategoricalDataset(variables, codes)
    if mapped_vars:
        out = _drop_unused_states(out, mapped_vars)
    return out


def _ensure_state(states: tuple[str, ...], state: str) -> tuple[tuple[str, ...], int]:
    if state in states:
        return states, states.index(state)
    return states + (state,), len(states)


def _drop_unused_states(d: CategoricalDataset, names: set[str]) -> CategoricalDataset:
    variables = list(d.variables)
    codes = np.array(d.codes, dtype=np.int16)
    for name in sorted(names):
        j = d.index_of(name)
        col = codes[:, j]
        used = sorted(set(int(c) for c in col if c != MISSING))
        keep = [i for i in range(len(variables[j].states)) if i in used]
        if len(keep) == len(variables[j].states):
            continue
        remap = np.full(len(variables[j].states), MISSING, dtype=np.int16)
        for new, old in enumerate(keep):
            remap[old] = new
        ok = col != MISSING
        col[ok] = remap[col[ok]]
        variables[j] = Variable(name, tuple(variables[j].states[i] for i in keep))
    return CategoricalDataset(variables, codes)


# --- imputation -------------------------------------------------------------

def impute(d: CategoricalDataset, method: str = "listwise_delete") -> CategoricalDataset:
    """Remove all missingness by row deletion or column-mode replacement.

    ``listwise_delete`` drops any row containing a missing cell;
    ``column_mode`` replaces missing cells with the column's most
    frequent state, ties broken by lexicographically smallest state name.
    """
    if method not in ("listwise_delete", "column_mode"):
        raise DataError(f"unknown imputation method {method!r}")
    if not d.has_missing():
        return d
    if method == "listwise_delete":
        keep = ~(d.codes == MISSING).any(axis=1)
        if not keep.any():
            raise DataError("listwise deletion removed every row")
        return d.subset_rows(np.flatnonzero(keep))
    codes = np.array(d.codes, dtype=np.int16)
    for j, var in enumerate(d.variables):
        col = codes[:, j]
        miss = col == MISSING
        if not miss.any():
            continue
        observed = col[~miss]
        if observed.size == 0:
            raise DataError(f"column {var.name!r} entirely missing; mode undefined")
        freq = np.bincount(observed, minlength=var.cardinality)
        top = freq.max()
        best = min((var.states[i] for i in range(var.cardinality) if freq[i] == top))
        col[miss] = var.states.index(best)
    return CategoricalDataset(d.variables, codes)


# --- counting ---------------------------------------------------------------

def counts(d: CategoricalDataset, target: str,
           conditioning: Sequence[str] = ()) -> np.ndarray:
    """Joint frequency table with axes ``[target, *conditioning]``."""
    conditioning = list(conditioning)
    if target in conditioning:
        raise DataError(f"target {target!r} cannot appear in its own conditioning set")
    if len(set(conditioning)) != len(conditioning):
        raise DataError("duplicate conditioning variables")
    names = [target] + conditioning
    cols = [d.index_of(n) for n in names]
    sub = d.codes[:, cols]
    if (sub == MISSING).any():
        bad = [names[j] for j in range(len(names)) if (sub[:, j] == MISSING).any()]
        raise DataError(f"missing data present in {bad}; impute first")
    dims = tuple(d.cardinality(n) for n in names)
    flat = np.ravel_multi_index(tuple(sub[:, j] for j in range(len(names))), dims)
    return np.bincount(flat, minlength=int(np.prod(dims))).reshape(dims)


# --- folds ------------------------------------------------------------------

def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Deterministic index partition into k near-equal test folds."""
    if k < 2 or k > n:
        raise DataError(f"k={k} out of range for n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, k)]


def kfold_split(d: CategoricalDataset, k: int, seed: int = 0
                ) -> list[tuple[CategoricalDataset, CategoricalDataset]]:
    """Train/test dataset pairs for k-fold cross-validation."""
    folds = kfold_indices(d.n, k, seed)
    out = []
    mask = np.ones(d.n, dtype=bool)
    for test_idx in folds:
        mask[:] = True
        mask[test_idx] = False
        out.append((d.subset_rows(np.flatnonzero(mask)), d.subset_rows(test_idx)))
    return out


def write_csv(d: CategoricalDataset, path) -> None:
    """Write a dataset back out as labeled CSV (missing cells empty)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(d.variable_names)
        labels = [v.states for v in d.variables]
        for row in d.codes:
            writer.writerow(["" if c == MISSING else labels[j][c]
                             for j, c in enumerate(row)])
