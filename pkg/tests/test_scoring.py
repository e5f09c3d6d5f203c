import math

import numpy as np
import pytest

from causalbn.dataset import CategoricalDataset, DataError
from causalbn.graph import Dag
from causalbn.scoring import (
    CiTestResult,
    LocalScoreCache,
    bic,
    ci_test,
    free_parameters,
    local_bic,
    log_likelihood,
)

from .oracles import equivalence_classes


def binary_dataset(columns: dict[str, list[int]]) -> CategoricalDataset:
    names = list(columns)
    codes = np.array([columns[n] for n in names], dtype=np.int16).T
    return CategoricalDataset([(n, ["0", "1"]) for n in names], codes)


def brute_log_likelihood(g: Dag, d: CategoricalDataset) -> float:
    """Row-by-row plain-Python LL for cross-checking."""
    total = 0.0
    rows = d.codes
    for node in g.nodes:
        j = d.index_of(node)
        ps = sorted(g.parents(node))
        pj = [d.index_of(p) for p in ps]
        for row in rows:
            config = tuple(row[k] for k in pj)
            same_config = [r for r in rows if tuple(r[k] for k in pj) == config]
            num = sum(1 for r in same_config if r[j] == row[j])
            total += math.log(num / len(same_config))
    return total


class TestFreeParameters:
    def setup_method(self):
        self.d = CategoricalDataset(
            [("A", ["0", "1"]), ("B", ["0", "1"]), ("C", ["0", "1"]),
             ("T", ["a", "b", "c"]), ("F", ["w", "x", "y", "z"])],
            np.zeros((4, 5), dtype=np.int16),
        )

    def test_parentless_binary(self):
        assert free_parameters(Dag(["A"], []), self.d) == 1

    def test_two_binary_parents(self):
        g = Dag(["A", "B", "C"], [("A", "C"), ("B", "C")])
        # C: 1*2*2 = 4, A: 1, B: 1
        assert free_parameters(g, self.d) == 6

    def test_three_state_child_four_state_parent(self):
        g = Dag(["F", "T"], [("F", "T")])
        # T: (3-1)*4 = 8, F: 3
        assert free_parameters(g, self.d) == 11

    def test_unknown_node(self):
        with pytest.raises(DataError):
            free_parameters(Dag(["Z"]), self.d)


class TestLogLikelihood:
    def test_balanced_binary(self):
        d = binary_dataset({"X": [0] * 5 + [1] * 5})
        ll = log_likelihood(Dag(["X"]), d)
        assert ll == pytest.approx(10 * math.log(0.5), abs=1e-12)

    def test_deterministic_column_is_zero(self):
        d = binary_dataset({"X": [0] * 8})
        assert log_likelihood(Dag(["X"]), d) == 0.0

    def test_adding_edge_never_decreases_ll(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            cols = {n: rng.integers(0, 2, 40).tolist() for n in "ABC"}
            d = binary_dataset(cols)
            base = Dag("ABC")
            for u, v in [("A", "B"), ("B", "C"), ("A", "C")]:
                assert log_likelihood(base.with_edge(u, v), d) >= log_likelihood(base, d) - 1e-9

    def test_matches_row_by_row_oracle(self):
        rng = np.random.default_rng(11)
        d = binary_dataset({n: rng.integers(0, 2, 12).tolist() for n in "AB"})
        g = Dag("AB", [("A", "B")])
        assert log_likelihood(g, d) == pytest.approx(brute_log_likelihood(g, d), abs=1e-9)


class TestBic:
    def test_hand_computed_value(self):
        d = binary_dataset({"X": [0] * 5 + [1] * 5})
        want = 10 * math.log(0.5) - 0.5 * math.log(10)
        assert bic(Dag(["X"]), d) == pytest.approx(want, abs=1e-9)
        assert bic(Dag(["X"]), d) == pytest.approx(-8.0828, abs=1e-4)

    def test_empty_graph_wins_on_independent_data(self):
        rng = np.random.default_rng(0)
        d = binary_dataset({n: rng.integers(0, 2, 4000).tolist() for n in "ABC"})
        from .oracles import all_dags

        empty = bic(Dag("ABC"), d)
        assert all(bic(Dag("ABC", e), d) <= empty + 1e-9 for e in all_dags(tuple("ABC")))

    def test_decomposes_into_local_scores(self):
        rng = np.random.default_rng(3)
        d = binary_dataset({n: rng.integers(0, 2, 100).tolist() for n in "ABCD"})
        g = Dag("ABCD", [("A", "B"), ("B", "C"), ("A", "C")])
        total = sum(local_bic(n, sorted(g.parents(n)), d) for n in g.nodes)
        assert bic(g, d) == pytest.approx(total, abs=1e-12)

    def test_score_equivalence_across_markov_classes(self):
        rng = np.random.default_rng(9)
        nodes = ("A", "B", "C")
        classes = equivalence_classes(nodes)
        for trial in range(10):
            d = binary_dataset({n: rng.integers(0, 2, 60).tolist() for n in nodes})
            for members in classes:
                scores = {round(bic(Dag(nodes, m), d), 9) for m in members}
                assert len(scores) == 1

    def test_irrelevant_parent_lowers_local_bic(self):
        rng = np.random.default_rng(21)
        d = binary_dataset({n: rng.integers(0, 2, 2000).tolist() for n in "AB"})
        assert local_bic("A", ["B"], d) < local_bic("A", [], d)


class TestCache:
    def test_hit_returns_identical_value(self):
        rng = np.random.default_rng(2)
        d = binary_dataset({n: rng.integers(0, 2, 50).tolist() for n in "AB"})
        cache = LocalScoreCache(d)
        first = cache.local_bic("A", ["B"])
        second = cache.local_bic("A", ("B",))
        assert first == second
        assert cache.hits == 1 and cache.misses == 1

    def test_key_canonicalization(self):
        rng = np.random.default_rng(2)
        d = binary_dataset({n: rng.integers(0, 2, 50).tolist() for n in "ABC"})
        cache = LocalScoreCache(d)
        cache.local_bic("A", ["C", "B"])
        cache.local_bic("A", ["B", "C"])
        assert len(cache) == 1

    def test_cached_equals_recomputed(self):
        rng = np.random.default_rng(4)
        d = binary_dataset({n: rng.integers(0, 2, 80).tolist() for n in "ABC"})
        cache = LocalScoreCache(d)
        assert cache.local_bic("B", ["A"]) == local_bic("B", ["A"], d)


class TestCiTest:
    def test_exact_proportionality(self):
        cols = {"X": [0] * 50 + [1] * 50, "Y": ([0] * 25 + [1] * 25) * 2}
        r = ci_test("X", "Y", [], binary_dataset(cols))
        assert r.statistic == 0.0
        assert r.p_value == 1.0
        assert r.independent

    def test_identical_variables(self):
        bits = ([0] * 500 + [1] * 500)
        r = ci_test("X", "Y", [], binary_dataset({"X": bits, "Y": bits}))
        assert r.statistic == pytest.approx(2 * 1000 * math.log(2), rel=1e-12)
        assert not r.independent

    def test_conditionally_independent_given_z(self):
        # x and y deterministic copies of z: dependent marginally,
        # independent given z.
        z = [0] * 400 + [1] * 400
        d = binary_dataset({"X": z, "Y": z, "Z": z})
        marginal = ci_test("X", "Y", [], d)
        assert not marginal.independent
        conditional = ci_test("X", "Y", ["Z"], d)
        assert conditional.statistic == 0.0
        assert conditional.independent

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        d = binary_dataset({n: rng.integers(0, 2, 300).tolist() for n in "XYZ"})
        a = ci_test("X", "Y", ["Z"], d)
        b = ci_test("Y", "X", ["Z"], d)
        assert a.statistic == pytest.approx(b.statistic, rel=1e-12)
        assert a.dof == b.dof
        assert a.p_value == b.p_value

    def test_degenerate_variable_flagged(self):
        d = binary_dataset({"X": [0] * 10, "Y": [0, 1] * 5})
        r = ci_test("X", "Y", [], d)
        assert r.degenerate and r.independent and r.statistic == 0.0

    def test_dof(self):
        d = CategoricalDataset(
            [("X", ["0", "1"]), ("Y", ["a", "b", "c"]), ("Z", ["0", "1"])],
            np.zeros((10, 3), dtype=np.int16) + np.array([0, 0, 0], dtype=np.int16),
        )
        # degenerate but dof still computed from declared cards
        r = ci_test("X", "Y", ["Z"], d)
        assert r.dof == (2 - 1) * (3 - 1) * 2

    def test_statistic_nonnegative_p_in_range(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            d = binary_dataset({n: rng.integers(0, 2, 100).tolist() for n in "XYZW"})
            r = ci_test("X", "Y", ["Z", "W"], d)
            assert r.statistic >= 0.0
            assert 0.0 <= r.p_value <= 1.0

    def test_rejects_bad_arguments(self):
        d = binary_dataset({"X": [0, 1], "Y": [0, 1]})
        with pytest.raises(DataError):
            ci_test("X", "X", [], d)
        with pytest.raises(DataError):
            ci_test("X", "Y", ["X"], d)
