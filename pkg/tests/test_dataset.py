import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causalbn.dataset import (
    MISSING,
    Bins,
    CategoricalDataset,
    CleaningRules,
    DataError,
    Rule,
    Variable,
    VariableSpec,
    apply_cleaning,
    counts,
    impute,
    kfold_indices,
    kfold_split,
    load_csv,
    parse_config,
    write_csv,
)


def make(variables, rows):
    return CategoricalDataset(variables, np.array(rows, dtype=np.int16))


@pytest.fixture
def xy():
    return make([("X", ["0", "1"]), ("Y", ["0", "1"])],
                [[0, 0], [0, 0], [1, 1], [1, 0]])


class TestLoadCsv:
    def test_basic(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("A,B\nyes,0\nno,1\nyes,1\n")
        d = load_csv(f, [VariableSpec("A", ("no", "yes")), VariableSpec("B", ("0", "1"))])
        assert d.n == 3
        assert list(d.column("A")) == [1, 0, 1]

    def test_unknown_token_becomes_missing(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("A\nyes\nunknownvalue\n")
        d = load_csv(f, [VariableSpec("A", ("no", "yes"))])
        assert list(d.column("A")) == [1, MISSING]

    def test_missing_declared_column_errors(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("A\nyes\n")
        with pytest.raises(DataError, match="B"):
            load_csv(f, [VariableSpec("B", ("0", "1"))])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv", [])

    def test_empty_file(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("")
        with pytest.raises(DataError):
            load_csv(f, [])

    def test_raw_column_observes_states(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("Age\n30\n130\n30\n")
        d = load_csv(f, [VariableSpec("Age", raw=True)])
        assert d.states("Age") == ("130", "30")

    def test_undeclared_columns_ignored(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("A,B\n0,1\n")
        d = load_csv(f, [VariableSpec("A", ("0", "1"))])
        assert d.variable_names == ("A",)

    def test_roundtrip_with_write_csv(self, tmp_path, xy):
        f = tmp_path / "out.csv"
        write_csv(xy, f)
        back = load_csv(f, [VariableSpec("X", ("0", "1")), VariableSpec("Y", ("0", "1"))])
        assert np.array_equal(back.codes, xy.codes)


class TestCleaning:
    def test_over_120_set_missing(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("Age\n30\n130\n45\n")
        d = load_csv(f, [VariableSpec("Age", raw=True)])
        rules = CleaningRules((Rule("Age", "set_missing", match={"gt": 120}),))
        out = apply_cleaning(d, rules)
        labels = [None if c == MISSING else out.states("Age")[c] for c in out.column("Age")]
        assert labels == ["30", None, "45"]

    def test_zero_fill_missing(self):
        d = make([("Proc", ["0", "1"])], [[MISSING], [1], [MISSING]])
        out = apply_cleaning(d, CleaningRules((Rule("Proc", "zero_fill", state="0"),)))
        assert list(out.column("Proc")) == [0, 1, 0]
        assert not out.has_missing()

    def test_strip_trailing_marks_maps_state(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("Eth\nA\nA*\nB\n")
        d = load_csv(f, [VariableSpec("Eth", raw=True)])
        rule = Rule("Eth", "map_to_state", match={"regex": r"(\w+)\W+"}, template=r"\1")
        out = apply_cleaning(d, CleaningRules((rule,)))
        assert out.states("Eth") == ("A", "B")
        assert [out.states("Eth")[c] for c in out.column("Eth")] == ["A", "A", "B"]

    def test_binning(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("Age\n10\n45\n90\n")
        d = load_csv(f, [VariableSpec("Age", raw=True)])
        bins = Bins((18.0, 65.0), ("child", "adult", "senior"))
        out = apply_cleaning(d, CleaningRules(bins={"Age": bins}))
        assert out.states("Age") == ("child", "adult", "senior")
        assert [out.states("Age")[c] for c in out.column("Age")] == ["child", "adult", "senior"]

    def test_idempotent_full_pipeline(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("Age,Eth,Proc\n30,A*,1\n130,B,\n77,A,0\n")
        cfg = parse_config({
            "variables": [
                {"name": "Age", "bins": {"breaks": [65], "labels": ["young", "old"]}},
                {"name": "Eth", "raw": True},
                {"name": "Proc", "states": ["0", "1"]},
            ],
            "cleaning": [
                {"variable": "Age", "match": {"gt": 120}, "action": "set_missing"},
                {"variable": "Eth", "match": {"regex": r"(\w+)\W+"},
                 "action": "map_to_state", "template": r"\1"},
                {"variable": "Proc", "action": "zero_fill", "state": "0"},
            ],
        })
        d = load_csv(f, cfg.variables)
        once = apply_cleaning(d, cfg.cleaning)
        twice = apply_cleaning(once, cfg.cleaning)
        assert once.variables == twice.variables
        assert np.array_equal(once.codes, twice.codes)
        assert once.states("Age") == ("young", "old")
        # 130 was blanked before binning
        assert once.column("Age")[1] == MISSING


class TestImpute:
    def test_identity_when_complete(self, xy):
        assert impute(xy, "listwise_delete") is xy

    def test_mode(self):
        d = make([("A", ["A", "B"])], [[0], [0], [1], [MISSING]])
        out = impute(d, "column_mode")
        assert list(out.column("A")) == [0, 0, 1, 0]

    def test_mode_tie_breaks_lexicographically(self):
        d = make([("A", ["b", "a"])], [[0], [1], [MISSING]])
        out = impute(d, "column_mode")
        # counts tied 1-1; "a" is lexicographically smaller = index 1
        assert out.column("A")[2] == 1

    def test_listwise_drops_row(self):
        d = make([("A", ["0", "1"]), ("B", ["0", "1"])],
                 [[0, 0], [MISSING, 1], [1, 1]])
        out = impute(d, "listwise_delete")
        assert out.n == 2

    def test_listwise_empty_errors(self):
        d = make([("A", ["0", "1"])], [[MISSING]])
        with pytest.raises(DataError):
            impute(d, "listwise_delete")


class TestCounts:
    def test_marginal(self):
        d = make([("X", ["0", "1"])], [[0], [0], [1], [1]])
        assert list(counts(d, "X")) == [2, 2]

    def test_self_conditioning_errors(self, xy):
        with pytest.raises(DataError):
            counts(xy, "X", ["X"])

    def test_joint_table(self, xy):
        t = counts(xy, "X", ["Y"])
        assert t.tolist() == [[2, 0], [1, 1]]

    def test_total_equals_n(self, xy):
        assert counts(xy, "X", ["Y"]).sum() == xy.n

    def test_missing_errors(self):
        d = make([("A", ["0", "1"])], [[MISSING]])
        with pytest.raises(DataError):
            counts(d, "A")

    @given(st.integers(0, 2**31 - 1))
    def test_marginalization_property(self, seed):
        rng = np.random.default_rng(seed)
        d = make(
            [("A", ["0", "1"]), ("B", ["x", "y", "z"]), ("C", ["0", "1"])],
            rng.integers(0, [2, 3, 2], size=(30, 3)),
        )
        with_b = counts(d, "A", ["B", "C"])
        without_b = counts(d, "A", ["C"])
        assert np.array_equal(with_b.sum(axis=1), without_b)


class TestKfold:
    def test_ten_fold_of_ten(self):
        d = make([("A", ["0", "1"])], [[i % 2] for i in range(10)])
        pairs = kfold_split(d, 10, seed=1)
        assert len(pairs) == 10
        assert all(te.n == 1 and tr.n == 9 for tr, te in pairs)

    def test_sizes_differ_at_most_one(self):
        sizes = sorted(len(f) for f in kfold_indices(10, 3, seed=0))
        assert sizes == [3, 3, 4]

    def test_partition_exact(self):
        folds = kfold_indices(17, 5, seed=3)
        joined = np.concatenate(folds)
        assert sorted(joined.tolist()) == list(range(17))

    def test_deterministic(self):
        a = kfold_indices(50, 7, seed=42)
        b = kfold_indices(50, 7, seed=42)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_k_out_of_range(self):
        with pytest.raises(DataError):
            kfold_indices(5, 1, seed=0)
        with pytest.raises(DataError):
            kfold_indices(5, 6, seed=0)


class TestDatasetInvariants:
    def test_out_of_range_code_rejected(self):
        with pytest.raises(DataError):
            make([("A", ["0", "1"])], [[2]])

    def test_duplicate_variables_rejected(self):
        with pytest.raises(DataError):
            make([("A", ["0"]), ("A", ["0"])], np.zeros((1, 2)))

    def test_codes_read_only(self, xy):
        with pytest.raises(ValueError):
            xy.codes[0, 0] = 1

    def test_reorder(self, xy):
        r = xy.reorder(["Y", "X"])
        assert r.variable_names == ("Y", "X")
        assert np.array_equal(r.column("X"), xy.column("X"))
