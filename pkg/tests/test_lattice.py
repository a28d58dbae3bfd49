import numpy as np
import pytest
from hypothesis import given, strategies as st

from segrnn.lattice import (
    FrameSequence,
    LabelSequence,
    ScoreLattice,
    Segmentation,
    Vocabulary,
    collapse_labels,
    lattice_entry_count,
    validate_segmentation,
)
from segrnn.oracle import enumerate_segmentations


class TestValidateSegmentation:
    def test_single_segment(self):
        assert validate_segmentation([0, 3], T=3)

    def test_zero_length_segment(self):
        verdict = validate_segmentation([0, 2, 2, 5], T=5)
        assert not verdict
        assert "not strictly increasing" in verdict.reason

    def test_clamp_violation(self):
        verdict = validate_segmentation([0, 2, 5], T=5, L=2)
        assert not verdict
        assert verdict.reason == "segment 2 has duration 3 > L=2"

    @pytest.mark.parametrize(
        "bounds, T, fragment",
        [([1, 3], 3, "first boundary"), ([0, 2], 3, "last boundary"), ([0], 0, "at least two")],
    )
    def test_endpoints(self, bounds, T, fragment):
        verdict = validate_segmentation(bounds, T)
        assert not verdict and fragment in verdict.reason

    def test_segmentation_helpers(self):
        seg = Segmentation([0, 2, 5])
        assert seg.segments == [(0, 2), (2, 5)]
        assert seg.durations == [2, 3]


class TestCollapseLabels:
    a, b, c, x, y = 0, 1, 2, 10, 11

    def test_identity(self):
        assert collapse_labels([0, 1, 0], {0: 0, 1: 1}) == (0, 1, 0)

    def test_merge_adjacent(self):
        m = {self.a: self.x, self.b: self.x, self.c: self.y}
        assert collapse_labels([self.a, self.b, self.c], m, merge_adjacent=True) == (self.x, self.y)

    def test_no_merge(self):
        m = {self.a: self.x, self.b: self.x, self.c: self.y}
        assert collapse_labels([self.a, self.b, self.c], m) == (self.x, self.x, self.y)

    def test_unmapped_index_named(self):
        with pytest.raises(KeyError, match="label index 7"):
            collapse_labels([0, 7], {0: 0})

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=12), st.lists(st.integers(0, 5), min_size=6, max_size=6))
    def test_idempotent_for_idempotent_map(self, seq, raw):
        # force raw into an idempotent map: send each i to a fixed point
        fixed = {i: raw[i] for i in range(6)}
        m = {i: (fixed[i] if fixed[fixed[i]] == fixed[i] else i) for i in range(6)}
        assert all(m[m[i]] == m[i] for i in m)
        once = collapse_labels(seq, m)
        assert collapse_labels(once, m) == once


class TestEntryCount:
    @pytest.mark.parametrize("T, L, V, expected", [(4, 4, 2, 20), (4, 2, 2, 14), (30, 8, 1, 212)])
    def test_examples(self, T, L, V, expected):
        assert lattice_entry_count(T, L, V) == expected

    @given(st.integers(1, 60), st.integers(1, 5))
    def test_unclamped_is_triangular(self, T, V):
        assert lattice_entry_count(T, T, V) == V * T * (T + 1) // 2

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            lattice_entry_count(0, 1, 1)


@pytest.mark.parametrize("T", range(1, 9))
def test_unclamped_segmentation_count(T):
    assert sum(1 for _ in enumerate_segmentations(T)) == 2 ** (T - 1)


class TestTypes:
    def test_vocabulary_bijection(self):
        v = Vocabulary(["a", "b", "c"])
        assert [v.index(t) for t in v.tokens] == [0, 1, 2]
        assert v.decode(v.encode(["c", "a"])) == ["c", "a"]

    @pytest.mark.parametrize("tokens", [[], ["a", "a"], ["a", ""], ["a b"]])
    def test_vocabulary_rejects(self, tokens):
        with pytest.raises(ValueError):
            Vocabulary(tokens)

    def test_label_sequence_bounds(self):
        with pytest.raises(ValueError):
            LabelSequence([], 3)
        with pytest.raises(ValueError):
            LabelSequence([0, 3], 3)
        assert LabelSequence([2, 0], 3).J == 2

    def test_frame_sequence(self):
        fs = FrameSequence(np.zeros((4, 2)))
        assert (fs.T, fs.D) == (4, 2)
        with pytest.raises(ValueError):
            FrameSequence(np.array([[np.nan]]))
        with pytest.raises(ValueError):
            FrameSequence(np.zeros((0, 3)))

    def test_lattice_shape_checks(self):
        rng = np.random.default_rng(0)
        lat = ScoreLattice.random(rng, 4, 2, 2)
        assert lat.num_entries == 14 == len(list(lat.entries()))
        with pytest.raises(ValueError):
            ScoreLattice(4, 2, 2, [np.zeros((4, 2))])
        with pytest.raises(IndexError):
            lat.score(0, 3, 0)

    def test_lattice_from_function_matches_score(self):
        lat = ScoreLattice.from_function(5, 3, 2, lambda k, t, y: 100 * k + 10 * t + y)
        for k, t, y, s in lat.entries():
            assert s == 100 * k + 10 * t + y
