import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segrnn import oracle
from segrnn.decoder import JOINT, MARGINAL_HYBRID, decode, decode_joint, decode_marginal_hybrid
from segrnn.lattice import ScoreLattice, validate_segmentation
from segrnn.segcrf import log_partition


def random_lattice(seed, T=None, V=None):
    rng = np.random.default_rng(seed)
    T = T or int(rng.integers(1, 7))
    V = V or int(rng.integers(1, 4))
    return ScoreLattice.random(rng, T, int(rng.integers(1, T + 1)), V)


class TestJoint:
    def test_single_frame(self):
        lat = ScoreLattice.from_function(1, 1, 3, lambda k, t, y: [0.2, 1.5, -0.3][y])
        res = decode_joint(lat)
        assert list(res.labels) == [1] and list(res.segmentation) == [0, 1] and res.score == 1.5

    def test_all_equal_scores_take_smallest_start(self):
        # every path ties at score 0; the smaller start wins at each end tag,
        # so the backtrace takes the longest segment the clamp allows
        res = decode_joint(ScoreLattice.from_function(5, 2, 2, lambda k, t, y: 0.0))
        assert list(res.segmentation) == [0, 1, 3, 5]
        assert list(res.labels) == [0, 0, 0]
        assert res.score == 0.0

    def test_ties_favour_smaller_label(self):
        lat = ScoreLattice.from_function(3, 1, 3, lambda k, t, y: 1.0 if y > 0 else 0.5)
        assert list(decode_joint(lat).labels) == [1, 1, 1]

    def test_random_matches_oracle(self):
        lat = ScoreLattice.random(np.random.default_rng(0), 6, 3, 2)
        res = decode_joint(lat)
        labels, seg, score = oracle.brute_argmax(lat)
        assert res.score == score
        assert tuple(res.labels) == labels and tuple(res.segmentation) == tuple(seg)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6))
    def test_oracle_with_ties(self, seed):
        # integer-valued scores make exact ties common
        rng = np.random.default_rng(seed)
        T = int(rng.integers(1, 6))
        V = int(rng.integers(1, 4))
        L = int(rng.integers(1, T + 1))
        table = rng.integers(-1, 2, size=(T + 1, T + 1, V)).astype(float)
        lat = ScoreLattice.from_function(T, L, V, lambda k, t, y: table[k, t, y])
        res = decode_joint(lat)
        labels, seg, score = oracle.brute_argmax(lat)
        assert res.score == score
        assert (tuple(res.labels), tuple(res.segmentation)) == (labels, tuple(seg))

    @pytest.mark.parametrize("seed", range(20))
    def test_valid_and_below_partition(self, seed):
        lat = random_lattice(seed)
        res = decode_joint(lat)
        assert validate_segmentation(res.segmentation, lat.T, lat.L)
        path = sum(lat.score(k, t, y) for (k, t), y in zip(res.segmentation.segments, res.labels))
        assert path == pytest.approx(res.score, abs=1e-12)
        assert res.score <= log_partition(lat).item()

    @pytest.mark.parametrize("seed", range(20))
    def test_label_boost_is_monotone(self, seed):
        lat = random_lattice(seed, V=3)
        before = list(decode_joint(lat).labels).count(1)
        boosted = lat.map_scores(lambda ks, d, block: block + np.array([0.0, 0.7, 0.0]))
        assert list(decode_joint(boosted).labels).count(1) >= before


class TestHybrid:
    def test_single_frame_equals_joint(self):
        lat = ScoreLattice.random(np.random.default_rng(1), 1, 1, 3)
        a, b = decode_joint(lat), decode_marginal_hybrid(lat)
        assert list(a.labels) == list(b.labels) and a.score == b.score

    def test_dominant_label(self):
        rng = np.random.default_rng(2)
        lat = ScoreLattice.random(rng, 6, 3, 3).map_scores(lambda ks, d, block: block + np.array([0.0, 50.0, 0.0]))
        hyb = decode_marginal_hybrid(lat)
        assert set(hyb.labels) == {1} and set(decode_joint(lat).labels) == {1}

    @pytest.mark.parametrize("seed", range(20))
    def test_score_at_least_joint(self, seed):
        lat = random_lattice(seed + 100, T=6)
        assert decode_marginal_hybrid(lat).score >= decode_joint(lat).score

    def test_score_is_sum_over_segmentations(self):
        lat = ScoreLattice.random(np.random.default_rng(3), 5, 3, 2)
        total = [
            sum(max(lat.score(k, t, y) for y in range(2)) for k, t in seg.segments)
            for seg in oracle.enumerate_segmentations(5, 3)
        ]
        m = max(total)
        expected = m + math.log(sum(math.exp(v - m) for v in total))
        assert decode_marginal_hybrid(lat).score == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_segmentation_is_valid(self, seed):
        lat = random_lattice(seed + 200)
        res = decode_marginal_hybrid(lat)
        assert validate_segmentation(res.segmentation, lat.T, lat.L)
        assert res.mode == MARGINAL_HYBRID


@pytest.mark.parametrize("c", [-1.0, 0.5, 3.0])
@pytest.mark.parametrize("mode", [JOINT, MARGINAL_HYBRID])
def test_duration_shift_leaves_output_unchanged(mode, c):
    for seed in range(10):
        lat = random_lattice(seed + 300)
        shifted = lat.map_scores(lambda ks, d, block: block + c * d)
        a, b = decode(lat, mode), decode(shifted, mode)
        assert list(a.labels) == list(b.labels)
        assert list(a.segmentation) == list(b.segmentation)


def test_unknown_mode():
    with pytest.raises(ValueError):
        decode(ScoreLattice.random(np.random.default_rng(0), 2, 2, 2), "beam")
