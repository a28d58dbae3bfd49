"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict through the ``verdict`` fixture; the lines
are printed in an "acceptance" section at the end of the pytest run. The
training criteria (9 and 11) run the real CLI on the default synthetic corpus
and take several minutes each.
"""

import json
import math
import time

import numpy as np
import pytest

from helpers import edit_script_distances
from segrnn import autodiff as ad
from segrnn import oracle
from segrnn.cli import main
from segrnn.config import preset
from segrnn.decoder import decode_joint, decode_marginal_hybrid
from segrnn.gradcheck import gradcheck
from segrnn.lattice import LabelSequence, ScoreLattice, lattice_entry_count
from segrnn.model import SegmentalRNN
from segrnn.scoring import edit_distance
from segrnn.segcrf import lattice_nll, log_clamped, log_partition
from segrnn.speedup import measure
from segrnn.synth import SynthConfig, generate, synth_vocab


def oracle_grid(seed: int, count: int = 120):
    """Random lattices over T in 1..6, V in 1..3, L in 1..T with a random J <= T labelling."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        T = int(rng.integers(1, 7))
        V = int(rng.integers(1, 4))
        L = int(rng.integers(1, T + 1))
        lat = ScoreLattice.random(rng, T, L, V)
        J = int(rng.integers(math.ceil(T / L), T + 1))
        yield lat, LabelSequence(rng.integers(0, V, size=J), V)


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300) if b != 0 else abs(a)


def test_1_partition_matches_oracle(verdict):
    start = time.perf_counter()
    worst, n = 0.0, 0
    for lat, _ in oracle_grid(1):
        with ad.no_tape():
            worst = max(worst, rel_err(log_partition(lat).item(), oracle.brute_log_partition(lat)))
        n += 1
    secs = time.perf_counter() - start
    ok = n >= 100 and worst < 1e-9 and secs < 10
    assert verdict(1, ok, f"log_partition vs brute force: {n} instances, max rel err {worst:.2e}, {secs:.1f} s")


def test_2_clamped_matches_oracle(verdict):
    worst, n = 0.0, 0
    for lat, labels in oracle_grid(2):
        with ad.no_tape():
            worst = max(worst, rel_err(log_clamped(lat, labels).item(), oracle.brute_log_clamped(lat, labels)))
        n += 1
    ok = n >= 100 and worst < 1e-9
    assert verdict(2, ok, f"log_clamped vs brute force: {n} instances, max rel err {worst:.2e}")


def test_3_joint_decode_matches_oracle(verdict):
    mismatches, n = [], 0
    rng = np.random.default_rng(3)
    for i, (lat, _) in enumerate(oracle_grid(3)):
        if i % 2:
            # integer scores make ties common, which exercises the tie-break
            table = rng.integers(-1, 2, size=(lat.T + 1, lat.T + 1, lat.V)).astype(float)
            lat = ScoreLattice.from_function(lat.T, lat.L, lat.V, lambda k, t, y: table[k, t, y])
        res = decode_joint(lat)
        labels, seg, score = oracle.brute_argmax(lat)
        if res.score != score or tuple(res.labels) != labels or tuple(res.segmentation) != tuple(seg):
            mismatches.append(i)
        n += 1
    ok = n >= 100 and not mismatches
    assert verdict(3, ok, f"decode_joint vs brute argmax: {n} instances, {len(mismatches)} mismatches (exact score and pair)")


def test_4_gradcheck(verdict):
    start = time.perf_counter()
    results = [gradcheck(seed, size) for size in ("small", "medium") for seed in range(5)]
    secs = time.perf_counter() - start
    worst = max(r.max_error for r in results)
    ok = all(r.passed for r in results) and secs < 120
    assert verdict(4, ok, f"gradcheck small+medium x 5 seeds: max rel err {worst:.2e}, {secs:.1f} s")


def test_5_loss_is_positive(verdict):
    # with one label and a forced labelling the only admissible pair has probability 1,
    # so the instances use V >= 2, where other labellings always carry mass
    rng = np.random.default_rng(5)
    smallest = math.inf
    for _ in range(1000):
        T = int(rng.integers(1, 13))
        V = int(rng.integers(2, 6))
        L = int(rng.integers(1, T + 1))
        lat = ScoreLattice.random(rng, T, L, V, scale=float(rng.uniform(0.1, 5.0)))
        J = int(rng.integers(math.ceil(T / L), T + 1))
        with ad.no_tape():
            smallest = min(smallest, lattice_nll(lat, rng.integers(0, V, size=J)).item())
    assert verdict(5, smallest > 0, f"loss over 1000 random instances: min {smallest:.3e}")


def test_6_clamp_is_noop_when_wide(verdict):
    rng = np.random.default_rng(6)
    differ = 0
    for _ in range(100):
        T = int(rng.integers(1, 16))
        V = int(rng.integers(1, 5))
        blocks = [rng.normal(size=(T - d + 1, V)) for d in range(1, T + 1)]
        with ad.no_tape():
            exact = log_partition(ScoreLattice(T, T, V, [ad.Tensor(b) for b in blocks])).item()
            wide = log_partition(ScoreLattice(T, T + int(rng.integers(1, 50)), V, [ad.Tensor(b) for b in blocks])).item()
        differ += exact != wide
    assert verdict(6, differ == 0, f"L >= T gives bit-identical log Z: {100 - differ}/100 instances")


def test_7_duration_shift_invariance(verdict):
    rng = np.random.default_rng(7)
    worst, changed, n = 0.0, 0, 0
    for _ in range(40):
        T = int(rng.integers(1, 12))
        V = int(rng.integers(1, 4))
        lat = ScoreLattice.random(rng, T, int(rng.integers(1, T + 1)), V)
        for c in (-1.0, 0.5, 3.0):
            shifted = lat.map_scores(lambda ks, d, block: block + c * d)
            with ad.no_tape():
                worst = max(worst, abs(log_partition(shifted).item() - log_partition(lat).item() - c * T))
            for dec in (decode_joint, decode_marginal_hybrid):
                a, b = dec(lat), dec(shifted)
                changed += tuple(a.labels) != tuple(b.labels) or tuple(a.segmentation) != tuple(b.segmentation)
            n += 1
    ok = worst < 1e-9 and changed == 0
    assert verdict(7, ok, f"duration shift c in {{-1, 0.5, 3}}: {n} cases, max |dlogZ - cT| {worst:.1e}, {changed} decoder changes")


def test_8_cold_start_loss(verdict):
    cfg = preset("small").model_config()
    model = SegmentalRNN.init(cfg, synth_vocab(5), 8, seed=0)
    for t in model.params().values():
        t.value = np.zeros(t.shape)
    worst = 0.0
    for _, frames, labels, _ in generate(SynthConfig(num_utterances=20, num_valid=5)):
        T = cfg.encoder.output_length(frames.shape[0])
        L = cfg.clamp_L
        expected = math.log(oracle.count_labeled_segmentations(T, 5, L)) - math.log(oracle.count_segmentations(T, L, len(labels)))
        with ad.no_tape():
            worst = max(worst, abs(model.loss(frames, labels).item() - expected))
    assert verdict(8, worst < 1e-6, f"zero-parameter loss vs analytic counts on 20 utterances: max abs err {worst:.1e}")


def test_10_subsampling_speedup(verdict):
    cfg = preset("small").model
    rows = measure(cfg, T=512, vocab_size=48, repeats=3)
    expected_cells = [lattice_entry_count(math.ceil(512 / 2**n), math.ceil(30 / 2**n), 48) for n in range(3)]
    cells_ok = [r.cells for r in rows] == expected_cells and all(
        r.cell_ratio == expected_cells[0] / c for r, c in zip(rows, expected_cells)
    )
    ok = cells_ok and rows[1].speedup >= 2 and rows[2].speedup >= 6
    detail = ", ".join(f"{r.layers} layers {r.speedup:.2f}x (cells {r.cell_ratio:.2f}x)" for r in rows[1:])
    assert verdict(10, ok, f"T=512 clamp 30 frames: {detail}")


def test_12_per_matches_edit_script_oracle(verdict):
    nodes, dist = edit_script_distances("abc", 6)
    bad = sum(edit_distance(a, b) != dist[i, j] for i, a in enumerate(nodes) for j, b in enumerate(nodes))
    assert verdict(12, bad == 0, f"edit distance vs BFS oracle on all {len(nodes) ** 2} pairs: {bad} mismatches")


# -- training criteria --------------------------------------------------------

MAX_EPOCHS = 30


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert main(["gen-synth", "--out", str(root)]) == 0
    return root


def train_run(corpus, out, mode="skip"):
    start = time.perf_counter()
    code = main(
        ["train", "--preset", "small", "--subsample-mode", mode, "--train", str(corpus / "train.tsv"),
         "--valid", str(corpus / "valid.tsv"), "--out", str(out), "--max-epochs", str(MAX_EPOCHS)]
    )
    assert code == 0
    records = [json.loads(line) for line in (out / "report.jsonl").read_text().splitlines()]
    return records, time.perf_counter() - start


@pytest.fixture(scope="module")
def runs(corpus, tmp_path_factory):
    """Lazily trained runs keyed by subsampling mode, shared by criteria 9 and 11."""
    cache = {}

    def get(mode):
        if mode not in cache:
            cache[mode] = train_run(corpus, tmp_path_factory.mktemp(mode), mode)
        return cache[mode]

    return get


def loss_table(records):
    return [(r["epoch"], r["lr"], r["train_loss"], r["valid_loss"], r["valid_error"]) for r in records]


def test_9_end_to_end_learning(verdict, runs, corpus, tmp_path):
    records, secs = runs("skip")
    again, _ = train_run(corpus, tmp_path / "rerun")
    best = min(r["valid_error"] for r in records)
    same = loss_table(records) == loss_table(again)
    ok = best < 0.05 and len(records) <= MAX_EPOCHS and secs < 1800 and same
    detail = (
        f"small preset: best valid error {best:.3f} in {len(records)} epochs, {secs / 60:.1f} min, "
        f"rerun {'bit-exact' if same else 'differs'}"
    )
    assert verdict(9, ok, detail)


def test_11_subsampling_variants(verdict, runs):
    best = {mode: min(r["valid_error"] for r in runs(mode)[0]) for mode in ("skip", "concat", "add")}
    order = " <= ".join(sorted(best, key=best.get))
    ok = all(e < 0.10 for e in best.values())
    detail = ", ".join(f"{m} {e:.3f}" for m, e in best.items()) + f"; ordering {order}"
    assert verdict(11, ok, detail)
