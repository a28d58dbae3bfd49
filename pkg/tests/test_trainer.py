import math

import numpy as np
import pytest

from segrnn import autodiff as ad
from segrnn import oracle
from segrnn.autodiff import Tensor
from segrnn.dataio import Utterance
from segrnn.encoder import EncoderConfig
from segrnn.lattice import LabelSequence
from segrnn.model import FeatureConfig, ModelConfig, SegmentalRNN, utterance_rng
from segrnn.synth import SynthConfig, generate, synth_vocab
from segrnn.trainer import TrainConfig, clip_gradients, evaluate, schedule_lr, sgd_step, train


def tiny_model(seed=0, dropout=0.2, V=3, D=4):
    cfg = ModelConfig(
        EncoderConfig(num_layers=2, hidden=4, subsample_after=(1,), proj_dim=4, dropout_rate=dropout),
        FeatureConfig(emb_dim=3, d_h=4, d_w=4, d_dur=2),
        clamp_frames=8,
    )
    return SegmentalRNN.init(cfg, synth_vocab(V), D, seed=seed)


def tiny_corpus(n=12, V=3, D=4):
    cfg = SynthConfig(vocab_size=V, dim=D, j_min=2, j_max=4, num_utterances=n, num_valid=4)
    return [Utterance(uid, f, LabelSequence(l, V)) for uid, f, l, _ in generate(cfg)]


class TestSgdStep:
    def test_scalar(self):
        p = {"p": Tensor(1.0)}
        sgd_step(p, {"p": np.array(2.0)}, 0.1)
        assert p["p"].item() == pytest.approx(0.8)

    def test_zero_lr(self):
        p = {"a": Tensor([1.0, -2.0])}
        sgd_step(p, {"a": np.array([5.0, 5.0])}, 0.0)
        np.testing.assert_array_equal(p["a"].value, [1.0, -2.0])

    def test_keys_must_match(self):
        with pytest.raises(KeyError):
            sgd_step({"a": Tensor(1.0)}, {"b": np.array(1.0)}, 0.1)


class TestClip:
    def test_scales_to_max_norm(self):
        g = {"a": np.array([3.0, 0.0]), "b": np.array([4.0])}
        assert clip_gradients(g, 1.0) == pytest.approx(5.0)
        assert math.sqrt(sum(float((v**2).sum()) for v in g.values())) == pytest.approx(1.0)

    def test_small_gradients_untouched(self):
        g = {"a": np.array([0.3, 0.4])}
        clip_gradients(g, 5.0)
        np.testing.assert_array_equal(g["a"], [0.3, 0.4])


class TestSchedule:
    cfg = TrainConfig(lr_init=0.1, max_epochs=30)

    def test_improving(self):
        assert schedule_lr([30, 25, 20], 0.1, self.cfg) == (0.1, False)

    def test_plateau_halves(self):
        lr, stop = schedule_lr([30, 25, 25.5], 0.1, self.cfg)
        assert lr == pytest.approx(0.05) and not stop

    def test_equal_counts_as_plateau(self):
        assert schedule_lr([30, 25, 25], 0.1, self.cfg)[0] == pytest.approx(0.05)

    def test_below_min_lr_stops(self):
        lr, stop = schedule_lr([30, 31], 0.1 / 1024, self.cfg)
        assert stop and lr < self.cfg.stop_lr

    def test_max_epochs_stops(self):
        assert schedule_lr([3.0, 2.0], 0.1, TrainConfig(max_epochs=2))[1]

    def test_patience_two(self):
        cfg = TrainConfig(patience=2)
        assert schedule_lr([30, 25, 26], 0.1, cfg)[0] == 0.1
        assert schedule_lr([30, 25, 26, 27], 0.1, cfg)[0] == pytest.approx(0.05)

    def test_fresh_patience_after_decay(self):
        assert schedule_lr([30, 25, 26, 27], 0.05, self.cfg, since_decay=0)[0] == 0.05

    def test_rates_are_powers_of_decay(self):
        errors, lr = [], 0.1
        rng = np.random.default_rng(0)
        for _ in range(30):
            errors.append(float(rng.integers(0, 5)))
            new, stop = schedule_lr(errors, lr, self.cfg)
            assert new <= lr
            k = math.log(0.1 / new, 2)
            assert k == pytest.approx(round(k))
            lr = new
            if stop:
                break

    @pytest.mark.parametrize("kw", [dict(lr_init=0.0), dict(decay_factor=1.0), dict(patience=0)])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


class TestColdStart:
    @pytest.mark.parametrize("index", range(4))
    def test_zero_parameters_give_count_ratio(self, index):
        model = tiny_model(D=8, V=5)
        for t in model.params().values():
            t.value = np.zeros(t.shape)
        uid, frames, labels, _ = list(generate(SynthConfig(num_utterances=8, num_valid=2, j_max=5)))[index]
        T = model.config.encoder.output_length(frames.shape[0])
        L = model.config.clamp_L
        with ad.no_tape():
            loss = model.loss(frames, labels).item()
        full = oracle.count_labeled_segmentations(T, 5, L)
        clamped = oracle.count_segmentations(T, L, len(labels))
        assert loss == pytest.approx(math.log(full) - math.log(clamped), abs=1e-6)


class TestTrain:
    def test_reproducible(self):
        data = tiny_corpus()

        def run():
            model = tiny_model(seed=3)
            snap, report = train(model, TrainConfig(max_epochs=2, seed=5), data[:8], data[8:])
            return report.losses(), snap

        (l1, s1), (l2, s2) = run(), run()
        assert l1 == l2
        assert all(s1[k].tobytes() == s2[k].tobytes() for k in s1)

    def test_seed_changes_run(self):
        data = tiny_corpus()
        a = train(tiny_model(seed=3), TrainConfig(max_epochs=1, seed=1), data[:8], data[8:])[1].losses()
        b = train(tiny_model(seed=3), TrainConfig(max_epochs=1, seed=2), data[:8], data[8:])[1].losses()
        assert a != b

    def test_report_and_callbacks(self):
        data = tiny_corpus()
        seen, best = [], []
        _, report = train(
            tiny_model(), TrainConfig(max_epochs=3), data[:8], data[8:], on_epoch=seen.append, on_best=lambda m, r: best.append(r.epoch)
        )
        assert [r.epoch for r in seen] == [1, 2, 3][: len(seen)] and seen == report.epochs
        assert best and best[0] == 1 and report.best_epoch == best[-1]
        assert report.stop_reason in ("max_epochs", "min_lr")
        assert all(math.isfinite(e.train_loss) and e.train_loss > 0 for e in report.epochs)

    def test_best_snapshot_reproduces_best_error(self):
        data = tiny_corpus()
        model = tiny_model(seed=1)
        snap, report = train(model, TrainConfig(max_epochs=3), data[:8], data[8:])
        model.load_snapshot(snap)
        best = report.epochs[report.best_epoch - 1].valid_error
        assert evaluate(model, data[8:])[1] == best

    def test_infeasible_utterances_are_skipped(self):
        data = tiny_corpus()
        # 2 frames subsample to 1 step, which cannot hold 3 labels
        bad = Utterance("bad", np.zeros((2, 4), np.float32), LabelSequence([0, 1, 2], 3))
        _, report = train(tiny_model(), TrainConfig(max_epochs=1), data[:8] + [bad], data[8:])
        assert report.epochs[0].skipped == 1

    def test_empty_sets_rejected(self):
        with pytest.raises(ValueError):
            train(tiny_model(), TrainConfig(max_epochs=1), [], tiny_corpus()[:2])

    def test_training_lowers_loss(self):
        data = tiny_corpus(n=20)
        _, report = train(tiny_model(seed=2, dropout=0.0), TrainConfig(max_epochs=4, dropout_rate=0.0, lr_init=0.1), data[:16], data[16:])
        assert report.epochs[-1].train_loss < report.epochs[0].train_loss


def test_utterance_rng_depends_on_every_key():
    draws = {tuple(utterance_rng(*keys).random(3)) for keys in [(0, 1, "a"), (0, 1, "b"), (0, 2, "a"), (1, 1, "a")]}
    assert len(draws) == 4
    assert utterance_rng(0, 1, "a").random() == utterance_rng(0, 1, "a").random()
