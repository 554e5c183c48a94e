"""Optimizer, learning-rate schedule, and training-loop behavior."""

import math

import numpy as np
import pytest

from langcnn.autograd import Tensor
from langcnn.checkpoint import load_checkpoint
from langcnn.data import FeatureStore
from langcnn.errors import DivergenceError, GradientError, MissingFeatureError
from langcnn.language_cnn import LangCnnConfig
from langcnn.model import CaptionerModel, ModelConfig
from langcnn.training import (
    ADAM_EPS,
    AdamState,
    REPORT_HEADER,
    RestartSchedule,
    TrainConfig,
    adam_update,
    clip_gradients,
    save_report,
    train,
)


def params_with_grads(grads):
    out = {}
    for i, g in enumerate(grads):
        p = Tensor(np.zeros_like(np.asarray(g, dtype=np.float64)))
        p.grad = np.asarray(g, dtype=np.float64).copy()
        out[f"p{i}"] = p
    return out


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self):
        params = params_with_grads([np.zeros(3), np.zeros((2, 2))])
        state = AdamState.for_params(params)
        adam_update(params, state, lr=0.1)
        assert state.step == 1
        for p in params.values():
            assert not p.data.any()

    def test_first_step_matches_closed_form(self):
        g = np.array([2.0, -0.5, 1e-3])
        params = params_with_grads([g])
        state = AdamState.for_params(params)
        adam_update(params, state, lr=0.01)
        # With constant g the bias-corrected moments are g and g*g, so the
        # very first update is already lr * g / (|g| + eps).
        expected = -0.01 * g / (np.abs(g) + ADAM_EPS)
        assert np.array_equal(params["p0"].data, expected)

    def test_updates_approach_lr_times_sign(self):
        g = np.array([3.0, -7.0])
        params = params_with_grads([g])
        state = AdamState.for_params(params)
        prev = params["p0"].data.copy()
        for _ in range(50):
            params["p0"].grad = g.copy()
            adam_update(params, state, lr=0.01)
            delta = params["p0"].data - prev
            prev = params["p0"].data.copy()
        assert np.allclose(delta, -0.01 * np.sign(g), rtol=1e-6)

    def test_step_counter_moves_once_per_call(self):
        params = params_with_grads([np.ones(2), np.ones(5), np.ones((3, 3))])
        state = AdamState.for_params(params)
        for want in (1, 2, 3):
            adam_update(params, state, lr=1e-3)
            assert state.step == want

    def test_non_finite_gradient_names_parameter(self):
        params = params_with_grads([np.ones(2), np.array([1.0, np.nan])])
        state = AdamState.for_params(params)
        before = {k: p.data.copy() for k, p in params.items()}
        with pytest.raises(GradientError) as info:
            adam_update(params, state, lr=1e-3)
        assert "p1" in str(info.value)
        assert state.step == 0
        for k, p in params.items():
            assert np.array_equal(p.data, before[k])


class TestClipGradients:
    def test_returns_pre_clip_norm_and_rescales(self):
        params = params_with_grads([np.array([3.0]), np.array([4.0])])
        norm = clip_gradients(params, clip_norm=1.0)
        assert norm == pytest.approx(5.0, rel=1e-12)
        post = math.sqrt(
            sum(float(np.dot(p.grad, p.grad)) for p in params.values())
        )
        assert post <= 1.0 + 1e-9
        # Direction is preserved, only the magnitude changes.
        assert params["p0"].grad[0] == pytest.approx(3.0 / 5.0, rel=1e-12)
        assert params["p1"].grad[0] == pytest.approx(4.0 / 5.0, rel=1e-12)

    def test_small_gradients_untouched(self):
        params = params_with_grads([np.array([0.3, 0.4])])
        norm = clip_gradients(params, clip_norm=10.0)
        assert norm == pytest.approx(0.5, rel=1e-12)
        assert np.array_equal(params["p0"].grad, np.array([0.3, 0.4]))

    @pytest.mark.parametrize("disabled", [None, 0, 0.0])
    def test_none_or_zero_disables(self, disabled):
        params = params_with_grads([np.array([30.0, 40.0])])
        norm = clip_gradients(params, clip_norm=disabled)
        assert norm == pytest.approx(50.0, rel=1e-12)
        assert np.array_equal(params["p0"].grad, np.array([30.0, 40.0]))


class TestRestartSchedule:
    def test_restart_points_return_to_base(self):
        sched = RestartSchedule(base_lr=0.1, period=4, period_mult=2)
        for epoch in (0, 4, 12):  # period boundaries: 4, then 4 + 8
            assert sched.lr_at(epoch) == pytest.approx(0.1, rel=1e-12)

    def test_midpoint_is_average_of_base_and_floor(self):
        sched = RestartSchedule(base_lr=0.1, period=4, period_mult=2)
        mid = (0.1 + sched.floor) / 2.0
        assert sched.lr_at(2) == pytest.approx(mid, abs=1e-12)
        # Second period has length 8, so its midpoint sits at epoch 8.
        assert sched.lr_at(8) == pytest.approx(mid, abs=1e-12)

    def test_floor_defaults_to_hundredth_of_base(self):
        assert RestartSchedule(base_lr=0.5).floor == pytest.approx(0.005)
        assert RestartSchedule(base_lr=0.5, floor=0.1).floor == 0.1

    def test_decreases_within_a_period(self):
        sched = RestartSchedule(base_lr=0.1, period=4)
        values = [sched.lr_at(e) for e in (0, 1, 2, 3, 3.999)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] >= sched.floor

    def test_fractional_epochs_accepted(self):
        sched = RestartSchedule(base_lr=0.1, period=4)
        assert sched.floor < sched.lr_at(2.5) < 0.1

    def test_invalid_arguments_rejected(self):
        with pytest.raises(ValueError):
            RestartSchedule(base_lr=0.0)
        with pytest.raises(ValueError):
            RestartSchedule(base_lr=0.1, period=0)
        with pytest.raises(ValueError):
            RestartSchedule(base_lr=0.1, floor=0.2)
        with pytest.raises(ValueError):
            RestartSchedule(base_lr=0.1).lr_at(-1)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(eval_every=0)


def loop_model(vocab, store, seed=0):
    config = ModelConfig(
        vocab_size=len(vocab.tokens),
        feature_dim=store.dim,
        embed_dim=8,
        hidden_dim=8,
        cell="simple_rnn",
        dropout=0.0,
        langcnn=LangCnnConfig(window=4, embed_dim=8, kernels=(3, 2)),
    )
    return CaptionerModel(config, seed=seed)


def loop_config(**overrides):
    base = dict(
        base_lr=1e-3,
        epochs=3,
        batch_size=4,
        clip_norm=5.0,
        patience=10**9,
        beam_size=2,
        seed=0,
        eval_every=1,
        restart_period=50,
        max_decode_len=16,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestTrainLoop:
    def test_frozen_metric_trips_patience(self, small_corpus):
        vocab, records, store = small_corpus
        model = loop_model(vocab, store)
        # An lr this small cannot move any argmax, so validation CIDEr
        # freezes at its epoch-0 value and patience=1 stops the run.
        config = loop_config(base_lr=1e-30, epochs=50, patience=1)
        report = train(model, vocab, records[:5], records[5:], store, config)
        assert report.stopped_early
        assert len(report.epochs) == 3
        assert report.best_epoch == 0

    def test_identical_seeds_reproduce_bitwise(self, small_corpus):
        vocab, records, store = small_corpus
        reports = []
        for _ in range(2):
            model = loop_model(vocab, store, seed=4)
            reports.append(
                train(model, vocab, records[:5], records[5:], store, loop_config())
            )
        assert reports[0].rows() == reports[1].rows()
        assert reports[0].best_cider == reports[1].best_cider

    def test_non_finite_loss_raises_divergence(self, small_corpus):
        vocab, records, store = small_corpus
        model = loop_model(vocab, store)
        model.params["out_b"].data[0] = 1e308
        model.params["out_b"].data[1] = -1e308
        with pytest.raises(DivergenceError) as info, np.errstate(over="ignore"):
            train(model, vocab, records[:5], records[5:], store, loop_config())
        assert "epoch 0" in str(info.value)
        assert info.value.best_checkpoint is None

    def test_best_cider_tracks_running_max(self, small_corpus):
        vocab, records, store = small_corpus
        model = loop_model(vocab, store, seed=2)
        report = train(
            model, vocab, records[:5], records[5:], store, loop_config(epochs=4)
        )
        ciders = [e.val_cider for e in report.epochs]
        assert report.best_cider == max(ciders)
        assert report.best_epoch == ciders.index(max(ciders))

    def test_out_dir_artifacts(self, small_corpus, tmp_path):
        vocab, records, store = small_corpus
        model = loop_model(vocab, store, seed=3)
        out = tmp_path / "run"
        train(
            model,
            vocab,
            records[:5],
            records[5:],
            store,
            loop_config(epochs=2),
            out_dir=str(out),
        )
        assert (out / "report.tsv").exists()
        assert (out / "training_curves.png").exists()
        loaded, loaded_vocab = load_checkpoint(out / "checkpoint_best")
        assert loaded.config == model.config
        assert loaded_vocab.tokens == vocab.tokens
        header = (out / "report.tsv").read_text().splitlines()[0]
        assert tuple(header.split("\t")) == REPORT_HEADER

    def test_eval_every_skips_epochs_with_nan(self, small_corpus):
        vocab, records, store = small_corpus
        model = loop_model(vocab, store, seed=5)
        report = train(
            model,
            vocab,
            records[:5],
            records[5:],
            store,
            loop_config(epochs=5, eval_every=3),
        )
        skipped = [e.epoch for e in report.epochs if math.isnan(e.val_cider)]
        assert skipped == [1, 2]  # 0 and 3 evaluate; 4 does as final epoch
        for entry in report.epochs:
            assert math.isnan(entry.val_cider) == math.isnan(entry.val_bleu4)

    def test_logged_lr_follows_schedule(self, small_corpus):
        vocab, records, store = small_corpus
        model = loop_model(vocab, store, seed=6)
        config = loop_config(epochs=4, base_lr=0.05, restart_period=4)
        report = train(model, vocab, records[:5], records[5:], store, config)
        sched = config.schedule()
        for entry in report.epochs:
            assert entry.lr == sched.lr_at(entry.epoch)

    def test_empty_split_rejected(self, small_corpus):
        vocab, records, store = small_corpus
        model = loop_model(vocab, store)
        with pytest.raises(ValueError):
            train(model, vocab, records, [], store, loop_config())
        with pytest.raises(ValueError):
            train(model, vocab, [], records, store, loop_config())

    def test_missing_feature_caught_before_training(self, small_corpus):
        vocab, records, store = small_corpus
        model = loop_model(vocab, store)
        before = {k: p.data.copy() for k, p in model.params.items()}
        gapped = FeatureStore(
            {i: store.get(i) for i in store.ids() if i != records[0].image_id}
        )
        with pytest.raises(MissingFeatureError):
            train(model, vocab, records[:5], records[5:], gapped, loop_config())
        for k, p in model.params.items():
            assert np.array_equal(p.data, before[k])

    def test_save_report_values_round_trip(self, small_corpus, tmp_path):
        vocab, records, store = small_corpus
        model = loop_model(vocab, store, seed=7)
        report = train(
            model, vocab, records[:5], records[5:], store, loop_config(epochs=2)
        )
        path = tmp_path / "report.tsv"
        save_report(path, report)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + len(report.epochs)
        for line, entry in zip(lines[1:], report.epochs):
            cols = line.split("\t")
            assert int(cols[0]) == entry.epoch
            assert float(cols[1]) == entry.lr
            assert float(cols[2]) == entry.train_loss
            assert float(cols[4]) == entry.val_bleu4
