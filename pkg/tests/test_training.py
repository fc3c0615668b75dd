"""Optimizer, training loop and evaluation."""

import math
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from autodiff import Tensor
from data import SynthConfig, generate, split
from data.pgm import read_pgm
from loss import LossConfig
from metrics import argmax_labels, compare_reports, dice
from network import Network, NetworkSpec
from progress import ProgressManager, RunSummary, TrainLog
from training import Adam, Hyperparams, TrainState, batch_order, evaluate, train, train_step, validation_dice
from utils.errors import ConfigError, DataFormatError, NumericalError, UsageError


def quick_hp(**changes) -> Hyperparams:
    values = dict(batch_size=2, epochs=2, iterations_per_epoch=3, seed=0, progress_bar=False)
    values.update(changes)
    return Hyperparams(**values)


def small_net(variant='plain', seed=0, **changes) -> Network:
    values = dict(variant=variant, depth=2, base_channels=2, num_classes=3, dropout_rate=0.25)
    values.update(changes)
    return Network.build(NetworkSpec(**values), np.random.default_rng(seed))


class TestAdam:

    def test_zero_gradient_leaves_parameters(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.zeros(2)
        Adam([p]).step()
        assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_hand_trace(self):
        p = Tensor(1.0, requires_grad=True)
        p.grad = np.array(0.5)
        Adam([p], learning_rate=0.001).step()
        m = (1 - 0.9) * 0.5
        v = (1 - 0.999) * 0.25
        m_hat, v_hat = m / (1 - 0.9), v / (1 - 0.999)
        assert_allclose(p.data, 1.0 - 0.001 * m_hat / (math.sqrt(v_hat) + 1e-8), rtol=1e-15)
        assert abs(1.0 - p.item() - 0.001) < 1e-9

    def test_two_step_hand_trace(self):
        p = Tensor(0.0, requires_grad=True)
        opt = Adam([p], learning_rate=0.01, beta1=0.5, beta2=0.75, epsilon=0.0)
        expected, m, v = 0.0, 0.0, 0.0
        for t, g in enumerate([1.0, -3.0], start=1):
            p.grad = np.array(g)
            opt.step()
            m = 0.5 * m + 0.5 * g
            v = 0.75 * v + 0.25 * g * g
            expected -= 0.01 * (m / (1 - 0.5 ** t)) / math.sqrt(v / (1 - 0.75 ** t))
        assert_allclose(p.item(), expected, rtol=1e-14)
        assert opt.t == 2

    def test_missing_gradient(self):
        p = Tensor([1.0], requires_grad=True, name='enc0.conv1.kernel')
        with pytest.raises(UsageError) as exc:
            Adam([p]).step()
        assert 'enc0.conv1.kernel' in str(exc.value)


class TestHyperparams:

    @pytest.mark.parametrize('n_train, iterations', [(200, 40), (100, 20), (50, 10), (7, 2)])
    def test_auto_iterations(self, n_train, iterations):
        assert Hyperparams(batch_size=5).iterations(n_train) == iterations

    def test_explicit_iterations(self):
        assert Hyperparams(iterations_per_epoch=7).iterations(200) == 7

    def test_batch_larger_than_training_set(self):
        with pytest.raises(ConfigError) as exc:
            quick_hp(batch_size=5).validate(4)
        assert exc.value.key == 'batch_size'

    def test_seed_required(self):
        with pytest.raises(ConfigError):
            quick_hp(seed=None).validate(10)


class TestBatchOrder:

    def test_without_replacement_within_pass(self):
        stream = batch_order(10, 3, np.random.default_rng(0))
        first_pass = [next(stream) for _ in range(3)]
        flat = [i for batch in first_pass for i in batch]
        assert len(set(flat)) == 9

    def test_reshuffles_each_pass(self):
        stream = batch_order(6, 6, np.random.default_rng(0))
        passes = [next(stream) for _ in range(4)]
        assert all(sorted(p) == list(range(6)) for p in passes)
        assert len({tuple(p) for p in passes}) > 1


class TestTrain:

    def test_initial_loss_is_uniform_baseline(self, small_dataset):
        net = small_net()
        for name in ('head.kernel', 'head.bias'):
            net.parameters[name].assign(np.zeros(net.parameters[name].shape))
        hp = quick_hp()
        state = TrainState(net, Adam(net.parameter_list()), np.random.default_rng(0))
        loss, mean_weight = train_step(state, small_dataset, [0, 1], hp)
        assert abs(loss - math.log(3.0)) < 0.2 * math.log(3.0)
        assert mean_weight == 1.0
        assert state.step == 1

    def test_deterministic(self, small_dataset):
        train_set, val_set, _ = split(small_dataset, 6, 2, seed=0)
        results = []
        for _ in range(2):
            net, log = train(small_net('bru', seed=5), train_set, val_set,
                             quick_hp(loss=LossConfig('feedback', 3.0)))
            results.append((net, log))
        (net_a, log_a), (net_b, log_b) = results
        assert log_a.losses == log_b.losses
        for name in net_a.parameters:
            assert_array_equal(net_a.parameters[name].data, net_b.parameters[name].data)

    def test_log_contents(self, small_dataset):
        train_set, val_set, _ = split(small_dataset, 6, 2, seed=0)
        _, log = train(small_net(), train_set, val_set, quick_hp(epochs=3))
        assert [r.step for r in log.iterations] == list(range(9))
        assert [r.epoch for r in log.iterations] == [0] * 3 + [1] * 3 + [2] * 3
        assert [r.epoch for r in log.validation] == [0, 1, 2]
        assert all(r.mean_weight == 1.0 for r in log.iterations)

    def test_feedback_weights_logged(self, small_dataset):
        train_set, val_set, _ = split(small_dataset, 6, 2, seed=0)
        _, log = train(small_net(), train_set, val_set, quick_hp(loss=LossConfig('feedback', 3.0)))
        assert all(0.01 <= w <= 1.0 for w in log.mean_weights)

    def test_best_checkpoint_returned(self, small_dataset):
        train_set, val_set, _ = split(small_dataset, 6, 3, seed=1)
        net, log = train(small_net('bru'), train_set, val_set, quick_hp(epochs=4))
        assert log.best_val_dice >= log.validation[-1].mean_val_dice
        assert validation_dice(net, val_set) == log.best_val_dice

    def test_non_finite_loss_aborts(self, small_dataset):
        net = small_net()
        net.parameters['head.bias'].assign(np.full(3, np.nan))
        train_set, val_set, _ = split(small_dataset, 6, 2, seed=0)
        with pytest.raises(NumericalError) as exc:
            train(net, train_set, val_set, quick_hp())
        assert exc.value.iteration == 0
        assert 'head.bias' in exc.value.parameter_norms


class TestEvaluate:

    def test_row_count(self, small_dataset):
        net = small_net()
        with_bg = evaluate(net, small_dataset, include_background=True)
        without_bg = evaluate(net, small_dataset, include_background=False)
        assert len(with_bg.rows) == len(small_dataset) * 3
        assert len(without_bg.rows) == len(small_dataset) * 2
        assert {r.class_id for r in without_bg.rows} == {1, 2}

    def test_deterministic_and_ordered(self, small_dataset):
        net = small_net('bru')
        serial = evaluate(net, small_dataset, workers=1)
        threaded = evaluate(net, small_dataset, workers=4)
        assert serial.rows == threaded.rows
        assert [r.image_id for r in serial.rows[::3]] == small_dataset.ids

    def test_predictions_written(self, small_dataset, tmp_path):
        net = small_net('bru')
        out = str(tmp_path / 'pred')
        report = evaluate(net, small_dataset, workers=2, predictions_dir=out)
        assert sorted(os.listdir(out)) == sorted(f"{i}_pred.pgm" for i in small_dataset.ids)
        scores = report.keyed()
        for sample in small_dataset:
            pred = read_pgm(os.path.join(out, f"{sample.id}_pred.pgm"))
            assert pred.shape == sample.mask.shape and pred.max() < 3
            for class_id in range(3):
                assert dice(pred, sample.mask, class_id).value == scores[(sample.id, class_id)]
        assert report.rows == evaluate(net, small_dataset).rows

    def test_ground_truth_oracle(self, small_dataset):
        for sample in small_dataset:
            one_hot = np.eye(3)[sample.mask].transpose(2, 0, 1)[None]
            pred = argmax_labels(one_hot)[0]
            assert all(dice(pred, sample.mask, c).value == 1.0 for c in range(3))


class TestProgress:

    def test_strict_improvement(self):
        log = TrainLog()
        assert log.add_validation(0, 0.5)
        assert not log.add_validation(1, 0.5)
        assert log.add_validation(2, 0.6)
        assert (log.best_epoch, log.best_val_dice) == (2, 0.6)

    def test_log_round_trip(self, tmp_path):
        log = TrainLog()
        log.add_iteration(0, 0, 1.0986, 1.0)
        log.add_iteration(1, 0, 0.75, 0.5)
        log.add_validation(0, 0.25)
        manager = ProgressManager(str(tmp_path))
        assert manager.read_log() is None
        manager.write_log(log)
        loaded = manager.read_log()
        assert loaded.iterations == log.iterations
        assert loaded.best_val_dice == 0.25

    def test_summary_round_trip(self, tmp_path):
        manager = ProgressManager(str(tmp_path))
        assert manager.load_summary() is None
        summary = RunSummary('sha256:0123456789abcdef', 'fu-net', 434, 6, 1, 0.5, 0.4, ProgressManager.now(), 1.5)
        manager.save_summary(summary)
        assert manager.load_summary() == summary

    def test_malformed_summary(self, tmp_path):
        (tmp_path / 'run_summary.json').write_text('{"method": 1}', encoding='utf-8')
        with pytest.raises(DataFormatError):
            ProgressManager(str(tmp_path)).load_summary()


def overfit_pair():
    return generate(SynthConfig(height=64, width=64, count=2, seed=21))


@pytest.mark.slow
@pytest.mark.parametrize('variant', ['plain', 'bru'])
@pytest.mark.parametrize('mode', ['uniform', 'feedback'])
def test_overfits_two_samples(variant, mode):
    dataset = overfit_pair()
    net = Network.build(NetworkSpec(variant=variant, depth=3, base_channels=8, num_classes=3, dropout_rate=0.0),
                        np.random.default_rng(0))
    hp = Hyperparams(batch_size=2, learning_rate=0.001, epochs=300, iterations_per_epoch=1,
                     loss=LossConfig(mode, 3.0), seed=0, progress_bar=False)
    net, log = train(net, dataset, dataset, hp)
    assert log.losses[-1] <= log.losses[0] / 100.0
    report = evaluate(net, dataset, include_background=False)
    assert all(row.dice == 1.0 for row in report.rows)


@pytest.mark.slow
def test_mean_feedback_weight_falls():
    dataset = overfit_pair()
    net = Network.build(NetworkSpec(variant='bru', depth=3, base_channels=8, dropout_rate=0.0),
                        np.random.default_rng(0))
    hp = Hyperparams(batch_size=2, epochs=100, iterations_per_epoch=1,
                     loss=LossConfig('feedback', 3.0), seed=0, progress_bar=False)
    _, log = train(net, dataset, dataset, hp)
    weights = log.mean_weights
    decile = len(weights) // 10
    assert np.mean(weights[-decile:]) < np.mean(weights[:decile])


@pytest.mark.slow
def test_feedback_helps_small_class(capsys):
    dataset = generate(SynthConfig(height=64, width=64, count=160, small_fraction=0.02, seed=100))
    scores = {'uniform': [], 'feedback': []}
    for seed in range(5):
        train_set, val_set, test_set = split(dataset, 50, 10, seed)
        reports = {}
        for mode in scores:
            net = Network.build(NetworkSpec(variant='bru', depth=3, base_channels=16), np.random.default_rng(seed))
            hp = Hyperparams(batch_size=5, epochs=50, loss=LossConfig(mode, 3.0), seed=seed, progress_bar=False)
            net, _ = train(net, train_set, val_set, hp)
            reports[mode] = evaluate(net, test_set, include_background=False)
            scores[mode].append(reports[mode].mean_dice([2]))
        small = {c.class_id: c for c in compare_reports(reports['uniform'], reports['feedback'],
                                                         'bru-net', 'fu-net')}[2]
        assert small.result.df == len(test_set) - 1
        with capsys.disabled():
            print(f"seed={seed} small class uniform={scores['uniform'][-1]:.4f} "
                  f"feedback={scores['feedback'][-1]:.4f} t={small.result.t:.3f} p={small.result.p:.4g}")
    assert np.median(scores['feedback']) >= np.median(scores['uniform'])
