import math

import numpy as np
import pytest

from mtopinn import mto, netcore
from mtopinn.errors import ConfigurationError
from mtopinn.mto import (MtoConfig, TriggerPolicy, TriggerState, after_transfer, combine, init_alpha,
                         observe_epoch, run_mto)
from mtopinn.netcore import Architecture, NetworkParams, init_params
from mtopinn.objective import CollocationBatch, LabeledBatch
from mtopinn.optim import LambHyper, LambState, lamb_step
from mtopinn.trainer import TaskSpec


def count_fires(losses, policy):
    state, fires = TriggerState(), []
    for e, loss in enumerate(losses, start=1):
        state, fire = observe_epoch(state, policy, e, loss)
        if fire:
            fires.append(e)
            state = after_transfer(state, loss)
    return fires


class TestTrigger:
    def test_steady_improvement_never_fires(self):
        losses = [0.98 ** e for e in range(500)]
        assert count_fires(losses, TriggerPolicy()) == []

    def test_constant_loss_fires_every_window(self):
        assert count_fires([1.0] * 200, TriggerPolicy(window=50)) == [51, 101, 151]

    def test_flat_epochs_counted_after_first(self):
        # the first epoch sets the best loss; epochs 2..51 are the 50 flat ones
        state, _ = observe_epoch(TriggerState(), TriggerPolicy(window=2), 1, 1.0)
        state, fire = observe_epoch(state, TriggerPolicy(window=2), 2, 1.0)
        assert not fire and state.plateau_count == 1
        _, fire = observe_epoch(state, TriggerPolicy(window=2), 3, 1.0)
        assert fire

    def test_small_improvements_do_not_reset(self):
        losses = [1.0 * (0.999 ** e) for e in range(120)]
        assert count_fires(losses, TriggerPolicy(window=50, improvement=0.01)) != []

    def test_fixed_period(self):
        assert len(count_fires(np.linspace(1, 0.1, 4000), TriggerPolicy("fixed", period=50))) == 80
        assert count_fires([1.0] * 100, TriggerPolicy("fixed", period=101)) == []

    def test_after_transfer_resets_window_and_keeps_best(self):
        s = after_transfer(TriggerState(0.5, 30), 0.7)
        assert s == TriggerState(0.5, 0)
        assert after_transfer(TriggerState(0.5, 30), 0.2).best_loss == 0.2

    @pytest.mark.parametrize("kw", [dict(kind="sometimes"), dict(window=0), dict(improvement=0.0),
                                    dict(period=0)])
    def test_policy_validation(self, kw):
        with pytest.raises(ConfigurationError):
            TriggerPolicy(**kw)


def hand_nets():
    arch = Architecture(hidden_widths=(2,))
    a = NetworkParams(arch, [(np.array([[1.0, 2.0], [3.0, 4.0]]), [0.5, -0.5]), (np.array([[1.0, -1.0]]), [0.1])])
    b = NetworkParams(arch, [(np.array([[-1.0, 0.0], [1.0, 2.0]]), [1.5, 0.5]), (np.array([[2.0, 2.0]]), [0.7])])
    return a, b


class TestCombine:
    def test_identity_is_bit_identical(self):
        a, b = hand_nets()
        assert combine([a, b], init_alpha("identity", 2, 1, 0), 0) == a
        assert combine([a, b], init_alpha("identity", 2, 1, 1), 1) == b

    def test_swap_takes_other_hidden_keeps_own_output(self):
        a, b = hand_nets()
        c = combine([a, b], init_alpha("swap", 2, 1, 0), 0)
        assert c.layers[0][0].tolist() == b.layers[0][0].tolist()
        assert c.layers[0][1].tolist() == b.layers[0][1].tolist()
        assert c.layers[1][0].tolist() == a.layers[1][0].tolist()
        assert c.layers[1][1].tolist() == a.layers[1][1].tolist()

    def test_half_half_is_elementwise_average(self):
        a, b = hand_nets()
        c = combine([a, b], np.full((2, 1), 0.5), 1)
        np.testing.assert_array_equal(c.layers[0][0], [[0.0, 1.0], [2.0, 3.0]])
        np.testing.assert_array_equal(c.layers[0][1], [1.0, 0.0])
        assert c.layers[1][0].tolist() == b.layers[1][0].tolist()

    def test_equal_tasks_half_half_returns_same(self):
        a, _ = hand_nets()
        assert combine([a, a], init_alpha("0.5-0.5", 2, 1, 0), 0) == a

    def test_linear_in_alpha(self):
        arch = Architecture(hidden_widths=(4, 3))
        ps = [init_params(arch, s) for s in range(3)]
        rng = np.random.default_rng(0)
        a1, a2 = rng.normal(size=(2, 3, 2))
        lhs = combine(ps, a1 + a2, 0)
        l1, l2 = combine(ps, a1, 0), combine(ps, a2, 0)
        for j in range(2):
            np.testing.assert_allclose(lhs.layers[j][0], l1.layers[j][0] + l2.layers[j][0], atol=1e-14)

    def test_shape_errors(self):
        a, b = hand_nets()
        with pytest.raises(ConfigurationError):
            combine([a, b], np.ones((2, 2)), 0)
        other = init_params(Architecture(hidden_widths=(3,)), 0)
        with pytest.raises(ConfigurationError):
            combine([a, other], np.ones((2, 1)), 0)


class TestInitAlpha:
    def test_fixed_modes(self):
        np.testing.assert_array_equal(init_alpha("0.7-0.3", 3, 2, 1), [[0.3, 0.3], [0.7, 0.7], [0.3, 0.3]])
        np.testing.assert_array_equal(init_alpha("swap", 2, 4, 0), [[0] * 4, [1] * 4])

    def test_xavier_reproducible_and_bounded(self):
        a = init_alpha("xavier", 2, 8, 0, seed=5)
        np.testing.assert_array_equal(a, init_alpha("xavier", 2, 8, 0, seed=5))
        assert np.all(np.abs(a) <= math.sqrt(6 / 4))
        assert not np.array_equal(a, init_alpha("xavier", 2, 8, 0, seed=6))

    def test_unknown(self):
        with pytest.raises(ConfigurationError):
            init_alpha("random", 2, 3, 0)


def toy_task(n=40, seed=0):
    rng = np.random.default_rng(seed)
    d, t = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
    return TaskSpec("toy", "density", LabeledBatch(d, t, 0.3 + 0.5 * d - 0.2 * t), pde_enabled=False)


def fit(params, task, steps=400):
    blocks, state = params.blocks(), LambState()
    for _ in range(steps):
        p = NetworkParams.from_blocks(params.arch, blocks)
        *_, g = netcore.loss_and_grad_blocks(p, task, task.train_set, CollocationBatch.empty())
        state, blocks = lamb_step(state, blocks, g, LambHyper(lr=1e-2))
    return NetworkParams.from_blocks(params.arch, blocks)


class TestRunMto:
    def test_tie_rejects(self):
        # with no learning steps the identity blend reproduces the base net exactly
        task = toy_task()
        p = init_params(Architecture(hidden_widths=(4, 4)), 1)
        out = run_mto([p, p], 0, task, MtoConfig(alpha_epochs=0))
        assert out.post_loss == out.pre_loss
        assert not out.accepted and out.params is p and out.installed_loss == out.pre_loss

    def test_accepts_better_auxiliary(self):
        task = toy_task()
        arch = Architecture(hidden_widths=(4,))
        oracle = fit(init_params(arch, 2), task)
        # main task: the oracle's output layer on useless hidden weights
        scrambled = NetworkParams(arch, [(np.zeros((4, 2)), np.zeros(4)), oracle.layers[-1]])
        out = run_mto([scrambled, oracle], 0, task, MtoConfig(alpha_init="swap", alpha_epochs=5))
        assert out.accepted and out.post_loss < out.pre_loss
        assert out.installed_loss == out.post_loss

    def test_installed_loss_is_min(self):
        task = toy_task()
        arch = Architecture(hidden_widths=(5, 3))
        ps = [init_params(arch, s) for s in (3, 4)]
        for mode in mto.ALPHA_INIT_MODES:
            out = run_mto(ps, 1, task, MtoConfig(alpha_init=mode, alpha_epochs=4), seed_key=(7,))
            installed = netcore.evaluate_loss(out.params, task, task.train_set, out.eval_colloc)[2]
            assert installed == min(out.pre_loss, out.post_loss) == out.installed_loss
            assert out.params.layers[-1][0].tobytes() == ps[1].layers[-1][0].tobytes()

    def test_deterministic(self):
        task = toy_task()
        ps = [init_params(Architecture(hidden_widths=(3,)), s) for s in (5, 6)]
        cfg = MtoConfig(alpha_init="xavier", alpha_epochs=3)
        a, b = run_mto(ps, 0, task, cfg, seed_key=(1, 2)), run_mto(ps, 0, task, cfg, seed_key=(1, 2))
        assert a.post_loss == b.post_loss
        np.testing.assert_array_equal(a.learned_alpha, b.learned_alpha)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_rejects(self):
        task = toy_task()
        ps = [init_params(Architecture(hidden_widths=(3,)), s) for s in (5, 6)]
        cfg = MtoConfig(alpha_epochs=2, lamb=LambHyper(lr=1e200))
        out = run_mto(ps, 0, task, cfg)
        assert not out.accepted and out.post_loss == math.inf and "diverged" in out.note
