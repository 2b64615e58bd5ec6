import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locality_ml import data, linear, optim
from locality_ml.data import Dataset
from locality_ml.optim import DivergenceError, OptimizerState, SlidingWindow


class Quadratic:
    """Loss 0.5 * sum_i a_i (w_i - c_i)^2, independent of the data points."""

    def __init__(self, curvature, center):
        self.a = np.asarray(curvature, dtype=float)
        self.c = np.asarray(center, dtype=float)
        self.param_count = len(self.a)

    def value_and_gradient(self, params, indices, ds):
        diff = params - self.c
        with np.errstate(over="ignore", invalid="ignore"):  # divergence tests overflow on purpose
            return float(0.5 * np.sum(self.a * diff * diff)), self.a * diff


class Recording:
    """Counts calls and remembers every batch handed to the provider."""

    param_count = 1

    def __init__(self):
        self.batches = []

    def value_and_gradient(self, params, indices, ds):
        self.batches.append(np.array(indices))
        return 0.0, np.zeros(1)


def points(n):
    return Dataset(np.zeros((n, 1)), np.zeros(n, int), 1)


# ---------------------------------------------------------------- train

@pytest.mark.parametrize("rule", optim.RULES)
def test_zero_lr_keeps_init(rule):
    init = np.array([0.3, -1.2, 4.0])
    rep = optim.train(Quadratic([1, 2, 3], [1, 1, 1]), points(7), init, 3, 2, OptimizerState(rule, 0.0))
    np.testing.assert_array_equal(rep.params, init)


def test_quadratic_gd_single_step():
    # loss (w-3)^2 written as 0.5*a*(w-c)^2 with a=2: gradient at 0 is -6
    rep = optim.train(Quadratic([2.0], [3.0]), points(5), [0.0], 5, 1, OptimizerState("sgd", 0.1))
    assert rep.params[0] == pytest.approx(0.6, abs=1e-15)
    assert len(rep.records) == 1


def test_convex_gd_is_monotone():
    a = np.array([0.5, 2.0, 4.0, 1.0])
    prov = Quadratic(a, [1.0, -2.0, 0.5, 3.0])
    rep = optim.train(prov, points(4), np.zeros(4), 4, 60, OptimizerState("sgd", 0.9 / a.max()))
    assert np.all(np.diff(rep.losses) <= 0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 40), bs=st.integers(1, 40), epochs=st.integers(1, 4), m=st.integers(0, 3))
def test_update_count_and_touch_count(n, bs, epochs, m):
    bs = min(bs, n)
    prov = Recording()
    rep = optim.train(prov, points(n), [0.0], bs, epochs, OptimizerState(), SlidingWindow(m))
    assert len(rep.records) == epochs * math.ceil(n / bs)
    touched = [r.points_touched for r in rep.records]
    assert touched == sorted(touched)
    # new points from main storage: exactly |T| per epoch regardless of m
    per_epoch = [max(r.points_touched for r in rep.records if r.epoch == e) for e in range(epochs)]
    assert per_epoch == [n * (e + 1) for e in range(epochs)]
    for e in range(epochs):
        new = np.concatenate([b[:bs] if len(b) > bs else b for b in
                              prov.batches[e * math.ceil(n / bs):(e + 1) * math.ceil(n / bs)]])
        assert len(new) >= n


def test_batch_size_errors():
    with pytest.raises(ValueError):
        optim.train(Recording(), points(3), [0.0], 4, 1, OptimizerState())
    with pytest.raises(ValueError):
        optim.train(Recording(), points(3), [0.0], 0, 1, OptimizerState())
    with pytest.raises(ValueError):
        optim.train(Recording(), points(3), [0.0], 1, 0, OptimizerState())


def test_divergence_aborts():
    with pytest.raises(DivergenceError):
        optim.train(Quadratic([1.0], [0.0]), points(2), [1.0], 2, 2000, OptimizerState("sgd", 3.0))


def test_logistic_sgd_golden():
    ds = data.synth_blobs(1, 200, 4, 2, 0.3)
    prov = linear.LinearProvider("logistic", 4, 0.0)
    every = np.arange(200)
    before, _ = prov.value_and_gradient(np.zeros(5), every, ds)
    rep = optim.train(prov, ds, np.zeros(5), 1, 5, OptimizerState("sgd", 0.05), seed=0)
    after, _ = prov.value_and_gradient(rep.params, every, ds)
    assert after < before
    assert before == pytest.approx(math.log(2), abs=1e-12)
    assert after == pytest.approx(0.006252158882559472, rel=1e-9)


def test_window_m0_matches_plain_minibatch():
    ds = data.synth_blobs(4, 90, 3, 2, 1.0)
    prov = linear.LinearProvider("logistic", 3, 1e-3)
    for rule in optim.RULES:
        plain = optim.train(prov, ds, np.zeros(4), 8, 3, OptimizerState(rule, 0.05), None, seed=5)
        m0 = optim.train(prov, ds, np.zeros(4), 8, 3, OptimizerState(rule, 0.05), SlidingWindow(0), seed=5)
        assert np.array_equal(plain.params, m0.params)
        assert [r.loss for r in plain.records] == [r.loss for r in m0.records]


def test_window_changes_the_trajectory():
    ds = data.synth_blobs(4, 90, 3, 2, 1.0)
    prov = linear.LinearProvider("logistic", 3, 0.0)
    m0 = optim.train(prov, ds, np.zeros(4), 8, 1, OptimizerState("sgd", 0.1), SlidingWindow(0))
    m1 = optim.train(prov, ds, np.zeros(4), 8, 1, OptimizerState("sgd", 0.1), SlidingWindow(1))
    assert not np.array_equal(m0.params, m1.params)


def test_train_report_csv(tmp_path):
    rep = optim.train(Quadratic([1.0], [2.0]), points(4), [0.0], 2, 2, OptimizerState("sgd", 0.1))
    rep.to_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["epoch", "points_touched", "batch_index", "loss", "wall_ns"]
    assert [r[:3] for r in rows[1:]] == [["0", "2", "0"], ["0", "4", "1"], ["1", "6", "0"], ["1", "8", "1"]]


def test_unshuffled_order_is_sequential():
    prov = Recording()
    optim.train(prov, points(5), [0.0], 2, 1, OptimizerState(), shuffle=False)
    assert [b.tolist() for b in prov.batches] == [[0, 1], [2, 3], [4]]


# ---------------------------------------------------------------- window composer

def test_window_m0_is_identity():
    w = SlidingWindow(0)
    for start in range(0, 12, 4):
        assert optim.compose_window_batch(np.arange(start, start + 4), w).tolist() == list(range(start, start + 4))


def test_window_sizes_and_order():
    w = SlidingWindow(2)
    first = optim.compose_window_batch([0, 1, 2], w)
    assert first.tolist() == [0, 1, 2]
    second = optim.compose_window_batch([3, 4, 5], w)
    assert second.tolist() == [3, 4, 5, 0, 1, 2]
    third = optim.compose_window_batch([6, 7, 8], w)
    assert len(third) == 9
    assert third.tolist() == [6, 7, 8, 0, 1, 2, 3, 4, 5]
    fourth = optim.compose_window_batch([9, 10, 11], w)
    assert fourth.tolist() == [9, 10, 11, 3, 4, 5, 6, 7, 8]
    assert len(w) <= w.capacity == 6
    assert list(w.entries) == [6, 7, 8, 9, 10, 11]


def test_window_first_batch_m1():
    assert len(optim.compose_window_batch(np.arange(16), SlidingWindow(1))) == 16


def test_window_explicit_capacity_and_validation():
    w = SlidingWindow(1, capacity=2)
    optim.compose_window_batch([0, 1, 2], w)
    assert optim.compose_window_batch([3, 4, 5], w).tolist() == [3, 4, 5, 1, 2]
    with pytest.raises(ValueError):
        SlidingWindow(-1)


# ---------------------------------------------------------------- step rules

@pytest.mark.parametrize("rule", optim.RULES)
def test_zero_gradient_fixed_point(rule):
    opt = OptimizerState(rule, 0.1)
    p = np.array([1.0, -2.0])
    for _ in range(3):
        p2 = optim.apply_step(opt, p, np.zeros(2))
        np.testing.assert_array_equal(p2, p)


def test_momentum_zero_mu_is_sgd():
    rng = np.random.default_rng(0)
    a, b = OptimizerState("momentum", 0.1, momentum=0.0), OptimizerState("sgd", 0.1)
    p = q = rng.normal(size=5)
    for _ in range(4):
        g = rng.normal(size=5)
        p, q = optim.apply_step(a, p, g), optim.apply_step(b, q, g)
    np.testing.assert_array_equal(p, q)


def test_adam_first_step():
    opt = OptimizerState("adam", 0.001)
    p = optim.apply_step(opt, np.array([0.0]), np.array([10.0]))
    assert abs(p[0]) == pytest.approx(0.001, abs=1e-6)
    # hand oracle: m_hat = g, v_hat = g^2
    assert p[0] == pytest.approx(-0.001 * 10.0 / (10.0 + 1e-8), abs=1e-15)


def test_adagrad_and_momentum_hand_values():
    opt = OptimizerState("adagrad", 0.5)
    p = optim.apply_step(opt, np.array([1.0]), np.array([2.0]))
    assert p[0] == pytest.approx(1.0 - 0.5 * 2.0 / math.sqrt(4.0 + 1e-8), abs=1e-15)
    p = optim.apply_step(opt, p, np.array([1.0]))
    assert p[0] == pytest.approx(0.5 + 1e-8 - 0.5 / math.sqrt(5.0 + 1e-8), abs=1e-8)
    mom = OptimizerState("momentum", 0.1, momentum=0.5)
    p = optim.apply_step(mom, np.array([0.0]), np.array([1.0]))
    p = optim.apply_step(mom, p, np.array([1.0]))
    assert p[0] == pytest.approx(-0.1 - 0.15, abs=1e-15)


def test_inverse_time_schedule():
    opt = OptimizerState("sgd", 1.0, schedule="inverse_time", decay_rate=0.5)
    p = np.array([0.0])
    steps = []
    for _ in range(3):
        steps.append(opt.current_lr())
        p = optim.apply_step(opt, p, np.array([1.0]))
    assert steps == [1.0, 1.0 / 1.5, 0.5]
    assert p[0] == pytest.approx(-(1.0 + 1.0 / 1.5 + 0.5))


@pytest.mark.parametrize("rule", optim.RULES)
def test_replay_is_bit_exact(rule):
    rng = np.random.default_rng(3)
    grads = [rng.normal(size=4) for _ in range(20)]

    def run():
        opt, p = OptimizerState(rule, 0.01), np.ones(4)
        for g in grads:
            p = optim.apply_step(opt, p, g)
        return p

    assert np.array_equal(run(), run())


def test_step_errors():
    with pytest.raises(DivergenceError):
        optim.apply_step(OptimizerState(), np.array([1.0]), np.array([np.nan]))
    with pytest.raises(ValueError):
        optim.apply_step(OptimizerState(), np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        OptimizerState("rmsprop")
    with pytest.raises(ValueError):
        OptimizerState("sgd", -1.0)


def test_fresh_resets_buffers():
    opt = OptimizerState("adam", 0.01)
    optim.apply_step(opt, np.zeros(2), np.ones(2))
    new = opt.fresh()
    assert new.t == 0 and new.m is None and new.lr == 0.01
