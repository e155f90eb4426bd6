import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zepeye.mlp import (Head, MalformedModel, Mlp, ModelVersionError, TrainingDiverged, TrainingSet,
                        accuracy, dumps_model, forward, gradient_check, load_model, loads_model,
                        mlp_new, default_hidden_size, predict_labels, save_model, train)


def _zero(head, n_in=4, n_hidden=3):
    return Mlp(np.zeros((n_hidden, n_in)), np.zeros(n_hidden), np.zeros((1, n_hidden)), np.zeros(1), head)


def test_default_hidden_size():
    assert default_hidden_size(60) == 30
    assert mlp_new(60).n_hidden == 30


def test_init_determinism():
    assert mlp_new(8, 4, seed=3).same_params(mlp_new(8, 4, seed=3))
    assert not mlp_new(8, 4, seed=3).same_params(mlp_new(8, 4, seed=4))


def test_init_rejects_empty_layers():
    with pytest.raises(ValueError):
        mlp_new(0, 3)


@pytest.mark.parametrize("head", list(Head))
def test_zero_network_outputs_zero(head):
    assert forward(_zero(head), np.ones(4)) == 0.0


def test_hand_built_network():
    m = Mlp(np.array([[1.0, -1.0], [0.5, 0.5]]), np.array([0.0, 0.1]),
            np.array([[2.0, -1.0]]), np.array([0.3]), Head.REGRESSION)
    x = np.array([0.2, 0.4])
    h1, h2 = math.tanh(0.2 - 0.4), math.tanh(0.1 + 0.3)
    assert forward(m, x) == pytest.approx(2 * h1 - h2 + 0.3, abs=1e-15)
    m.head = Head.BINARY
    assert forward(m, x) == pytest.approx(math.tanh(2 * h1 - h2 + 0.3), abs=1e-15)


def test_forward_shape_check():
    with pytest.raises(ValueError):
        forward(mlp_new(5, 2), np.zeros(4))


@given(st.lists(st.floats(-1e6, 1e6), min_size=6, max_size=6))
def test_binary_outputs_bounded(x):
    y = forward(mlp_new(6, 3, head=Head.BINARY, seed=1), np.array(x))
    assert -1.0 <= y <= 1.0


def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    margin = X @ np.array([0.8, -0.6]) + 0.1
    keep = np.abs(margin) > 0.05
    X, margin = X[keep], margin[keep]
    return TrainingSet(X, np.where(margin > 0, 1.0, -1.0), Head.BINARY)


def test_separable_toy_set():
    data = _separable()
    # brute-force oracle: the generating line separates the data
    assert np.all(np.sign(data.features @ np.array([0.8, -0.6]) + 0.1) == data.targets)
    m, trace = train(mlp_new(2, 4, head=Head.BINARY, seed=0), data, epochs=60, learning_rate=0.05)
    assert accuracy(m, data) >= 0.98
    assert trace[-1] < trace[0]


def test_zero_epochs_and_zero_rate_leave_model_unchanged():
    data = _separable(40)
    m0 = mlp_new(2, 3, head=Head.BINARY, seed=2)
    m, trace = train(m0, data, epochs=0)
    assert m.same_params(m0) and trace == []
    m, trace = train(m0, data, epochs=3, learning_rate=0.0)
    assert m.same_params(m0) and trace[0] == trace[1] == trace[2]


def test_training_is_deterministic():
    data = _separable(50)
    a, ta = train(mlp_new(2, 3, head=Head.BINARY, seed=1), data, epochs=3, seed=9)
    b, tb = train(mlp_new(2, 3, head=Head.BINARY, seed=1), data, epochs=3, seed=9)
    assert a.same_params(b) and ta == tb


def test_training_does_not_mutate_input():
    data = _separable(30)
    m0 = mlp_new(2, 3, head=Head.BINARY, seed=1)
    snapshot = m0.copy()
    train(m0, data, epochs=2)
    assert m0.same_params(snapshot)


def test_training_diverges_loudly():
    data = TrainingSet(np.full((4, 2), 1e3), np.array([1.0, -1.0, 1.0, -1.0]), Head.REGRESSION)
    with pytest.raises(TrainingDiverged):
        train(mlp_new(2, 3, seed=0), data, epochs=50, learning_rate=10.0)


def test_training_set_validation():
    with pytest.raises(ValueError):
        TrainingSet(np.zeros((2, 3)), np.array([0.5, 1.0]), Head.BINARY)
    with pytest.raises(ValueError):
        TrainingSet(np.zeros((2, 3)), np.array([0.5, 1.5]), Head.REGRESSION)
    with pytest.raises(ValueError):
        TrainingSet(np.zeros((2, 3)), np.array([1.0]), Head.BINARY)
    with pytest.raises(ValueError):
        train(mlp_new(3, 2), TrainingSet(np.zeros((1, 3)), np.array([1.0]), Head.BINARY))


def test_predict_labels():
    m = _zero(Head.BINARY, 2, 2)
    m.b2[:] = 0.3
    assert predict_labels(m, np.zeros((3, 2))).tolist() == [1.0, 1.0, 1.0]


@pytest.mark.parametrize("trial", range(10))
def test_gradient_check_random_networks(trial):
    rng = np.random.default_rng(trial)
    head = Head.BINARY if trial % 2 else Head.REGRESSION
    m = mlp_new(6, 3, head=head, seed=trial)
    assert gradient_check(m, rng.uniform(-1, 1, 6), rng.uniform(-1, 1)) < 1e-4


def test_gradient_check_zero_network():
    m = _zero(Head.REGRESSION)
    assert gradient_check(m, np.zeros(4), 0.0) == 0.0


def test_gradient_check_is_pure():
    m = mlp_new(6, 3, seed=5)
    x = np.linspace(-1, 1, 6)
    before = m.copy()
    assert gradient_check(m, x, 0.2) == gradient_check(m, x, 0.2)
    assert m.same_params(before)


@pytest.mark.parametrize("head", list(Head))
def test_model_roundtrip(tmp_path, head):
    m = mlp_new(7, 4, head=head, seed=11)
    save_model(m, tmp_path / "m.txt")
    back = load_model(tmp_path / "m.txt")
    assert back.same_params(m)
    X = np.random.default_rng(0).uniform(-1, 1, (100, 7))
    assert np.array_equal(back.forward_batch(X), m.forward_batch(X))


def test_model_errors():
    text = dumps_model(mlp_new(3, 2))
    with pytest.raises(MalformedModel):
        loads_model("\n".join(text.splitlines()[:4]))
    with pytest.raises(ModelVersionError):
        loads_model(text.replace("ZEPMLP v1", "ZEPMLP v9"))
    with pytest.raises(MalformedModel):
        loads_model("")
    with pytest.raises(MalformedModel):
        loads_model(text.replace("regression", "classifier"))
