import numpy as np
import pytest

from rbdnet import scenarios, training
from rbdnet.errors import TrainingDivergedError
from rbdnet.network import NetworkConfig, init_network
from rbdnet.training import (Adam, TrainConfig, adam_update, eval_loss, history_csv,
                             lr_schedule, read_model, train, write_model)


def test_lr_schedule_values():
    assert lr_schedule(0) == 0.001
    assert abs(lr_schedule(10) - 0.001 * 2 ** -0.75) <= 1e-18
    assert abs(lr_schedule(30) - 0.001 * 4 ** -0.75) <= 1e-18
    with pytest.raises(ValueError):
        lr_schedule(-1)


def test_lr_schedule_strictly_decreasing():
    vals = [lr_schedule(t) for t in range(100)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_adam_zero_gradient_no_move():
    value = np.array([1.0, -2.0])
    m = np.zeros(2)
    v = np.zeros(2)
    adam_update(value, np.zeros(2), m, v, t=1, lr=0.1)
    assert np.array_equal(value, [1.0, -2.0])


def test_adam_scalar_oracle():
    value = np.array([1.0])
    m = np.zeros(1)
    v = np.zeros(1)
    adam_update(value, np.array([0.5]), m, v, t=1, lr=0.001)
    expected = 1.0 - 0.001 * 0.5 / (np.sqrt(0.25) + 1e-8)
    assert abs(value[0] - expected) <= 1e-12


def test_adam_step_bounded_at_t1():
    rng = np.random.default_rng(0)
    for _ in range(200):
        g = rng.standard_normal(1) * 10 ** rng.uniform(-3, 3)
        value = np.array([0.0])
        adam_update(value, g, np.zeros(1), np.zeros(1), t=1, lr=0.001)
        assert abs(value[0]) <= 0.001 * (1.0 + 1e-6)


def test_adam_requires_t_ge_1():
    with pytest.raises(ValueError):
        adam_update(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), t=0, lr=0.1)


def _toy_data(n=96, d_in=10, d_out=4, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d_in))
    w = rng.standard_normal((d_out, d_in)) * 0.3
    t = x @ w.T
    masks = np.ones((n, d_out))
    return x, t, masks


def _toy_net(**kw):
    base = dict(input_dim=10, hidden_dim=24, num_blocks=2, output_dim=4,
                dropout_rate=0.0, init_seed=0)
    base.update(kw)
    return init_network(NetworkConfig(**base))


def test_train_reduces_loss_and_is_deterministic():
    x, t, m = _toy_data()
    cfg = TrainConfig(epochs=40, batch_size=32, patience=40, shuffle_seed=3, l2=0.0)
    r1 = train(_toy_net(), x, t, m, x, t, m, cfg)
    r2 = train(_toy_net(), x, t, m, x, t, m, cfg)
    assert r1.history[-1].val_loss < r1.history[0].val_loss
    assert [(h.train_loss, h.val_loss, h.lr) for h in r1.history] == \
           [(h.train_loss, h.val_loss, h.lr) for h in r2.history]
    for (na, a), (_, b) in zip(r1.params.items(), r2.params.items()):
        assert np.array_equal(a, b), na


def test_train_with_dropout_deterministic():
    x, t, m = _toy_data()
    cfg = TrainConfig(epochs=5, batch_size=32, patience=5, shuffle_seed=3)
    r1 = train(_toy_net(dropout_rate=0.2), x, t, m, x, t, m, cfg)
    r2 = train(_toy_net(dropout_rate=0.2), x, t, m, x, t, m, cfg)
    assert [h.train_loss for h in r1.history] == [h.train_loss for h in r2.history]


def test_early_stopping_patience_semantics():
    # validation improves at epochs 1 and 2, then never again: with
    # patience 20 the loop must stop at epoch 23 and keep epoch-2 weights
    calls = []
    real_eval = training.eval_loss

    def fake_eval(params, inputs, targets, masks):
        calls.append(None)
        n = len(calls)
        return {1: 1.0, 2: 0.9}.get(n, 0.95 + 0.001 * n)

    x, t, m = _toy_data(n=32)
    cfg = TrainConfig(epochs=200, batch_size=32, patience=20, shuffle_seed=0, l2=0.0)
    training.eval_loss = fake_eval
    try:
        result = train(_toy_net(), x, t, m, x, t, m, cfg)
    finally:
        training.eval_loss = real_eval
    assert len(result.history) == 23
    assert result.best_epoch == 2
    assert result.best_val_loss == 0.9


def test_training_divergence_reported():
    x, t, m = _toy_data(n=32)
    params = _toy_net()
    params.in_w[:] = 1e300
    params.out_w[:] = 1e300
    cfg = TrainConfig(epochs=3, batch_size=32, patience=3)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDivergedError) as err:
            train(params, x, t, m, x, t, m, cfg)
    assert err.value.epoch == 1


def test_overfit_small_memorization():
    x, t, m = _toy_data(n=64)
    params = _toy_net(hidden_dim=64)
    initial = eval_loss(params, x, t, m)
    cfg = TrainConfig(epochs=2000, batch_size=64, patience=2000, l2=0.0, shuffle_seed=1)
    result = train(params, x, t, m, x, t, m, cfg)
    final = eval_loss(result.params, x, t, m)
    assert final <= 1e-3 * initial


def test_history_csv_format():
    rows = [training.EpochStats(1, 0.5, 0.6, 1e-3), training.EpochStats(2, 0.4, 0.55, 9e-4)]
    text = history_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "epoch,train_loss,val_loss,lr"
    assert lines[1].startswith("1,0.5,0.6,")
    assert len(lines) == 3


def test_model_round_trip(tmp_path):
    cfg = NetworkConfig(input_dim=100, hidden_dim=32, num_blocks=2, output_dim=65,
                        architecture="feedforward", init_seed=4)
    params = init_network(cfg)
    norm = scenarios.Normalizer(np.arange(100.0), np.ones(100) * 2.0,
                                np.arange(65.0), np.ones(65) * 3.0)
    path = tmp_path / "model.rbm"
    write_model(path, params, norm)
    loaded, norm2 = read_model(path)
    assert loaded.config.architecture == "feedforward"
    assert loaded.config.hidden_dim == 32 and loaded.config.num_blocks == 2
    assert loaded.config.predict_delta is False
    for (na, a), (_, b) in zip(params.items(), loaded.items()):
        assert np.array_equal(a, b), na
    assert np.array_equal(norm.input_mean, norm2.input_mean)
    assert np.array_equal(norm.target_std, norm2.target_std)
    # architecture byte sits right after magic + version
    raw = path.read_bytes()
    assert raw[:4] == b"RBM1"
    assert raw[8] == 1  # feedforward

    cfg_delta = NetworkConfig(input_dim=100, hidden_dim=32, num_blocks=1, output_dim=65,
                              predict_delta=True, init_seed=4)
    write_model(path, init_network(cfg_delta), norm)
    loaded, _ = read_model(path)
    assert loaded.config.predict_delta is True
    assert loaded.config.architecture == "residual"


def test_model_bad_files(tmp_path):
    from rbdnet.errors import BadMagicError, TruncatedFileError
    path = tmp_path / "m.rbm"
    cfg = NetworkConfig(input_dim=10, hidden_dim=8, num_blocks=1, output_dim=4)
    norm = scenarios.Normalizer(np.zeros(10), np.ones(10), np.zeros(4), np.ones(4))
    write_model(path, init_network(cfg), norm)
    data = path.read_bytes()
    path.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(BadMagicError):
        read_model(path)
    path.write_bytes(data[:-16])
    with pytest.raises(TruncatedFileError):
        read_model(path)


def test_adam_class_states_per_parameter():
    params = _toy_net()
    opt = Adam(params)
    grads = {name: np.ones_like(a) for name, a in params.items()}
    before = {name: a.copy() for name, a in params.items()}
    opt.step(params, grads, lr=0.01)
    assert opt.t == 1
    for name, a in params.items():
        assert not np.array_equal(a, before[name])
