import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from taguchi_cnn.nn import functional as F
from taguchi_cnn.nn import losses, model
from taguchi_cnn.nn.checkpoint import load_checkpoint, save_checkpoint
from taguchi_cnn.nn.model import Conv, Dense, Flatten, MaxPool, ModelSpec, ShapeError
from taguchi_cnn.nn.optim import SGD, Adam, init_state, optimizer_step
from taguchi_cnn.nn.train import TrainData, TrainingConfig, TrainingError, train

# (name, output shape, params) rows of the published 10-layer network
TABLE3 = [
    ("conv_1", (100, 100, 32), 416),
    ("conv_2", (100, 100, 32), 4128),
    ("conv_3", (100, 100, 32), 4128),
    ("max_pooling_1", (50, 50, 32), 0),
    ("conv_4", (50, 50, 64), 18496),
    ("conv_5", (50, 50, 64), 36928),
    ("conv_6", (50, 50, 64), 36928),
    ("max_pooling_2", (25, 25, 64), 0),
    ("conv_7", (25, 25, 128), 73856),
    ("conv_8", (25, 25, 128), 147584),
    ("max_pooling_3", (12, 12, 128), 0),
    ("conv_9", (12, 12, 256), 295168),
    ("conv_10", (12, 12, 256), 590080),
    ("max_pooling_4", (6, 6, 256), 0),
    ("flatten_1", (9216,), 0),
    ("dense_1", (1,), 9217),
]


def test_table3_shapes_and_counts():
    spec = model.table3_spec()
    rows = model.summary(spec)
    assert [(name, shape, n) for name, _, shape, n in rows] == TABLE3
    per_layer, total = model.count_params(spec)
    assert total == 1_216_929
    assert per_layer == [n for _, _, n in TABLE3]


def test_pool_floor():
    spec = ModelSpec((25, 25, 64), (MaxPool(), Flatten(), Dense(1)))
    assert model.infer_shapes(spec)[0] == (12, 12, 64)


def test_shape_errors():
    with pytest.raises(ShapeError):
        model.infer_shapes(ModelSpec((1, 1, 3), (MaxPool(), Flatten(), Dense(1))))
    with pytest.raises(ShapeError):
        model.infer_shapes(ModelSpec((4, 4, 3), (Flatten(), Dense(2))))
    with pytest.raises(ShapeError):
        model.infer_shapes(ModelSpec((4, 4, 3), (Dense(1),)))
    with pytest.raises(ValueError):
        Conv(0)


def test_depth_templates():
    for n, convs in ((6, 6), (8, 8), (10, 10), (12, 12)):
        spec = model.sequential_cnn(n, 32)
        assert sum(isinstance(layer, Conv) for layer in spec.layers) == convs
        assert sum(isinstance(layer, MaxPool) for layer in spec.layers) == 4
    with pytest.raises(ValueError, match="7"):
        model.sequential_cnn(7, 32)


# -- gradient checks --------------------------------------------------------


def _random_tiny_model(rng):
    h, w = rng.integers(2, 9, 2)
    c = int(rng.integers(1, 4))
    layers = []
    for _ in range(int(rng.integers(0, 3))):
        k = tuple(int(v) for v in rng.integers(1, 4, 2))
        layers.append(Conv(int(rng.integers(1, 5)), k, str(rng.choice(["relu", "relu6", "none"]))))
    if min(h, w) >= 2 and rng.random() < 0.5:
        layers.append(MaxPool())
    layers += [Flatten(), Dense(1)]
    return ModelSpec((int(h), int(w), c), tuple(layers))


def _objective(spec, params, x, weights):
    scores, _ = model.forward(spec, params, x)
    return float((scores * weights).sum())


def _max_rel_error(spec, params, x, weights, rng, per_tensor=12, eps=1e-6):
    _, cache = model.forward(spec, params, x)
    grads = model.backward(spec, params, cache, weights)
    worst = 0.0
    for p, g in zip(params, grads):
        if p is None:
            continue
        for key in p:
            flat, gflat = p[key].reshape(-1), g[key].reshape(-1)
            for i in rng.choice(flat.size, min(per_tensor, flat.size), replace=False):
                old = flat[i]
                flat[i] = old + eps
                up = _objective(spec, params, x, weights)
                flat[i] = old - eps
                down = _objective(spec, params, x, weights)
                flat[i] = old
                numeric = (up - down) / (2 * eps)
                denom = max(abs(numeric), abs(gflat[i]), 1e-6)
                worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


def test_gradient_check_random_tiny_models():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(120):
        spec = _random_tiny_model(rng)
        params = model.init_params(spec, rng)
        for p in params:
            if p is not None:  # nonzero biases exercise the bias path too
                p["bias"] += rng.normal(0, 0.1, p["bias"].shape)
        x = rng.normal(0, 1, (int(rng.integers(1, 4)),) + spec.input_shape)
        weights = rng.normal(0, 1, (len(x), 1))
        worst = max(worst, _max_rel_error(spec, params, x, weights, rng))
    assert worst < 1e-4
    assert time.perf_counter() - start < 60


@pytest.mark.parametrize("kind", losses.LOSSES)
def test_loss_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(1)
    y = rng.normal(0, 2, (20, 1))
    t = rng.choice([-1.0, 1.0], (20, 1))
    _, g = losses.loss(y, t, kind)
    eps = 1e-6
    for i in range(20):
        if abs(1 - t[i, 0] * y[i, 0]) < 1e-3:
            continue
        up, down = y.copy(), y.copy()
        up[i] += eps
        down[i] -= eps
        numeric = (losses.loss(up, t, kind)[0] - losses.loss(down, t, kind)[0]) / (2 * eps)
        assert numeric == pytest.approx(g[i, 0], rel=1e-5, abs=1e-9)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 5, 4, 3))
    wt = rng.normal(size=(2, 3, 3, 4))
    b = rng.normal(size=4)
    out, _ = F.conv2d_forward(x, wt, b)
    # even kernels pad one more on the trailing side
    xp = np.pad(x, ((0, 0), (0, 1), (1, 1), (0, 0)))
    ref = np.zeros((2, 5, 4, 4))
    for n in range(2):
        for i in range(5):
            for j in range(4):
                ref[n, i, j] = np.tensordot(xp[n, i : i + 2, j : j + 3], wt, axes=3) + b
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


# -- losses and activations ---------------------------------------------------


def test_hinge_examples():
    assert losses.loss(np.array([[0.5]]), np.array([-1.0]), "hinge")[0] == 1.5
    assert losses.loss(np.array([[0.5]]), np.array([-1.0]), "squared_hinge")[0] == 2.25
    assert losses.loss(np.array([[2.0]]), np.array([1.0]), "hinge")[0] == 0.0


def test_hinge_point_subgradient_is_zero():
    _, g = losses.loss(np.array([[1.0]]), np.array([1.0]), "hinge")
    assert g[0, 0] == 0.0


def test_labels_must_be_signed():
    with pytest.raises(ValueError):
        losses.loss(np.zeros((2, 1)), np.array([0.0, 1.0]), "hinge")
    with pytest.raises(ValueError):
        losses.loss(np.zeros((2, 1)), np.array([1.0, 1.0]), "logistic")


def test_accuracy_zero_counts_positive():
    assert losses.accuracy(np.array([[0.0], [-0.1]]), np.array([1.0, -1.0])) == 1.0


def test_relu6_clips():
    assert F.relu6(np.array([7.0]))[0] == 6.0
    assert F.relu6(np.array([-1.0]))[0] == 0.0


@given(hnp.arrays(np.float64, hnp.array_shapes(max_dims=4, max_side=5), elements=st.floats(-1e6, 1e6)))
def test_activation_ranges(z):
    r6 = F.relu6(z)
    assert ((r6 >= 0) & (r6 <= 6)).all()
    assert (F.relu(z) >= 0).all()


@given(st.floats(-50, 50), st.sampled_from([-1.0, 1.0]))
def test_loss_monotonicity(score, label):
    h = losses.loss(np.array([[score]]), np.array([label]), "hinge")[0]
    sq = losses.loss(np.array([[score]]), np.array([label]), "squared_hinge")[0]
    if h >= 1:
        assert sq >= h
    elif h >= 0:
        assert sq <= h


# -- optimizers ---------------------------------------------------------------


def _single(w, g):
    return [{"weight": np.array([w]), "bias": np.zeros(1)}], [{"weight": np.array([g]), "bias": np.zeros(1)}]


def test_sgd_step_exact():
    params, grads = _single(1.0, 0.5)
    cfg = SGD(0.1)
    optimizer_step(params, grads, init_state(params, cfg), cfg)
    assert params[0]["weight"][0] == 0.95


@settings(max_examples=300)
@given(
    g=st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3),
    lr=st.sampled_from([1e-4, 1e-3, 1e-2, 0.1]),
)
def test_adam_first_step_is_lr(g, lr):
    params, grads = _single(0.0, g)
    cfg = Adam(lr)
    optimizer_step(params, grads, init_state(params, cfg), cfg)
    step = abs(params[0]["weight"][0])
    assert step == pytest.approx(lr * abs(g) / (abs(g) + cfg.eps), rel=1e-12)
    assert abs(step - lr) < 1e-6


def test_adam_zero_gradient_no_update():
    params, grads = _single(0.7, 0.0)
    cfg = Adam()
    state = init_state(params, cfg)
    for _ in range(3):
        optimizer_step(params, grads, state, cfg)
    assert params[0]["weight"][0] == 0.7


def test_optimizer_validation():
    with pytest.raises(ValueError):
        SGD(0)
    with pytest.raises(ValueError):
        Adam(-1e-3)
    with pytest.raises(ValueError):
        TrainingConfig(batch_size=0)


# -- structural properties ----------------------------------------------------


@st.composite
def specs(draw):
    h = draw(st.integers(2, 10))
    w = draw(st.integers(2, 10))
    c = draw(st.integers(1, 3))
    layers, shape = [], (h, w)
    for _ in range(draw(st.integers(0, 4))):
        if min(shape) >= 2 and draw(st.booleans()):
            layers.append(MaxPool())
            shape = (shape[0] // 2, shape[1] // 2)
        else:
            k = (draw(st.integers(1, 3)), draw(st.integers(1, 3)))
            layers.append(Conv(draw(st.integers(1, 4)), k, draw(st.sampled_from(model.ACTIVATIONS))))
    layers.append(Flatten())
    if draw(st.booleans()):
        layers.append(Dense(draw(st.integers(1, 4)), "relu"))
    layers.append(Dense(1))
    return ModelSpec((h, w, c), tuple(layers))


@settings(max_examples=80, deadline=None)
@given(specs())
def test_shape_soundness_and_param_count(spec):
    params = model.init_params(spec, np.random.default_rng(0))
    _, total = model.count_params(spec)
    assert total == sum(a.size for p in params if p is not None for a in p.values())
    x = np.random.default_rng(1).normal(size=(2,) + spec.input_shape)
    _, cache = model.forward(spec, params, x)
    seen = []
    for layer, c in zip(spec.layers, cache):
        if isinstance(layer, Conv):
            seen.append(c[2].shape[1:])
        elif isinstance(layer, MaxPool):
            seen.append(c[1].shape[1:])
        elif isinstance(layer, Flatten):
            seen.append((int(np.prod(c[1:])),))
        else:
            seen.append(c[1].shape[1:])
    assert seen == [tuple(s) for s in model.infer_shapes(spec)]


def test_flatten_roundtrip():
    spec = model.sequential_cnn(6, 16)
    params = model.init_params(spec, np.random.default_rng(0))
    flat = model.flatten_params(params)
    again = model.unflatten_params(spec, flat)
    assert np.array_equal(model.flatten_params(again), flat)
    with pytest.raises(ShapeError):
        model.unflatten_params(spec, flat[:-1])


def test_checkpoint_roundtrip(tmp_path):
    spec = model.sequential_cnn(6, 16, kernel=2, activation="relu6")
    params = model.init_params(spec, np.random.default_rng(5))
    path = save_checkpoint(tmp_path / "m.ckpt", spec, params, {"run": 3})
    spec2, params2, meta = load_checkpoint(path)
    assert spec2 == spec and meta == {"run": 3}
    assert model.flatten_params(params2).tobytes() == model.flatten_params(params).tobytes()
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(path)


# -- training -----------------------------------------------------------------


def _blobs(n=24, size=6, seed=0):
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    x = rng.normal(0, 0.3, (n, size, size, 3))
    x[y > 0, 1:4, 1:4, :] += 1.5
    return TrainData(x[:16], y[:16], x[16:], y[16:])


def test_training_is_deterministic():
    spec = ModelSpec((6, 6, 3), (Conv(4), MaxPool(), Flatten(), Dense(1)))
    cfg = TrainingConfig(Adam(), "squared_hinge", batch_size=5, epochs=4, seed=11)
    a = train(spec, _blobs(), cfg)
    b = train(spec, _blobs(), cfg)
    assert a.history == b.history
    assert model.flatten_params(a.params).tobytes() == model.flatten_params(b.params).tobytes()
    c = train(spec, _blobs(), TrainingConfig(Adam(), "squared_hinge", 5, 4, seed=12))
    assert model.flatten_params(c.params).tobytes() != model.flatten_params(a.params).tobytes()


def test_separable_points_reach_full_accuracy():
    spec = ModelSpec((1, 1, 2), (Flatten(), Dense(1)))
    x = np.array([[[[1.0, 0.5]]], [[[-1.0, -0.5]]]])
    y = np.array([1.0, -1.0])
    result = train(spec, TrainData(x, y, x, y), TrainingConfig(SGD(0.1), "hinge", 2, 100, 0))
    assert max(m.train_accuracy for m in result.history) == 1.0


def test_best_epoch_rule():
    spec = ModelSpec((6, 6, 3), (Conv(2), Flatten(), Dense(1)))
    result = train(spec, _blobs(), TrainingConfig(Adam(1e-2), "hinge", 8, 6, 0))
    best = result.best
    for i, m in enumerate(result.history, start=1):
        assert (m.val_accuracy, -m.val_loss) <= (best.val_accuracy, -best.val_loss)
        if (m.val_accuracy, m.val_loss) == (best.val_accuracy, best.val_loss):
            assert i >= result.best_epoch


def test_float32_training_runs():
    spec = ModelSpec((6, 6, 3), (Conv(2), MaxPool(), Flatten(), Dense(1)))
    result = train(spec, _blobs(), TrainingConfig(Adam(), "hinge", 8, 3, 0, dtype="float32"))
    assert result.params[0]["weight"].dtype == np.float32
    assert len(result.history) == 3


def test_training_errors():
    spec = ModelSpec((6, 6, 3), (Flatten(), Dense(1)))
    data = _blobs()
    with pytest.raises(TrainingError):
        train(spec, TrainData(data.x_train[:0], data.y_train[:0], data.x_val, data.y_val), TrainingConfig())
    ones = np.ones(len(data.y_train))
    with pytest.raises(TrainingError, match="single class"):
        train(spec, TrainData(data.x_train, ones, data.x_val, data.y_val), TrainingConfig())
