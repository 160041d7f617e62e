import numpy as np
import pytest

from evopower.errors import EvaluationError, TrainingDivergedError
from evopower.genome import GenomeConfig, LayerSpec, PhenotypeSpec, init_individual, to_phenotype
from evopower.grammar import load_packaged_grammar
from evopower.network import (
    build,
    count_macs,
    cross_entropy,
    evaluate_accuracy,
    finite_difference_check,
    joint_loss,
    load_weights,
    save_weights,
    split,
    train,
)

GRAMMAR = load_packaged_grammar("default")


def dense_spec(units, aux_index=0, lr=0.05, batch=16, activation="relu"):
    layers = tuple(LayerSpec("dense", units=u, activation=activation) for u in units)
    return PhenotypeSpec(layers, aux_index, lr, batch)


def two_blobs(n=60, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.3, size=(n // 2, 2)) + [0.0, 0.0]
    b = rng.normal(0.0, 0.3, size=(n // 2, 2)) + [3.0, 3.0]
    x = np.vstack([a, b])
    y = np.repeat([0, 1], n // 2)
    return x, y


def test_build_wiring_and_softmax_normalization():
    net = build(dense_spec([32, 16]), input_dim=12, class_count=10, rng=np.random.default_rng(0))
    assert net.aux_head.fan_in == 32  # taps layer 0
    assert net.main_head.fan_in == 16
    assert net.main_head.fan_out == net.aux_head.fan_out == 10
    x = np.random.default_rng(1).normal(size=(50, 12))
    main, aux = net.forward(x)
    assert np.allclose(main.sum(axis=1), 1.0, atol=1e-6)
    assert np.allclose(aux.sum(axis=1), 1.0, atol=1e-6)
    assert (main >= 0).all() and (aux >= 0).all()


def test_build_tap_skips_dropout_layers():
    spec = PhenotypeSpec(
        (
            LayerSpec("dense", units=8, activation="relu"),
            LayerSpec("dropout", rate=0.4),
            LayerSpec("dense", units=6, activation="relu"),
        ),
        aux_index=0,
        learning_rate=0.1,
        batch_size=8,
    )
    net = build(spec, input_dim=4, class_count=3, rng=np.random.default_rng(2))
    assert net.aux_tap == 0  # the dense layer itself, not the dropout after it
    assert net.aux_head.fan_in == 8


def test_weight_init_bounds_and_zero_bias():
    rng = np.random.default_rng(5)
    net = build(dense_spec([64, 32]), input_dim=100, class_count=10, rng=rng)
    for layer in net.dense_layers():
        s = np.sqrt(6.0 / (layer.fan_in + layer.fan_out))
        assert np.abs(layer.w).max() <= s
        assert np.all(layer.b == 0.0)


def test_train_reduces_loss_on_separable_task():
    x, y = two_blobs()
    net = build(dense_spec([8, 8], lr=0.5), input_dim=2, class_count=2, rng=np.random.default_rng(3))
    initial = joint_loss(net, x, y)
    report = train(net, x, y, budget_epochs=30, learning_rate=0.5, batch_size=16,
                   rng=np.random.default_rng(4))
    assert report.epochs_run == 30
    assert len(report.history) == 30
    assert report.final_loss < initial
    assert report.history[-1] == report.final_loss


def test_train_rejects_zero_budget():
    x, y = two_blobs()
    net = build(dense_spec([4, 4]), input_dim=2, class_count=2, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        train(net, x, y, budget_epochs=0, learning_rate=0.1, batch_size=8,
              rng=np.random.default_rng(0))


def test_zero_learning_rate_freezes_loss():
    x, y = two_blobs()
    net = build(dense_spec([8, 8]), input_dim=2, class_count=2, rng=np.random.default_rng(6))
    report = train(net, x, y, budget_epochs=5, learning_rate=0.0, batch_size=13,
                   rng=np.random.default_rng(7))
    assert max(report.history) - min(report.history) < 1e-12


def test_training_divergence_detected():
    x, y = two_blobs()
    net = build(dense_spec([4, 4]), input_dim=2, class_count=2, rng=np.random.default_rng(8))
    net.layers[0].w[0, 0] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(TrainingDivergedError):
        train(net, x, y, budget_epochs=1, learning_rate=0.1, batch_size=8,
              rng=np.random.default_rng(9))


def test_split_partitions_match_full_model_exactly():
    rng = np.random.default_rng(10)
    for seed in range(100):
        ind = init_individual(GRAMMAR, GenomeConfig(), np.random.default_rng(seed))
        spec = to_phenotype(ind, GRAMMAR)
        net = build(spec, input_dim=9, class_count=5, rng=np.random.default_rng(seed + 1))
        left, right = split(net)
        x = rng.normal(size=(10, 9))
        main, aux = net.forward(x)
        assert np.array_equal(left.forward(x)[0], main)
        assert np.array_equal(right.forward(x)[0], aux)


def test_split_right_partition_depth():
    for aux_index in (0, 1, 2):
        net = build(dense_spec([16, 16, 16, 16], aux_index=aux_index),
                    input_dim=6, class_count=4, rng=np.random.default_rng(11))
        _, right = split(net)
        assert len(right.dense_layers()) == aux_index + 2  # prefix + head


def test_split_partitions_are_independent_copies():
    net = build(dense_spec([8, 8]), input_dim=3, class_count=3, rng=np.random.default_rng(12))
    left, right = split(net)
    x = np.random.default_rng(13).normal(size=(5, 3))
    before = right.forward(x)[0].copy()
    left.layers[0].w[:] = 0.0
    net.layers[0].w[:] = 0.0
    assert np.array_equal(right.forward(x)[0], before)


def test_split_requires_two_output_network():
    net = build(dense_spec([8, 8]), input_dim=3, class_count=3, rng=np.random.default_rng(14))
    left, _ = split(net)
    with pytest.raises(EvaluationError):
        split(left)


def test_accuracy_perfect_and_chance():
    net = build(dense_spec([16, 16]), input_dim=20, class_count=10, rng=np.random.default_rng(15))
    x = np.random.default_rng(16).normal(size=(1000, 20))
    preds = net.forward(x)[0].argmax(axis=1)
    assert evaluate_accuracy(net, x, preds) == 1.0

    shuffled = np.random.default_rng(17).integers(0, 10, size=1000)
    acc = evaluate_accuracy(net, x, shuffled)
    assert abs(acc - 0.10) < 0.03


def test_accuracy_rejects_empty_data():
    net = build(dense_spec([4, 4]), input_dim=2, class_count=2, rng=np.random.default_rng(18))
    with pytest.raises(EvaluationError):
        evaluate_accuracy(net, np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_loss_additivity():
    net = build(dense_spec([8, 8]), input_dim=4, class_count=3, rng=np.random.default_rng(19))
    x = np.random.default_rng(20).normal(size=(40, 4))
    y = np.random.default_rng(21).integers(0, 3, size=40)
    main, aux = net.forward(x)
    assert abs(joint_loss(net, x, y) - (cross_entropy(main, y) + cross_entropy(aux, y))) < 1e-12


def min_abs_preactivation(net, x):
    # central differences are invalid within epsilon of a relu kink
    out = x
    worst = np.inf
    for layer in net.layers:
        z = out @ layer.w + layer.b
        if layer.activation == "relu":
            worst = min(worst, float(np.abs(z).min()))
        out = np.maximum(z, 0.0) if layer.activation == "relu" else 1.0 / (1.0 + np.exp(-z))
    return worst


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(22)
    checked = 0
    attempt = 0
    while checked < 20:
        attempt += 1
        units = [int(rng.integers(3, 8)) for _ in range(int(rng.integers(2, 4)))]
        act = "relu" if checked % 2 == 0 else "sigmoid"
        aux = int(rng.integers(0, len(units) - 1))
        net = build(dense_spec(units, aux_index=aux, activation=act),
                    input_dim=5, class_count=3, rng=np.random.default_rng(100 + attempt))
        x = np.random.default_rng(200 + attempt).normal(size=(7, 5))
        y = np.random.default_rng(300 + attempt).integers(0, 3, size=7)
        if act == "relu" and min_abs_preactivation(net, x) < 1e-3:
            continue  # kink within perturbation reach, resample
        assert finite_difference_check(net, x, y, epsilon=1e-5) < 1e-5
        checked += 1


def test_gradient_check_with_dropout_is_deterministic():
    spec = PhenotypeSpec(
        (
            LayerSpec("dense", units=6, activation="sigmoid"),
            LayerSpec("dropout", rate=0.5),
            LayerSpec("dense", units=5, activation="relu"),
        ),
        aux_index=0,
        learning_rate=0.1,
        batch_size=8,
    )
    net = build(spec, input_dim=4, class_count=3, rng=np.random.default_rng(23))
    x = np.random.default_rng(24).normal(size=(6, 4))
    y = np.random.default_rng(25).integers(0, 3, size=6)
    a = finite_difference_check(net, x, y)
    b = finite_difference_check(net, x, y)
    assert a == b and a < 1e-5


def test_gradient_check_zero_weight_net():
    net = build(dense_spec([4, 4]), input_dim=3, class_count=2, rng=np.random.default_rng(26))
    for layer in net.dense_layers():
        layer.w[:] = 0.0
    x = np.random.default_rng(27).normal(size=(5, 3))
    y = np.random.default_rng(28).integers(0, 2, size=5)
    err = finite_difference_check(net, x, y)
    assert np.isfinite(err)


def test_count_macs_reference_values():
    net = build(dense_spec([128, 128, 128], aux_index=0), input_dim=784, class_count=10,
                rng=np.random.default_rng(29))
    left, right = split(net)
    assert count_macs(left) == 784 * 128 + 128 * 128 + 128 * 128 + 128 * 10  # 134400
    assert count_macs(right) == 784 * 128 + 128 * 10
    assert count_macs(net) == count_macs(left) + 128 * 10


def test_weight_dump_round_trip(tmp_path):
    net = build(dense_spec([8, 8]), input_dim=5, class_count=3, rng=np.random.default_rng(30))
    path = tmp_path / "weights.bin"
    save_weights(net, path)
    arrays = load_weights(path)
    expected = []
    for layer in net.dense_layers():
        expected.extend((layer.w, layer.b))
    assert len(arrays) == len(expected) == 8  # 2 hidden + 2 heads, (W, b) each
    for got, want in zip(arrays, expected):
        assert got.dtype == np.float32
        assert np.array_equal(got, want.astype(np.float32))
    raw = path.read_bytes()
    assert int.from_bytes(raw[:4], "little") == 8


def test_forward_batch_invariance():
    # row-wise results do not depend on which other rows are in the batch
    net = build(dense_spec([8, 8]), input_dim=3, class_count=4, rng=np.random.default_rng(31))
    x = np.random.default_rng(32).normal(size=(10, 3))
    full, _ = net.forward(x)
    one, _ = net.forward(x[3:4])
    assert np.allclose(full[3], one[0], atol=1e-12)
