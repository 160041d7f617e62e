"""Two-output feed-forward networks built from phenotype specs.

A network is a stack of dense and dropout layers with two softmax heads:
the main head consumes the last hidden layer, the auxiliary head taps the
activations of hidden (dense) layer ``aux_index``, before any dropout
that follows it.  Training minimizes the joint loss

    L = CE(main) + CE(aux)

with plain mini-batch gradient descent; both cross-entropy terms carry
equal weight.  ``split`` cuts the trained model into the two standalone
partitions: the left one is the full stack with the main head, the right
one is the prefix up to the tap plus the auxiliary head.  Partition
weights are exact copies, so partition outputs match the full model's
heads bit for bit.

All arithmetic runs in float64; weights initialize uniformly in
``[-s, s]`` with ``s = sqrt(6 / (fan_in + fan_out))`` and zero biases.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, TrainingDivergedError
from .genome import PhenotypeSpec

PROB_FLOOR = 1e-12


def _relu(z):
    return np.maximum(z, 0.0)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


class _Dense:
    def __init__(self, w: np.ndarray, b: np.ndarray, activation: str):
        if activation not in ("relu", "sigmoid", "softmax"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.w = w
        self.b = b
        self.activation = activation
        self._x = None
        self._z = None
        self.dw = None
        self.db = None

    @property
    def fan_in(self) -> int:
        return self.w.shape[0]

    @property
    def fan_out(self) -> int:
        return self.w.shape[1]

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        z = x @ self.w + self.b
        if self.activation == "relu":
            a = _relu(z)
        elif self.activation == "sigmoid":
            a = _sigmoid(z)
        else:
            a = _softmax(z)
        if cache:
            self._x, self._z = x, z
        return a

    def backward(self, g: np.ndarray) -> np.ndarray:
        """Gradient through activation and affine map; g is dL/d(output)."""
        if self.activation == "relu":
            dz = g * (self._z > 0)
        elif self.activation == "sigmoid":
            a = _sigmoid(self._z)
            dz = g * a * (1.0 - a)
        else:
            raise ValueError("softmax layers receive dz directly")
        return self.backward_from_dz(dz)

    def backward_from_dz(self, dz: np.ndarray) -> np.ndarray:
        self.dw = self._x.T @ dz
        self.db = dz.sum(axis=0)
        return dz @ self.w.T

    def step(self, lr: float) -> None:
        self.w -= lr * self.dw
        self.b -= lr * self.db

    def copy(self) -> "_Dense":
        return _Dense(self.w.copy(), self.b.copy(), self.activation)


class _Dropout:
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x: np.ndarray, train: bool, rng: np.random.Generator | None) -> np.ndarray:
        # rng None with train=True means "cache but keep dropout inactive",
        # which the gradient check relies on
        if not train or self.rate == 0.0 or rng is None:
            self._mask = None
            return x
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, g: np.ndarray) -> np.ndarray:
        return g if self._mask is None else g * self._mask

    def copy(self) -> "_Dropout":
        return _Dropout(self.rate)


def _init_dense(fan_in: int, fan_out: int, activation: str, rng: np.random.Generator) -> _Dense:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-s, s, size=(fan_in, fan_out))
    return _Dense(w, np.zeros(fan_out), activation)


class Network:
    """Layer stack plus main head; aux head present until split."""

    def __init__(
        self,
        layers: list,
        main_head: _Dense,
        aux_head: _Dense | None,
        aux_tap: int | None,
        input_dim: int,
        class_count: int,
    ):
        self.layers = layers
        self.main_head = main_head
        self.aux_head = aux_head
        self.aux_tap = aux_tap  # index into layers of the tapped dense layer
        self.input_dim = input_dim
        self.class_count = class_count

    def forward(
        self,
        x: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Both heads' probabilities; aux slot is None after a split."""
        out = x
        tap = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, _Dropout):
                out = layer.forward(out, train, rng)
            else:
                out = layer.forward(out, cache=train)
            if i == self.aux_tap:
                tap = out
        main = self.main_head.forward(out, cache=train)
        aux = None
        if self.aux_head is not None:
            if tap is None:
                raise EvaluationError("aux head present but no tap layer recorded")
            aux = self.aux_head.forward(tap, cache=train)
        return main, aux

    def dense_layers(self) -> list[_Dense]:
        stack = [l for l in self.layers if isinstance(l, _Dense)]
        stack.append(self.main_head)
        if self.aux_head is not None:
            stack.append(self.aux_head)
        return stack


def build(
    spec: PhenotypeSpec,
    input_dim: int,
    class_count: int,
    rng: np.random.Generator,
) -> Network:
    """Instantiate a two-output network; wiring follows the spec's layer order."""
    layers: list = []
    fan_in = input_dim
    dense_seen = 0
    aux_tap = None
    aux_fan_in = None
    for layer in spec.layers:
        if layer.kind == "dense":
            layers.append(_init_dense(fan_in, layer.units, layer.activation, rng))
            fan_in = layer.units
            if dense_seen == spec.aux_index:
                aux_tap = len(layers) - 1
                aux_fan_in = layer.units
            dense_seen += 1
        elif layer.kind == "dropout":
            layers.append(_Dropout(layer.rate))
        else:
            raise ValueError(f"unknown layer kind {layer.kind!r}")
    if aux_tap is None:
        raise EvaluationError(f"aux_index {spec.aux_index} beyond the {dense_seen} dense layers")
    main_head = _init_dense(fan_in, class_count, "softmax", rng)
    aux_head = _init_dense(aux_fan_in, class_count, "softmax", rng)
    return Network(layers, main_head, aux_head, aux_tap, input_dim, class_count)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(probs[np.arange(labels.shape[0]), labels], PROB_FLOOR, None)
    return float(-np.mean(np.log(p)))


def joint_loss(net: Network, x: np.ndarray, y: np.ndarray) -> float:
    """CE(main) + CE(aux); plain CE(main) for split partitions."""
    main, aux = net.forward(x)
    loss = cross_entropy(main, y)
    if aux is not None:
        loss += cross_entropy(aux, y)
    return loss


@dataclass
class TrainReport:
    epochs_run: int
    final_loss: float
    history: list[float]


def _onehot(y: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((y.shape[0], classes))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def _train_batch(net: Network, x: np.ndarray, y: np.ndarray, lr: float, rng: np.random.Generator) -> float:
    main, aux = net.forward(x, train=True, rng=rng)
    n = x.shape[0]
    onehot = _onehot(y, net.class_count)
    loss = cross_entropy(main, y) + cross_entropy(aux, y)

    g = net.main_head.backward_from_dz((main - onehot) / n)
    d_tap = net.aux_head.backward_from_dz((aux - onehot) / n)
    for i in reversed(range(len(net.layers))):
        if i == net.aux_tap:
            g = g + d_tap
        g = net.layers[i].backward(g)

    for layer in net.dense_layers():
        layer.step(lr)
    return loss


def train(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    budget_epochs: int,
    learning_rate: float,
    batch_size: int,
    rng: np.random.Generator,
) -> TrainReport:
    """Mini-batch gradient descent on the joint loss.

    The per-epoch history records the exact sample-weighted mean of the
    batch losses.  A non-finite loss aborts with
    :class:`TrainingDivergedError`.
    """
    if budget_epochs < 1:
        raise ValueError(f"budget_epochs must be >= 1, got {budget_epochs}")
    if net.aux_head is None:
        raise EvaluationError("training requires the two-output network, not a partition")
    n = x.shape[0]
    if n == 0:
        raise EvaluationError("empty training set")
    batch = max(1, min(int(batch_size), n))
    history = []
    for _ in range(int(budget_epochs)):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss = _train_batch(net, x[idx], y[idx], learning_rate, rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss} during training")
            total += loss * idx.shape[0]
        history.append(total / n)
    return TrainReport(len(history), history[-1], history)


def split(net: Network) -> tuple[Network, Network]:
    """Standalone (left, right) partitions with copied weights.

    Left is the full stack plus the main head; right is the prefix up to
    the tapped layer plus the auxiliary head.
    """
    if net.aux_head is None or net.aux_tap is None:
        raise EvaluationError("network has already been split")
    left = Network(
        [l.copy() for l in net.layers],
        net.main_head.copy(),
        None,
        None,
        net.input_dim,
        net.class_count,
    )
    right = Network(
        [l.copy() for l in net.layers[: net.aux_tap + 1]],
        net.aux_head.copy(),
        None,
        None,
        net.input_dim,
        net.class_count,
    )
    return left, right


def evaluate_accuracy(net: Network, x: np.ndarray, y: np.ndarray) -> float:
    """Fraction of argmax predictions matching labels; dropout off."""
    if x.shape[0] == 0:
        raise EvaluationError("cannot evaluate accuracy on empty data")
    main, _ = net.forward(x)
    return float(np.mean(main.argmax(axis=1) == y))


def count_macs(net: Network) -> int:
    """Per-sample multiply-accumulates; dense layers and heads only."""
    return sum(l.fan_in * l.fan_out for l in net.dense_layers())


def _params(net: Network) -> list[np.ndarray]:
    out = []
    for layer in net.dense_layers():
        out.extend((layer.w, layer.b))
    return out


def finite_difference_check(
    net: Network, x: np.ndarray, y: np.ndarray, epsilon: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout is inactive during the check, so repeated calls agree exactly.
    The relative error uses ``|ga - gn| / max(1, |ga|, |gn|)`` to stay
    finite around zero gradients.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    main, aux = net.forward(x, train=True, rng=None)
    onehot = _onehot(y, net.class_count)
    n = x.shape[0]
    g = net.main_head.backward_from_dz((main - onehot) / n)
    d_tap = net.aux_head.backward_from_dz((aux - onehot) / n)
    for i in reversed(range(len(net.layers))):
        if i == net.aux_tap:
            g = g + d_tap
        g = net.layers[i].backward(g)

    grads = []
    for layer in net.dense_layers():
        grads.extend((layer.dw, layer.db))

    worst = 0.0
    for param, grad in zip(_params(net), grads):
        flat = param.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.shape[0]):
            keep = flat[j]
            flat[j] = keep + epsilon
            up = joint_loss(net, x, y)
            flat[j] = keep - epsilon
            down = joint_loss(net, x, y)
            flat[j] = keep
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(gflat[j] - numeric) / max(1.0, abs(gflat[j]), abs(numeric))
            worst = max(worst, err)
    return worst


def save_weights(net: Network, path) -> None:
    """Dump weights as a flat little-endian binary record.

    Layout: uint32 array count, then per array a uint32 ndim, ndim uint32
    dimensions, and the row-major float32 values.  Arrays appear as (W, b)
    pairs for each dense layer in stack order, then the main head, then
    the auxiliary head when present.
    """
    arrays = _params(net)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(arrays)))
        for arr in arrays:
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4").tobytes(order="C"))


def load_weights(path) -> list[np.ndarray]:
    """Read a weight dump back as a list of float32 arrays."""
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (count,) = take("<I")
    arrays = []
    for _ in range(count):
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I")
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        arrays.append(arr.copy())
    return arrays
