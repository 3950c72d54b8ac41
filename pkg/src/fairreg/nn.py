"""Reverse-mode differentiable dense networks.

A small tape-based engine, just large enough for the adversarial
dependence estimators and the fair training loop in this package:
dense layers with tanh or identity activations, inverted dropout,
batch standardization that back-propagates through the batch
statistics, and SGD/Adam updates in either gradient direction.

Everything is float64. Weight matrices are stored ``(output_width,
input_width)`` and applied as ``x @ W.T + b``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ACTIVATIONS",
    "LayerSpec",
    "Mlp",
    "Node",
    "OptimizerState",
    "Tape",
    "backward",
    "dense_stack",
    "forward",
    "mlp_apply",
    "mlp_apply_bound",
    "mlp_bind",
    "mlp_new",
    "optimizer_step",
    "standardize_batch",
]

ACTIVATIONS = ("tanh", "identity")
DIRECTIONS = ("descend", "ascend")


@dataclass(frozen=True)
class LayerSpec:
    """Shape and behaviour of one dense layer."""

    input_width: int
    output_width: int
    activation: str = "tanh"
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError(
                f"layer widths must be positive, got "
                f"{self.input_width}x{self.output_width}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")


def dense_stack(
    widths: tuple[int, ...] | list[int],
    hidden_activation: str = "tanh",
    dropout_rate: float = 0.0,
) -> tuple[LayerSpec, ...]:
    """Layer specs for a plain stack: hidden activations, identity output.

    ``widths`` lists every width including input and output, so
    ``dense_stack((1, 10, 10, 10, 1))`` is a three-hidden-layer net.
    Dropout, when nonzero, is applied after each hidden activation and
    never on the output layer.
    """
    if len(widths) < 2:
        raise ValueError("need at least an input and an output width")
    specs = []
    for i in range(len(widths) - 1):
        last = i == len(widths) - 2
        specs.append(
            LayerSpec(
                input_width=widths[i],
                output_width=widths[i + 1],
                activation="identity" if last else hidden_activation,
                dropout_rate=0.0 if last else dropout_rate,
            )
        )
    return tuple(specs)


@dataclass(frozen=True, eq=False)
class Mlp:
    """Dense network parameters. Treated as an immutable snapshot:
    optimizer steps return a new instance and never write in place."""

    layers: tuple[LayerSpec, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    rng_seed: int

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].output_width


def mlp_new(layers: tuple[LayerSpec, ...] | list[LayerSpec], seed: int) -> Mlp:
    """Build a network with Xavier-uniform weights and zero biases.

    Weights for a layer are drawn uniformly from
    ``[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`` using a
    generator seeded with ``seed``; layer order fixes the draw order, so
    equal seeds give bit-identical parameters.
    """
    layers = tuple(layers)
    if not layers:
        raise ValueError("network needs at least one layer")
    for a, b in zip(layers, layers[1:]):
        if a.output_width != b.input_width:
            raise ValueError(
                f"layer widths do not chain: {a.output_width} then {b.input_width}"
            )
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for spec in layers:
        bound = np.sqrt(6.0 / (spec.input_width + spec.output_width))
        weights.append(
            rng.uniform(-bound, bound, size=(spec.output_width, spec.input_width))
        )
        biases.append(np.zeros(spec.output_width))
    return Mlp(layers=layers, weights=tuple(weights), biases=tuple(biases), rng_seed=int(seed))


class Node:
    """Handle to one tape entry: an index plus the forward value."""

    __slots__ = ("idx", "value")

    def __init__(self, idx: int, value: np.ndarray):
        self.idx = idx
        self.value = value


def _accumulate(adjoints: list, idx: int, grad: np.ndarray) -> None:
    if adjoints[idx] is None:
        adjoints[idx] = grad
    else:
        adjoints[idx] = adjoints[idx] + grad


class Tape:
    """Wengert list of recorded operations.

    Forward calls append nodes; :meth:`gradients` walks the list in
    reverse once, accumulating adjoints by node index. A tape is
    single-use: a second backward pass raises.
    """

    def __init__(self) -> None:
        self._values: list[np.ndarray] = []
        self._backs: list[Callable | None] = []
        self._param_names: dict[int, str] = {}
        self._consumed = False
        self.output: Node | None = None

    def _record(self, value: np.ndarray, back: Callable | None) -> Node:
        idx = len(self._values)
        self._values.append(value)
        self._backs.append(back)
        return Node(idx, value)

    # -- leaves ---------------------------------------------------------

    def constant(self, value) -> Node:
        return self._record(np.asarray(value, dtype=np.float64), None)

    def param(self, value: np.ndarray, name: str) -> Node:
        node = self._record(np.asarray(value, dtype=np.float64), None)
        if name in self._param_names.values():
            raise ValueError(f"duplicate parameter name {name!r} on tape")
        self._param_names[node.idx] = name
        return node

    # -- operations -----------------------------------------------------

    def matmul(self, x: Node, w: Node) -> Node:
        """``x @ w.T`` with ``w`` in (output_width, input_width) layout."""
        value = x.value @ w.value.T

        def back(g, adj):
            _accumulate(adj, x.idx, g @ w.value)
            _accumulate(adj, w.idx, g.T @ x.value)

        return self._record(value, back)

    def bias_add(self, x: Node, b: Node) -> Node:
        value = x.value + b.value

        def back(g, adj):
            _accumulate(adj, x.idx, g)
            _accumulate(adj, b.idx, g.sum(axis=0))

        return self._record(value, back)

    def tanh(self, x: Node) -> Node:
        value = np.tanh(x.value)

        def back(g, adj):
            _accumulate(adj, x.idx, (1.0 - value * value) * g)

        return self._record(value, back)

    def dropout(self, x: Node, rate: float, rng: np.random.Generator) -> Node:
        """Inverted dropout: surviving entries are scaled by 1/(1-rate)."""
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        if rate == 0.0:
            return x
        mask = (rng.random(x.value.shape) >= rate) / (1.0 - rate)
        value = x.value * mask

        def back(g, adj):
            _accumulate(adj, x.idx, g * mask)

        return self._record(value, back)

    def standardize(self, x: Node, epsilon: float) -> Node:
        """Column-wise (x - mean) / sqrt(var + epsilon) over the batch axis.

        The batch mean and population variance are part of the recorded
        computation, so gradients flow through them rather than treating
        them as constants.
        """
        if epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        m = x.value.mean(axis=0, keepdims=True)
        var = x.value.var(axis=0, keepdims=True)
        scale = np.sqrt(var + epsilon)
        value = (x.value - m) / scale

        def back(g, adj):
            # standard batch-norm backward with the scale folded in
            g_mean = g.mean(axis=0, keepdims=True)
            gx_mean = (g * value).mean(axis=0, keepdims=True)
            _accumulate(adj, x.idx, (g - g_mean - value * gx_mean) / scale)

        return self._record(value, back)

    def mul(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ValueError(
                f"elementwise product needs equal shapes, got "
                f"{a.value.shape} and {b.value.shape}"
            )
        value = a.value * b.value

        def back(g, adj):
            _accumulate(adj, a.idx, g * b.value)
            _accumulate(adj, b.idx, g * a.value)

        return self._record(value, back)

    def add(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ValueError(
                f"add needs equal shapes, got {a.value.shape} and {b.value.shape}"
            )
        value = a.value + b.value

        def back(g, adj):
            _accumulate(adj, a.idx, g)
            _accumulate(adj, b.idx, g)

        return self._record(value, back)

    def add_const(self, x: Node, c) -> Node:
        c = np.asarray(c, dtype=np.float64)
        value = x.value + c
        if value.shape != x.value.shape:
            raise ValueError("constant must broadcast without changing shape")

        def back(g, adj):
            _accumulate(adj, x.idx, g)

        return self._record(value, back)

    def scale(self, x: Node, alpha: float) -> Node:
        alpha = float(alpha)
        value = alpha * x.value

        def back(g, adj):
            _accumulate(adj, x.idx, alpha * g)

        return self._record(value, back)

    def mean(self, x: Node) -> Node:
        value = np.asarray(x.value.mean())
        size = x.value.size
        shape = x.value.shape

        def back(g, adj):
            _accumulate(adj, x.idx, np.broadcast_to(g / size, shape))

        return self._record(value, back)

    def concat_cols(self, a: Node, b: Node) -> Node:
        if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[0] != b.value.shape[0]:
            raise ValueError("concat_cols expects 2-d inputs with equal row counts")
        ka = a.value.shape[1]
        value = np.concatenate([a.value, b.value], axis=1)

        def back(g, adj):
            _accumulate(adj, a.idx, g[:, :ka])
            _accumulate(adj, b.idx, g[:, ka:])

        return self._record(value, back)

    # -- reverse pass ---------------------------------------------------

    def gradients(self, root: Node, output_grad=1.0) -> dict[str, np.ndarray]:
        """Adjoints of every named parameter with respect to ``root``.

        ``output_grad`` seeds the reverse pass; scalars broadcast to the
        root's shape. Parameters recorded on the tape but not reachable
        from the root get zero gradients.
        """
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward pass")
        self._consumed = True
        g0 = np.asarray(output_grad, dtype=np.float64)
        if g0.shape != root.value.shape:
            try:
                g0 = np.broadcast_to(g0, root.value.shape).copy()
            except ValueError:
                raise ValueError(
                    f"output gradient shape {g0.shape} does not broadcast to "
                    f"root shape {root.value.shape}"
                ) from None
        adjoints: list = [None] * len(self._values)
        adjoints[root.idx] = g0
        for i in range(root.idx, -1, -1):
            back = self._backs[i]
            if back is None or adjoints[i] is None:
                continue
            back(adjoints[i], adjoints)
        grads = {}
        for idx, name in self._param_names.items():
            g = adjoints[idx]
            grads[name] = np.zeros_like(self._values[idx]) if g is None else g
        return grads


def mlp_bind(
    tape: Tape, mlp: Mlp, name: str = "", trainable: bool = True
) -> tuple[tuple[Node, Node], ...]:
    """Put the network's parameters on the tape once, as (weight, bias) node pairs.

    With ``trainable=False`` they enter as constants: gradients still flow
    through the network to its input, which is how the training loop
    back-propagates through a frozen adversary. Binding once and applying
    several times lets adjoints from every application accumulate on the
    same parameter nodes.
    """
    bound = []
    for i in range(len(mlp.layers)):
        if trainable:
            w = tape.param(mlp.weights[i], f"{name}w{i}")
            b = tape.param(mlp.biases[i], f"{name}b{i}")
        else:
            w = tape.constant(mlp.weights[i])
            b = tape.constant(mlp.biases[i])
        bound.append((w, b))
    return tuple(bound)


def mlp_apply_bound(
    tape: Tape,
    mlp: Mlp,
    bound: tuple[tuple[Node, Node], ...],
    x: Node,
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> Node:
    """Record one forward pass through already-bound parameters."""
    if x.value.ndim != 2 or x.value.shape[1] != mlp.input_width:
        raise ValueError(
            f"batch shape {x.value.shape} does not match input width {mlp.input_width}"
        )
    h = x
    for spec, (w, b) in zip(mlp.layers, bound):
        h = tape.bias_add(tape.matmul(h, w), b)
        if spec.activation == "tanh":
            h = tape.tanh(h)
        if training and spec.dropout_rate > 0.0:
            if dropout_rng is None:
                raise ValueError("training forward with dropout needs a generator")
            h = tape.dropout(h, spec.dropout_rate, dropout_rng)
    return h


def mlp_apply(
    tape: Tape,
    mlp: Mlp,
    x: Node,
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
    name: str = "",
    trainable: bool = True,
) -> Node:
    """Record the network's forward pass on ``tape`` and return the output node."""
    bound = mlp_bind(tape, mlp, name=name, trainable=trainable)
    return mlp_apply_bound(
        tape, mlp, bound, x, training=training, dropout_rng=dropout_rng
    )


def forward(
    mlp: Mlp, batch: np.ndarray, training: bool = False, seed: int = 0
) -> tuple[np.ndarray, Tape]:
    """Run the network on a batch, returning outputs and the recording tape.

    ``seed`` only matters when ``training`` is true and some layer has
    dropout; equal seeds then reproduce the same masks.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise ValueError(f"batch must be 2-d, got shape {batch.shape}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("batch contains non-finite values")
    tape = Tape()
    x = tape.constant(batch)
    rng = np.random.default_rng(seed)
    out = mlp_apply(tape, mlp, x, training=training, dropout_rng=rng)
    tape.output = out
    return out.value, tape


def backward(tape: Tape, output_grad: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every network parameter recorded by :func:`forward`.

    ``output_grad`` must match the forward output's shape (scalars
    broadcast). Keys are ``w0, b0, w1, b1, ...`` in layer order.
    """
    if tape.output is None:
        raise ValueError("tape has no recorded output; use the tape from forward()")
    return tape.gradients(tape.output, output_grad)


def standardize_batch(values: np.ndarray, epsilon: float = 1e-8) -> tuple[np.ndarray, float, float]:
    """Standardize a vector by its own mean and population variance.

    Returns ``(standardized, mean, variance)``. The variance sits under
    ``sqrt(var + epsilon)``, so with any positive epsilon a constant
    input maps to zeros instead of dividing by zero.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size < 2:
        raise ValueError(f"need at least 2 values to standardize, got {v.size}")
    m = v.mean()
    var = v.var()
    return (v - m) / np.sqrt(var + epsilon), float(m), float(var)


@dataclass
class OptimizerState:
    """Mutable optimizer bookkeeping for one network.

    ``kind`` is ``"adam"`` or ``"sgd"``. Adam moments are kept per
    parameter name and created on first use; ``step_count`` is shared by
    all parameters and advances once per :func:`optimizer_step` call.
    """

    learning_rate: float
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0.0:
            raise ValueError("learning rate must be positive")


def optimizer_step(
    state: OptimizerState,
    mlp: Mlp,
    gradients: dict[str, np.ndarray],
    direction: str = "descend",
) -> Mlp:
    """Apply one SGD or Adam update and return the updated network.

    ``direction="ascend"`` adds the update instead of subtracting it,
    which is how the adversaries do gradient ascent. ``gradients`` must
    hold an entry per parameter under the keys produced by
    :func:`backward`.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    sign = -1.0 if direction == "descend" else 1.0
    state.step_count += 1
    t = state.step_count
    new_weights = []
    new_biases = []
    for i, spec in enumerate(mlp.layers):
        updated = []
        for key, value in ((f"w{i}", mlp.weights[i]), (f"b{i}", mlp.biases[i])):
            if key not in gradients:
                raise ValueError(f"missing gradient for parameter {key!r}")
            g = np.asarray(gradients[key], dtype=np.float64)
            if g.shape != value.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{key!r} shape {value.shape}"
                )
            if state.kind == "sgd":
                delta = state.learning_rate * g
            else:
                m = state.m.get(key)
                v = state.v.get(key)
                if m is None:
                    m = np.zeros_like(value)
                    v = np.zeros_like(value)
                m = state.beta1 * m + (1.0 - state.beta1) * g
                v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
                state.m[key] = m
                state.v[key] = v
                m_hat = m / (1.0 - state.beta1 ** t)
                v_hat = v / (1.0 - state.beta2 ** t)
                delta = state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
            updated.append(value + sign * delta)
        new_weights.append(updated[0])
        new_biases.append(updated[1])
    return dataclasses.replace(
        mlp, weights=tuple(new_weights), biases=tuple(new_biases)
    )
