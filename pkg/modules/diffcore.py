"""
Reservoir Mask Workbench - Differentiation Core
Reverse-mode gradient tape for the vector compositions used by masks,
reservoir and actor-critic heads
"""

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .base import ConfigurationError, UsageError


class Parameter:
    """Trainable float64 tensor identified by a unique name"""

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


# Returns one gradient per parent (None when the parent needs none)
VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class Node:
    """One recorded value on a tape"""
    value: np.ndarray
    op: str
    parents: Tuple['Node', ...] = ()
    vjp: Optional[VJP] = None
    requires_grad: bool = False
    parameter: Optional[Parameter] = None
    index: int = -1

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)


class Tape:
    """
    Ordered record of primitive operations

    Nodes are appended in evaluation order, so every node's operands precede it.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.memo: Dict[str, Node] = {}
        self._watched: Dict[str, Node] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, node: Node) -> Node:
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def watch(self, parameter: Parameter) -> Node:
        """Leaf node for a trainable parameter (one per parameter per tape)"""
        node = self._watched.get(parameter.name)
        if node is None:
            node = self._append(Node(parameter.value, "parameter", requires_grad=True, parameter=parameter))
            self._watched[parameter.name] = node
        elif node.parameter is not parameter:
            raise UsageError(f"Two parameters share the name '{parameter.name}'")
        return node

    def constant(self, value) -> Node:
        """Leaf node that never receives gradient"""
        return self._append(Node(np.asarray(value, dtype=np.float64), "constant"))

    def record(self, op: str, value: np.ndarray, parents: Tuple[Node, ...], vjp: VJP) -> Node:
        requires_grad = any(p.requires_grad for p in parents)
        return self._append(Node(value, op, parents, vjp if requires_grad else None, requires_grad))

    @property
    def parameters(self) -> List[Parameter]:
        return [node.parameter for node in self._watched.values()]


class GradientTable:
    """Per-parameter gradient buffers keyed by parameter name"""

    def __init__(self, parameters: Iterable[Parameter] = ()):
        self._params: Dict[str, Parameter] = {}
        self._grads: Dict[str, np.ndarray] = {}
        for param in parameters:
            self.register(param)

    def register(self, param: Parameter):
        if param.name not in self._grads:
            self._params[param.name] = param
            self._grads[param.name] = np.zeros_like(param.value)

    def accumulate(self, param: Parameter, grad: np.ndarray):
        self.register(param)
        self._grads[param.name] += grad

    def __getitem__(self, key) -> np.ndarray:
        name = key.name if isinstance(key, Parameter) else key
        return self._grads[name]

    def __contains__(self, key) -> bool:
        name = key.name if isinstance(key, Parameter) else key
        return name in self._grads

    def get(self, param: Parameter) -> np.ndarray:
        """Gradient of a parameter, zeros when the loss never touched it"""
        grad = self._grads.get(param.name)
        return np.zeros_like(param.value) if grad is None else grad

    def items(self):
        return self._grads.items()

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self._grads.values())))

    def nonfinite(self) -> List[str]:
        """Names of parameters whose gradient holds NaN or Inf"""
        return [name for name, grad in self._grads.items() if not np.all(np.isfinite(grad))]

    def is_finite(self) -> bool:
        return not self.nonfinite()


def _check_vector(node: Node, name: str, op: str):
    if node.value.ndim != 1:
        raise ConfigurationError(f"{op}: '{name}' must be a vector, got shape {node.shape}", key=name)


def _check_scalar(node: Node, name: str, op: str):
    if node.value.ndim != 0:
        raise ConfigurationError(f"{op}: '{name}' must be a scalar, got shape {node.shape}", key=name)


def _check_same_shape(x: Node, y: Node, op: str):
    if x.shape != y.shape:
        raise ConfigurationError(f"{op}: shape mismatch {x.shape} vs {y.shape}", key=op)


def affine(W: Node, b: Optional[Node], x: Node, tape: Tape) -> Node:
    """
    Wx + b for a vector x, or X W^T + b row by row for a T x n matrix X
    (b may be None)
    """
    if x.value.ndim not in (1, 2):
        raise ConfigurationError(f"affine: 'x' must be a vector or a matrix of rows, got shape {x.shape}", key="x")
    if W.value.ndim != 2 or W.shape[1] != x.shape[-1]:
        raise ConfigurationError(f"affine: W shape {W.shape} does not match x length {x.shape[-1]}", key="W")
    batched = x.value.ndim == 2
    value = x.value @ W.value.T if batched else W.value @ x.value
    parents = (W, x)
    if b is not None:
        if b.shape != (W.shape[0],):
            raise ConfigurationError(f"affine: b shape {b.shape} does not match W rows {W.shape[0]}", key="b")
        value = value + b.value
        parents = (W, x, b)

    def vjp(g):
        if batched:
            grads = [g.T @ x.value if W.requires_grad else None,
                     g @ W.value if x.requires_grad else None]
            if b is not None:
                grads.append(np.sum(g, axis=0))
        else:
            grads = [np.outer(g, x.value) if W.requires_grad else None,
                     W.value.T @ g if x.requires_grad else None]
            if b is not None:
                grads.append(g)
        return grads

    return tape.record("affine", value, parents, vjp)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) <= 1 never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def elementwise(kind: str, x: Node, tape: Tape) -> Node:
    """Componentwise tanh, sigmoid, exp, square or rsqrt"""
    v = x.value
    if kind == "tanh":
        y = np.tanh(v)
        derivative = lambda: 1.0 - y * y
    elif kind == "sigmoid":
        y = _sigmoid(v)
        derivative = lambda: y * (1.0 - y)
    elif kind == "exp":
        y = np.exp(v)
        derivative = lambda: y
    elif kind == "square":
        y = v * v
        derivative = lambda: 2.0 * v
    elif kind == "rsqrt":
        y = 1.0 / np.sqrt(v)
        derivative = lambda: -0.5 * y / v
    else:
        raise ConfigurationError(f"Unknown elementwise kind '{kind}'", key="kind")
    return tape.record(kind, y, (x,), lambda g: (g * derivative(),))


def softmax(x: Node, tape: Tape) -> Node:
    """Probability vector with max-subtraction"""
    _check_vector(x, "x", "softmax")
    if x.shape[0] < 1:
        raise ConfigurationError("softmax: empty input", key="x")
    z = np.exp(x.value - np.max(x.value))
    p = z / np.sum(z)
    return tape.record("softmax", p, (x,), lambda g: (p * (g - np.dot(g, p)),))


def log_softmax(x: Node, tape: Tape) -> Node:
    """
    x - max(x) - log(sum(exp(x - max(x)))), row by row for a matrix

    Finite for any finite logits, however far apart.
    """
    if x.value.ndim not in (1, 2):
        raise ConfigurationError(f"log_softmax: 'x' must be a vector or a matrix of rows, got shape {x.shape}",
                                 key="x")
    if x.shape[-1] < 1:
        raise ConfigurationError("log_softmax: empty input", key="x")
    shifted = x.value - np.max(x.value, axis=-1, keepdims=True)
    y = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    p = np.exp(y)
    return tape.record("log_softmax", y, (x,), lambda g: (g - p * np.sum(g, axis=-1, keepdims=True),))


def stack(nodes: Sequence[Node], tape: Tape) -> Node:
    """Equal-shape nodes stacked along a new leading axis"""
    if not nodes:
        raise UsageError("stack: no nodes")
    for node in nodes[1:]:
        _check_same_shape(nodes[0], node, "stack")
    value = np.stack([node.value for node in nodes])
    return tape.record("stack", value, tuple(nodes), lambda g: tuple(g[i] for i in range(len(nodes))))


def gather(x: Node, indices: Sequence[int], tape: Tape) -> Node:
    """Component indices[t] of row t of a T x k matrix"""
    if x.value.ndim != 2:
        raise ConfigurationError(f"gather: 'x' must be a matrix, got shape {x.shape}", key="x")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.shape != (x.shape[0],):
        raise UsageError(f"gather: {idx.size} indices for {x.shape[0]} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[1]):
        raise UsageError(f"gather: index out of range for row length {x.shape[1]}")
    rows = np.arange(x.shape[0])

    def vjp(g):
        grad = np.zeros(x.shape)
        grad[rows, idx] = g
        return (grad,)

    return tape.record("gather", x.value[rows, idx], (x,), vjp)


def hadamard(x: Node, y: Node, tape: Tape) -> Node:
    _check_same_shape(x, y, "hadamard")
    return tape.record("hadamard", x.value * y.value, (x, y),
                       lambda g: (g * y.value, g * x.value))


def add(x: Node, y: Node, tape: Tape) -> Node:
    _check_same_shape(x, y, "add")
    return tape.record("add", x.value + y.value, (x, y), lambda g: (g, g))


def sub(x: Node, y: Node, tape: Tape) -> Node:
    _check_same_shape(x, y, "sub")
    return tape.record("sub", x.value - y.value, (x, y), lambda g: (g, -g))


def scale(x: Node, c: float, tape: Tape) -> Node:
    """Multiply by a constant"""
    c = float(c)
    return tape.record("scale", c * x.value, (x,), lambda g: (c * g,))


def offset(x: Node, c: float, tape: Tape) -> Node:
    """Add a constant"""
    return tape.record("offset", x.value + float(c), (x,), lambda g: (g,))


def shift(x: Node, s: Node, tape: Tape) -> Node:
    """Vector plus scalar node"""
    _check_scalar(s, "s", "shift")
    return tape.record("shift", x.value + s.value, (x, s), lambda g: (g, np.sum(g)))


def scale_by(x: Node, s: Node, tape: Tape) -> Node:
    """Vector times scalar node"""
    _check_scalar(s, "s", "scale_by")
    return tape.record("scale_by", x.value * s.value, (x, s),
                       lambda g: (g * s.value, np.dot(g, x.value)))


def reduce_sum(x: Node, tape: Tape) -> Node:
    return tape.record("sum", np.sum(x.value), (x,), lambda g: (np.full(x.shape, g),))


def reduce_mean(x: Node, tape: Tape) -> Node:
    n = x.value.size
    return tape.record("mean", np.sum(x.value) / n, (x,), lambda g: (np.full(x.shape, g / n),))


def variance(x: Node, tape: Tape) -> Node:
    """Population variance"""
    n = x.value.size
    centered = x.value - np.sum(x.value) / n
    return tape.record("variance", np.sum(centered * centered) / n, (x,),
                       lambda g: (g * 2.0 * centered / n,))


def pick(x: Node, i: int, tape: Tape) -> Node:
    """Scalar component i of a vector"""
    _check_vector(x, "x", "pick")
    if not 0 <= i < x.shape[0]:
        raise UsageError(f"pick: index {i} out of range for length {x.shape[0]}")

    def vjp(g):
        grad = np.zeros(x.shape)
        grad[i] = g
        return (grad,)

    return tape.record("pick", np.asarray(x.value[i]), (x,), vjp)


def total(terms: Sequence[Node], tape: Tape) -> Node:
    """Sum of scalar nodes"""
    if not terms:
        raise UsageError("total: no terms")
    for term in terms:
        _check_scalar(term, "term", "total")
    value = np.asarray(sum(float(t.value) for t in terms))
    return tape.record("total", value, tuple(terms), lambda g: tuple(g for _ in terms))


def clamp(x: Node, lo: float, hi: float, tape: Tape) -> Node:
    """Clip into [lo, hi]; gradient passes only where x is inside"""
    inside = (x.value >= lo) & (x.value <= hi)
    return tape.record("clamp", np.clip(x.value, lo, hi), (x,), lambda g: (g * inside,))


def backward(loss: Node, tape: Tape) -> GradientTable:
    """
    Reverse sweep from a scalar loss

    Args:
        loss: Scalar node recorded on tape
        tape: Tape holding the forward pass

    Returns:
        GradientTable with an entry for every parameter watched on the tape;
        parameters the loss never reaches keep all-zero buffers
    """
    if loss.value.ndim != 0:
        raise UsageError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not 0 <= loss.index < len(tape.nodes) or tape.nodes[loss.index] is not loss:
        raise UsageError("backward: loss node is not recorded on this tape")

    table = GradientTable(tape.parameters)
    grads: List[Optional[np.ndarray]] = [None] * (loss.index + 1)
    # buffers allocated here; a vjp result may alias its input and is never written to
    owned = [False] * (loss.index + 1)
    grads[loss.index] = np.asarray(1.0)

    for node in reversed(tape.nodes[:loss.index + 1]):
        g = grads[node.index]
        if g is None or not node.requires_grad:
            continue
        grads[node.index] = None
        if node.parameter is not None:
            table.accumulate(node.parameter, g)
            continue
        for parent, parent_grad in zip(node.parents, node.vjp(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            current = grads[parent.index]
            if current is None:
                grads[parent.index] = parent_grad
            elif owned[parent.index]:
                current += parent_grad
            else:
                buffer = np.array(current, dtype=np.float64)
                buffer += parent_grad
                grads[parent.index] = buffer
                owned[parent.index] = True
    return table


def grad_check(f: Callable[[Tape], Node], params: Sequence[Parameter], step: float = 1e-5,
               max_coords: Optional[int] = None, seed: int = 0, floor: float = 1e-12) -> float:
    """
    Compare backward against central differences

    Args:
        f: Builds a scalar loss on the given tape, watching the parameters it uses
        params: Parameters to perturb
        step: Finite-difference step
        max_coords: Coordinates sampled per parameter (all when None)
        seed: Sampling seed
        floor: Added to the denominator; raise it to compare coordinates
            with near-zero gradient absolutely

    Returns:
        Max over sampled coordinates of
        |analytic - central| / (|analytic| + |central| + floor)
    """
    if step <= 0:
        raise UsageError("grad_check: step must be positive")
    tape = Tape()
    table = backward(f(tape), tape)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for param in params:
        analytic = table.get(param)
        size = param.value.size
        if max_coords is not None and size > max_coords:
            coords = rng.choice(size, size=max_coords, replace=False)
        else:
            coords = np.arange(size)
        flat = param.value.reshape(-1)
        for k in coords:
            original = flat[k]
            flat[k] = original + step
            plus = f(Tape()).item()
            flat[k] = original - step
            minus = f(Tape()).item()
            flat[k] = original
            central = (plus - minus) / (2.0 * step)
            a = float(analytic.reshape(-1)[k])
            worst = max(worst, abs(a - central) / (abs(a) + abs(central) + floor))
    return worst
