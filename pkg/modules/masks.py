"""
Reservoir Mask Workbench - Masks Module
Input transformations applied between the agent inputs and the reservoir:
identity, layer normalization with decayed affine parameters, bounded vector
filter and the over-parameterized EPIC mask
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .base import MaskKind, require
from .diffcore import (Node, Parameter, Tape, add, affine, clamp, elementwise, grad_check,
                       hadamard, offset, reduce_mean, reduce_sum, scale, scale_by, shift,
                       variance)


EPIC_INITS = ("zeros", "scaled_normal")

# Keeps mask values strictly inside (min_val, max_val) once sigmoid saturates
SIGMOID_FLOOR = 1e-15

DEFAULT_DECAY = 1e-4
DEFAULT_PENALTY = 1e-5

KIND_LABELS = {
    MaskKind.IDENTITY: "No mask",
    MaskKind.LAYERNORM: "LayerNorm",
    MaskKind.VECTOR_FILTER: "Vector filter",
}


def kind_label(kind: MaskKind, u_length: Optional[int] = None) -> str:
    """Legend label; EPIC carries the length of u in parentheses"""
    if kind == MaskKind.EPIC:
        return f"EPIC ({u_length})"
    return KIND_LABELS[kind]


@dataclass
class MaskSpec:
    """Mask variant and its bounds"""
    kind: MaskKind = MaskKind.IDENTITY
    min_val: float = 0.25
    max_val: float = 5.0
    reg_coef: Optional[float] = None
    u_multiplier: int = 4
    ln_scale_init: float = 2.5
    epsilon: float = 1e-5
    layernorm_centering: bool = True
    epic_init: str = "zeros"

    def validate(self):
        require(self.min_val < self.max_val, "mask.min_val", "min_val < max_val")
        require(self.reg_coef is None or self.reg_coef >= 0, "mask.reg_coef", "reg_coef >= 0")
        require(self.u_multiplier >= 1, "mask.u_multiplier", "u_multiplier >= 1")
        require(self.epsilon > 0, "mask.epsilon", "epsilon > 0")
        require(self.epic_init in EPIC_INITS, "mask.epic_init",
                f"epic_init must be one of {', '.join(EPIC_INITS)}")

    @property
    def penalty_coef(self) -> float:
        """reg_coef, or the per-kind default when unset"""
        if self.reg_coef is not None:
            return self.reg_coef
        return DEFAULT_DECAY if self.kind == MaskKind.LAYERNORM else DEFAULT_PENALTY

    def u_length(self, input_dim: int) -> int:
        return input_dim * self.u_multiplier

    def label(self, input_dim: int) -> str:
        """Legend label"""
        return kind_label(self.kind, self.u_length(input_dim))

    def slug(self, input_dim: int) -> str:
        """File-name token"""
        if self.kind == MaskKind.EPIC:
            return f"epic-u{self.u_length(input_dim)}"
        return self.kind.value


@dataclass
class MaskParams:
    """Trainable parameters of one mask variant plus the frozen random vector"""
    kind: MaskKind
    input_dim: int
    parameters: Dict[str, Parameter] = field(default_factory=dict)
    u: Optional[np.ndarray] = None

    def __getitem__(self, name: str) -> Parameter:
        return self.parameters[name]

    def trainable(self) -> List[Parameter]:
        return list(self.parameters.values())


@dataclass
class MaskOutput:
    """Masked input, mask values and regularization penalty"""
    masked_input: Node
    mask_values: np.ndarray
    penalty: Node


def init_mask_params(spec: MaskSpec, input_dim: int, seed: int) -> MaskParams:
    """
    Initial parameters for the configured variant

    layernorm: gamma = ln_scale_init, beta = 0; vector_filter: b = 0;
    epic: u ~ N(0, 1) of length input_dim * u_multiplier (frozen), W and b
    zero unless epic_init is 'scaled_normal'
    """
    spec.validate()
    require(input_dim >= 1, "input_dim", "input_dim >= 1")
    params = MaskParams(kind=spec.kind, input_dim=input_dim)
    rng = np.random.default_rng(seed)

    if spec.kind == MaskKind.LAYERNORM:
        params.parameters["mask.gamma"] = Parameter("mask.gamma", np.full(input_dim, spec.ln_scale_init))
        params.parameters["mask.beta"] = Parameter("mask.beta", np.zeros(input_dim))
    elif spec.kind == MaskKind.VECTOR_FILTER:
        params.parameters["mask.b"] = Parameter("mask.b", np.zeros(input_dim))
    elif spec.kind == MaskKind.EPIC:
        u = rng.standard_normal(spec.u_length(input_dim))
        u.setflags(write=False)
        params.u = u
        if spec.epic_init == "scaled_normal":
            W = rng.standard_normal((input_dim, u.size)) / np.sqrt(u.size)
        else:
            W = np.zeros((input_dim, u.size))
        params.parameters["mask.W"] = Parameter("mask.W", W)
        params.parameters["mask.b"] = Parameter("mask.b", np.zeros(input_dim))
    return params


def _bounded_mask(logits: Node, spec: MaskSpec, tape: Tape) -> Node:
    """(max - min) * sigmoid(logits) + min"""
    squashed = clamp(elementwise("sigmoid", logits, tape), SIGMOID_FLOOR, 1.0 - SIGMOID_FLOOR, tape)
    return offset(scale(squashed, spec.max_val - spec.min_val, tape), spec.min_val, tape)


def _static_mask(params: MaskParams, spec: MaskSpec, tape: Tape):
    """Input-independent mask and its penalty, built once per tape"""
    if "mask" not in tape.memo:
        if params.kind == MaskKind.EPIC:
            u = tape.constant(params.u)
            logits = affine(tape.watch(params["mask.W"]), tape.watch(params["mask.b"]), u, tape)
        else:
            logits = tape.watch(params["mask.b"])
        mask = _bounded_mask(logits, spec, tape)
        tape.memo["mask"] = mask
        tape.memo["mask_penalty"] = scale(reduce_mean(mask, tape), spec.penalty_coef, tape)
    return tape.memo["mask"], tape.memo["mask_penalty"]


def _layernorm(params: MaskParams, spec: MaskSpec, x: Node, tape: Tape) -> MaskOutput:
    gamma = tape.watch(params["mask.gamma"])
    beta = tape.watch(params["mask.beta"])
    mean = reduce_mean(x, tape)
    inv_std = elementwise("rsqrt", offset(variance(x, tape), spec.epsilon, tape), tape)
    if spec.layernorm_centering:
        numerator = shift(x, scale(mean, -1.0, tape), tape)
    else:
        # Literal E[X] numerator, broadcast over every element
        numerator = shift(tape.constant(np.zeros(x.shape)), mean, tape)
    normalized = scale_by(numerator, inv_std, tape)
    y = add(hadamard(normalized, gamma, tape), beta, tape)

    if "mask_penalty" not in tape.memo:
        squares = add(reduce_sum(elementwise("square", gamma, tape), tape),
                      reduce_sum(elementwise("square", beta, tape), tape), tape)
        tape.memo["mask_penalty"] = scale(squares, spec.penalty_coef / 2.0, tape)
    mask_values = params["mask.gamma"].value * float(inv_std.value)
    return MaskOutput(y, mask_values, tape.memo["mask_penalty"])


def apply_mask(params: MaskParams, spec: MaskSpec, x: Node, tape: Tape) -> MaskOutput:
    """
    Transform one input vector

    Args:
        params: Mask parameters
        spec: Mask configuration
        x: Input vector node of length params.input_dim
        tape: Tape recording the episode

    Returns:
        MaskOutput; the penalty node is shared by every call on the same tape
    """
    require(x.shape == (params.input_dim,), "x", f"input length must be {params.input_dim}")
    if params.kind == MaskKind.IDENTITY:
        if "mask_penalty" not in tape.memo:
            tape.memo["mask_penalty"] = tape.constant(0.0)
        return MaskOutput(x, np.ones(params.input_dim), tape.memo["mask_penalty"])
    if params.kind == MaskKind.LAYERNORM:
        return _layernorm(params, spec, x, tape)
    mask, penalty = _static_mask(params, spec, tape)
    return MaskOutput(hadamard(x, mask, tape), mask.value, penalty)


def mask_values(params: MaskParams, spec: MaskSpec) -> Optional[np.ndarray]:
    """Current mask of an input-independent variant (None for layernorm)"""
    if params.kind == MaskKind.IDENTITY:
        return np.ones(params.input_dim)
    if params.kind == MaskKind.LAYERNORM:
        return None
    mask, _ = _static_mask(params, spec, Tape())
    return mask.value


def penalty_gradient_check(params: MaskParams, spec: MaskSpec, x: np.ndarray, step: float = 1e-5) -> float:
    """Finite-difference check of the penalty gradient over all mask parameters"""
    if not params.trainable():
        return 0.0

    def penalty(tape: Tape) -> Node:
        return apply_mask(params, spec, tape.constant(x), tape).penalty

    return grad_check(penalty, params.trainable(), step=step)
