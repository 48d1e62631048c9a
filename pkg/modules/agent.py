"""
Reservoir Mask Workbench - Agent Module
Entropy-regularized actor-critic decoder reading the reservoir state
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .base import NumericalError, UsageError, read_container, require, write_container
from .diffcore import (GradientTable, Node, Parameter, Tape, affine, elementwise, gather, hadamard,
                       log_softmax, pick, reduce_sum, scale, softmax, stack, sub, total)
from .reservoir import ReservoirState


OUTPUT_INITS = ("zeros", "uniform")


@dataclass
class AgentSpec:
    """Actor-critic hyperparameters"""
    lr: float = 1e-4
    beta_e: float = 0.001
    n_hidden: int = 256
    k_layers: int = 2
    discount: float = 0.9
    value_coef: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    output_init: str = "zeros"

    def validate(self):
        require(self.lr > 0, "agent.lr", "lr > 0")
        require(self.beta_e >= 0, "agent.beta_e", "beta_e >= 0")
        require(0 < self.discount <= 1, "agent.discount", "0 < discount <= 1")
        require(self.value_coef >= 0, "agent.value_coef", "value_coef >= 0")
        require(self.n_hidden >= 1, "agent.n_hidden", "n_hidden >= 1")
        require(self.k_layers >= 1, "agent.k_layers", "k_layers >= 1")
        require(0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1, "agent.adam_beta1",
                "Adam betas must lie in [0, 1)")
        require(self.adam_eps > 0, "agent.adam_eps", "adam_eps > 0")
        require(self.output_init in OUTPUT_INITS, "agent.output_init",
                f"output_init must be one of {', '.join(OUTPUT_INITS)}")


Layer = Tuple[Parameter, Parameter]


@dataclass
class AgentParams:
    """Actor and critic MLP layers as (W, b) pairs"""
    actor: List[Layer]
    critic: List[Layer]

    def trainable(self) -> List[Parameter]:
        return [p for layer in self.actor + self.critic for p in layer]


@dataclass
class StepRecord:
    """One decision of an episode"""
    state: ReservoirState
    action: int
    reward: float
    probs: Optional[np.ndarray] = None


@dataclass
class PolicyHeads:
    """Actor log-probabilities (T x num_actions) and critic values (T) for a whole episode"""
    log_probs: Node
    values: Node


@dataclass
class Trajectory:
    """Recorded episode"""
    steps: List[StepRecord] = field(default_factory=list)
    heads: Optional[PolicyHeads] = None
    mask_penalty: Optional[Node] = None
    mask_values: Optional[np.ndarray] = None
    oracle_reward: float = 0.0

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def actions(self) -> List[int]:
        return [s.action for s in self.steps]

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.reward for s in self.steps])

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))

    def returns(self, discount: float) -> np.ndarray:
        """Discounted return from every step"""
        out = np.zeros(len(self.steps))
        running = 0.0
        for t in range(len(self.steps) - 1, -1, -1):
            running = self.steps[t].reward + discount * running
            out[t] = running
        return out

    def advantages(self, discount: float) -> np.ndarray:
        """Monte-Carlo return minus value estimate"""
        if self.heads is None:
            raise UsageError("Trajectory has no critic values yet")
        return self.returns(discount) - self.heads.values.value


def _init_mlp(rng: np.random.Generator, prefix: str, dims: Sequence[int], output_init: str) -> List[Layer]:
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        bound = 1.0 / np.sqrt(fan_in)
        if last and output_init == "zeros":
            W = np.zeros((fan_out, fan_in))
        else:
            W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append((Parameter(f"{prefix}.{i}.W", W), Parameter(f"{prefix}.{i}.b", np.zeros(fan_out))))
    return layers


def init_agent_params(spec: AgentSpec, state_dim: int, num_actions: int, seed: int) -> AgentParams:
    """
    Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) hidden layers, zero output layers
    and zero biases

    Args:
        spec: Agent hyperparameters
        state_dim: Reservoir size N
        num_actions: Number of arms
        seed: Initialization seed
    """
    spec.validate()
    require(state_dim >= 1 and num_actions >= 1, "state_dim", "dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    hidden = [spec.n_hidden] * spec.k_layers
    actor = _init_mlp(rng, "actor", [state_dim] + hidden + [num_actions], spec.output_init)
    critic = _init_mlp(rng, "critic", [state_dim] + hidden + [1], spec.output_init)
    return AgentParams(actor=actor, critic=critic)


def _forward_mlp(layers: List[Layer], x: Node, tape: Tape) -> Node:
    for i, (W, b) in enumerate(layers):
        x = affine(tape.watch(W), tape.watch(b), x, tape)
        if i < len(layers) - 1:
            x = elementwise("tanh", x, tape)
    return x


def policy_value(params: AgentParams, state: ReservoirState, tape: Tape) -> Tuple[Node, Node]:
    """Action probabilities (softmax over actor logits) and scalar critic value"""
    probs = softmax(_forward_mlp(params.actor, state.h, tape), tape)
    value = pick(_forward_mlp(params.critic, state.h, tape), 0, tape)
    return probs, value


def policy_heads(params: AgentParams, states: Sequence[ReservoirState], tape: Tape) -> PolicyHeads:
    """
    Actor and critic over every state of an episode at once

    The states are stacked into a T x N matrix, so each layer is one matrix
    product forward and one summed outer product backward.

    Args:
        params: Actor-critic parameters
        states: Reservoir states in time order
        tape: Tape holding the states

    Returns:
        PolicyHeads with log-softmax actor outputs and critic values
    """
    if not states:
        raise UsageError("policy_heads needs at least one state")
    hs = stack([s.h for s in states], tape)
    log_probs = log_softmax(_forward_mlp(params.actor, hs, tape), tape)
    values = gather(_forward_mlp(params.critic, hs, tape), [0] * len(states), tape)
    return PolicyHeads(log_probs, values)


def log_prob_and_entropy(log_probs: Node, action: Union[int, Sequence[int]], tape: Tape) -> Tuple[Node, Node]:
    """
    log pi(a) and H(pi) = -sum exp(log pi) log pi

    For a T x num_actions matrix, action holds one action per row; the log
    probabilities come back as a vector and the entropy is summed over rows.
    """
    probs = elementwise("exp", log_probs, tape)
    entropy = scale(reduce_sum(hadamard(probs, log_probs, tape), tape), -1.0, tape)
    if log_probs.value.ndim == 1:
        return pick(log_probs, int(action), tape), entropy
    return gather(log_probs, action, tape), entropy


def episode_loss(traj: Trajectory, spec: AgentSpec, mask_penalty: Optional[Node], tape: Tape,
                 advantages: Optional[Sequence[float]] = None) -> Node:
    """
    Sum over steps of -log pi(a_t) A_t + value_coef (R_t - V_t)^2 - beta_e H_t,
    plus the mask penalty

    Args:
        traj: Completed trajectory with its policy heads recorded on tape
        spec: Agent hyperparameters
        mask_penalty: Scalar penalty node (None for no penalty)
        tape: Tape holding the trajectory
        advantages: Constant advantages; defaults to R_t - V(s_t) at the
            recorded values

    Returns:
        Scalar loss node
    """
    if not traj.steps:
        raise UsageError("episode_loss on an empty trajectory")
    heads = traj.heads
    if heads is None or heads.log_probs.shape[0] != len(traj):
        raise UsageError("episode_loss needs policy heads covering every step")
    returns = traj.returns(spec.discount)
    if advantages is None:
        advantages = traj.advantages(spec.discount)
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.shape != (len(traj),):
        raise UsageError("advantages length differs from trajectory length")

    chosen, entropy = log_prob_and_entropy(heads.log_probs, traj.actions, tape)
    terms = [reduce_sum(hadamard(chosen, tape.constant(-advantages), tape), tape)]
    error = elementwise("square", sub(heads.values, tape.constant(returns), tape), tape)
    terms.append(scale(reduce_sum(error, tape), spec.value_coef, tape))
    if spec.beta_e:
        terms.append(scale(entropy, -spec.beta_e, tape))
    if mask_penalty is not None:
        terms.append(mask_penalty)
    return total(terms, tape)


@dataclass
class AdamState:
    """First and second moment estimates"""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: Sequence[Parameter], grads: GradientTable, opt_state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """
    Bias-corrected adaptive moment update, applied in place

    Raises:
        NumericalError: when any gradient is NaN or infinite (nothing is updated)
    """
    nonfinite = [p.name for p in params if not np.all(np.isfinite(grads.get(p)))]
    if nonfinite:
        raise NumericalError("Non-finite gradients", {"parameters": nonfinite, "step": opt_state.t})

    opt_state.t += 1
    correction1 = 1.0 - beta1 ** opt_state.t
    correction2 = 1.0 - beta2 ** opt_state.t
    for p in params:
        g = grads.get(p)
        m = opt_state.m.get(p.name)
        if m is None:
            m = opt_state.m[p.name] = np.zeros_like(p.value)
            opt_state.v[p.name] = np.zeros_like(p.value)
        v = opt_state.v[p.name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.value -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return opt_state


def save_checkpoint(path: Union[str, Path], params: Sequence[Parameter]):
    """Dump parameters keyed by name"""
    write_container(path, {p.name: p.value for p in params})


def load_checkpoint(path: Union[str, Path], params: Sequence[Parameter]):
    """Restore parameters in place; shapes must match"""
    arrays = read_container(path)
    for p in params:
        if p.name not in arrays:
            raise UsageError(f"Checkpoint {path} has no entry for '{p.name}'")
        if arrays[p.name].shape != p.shape:
            raise UsageError(f"Checkpoint shape {arrays[p.name].shape} differs from {p.shape} for '{p.name}'")
        p.value[...] = arrays[p.name]
