"""
Reservoir Mask Workbench - Reservoir Module
Echo State Network with fixed random weights, dense-local/sparse-global
recurrent topology and overlapping per-input node blocks
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .base import (BPTTMode, ConfigurationError, NumericalError, RadiusUnit,
                   fingerprint, read_container, require, write_container)
from .diffcore import Node, Tape, affine, elementwise


logger = logging.getLogger(__name__)


@dataclass
class ReservoirSpec:
    """ESN topology and scaling"""
    n_unique: int = 40
    n_shared: int = 20
    spectral_radius: float = 1.0
    p_local: float = 0.5
    p_global: float = 0.01
    p_input: float = 0.5
    radius: int = 10
    input_scale: float = 1.0
    radius_unit: RadiusUnit = RadiusUnit.BLOCKS
    max_size: int = 4096

    def validate(self):
        for key in ("p_local", "p_global", "p_input"):
            value = getattr(self, key)
            require(0.0 <= value <= 1.0, f"reservoir.{key}", "0 <= probability <= 1")
        require(0 <= self.n_shared < self.n_unique, "reservoir.n_shared", "0 <= n_shared < n_unique")
        require(self.radius >= 1, "reservoir.radius", "radius >= 1")
        require(self.spectral_radius > 0, "reservoir.spectral_radius", "spectral_radius > 0")
        require(self.max_size >= self.n_unique, "reservoir.max_size", "max_size >= n_unique")

    @property
    def stride(self) -> int:
        return self.n_unique - self.n_shared

    def size_for(self, input_dim: int) -> int:
        """Reservoir size for input_dim overlapping blocks"""
        return input_dim * self.stride + self.n_shared

    def local_reach(self) -> int:
        """Largest node-index distance that counts as local"""
        if self.radius_unit == RadiusUnit.BLOCKS:
            return self.radius * self.stride
        return self.radius


@dataclass(frozen=True)
class ReservoirWeights:
    """Fixed recurrent and input matrices (read-only arrays)"""
    W_rec: np.ndarray
    W_in: np.ndarray
    spec: ReservoirSpec

    @property
    def size(self) -> int:
        return self.W_rec.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_in.shape[1]

    def block_of(self, i: int) -> slice:
        """Nodes fed by input i"""
        start = i * self.spec.stride
        return slice(start, start + self.spec.n_unique)

    def fingerprint(self) -> str:
        return fingerprint(self.W_rec, self.W_in)


@dataclass
class ReservoirState:
    """Activation vector recorded on a tape"""
    h: Node

    @property
    def values(self) -> np.ndarray:
        return self.h.value

    @classmethod
    def zeros(cls, size: int, tape: Tape) -> 'ReservoirState':
        return cls(tape.constant(np.zeros(size)))


def _power_iteration(M: np.ndarray, tol: float, max_iter: int, restarts: int, seed: int):
    """Dominant |eigenvalue| or None when no start settles"""
    rng = np.random.default_rng(seed)
    n = M.shape[0]
    for attempt in range(restarts + 1):
        x = rng.standard_normal(n)
        x /= np.linalg.norm(x)
        estimate = 0.0
        for _ in range(max_iter):
            y = M @ x
            norm = np.linalg.norm(y)
            if norm == 0.0:
                break
            rayleigh = float(x @ y)
            residual = np.linalg.norm(y - rayleigh * x)
            settled = abs(norm - estimate) <= tol * norm and residual <= tol * norm
            estimate = norm
            x = y / norm
            if settled:
                return abs(rayleigh)
        logger.debug(f"Power iteration start {attempt} did not settle (estimate {estimate:.6g})")
    return None


def spectral_radius(M: np.ndarray, method: str = "auto", tol: float = 1e-9,
                    max_iter: int = 5000, restarts: int = 3, seed: int = 0) -> float:
    """
    Largest absolute eigenvalue of a square matrix

    Args:
        M: Square matrix
        method: 'power' (power iteration with random restarts), 'dense'
            (full eigenvalue solve) or 'auto' (power, dense when it does not settle)
        tol: Relative tolerance of the power iteration
        max_iter: Iteration cap per start
        restarts: Extra random starts
        seed: Start-vector seed

    Returns:
        Spectral radius
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigurationError(f"spectral_radius needs a square matrix, got shape {M.shape}", key="M")
    if not np.any(M):
        return 0.0
    if method not in ("auto", "power", "dense"):
        raise ConfigurationError(f"Unknown spectral radius method '{method}'", key="method")

    if method != "dense":
        estimate = _power_iteration(M, tol, max_iter, restarts, seed)
        if estimate is not None:
            return estimate
        if method == "power":
            raise NumericalError("Power iteration did not converge",
                                 {"size": M.shape[0], "tol": tol, "max_iter": max_iter, "restarts": restarts})
        # Complex leading pairs of nonsymmetric matrices never settle
        logger.debug("Falling back to dense eigenvalues")

    eigenvalues = np.linalg.eigvals(M)
    radius = float(np.max(np.abs(eigenvalues)))
    if not np.isfinite(radius):
        raise NumericalError("Eigenvalue solve returned non-finite values", {"size": M.shape[0]})
    return radius


def local_band_mask(spec: ReservoirSpec, size: int) -> np.ndarray:
    """Boolean matrix of node pairs within the local connection reach"""
    idx = np.arange(size)
    return np.abs(idx[:, None] - idx[None, :]) <= spec.local_reach()


def build_reservoir(spec: ReservoirSpec, input_dim: int, seed: int) -> ReservoirWeights:
    """
    Construct fixed reservoir weights

    Args:
        spec: Topology and scaling
        input_dim: Number of inputs D
        seed: Construction seed

    Returns:
        ReservoirWeights with N = D * (n_unique - n_shared) + n_shared nodes
    """
    spec.validate()
    if input_dim < 1:
        raise ConfigurationError("input_dim must be >= 1", key="input_dim")
    size = spec.size_for(input_dim)
    if size > spec.max_size:
        raise ConfigurationError(f"Reservoir size {size} exceeds max_size {spec.max_size}",
                                 key="reservoir.max_size", constraint=f"size <= {spec.max_size}")

    rng = np.random.default_rng(seed)

    W_in = np.zeros((size, input_dim))
    for i in range(input_dim):
        rows = slice(i * spec.stride, i * spec.stride + spec.n_unique)
        connected = rng.random(spec.n_unique) < spec.p_input
        values = rng.uniform(-1.0, 1.0, spec.n_unique) * spec.input_scale
        W_in[rows, i] = np.where(connected, values, 0.0)

    probability = np.where(local_band_mask(spec, size), spec.p_local, spec.p_global)
    connected = rng.random((size, size)) < probability
    W_rec = np.where(connected, rng.standard_normal((size, size)), 0.0)

    radius = spectral_radius(W_rec, max_iter=1000, restarts=1, seed=seed)
    if radius == 0.0:
        raise NumericalError("Recurrent matrix has zero spectral radius and cannot be rescaled",
                             {"size": size, "nonzeros": int(np.count_nonzero(W_rec))})
    W_rec = W_rec * (spec.spectral_radius / radius)

    W_rec.setflags(write=False)
    W_in.setflags(write=False)
    logger.info(f"Built reservoir: {size} nodes for {input_dim} inputs, "
                f"{np.count_nonzero(W_rec)} recurrent connections, "
                f"radius unit {spec.radius_unit.value} (local reach {spec.local_reach()} nodes)")
    return ReservoirWeights(W_rec=W_rec, W_in=W_in, spec=spec)


def advance(state: ReservoirState, masked_input: Node, weights: ReservoirWeights, tape: Tape,
            bptt: BPTTMode = BPTTMode.FULL) -> ReservoirState:
    """
    h' = tanh(W_rec h + W_in x) with both matrices recorded as constants

    With BPTTMode.ONE_STEP the previous state is detached, so gradients reach
    the masked input only through the current injection term.
    """
    h = state.h
    if bptt == BPTTMode.ONE_STEP and h.requires_grad:
        h = tape.constant(h.value)
    injection = affine(tape.constant(weights.W_in), None, masked_input, tape)
    pre_activation = affine(tape.constant(weights.W_rec), injection, h, tape)
    return ReservoirState(elementwise("tanh", pre_activation, tape))


def save_weights(weights: ReservoirWeights, path: Union[str, Path]):
    """Dump both matrices for reproducibility audits"""
    write_container(path, {"W_rec": weights.W_rec, "W_in": weights.W_in})


def load_weights(path: Union[str, Path], spec: ReservoirSpec) -> ReservoirWeights:
    arrays = read_container(path)
    W_rec, W_in = arrays["W_rec"], arrays["W_in"]
    W_rec.setflags(write=False)
    W_in.setflags(write=False)
    return ReservoirWeights(W_rec=W_rec, W_in=W_in, spec=spec)
