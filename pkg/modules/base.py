"""
Reservoir Mask Workbench - Base Module
Provides foundational classes shared by every workbench module
"""

import hashlib
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np


LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class WorkbenchException(Exception):
    """Base exception for workbench errors"""
    def __init__(self, message: str, details: dict = None):
        super().__init__(message)
        self.details = details or {}


class ConfigurationError(WorkbenchException):
    """Invalid specification, schema violation or dimension mismatch"""
    def __init__(self, message: str, key: str = None, constraint: str = None):
        super().__init__(message, {"key": key, "constraint": constraint})
        self.key = key
        self.constraint = constraint


class UsageError(WorkbenchException):
    """Operation called outside its contract"""
    def __init__(self, message: str, line_number: int = None):
        super().__init__(message, {"line_number": line_number})
        self.line_number = line_number


class NumericalError(WorkbenchException):
    """Non-finite values or non-convergence"""
    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message, diagnostics)
        self.diagnostics = diagnostics or {}


class MaskKind(Enum):
    """Input transformation variants"""
    IDENTITY = "identity"
    LAYERNORM = "layernorm"
    VECTOR_FILTER = "vector_filter"
    EPIC = "epic"


class BPTTMode(Enum):
    """How far gradients travel through the reservoir recursion"""
    FULL = "full"
    ONE_STEP = "one_step"


class RadiusUnit(Enum):
    """Unit of the local connection radius"""
    NODES = "nodes"
    BLOCKS = "blocks"


@dataclass
class RunResult:
    """Outcome of one (config, seed) run"""
    success: bool
    data: Any
    seed: int
    label: str
    message: str = None
    errors: List[str] = None


class BaseComponent:
    """
    Base class for long-lived workbench components
    Owns a logger named after the concrete class
    """

    def __init__(self):
        self.logger = self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        """Setup logger for the component"""
        logger = logging.getLogger(f"{self.__class__.__module__}.{self.__class__.__name__}")
        if not logger.handlers and not logging.getLogger().handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logger.addHandler(handler)
            logger.setLevel(logging.INFO)
        return logger


# Component tags for independent random streams
SEED_TAGS = {
    "env": 0,
    "reservoir": 1,
    "mask": 2,
    "agent": 3,
    "policy": 4,
}


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """
    Derive an independent integer seed for one component of one run

    Args:
        master_seed: Run-level seed
        tag: Component tag (env, reservoir, mask, agent, policy)
        index: Sub-stream index (run index, episode index)

    Returns:
        Non-negative 63-bit integer seed
    """
    if tag not in SEED_TAGS:
        raise UsageError(f"Unknown seed tag '{tag}'")
    sequence = np.random.SeedSequence([int(master_seed), SEED_TAGS[tag], int(index)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def derive_rng(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator seeded from derive_seed"""
    return np.random.default_rng(derive_seed(master_seed, tag, index))


def write_container(path: Union[str, Path], arrays: Dict[str, np.ndarray]):
    """
    Write named float64 arrays to an uncompressed .npz container

    Each member is a .npy record: a header with dtype and shape followed by
    the row-major little-endian float64 payload.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {name: np.ascontiguousarray(value, dtype='<f8') for name, value in arrays.items()}
    with open(path, 'wb') as f:
        np.savez(f, **payload)


def read_container(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read every array of a container written by write_container"""
    with np.load(Path(path), allow_pickle=False) as data:
        return {name: np.array(data[name], dtype=np.float64) for name in data.files}


def fingerprint(*arrays: np.ndarray) -> str:
    """SHA-256 over shapes and raw bytes of the given arrays"""
    digest = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array, dtype=np.float64)
        digest.update(str(array.shape).encode())
        digest.update(array.tobytes())
    return digest.hexdigest()


def require(condition: bool, key: str, constraint: str):
    """Raise ConfigurationError naming the key when the constraint fails"""
    if not condition:
        raise ConfigurationError(f"Invalid value for '{key}': {constraint}", key=key, constraint=constraint)


def to_plain(value):
    """JSON-friendly copy with enums replaced by their values"""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {k: to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    return value
