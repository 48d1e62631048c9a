"""
Reservoir Mask Workbench - Bandit Environment Module
Distracting multi-armed bandit: Bernoulli arms resampled every episode,
observations made of distractor noise only
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .base import BaseComponent, UsageError, require


REWARD_SCHEMES = ("complementary", "independent", "fixed")


@dataclass
class BanditSpec:
    """Task parameters"""
    num_arms: int = 2
    episode_len: int = 100
    noise_dim: int = 32
    reward_scheme: str = "complementary"
    seed: int = 0
    arm_probs: Optional[List[float]] = None

    def validate(self):
        require(self.num_arms >= 2, "bandit.num_arms", "num_arms >= 2")
        require(self.episode_len >= 1, "bandit.episode_len", "episode_len >= 1")
        require(self.noise_dim >= 0 and self.noise_dim % 2 == 0, "bandit.noise_dim",
                "noise_dim must be a non-negative even number")
        require(self.reward_scheme in REWARD_SCHEMES, "bandit.reward_scheme",
                f"reward_scheme must be one of {', '.join(REWARD_SCHEMES)}")
        require(self.reward_scheme != "complementary" or self.num_arms == 2, "bandit.reward_scheme",
                "complementary rewards need exactly 2 arms")
        if self.reward_scheme == "fixed":
            require(self.arm_probs is not None and len(self.arm_probs) == self.num_arms, "bandit.arm_probs",
                    "fixed rewards need one probability per arm")
            require(all(0.0 <= p <= 1.0 for p in self.arm_probs), "bandit.arm_probs", "0 <= p <= 1")


@dataclass(frozen=True)
class ObservationLayout:
    """Index ranges of the two noise halves (per-step half first)"""
    noise_dim: int

    @property
    def per_step(self) -> slice:
        return slice(0, self.noise_dim // 2)

    @property
    def per_episode(self) -> slice:
        return slice(self.noise_dim // 2, self.noise_dim)


@dataclass
class ObservationVector:
    """Distractor noise block with its layout"""
    noise_block: np.ndarray
    layout: ObservationLayout


@dataclass
class EpisodeState:
    """Mutable per-episode state"""
    spec: BanditSpec
    arm_probs: np.ndarray
    fixed_noise: np.ndarray
    rng: np.random.Generator
    step_index: int = 0

    @property
    def done(self) -> bool:
        return self.step_index >= self.spec.episode_len


def _sample_arm_probs(spec: BanditSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.reward_scheme == "fixed":
        return np.array(spec.arm_probs, dtype=np.float64)
    if spec.reward_scheme == "complementary":
        p = rng.uniform(0.0, 1.0)
        return np.array([p, 1.0 - p])
    return rng.uniform(0.0, 1.0, size=spec.num_arms)


def _observe(state: EpisodeState) -> ObservationVector:
    half = state.spec.noise_dim // 2
    per_step = state.rng.standard_normal(half)
    return ObservationVector(np.concatenate([per_step, state.fixed_noise]),
                             ObservationLayout(state.spec.noise_dim))


def reset(spec: BanditSpec, episode_seed: int) -> Tuple[EpisodeState, ObservationVector]:
    """
    Start an episode

    Args:
        spec: Task parameters
        episode_seed: Episode index or derived seed; with spec.seed fully
            determines arm probabilities and noise

    Returns:
        Fresh EpisodeState and the first observation
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), int(episode_seed)]))
    arm_probs = _sample_arm_probs(spec, rng)
    fixed_noise = rng.standard_normal(spec.noise_dim // 2)
    fixed_noise.setflags(write=False)
    state = EpisodeState(spec=spec, arm_probs=arm_probs, fixed_noise=fixed_noise, rng=rng)
    return state, _observe(state)


def step(state: EpisodeState, action: int) -> Tuple[ObservationVector, float, bool]:
    """
    Pull one arm

    Returns:
        (next observation, Bernoulli reward, done flag)
    """
    if state.done:
        raise UsageError("step called after the episode finished")
    if not 0 <= action < state.spec.num_arms:
        raise UsageError(f"action {action} out of range for {state.spec.num_arms} arms")
    reward = 1.0 if state.rng.random() < state.arm_probs[action] else 0.0
    state.step_index += 1
    return _observe(state), reward, state.done


def oracle_expected_reward(state: EpisodeState) -> float:
    """Per-step expected reward of the omniscient policy"""
    return float(np.max(state.arm_probs))


class DistractingBandit(BaseComponent):
    """
    Stateful wrapper used by the trainer
    """

    def __init__(self, spec: BanditSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        self.layout = ObservationLayout(spec.noise_dim)
        self.state: Optional[EpisodeState] = None

    def reset(self, episode_seed: int) -> ObservationVector:
        self.state, observation = reset(self.spec, episode_seed)
        self.logger.debug(f"Episode {episode_seed}: arm probabilities {np.round(self.state.arm_probs, 3)}")
        return observation

    def step(self, action: int) -> Tuple[ObservationVector, float, bool]:
        if self.state is None:
            raise UsageError("step called before reset")
        return step(self.state, action)

    def oracle_expected_reward(self) -> float:
        if self.state is None:
            raise UsageError("oracle requested before reset")
        return oracle_expected_reward(self.state)
