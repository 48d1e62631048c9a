"""
Reservoir Mask Workbench - Trainer Module
Episode loop wiring environment, mask, reservoir and agent; per-episode
updates, convergence measurement and multi-seed suites
"""

import csv
import hashlib
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .agent import (AdamState, AgentParams, AgentSpec, StepRecord, Trajectory, adam_step,
                    episode_loss, init_agent_params, policy_heads, policy_value, save_checkpoint)
from .bandit_env import BanditSpec, DistractingBandit
from .base import (BaseComponent, BPTTMode, MaskKind, NumericalError, RunResult, UsageError,
                   WorkbenchException, derive_rng, derive_seed, fingerprint, require, to_plain)
from .diffcore import Tape, backward
from .masks import MaskParams, MaskSpec, apply_mask, init_mask_params
from .reservoir import ReservoirSpec, ReservoirState, ReservoirWeights, advance, build_reservoir


CURVE_COLUMNS = ["episode", "total_reward", "oracle_reward", "score", "smoothed_score", "loss", "mean_mask"]
SNAPSHOT_COLUMNS = ["episode", "index", "block", "mask_value"]
REPORT_COLUMNS = ["row_type", "label", "seed", "episodes_to_threshold", "median", "min", "max",
                  "speedup_vs_baseline"]
DID_NOT_CONVERGE = "did_not_converge"


@dataclass
class TrainingOptions:
    """Episode budget, seeds and convergence criterion"""
    num_episodes: int = 20000
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    eval_window: int = 100
    convergence_threshold: float = 0.9
    bptt: BPTTMode = BPTTMode.FULL
    early_stop: bool = False
    mask_snapshot_interval: Optional[int] = None

    def validate(self):
        require(self.eval_window >= 1, "training.eval_window", "eval_window >= 1")
        require(self.num_episodes >= self.eval_window, "training.num_episodes", "num_episodes >= eval_window")
        require(0 < self.convergence_threshold <= 1, "training.convergence_threshold",
                "0 < convergence_threshold <= 1")
        require(len(self.seeds) >= 1, "training.seeds", "at least one seed")
        require(self.mask_snapshot_interval is None or self.mask_snapshot_interval >= 1,
                "training.mask_snapshot_interval", "mask_snapshot_interval >= 1")

    @property
    def snapshot_interval(self) -> int:
        return self.mask_snapshot_interval or self.eval_window


@dataclass
class RunConfig:
    """Everything one training run needs"""
    name: str = "bandit"
    bandit: BanditSpec = field(default_factory=BanditSpec)
    reservoir: ReservoirSpec = field(default_factory=ReservoirSpec)
    mask: MaskSpec = field(default_factory=MaskSpec)
    agent: AgentSpec = field(default_factory=AgentSpec)
    training: TrainingOptions = field(default_factory=TrainingOptions)

    def validate(self):
        require(bool(re.fullmatch(r"[A-Za-z0-9][A-Za-z0-9.-]*", self.name)), "name",
                "name may hold letters, digits, '.' and '-' only")
        for section in (self.bandit, self.reservoir, self.mask, self.agent, self.training):
            section.validate()

    @property
    def layout(self) -> 'InputLayout':
        return InputLayout(self.bandit.noise_dim, self.bandit.num_arms)

    @property
    def label(self) -> str:
        return self.mask.label(self.layout.size)

    @property
    def slug(self) -> str:
        return self.mask.slug(self.layout.size)

    def to_dict(self) -> dict:
        return to_plain(asdict(self))

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class InputLayout:
    """
    Agent input vector: noise | one-hot previous action | previous reward |
    step counter | bias

    The previous arm's channel holds +1 after a reward and -1 after none, so a
    per-arm running sum of the channels tracks wins minus losses.
    """
    noise_dim: int
    num_arms: int

    @property
    def size(self) -> int:
        return self.noise_dim + self.num_arms + 3

    @property
    def per_step(self) -> slice:
        return slice(0, self.noise_dim // 2)

    @property
    def per_episode(self) -> slice:
        return slice(self.noise_dim // 2, self.noise_dim)

    @property
    def feedback(self) -> slice:
        return slice(self.noise_dim, self.size)

    def compose(self, noise: np.ndarray, prev_action: Optional[int], prev_reward: float,
                step_index: int, episode_len: int) -> np.ndarray:
        x = np.zeros(self.size)
        x[:self.noise_dim] = noise
        if prev_action is not None:
            x[self.noise_dim + prev_action] = 2.0 * prev_reward - 1.0
        x[self.noise_dim + self.num_arms] = prev_reward
        x[self.noise_dim + self.num_arms + 1] = step_index / episode_len
        x[-1] = 1.0
        return x

    def block_name(self, index: int) -> str:
        if index < self.noise_dim // 2:
            return "per_step"
        if index < self.noise_dim:
            return "per_episode"
        return "feedback"


MASK_BLOCKS = ("per_step", "per_episode", "feedback")


def mask_block_means(values: np.ndarray, layout: Union[InputLayout, Sequence[str]]) -> Dict[str, Optional[float]]:
    """
    Mean mask value over the per-step noise, per-episode noise and feedback channels

    Args:
        values: One mask value per input
        layout: Input layout, or the block name of every input
    """
    values = np.asarray(values, dtype=np.float64)
    if isinstance(layout, InputLayout):
        blocks = np.array([layout.block_name(i) for i in range(values.size)])
    else:
        blocks = np.asarray(layout)
    out = {}
    for name in MASK_BLOCKS:
        block = values[blocks == name]
        out[name] = float(np.mean(block)) if block.size else None
    return out


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    action = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(action, probs.size - 1)


def run_episode(env: DistractingBandit, mask: MaskParams, reservoir: ReservoirWeights, agent: AgentParams,
                rng: np.random.Generator, tape: Tape, *, mask_spec: MaskSpec, episode_seed: int,
                bptt: BPTTMode = BPTTMode.FULL, forced_actions: Optional[Sequence[int]] = None) -> Trajectory:
    """
    Play one episode, recording every step on a single tape

    The reservoir starts from zeros; feedback channels are zero at t = 0.

    Args:
        env: Bandit environment
        mask: Mask parameters
        reservoir: Fixed reservoir weights
        agent: Actor-critic parameters
        rng: Action-sampling generator
        tape: Fresh tape for this episode
        mask_spec: Mask configuration
        episode_seed: Seed passed to env.reset
        bptt: Gradient reach through the reservoir recursion
        forced_actions: Play these actions instead of sampling

    Returns:
        Trajectory with per-step records, batched policy heads, the mask penalty
        and final mask values
    """
    spec = env.spec
    layout = InputLayout(spec.noise_dim, spec.num_arms)
    observation = env.reset(episode_seed)
    traj = Trajectory(oracle_reward=env.oracle_expected_reward() * spec.episode_len)
    state = ReservoirState.zeros(reservoir.size, tape)
    rollout = Tape()
    prev_action, prev_reward = None, 0.0
    output = None

    for t in range(spec.episode_len):
        x = layout.compose(observation.noise_block, prev_action, prev_reward, t, spec.episode_len)
        output = apply_mask(mask, mask_spec, tape.constant(x), tape)
        state = advance(state, output.masked_input, reservoir, tape, bptt)
        # sampling reads a detached copy; the loss graph gets the heads in one batch below
        probs, _ = policy_value(agent, ReservoirState(rollout.constant(state.values)), rollout)
        action = int(forced_actions[t]) if forced_actions is not None else _sample(probs.value, rng)
        observation, reward, _ = env.step(action)
        traj.steps.append(StepRecord(state, action, reward, probs.value))
        prev_action, prev_reward = action, reward

    traj.heads = policy_heads(agent, [step.state for step in traj.steps], tape)
    traj.mask_penalty = output.penalty
    traj.mask_values = output.mask_values
    return traj


@dataclass
class CurveRow:
    """One episode of a learning curve"""
    episode: int
    total_reward: float
    oracle_reward: float
    score: float
    smoothed_score: float
    loss: float
    mean_mask: float

    def as_csv(self) -> List[str]:
        return [str(self.episode)] + [repr(float(getattr(self, c))) for c in CURVE_COLUMNS[1:]]


@dataclass
class LearningCurve:
    """Per-episode records plus run metadata"""
    label: str
    seed: int
    config_hash: str = ""
    kind: str = ""
    num_episodes: int = 0
    rows: List[CurveRow] = field(default_factory=list)
    wall_time: float = 0.0
    episodes_to_threshold: Optional[int] = None
    fingerprints: Dict[str, Tuple[str, str]] = field(default_factory=dict)
    final_mask: Optional[np.ndarray] = None
    mask_blocks: Optional[List[str]] = None

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def scores(self) -> np.ndarray:
        return np.array([row.score for row in self.rows])

    def final_block_means(self) -> Dict[str, Optional[float]]:
        """Block means of the last mask snapshot, empty when none was kept"""
        if self.final_mask is None or self.mask_blocks is None:
            return {}
        return mask_block_means(self.final_mask, self.mask_blocks)


def episodes_to_threshold(curve: Union[LearningCurve, Sequence[float]], threshold: float,
                          window: int) -> Optional[int]:
    """
    First episode index whose trailing full-window mean score reaches threshold

    Returns:
        Episode index, or None when the curve never gets there
    """
    scores = curve.scores if isinstance(curve, LearningCurve) else np.asarray(curve, dtype=np.float64)
    if window < 1 or window > scores.size:
        raise UsageError(f"window {window} must lie in [1, {scores.size}]")
    means = sliding_window_view(scores, window).mean(axis=1)
    hits = np.flatnonzero(means >= threshold)
    return int(hits[0]) + window - 1 if hits.size else None


class CurveWriter:
    """Append-only CSV writer flushed row by row"""

    def __init__(self, path: Path, columns: List[str]):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        self._file = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self.write(columns)

    def write(self, values: List[str]):
        self._writer.writerow(values)
        self._file.flush()

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


def run_file_stem(name: str, slug: str, seed: int) -> str:
    return f"{name}_{slug}_seed{seed}"


RUN_STEM = re.compile(r"(?:^|_)(identity|layernorm|vector_filter|epic-u(\d+))_seed(\d+)$")


def parse_run_stem(stem: str) -> Optional[Tuple[MaskKind, Optional[int], int]]:
    """(mask kind, u length, seed) encoded in a curve file name, or None"""
    match = RUN_STEM.search(stem)
    if not match:
        return None
    token, u_length, seed = match.groups()
    kind = MaskKind.EPIC if u_length else MaskKind(token)
    return kind, int(u_length) if u_length else None, int(seed)


class Trainer(BaseComponent):
    """
    One (config, seed) training run
    """

    def __init__(self, config: RunConfig, seed: int, out_dir: Union[str, Path, None] = None):
        super().__init__()
        config.validate()
        self.config = config
        self.seed = seed
        self.out_dir = Path(out_dir) if out_dir else None
        self.layout = config.layout
        self.env = DistractingBandit(config.bandit)
        self.reservoir = build_reservoir(config.reservoir, self.layout.size, derive_seed(seed, "reservoir"))
        self.mask = init_mask_params(config.mask, self.layout.size, derive_seed(seed, "mask"))
        self.agent = init_agent_params(config.agent, self.reservoir.size, config.bandit.num_arms,
                                       derive_seed(seed, "agent"))
        self.policy_rng = derive_rng(seed, "policy")
        self.opt_state = AdamState()
        self.run_name = run_file_stem(config.name, config.slug, seed)

    @property
    def trainable(self):
        return self.mask.trainable() + self.agent.trainable()

    def _fixed_fingerprints(self) -> Dict[str, str]:
        prints = {"reservoir": self.reservoir.fingerprint()}
        if self.mask.u is not None:
            prints["epic_u"] = fingerprint(self.mask.u)
        return prints

    def run_episode(self, episode: int, tape: Tape, forced_actions: Optional[Sequence[int]] = None) -> Trajectory:
        return run_episode(self.env, self.mask, self.reservoir, self.agent, self.policy_rng, tape,
                           mask_spec=self.config.mask, episode_seed=derive_seed(self.seed, "env", episode),
                           bptt=self.config.training.bptt, forced_actions=forced_actions)

    def _abort(self, episode: int, message: str, diagnostics: dict):
        diagnostics = dict(diagnostics, episode=episode, run=self.run_name)
        if self.out_dir:
            path = self.out_dir / f"{self.run_name}.abort.npz"
            save_checkpoint(path, self.trainable)
            diagnostics["checkpoint"] = str(path)
        self.logger.error(f"{message} at episode {episode}: {diagnostics}")
        raise NumericalError(f"{message} at episode {episode}", diagnostics)

    def _log_setup(self):
        config = self.config
        self.logger.info(
            f"Run {self.run_name} (config {config.config_hash()}): reservoir {self.reservoir.size} nodes, "
            f"input {self.layout.size}, radius unit {config.reservoir.radius_unit.value}, "
            f"bptt {config.training.bptt.value}, advantage estimator monte-carlo return minus value, "
            f"discount {config.agent.discount}, threshold {config.training.convergence_threshold} "
            f"over {config.training.eval_window} episodes, seeds {config.training.seeds}")

    def train(self) -> LearningCurve:
        """
        Run num_episodes of play + loss + backward + Adam, logging every episode

        Raises:
            NumericalError: on a non-finite loss or gradient (the parameters of
                the last completed update are written to <run>.abort.npz)
        """
        options = self.config.training
        agent_spec = self.config.agent
        curve = LearningCurve(label=self.config.label, seed=self.seed, config_hash=self.config.config_hash(),
                              kind=self.config.mask.kind.value, num_episodes=options.num_episodes)
        start_prints = self._fixed_fingerprints()
        self._log_setup()

        writer = snapshots = None
        if self.out_dir:
            writer = CurveWriter(self.out_dir / f"{self.run_name}.csv", CURVE_COLUMNS)
            snapshots = CurveWriter(self.out_dir / f"{self.run_name}.masks.csv", SNAPSHOT_COLUMNS)

        started = time.perf_counter()
        scores: List[float] = []
        try:
            for episode in range(options.num_episodes):
                tape = Tape()
                traj = self.run_episode(episode, tape)
                loss = episode_loss(traj, agent_spec, traj.mask_penalty, tape)
                if not np.isfinite(loss.item()):
                    self._abort(episode, "Non-finite loss", {"loss": loss.item()})
                grads = backward(loss, tape)
                try:
                    adam_step(self.trainable, grads, self.opt_state, agent_spec.lr,
                              agent_spec.adam_beta1, agent_spec.adam_beta2, agent_spec.adam_eps)
                except NumericalError as e:
                    self._abort(episode, str(e), e.diagnostics)

                total_reward = traj.total_reward
                score = total_reward / traj.oracle_reward if traj.oracle_reward > 0 else 1.0
                scores.append(score)
                recent = scores[-options.eval_window:]
                row = CurveRow(episode, total_reward, traj.oracle_reward, score, float(np.mean(recent)),
                               loss.item(), float(np.mean(traj.mask_values)))
                curve.rows.append(row)
                if writer:
                    writer.write(row.as_csv())

                if snapshots and (episode % options.snapshot_interval == 0 or episode == options.num_episodes - 1):
                    for i, value in enumerate(traj.mask_values):
                        snapshots.write([str(episode), str(i), self.layout.block_name(i), repr(float(value))])

                if (episode + 1) % options.eval_window == 0:
                    blocks = mask_block_means(traj.mask_values, self.layout)
                    self.logger.info(f"[{curve.label} seed {self.seed}] episode {episode}: "
                                     f"smoothed score {row.smoothed_score:.3f}, mean mask {row.mean_mask:.3f}, "
                                     f"block means {blocks}")
                else:
                    self.logger.debug(f"episode {episode}: reward {total_reward}, loss {row.loss:.4f}, "
                                      f"gradient norm {grads.global_norm():.4g}")

                if curve.episodes_to_threshold is None and len(recent) == options.eval_window \
                        and row.smoothed_score >= options.convergence_threshold:
                    curve.episodes_to_threshold = episode
                    self.logger.info(f"[{curve.label} seed {self.seed}] reached threshold at episode {episode}")
                    if options.early_stop:
                        break
        finally:
            if writer:
                writer.close()
                snapshots.close()

        curve.wall_time = time.perf_counter() - started
        curve.final_mask = np.array(traj.mask_values)
        curve.mask_blocks = [self.layout.block_name(i) for i in range(self.layout.size)]
        end_prints = self._fixed_fingerprints()
        curve.fingerprints = {k: (start_prints[k], end_prints[k]) for k in start_prints}
        if start_prints != end_prints:
            raise NumericalError("Fixed random weights changed during training", {"fingerprints": curve.fingerprints})
        self.logger.info(f"Run {self.run_name} finished {len(curve)} episodes in {curve.wall_time:.1f}s, "
                         f"episodes to threshold: {curve.episodes_to_threshold}")
        return curve


def train(config: RunConfig, seed: int, out_dir: Union[str, Path, None] = None) -> LearningCurve:
    """Train one run"""
    return Trainer(config, seed, out_dir).train()


@dataclass
class ConvergenceEntry:
    """Outcome of one (label, seed) run"""
    label: str
    kind: str
    seed: int
    episodes_to_threshold: Optional[int]
    num_episodes: int
    error: Optional[str] = None
    block_means: Dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.episodes_to_threshold is not None

    @property
    def censored(self) -> int:
        """Episodes to threshold, num_episodes for runs that never got there"""
        return self.episodes_to_threshold if self.converged else self.num_episodes


@dataclass
class ConvergenceSummary:
    label: str
    median: float
    minimum: int
    maximum: int
    runs: int
    converged: int

    @property
    def spread(self) -> int:
        return self.maximum - self.minimum


@dataclass
class ConvergenceReport:
    """Episodes-to-threshold per run, summaries per label and speedups"""
    entries: List[ConvergenceEntry]
    threshold: float
    window: int
    results: List[RunResult] = field(default_factory=list)

    def labels(self) -> List[str]:
        return list(dict.fromkeys(e.label for e in self.entries))

    @property
    def failures(self) -> List[RunResult]:
        return [r for r in self.results if not r.success]

    def _completed(self, label: str) -> List[ConvergenceEntry]:
        return [e for e in self.entries if e.label == label and e.error is None]

    def summary(self, label: str) -> Optional[ConvergenceSummary]:
        done = self._completed(label)
        if not done:
            return None
        values = [e.censored for e in done]
        return ConvergenceSummary(label, float(np.median(values)), min(values), max(values),
                                  len(done), sum(e.converged for e in done))

    @property
    def baseline_label(self) -> Optional[str]:
        for entry in self.entries:
            if entry.kind == MaskKind.IDENTITY.value:
                return entry.label
        labels = self.labels()
        return labels[0] if labels else None

    def speedup(self, label: str, baseline: Optional[str] = None) -> Optional[float]:
        """Baseline median divided by label median"""
        base = self.summary(baseline or self.baseline_label)
        target = self.summary(label)
        if base is None or target is None or target.median == 0:
            return None
        return base.median / target.median

    def _median_of_kind(self, kind: MaskKind) -> Dict[str, float]:
        labels = dict.fromkeys(e.label for e in self.entries if e.kind == kind.value)
        return {label: self.summary(label).median for label in labels if self.summary(label)}

    def check_ordering(self, ratio: float = 0.65) -> List[str]:
        """
        Violations of: masks at most ratio x the unmasked median, EPIC at most
        ratio x the layernorm median

        Returns:
            Human-readable violations (empty when the ordering holds)
        """
        problems = []
        identity = self._median_of_kind(MaskKind.IDENTITY)
        layernorm = self._median_of_kind(MaskKind.LAYERNORM)
        filters = self._median_of_kind(MaskKind.VECTOR_FILTER)
        epic = self._median_of_kind(MaskKind.EPIC)
        for label, median in list(layernorm.items()) + list(filters.items()):
            for base_label, base in identity.items():
                if median > ratio * base:
                    problems.append(f"{label} median {median} exceeds {ratio} x {base_label} median {base}")
        for label, median in epic.items():
            for base_label, base in layernorm.items():
                if median > ratio * base:
                    problems.append(f"{label} median {median} exceeds {ratio} x {base_label} median {base}")
        return problems

    def kind_speedup(self, kind: MaskKind, over: MaskKind) -> Optional[float]:
        """Median of the first `over` label divided by the median of the first `kind` label"""
        target = list(self._median_of_kind(kind).values())
        base = list(self._median_of_kind(over).values())
        if not target or not base or target[0] == 0:
            return None
        return base[0] / target[0]

    def check_scaling(self, fewer_distractors: 'ConvergenceReport', slack: float = 0.1) -> List[str]:
        """
        Violation when EPIC's speedup over layernorm here drops below
        (1 - slack) x its speedup in the same suite run with fewer distractors
        """
        here = self.kind_speedup(MaskKind.EPIC, MaskKind.LAYERNORM)
        before = fewer_distractors.kind_speedup(MaskKind.EPIC, MaskKind.LAYERNORM)
        if here is None or before is None:
            return ["scaling check needs EPIC and layernorm runs in both reports"]
        floor = (1.0 - slack) * before
        if here < floor:
            return [f"EPIC speedup over layernorm {here:.3f} is below {floor:.3f} "
                    f"({1.0 - slack:g} x {before:.3f} with fewer distractors)"]
        return []

    def check_u_length(self, tolerance: float = 0.15) -> List[str]:
        """Violations of: every EPIC median within tolerance of the first EPIC label's median"""
        epic = list(self._median_of_kind(MaskKind.EPIC).items())
        if len(epic) < 2:
            return []
        first_label, first = epic[0]
        return [f"{label} median {median} differs from {first_label} median {first} by more than {tolerance:.0%}"
                for label, median in epic[1:] if abs(median - first) > tolerance * first]

    def check_spread(self, ratio: float = 1.5) -> List[str]:
        """Violations of: unmasked min-max spread at least ratio x the EPIC spread"""
        problems = []
        for base_label in self._median_of_kind(MaskKind.IDENTITY):
            base = self.summary(base_label).spread
            for label in self._median_of_kind(MaskKind.EPIC):
                spread = self.summary(label).spread
                if base < ratio * spread:
                    problems.append(f"{base_label} spread {base} is below {ratio} x {label} spread {spread}")
        return problems

    def check_mask_blocks(self) -> List[str]:
        """
        Violations of: for EPIC, the median over runs of the final per-step
        noise mask mean lies strictly below that of the feedback channels

        Runs without a mask snapshot are skipped.
        """
        problems = []
        for label in self._median_of_kind(MaskKind.EPIC):
            runs = [e.block_means for e in self._completed(label)
                    if e.block_means.get("per_step") is not None and e.block_means.get("feedback") is not None]
            if not runs:
                continue
            noise = float(np.median([r["per_step"] for r in runs]))
            feedback = float(np.median([r["feedback"] for r in runs]))
            if not noise < feedback:
                problems.append(f"{label} per-step noise mask median {noise:.4g} is not below "
                                f"feedback mask median {feedback:.4g}")
        return problems

    def check_all(self, fewer_distractors: Optional['ConvergenceReport'] = None) -> List[str]:
        """Ordering, u-length, spread and mask-block checks, plus scaling when a second report is given"""
        problems = self.check_ordering() + self.check_u_length() + self.check_spread() + self.check_mask_blocks()
        if fewer_distractors is not None:
            problems += self.check_scaling(fewer_distractors)
        return problems

    def write_csv(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        seeds = sorted({e.seed for e in self.entries})
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(f"# threshold={self.threshold}\n# window={self.window}\n"
                    f"# seeds={' '.join(str(s) for s in seeds)}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for e in self.entries:
                if e.error is not None:
                    outcome = "failed"
                elif e.converged:
                    outcome = str(e.episodes_to_threshold)
                else:
                    outcome = DID_NOT_CONVERGE
                writer.writerow(["run", e.label, e.seed, outcome, "", "", "", ""])
            for label in self.labels():
                s = self.summary(label)
                if s is None:
                    continue
                speedup = self.speedup(label)
                writer.writerow(["summary", label, "", "", repr(s.median), s.minimum, s.maximum,
                                 "" if speedup is None else repr(speedup)])


def report_from_curves(curves: Sequence[LearningCurve], threshold: float, window: int) -> ConvergenceReport:
    """Convergence report over curves already on disk (censoring at each curve's length)"""
    entries = []
    for curve in curves:
        ett = episodes_to_threshold(curve, threshold, window)
        entries.append(ConvergenceEntry(curve.label, curve.kind, curve.seed, ett, curve.num_episodes or len(curve),
                                        block_means=curve.final_block_means()))
    return ConvergenceReport(entries, threshold, window)


def _execute_run(config: RunConfig, seed: int, out_dir: Optional[Path]) -> RunResult:
    trainer = None
    try:
        trainer = Trainer(config, seed, out_dir)
        curve = trainer.train()
        return RunResult(success=True, data=curve, seed=seed, label=config.label)
    except WorkbenchException as e:
        message = str(e)
    except Exception as e:  # keep the suite alive
        message = f"{type(e).__name__}: {e}"
    logger = trainer.logger if trainer else BaseComponent().logger
    logger.error(f"Run {config.name}/{config.label} seed {seed} failed: {message}")
    return RunResult(success=False, data=None, seed=seed, label=config.label, message=message, errors=[message])


def run_suite(configs: Sequence[RunConfig], workers: int = 1,
              out_dir: Union[str, Path, None] = None) -> ConvergenceReport:
    """
    Execute every (config, seed) run and summarize convergence

    Individual failures are recorded in the report; the suite continues.
    """
    if not configs:
        raise UsageError("run_suite needs at least one config")
    out_dir = Path(out_dir) if out_dir else None
    jobs = [(config, seed) for config in configs for seed in config.training.seeds]
    results: List[Optional[RunResult]] = [None] * len(jobs)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(_execute_run, config, seed, out_dir): i for i, (config, seed) in enumerate(jobs)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()

    entries = []
    for (config, seed), result in zip(jobs, results):
        options = config.training
        if result.success:
            curve = result.data
            ett = episodes_to_threshold(curve, options.convergence_threshold, options.eval_window) \
                if len(curve) >= options.eval_window else None
            entries.append(ConvergenceEntry(config.label, config.mask.kind.value, seed, ett, options.num_episodes,
                                            block_means=curve.final_block_means()))
        else:
            entries.append(ConvergenceEntry(config.label, config.mask.kind.value, seed, None,
                                            options.num_episodes, error=result.message))
    first = configs[0].training
    return ConvergenceReport(entries, first.convergence_threshold, first.eval_window, results)
