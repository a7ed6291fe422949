"""Sample-based training: fair multi-agent advantage actor-critic (A2C) and
clipped-surrogate PPO over tabular softmax actors and tabular TD critics,
with GAE and the initial-state-normalized fair advantage combination.
"""

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, StaleBufferError
from .markov import SoftmaxPolicyProfile
from .metrics import LOG_COLUMNS, gini


class Algorithm(str, Enum):
    FAIR_MAA2C = "FairMAA2C"
    FAIR_MAPPO = "FairMAPPO"


class ObjectiveMode(str, Enum):
    PROPORTIONAL_FAIR = "ProportionalFair"
    UTILITARIAN_WELFARE = "UtilitarianWelfare"


@dataclass
class TrainConfig:
    """Hyperparameters for one training run. ``validate()`` returns every
    violated field by name; the constructor raises on the first use of an
    invalid config."""

    algorithm: Algorithm = Algorithm.FAIR_MAA2C
    alpha: float = 1.0
    learning_rate: float = 0.01
    critic_lr: float | None = None  # defaults to learning_rate; must stay < 0.5
    lr_floor: float = 1e-5
    gamma: float = 0.95
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    ppo_clip: float = 0.2
    ppo_epochs: int = 4
    num_envs: int = 10
    episode_length: int = 100
    total_steps: int = 100_000
    seed: int = 0
    v_floor: float = 1e-3
    critic_init: float = 0.0
    policy_init_scale: float = 0.0  # stdev of seeded random initial logits
    objective: ObjectiveMode = ObjectiveMode.PROPORTIONAL_FAIR
    normalize_advantages: bool = False
    ppo_value_clip: bool = False

    def validate(self) -> list[str]:
        problems = []
        if not isinstance(self.algorithm, Algorithm):
            problems.append(f"algorithm: unknown value {self.algorithm!r}")
        if not isinstance(self.objective, ObjectiveMode):
            problems.append(f"objective: unknown value {self.objective!r}")
        if not 0.0 <= self.alpha <= 1.0:
            problems.append(f"alpha: {self.alpha} outside [0, 1]")
        if not self.learning_rate > 0.0:
            problems.append("learning_rate: must be positive")
        if self.critic_lr is not None and not 0.0 < self.critic_lr < 0.5:
            problems.append(
                "critic_lr: must lie in (0, 0.5) for the per-state regression to contract"
            )
        if self.critic_lr is None and self.learning_rate >= 0.5:
            problems.append(
                "critic_lr: required when learning_rate >= 0.5 (the shared rate "
                "would make the critic regression diverge)"
            )
        if not self.lr_floor > 0.0:
            problems.append("lr_floor: must be positive")
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma: {self.gamma} outside [0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            problems.append(f"gae_lambda: {self.gae_lambda} outside [0, 1]")
        if self.entropy_coef < 0.0:
            problems.append("entropy_coef: must be nonnegative")
        if not 0.0 < self.ppo_clip < 1.0:
            problems.append(f"ppo_clip: {self.ppo_clip} outside (0, 1)")
        if self.ppo_epochs < 1:
            problems.append("ppo_epochs: must be at least 1")
        if self.num_envs < 1:
            problems.append("num_envs: must be at least 1")
        if self.episode_length < 1:
            problems.append("episode_length: must be at least 1")
        if self.total_steps < 0:
            problems.append("total_steps: must be nonnegative")
        if not self.v_floor > 0.0:
            problems.append("v_floor: must be positive")
        if self.policy_init_scale < 0.0:
            problems.append("policy_init_scale: must be nonnegative")
        return problems

    def __post_init__(self):
        if isinstance(self.algorithm, str) and not isinstance(self.algorithm, Algorithm):
            self.algorithm = Algorithm(self.algorithm)
        if isinstance(self.objective, str) and not isinstance(self.objective, ObjectiveMode):
            self.objective = ObjectiveMode(self.objective)
        problems = self.validate()
        if problems:
            raise DomainError("invalid train config: " + "; ".join(problems))

    def learning_rate_at(self, progress: float) -> float:
        """Linear decay from the initial rate to the floor over total_steps."""
        frac = min(max(progress, 0.0), 1.0)
        return self.learning_rate + (self.lr_floor - self.learning_rate) * frac

    def critic_lr_at(self, progress: float) -> float:
        base = self.learning_rate if self.critic_lr is None else self.critic_lr
        frac = min(max(progress, 0.0), 1.0)
        return base + (min(self.lr_floor, base) - base) * frac


@dataclass
class CriticTable:
    """Per-agent state-value tables indexed by encoded observation."""

    values: list[np.ndarray]

    @classmethod
    def constant(cls, num_agents: int, num_states: int, value: float) -> "CriticTable":
        return cls([np.full(num_states, float(value)) for _ in range(num_agents)])

    def copy(self) -> "CriticTable":
        return CriticTable([v.copy() for v in self.values])


@dataclass
class Episode:
    """One truncated episode; arrays are (length, num_agents) except the
    per-step terminal flags (true termination only, never truncation)."""

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    terminal: np.ndarray

    @property
    def length(self) -> int:
        return self.observations.shape[0]

    @property
    def initial_observations(self) -> np.ndarray:
        return self.observations[0]


@dataclass
class RolloutBuffer:
    """Episodes collected under one policy version."""

    episodes: list[Episode]
    policy_version: int

    def __post_init__(self):
        for episode in self.episodes:
            if not np.all(episode.rewards > 0.0):
                raise DomainError("rollout rewards must be strictly positive")

    @property
    def num_steps(self) -> int:
        return sum(ep.length for ep in self.episodes)

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated (observations, actions), each (total_steps, num_agents)."""
        obs = np.concatenate([ep.observations for ep in self.episodes])
        act = np.concatenate([ep.actions for ep in self.episodes])
        return obs, act


@dataclass
class EpisodeStats:
    """Collection-time metrics for one episode."""

    returns: np.ndarray  # undiscounted per-agent sums
    apples: np.ndarray
    has_apples: bool
    joint_counts: dict | None = None

    @property
    def gini(self) -> float:
        return gini(self.apples if self.has_apples else self.returns)


def _softmax_row(row: np.ndarray) -> np.ndarray:
    z = row - row.max()
    e = np.exp(z)
    return e / e.sum()


def _sample_index(probs: np.ndarray, u: float) -> int:
    acc = 0.0
    for index, p in enumerate(probs):
        acc += p
        if u < acc:
            return index
    return len(probs) - 1


class _RowCache:
    """Per-agent memo of softmax rows; valid for one policy version."""

    def __init__(self, policies: SoftmaxPolicyProfile):
        self._logits = policies.logits
        self._cache: list[dict[int, np.ndarray]] = [{} for _ in policies.logits]

    def probs(self, agent: int, obs: int) -> np.ndarray:
        row = self._cache[agent].get(obs)
        if row is None:
            row = _softmax_row(self._logits[agent][obs])
            self._cache[agent][obs] = row
        return row


def play_episode(
    env,
    policies: SoftmaxPolicyProfile,
    rng: np.random.Generator,
    track_joint_actions: bool = False,
    row_cache: "_RowCache | None" = None,
) -> tuple[Episode, EpisodeStats]:
    """Roll one truncated episode with actions sampled from the policies."""
    cache = row_cache if row_cache is not None else _RowCache(policies)
    num_agents = env.num_agents
    obs = np.asarray(env.reset(), dtype=np.int64)
    observations, actions, rewards, next_observations = [], [], [], []
    apples = np.zeros(num_agents)
    has_apples = False
    joint_counts: dict | None = {} if track_joint_actions else None
    done = False
    while not done:
        us = rng.random(num_agents)
        action = np.array(
            [
                _sample_index(cache.probs(i, int(obs[i])), us[i])
                for i in range(num_agents)
            ],
            dtype=np.int64,
        )
        step = env.step(action)
        observations.append(obs)
        actions.append(action)
        rewards.append(step.rewards)
        next_obs = np.asarray(step.observations, dtype=np.int64)
        next_observations.append(next_obs)
        if "apples" in step.info:
            has_apples = True
            apples += step.info["apples"]
        if joint_counts is not None:
            key = tuple(int(a) for a in action)
            joint_counts[key] = joint_counts.get(key, 0) + 1
        obs = next_obs
        done = step.done
    episode = Episode(
        observations=np.stack(observations),
        actions=np.stack(actions),
        rewards=np.stack(rewards).astype(float),
        next_observations=np.stack(next_observations),
        terminal=np.zeros(len(observations), dtype=bool),
    )
    stats = EpisodeStats(
        returns=episode.rewards.sum(axis=0),
        apples=apples,
        has_apples=has_apples,
        joint_counts=joint_counts,
    )
    return episode, stats


def collect_rollouts(
    envs: Sequence, policies: SoftmaxPolicyProfile, rng: np.random.Generator
) -> tuple[RolloutBuffer, list[EpisodeStats]]:
    """One episode from every collector, in fixed order for determinism."""
    cache = _RowCache(policies)
    episodes, stats = [], []
    for env in envs:
        episode, stat = play_episode(env, policies, rng, row_cache=cache)
        episodes.append(episode)
        stats.append(stat)
    return RolloutBuffer(episodes, policies.version), stats


def compute_gae(
    buffer: RolloutBuffer, critic: CriticTable, gamma: float, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """GAE(lambda) advantages and TD(lambda) returns per agent.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - terminal) - V(s_t), accumulated
    backward within each episode; truncation bootstraps with V of the final
    next state. Returns are advantages + V(s_t).
    """
    if not buffer.episodes:
        raise DomainError("buffer is empty")
    num_agents = buffer.episodes[0].observations.shape[1]
    adv_chunks, ret_chunks = [], []
    for episode in buffer.episodes:
        v = np.stack(
            [critic.values[j][episode.observations[:, j]] for j in range(num_agents)],
            axis=1,
        )
        v_next = np.stack(
            [critic.values[j][episode.next_observations[:, j]] for j in range(num_agents)],
            axis=1,
        )
        live = (~episode.terminal).astype(float)[:, None]
        delta = episode.rewards + gamma * v_next * live - v
        advantages = np.zeros_like(delta)
        acc = np.zeros(num_agents)
        for t in range(episode.length - 1, -1, -1):
            acc = delta[t] + gamma * lam * live[t] * acc
            advantages[t] = acc
        adv_chunks.append(advantages)
        ret_chunks.append(advantages + v)
    return np.concatenate(adv_chunks), np.concatenate(ret_chunks)


def combine_fair_advantages(
    advantages: np.ndarray,
    critic: CriticTable,
    buffer: RolloutBuffer,
    alpha: float,
    v_floor: float,
) -> tuple[np.ndarray, int]:
    """Fair advantage A^F_{i,t} = sum_j c_i(j) A_{j,t} / max(V_j(s0), v_floor),
    with V_j(s0) the critic at agent j's initial observation of the episode.

    Returns the combined array and the number of floored (episode, agent)
    denominators.
    """
    num_agents = advantages.shape[1]
    coeffs = np.full((num_agents, num_agents), alpha)
    np.fill_diagonal(coeffs, 1.0)
    combined = np.empty_like(advantages)
    floor_hits = 0
    offset = 0
    for episode in buffer.episodes:
        v0 = np.array(
            [
                critic.values[j][episode.initial_observations[j]]
                for j in range(num_agents)
            ]
        )
        floor_hits += int((v0 < v_floor).sum())
        v0 = np.maximum(v0, v_floor)
        block = advantages[offset : offset + episode.length]
        combined[offset : offset + episode.length] = (block / v0) @ coeffs.T
        offset += episode.length
    return combined, floor_hits


def combine_utilitarian_advantages(advantages: np.ndarray) -> np.ndarray:
    """Unnormalized utilitarian combination: every agent ascends sum_j A_{j,t}."""
    total = advantages.sum(axis=1, keepdims=True)
    return np.repeat(total, advantages.shape[1], axis=1)


def _combined_advantages(
    advantages: np.ndarray,
    critic: CriticTable,
    buffer: RolloutBuffer,
    config: TrainConfig,
) -> tuple[np.ndarray, int]:
    if config.objective is ObjectiveMode.UTILITARIAN_WELFARE:
        combined, floor_hits = combine_utilitarian_advantages(advantages), 0
    else:
        combined, floor_hits = combine_fair_advantages(
            advantages, critic, buffer, config.alpha, config.v_floor
        )
    if config.normalize_advantages:
        centered = combined - combined.mean(axis=0, keepdims=True)
        combined = centered / (centered.std(axis=0, keepdims=True) + 1e-8)
    return combined, floor_hits


def _batch_rows(logits: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Softmax rows for a batch of observation indices, shape (T, A)."""
    z = logits[obs]
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _critic_regression_step(
    table: np.ndarray, obs: np.ndarray, targets: np.ndarray, lr: float
) -> float:
    """One descent step on the per-state mean squared return error.

    Each visited state's value moves by -lr * d/dV mean_(t: s_t=s)(V - R_t)^2,
    so a constant-return state contracts its error by (1 - 2 lr) per step.
    Returns the pre-update batch MSE.
    """
    mse = float(np.mean((table[obs] - targets) ** 2))
    sums = np.zeros_like(table)
    counts = np.zeros_like(table)
    np.add.at(sums, obs, targets)
    np.add.at(counts, obs, 1.0)
    visited = counts > 0
    residual = table[visited] - sums[visited] / counts[visited]
    table[visited] -= lr * 2.0 * residual
    return mse


def _critic_clipped_step(
    table: np.ndarray,
    obs: np.ndarray,
    targets: np.ndarray,
    old_values: np.ndarray,
    eps: float,
    lr: float,
) -> float:
    """Clipped-value variant: per-sample loss max((V-R)^2, (V_clip-R)^2) with
    V_clip = V_old + clip(V - V_old, -eps, eps). A sample's gradient vanishes
    only when the clipped branch dominates while the clip is saturated.
    """
    values = table[obs]
    clipped = old_values + np.clip(values - old_values, -eps, eps)
    plain_sq = (values - targets) ** 2
    clip_sq = (clipped - targets) ** 2
    loss = float(np.mean(np.maximum(plain_sq, clip_sq)))
    live = (plain_sq >= clip_sq) | (np.abs(values - old_values) < eps)
    grads = np.where(live, 2.0 * (values - targets), 0.0)
    sums = np.zeros_like(table)
    counts = np.zeros_like(table)
    np.add.at(sums, obs, grads)
    np.add.at(counts, obs, 1.0)
    visited = counts > 0
    table[visited] -= lr * sums[visited] / counts[visited]
    return loss


def _entropy_rows(rows: np.ndarray) -> np.ndarray:
    logs = np.log(np.clip(rows, 1e-300, None))
    return -(rows * logs).sum(axis=1)


def a2c_update(
    policies: SoftmaxPolicyProfile,
    critics: CriticTable,
    buffer: RolloutBuffer,
    config: TrainConfig,
    progress: float = 0.0,
) -> dict:
    """One fair A2C step: ascend E_t[A^F_{i,t} log pi_i(a_{i,t}|o_{i,t})] per
    actor (advantages detached), descend the squared TD-return error per
    critic. Requires an on-policy buffer."""
    if buffer.policy_version != policies.version:
        raise StaleBufferError(
            f"buffer from policy version {buffer.policy_version}, "
            f"policies at {policies.version}"
        )
    lr = config.learning_rate_at(progress)
    critic_lr = config.critic_lr_at(progress)
    obs, actions = buffer.flat()
    advantages, returns = compute_gae(buffer, critics, config.gamma, config.gae_lambda)
    fair, floor_hits = _combined_advantages(advantages, critics, buffer, config)
    num_agents = obs.shape[1]
    batch = obs.shape[0]
    diag = {"actor_loss": [], "critic_loss": [], "entropy": [], "floor_hits": floor_hits}
    for i in range(num_agents):
        rows = _batch_rows(policies.logits[i], obs[:, i])
        w = fair[:, i]
        grad = np.zeros_like(policies.logits[i])
        np.add.at(grad, (obs[:, i], actions[:, i]), w / batch)
        np.add.at(grad, obs[:, i], -(w[:, None] * rows) / batch)
        log_taken = np.log(np.clip(rows[np.arange(batch), actions[:, i]], 1e-300, None))
        diag["actor_loss"].append(float(-(w * log_taken).mean()))
        diag["entropy"].append(float(_entropy_rows(rows).mean()))
        policies.logits[i] += lr * grad
        mse = _critic_regression_step(critics.values[i], obs[:, i], returns[:, i], critic_lr)
        diag["critic_loss"].append(mse)
    policies.version += 1
    return diag


def ppo_update(
    policies: SoftmaxPolicyProfile,
    critics: CriticTable,
    buffer: RolloutBuffer,
    config: TrainConfig,
    progress: float = 0.0,
) -> dict:
    """Fair PPO: ppo_epochs passes of the clipped surrogate
    min(rho A^F, clip(rho, 1-eps, 1+eps) A^F) plus entropy regularization,
    with per-agent probability ratios against the snapshotted old policy;
    the critic regresses on the fixed TD(lambda) returns each epoch."""
    if buffer.policy_version != policies.version:
        raise StaleBufferError(
            f"buffer from policy version {buffer.policy_version}, "
            f"policies at {policies.version}"
        )
    lr = config.learning_rate_at(progress)
    critic_lr = config.critic_lr_at(progress)
    obs, actions = buffer.flat()
    advantages, returns = compute_gae(buffer, critics, config.gamma, config.gae_lambda)
    fair, floor_hits = _combined_advantages(advantages, critics, buffer, config)
    num_agents = obs.shape[1]
    batch = obs.shape[0]
    taken = np.arange(batch)
    old_log = []
    old_values = [critics.values[i][obs[:, i]].copy() for i in range(num_agents)]
    for i in range(num_agents):
        rows = _batch_rows(policies.logits[i], obs[:, i])
        p_taken = rows[taken, actions[:, i]]
        assert np.all(p_taken > 0.0), "old policy assigned zero probability"
        old_log.append(np.log(p_taken))

    diag = {"actor_loss": [], "critic_loss": [], "entropy": [], "floor_hits": floor_hits}
    eps = config.ppo_clip
    for _ in range(config.ppo_epochs):
        diag["actor_loss"], diag["critic_loss"], diag["entropy"] = [], [], []
        for i in range(num_agents):
            rows = _batch_rows(policies.logits[i], obs[:, i])
            log_new = np.log(np.clip(rows[taken, actions[:, i]], 1e-300, None))
            ratio = np.exp(log_new - old_log[i])
            w = fair[:, i]
            clipped_out = ((w > 0) & (ratio > 1.0 + eps)) | ((w < 0) & (ratio < 1.0 - eps))
            coeff = np.where(clipped_out, 0.0, ratio * w)
            grad = np.zeros_like(policies.logits[i])
            np.add.at(grad, (obs[:, i], actions[:, i]), coeff / batch)
            np.add.at(grad, obs[:, i], -(coeff[:, None] * rows) / batch)
            if config.entropy_coef > 0.0:
                entropy = _entropy_rows(rows)
                log_rows = np.log(np.clip(rows, 1e-300, None))
                ent_grad = -rows * (log_rows + entropy[:, None])
                np.add.at(grad, obs[:, i], config.entropy_coef * ent_grad / batch)
            surrogate = np.minimum(
                ratio * w, np.clip(ratio, 1.0 - eps, 1.0 + eps) * w
            )
            diag["actor_loss"].append(float(-surrogate.mean()))
            diag["entropy"].append(float(_entropy_rows(rows).mean()))
            policies.logits[i] += lr * grad
            if config.ppo_value_clip:
                loss = _critic_clipped_step(
                    critics.values[i], obs[:, i], returns[:, i], old_values[i], eps, critic_lr
                )
            else:
                loss = _critic_regression_step(
                    critics.values[i], obs[:, i], returns[:, i], critic_lr
                )
            diag["critic_loss"].append(loss)
        policies.version += 1
    return diag


@dataclass
class TrainResult:
    policies: SoftmaxPolicyProfile
    critics: CriticTable
    log_rows: list[dict]
    steps: int
    episodes: int
    floor_hits: int


def train(
    env_factory: Callable[[int], object],
    config: TrainConfig,
    log_path=None,
    snapshot_path=None,
) -> TrainResult:
    """Alternate collection over num_envs seeded collectors with on-policy
    updates until total_steps environment steps are consumed. Logs one row
    per (episode, agent); fully deterministic for a fixed config and seed.
    """
    problems = config.validate()
    if problems:
        raise DomainError("invalid train config: " + "; ".join(problems))
    seed_seq = np.random.SeedSequence(config.seed)
    children = seed_seq.spawn(config.num_envs + 1)
    envs = [
        env_factory(int(children[k].generate_state(1)[0]))
        for k in range(config.num_envs)
    ]
    rng = np.random.default_rng(children[-1])
    num_agents = envs[0].num_agents
    num_states = envs[0].num_states
    action_counts = envs[0].action_counts
    if config.policy_init_scale > 0.0:
        policies = SoftmaxPolicyProfile.random(
            num_states, action_counts, rng, scale=config.policy_init_scale
        )
    else:
        policies = SoftmaxPolicyProfile.uniform(num_states, action_counts)
    critics = CriticTable.constant(num_agents, num_states, config.critic_init)

    update = a2c_update if config.algorithm is Algorithm.FAIR_MAA2C else ppo_update
    log_rows: list[dict] = []
    steps_done = 0
    episode_index = 0
    total_floor_hits = 0
    while steps_done < config.total_steps:
        buffer, stats = collect_rollouts(envs, policies, rng)
        steps_done += buffer.num_steps
        diag = update(
            policies, critics, buffer, config, progress=steps_done / config.total_steps
        )
        total_floor_hits += diag["floor_hits"]
        for stat in stats:
            for agent in range(num_agents):
                log_rows.append(
                    {
                        "step": steps_done,
                        "episode": episode_index,
                        "agent": agent,
                        "return": float(stat.returns[agent]),
                        "apples": float(stat.apples[agent]),
                        "gini": stat.gini,
                        "actor_loss": diag["actor_loss"][agent],
                        "critic_loss": diag["critic_loss"][agent],
                        "entropy": diag["entropy"][agent],
                        "floor_hits": diag["floor_hits"],
                    }
                )
            episode_index += 1
    if log_path is not None:
        write_log_csv(log_path, log_rows)
    if snapshot_path is not None:
        save_policy_snapshot(snapshot_path, policies)
    return TrainResult(
        policies=policies,
        critics=critics,
        log_rows=log_rows,
        steps=steps_done,
        episodes=episode_index,
        floor_hits=total_floor_hits,
    )


def write_log_csv(path, rows: list[dict]) -> None:
    """Training-log CSV with deterministic float formatting (repr)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row["step"],
                    row["episode"],
                    row["agent"],
                    repr(row["return"]),
                    repr(row["apples"]),
                    repr(row["gini"]),
                    repr(row["actor_loss"]),
                    repr(row["critic_loss"]),
                    repr(row["entropy"]),
                    row["floor_hits"],
                ]
            )


def save_policy_snapshot(path, policies: SoftmaxPolicyProfile) -> None:
    """Policy snapshot: a JSON array of per-agent logit matrices."""
    data = [logits.tolist() for logits in policies.logits]
    Path(path).write_text(json.dumps(data))


def load_policy_snapshot(path) -> SoftmaxPolicyProfile:
    data = json.loads(Path(path).read_text())
    return SoftmaxPolicyProfile([np.asarray(table, dtype=float) for table in data])
