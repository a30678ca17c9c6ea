"""From-scratch PPO, A2C, and DQN over the vectorized environment interface.

PPO and A2C share an actor-critic pair of tanh MLPs and a GAE rollout
buffer; DQN uses a ring replay buffer, a hard-copied target network, and a
linearly decaying epsilon-greedy behavior policy.  A single Adam instance
owns every trainable array (policy, value, and the Gaussian head's log-std),
and gradients are clipped by global norm.

Algorithm/strategy compatibility is enforced at config construction:
DQN only supports the incremental (discrete) strategy; PPO and A2C support
both.  SAC and DDPG appear in the table as known but unimplemented.
"""

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .environment import ContinuousSpace, DiscreteSpace, EnvConfig, make_env
from .vecenv import VecEnv

#: strategy support per algorithm; None marks recognized-but-unimplemented.
COMPATIBILITY = {
    "ppo": {"incremental", "direct"},
    "a2c": {"incremental", "direct"},
    "dqn": {"incremental"},
    "sac": None,
    "ddpg": None,
}

IMPLEMENTED = tuple(a for a, s in COMPATIBILITY.items() if s is not None)


class IncompatibleAgentError(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    algorithm: str = "ppo"
    strategy: str = "incremental"
    total_steps: int = 10_000
    seed: int = 0
    hidden: tuple = (64, 64)
    lr: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_range: float | None = 0.2
    n_steps: int = 2048
    epochs: int = 10
    minibatch_size: int = 64
    ent_coef: float = 0.0
    vf_coef: float = 0.5
    max_grad_norm: float | None = 0.5
    normalize_advantage: bool = True
    log_std_init: float = -0.5
    # DQN
    buffer_size: int = 50_000
    batch_size: int = 32
    target_update: int = 1000
    learning_starts: int = 1000
    train_freq: int = 1
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.1
    checkpoint_interval: int | None = None

    def __post_init__(self):
        if self.algorithm not in COMPATIBILITY:
            raise IncompatibleAgentError(f"unknown algorithm {self.algorithm!r}")
        supported = COMPATIBILITY[self.algorithm]
        if supported is None:
            raise IncompatibleAgentError(
                f"{self.algorithm} is recognized but not implemented"
            )
        if self.strategy not in supported:
            raise IncompatibleAgentError(
                f"{self.algorithm} does not support the {self.strategy} strategy"
            )
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")


def default_agent_config(algorithm, strategy, total_steps, seed=0, **overrides):
    """Per-algorithm defaults mirroring common reference settings."""
    base = dict(algorithm=algorithm, strategy=strategy, total_steps=total_steps, seed=seed)
    if algorithm == "a2c":
        base.update(lr=7e-4, n_steps=5, epochs=1, clip_range=None,
                    gae_lambda=1.0, normalize_advantage=False)
    elif algorithm == "dqn":
        base.update(lr=1e-4)
    base.update(overrides)
    return AgentConfig(**base)


# ---------------------------------------------------------------------------
# Buffers
# ---------------------------------------------------------------------------

class RolloutBuffer:
    """On-policy storage for n_steps x n_envs transitions plus GAE."""

    def __init__(self, n_steps, n_envs, obs_dim, action_dim=None):
        self.n_steps = n_steps
        self.n_envs = n_envs
        self.obs = np.zeros((n_steps, n_envs, obs_dim))
        if action_dim is None:
            self.actions = np.zeros((n_steps, n_envs), dtype=np.int64)
        else:
            self.actions = np.zeros((n_steps, n_envs, action_dim))
        self.logprobs = np.zeros((n_steps, n_envs))
        self.rewards = np.zeros((n_steps, n_envs))
        self.values = np.zeros((n_steps, n_envs))
        self.dones = np.zeros((n_steps, n_envs))
        self.advantages = np.zeros((n_steps, n_envs))
        self.returns = np.zeros((n_steps, n_envs))
        self.pos = 0

    def __len__(self):
        return self.pos * self.n_envs

    def add(self, obs, actions, logprobs, rewards, values, dones):
        if self.pos >= self.n_steps:
            raise RuntimeError("rollout buffer is full")
        t = self.pos
        self.obs[t] = obs
        self.actions[t] = actions
        self.logprobs[t] = logprobs
        self.rewards[t] = rewards
        self.values[t] = values
        self.dones[t] = dones
        self.pos += 1

    def compute_returns_and_advantages(self, last_values, gamma, lam):
        """GAE(lambda); terminal transitions mask the bootstrap value."""
        last_adv = np.zeros(self.n_envs)
        for t in range(self.pos - 1, -1, -1):
            nonterminal = 1.0 - self.dones[t]
            next_values = self.values[t + 1] if t < self.pos - 1 else last_values
            delta = self.rewards[t] + gamma * next_values * nonterminal - self.values[t]
            last_adv = delta + gamma * lam * nonterminal * last_adv
            self.advantages[t] = last_adv
        self.returns[: self.pos] = self.advantages[: self.pos] + self.values[: self.pos]

    def flattened(self):
        n = len(self)
        obs = self.obs[: self.pos].reshape(n, -1)
        if self.actions.ndim == 2:
            actions = self.actions[: self.pos].reshape(n)
        else:
            actions = self.actions[: self.pos].reshape(n, -1)
        return (
            obs,
            actions,
            self.logprobs[: self.pos].reshape(n),
            self.advantages[: self.pos].reshape(n),
            self.returns[: self.pos].reshape(n),
        )

    def clear(self):
        self.pos = 0


class ReplayBuffer:
    """FIFO ring buffer of single transitions with uniform sampling."""

    def __init__(self, capacity, obs_dim):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.pos = 0
        self.full = False

    def __len__(self):
        return self.capacity if self.full else self.pos

    def add(self, obs, action, reward, next_obs, done):
        i = self.pos
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self.pos += 1
        if self.pos == self.capacity:
            self.pos = 0
            self.full = True

    def sample(self, rng, batch_size):
        idx = rng.integers(0, len(self), batch_size)
        return (
            self.obs[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_obs[idx],
            self.dones[idx],
        )


# ---------------------------------------------------------------------------
# Actor-critic container
# ---------------------------------------------------------------------------

class ActorCritic:
    def __init__(self, obs_dim, action_space, hidden, rng, log_std_init=-0.5):
        self.obs_dim = obs_dim
        self.action_space = action_space
        self.discrete = isinstance(action_space, DiscreteSpace)
        if self.discrete:
            out = action_space.n_actions
            self.policy = nn.Mlp([obs_dim, *hidden, out], rng, head="categorical")
            self.log_std = None
        else:
            out = action_space.dim
            self.policy = nn.Mlp([obs_dim, *hidden, out], rng, head="gaussian")
            self.log_std = np.full(out, float(log_std_init))
        self.value = nn.Mlp([obs_dim, *hidden, 1], rng, head="linear")

    @property
    def parameters(self):
        params = self.policy.parameters + self.value.parameters
        if self.log_std is not None:
            params.append(self.log_std)
        return params

    def act(self, obs, rng):
        """Sampled actions plus their log-probs for a batch of observations."""
        out, _ = self.policy.forward(obs)
        if self.discrete:
            actions, logps, _ = nn.categorical_sample(out, rng)
            return actions, logps
        actions, logps, _ = nn.gaussian_sample(out, self.log_std, rng)
        return actions, logps

    def act_deterministic(self, obs):
        out, _ = self.policy.forward(obs)
        if self.discrete:
            return np.argmax(out, axis=1)
        return np.clip(out, self.action_space.low, self.action_space.high)

    def values_of(self, obs):
        v, _ = self.value.forward(obs)
        return v[:, 0]

    def env_actions(self, actions):
        """Map raw policy samples to executable env actions."""
        if self.discrete:
            return actions
        return np.clip(actions, self.action_space.low, self.action_space.high)


# ---------------------------------------------------------------------------
# Rollout collection
# ---------------------------------------------------------------------------

def collect_rollout(ac: ActorCritic, vecenv: VecEnv, n_steps, rng, obs, config,
                    global_step=0):
    """Fill a fresh rollout buffer with n_steps synchronous vec steps.

    Episodes auto-reset inside the vec env; completed-episode records are
    returned as (global_step, episode_reward, episode_length, info) tuples
    in completion order.  Advantages and returns are computed before the
    buffer is handed back.
    """
    action_dim = None if ac.discrete else ac.action_space.dim
    buffer = RolloutBuffer(n_steps, vecenv.n_envs, ac.obs_dim, action_dim)
    episodes = []
    for t in range(n_steps):
        actions, logps = ac.act(obs, rng)
        values = ac.values_of(obs)
        next_obs, rewards, dones, infos = vecenv.vec_step(ac.env_actions(actions))
        buffer.add(obs, actions, logps, rewards, values, dones.astype(float))
        step_now = global_step + (t + 1) * vecenv.n_envs
        for info in infos:
            if "episode_reward" in info:
                episodes.append(
                    (step_now, info["episode_reward"], info["episode_length"], info)
                )
        obs = next_obs
    last_values = ac.values_of(obs)
    buffer.compute_returns_and_advantages(last_values, config.gamma, config.gae_lambda)
    return buffer, obs, episodes


# ---------------------------------------------------------------------------
# Updates
# ---------------------------------------------------------------------------

def _policy_gradient_step(ac, adam, obs, actions, coef_logp, coef_entropy,
                          returns, vf_coef, max_grad_norm):
    """One optimizer step from per-sample log-prob/entropy weights.

    ``coef_logp`` is dL/dlogpi per sample (averaging included); the entropy
    weight is applied per sample likewise.  The value net is regressed to
    ``returns`` with plain MSE scaled by vf_coef.
    """
    n = len(obs)
    out, cache_pi = ac.policy.forward(obs)
    if ac.discrete:
        d_out = nn.categorical_grads(out, actions, coef_logp, coef_entropy)
        grads_pi, _ = ac.policy.backward(cache_pi, d_out)
        grads_extra = []
    else:
        d_mean, d_log_std = nn.gaussian_grads(
            out, ac.log_std, actions, coef_logp, coef_entropy
        )
        grads_pi, _ = ac.policy.backward(cache_pi, d_mean)
        grads_extra = [d_log_std]

    v, cache_v = ac.value.forward(obs)
    v = v[:, 0]
    value_loss = float(np.mean((v - returns) ** 2))
    d_v = (vf_coef * 2.0 * (v - returns) / n)[:, None]
    grads_v, _ = ac.value.backward(cache_v, d_v)

    grads = grads_pi + grads_v + grads_extra
    nn.clip_grads(grads, max_grad_norm)
    adam.step(ac.parameters, grads)
    return value_loss


def ppo_update(ac: ActorCritic, adam: nn.Adam, buffer: RolloutBuffer,
               config: AgentConfig, rng) -> dict:
    """Clipped-surrogate update over shuffled minibatches; empties the
    buffer afterwards (on-policy)."""
    obs, actions, old_logps, advantages, returns = buffer.flattened()
    n = len(obs)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "updates": 0}
    for _ in range(config.epochs):
        if config.minibatch_size >= n:
            order = np.arange(n)
        else:
            order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            mb = order[start: start + config.minibatch_size]
            adv = advantages[mb]
            if config.normalize_advantage and len(mb) > 1:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            out, _ = ac.policy.forward(obs[mb])
            if ac.discrete:
                logps, entropy = nn.categorical_logprob_entropy(out, actions[mb])
            else:
                logps = nn.gaussian_logprob(out, ac.log_std, actions[mb])
                entropy = np.full(
                    len(mb), float(np.sum(ac.log_std + 0.5 * (nn.LOG_2PI + 1.0)))
                )
            ratio = np.exp(logps - old_logps[mb])
            unclipped = ratio * adv
            if config.clip_range is None:
                surrogate = unclipped
                active = np.ones(len(mb), dtype=bool)
            else:
                clipped = np.clip(ratio, 1.0 - config.clip_range,
                                  1.0 + config.clip_range) * adv
                surrogate = np.minimum(unclipped, clipped)
                active = unclipped <= clipped
            policy_loss = -float(np.mean(surrogate))
            if not np.isfinite(policy_loss):
                raise FloatingPointError("PPO policy loss is not finite")

            m = len(mb)
            coef_logp = np.where(active, -ratio * adv / m, 0.0)
            coef_entropy = np.full(m, -config.ent_coef / m)
            value_loss = _policy_gradient_step(
                ac, adam, obs[mb], actions[mb], coef_logp, coef_entropy,
                returns[mb], config.vf_coef, config.max_grad_norm,
            )
            stats["policy_loss"] += policy_loss
            stats["value_loss"] += value_loss
            stats["entropy"] += float(np.mean(entropy))
            stats["updates"] += 1
    for key in ("policy_loss", "value_loss", "entropy"):
        stats[key] /= max(stats["updates"], 1)
    buffer.clear()
    return stats


def a2c_update(ac: ActorCritic, adam: nn.Adam, buffer: RolloutBuffer,
               config: AgentConfig) -> dict:
    """Single full-batch policy-gradient step (no clipping, no epochs);
    empties the buffer afterwards."""
    obs, actions, _, advantages, returns = buffer.flattened()
    n = len(obs)
    adv = advantages
    if config.normalize_advantage and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    out, _ = ac.policy.forward(obs)
    if ac.discrete:
        logps, entropy = nn.categorical_logprob_entropy(out, actions)
    else:
        logps = nn.gaussian_logprob(out, ac.log_std, actions)
        entropy = np.full(n, float(np.sum(ac.log_std + 0.5 * (nn.LOG_2PI + 1.0))))
    policy_loss = -float(np.mean(logps * adv))
    if not np.isfinite(policy_loss):
        raise FloatingPointError("A2C policy loss is not finite")
    coef_logp = -adv / n
    coef_entropy = np.full(n, -config.ent_coef / n)
    value_loss = _policy_gradient_step(
        ac, adam, obs, actions, coef_logp, coef_entropy,
        returns, config.vf_coef, config.max_grad_norm,
    )
    buffer.clear()
    return {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": float(np.mean(entropy)),
        "updates": 1,
    }


def dqn_targets(target_net: nn.Mlp, rewards, next_obs, dones, gamma):
    """Bootstrapped TD targets r + gamma * max_a' Q_target(s', a') * (1-done)."""
    q_next, _ = target_net.forward(next_obs)
    return rewards + gamma * q_next.max(axis=1) * (1.0 - dones)


def dqn_update(qnet: nn.Mlp, target_net: nn.Mlp, replay: ReplayBuffer,
               adam: nn.Adam, config: AgentConfig, rng) -> dict:
    """One minibatch TD step on the online network."""
    obs, actions, rewards, next_obs, dones = replay.sample(rng, config.batch_size)
    targets = dqn_targets(target_net, rewards, next_obs, dones, config.gamma)
    q, cache = qnet.forward(obs)
    picked = q[np.arange(len(obs)), actions]
    td = picked - targets
    loss = float(np.mean(td * td))
    if not np.isfinite(loss):
        raise FloatingPointError("DQN loss is not finite")
    d_q = np.zeros_like(q)
    d_q[np.arange(len(obs)), actions] = 2.0 * td / len(obs)
    grads, _ = qnet.backward(cache, d_q)
    nn.clip_grads(grads, 10.0)
    adam.step(qnet.parameters, grads)
    return {"loss": loss}


def epsilon_at(step, config: AgentConfig) -> float:
    horizon = max(1.0, config.eps_fraction * config.total_steps)
    frac = min(1.0, step / horizon)
    return config.eps_start + frac * (config.eps_end - config.eps_start)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_AGENT_MAGIC = b"DFAG"
_ALGO_CODES = {"ppo": 0, "a2c": 1, "dqn": 2}
_ALGO_NAMES = {v: k for k, v in _ALGO_CODES.items()}
_STRATEGY_CODES = {"incremental": 0, "direct": 1}
_STRATEGY_NAMES = {v: k for k, v in _STRATEGY_CODES.items()}


@dataclass
class Checkpoint:
    algorithm: str
    strategy: str
    obs_dim: int
    act_dim: int
    global_step: int
    nets: list = field(repr=False)
    arrays: list = field(repr=False)


def save_checkpoint(path, algorithm, strategy, obs_dim, act_dim, global_step,
                    nets, arrays=()):
    with open(path, "wb") as fh:
        fh.write(_AGENT_MAGIC)
        fh.write(
            struct.pack(
                "<BBBIIQBB",
                1,
                _ALGO_CODES[algorithm],
                _STRATEGY_CODES[strategy],
                obs_dim,
                act_dim,
                global_step,
                len(nets),
                len(arrays),
            )
        )
        for net in nets:
            nn.save_mlp(fh, net)
        for arr in arrays:
            nn.save_array(fh, arr)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _AGENT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        version, algo, strat, obs_dim, act_dim, global_step, n_nets, n_arrays = (
            struct.unpack("<BBBIIQBB", fh.read(21))
        )
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        nets = [nn.load_mlp(fh) for _ in range(n_nets)]
        arrays = [nn.load_array(fh) for _ in range(n_arrays)]
    return Checkpoint(
        algorithm=_ALGO_NAMES[algo],
        strategy=_STRATEGY_NAMES[strat],
        obs_dim=obs_dim,
        act_dim=act_dim,
        global_step=global_step,
        nets=nets,
        arrays=arrays,
    )


# ---------------------------------------------------------------------------
# Training driver
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    episode_rows: list
    global_steps: int
    n_episodes: int
    wall_s: float
    checkpoint_path: str | None = None
    agent: object = field(default=None, repr=False)


EPISODE_LOG_COLUMNS = (
    "run_id", "algorithm", "strategy", "case", "n_envs", "seed",
    "global_step", "episode", "episode_reward", "steps_per_episode", "wall_s",
)


def _build_vecenv(env_config: EnvConfig, n_envs: int, step_logger=None,
                  env_factory=None) -> VecEnv:
    factory = env_factory or make_env
    seeds = VecEnv.derive_seeds(env_config.seed, n_envs)
    envs = [factory(env_config, seed=s) for s in seeds]
    if step_logger is not None:
        from .environment import StepLoggingEnv

        envs = [StepLoggingEnv(env, step_logger, i) for i, env in enumerate(envs)]
    return VecEnv(envs)


def train(agent_config: AgentConfig, env_config: EnvConfig, n_envs: int = 1,
          run_id: str = "run", out_dir=None, resume_from=None,
          step_logger=None, env_factory=None) -> TrainResult:
    """Run collect/update cycles until total_steps and log per-episode rows.

    The agent's strategy must match the environment's.  Logged rows follow
    EPISODE_LOG_COLUMNS; every stochastic element derives from the configs'
    seeds, so repeated runs are reproducible (wall_s excepted).
    """
    if agent_config.strategy != env_config.strategy:
        raise IncompatibleAgentError(
            f"agent strategy {agent_config.strategy!r} != "
            f"env strategy {env_config.strategy!r}"
        )
    vec = _build_vecenv(env_config, n_envs, step_logger, env_factory)
    rng = np.random.default_rng(agent_config.seed)
    net_rng = np.random.default_rng(agent_config.seed)
    t0 = time.perf_counter()
    rows = []
    episode_counter = 0
    start_step = 0

    def log_episode(step, reward, length):
        nonlocal episode_counter
        episode_counter += 1
        rows.append({
            "run_id": run_id,
            "algorithm": agent_config.algorithm,
            "strategy": agent_config.strategy,
            "case": env_config.case,
            "n_envs": n_envs,
            "seed": agent_config.seed,
            "global_step": step,
            "episode": episode_counter,
            "episode_reward": reward,
            "steps_per_episode": length,
            "wall_s": time.perf_counter() - t0,
        })

    checkpoint_path = None
    last_checkpoint_step = start_step

    def maybe_checkpoint(agent_nets, arrays, act_dim, step, final=False):
        nonlocal checkpoint_path, last_checkpoint_step
        if out_dir is None:
            return
        interval = agent_config.checkpoint_interval
        if not final and (interval is None
                          or step - last_checkpoint_step < interval):
            return
        import os

        name = "checkpoint.bin" if final else f"checkpoint_{step}.bin"
        path = os.path.join(out_dir, name)
        save_checkpoint(
            path, agent_config.algorithm, agent_config.strategy,
            vec.observation_dim, act_dim, step, agent_nets, arrays,
        )
        last_checkpoint_step = step
        if final:
            checkpoint_path = path

    if agent_config.algorithm in ("ppo", "a2c"):
        ac = ActorCritic(vec.observation_dim, vec.action_space,
                         agent_config.hidden, net_rng, agent_config.log_std_init)
        if resume_from is not None:
            ckpt = load_checkpoint(resume_from)
            ac.policy.copy_from(ckpt.nets[0])
            ac.value.copy_from(ckpt.nets[1])
            if ckpt.arrays and ac.log_std is not None:
                ac.log_std[...] = ckpt.arrays[0]
            start_step = ckpt.global_step
        adam = nn.Adam(ac.parameters, lr=agent_config.lr)
        act_dim = (vec.action_space.n_actions if ac.discrete
                   else vec.action_space.dim)
        obs = vec.vec_reset()
        global_step = start_step
        while global_step < start_step + agent_config.total_steps:
            buffer, obs, episodes = collect_rollout(
                ac, vec, agent_config.n_steps, rng, obs, agent_config, global_step
            )
            for step, reward, length, _ in episodes:
                log_episode(step, reward, length)
            if agent_config.algorithm == "ppo":
                ppo_update(ac, adam, buffer, agent_config, rng)
            else:
                a2c_update(ac, adam, buffer, agent_config)
            global_step += agent_config.n_steps * vec.n_envs
            arrays = [ac.log_std] if ac.log_std is not None else []
            maybe_checkpoint([ac.policy, ac.value], arrays, act_dim, global_step)
        arrays = [ac.log_std] if ac.log_std is not None else []
        maybe_checkpoint([ac.policy, ac.value], arrays, act_dim, global_step,
                         final=True)
        agent = ac
    else:
        n_actions = vec.action_space.n_actions
        qnet = nn.Mlp([vec.observation_dim, *agent_config.hidden, n_actions],
                      net_rng, head="categorical")
        target = nn.Mlp([vec.observation_dim, *agent_config.hidden, n_actions],
                        head="categorical")
        target.copy_from(qnet)
        if resume_from is not None:
            ckpt = load_checkpoint(resume_from)
            qnet.copy_from(ckpt.nets[0])
            target.copy_from(ckpt.nets[1])
            start_step = ckpt.global_step
        adam = nn.Adam(qnet.parameters, lr=agent_config.lr)
        replay = ReplayBuffer(agent_config.buffer_size, vec.observation_dim)
        obs = vec.vec_reset()
        global_step = start_step
        last_target_sync = start_step
        vec_step_count = 0
        while global_step < start_step + agent_config.total_steps:
            eps = epsilon_at(global_step - start_step, agent_config)
            q, _ = qnet.forward(obs)
            greedy = np.argmax(q, axis=1)
            explore = rng.random(vec.n_envs) < eps
            randoms = rng.integers(0, n_actions, vec.n_envs)
            actions = np.where(explore, randoms, greedy)
            next_obs, rewards, dones, infos = vec.vec_step(actions)
            for i, info in enumerate(infos):
                terminal_obs = info.get("terminal_observation", next_obs[i])
                replay.add(obs[i], actions[i], rewards[i], terminal_obs, dones[i])
                if "episode_reward" in info:
                    log_episode(global_step + vec.n_envs,
                                info["episode_reward"], info["episode_length"])
            obs = next_obs
            global_step += vec.n_envs
            vec_step_count += 1
            if (len(replay) >= agent_config.learning_starts
                    and vec_step_count % agent_config.train_freq == 0):
                dqn_update(qnet, target, replay, adam, agent_config, rng)
            if global_step - last_target_sync >= agent_config.target_update:
                target.copy_from(qnet)
                last_target_sync = global_step
            maybe_checkpoint([qnet, target], [], n_actions, global_step)
        maybe_checkpoint([qnet, target], [], n_actions, global_step, final=True)
        agent = qnet

    return TrainResult(
        episode_rows=rows,
        global_steps=global_step,
        n_episodes=episode_counter,
        wall_s=time.perf_counter() - t0,
        checkpoint_path=checkpoint_path,
        agent=agent,
    )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalStats:
    mean_reward: float
    mean_steps: float
    goal_rate: float
    episodes: list


def evaluate_policy(checkpoint_path, env_config: EnvConfig, n_episodes: int,
                    deterministic: bool = True, seed: int = 0) -> EvalStats:
    """Roll out a saved policy; greedy action selection when deterministic."""
    if n_episodes == 0:
        return EvalStats(float("nan"), float("nan"), float("nan"), [])
    ckpt = load_checkpoint(checkpoint_path)
    env = make_env(env_config, seed=seed)
    if env.observation_dim != ckpt.obs_dim:
        raise ValueError(
            f"checkpoint expects obs_dim={ckpt.obs_dim}, env has "
            f"{env.observation_dim}"
        )
    rng = np.random.default_rng(seed)
    policy = ckpt.nets[0]
    space = env.action_space
    discrete = isinstance(space, DiscreteSpace)
    log_std = ckpt.arrays[0] if ckpt.arrays else None
    episodes = []
    for _ in range(n_episodes):
        obs = env.reset()
        total = 0.0
        steps = 0
        goal = False
        done = False
        while not done:
            out, _ = policy.forward(obs[None, :])
            if discrete:
                if deterministic:
                    action = int(np.argmax(out[0]))
                else:
                    action = int(nn.categorical_sample(out, rng)[0][0])
            else:
                if deterministic or log_std is None:
                    action = np.clip(out[0], space.low, space.high)
                else:
                    raw, _, _ = nn.gaussian_sample(out, log_std, rng)
                    action = np.clip(raw[0], space.low, space.high)
            result = env.step(action)
            obs = result.observation
            total += result.reward
            steps += 1
            done = result.done
            goal = goal or result.info.get("goal_reached", False)
        episodes.append({"reward": total, "steps": steps, "goal": goal})
    return EvalStats(
        mean_reward=float(np.mean([e["reward"] for e in episodes])),
        mean_steps=float(np.mean([e["steps"] for e in episodes])),
        goal_rate=float(np.mean([e["goal"] for e in episodes])),
        episodes=episodes,
    )
