"""RL environments wrapping the deform -> solve -> objectives pipeline.

Observation layouts (fixed ordering):

* T-junction: ``[mu_t, mu_star, d_0 .. d_17]`` - 20 values, where d_k are
  the control-point displacement DOFs in the order defined by
  ``ffd.dof_layout("tjunction")`` (grid row-major, x before y).
* Channel: ``[q_out_1, q_out_2, q_out_3, d_0 .. d_17]`` - 21 values, DOFs
  ordered per ``ffd.dof_layout("channel")`` (columns 1..6, rows bottom to
  top, y only).

Incremental actions: index k toggles DOF k // 2 by +delta (k even) or
-delta (k odd).  Direct actions assign the whole DOF vector at once,
clamped to the configured bounds.  A tangled deformation or a failed solve
ends the episode with reward -10.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import ffd, objectives
from .mesh import BoundaryTag, generate_channel, generate_tjunction, min_signed_area
from .solver import MELT, SolverFailure, SolverSettings, default_bcs, solve_flow

CASES = ("tjunction", "channel", "surrogate")
STRATEGIES = ("incremental", "direct")


class EnvConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    case: str = "tjunction"
    strategy: str = "incremental"
    max_steps: int = 100
    eps_goal: float = 0.05
    q_star: float = 0.358
    mu_star_range: tuple = (0.1, 2.0)
    delta: float = 0.05
    action_low: float = -0.5
    action_high: float = 0.5
    perturbation_scale: float = 0.25
    mesh_h: float = 0.1
    rho: float = 1000.0
    sleep_ms: float = 0.0   # surrogate only: artificial per-step cost
    seed: int | None = None

    def __post_init__(self):
        if self.case not in CASES:
            raise EnvConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if self.strategy not in STRATEGIES:
            raise EnvConfigError(
                f"strategy must be one of {STRATEGIES}, got {self.strategy!r}"
            )
        if self.max_steps < 1:
            raise EnvConfigError("max_steps must be at least 1")
        if self.eps_goal <= 0:
            raise EnvConfigError("eps_goal must be positive")
        if self.q_star <= 0:
            raise EnvConfigError("q_star must be positive")
        if not self.mu_star_range[0] <= self.mu_star_range[1]:
            raise EnvConfigError("mu_star_range must be non-decreasing")
        if self.delta <= 0:
            raise EnvConfigError("delta must be positive")
        if not self.action_low < self.action_high:
            raise EnvConfigError("action bounds must satisfy low < high")


@dataclass(frozen=True)
class DiscreteSpace:
    n_actions: int
    delta: float

    def sample(self, rng):
        return int(rng.integers(self.n_actions))


@dataclass(frozen=True)
class ContinuousSpace:
    dim: int
    low: float
    high: float

    def sample(self, rng):
        return rng.uniform(self.low, self.high, self.dim)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


# ---------------------------------------------------------------------------
# Reward functions (pure, exhaustive over their printed cases)
# ---------------------------------------------------------------------------

def reward_t_direct(e_t: float, eps_goal: float, sim_failed: bool) -> float:
    """Flow-ratio deviation reward for one-shot optimization:
    -10 on failure, +5 inside the goal band, else -e_t."""
    if sim_failed:
        return -10.0
    if e_t < eps_goal:
        return 5.0
    return -e_t


def reward_t_incremental(
    mu_t: float,
    mu_prev: float,
    e_t: float,
    e_prev: float,
    eps_goal: float,
    sim_failed: bool,
) -> float:
    """Stepwise flow-ratio reward: failure and goal dominate, worsening
    costs -0.5, stagnation -0.2, improvement pays the relative progress
    |mu_t - mu_prev| / e_prev."""
    if sim_failed:
        return -10.0
    if e_t < eps_goal:
        return 5.0
    if e_t > e_prev:
        return -0.5
    if e_t == e_prev:
        return -0.2
    # improvement branch: e_t < e_prev and e_t >= eps_goal > 0
    assert e_prev > 0.0
    return abs(mu_t - mu_prev) / e_prev


def reward_ch_direct(q_t: float, q_star: float, sim_failed: bool) -> float:
    """Homogeneity reward for one-shot optimization: -10 on failure, +5
    below the empirical target, else -q_t."""
    if sim_failed:
        return -10.0
    if q_t < q_star:
        return 5.0
    return -q_t


def reward_ch_incremental(
    q_t: float, q_prev: float, q_star: float, sim_failed: bool
) -> float:
    """Stepwise homogeneity reward built on the improvement
    I = q_prev - q_t: worsening is doubled, the goal pays +5."""
    if sim_failed:
        return -10.0
    if q_t < q_star:
        return 5.0
    improvement = q_prev - q_t
    if improvement < 0.0:
        return 2.0 * improvement
    return improvement


# ---------------------------------------------------------------------------
# FEM-backed environment
# ---------------------------------------------------------------------------

class FlowChannelEnv:
    """Gym-style environment around the FFD + flow-solver pipeline."""

    def __init__(self, config: EnvConfig, solver_settings: SolverSettings | None = None):
        if config.case not in ("tjunction", "channel"):
            raise EnvConfigError(f"FlowChannelEnv does not handle case {config.case!r}")
        self.config = config
        self.layout = ffd.dof_layout(config.case)
        base = (
            generate_tjunction(config.mesh_h)
            if config.case == "tjunction"
            else generate_channel(config.mesh_h)
        )
        self.box = ffd.embed(base, self.layout.degrees, self.layout.grid_dims)
        self.bcs = default_bcs(config.case)
        self.props = replace(MELT, rho=config.rho)
        self.settings = solver_settings or SolverSettings()
        self._eta0 = None  # Picard warm start from the previous solve
        if config.case == "channel":
            self.patches = objectives.equal_patches(base, BoundaryTag.OUT, 3)
        else:
            # base geometry never changes between episodes; solve it once
            base_sol = solve_flow(base, self.props, self.bcs, self.settings)
            if not base_sol.converged:
                raise EnvConfigError("base T-junction solve did not converge")
            self._base_mu = objectives.mass_flow_ratio(base, base_sol, config.rho)
            self._base_eta = base_sol.element_viscosity
        self._rng = np.random.default_rng(config.seed)
        self._dofs = np.zeros(self.layout.n_dofs)
        self._goal = config.q_star if config.case == "channel" else 1.0
        self._steps = 0
        self._done = True
        self._objective = np.nan
        self._patch_q = np.zeros(3)
        self._ep_reward = 0.0

    # -- spaces -----------------------------------------------------------

    @property
    def action_space(self):
        if self.config.strategy == "incremental":
            return DiscreteSpace(self.layout.n_discrete_actions, self.config.delta)
        return ContinuousSpace(
            self.layout.n_dofs, self.config.action_low, self.config.action_high
        )

    @property
    def observation_dim(self) -> int:
        return (2 if self.config.case == "tjunction" else 3) + self.layout.n_dofs

    @property
    def goal(self) -> float:
        return self._goal

    # -- core API ----------------------------------------------------------

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._steps = 0
        self._done = False
        self._ep_reward = 0.0
        if self.config.case == "tjunction":
            lo, hi = self.config.mu_star_range
            self._goal = float(self._rng.uniform(lo, hi))
            self._dofs = np.zeros(self.layout.n_dofs)
            self._objective = self._base_mu
            self._eta0 = self._base_eta
        else:
            self._goal = self.config.q_star
            scale = self.config.perturbation_scale
            for _ in range(100):
                dofs = self._rng.uniform(-scale, scale, self.layout.n_dofs)
                mesh = ffd.deform(self.box, self.layout.displacement_from_dofs(dofs))
                if min_signed_area(mesh) <= 0:
                    continue
                try:
                    sol = solve_flow(mesh, self.props, self.bcs, self.settings)
                except SolverFailure:
                    continue
                if not sol.converged:
                    continue
                self._dofs = dofs
                self._eta0 = sol.element_viscosity
                pq = objectives.patch_quality(mesh, sol, self.patches, self.config.rho)
                self._patch_q = pq.q
                self._objective = objectives.quality_sum(pq.q)
                break
            else:
                raise EnvConfigError(
                    "100 consecutive reset perturbations tangled or failed to solve"
                )
        return self.build_observation()

    def step(self, action) -> StepResult:
        if self._done:
            raise RuntimeError("episode is done; call reset() first")
        self._steps += 1
        self._apply_action(action)

        sim_failed = False
        objective = np.nan
        patch_q = None
        mesh = ffd.deform(self.box, self.layout.displacement_from_dofs(self._dofs))
        if min_signed_area(mesh) <= 0:
            sim_failed = True
        else:
            try:
                sol = solve_flow(
                    mesh, self.props, self.bcs, self.settings, eta0=self._eta0
                )
                if not sol.converged:
                    sim_failed = True
                else:
                    self._eta0 = sol.element_viscosity
            except SolverFailure:
                sim_failed = True
        if not sim_failed:
            if self.config.case == "tjunction":
                objective = objectives.mass_flow_ratio(mesh, sol, self.config.rho)
            else:
                pq = objectives.patch_quality(mesh, sol, self.patches, self.config.rho)
                patch_q = pq.q
                objective = objectives.quality_sum(pq.q)

        reward, goal_reached = self._reward(objective, sim_failed)
        done = sim_failed or goal_reached or self._steps >= self.config.max_steps
        if not sim_failed:
            self._objective = objective
            if patch_q is not None:
                self._patch_q = patch_q
        self._done = done
        self._ep_reward += reward
        info = {
            "sim_failed": sim_failed,
            "goal_reached": goal_reached,
            "objective": objective,
            "goal": self._goal,
            "step": self._steps,
        }
        if done:
            info["episode_reward"] = self._ep_reward
            info["episode_length"] = self._steps
        return StepResult(self.build_observation(), reward, done, info)

    def build_observation(self) -> np.ndarray:
        if self.config.case == "tjunction":
            head = [self._objective, self._goal]
        else:
            head = list(self._patch_q)
        return np.concatenate([head, self._dofs])

    # -- helpers -----------------------------------------------------------

    def _apply_action(self, action):
        if self.config.strategy == "incremental":
            k = int(action)
            if not 0 <= k < self.layout.n_discrete_actions:
                raise ValueError(f"discrete action {k} out of range")
            sign = 1.0 if k % 2 == 0 else -1.0
            self._dofs[k // 2] += sign * self.config.delta
        else:
            a = np.asarray(action, dtype=float)
            if a.shape != (self.layout.n_dofs,):
                raise ValueError(
                    f"continuous action must have shape ({self.layout.n_dofs},)"
                )
            self._dofs = np.clip(a, self.config.action_low, self.config.action_high)

    def _reward(self, objective, sim_failed):
        cfg = self.config
        if cfg.case == "tjunction":
            e_t = abs(objective - self._goal) if not sim_failed else np.inf
            goal = (not sim_failed) and e_t < cfg.eps_goal
            if cfg.strategy == "direct":
                r = reward_t_direct(e_t if not sim_failed else 0.0, cfg.eps_goal, sim_failed)
            else:
                e_prev = abs(self._objective - self._goal)
                r = reward_t_incremental(
                    objective if not sim_failed else 0.0,
                    self._objective,
                    e_t if not sim_failed else 0.0,
                    e_prev,
                    cfg.eps_goal,
                    sim_failed,
                )
            return r, goal
        q_t = objective if not sim_failed else np.inf
        goal = (not sim_failed) and q_t < cfg.q_star
        if cfg.strategy == "direct":
            r = reward_ch_direct(q_t if not sim_failed else 0.0, cfg.q_star, sim_failed)
        else:
            r = reward_ch_incremental(
                q_t if not sim_failed else 0.0, self._objective, cfg.q_star, sim_failed
            )
        return r, goal


def make_env(config: EnvConfig, seed=None):
    """Instantiate the configured environment; ``seed`` overrides the
    config's seed."""
    if seed is not None:
        config = replace(config, seed=int(seed))
    if config.case == "surrogate":
        from .surrogate import SurrogateEnv

        return SurrogateEnv(config)
    return FlowChannelEnv(config)


class StepLogWriter:
    """Per-step CSV rows: run_id, env_id, episode, step, action, reward,
    objective, goal, sim_failed, wall_ms.  Thread safe (one lock)."""

    HEADER = "run_id,env_id,episode,step,action,reward,objective,goal,sim_failed,wall_ms"
    SCHEMA = "# dieflow-steps-v1"

    def __init__(self, path, run_id):
        import threading

        self.run_id = run_id
        self._fh = open(path, "w")
        self._fh.write(self.SCHEMA + "\n" + self.HEADER + "\n")
        self._t0 = time.perf_counter()
        self._lock = threading.Lock()

    def write(self, env_id, episode, step, action, result: StepResult):
        wall_ms = (time.perf_counter() - self._t0) * 1e3
        action_repr = (
            str(int(action))
            if np.isscalar(action) or np.asarray(action).ndim == 0
            else "|".join(f"{a:.6g}" for a in np.asarray(action).reshape(-1))
        )
        line = (
            f"{self.run_id},{env_id},{episode},{step},{action_repr},"
            f"{result.reward:.17g},{result.info['objective']:.17g},"
            f"{result.info['goal']:.17g},{int(result.info['sim_failed'])},"
            f"{wall_ms:.3f}\n"
        )
        with self._lock:
            self._fh.write(line)

    def close(self):
        self._fh.close()


class StepLoggingEnv:
    """Transparent wrapper that records every step to a StepLogWriter."""

    def __init__(self, env, writer: StepLogWriter, env_id: int):
        self._env = env
        self._writer = writer
        self.env_id = env_id
        self._episode = 0

    @property
    def action_space(self):
        return self._env.action_space

    @property
    def observation_dim(self):
        return self._env.observation_dim

    @property
    def goal(self):
        return self._env.goal

    def reset(self, seed=None):
        self._episode += 1
        return self._env.reset(seed)

    def step(self, action):
        result = self._env.step(action)
        self._writer.write(
            self.env_id, self._episode, result.info["step"], action, result
        )
        return result
