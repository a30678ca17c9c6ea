"""Analytical stand-in for the flow-ratio environment.

The objective is a smooth closed-form function of the 18 displacement DOFs:
mu = exp(sum_i w_i d_i), with mixed-magnitude weights so the reachable set
of ratios is dense under fixed increments.  Observation layout, action
spaces, rewards, goal sampling, and episode termination all match the
T-junction environment, which makes this a drop-in target for fast
training and throughput benchmarks (``sleep_ms`` emulates solver cost).
"""

import time

import numpy as np

from .environment import (
    ContinuousSpace,
    DiscreteSpace,
    EnvConfig,
    EnvConfigError,
    StepResult,
    reward_t_direct,
    reward_t_incremental,
)

N_DOFS = 18

# per-DOF sensitivities of log(mu); first half opens, second half closes
_MAGNITUDES = np.array([1.5, 0.9, 0.3])
WEIGHTS = np.concatenate(
    [_MAGNITUDES[np.arange(9) % 3], -_MAGNITUDES[np.arange(9) % 3]]
)

# displacement magnitude treated as a tangled deformation
D_FAIL = 2.0


class SurrogateEnv:
    """Closed-form flow-ratio environment; observation = [mu, mu*, dofs]."""

    def __init__(self, config: EnvConfig):
        if config.case != "surrogate":
            raise EnvConfigError(f"SurrogateEnv got case {config.case!r}")
        self.config = config
        self._rng = np.random.default_rng(config.seed)
        self._dofs = np.zeros(N_DOFS)
        self._goal = 1.0
        self._mu = 1.0
        self._steps = 0
        self._done = True
        self._ep_reward = 0.0

    @property
    def action_space(self):
        if self.config.strategy == "incremental":
            return DiscreteSpace(2 * N_DOFS, self.config.delta)
        return ContinuousSpace(N_DOFS, self.config.action_low, self.config.action_high)

    @property
    def observation_dim(self) -> int:
        return 2 + N_DOFS

    @property
    def goal(self) -> float:
        return self._goal

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        lo, hi = self.config.mu_star_range
        self._goal = float(self._rng.uniform(lo, hi))
        self._dofs = np.zeros(N_DOFS)
        self._mu = 1.0
        self._steps = 0
        self._done = False
        self._ep_reward = 0.0
        return self.build_observation()

    def step(self, action) -> StepResult:
        if self._done:
            raise RuntimeError("episode is done; call reset() first")
        self._steps += 1
        if self.config.sleep_ms > 0:
            time.sleep(self.config.sleep_ms / 1e3)

        cfg = self.config
        if cfg.strategy == "incremental":
            k = int(action)
            if not 0 <= k < 2 * N_DOFS:
                raise ValueError(f"discrete action {k} out of range")
            self._dofs[k // 2] += cfg.delta if k % 2 == 0 else -cfg.delta
        else:
            a = np.asarray(action, dtype=float)
            if a.shape != (N_DOFS,):
                raise ValueError(f"continuous action must have shape ({N_DOFS},)")
            self._dofs = np.clip(a, cfg.action_low, cfg.action_high)

        sim_failed = bool(np.any(np.abs(self._dofs) > D_FAIL))
        if sim_failed:
            reward = -10.0
            goal_reached = False
        else:
            mu_t = float(np.exp(WEIGHTS @ self._dofs))
            e_t = abs(mu_t - self._goal)
            goal_reached = e_t < cfg.eps_goal
            if cfg.strategy == "direct":
                reward = reward_t_direct(e_t, cfg.eps_goal, False)
            else:
                e_prev = abs(self._mu - self._goal)
                reward = reward_t_incremental(
                    mu_t, self._mu, e_t, e_prev, cfg.eps_goal, False
                )
            self._mu = mu_t

        done = sim_failed or goal_reached or self._steps >= cfg.max_steps
        self._done = done
        self._ep_reward += reward
        info = {
            "sim_failed": sim_failed,
            "goal_reached": goal_reached,
            "objective": self._mu if not sim_failed else np.nan,
            "goal": self._goal,
            "step": self._steps,
        }
        if done:
            info["episode_reward"] = self._ep_reward
            info["episode_length"] = self._steps
        return StepResult(self.build_observation(), reward, done, info)

    def build_observation(self) -> np.ndarray:
        return np.concatenate([[self._mu, self._goal], self._dofs])
