"""Synchronous vectorized environment stepping.

One agent, N independent environment instances: every vec_step advances all
environments exactly once (barrier semantics) and auto-resets any that
report done, returning the fresh episode's first observation in the batch
while preserving the terminal observation and episode totals in the info
record.  Workers are threads in the same process; each thread owns one
environment exclusively, and environments never share state, so per-env
trajectories are bitwise identical to solo runs with the same seed.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np


class VecEnvError(RuntimeError):
    pass


class VecEnv:
    def __init__(self, envs):
        if not envs:
            raise VecEnvError("need at least one environment")
        self.envs = list(envs)
        self.n_envs = len(self.envs)
        self._pool = (
            ThreadPoolExecutor(max_workers=self.n_envs) if self.n_envs > 1 else None
        )

    @staticmethod
    def derive_seeds(master_seed, n_envs):
        """Distinct, reproducible per-env seeds from one master seed."""
        ss = np.random.SeedSequence(master_seed)
        return [int(child.generate_state(1, np.uint64)[0]) for child in ss.spawn(n_envs)]

    @property
    def observation_dim(self):
        return self.envs[0].observation_dim

    @property
    def action_space(self):
        return self.envs[0].action_space

    def vec_reset(self):
        """Reset every env; row i of the batch comes from env i."""
        obs = [self._run(i, lambda e: e.reset()) for i in range(self.n_envs)]
        return np.stack(obs)

    def vec_step(self, actions):
        """Step all envs once and auto-reset finished episodes.

        Returns (observations, rewards, dones, infos); a done env's batch
        row holds the post-reset observation, and its info carries
        ``terminal_observation`` plus the episode totals.
        """
        if len(actions) != self.n_envs:
            raise VecEnvError(
                f"got {len(actions)} actions for {self.n_envs} environments"
            )

        def step_and_autoreset(env, action):
            result = env.step(action)
            obs = result.observation
            if result.done:
                result.info["terminal_observation"] = result.observation
                obs = env.reset()
            return obs, result.reward, result.done, result.info

        if self._pool is None:
            outs = [step_and_autoreset(self.envs[0], actions[0])]
        else:
            futures = [
                self._pool.submit(step_and_autoreset, env, action)
                for env, action in zip(self.envs, actions)
            ]
            outs = []
            for i, fut in enumerate(futures):
                try:
                    outs.append(fut.result())
                except Exception as exc:
                    raise VecEnvError(f"environment {i} failed: {exc}") from exc
        obs, rewards, dones, infos = zip(*outs)
        return (
            np.stack(obs),
            np.array(rewards),
            np.array(dones, dtype=bool),
            list(infos),
        )

    def _run(self, i, fn):
        try:
            return fn(self.envs[i])
        except Exception as exc:
            raise VecEnvError(f"environment {i} failed: {exc}") from exc

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
