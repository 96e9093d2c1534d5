"""Desk-scale environments: a 2x2 tabular MDP and two control toys.

Environments are cheap stateful objects: ``reset(rng)`` begins an
episode and ``step(state, action, rng)`` advances it. Dynamics are pure
functions of (state, action, rng draw); the only internal state is the
episode step counter used for the horizon cutoff. Actions are clamped
into bounds; NaN actions are rejected.

The tabular MDP exposes a continuous interface so the same actors work
everywhere: observations are one-hot state vectors and the scalar
action in [-1, 1] selects the discrete action by sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    action_bound: float
    horizon: int
    gamma: float
    reward_min: float
    reward_max: float

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")


def _check_action(a: np.ndarray, bound: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if np.isnan(a).any():
        raise ValueError("NaN action")
    return np.clip(a, -bound, bound)


class TabularMdp:
    """Two-state two-action MDP with row-stochastic transition tables."""

    n_states = 2
    n_actions = 2

    def __init__(self, transitions: np.ndarray, rewards: np.ndarray,
                 horizon: int = 10, gamma: float = 0.9):
        P = np.asarray(transitions, dtype=np.float64)
        R = np.asarray(rewards, dtype=np.float64)
        if P.shape != (2, 2, 2) or R.shape != (2, 2):
            raise ValueError("tables must be (2,2,2) transitions and (2,2) rewards")
        if not np.allclose(P.sum(axis=2), 1.0, atol=1e-12) or (P < 0).any():
            raise ValueError("transition rows must be stochastic")
        if not np.isfinite(R).all():
            raise ValueError("rewards must be finite")
        self.P = P
        self.R = R
        self.spec = EnvSpec(state_dim=2, action_dim=1, action_bound=1.0,
                            horizon=horizon, gamma=gamma,
                            reward_min=float(R.min()), reward_max=float(R.max()))
        self._t = 0
        self._s = 0

    @classmethod
    def random_instance(cls, seed: int, horizon: int = 10, gamma: float = 0.9) -> "TabularMdp":
        """Seeded instance: uniform [0,1] rewards, Dirichlet transition rows."""
        rng = np.random.default_rng(seed)
        R = rng.uniform(0.0, 1.0, size=(2, 2))
        P = rng.dirichlet(np.ones(2), size=(2, 2))
        return cls(P, R, horizon=horizon, gamma=gamma)

    @staticmethod
    def action_bin(a: np.ndarray) -> int:
        return 1 if float(np.asarray(a).ravel()[0]) > 0.0 else 0

    def _encode(self, s: int) -> np.ndarray:
        v = np.zeros(2, dtype=np.float64)
        v[s] = 1.0
        return v

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._t = 0
        self._s = 0  # delta initial distribution at state 0
        return self._encode(self._s)

    def step(self, state: np.ndarray, action: np.ndarray, rng: np.random.Generator):
        a = _check_action(action, self.spec.action_bound)
        s = int(np.argmax(state))
        k = self.action_bin(a)
        r = float(self.R[s, k])
        s2 = int(rng.choice(2, p=self.P[s, k]))
        self._t += 1
        self._s = s2
        done = self._t >= self.spec.horizon
        return self._encode(s2), r, done


class PointMass:
    """2-D double integrator pushed toward the origin by a force input.

    reward = -||pos - goal|| - 0.01 * ||force||^2, dt = 0.05; the state
    box is position in [-2, 2]^2 and velocity in [-2, 2]^2.
    """

    DT = 0.05
    POS_BOX = 2.0
    VEL_BOX = 2.0
    INIT_BOX = 1.0

    def __init__(self, horizon: int = 100, gamma: float = 0.99):
        self.goal = np.zeros(2)
        # worst case: opposite corner of the position box plus full-force cost
        self.spec = EnvSpec(state_dim=4, action_dim=2, action_bound=1.0,
                            horizon=horizon, gamma=gamma,
                            reward_min=-(2.0 * np.sqrt(2.0) + 0.01 * 2.0),
                            reward_max=0.0)
        self._t = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._t = 0
        pos = rng.uniform(-self.INIT_BOX, self.INIT_BOX, size=2)
        return np.concatenate([pos, np.zeros(2)])

    def step(self, state: np.ndarray, action: np.ndarray, rng: np.random.Generator):
        f = _check_action(action, self.spec.action_bound)
        pos, vel = state[:2], state[2:]
        vel = np.clip(vel + f * self.DT, -self.VEL_BOX, self.VEL_BOX)
        pos = np.clip(pos + vel * self.DT, -self.POS_BOX, self.POS_BOX)
        dist = float(np.linalg.norm(pos - self.goal))
        r = -dist - 0.01 * float(f @ f)
        self._t += 1
        done = self._t >= self.spec.horizon
        return np.concatenate([pos, vel]), r, done


class Pendulum:
    """Torque-limited swing-up; angle zero is upright and wraps to [-pi, pi].

    reward = -(angle^2 + 0.1 * ang_vel^2 + 0.001 * torque^2).
    """

    DT = 0.05
    G = 10.0
    M = 1.0
    L = 1.0
    MAX_SPEED = 8.0

    def __init__(self, horizon: int = 200, gamma: float = 0.99):
        self.spec = EnvSpec(state_dim=2, action_dim=1, action_bound=2.0,
                            horizon=horizon, gamma=gamma,
                            reward_min=-(np.pi**2 + 0.1 * self.MAX_SPEED**2 + 0.001 * 4.0**2),
                            reward_max=0.0)
        self._t = 0

    @staticmethod
    def _wrap(theta: float) -> float:
        return float((theta + np.pi) % (2.0 * np.pi) - np.pi)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._t = 0
        return np.array([rng.uniform(-np.pi, np.pi), rng.uniform(-1.0, 1.0)])

    def step(self, state: np.ndarray, action: np.ndarray, rng: np.random.Generator):
        tau = float(_check_action(action, self.spec.action_bound).ravel()[0])
        th, thdot = float(state[0]), float(state[1])
        r = -(th * th + 0.1 * thdot * thdot + 0.001 * tau * tau)
        thdot = thdot + (3.0 * self.G / (2.0 * self.L) * np.sin(th)
                         + 3.0 / (self.M * self.L**2) * tau) * self.DT
        thdot = float(np.clip(thdot, -self.MAX_SPEED, self.MAX_SPEED))
        th = self._wrap(th + thdot * self.DT)
        self._t += 1
        done = self._t >= self.spec.horizon
        return np.array([th, thdot]), r, done


ENV_NAMES = ("tabular", "pointmass", "pendulum")


def make_env(name: str, env_seed: int = 0, horizon: int | None = None):
    """Environment registry used by config files and the CLI."""
    if name == "tabular":
        return TabularMdp.random_instance(env_seed, horizon=horizon or 10)
    if name == "pointmass":
        return PointMass(horizon=horizon or 100)
    if name == "pendulum":
        return Pendulum(horizon=horizon or 200)
    raise ValueError(f"unknown environment {name!r}; known: {ENV_NAMES}")


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def value_iteration(mdp: TabularMdp, gamma: float, horizon: int) -> np.ndarray:
    """Finite-horizon optimal values V_h(s) for h steps to go; returns V_horizon."""
    V = np.zeros(mdp.n_states)
    for _ in range(horizon):
        Q = mdp.R + gamma * (mdp.P @ V)
        V = Q.max(axis=1)
    return V


def tabular_optimal_return(mdp: TabularMdp, gamma: float | None = None,
                           horizon: int | None = None) -> float:
    """Optimal expected discounted return from the initial state (state 0)."""
    g = mdp.spec.gamma if gamma is None else gamma
    h = mdp.spec.horizon if horizon is None else horizon
    return float(value_iteration(mdp, g, h)[0])


def tabular_greedy_policy(mdp: TabularMdp, gamma: float, iters: int = 500) -> np.ndarray:
    """Stationary greedy policy from converged value iteration."""
    V = np.zeros(mdp.n_states)
    for _ in range(iters):
        Q = mdp.R + gamma * (mdp.P @ V)
        V = Q.max(axis=1)
    return (mdp.R + gamma * (mdp.P @ V)).argmax(axis=1)
