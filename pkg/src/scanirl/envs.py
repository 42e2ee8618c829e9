"""Memory T-maze, tabular gridworld and exact solvers for tabular MDPs.

Environment dynamics are deterministic; randomness only enters through the
episode's initial state (the T-maze cue). States are immutable, so
``env_step`` returns a new state instead of mutating the old one.
"""
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ConfigError, UnsupportedError, UsageError

DEFAULT_DISCOUNT = 0.95

# T-maze actions
FORWARD, LEFT, RIGHT = 0, 1, 2
TMAZE_ACTIONS = 3
# gridworld actions, as (drow, dcol)
UP, RIGHT_MOVE, DOWN, LEFT_MOVE = 0, 1, 2, 3
GRID_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "t_maze"
    corridor_length: int = 5
    cue_prob: float = 0.5
    height: int = 4
    width: int = 4
    goal: tuple = None
    start: tuple = (0, 0)
    discount: float = DEFAULT_DISCOUNT
    seed: int = 0

    def __post_init__(self):
        if self.goal is not None:
            object.__setattr__(self, "goal", tuple(int(v) for v in self.goal))
        object.__setattr__(self, "start", tuple(int(v) for v in self.start))
        self.validate()

    def validate(self):
        if self.kind not in ("t_maze", "gridworld"):
            raise ConfigError(f"unknown environment kind {self.kind!r}")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError(f"discount must lie in [0, 1), got {self.discount}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.kind == "t_maze":
            if self.corridor_length < 1:
                raise ConfigError(f"corridor_length must be >= 1, got {self.corridor_length}")
            if not 0.0 <= self.cue_prob <= 1.0:
                raise ConfigError(f"cue_prob must lie in [0, 1], got {self.cue_prob}")
        else:
            if self.height < 2 or self.width < 2:
                raise ConfigError(f"grid dimensions must be >= 2, got {self.height}x{self.width}")
            for name, cell in (("goal", self.goal_cell), ("start", self.start)):
                if len(cell) != 2 or not (0 <= cell[0] < self.height and 0 <= cell[1] < self.width):
                    raise ConfigError(f"{name} {cell} lies outside the {self.height}x{self.width} grid")

    @property
    def goal_cell(self):
        return self.goal if self.goal is not None else (self.height - 1, self.width - 1)

    @property
    def n_actions(self):
        return TMAZE_ACTIONS if self.kind == "t_maze" else len(GRID_MOVES)

    @property
    def obs_dim(self):
        return 3 if self.kind == "t_maze" else self.height * self.width

    @property
    def horizon(self):
        """Length of an episode run by the scripted expert."""
        if self.kind == "t_maze":
            return self.corridor_length + 1
        return abs(self.goal_cell[0] - self.start[0]) + abs(self.goal_cell[1] - self.start[1])

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["goal"] = list(self.goal) if self.goal is not None else None
        d["start"] = list(self.start)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown environment keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class EnvState:
    spec: EnvSpec
    t: int
    position: tuple
    cue: int = 0
    done: bool = False


@dataclass(frozen=True)
class MDPModel:
    transition: np.ndarray
    initial_dist: np.ndarray
    reward: np.ndarray
    discount: float = DEFAULT_DISCOUNT
    goal_states: tuple = field(default=())

    def __post_init__(self):
        P = self.transition
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ConfigError(f"transition must have shape (S, A, S), got {P.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise ConfigError("transition rows must be probability vectors")
        if self.initial_dist.shape != (P.shape[0],) or abs(self.initial_dist.sum() - 1.0) > 1e-12:
            raise ConfigError("initial_dist must be a probability vector over states")
        if self.reward.shape != (P.shape[0],):
            raise ConfigError(f"reward must have shape ({P.shape[0]},), got {self.reward.shape}")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError(f"discount must lie in [0, 1), got {self.discount}")

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    def with_reward(self, reward):
        return MDPModel(self.transition, self.initial_dist, np.asarray(reward, dtype=float),
                        self.discount, self.goal_states)


# ---------------------------------------------------------------------------
# episodes


def _tmaze_obs(state):
    spec = state.spec
    pos = state.position[0]
    cue = float(state.cue) if state.t == 0 else 0.0
    return np.array([pos / spec.corridor_length, float(pos == spec.corridor_length), cue])


def _grid_obs(state):
    spec = state.spec
    obs = np.zeros(spec.height * spec.width)
    r, c = state.position
    obs[r * spec.width + c] = 1.0
    return obs


def observe(state):
    return _tmaze_obs(state) if state.spec.kind == "t_maze" else _grid_obs(state)


def env_reset(spec, seed=None):
    """Initial state drawn from the start distribution, with its observation.

    The T-maze cue is +1 (right) with probability ``spec.cue_prob``, else -1.
    """
    spec.validate()
    seed = spec.seed if seed is None else seed
    if spec.kind == "t_maze":
        rng = np.random.default_rng(seed)
        cue = 1 if rng.random() < spec.cue_prob else -1
        state = EnvState(spec, 0, (0,), cue)
    else:
        state = EnvState(spec, 0, spec.start)
    return state, observe(state)


def env_step(state, action):
    """Apply ``action``; returns ``(state, observation, done, reward)``."""
    if state.done:
        raise UsageError("env_step called on a finished episode; call env_reset first")
    spec = state.spec
    action = int(action)
    if not 0 <= action < spec.n_actions:
        raise UsageError(f"action {action} outside [0, {spec.n_actions})")
    if spec.kind == "t_maze":
        pos = state.position[0]
        done, reward = False, 0.0
        if pos < spec.corridor_length:
            if action == FORWARD:
                pos += 1
        elif action in (LEFT, RIGHT):
            done = True
            chosen = 1 if action == RIGHT else -1
            reward = 1.0 if chosen == state.cue else 0.0
        new = EnvState(spec, state.t + 1, (pos,), state.cue, done)
    else:
        r, c = grid_move(spec, state.position, action)
        done = (r, c) == spec.goal_cell
        reward = 1.0 if done else 0.0
        new = EnvState(spec, state.t + 1, (r, c), 0, done)
    return new, observe(new), done, reward


def grid_move(spec, cell, action):
    """Destination of a move; moves into the boundary leave the cell unchanged."""
    dr, dc = GRID_MOVES[action]
    r, c = cell[0] + dr, cell[1] + dc
    if 0 <= r < spec.height and 0 <= c < spec.width:
        return r, c
    return tuple(cell)


def grid_state_index(spec, cell):
    return cell[0] * spec.width + cell[1]


# ---------------------------------------------------------------------------
# tabular MDPs


def tabular_build(spec):
    """Explicit (P, D, R) for a gridworld; the goal cell is absorbing."""
    if spec.kind != "gridworld":
        raise UnsupportedError(f"{spec.kind} is partially observable and has no tabular model")
    n = spec.height * spec.width
    P = np.zeros((n, len(GRID_MOVES), n))
    goal = grid_state_index(spec, spec.goal_cell)
    for r, c in product(range(spec.height), range(spec.width)):
        s = grid_state_index(spec, (r, c))
        for a in range(len(GRID_MOVES)):
            if s == goal:
                P[s, a, s] = 1.0
            else:
                P[s, a, grid_state_index(spec, grid_move(spec, (r, c), a))] = 1.0
    D = np.zeros(n)
    D[grid_state_index(spec, spec.start)] = 1.0
    R = np.zeros(n)
    R[goal] = 1.0
    return MDPModel(P, D, R, spec.discount, (goal,))


def q_values(mdp, values):
    return mdp.reward[:, None] + mdp.discount * mdp.transition @ values


def greedy_policy(q, tie_tol=1e-10):
    """Argmax per row; actions within ``tie_tol`` of the best tie to the lowest id."""
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - tie_tol, axis=1)


def value_sweeps(mdp, values=None):
    """Yield successive Bellman-optimality sweeps, starting from ``values``.

    The default start is the lower bound ``min(R) / (1 - discount)``.
    """
    if values is None:
        values = np.full(mdp.n_states, mdp.reward.min() / (1.0 - mdp.discount))
    while True:
        values = q_values(mdp, values).max(axis=1)
        yield values


def value_iteration(mdp, tol=1e-10, max_sweeps=100_000):
    """Optimal values within ``tol`` (sup norm) and the greedy policy."""
    if tol <= 0:
        raise ConfigError(f"tol must be positive, got {tol}")
    g = mdp.discount
    # stopping on ||V_{k+1} - V_k|| < tol (1-g)/g puts V_{k+1} within tol of V*
    threshold = tol * (1.0 - g) / g if g > 0 else np.inf
    prev = np.full(mdp.n_states, mdp.reward.min() / (1.0 - g))
    for _, values in zip(range(max_sweeps), value_sweeps(mdp, prev)):
        if np.max(np.abs(values - prev)) <= threshold:
            break
        prev = values
    return values, greedy_policy(q_values(mdp, values))


def policy_matrix(mdp, policy):
    """Row-stochastic (S, A) action probabilities from a deterministic or stochastic policy."""
    policy = np.asarray(policy)
    if policy.ndim == 1:
        pi = np.zeros((mdp.n_states, mdp.n_actions))
        pi[np.arange(mdp.n_states), policy.astype(int)] = 1.0
        return pi
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ConfigError(f"policy shape {policy.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})")
    return policy.astype(float)


def policy_transition(mdp, policy):
    pi = policy_matrix(mdp, policy)
    return np.einsum("sa,sat->st", pi, mdp.transition)


def policy_evaluation(mdp, policy, reward=None):
    """Exact values of ``policy`` by solving ``(I - gamma P_pi) V = R``."""
    reward = mdp.reward if reward is None else reward
    Ppi = policy_transition(mdp, policy)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * Ppi, reward)
