"""Scripted demonstrator whose hidden memory is rendered as a brain scan.

The expert keeps two memory slots: a cue latch in {-1, 0, +1} and a step
counter. ``render_scan`` paints each slot as a vertical stripe on channel 0
and draws a counter-dependent texture on the remaining channels, so distinct
(cue, counter mod levels) pairs always give distinct scans.

The scan of step ``t`` shows the memory *before* the expert sees ``obs_t``.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import envs
from .errors import ConfigError
from .scans import ScanConfig

N_SLOTS = 2


@dataclass(frozen=True)
class ExpertState:
    cue: int = 0
    counter: int = 0

    @property
    def memory(self):
        return np.array([self.cue, self.counter], dtype=np.float64)


class ScriptedExpert:
    """Deterministic expert for one environment spec."""

    def __init__(self, spec):
        self.spec = spec
        if spec.kind == "gridworld":
            self._dist = _goal_distances(spec)

    def initial(self):
        return ExpertState()

    def tick(self, h, obs):
        cue = h.cue
        if self.spec.kind == "t_maze" and cue == 0 and obs[2] != 0:
            cue = 1 if obs[2] > 0 else -1
        return ExpertState(cue, h.counter + 1)

    def act(self, h, obs):
        if self.spec.kind == "t_maze":
            if obs[1] < 0.5:
                return envs.FORWARD
            cue = h.cue if h.cue != 0 else int(np.sign(obs[2]))
            return envs.RIGHT if cue > 0 else envs.LEFT
        cell = divmod(int(np.argmax(obs)), self.spec.width)
        best, best_d = 0, None
        for a in range(len(envs.GRID_MOVES)):
            d = self._dist[envs.grid_move(self.spec, cell, a)]
            if best_d is None or d < best_d:
                best, best_d = a, d
        return best


def _goal_distances(spec):
    goal = spec.goal_cell
    dist = {goal: 0}
    queue = deque([goal])
    while queue:
        cell = queue.popleft()
        for a in range(len(envs.GRID_MOVES)):
            nxt = envs.grid_move(spec, cell, a)
            if nxt not in dist:
                dist[nxt] = dist[cell] + 1
                queue.append(nxt)
    return dist


def cue_level(cue, levels):
    return {-1: 0, 0: levels // 2, 1: levels - 1}[int(cue)]


def stripe_bounds(width, n_slots=N_SLOTS):
    if n_slots > width:
        raise ConfigError(f"{n_slots} memory slots need at least {n_slots} scan columns, got {width}")
    edges = [j * width // n_slots for j in range(n_slots + 1)]
    return list(zip(edges[:-1], edges[1:]))


def render_scan(h, cfg=ScanConfig()):
    """Deterministic scan of the expert memory ``h``."""
    K = cfg.levels
    scan = np.zeros(cfg.shape, dtype=np.uint8)
    (c0, c1), (c2, c3) = stripe_bounds(cfg.width)
    scan[:, c0:c1, 0] = cue_level(h.cue, K)
    scan[:, c2:c3, 0] = h.counter % K
    cols = np.arange(cfg.width)
    if cfg.channels > 1:
        scan[:, :, 1] = (cols + h.counter) % K
    if cfg.channels > 2:
        scan[:, :, 2:] = ((cols + 3 * h.counter) % K)[None, :, None]
    return scan


@dataclass
class Record:
    obs: np.ndarray
    scan: np.ndarray
    action: int
    obs_next: np.ndarray
    scan_next: np.ndarray
    done: bool


@dataclass
class Dataset:
    """Demonstration transitions stored column-wise."""

    obs: np.ndarray
    scans: np.ndarray
    actions: np.ndarray
    obs_next: np.ndarray
    scans_next: np.ndarray
    done: np.ndarray
    scan_config: ScanConfig = field(default_factory=ScanConfig)
    env_spec: envs.EnvSpec = field(default_factory=envs.EnvSpec)
    seed: int = 0

    def __len__(self):
        return len(self.actions)

    def record(self, i):
        return Record(self.obs[i], self.scans[i], int(self.actions[i]),
                      self.obs_next[i], self.scans_next[i], bool(self.done[i]))

    @property
    def records(self):
        return [self.record(i) for i in range(len(self))]

    def episode_ids(self):
        """Episode index of every record, from the done markers."""
        ends = np.concatenate([[0], np.cumsum(self.done[:-1])]) if len(self) else np.zeros(0)
        return ends.astype(np.int64)

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.obs[idx], self.scans[idx], self.actions[idx], self.obs_next[idx],
                       self.scans_next[idx], self.done[idx], self.scan_config, self.env_spec, self.seed)

    def equals(self, other):
        arrays = ("obs", "scans", "actions", "obs_next", "scans_next", "done")
        return (all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
                and self.scan_config == other.scan_config and self.env_spec == other.env_spec
                and self.seed == other.seed)


def episode_seed(seed, episode):
    return [int(seed), int(episode)]


def run_expert_episode(spec, cfg, seed, expert=None):
    """One expert episode as a list of :class:`Record`."""
    expert = expert or ScriptedExpert(spec)
    state, obs = envs.env_reset(spec, seed)
    h = expert.initial()
    records = []
    done = state.done or (spec.kind == "gridworld" and state.position == spec.goal_cell)
    limit = 4 * (spec.horizon + 1)
    while not done and len(records) < limit:
        action = expert.act(h, obs)
        h_next = expert.tick(h, obs)
        state, obs_next, done, _ = envs.env_step(state, action)
        records.append(Record(obs, render_scan(h, cfg), action, obs_next, render_scan(h_next, cfg), done))
        h, obs = h_next, obs_next
    return records


def collect_dataset(spec, episodes, cfg=ScanConfig(), seed=0):
    """Run the expert for ``episodes`` episodes and record every transition."""
    if episodes < 1:
        raise ConfigError(f"episodes must be >= 1, got {episodes}")
    records = []
    expert = ScriptedExpert(spec)
    for i in range(episodes):
        records.extend(run_expert_episode(spec, cfg, episode_seed(seed, i), expert))
    return dataset_from_records(records, cfg, spec, seed)


def dataset_from_records(records, cfg, spec, seed=0):
    if not records:
        empty_scans = np.zeros((0,) + cfg.shape, dtype=np.uint8)
        empty_obs = np.zeros((0, spec.obs_dim))
        return Dataset(empty_obs, empty_scans, np.zeros(0, dtype=np.int64), empty_obs.copy(),
                       empty_scans.copy(), np.zeros(0, dtype=bool), cfg, spec, seed)
    return Dataset(
        obs=np.stack([r.obs for r in records]).astype(np.float64),
        scans=np.stack([r.scan for r in records]).astype(np.uint8),
        actions=np.array([r.action for r in records], dtype=np.int64),
        obs_next=np.stack([r.obs_next for r in records]).astype(np.float64),
        scans_next=np.stack([r.scan_next for r in records]).astype(np.uint8),
        done=np.array([r.done for r in records], dtype=bool),
        scan_config=cfg, env_spec=spec, seed=seed,
    )
