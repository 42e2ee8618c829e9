"""Closed-loop operation and the evaluation harness.

In a rollout the robot acts from ``(scan, obs)`` where the scan comes from
one of three sources:

``oracle``     the rendering of a shadow expert's true memory,
``generated``  the generator's own previous output fed back as conditioning,
``zeroed``     an all-zero scan (ablation).

The shadow expert follows the same observations as the robot and is used only
to score agreement and scan divergence. In generated mode nothing from it
reaches the control path: the initial scan is rendered from a fresh
:class:`ExpertState` rather than read from the shadow.
"""
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import envs
from .errors import ConfigError
from .expert import Dataset, ExpertState, ScriptedExpert, render_scan
from .generator import next_scan
from .policy import choose_action, policy_forward

SCAN_MODES = ("oracle", "generated", "zeroed")


@dataclass(frozen=True)
class RolloutConfig:
    scan_mode: str = "generated"
    max_steps: int = None
    seed: int = 0
    policy_mode: str = "greedy"
    generator_greedy: bool = True

    def __post_init__(self):
        if self.scan_mode not in SCAN_MODES:
            raise ConfigError(f"scan_mode must be one of {SCAN_MODES}, got {self.scan_mode!r}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.policy_mode not in ("greedy", "sample"):
            raise ConfigError(f"policy_mode must be 'greedy' or 'sample', got {self.policy_mode!r}")


@dataclass
class RolloutResult:
    observations: np.ndarray
    scans: np.ndarray
    oracle_scans: np.ndarray
    actions: np.ndarray
    expert_actions: np.ndarray
    final_observation: np.ndarray
    success: bool
    done: bool

    @property
    def steps(self):
        return len(self.actions)

    @property
    def step_agreement(self):
        return (self.actions == self.expert_actions).astype(np.float64)

    @property
    def agreement(self):
        return float(self.step_agreement.mean()) if self.steps else 1.0

    @property
    def step_divergence(self):
        cells = self.scans[0].size if self.steps else 1
        return (self.scans != self.oracle_scans).reshape(self.steps, -1).sum(axis=1) / cells

    @property
    def scan_divergence(self):
        return float(self.step_divergence.mean()) if self.steps else 0.0

    def to_bytes(self):
        """Canonical encoding, used to compare results for bit-identity."""
        buf = io.BytesIO()
        for a in (self.observations, self.scans, self.oracle_scans, self.actions,
                  self.expert_actions, self.final_observation):
            arr = np.ascontiguousarray(a)
            buf.write(str(arr.dtype).encode() + str(arr.shape).encode())
            buf.write(arr.tobytes())
        buf.write(bytes([self.success, self.done]))
        return buf.getvalue()

    def to_dataset(self, spec, scan_cfg, seed=0):
        """The trace in dataset form: (obs, scan used, action, next obs, next scan, done)."""
        n = self.steps
        obs_next = np.concatenate([self.observations[1:], self.final_observation[None]])[:n]
        scans_next = np.concatenate([self.scans[1:], self.scans[-1:]])[:n] if n else self.scans
        done = np.zeros(n, dtype=bool)
        if n:
            done[-1] = True
        return Dataset(self.observations, self.scans, self.actions, obs_next, scans_next, done,
                       scan_cfg, spec, seed)


def _check_models(gen, pol, spec, mode):
    cfg = pol.config
    if cfg.obs_dim != spec.obs_dim or cfg.n_actions != spec.n_actions:
        raise ConfigError(f"policy expects obs_dim={cfg.obs_dim}, n_actions={cfg.n_actions}; "
                          f"environment has {spec.obs_dim}, {spec.n_actions}")
    if mode == "generated":
        if gen is None:
            raise ConfigError("generated scan mode needs a generator")
        if gen.scan != cfg.scan or gen.config.obs_dim != spec.obs_dim:
            raise ConfigError(f"generator scan {gen.scan} / obs_dim {gen.config.obs_dim} do not match "
                              f"policy scan {cfg.scan} / obs_dim {spec.obs_dim}")


def rollout(gen, pol, spec, cfg=None, expert=None):
    """Run one closed-loop episode."""
    cfg = cfg or RolloutConfig()
    _check_models(gen, pol, spec, cfg.scan_mode)
    scan_cfg = pol.config.scan
    shadow = expert if expert is not None else ScriptedExpert(spec)
    max_steps = cfg.max_steps or 4 * (spec.horizon + 1)
    policy_rng = np.random.default_rng([cfg.seed, 1])
    gen_rng = np.random.default_rng([cfg.seed, 2])

    state, obs = envs.env_reset(spec, [cfg.seed, 0])
    h = shadow.initial()
    zero = np.zeros(scan_cfg.shape, dtype=np.uint8)
    prev_scan = prev_obs = None
    observations, scans, oracle, actions, expert_actions = [], [], [], [], []
    done, reward = False, 0.0
    for t in range(max_steps):
        truth = render_scan(h, scan_cfg)
        if cfg.scan_mode == "oracle":
            scan = truth
        elif cfg.scan_mode == "zeroed":
            scan = zero
        elif t == 0:
            scan = render_scan(ExpertState(), scan_cfg)
        else:
            scan = next_scan(gen, prev_scan, prev_obs, gen_rng, cfg.generator_greedy)
        action = choose_action(policy_forward(pol, scan, obs), cfg.policy_mode, policy_rng)
        observations.append(obs)
        scans.append(scan)
        oracle.append(truth)
        actions.append(action)
        expert_actions.append(shadow.act(h, obs))
        h = shadow.tick(h, obs)
        state, obs_next, done, reward = envs.env_step(state, action)
        prev_scan, prev_obs, obs = scan, obs, obs_next
        if done:
            break
    success = bool(done and reward > 0)
    return RolloutResult(
        observations=np.array(observations), scans=np.array(scans, dtype=np.uint8),
        oracle_scans=np.array(oracle, dtype=np.uint8), actions=np.array(actions, dtype=np.int64),
        expert_actions=np.array(expert_actions, dtype=np.int64), final_observation=obs,
        success=success, done=bool(done),
    )


# ---------------------------------------------------------------------------
# evaluation


def binomial_interval(successes, n, z=1.96):
    """Normal-approximation interval for a success rate, clipped to [0, 1]."""
    p = successes / n
    half = z * np.sqrt(p * (1.0 - p) / n)
    return max(0.0, p - half), min(1.0, p + half)


def bootstrap_interval(outcomes, rng, resamples=10_000, level=0.95):
    """Percentile bootstrap interval of the mean of 0/1 ``outcomes``."""
    outcomes = np.asarray(outcomes, dtype=np.float64)
    n = len(outcomes)
    means = rng.binomial(n, outcomes.mean(), size=resamples) / n
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


@dataclass
class ModeMetrics:
    mode: str
    episodes: int
    success_rate: float
    success_low: float
    success_high: float
    mean_agreement: float
    mean_scan_divergence: float
    outcomes: np.ndarray = field(repr=False, default=None)

    @property
    def standard_error(self):
        p = self.success_rate
        return float(np.sqrt(p * (1.0 - p) / self.episodes))


CSV_FIELDS = ("mode", "episodes", "success_rate", "success_low", "success_high",
              "mean_agreement", "mean_scan_divergence")


def episode_config(seed, i, mode, **kw):
    return RolloutConfig(scan_mode=mode, seed=int(np.random.SeedSequence([seed, i]).generate_state(1)[0]), **kw)


def eval_suite(gen, pol, spec, n_episodes, seed=0, modes=SCAN_MODES, **rollout_kw):
    """Success, agreement and scan divergence per scan mode on a shared set of episode seeds."""
    if n_episodes < 1:
        raise ConfigError(f"n_episodes must be >= 1, got {n_episodes}")
    rows = []
    for mode in modes:
        results = [rollout(gen, pol, spec, episode_config(seed, i, mode, **rollout_kw)) for i in range(n_episodes)]
        outcomes = np.array([r.success for r in results], dtype=np.float64)
        lo, hi = binomial_interval(outcomes.sum(), n_episodes)
        rows.append(ModeMetrics(
            mode, n_episodes, float(outcomes.mean()), lo, hi,
            float(np.mean([r.agreement for r in results])),
            float(np.mean([r.scan_divergence for r in results])), outcomes,
        ))
    return rows


def write_metrics_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in rows:
            w.writerow([getattr(r, k) if isinstance(getattr(r, k), str) else repr(getattr(r, k)) for k in CSV_FIELDS])
