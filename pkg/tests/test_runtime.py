import csv

import numpy as np
import pytest

from scanirl import runtime as rt
from scanirl.envs import EnvSpec
from scanirl.errors import ConfigError
from scanirl.expert import ExpertState, ScriptedExpert
from scanirl.generator import GeneratorConfig, GeneratorModel
from scanirl.oracles import randomize
from scanirl.policy import PolicyConfig, PolicyParams
from scanirl.scans import ScanConfig


class ScrambledExpert(ScriptedExpert):
    """A shadow expert whose hidden state is garbage."""

    def __init__(self, spec, seed):
        super().__init__(spec)
        self.rng = np.random.default_rng(seed)

    def initial(self):
        return ExpertState(int(self.rng.choice([-1, 1])), int(self.rng.integers(0, 50)))

    def tick(self, h, obs):
        return ExpertState(int(self.rng.choice([-1, 0, 1])), int(self.rng.integers(0, 50)))


@pytest.fixture(scope="module")
def noisy_generator():
    gen = GeneratorModel(GeneratorConfig(), seed=0)
    randomize(gen.params, np.random.default_rng(0), 0.3)
    return gen


def test_oracle_mode_reproduces_expert(tmaze_policy):
    for i in range(100):
        r = rt.rollout(None, tmaze_policy.policy, tmaze_policy.spec, rt.episode_config(99, i, "oracle"))
        assert r.agreement == 1.0 and r.success and r.scan_divergence == 0.0


def test_zeroed_mode_is_chance(tmaze_policy):
    rows = rt.eval_suite(None, tmaze_policy.policy, tmaze_policy.spec, 1000, seed=5, modes=("zeroed",))
    assert abs(rows[0].success_rate - 0.5) <= 3 * np.sqrt(0.25 / 1000)


def test_same_seed_same_bytes(tmaze_policy, noisy_generator):
    for mode in rt.SCAN_MODES:
        cfg = rt.RolloutConfig(mode, seed=17, policy_mode="sample", generator_greedy=False)
        a = rt.rollout(noisy_generator, tmaze_policy.policy, tmaze_policy.spec, cfg)
        b = rt.rollout(noisy_generator, tmaze_policy.policy, tmaze_policy.spec, cfg)
        assert a.to_bytes() == b.to_bytes()


@pytest.mark.parametrize("mode", ["generated", "zeroed"])
def test_shadow_expert_does_not_leak(tmaze_policy, noisy_generator, mode):
    pol, spec = tmaze_policy.policy, tmaze_policy.spec
    for seed in range(10):
        cfg = rt.RolloutConfig(mode, seed=seed, policy_mode="sample", generator_greedy=False)
        clean = rt.rollout(noisy_generator, pol, spec, cfg)
        dirty = rt.rollout(noisy_generator, pol, spec, cfg, expert=ScrambledExpert(spec, seed))
        assert np.array_equal(clean.actions, dirty.actions)
        assert np.array_equal(clean.scans, dirty.scans)


def test_scrambled_expert_changes_oracle_mode(tmaze_policy):
    # sanity check that the corruption above is strong enough to matter
    pol, spec = tmaze_policy.policy, tmaze_policy.spec
    changed = 0
    for seed in range(10):
        cfg = rt.RolloutConfig("oracle", seed=seed)
        clean = rt.rollout(None, pol, spec, cfg)
        dirty = rt.rollout(None, pol, spec, cfg, expert=ScrambledExpert(spec, seed))
        changed += not np.array_equal(clean.scans, dirty.scans)
    assert changed == 10


def test_normal_interval_matches_bootstrap():
    rng = np.random.default_rng(0)
    for p in (0.1, 0.5, 0.93):
        outcomes = rng.random(1000) < p
        lo, hi = rt.binomial_interval(outcomes.sum(), 1000)
        means = np.array([rng.choice(outcomes, 1000).mean() for _ in range(5000)])
        blo, bhi = np.quantile(means, [0.025, 0.975])
        assert abs(lo - blo) < 0.02 and abs(hi - bhi) < 0.02
        qlo, qhi = rt.bootstrap_interval(outcomes, rng)
        assert abs(lo - qlo) < 0.02 and abs(hi - qhi) < 0.02


def test_mismatched_models_rejected(tmaze_policy):
    pol = tmaze_policy.policy
    small = GeneratorModel(GeneratorConfig(ScanConfig(4, 4, 3, 8)))
    with pytest.raises(ConfigError):
        rt.rollout(small, pol, tmaze_policy.spec, rt.RolloutConfig("generated"))
    with pytest.raises(ConfigError):
        rt.rollout(None, pol, tmaze_policy.spec, rt.RolloutConfig("generated"))
    with pytest.raises(ConfigError):
        rt.rollout(None, pol, EnvSpec(kind="gridworld"), rt.RolloutConfig("oracle"))
    with pytest.raises(ConfigError):
        rt.RolloutConfig("dreamed")
    with pytest.raises(ConfigError):
        rt.RolloutConfig(max_steps=0)


def test_max_steps_caps_episode():
    pol = PolicyParams(PolicyConfig(ScanConfig(), 3, 3), seed=0)
    pol.params.set("b2", np.array([0.0, 1000.0, 0.0]))  # always turn left in the corridor
    r = rt.rollout(None, pol, EnvSpec(corridor_length=5), rt.RolloutConfig("zeroed", max_steps=7))
    assert r.steps == 7 and not r.done and not r.success


def test_metrics_csv(tmp_path, tmaze_policy):
    rows = rt.eval_suite(None, tmaze_policy.policy, tmaze_policy.spec, 5, modes=("oracle", "zeroed"))
    path = tmp_path / "metrics.csv"
    rt.write_metrics_csv(rows, path)
    table = list(csv.DictReader(open(path)))
    assert [r["mode"] for r in table] == ["oracle", "zeroed"]
    assert float(table[0]["mean_scan_divergence"]) == 0.0


def test_trace_converts_to_dataset(tmaze_policy):
    r = rt.rollout(None, tmaze_policy.policy, tmaze_policy.spec, rt.RolloutConfig("oracle", seed=3))
    ds = r.to_dataset(tmaze_policy.spec, ScanConfig())
    assert len(ds) == r.steps == 6
    assert ds.done[-1] and not ds.done[:-1].any()
