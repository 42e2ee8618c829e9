"""Independent checks used by ``selftest`` and the acceptance suite.

Each check returns a :class:`Check`; none of them uses the code path it
verifies to produce its expected value.
"""
import itertools
from dataclasses import dataclass

import numpy as np

from . import envs
from . import generator as gen
from . import numerics as nx
from .numerics import ParamStore
from .policy import PolicyConfig, PolicyParams, cross_entropy
from .scans import ScanConfig


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (threshold {self.threshold:g}) {self.detail}".rstrip()


def all_scans(cfg):
    """Every scan of a small config, in lexicographic token order."""
    for levels in itertools.product(range(cfg.levels), repeat=cfg.n_tokens):
        yield np.array(levels, dtype=np.uint8).reshape(cfg.shape)


def randomize(params, rng, scale=1.0):
    for name, p in params.items():
        params.set(name, rng.normal(0.0, scale, p.shape))


def generator_total_probability(model, ctx):
    return sum(np.exp(gen.log_likelihood(model, s, ctx)) for s in all_scans(model.scan))


def check_normalization(seeds=(0, 1, 2), tol=1e-9):
    cfg = gen.GeneratorConfig(ScanConfig(2, 2, 1, 2), obs_dim=3, embed=4, hidden=6, context=5, encoder_hidden=4)
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        model = gen.GeneratorModel(cfg, seed=seed)
        randomize(model.params, rng)
        ctx = gen.context_encode(model, rng.integers(0, 2, cfg.scan.shape).astype(np.uint8), rng.normal(size=3))
        worst = max(worst, abs(generator_total_probability(model, ctx) - 1.0))
    return Check("generator normalization (2x2x1, K=2, 16 scans)", worst < tol, worst, tol)


def check_uniform_likelihood(tol=1e-9, n_scans=5):
    cfg = gen.GeneratorConfig(ScanConfig(8, 8, 3, 8), obs_dim=3)
    model = gen.GeneratorModel(cfg, seed=0)
    rng = np.random.default_rng(0)
    expected = 192 * np.log(1.0 / 8)
    worst = 0.0
    for _ in range(n_scans):
        scan = rng.integers(0, 8, cfg.scan.shape).astype(np.uint8)
        ctx = gen.context_encode(model, scan, rng.normal(size=3))
        worst = max(worst, abs(gen.log_likelihood(model, rng.integers(0, 8, cfg.scan.shape).astype(np.uint8), ctx) - expected))
    return Check("uniform-start likelihood = 192 ln(1/8)", worst < tol, worst, tol)


# ---------------------------------------------------------------------------
# gradients


def policy_gradient_error(seed=0, max_per_param=150):
    rng = np.random.default_rng(seed)
    cfg = PolicyConfig(ScanConfig(), obs_dim=3, n_actions=3)
    pol = PolicyParams(cfg, seed=seed)
    randomize(pol.params, rng, 0.2)
    scans = rng.integers(0, 8, (6,) + cfg.scan.shape).astype(np.uint8)
    obs = rng.normal(size=(6, 3))
    actions = rng.integers(0, 3, 6)
    return nx.finite_diff_check(lambda p: cross_entropy(pol, scans, obs, actions), pol.params,
                                max_per_param=max_per_param, seed=seed)


def lstm_cell_gradient_error(seed=0, batch=3, hidden=5, steps=3):
    rng = np.random.default_rng(seed)
    p = ParamStore()
    p.add("wh", rng.normal(0, 0.5, (hidden, 4 * hidden)))
    p.add("h0", rng.normal(0, 0.5, (batch, hidden)))
    p.add("c0", rng.normal(0, 0.5, (batch, hidden)))
    for t in range(steps):
        p.add(f"x{t}", rng.normal(0, 1.0, (batch, 4 * hidden)))
    weights = rng.normal(size=(steps, 2, batch, hidden))

    def f(params):
        h, c = params["h0"], params["c0"]
        total = nx.Tensor(0.0)
        for t in range(steps):
            h, c = gen.lstm_cell(params[f"x{t}"], h, c, params["wh"], hidden)
            total = total + nx.tensor_sum(h * weights[t, 0]) + nx.tensor_sum(c * weights[t, 1])
        return total

    return nx.finite_diff_check(f, p, seed=seed)


def encoder_gradient_error(seed=0):
    rng = np.random.default_rng(seed)
    cfg = gen.GeneratorConfig(ScanConfig(3, 3, 2, 4), obs_dim=3, context=5, encoder_hidden=6)
    model = gen.GeneratorModel(cfg, seed=seed)
    scans = rng.integers(0, 4, (4,) + cfg.scan.shape).astype(np.uint8)
    obs = rng.normal(size=(4, 3))
    weights = rng.normal(size=(4, cfg.context))
    sub = ParamStore()
    for name in ("enc_w1", "enc_b1", "enc_w2", "enc_b2"):
        sub.add(name, rng.normal(0, 0.5, model.params[name].shape))
    model.params = sub
    return nx.finite_diff_check(
        lambda p: nx.tensor_sum(gen.encode_context(model, scans, obs) * weights), sub, seed=seed)


def generator_gradient_error(seed=0):
    rng = np.random.default_rng(seed)
    cfg = gen.GeneratorConfig(ScanConfig(2, 2, 2, 3), obs_dim=3, embed=3, hidden=4, context=3, encoder_hidden=4)
    model = gen.GeneratorModel(cfg, seed=seed)
    randomize(model.params, rng, 0.5)
    prev = rng.integers(0, 3, (3,) + cfg.scan.shape).astype(np.uint8)
    nxt = rng.integers(0, 3, (3,) + cfg.scan.shape).astype(np.uint8)
    obs = rng.normal(size=(3, 3))
    return nx.finite_diff_check(lambda p: gen.sequence_nll(model, prev, obs, nxt), model.params, seed=seed)


def check_gradients(tol=1e-4):
    checks = []
    for name, fn in (("policy network", policy_gradient_error), ("LSTM cell", lstm_cell_gradient_error),
                     ("context encoder", encoder_gradient_error), ("full generator NLL", generator_gradient_error)):
        err = fn()
        checks.append(Check(f"gradient vs central differences: {name}", err < tol, err, tol))
    return checks


# ---------------------------------------------------------------------------
# MDP oracles


def brute_force_optimal_values(mdp, chunk=4096):
    """Elementwise best values over every deterministic policy (exhaustive)."""
    S, A = mdp.n_states, mdp.n_actions
    best = np.full(S, -np.inf)
    eye = np.eye(S)
    policies = itertools.product(range(A), repeat=S)
    rows = np.arange(S)
    while True:
        block = np.array(list(itertools.islice(policies, chunk)))
        if block.size == 0:
            return best
        Ppi = mdp.transition[rows[None, :], block]  # (n, S, S)
        values = np.linalg.solve(eye - mdp.discount * Ppi, np.broadcast_to(mdp.reward, (len(block), S))[..., None])[..., 0]
        best = np.maximum(best, values.max(axis=0))


def check_value_iteration(tol=1e-8):
    spec = envs.EnvSpec(kind="gridworld", height=3, width=3)
    mdp = envs.tabular_build(spec)
    values, policy = envs.value_iteration(mdp, tol=1e-12)
    best = brute_force_optimal_values(mdp)
    err = max(np.max(np.abs(values - best)), np.max(np.abs(envs.policy_evaluation(mdp, policy) - best)))
    return Check("value iteration vs exhaustive policy enumeration (3x3)", err < tol, err, tol)


def check_tabular_agreement(steps=1000, seed=0):
    spec = envs.EnvSpec(kind="gridworld", height=4, width=5)
    mdp = envs.tabular_build(spec)
    rng = np.random.default_rng(seed)
    state, _ = envs.env_reset(spec)
    mismatches = 0
    for _ in range(steps):
        if state.done:
            state, _ = envs.env_reset(spec)
        s = envs.grid_state_index(spec, state.position)
        a = int(rng.integers(spec.n_actions))
        state, _, _, _ = envs.env_step(state, a)
        mismatches += mdp.transition[s, a, envs.grid_state_index(spec, state.position)] != 1.0
    frac = mismatches / steps
    return Check("env_step vs transition matrix (1000 random steps)", mismatches == 0, frac, 0.0)


def selftest_checks():
    return [check_normalization(), check_uniform_likelihood(), *check_gradients(),
            check_value_iteration(), check_tabular_agreement()]
