"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -s`` (the lines are also
repeated in the terminal summary without ``-s``). Criterion 5 trains the
full-size generator and takes a few minutes.
"""
import time

import numpy as np
import pytest
from helpers import resume_is_bit_exact

from scanirl import archive, envs, irl, oracles
from scanirl import runtime as rt
from scanirl.envs import EnvSpec
from scanirl.expert import collect_dataset
from scanirl.generator import GeneratorHyper, train_generator
from scanirl.policy import PolicyHyper, policy_train


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start


def test_criterion_1_generator_normalization(report):
    check, secs = timed(oracles.check_normalization)
    report(1, "generator normalization", check.passed and secs < 1.0,
           f"max |sum p - 1| = {check.value:.2e} over 3 weight draws (< 1e-9), {secs:.2f}s (< 1s)")


def test_criterion_2_gradient_fidelity(report):
    start = time.perf_counter()
    errs = {"policy": oracles.policy_gradient_error(), "lstm cell": oracles.lstm_cell_gradient_error(),
            "context encoder": oracles.encoder_gradient_error()}
    secs = time.perf_counter() - start
    worst = max(errs.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    report(2, "gradient fidelity", worst < 1e-4 and secs < 30, f"max rel err {detail} (< 1e-4), {secs:.1f}s (< 30s)")


def test_criterion_3_uniform_likelihood(report):
    check = oracles.check_uniform_likelihood()
    report(3, "uniform-start likelihood", check.passed,
           f"|ll - 192 ln(1/8)| = {check.value:.2e} (< 1e-9)")


def test_criterion_4_imitation_fidelity(report, tmaze_policy):
    agree = steps = 0
    for i in range(100):
        r = rt.rollout(None, tmaze_policy.policy, tmaze_policy.spec, rt.episode_config(2024, i, "oracle"))
        agree += int(r.step_agreement.sum())
        steps += r.steps
    frac = agree / steps
    secs = tmaze_policy.policy_seconds
    report(4, "imitation fidelity", frac >= 0.99 and secs <= 600,
           f"agreement {frac:.4f} over {steps} held-out steps (>= 0.99), training {secs:.1f}s (<= 600s)")


@pytest.mark.slow
def test_criterion_5_memory_without_recurrence(report, tmaze):
    rows, eval_secs = timed(lambda: {r.mode: r for r in rt.eval_suite(tmaze.generator, tmaze.policy, tmaze.spec,
                                                                        1000, seed=123)})
    gen_rate, zero_rate = rows["generated"].success_rate, rows["zeroed"].success_rate
    se = np.sqrt(0.25 / 1000)
    total = tmaze.generator_seconds + eval_secs
    passed = gen_rate >= 0.90 and abs(zero_rate - 0.5) <= 3 * se and gen_rate - zero_rate > 0.30 and total <= 1200
    report(5, "memory without recurrence", passed,
           f"generated {gen_rate:.3f} (>= 0.90), zeroed {zero_rate:.3f} (|z - 0.5| <= {3 * se:.3f}), "
           f"gap {gen_rate - zero_rate:.3f} (> 0.30), oracle {rows['oracle'].success_rate:.3f}, "
           f"{total:.0f}s incl. generator training (<= 1200s)")


def test_criterion_6_irl_recovery(report):
    def recover():
        spec = EnvSpec(kind="gridworld", height=4, width=4)
        mdp = envs.tabular_build(spec)
        _, expert = envs.value_iteration(mdp, tol=1e-12)
        phi = irl.one_hot_features(mdp.n_states)
        result = irl.irl_recover(mdp, expert, phi)
        return irl.irl_validate(mdp, result.weights, phi, expert).match_fraction

    frac, secs = timed(recover)
    report(6, "IRL recovery", frac >= 0.95 and secs < 60, f"expert optimal in {frac:.1%} of states (>= 95%), {secs:.2f}s")


def test_criterion_7_reproducibility(report, tmp_path):
    spec = EnvSpec(corridor_length=3)
    failures = []

    datasets = [archive.dataset_bytes(collect_dataset(spec, 10, seed=7)) for _ in range(2)]
    if datasets[0] != datasets[1]:
        failures.append("dataset bytes")
    ds = archive.dataset_from_bytes(datasets[0])
    if archive.dataset_bytes(ds) != datasets[0]:
        failures.append("dataset round trip")

    hyper_p = PolicyHyper(hidden=16, epochs=2)
    hyper_g = GeneratorHyper(embed=4, hidden=8, context=4, encoder_hidden=8, epochs=1)
    ckpts = []
    for k in range(2):
        pol, _ = policy_train(ds, hyper_p)
        gen, _ = train_generator(ds, hyper_g)
        archive.save_policy(pol, tmp_path / f"p{k}.nmir")
        archive.save_generator(gen, tmp_path / f"g{k}.nmir")
        ckpts.append(((tmp_path / f"p{k}.nmir").read_bytes(), (tmp_path / f"g{k}.nmir").read_bytes()))
    if ckpts[0] != ckpts[1]:
        failures.append("checkpoint bytes")
    gen2, pol2 = archive.load_generator(tmp_path / "g0.nmir"), archive.load_policy(tmp_path / "p0.nmir")
    archive.save_policy(pol2, tmp_path / "p_again.nmir")
    archive.save_generator(gen2, tmp_path / "g_again.nmir")
    if (tmp_path / "p_again.nmir").read_bytes() != ckpts[0][0] or (tmp_path / "g_again.nmir").read_bytes() != ckpts[0][1]:
        failures.append("checkpoint round trip")

    for mode in rt.SCAN_MODES:
        cfg = rt.RolloutConfig(mode, seed=5, policy_mode="sample", generator_greedy=False)
        if rt.rollout(gen, pol, spec, cfg).to_bytes() != rt.rollout(gen2, pol2, spec, cfg).to_bytes():
            failures.append(f"rollout bytes ({mode})")

    for kind in ("generator", "policy"):
        if not resume_is_bit_exact(kind, tmp_path):
            failures.append(f"train 5 + resume 5 vs train 10 ({kind})")

    report(7, "reproducibility and formats", not failures,
           "datasets, checkpoints, rollouts and resumed training bit-identical" if not failures
           else "mismatch: " + ", ".join(failures))
