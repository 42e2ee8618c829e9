"""Procedures shared by the unit tests and the acceptance suite."""
import numpy as np

from scanirl import archive
from scanirl.envs import EnvSpec
from scanirl.expert import collect_dataset
from scanirl.generator import GeneratorConfig, GeneratorHyper, GeneratorModel, generator_trainer
from scanirl.policy import PolicyConfig, PolicyHyper, PolicyParams, policy_trainer
from scanirl.scans import ScanConfig

SMALL_SCAN = ScanConfig(4, 4, 3, 8)


def small_dataset(seed=0):
    return collect_dataset(EnvSpec(corridor_length=3), 6, SMALL_SCAN, seed=seed)


def _fresh(kind, ds):
    idx = np.arange(len(ds))
    if kind == "generator":
        hyper = GeneratorHyper(embed=6, hidden=8, context=6, encoder_hidden=8, batch_size=8, seed=4)
        model = GeneratorModel(GeneratorConfig(ds.scan_config, 3, 6, 8, 6, 8), seed=4)
        return model, hyper, lambda m, st: generator_trainer(m, ds, hyper, idx, st)
    hyper = PolicyHyper(hidden=16, batch_size=8, seed=4)
    model = PolicyParams(PolicyConfig(ds.scan_config, 3, 3, 16), seed=4)
    return model, hyper, lambda m, st: policy_trainer(m, ds, hyper, idx, st)


def resume_is_bit_exact(kind, tmp_path):
    """Ten uninterrupted steps versus five, a save/load round trip, and five more."""
    ds = small_dataset()
    save = archive.save_generator if kind == "generator" else archive.save_policy
    load = archive.load_generator if kind == "generator" else archive.load_policy

    straight, _, make = _fresh(kind, ds)
    t = make(straight, None)
    losses_a = t.run_steps(10)
    next_a = t.loss_fn(straight.params, t.batch_indices(t.step_count)).value

    first, _, make = _fresh(kind, ds)
    t = make(first, None)
    losses_b = t.run_steps(5)
    first.opt_state = t.opt_state
    path = tmp_path / f"{kind}-resume.nmir"
    save(first, path)
    resumed = load(path)
    t = make(resumed, resumed.opt_state)
    losses_b += t.run_steps(5)
    next_b = t.loss_fn(resumed.params, t.batch_indices(t.step_count)).value

    same_params = all(np.asarray(v).tobytes() == resumed.params[k].value.tobytes()
                      for k, v in straight.params.values().items())
    return same_params and losses_a == losses_b and next_a.tobytes() == next_b.tobytes()
