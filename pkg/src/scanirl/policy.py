"""Memoryless feed-forward policy over (scan, observation), fit by behavioral cloning."""
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .errors import DataError, ShapeError, UsageError
from .numerics import ParamStore, init_uniform
from .scans import ScanConfig, normalize_scan
from .training import Trainer, split_holdout


@dataclass(frozen=True)
class PolicyConfig:
    scan: ScanConfig = field(default_factory=ScanConfig)
    obs_dim: int = 3
    n_actions: int = 3
    hidden: int = 64
    # ablation: the scan input is replaced by zeros, in training and in use
    mask_scan: bool = False

    @property
    def input_dim(self):
        return self.scan.n_tokens + self.obs_dim

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["scan"] = self.scan.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["scan"] = ScanConfig.from_dict(d["scan"])
        return cls(**d)


@dataclass
class PolicyHyper:
    hidden: int = 64
    batch_size: int = 32
    lr: float = 1e-3
    epochs: int = 60
    holdout_fraction: float = 0.1
    seed: int = 0
    mask_scan: bool = False


class PolicyParams:
    def __init__(self, config, params=None, seed=0):
        self.config = config
        self.params = params if params is not None else _init_params(config, seed)


def _init_params(cfg, seed):
    rng = np.random.default_rng(seed)
    p = ParamStore()
    dims = [cfg.input_dim, cfg.hidden, cfg.hidden, cfg.n_actions]
    for k, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        p.add(f"w{k}", init_uniform(rng, n_in, (n_in, n_out)))
        p.add(f"b{k}", np.zeros(n_out))
    return p


def policy_inputs(pol, scans, obs):
    cfg = pol.config
    scans = np.asarray(scans)
    obs = np.asarray(obs, dtype=np.float64)
    if scans.shape[1:] != cfg.scan.shape or obs.ndim != 2 or obs.shape[1] != cfg.obs_dim:
        raise ShapeError(f"policy inputs {scans.shape} / {obs.shape} do not match "
                         f"scan {cfg.scan.shape} and obs_dim {cfg.obs_dim}")
    flat = normalize_scan(scans, cfg.scan)
    if cfg.mask_scan:
        flat = np.zeros_like(flat)
    return np.concatenate([flat, obs], axis=1)


def policy_logits(pol, scans, obs):
    """Logits tensor of shape (batch, n_actions)."""
    p = pol.params
    x = nx.Tensor(policy_inputs(pol, scans, obs))
    x = nx.relu(nx.add_bias(nx.matmul(x, p["w0"]), p["b0"]))
    x = nx.relu(nx.add_bias(nx.matmul(x, p["w1"]), p["b1"]))
    return nx.add_bias(nx.matmul(x, p["w2"]), p["b2"])


def policy_probs(pol, scans, obs):
    return nx.softmax(policy_logits(pol, scans, obs).value)


def policy_forward(pol, scan, obs):
    """Action probabilities for a single (scan, observation)."""
    return policy_probs(pol, np.asarray(scan)[None], np.asarray(obs)[None])[0]


def choose_action(probs, mode="greedy", rng=None):
    if mode == "greedy":
        # argmax returns the first maximum, i.e. the lowest action id
        return int(np.argmax(probs))
    if mode == "sample":
        if rng is None:
            raise UsageError("sample mode needs an rng")
        return min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), len(probs) - 1)
    raise UsageError(f"unknown action mode {mode!r}; expected 'greedy' or 'sample'")


def policy_act(pol, scan, obs, mode="greedy", rng=None):
    return choose_action(policy_forward(pol, scan, obs), mode, rng)


def cross_entropy(pol, scans, obs, actions):
    logits = policy_logits(pol, scans, obs)
    return nx.softmax_cross_entropy(logits, np.asarray(actions), "mean")


def accuracy(pol, scans, obs, actions):
    if len(actions) == 0:
        return float("nan")
    pred = np.argmax(policy_logits(pol, scans, obs).value, axis=1)
    return float(np.mean(pred == np.asarray(actions)))


@dataclass
class PolicyHistory:
    epochs: list = field(default_factory=list)

    def append(self, epoch, train_acc, heldout_acc, loss):
        self.epochs.append({"epoch": epoch, "train_acc": train_acc, "heldout_acc": heldout_acc, "loss": loss})

    @property
    def train_acc(self):
        return [e["train_acc"] for e in self.epochs]

    @property
    def heldout_acc(self):
        return [e["heldout_acc"] for e in self.epochs]


def policy_trainer(pol, dataset, hyper, train_idx, opt_state=None):
    def loss_fn(params, idx):
        rows = train_idx[idx]
        return cross_entropy(pol, dataset.scans[rows], dataset.obs[rows], dataset.actions[rows])

    return Trainer(pol.params, loss_fn, len(train_idx), hyper.batch_size, hyper.seed,
                   opt_state=opt_state, lr=hyper.lr)


def policy_train(dataset, hyper=None, n_actions=None):
    """Behavioral cloning of ``dataset.actions`` from ``(scans, obs)``."""
    hyper = hyper or PolicyHyper()
    if len(dataset) == 0:
        raise DataError("cannot train the policy on an empty dataset")
    n_actions = n_actions or dataset.env_spec.n_actions
    cfg = PolicyConfig(dataset.scan_config, dataset.obs.shape[1], n_actions, hyper.hidden, hyper.mask_scan)
    pol = PolicyParams(cfg, seed=hyper.seed)
    train_idx, held_idx = split_holdout(len(dataset), hyper.holdout_fraction, hyper.seed)
    trainer = policy_trainer(pol, dataset, hyper, train_idx)
    history = PolicyHistory()

    def acc(idx):
        return accuracy(pol, dataset.scans[idx], dataset.obs[idx], dataset.actions[idx])

    for epoch in range(1, hyper.epochs + 1):
        loss = trainer.run_epoch()
        history.append(epoch, acc(train_idx), acc(held_idx), loss)
    pol.opt_state = trainer.opt_state
    return pol, history
