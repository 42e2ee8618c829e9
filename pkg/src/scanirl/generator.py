"""Conditional autoregressive scan model ``p(F_next | F_prev, obs)``.

A single LSTM runs over the flattened token stream. The input at step ``i``
is the embedding of token ``i-1`` (a dedicated start token at ``i = 0``)
concatenated with a context vector computed from the previous scan and the
current observation, so every step sees the conditioning pair.

Two forward paths exist. ``sequence_nll`` records a graph for training;
``_TokenStepper`` runs the same equations on plain arrays for likelihoods
and sampling. Both read the parameters from one :class:`ParamStore`.
"""
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .errors import DataError, ShapeError
from .numerics import ParamStore, init_uniform
from .scans import ScanConfig, check_scan, normalize_scan, token_levels
from .training import Trainer, split_holdout


@dataclass(frozen=True)
class GeneratorConfig:
    scan: ScanConfig = field(default_factory=ScanConfig)
    obs_dim: int = 3
    embed: int = 16
    hidden: int = 64
    context: int = 32
    encoder_hidden: int = 64

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
class GeneratorHyper:
    embed: int = 16
    hidden: int = 64
    context: int = 32
    encoder_hidden: int = 64
    batch_size: int = 32
    lr: float = 1e-3
    epochs: int = 60
    holdout_fraction: float = 0.1
    seed: int = 0


class GeneratorModel:
    def __init__(self, config, params=None, seed=0):
        self.config = config
        self.params = params if params is not None else _init_params(config, seed)

    @property
    def scan(self):
        return self.config.scan

    @property
    def start_token(self):
        return self.scan.levels * self.scan.channels

    def input_ids(self, levels):
        """Embedding ids fed at each step: start token, then the previous tokens."""
        levels = np.asarray(levels)
        C, K = self.scan.channels, self.scan.levels
        channel = np.arange(levels.shape[-1]) % C
        ids = channel * K + levels
        start = np.full(levels.shape[:-1] + (1,), self.start_token)
        return np.concatenate([start, ids[..., :-1]], axis=-1)


def _init_params(cfg, seed):
    rng = np.random.default_rng(seed)
    p = ParamStore()
    d_in = cfg.scan.n_tokens + cfg.obs_dim
    H, E, X = cfg.hidden, cfg.embed, cfg.context
    p.add("enc_w1", init_uniform(rng, d_in, (d_in, cfg.encoder_hidden)))
    p.add("enc_b1", np.zeros(cfg.encoder_hidden))
    p.add("enc_w2", init_uniform(rng, cfg.encoder_hidden, (cfg.encoder_hidden, X)))
    p.add("enc_b2", np.zeros(X))
    p.add("embed", rng.normal(0.0, 1.0, (cfg.scan.levels * cfg.scan.channels + 1, E)))
    p.add("lstm_wx", init_uniform(rng, E + X, (E + X, 4 * H)))
    p.add("lstm_wh", init_uniform(rng, H, (H, 4 * H)))
    bias = np.zeros(4 * H)
    bias[H:2 * H] = 1.0  # forget gate
    p.add("lstm_b", bias)
    # zero projection: the untrained model is uniform over levels
    p.add("out_w", np.zeros((H, cfg.scan.levels)))
    p.add("out_b", np.zeros(cfg.scan.levels))
    return p


# ---------------------------------------------------------------------------
# recorded-graph path


def encode_context(model, prev_scans, obs):
    """Context tensor of shape (batch, context) for batches of scans and observations."""
    cfg = model.config
    prev_scans = np.asarray(prev_scans)
    obs = np.asarray(obs, dtype=np.float64)
    if prev_scans.shape[1:] != cfg.scan.shape or obs.ndim != 2 or obs.shape[1] != cfg.obs_dim:
        raise ShapeError(f"context inputs {prev_scans.shape} / {obs.shape} do not match "
                         f"scan {cfg.scan.shape} and obs_dim {cfg.obs_dim}")
    p = model.params
    x = np.concatenate([normalize_scan(prev_scans, cfg.scan), obs], axis=1)
    hidden = nx.tanh(nx.add_bias(nx.matmul(x, p["enc_w1"]), p["enc_b1"]))
    return nx.add_bias(nx.matmul(hidden, p["enc_w2"]), p["enc_b2"])


def lstm_cell(x_proj, h, c, wh, hidden):
    """One LSTM step; ``x_proj`` already holds the input projection plus bias."""
    z = nx.add(x_proj, nx.matmul(h, wh))
    zi, zf, zo, zg = nx.split_last(z, [hidden] * 4)
    i, f, o = nx.sigmoid(zi), nx.sigmoid(zf), nx.sigmoid(zo)
    g = nx.tanh(zg)
    c = nx.add(nx.mul(f, c), nx.mul(i, g))
    h = nx.mul(o, nx.tanh(c))
    return h, c


def sequence_logits(model, ctx, levels):
    """Teacher-forced logits of shape (batch, n_tokens, levels)."""
    p = model.params
    H = model.config.hidden
    levels = np.asarray(levels)
    B, T = levels.shape
    emb = nx.embedding(p["embed"], model.input_ids(levels))
    ctx_seq = nx.broadcast_to(nx.reshape(ctx, (B, 1, ctx.shape[-1])), (B, T, ctx.shape[-1]))
    x = nx.concat([emb, ctx_seq], axis=-1)
    x_proj = nx.add_bias(nx.matmul(x, p["lstm_wx"]), p["lstm_b"])
    h = nx.Tensor(np.zeros((B, H)))
    c = nx.Tensor(np.zeros((B, H)))
    hs = []
    for x_t in nx.unstack(x_proj, axis=1):
        h, c = lstm_cell(x_t, h, c, p["lstm_wh"], H)
        hs.append(h)
    out = nx.stack(hs, axis=1)
    return nx.add_bias(nx.matmul(out, p["out_w"]), p["out_b"])


def sequence_nll(model, prev_scans, obs, next_scans):
    """Mean over the batch of the per-scan negative log-likelihood (a scalar tensor)."""
    ctx = encode_context(model, prev_scans, obs)
    levels = token_levels(next_scans, model.scan)
    logits = sequence_logits(model, ctx, levels)
    return nx.mul(nx.softmax_cross_entropy(logits, levels, "sum"), 1.0 / levels.shape[0])


# ---------------------------------------------------------------------------
# array path for likelihoods and sampling


class _TokenStepper:
    """Runs the LSTM token by token on plain arrays for a batch of contexts."""

    def __init__(self, model, ctx):
        p = model.params
        cfg = model.config
        ctx = np.atleast_2d(np.asarray(ctx, dtype=np.float64))
        E = cfg.embed
        wx = p["lstm_wx"].value
        self.model = model
        self.emb = p["embed"].value
        self.wx_emb = wx[:E]
        self.ctx_proj = ctx @ wx[E:] + p["lstm_b"].value
        self.wh = p["lstm_wh"].value
        self.out_w = p["out_w"].value
        self.out_b = p["out_b"].value
        self.H = cfg.hidden
        B = ctx.shape[0]
        self.h = np.zeros((B, self.H))
        self.c = np.zeros((B, self.H))

    def step(self, ids):
        """Feed embedding ids (one per batch row); returns the next-token logits."""
        H = self.H
        z = self.emb[ids] @ self.wx_emb + self.ctx_proj + self.h @ self.wh
        gates = nx._sigmoid(z[:, :3 * H])
        g = np.tanh(z[:, 3 * H:])
        self.c = gates[:, H:2 * H] * self.c + gates[:, :H] * g
        self.h = gates[:, 2 * H:] * np.tanh(self.c)
        return self.h @ self.out_w + self.out_b


def context_encode(model, prev_scan, obs):
    """Context vector for a single ``(prev_scan, obs)`` pair."""
    check_scan(prev_scan, model.scan)
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (model.config.obs_dim,):
        raise ShapeError(f"observation of shape {obs.shape} does not match obs_dim {model.config.obs_dim}")
    return encode_context(model, prev_scan[None], obs[None]).value[0]


def token_log_probs(model, scans, ctx):
    """Teacher-forced log p(token_i | tokens_<i, ctx), shape (batch, n_tokens)."""
    scans = np.asarray(scans)
    single = scans.ndim == 3
    if single:
        scans = scans[None]
    levels = token_levels(scans, model.scan)
    ids = model.input_ids(levels)
    stepper = _TokenStepper(model, ctx)
    out = np.empty(levels.shape)
    rows = np.arange(levels.shape[0])
    for i in range(levels.shape[1]):
        logp = nx.log_softmax(stepper.step(ids[:, i]))
        out[:, i] = logp[rows, levels[:, i]]
    return out[0] if single else out


def log_likelihood(model, scan, ctx):
    """Natural-log probability of ``scan`` given the context vector ``ctx``."""
    check_scan(scan, model.scan)
    return float(token_log_probs(model, scan, ctx).sum())


def batch_nll(model, prev_scans, obs, next_scans, chunk=256):
    """Per-record negative log-likelihoods without recording a graph."""
    out = []
    for lo in range(0, len(prev_scans), chunk):
        sl = slice(lo, lo + chunk)
        ctx = encode_context(model, prev_scans[sl], obs[sl]).value
        out.append(-token_log_probs(model, next_scans[sl], ctx).sum(axis=1))
    return np.concatenate(out) if out else np.zeros(0)


def sample(model, ctx, rng=None, greedy=False):
    """Draw a scan token by token in generation order.

    ``greedy`` takes the most probable level at every token (lowest level on
    ties) and ignores ``rng``.
    """
    cfg = model.scan
    K, C = cfg.levels, cfg.channels
    stepper = _TokenStepper(model, ctx)
    levels = np.empty(cfg.n_tokens, dtype=np.int64)
    ident = model.start_token
    for i in range(cfg.n_tokens):
        logits = stepper.step(np.array([ident]))[0]
        if greedy:
            level = int(np.argmax(logits))
        else:
            probs = nx.softmax(logits)
            level = min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), K - 1)
        levels[i] = level
        ident = (i % C) * K + level
    return levels.astype(np.uint8).reshape(cfg.shape)


def next_scan(model, prev_scan, obs, rng=None, greedy=True):
    return sample(model, context_encode(model, prev_scan, obs), rng, greedy)


# ---------------------------------------------------------------------------
# training


@dataclass
class GeneratorHistory:
    epochs: list = field(default_factory=list)

    def append(self, epoch, train_nll, heldout_nll):
        self.epochs.append({"epoch": epoch, "train_nll": train_nll, "heldout_nll": heldout_nll})

    @property
    def train_nll(self):
        return [e["train_nll"] for e in self.epochs]

    @property
    def heldout_nll(self):
        return [e["heldout_nll"] for e in self.epochs]


def _check_dataset(dataset):
    if len(dataset) == 0:
        raise DataError("cannot train the generator on an empty dataset")
    shape = dataset.scan_config.shape
    if dataset.scans.shape[1:] != shape or dataset.scans_next.shape[1:] != shape:
        raise DataError(f"dataset scans {dataset.scans.shape[1:]} / {dataset.scans_next.shape[1:]} "
                        f"are inconsistent with scan config {shape}")
    if dataset.scans.max(initial=0) >= dataset.scan_config.levels:
        raise DataError("dataset scans contain levels outside the scan config")


def generator_trainer(model, dataset, hyper, train_idx, opt_state=None):
    def loss_fn(params, idx):
        rows = train_idx[idx]
        return sequence_nll(model, dataset.scans[rows], dataset.obs[rows], dataset.scans_next[rows])

    return Trainer(model.params, loss_fn, len(train_idx), hyper.batch_size, hyper.seed,
                   opt_state=opt_state, lr=hyper.lr)


def evaluate_generator(model, dataset, idx):
    if len(idx) == 0:
        return float("nan")
    return float(batch_nll(model, dataset.scans[idx], dataset.obs[idx], dataset.scans_next[idx]).mean())


def train_generator(dataset, hyper=None, callback=None):
    """Fit the generator by mini-batch descent on the mean per-scan NLL.

    Returns the model and a history whose entry for epoch 0 is the untrained
    model. ``callback(epoch, model, trainer)`` runs after every epoch.
    """
    hyper = hyper or GeneratorHyper()
    _check_dataset(dataset)
    cfg = GeneratorConfig(dataset.scan_config, dataset.obs.shape[1], hyper.embed, hyper.hidden,
                          hyper.context, hyper.encoder_hidden)
    model = GeneratorModel(cfg, seed=hyper.seed)
    train_idx, held_idx = split_holdout(len(dataset), hyper.holdout_fraction, hyper.seed)
    trainer = generator_trainer(model, dataset, hyper, train_idx)
    history = GeneratorHistory()
    history.append(0, evaluate_generator(model, dataset, train_idx), evaluate_generator(model, dataset, held_idx))
    for epoch in range(1, hyper.epochs + 1):
        trainer.run_epoch()
        history.append(epoch, evaluate_generator(model, dataset, train_idx),
                       evaluate_generator(model, dataset, held_idx))
        if callback is not None:
            callback(epoch, model, trainer)
    model.opt_state = trainer.opt_state
    return model, history
