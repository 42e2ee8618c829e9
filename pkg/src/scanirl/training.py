"""Mini-batch loop shared by the generator and the policy.

The batch used at global step ``k`` depends only on ``(seed, k)``: every
epoch draws a fresh permutation from ``default_rng([seed, epoch])``. A run
restored from a checkpoint at step ``k`` therefore continues exactly as an
uninterrupted run would.
"""
import numpy as np

from .numerics import OptState, backward, opt_step


class Trainer:
    def __init__(self, params, loss_fn, n_examples, batch_size, seed, opt_state=None, lr=1e-3):
        self.params = params
        self.loss_fn = loss_fn
        self.n_examples = int(n_examples)
        self.batch_size = int(min(batch_size, n_examples))
        self.seed = int(seed)
        self.opt_state = opt_state if opt_state is not None else OptState(lr=lr)

    @property
    def batches_per_epoch(self):
        return -(-self.n_examples // self.batch_size)

    @property
    def step_count(self):
        return self.opt_state.step

    def batch_indices(self, step):
        epoch, k = divmod(step, self.batches_per_epoch)
        perm = np.random.default_rng([self.seed, epoch]).permutation(self.n_examples)
        return perm[k * self.batch_size:(k + 1) * self.batch_size]

    def step(self):
        idx = self.batch_indices(self.opt_state.step)
        loss = self.loss_fn(self.params, idx)
        grads = backward(loss, self.params)
        opt_step(self.params, grads, self.opt_state)
        return float(loss.value)

    def run_steps(self, n):
        return [self.step() for _ in range(n)]

    def run_epoch(self):
        return float(np.mean(self.run_steps(self.batches_per_epoch)))


def split_holdout(n, fraction, seed):
    """Deterministic (train, heldout) index split."""
    perm = np.random.default_rng([seed, 2 ** 31]).permutation(n)
    n_hold = int(round(n * fraction)) if n > 1 else 0
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])
