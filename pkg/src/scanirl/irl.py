"""Linear reward recovery ``R(s) = phi(s) . w`` on tabular MDPs.

``irl_recover`` runs the feature-expectation projection iteration: each
round solves the MDP under the current weights, projects the expert's
feature expectations onto the segment towards the new policy's, and sets
``w = mu_expert - mu_bar``. The projection distance ``||mu_expert - mu_bar||``
never increases. The candidate whose optimal policy agrees with the expert on
the most states is returned, rescaled so that ``max|w| = w_max``.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import envs
from .errors import ConfigError, ConvergenceError


# ---------------------------------------------------------------------------
# features


def one_hot_features(n_states):
    return np.eye(n_states)


def compact_features(spec):
    """Four features per cell: goal distance, wall adjacency, column, row (scaled to [0, 1])."""
    gr, gc = spec.goal_cell
    span = (spec.height - 1) + (spec.width - 1)
    phi = np.zeros((spec.height * spec.width, 4))
    for r in range(spec.height):
        for c in range(spec.width):
            s = envs.grid_state_index(spec, (r, c))
            walls = (r == 0) + (r == spec.height - 1) + (c == 0) + (c == spec.width - 1)
            phi[s] = [(abs(r - gr) + abs(c - gc)) / span, walls / 4.0,
                      c / (spec.width - 1), r / (spec.height - 1)]
    return phi


def check_features(mdp, phi):
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] != mdp.n_states or phi.shape[1] < 1:
        raise ConfigError(f"feature map of shape {phi.shape} does not fit {mdp.n_states} states")
    if not np.all(np.isfinite(phi)):
        raise ConfigError("feature map has non-finite entries")
    return phi


# ---------------------------------------------------------------------------
# feature expectations


def feature_expectations(mdp, policy, phi, start_dist=None):
    """Exact ``E[sum_t gamma^t phi(s_t)]`` from the discounted occupancy system."""
    phi = check_features(mdp, phi)
    if mdp.discount >= 1.0:
        raise ConfigError("feature expectations need discount < 1")
    d0 = mdp.initial_dist if start_dist is None else np.asarray(start_dist, dtype=np.float64)
    Ppi = envs.policy_transition(mdp, policy)
    occupancy = np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * Ppi.T, d0)
    return phi.T @ occupancy


def monte_carlo_feature_expectations(mdp, policy, phi, episodes, horizon, rng, start_dist=None):
    """Sampled estimate of :func:`feature_expectations` and its standard error."""
    phi = check_features(mdp, phi)
    d0 = mdp.initial_dist if start_dist is None else np.asarray(start_dist, dtype=np.float64)
    Ppi = envs.policy_transition(mdp, policy)
    cum = np.cumsum(Ppi, axis=1)
    states = rng.choice(mdp.n_states, size=episodes, p=d0)
    totals = np.zeros((episodes, phi.shape[1]))
    for t in range(horizon):
        totals += mdp.discount ** t * phi[states]
        u = rng.random(episodes)[:, None]
        states = np.minimum((u >= cum[states]).sum(axis=1), mdp.n_states - 1)
    return totals.mean(axis=0), totals.std(axis=0, ddof=1) / np.sqrt(episodes)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    optimal: np.ndarray
    expert_actions: np.ndarray
    best_actions: np.ndarray
    q_gap: np.ndarray

    @property
    def margin(self):
        return float(self.q_gap.max()) if self.q_gap.size else 0.0

    @property
    def match_fraction(self):
        return float(self.optimal.mean())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state", "expert_action", "best_action", "q_gap"])
            for s in range(len(self.optimal)):
                w.writerow([s, int(self.expert_actions[s]), int(self.best_actions[s]), repr(float(self.q_gap[s]))])


def exact_q(mdp, reward):
    """Optimal Q-values for ``reward``: value iteration, then an exact solve of its greedy policy."""
    m = mdp.with_reward(reward)
    scale = max(float(np.abs(reward).max()), 1.0)
    _, pi = envs.value_iteration(m, tol=1e-12 * scale)
    values = envs.policy_evaluation(m, pi)
    # one improvement step guards against a near-tied greedy choice
    pi = envs.greedy_policy(envs.q_values(m, values), tie_tol=0.0)
    return envs.q_values(m, envs.policy_evaluation(m, pi))


def irl_validate(mdp, w, phi, expert_policy, tol=1e-9):
    """Flag states where the expert's action is within ``tol`` of the best Q-value under ``phi @ w``."""
    phi = check_features(mdp, phi)
    expert_policy = np.asarray(expert_policy, dtype=np.int64)
    q = exact_q(mdp, phi @ np.asarray(w, dtype=np.float64))
    rows = np.arange(mdp.n_states)
    gap = q.max(axis=1) - q[rows, expert_policy]
    return ValidationReport(gap <= tol, expert_policy, np.argmax(q, axis=1), gap)


# ---------------------------------------------------------------------------
# recovery


@dataclass
class IRLHyper:
    w_max: float = 1.0
    tol: float = 1e-6
    max_iter: int = 100
    start: str = "uniform"  # "uniform" or "mdp": start distribution used for feature expectations
    validate_tol: float = 1e-9


@dataclass
class IRLResult:
    weights: np.ndarray
    margin: float
    iterations: int
    converged: bool
    margins: list = field(default_factory=list)
    report: ValidationReport = None


def _scaled(w, w_max):
    top = np.abs(w).max()
    return w * (w_max / top) if top > 0 else w


def _all_actions_tie(mdp):
    return bool(np.all(mdp.transition == mdp.transition[:, :1, :]))


def irl_recover(mdp, expert_policy, phi, hyper=None):
    """Recover weights under which ``expert_policy`` is optimal.

    Raises :class:`ConvergenceError` (carrying the best result so far) when
    neither the projection distance drops below ``hyper.tol`` nor a
    candidate makes the expert optimal in every state within ``max_iter``
    rounds.
    """
    hyper = hyper or IRLHyper()
    phi = check_features(mdp, phi)
    if phi.shape[1] > mdp.n_states:
        raise ConfigError(f"{phi.shape[1]} features exceed {mdp.n_states} states")
    expert_policy = np.asarray(expert_policy, dtype=np.int64)
    if expert_policy.shape != (mdp.n_states,):
        raise ConfigError("expert policy must give one action per state")
    start = np.full(mdp.n_states, 1.0 / mdp.n_states) if hyper.start == "uniform" else mdp.initial_dist

    def mu(policy):
        return feature_expectations(mdp, policy, phi, start)

    mu_expert = mu(expert_policy)
    if mdp.n_actions == 1 or _all_actions_tie(mdp):
        w = np.zeros(phi.shape[1])
        return IRLResult(w, 0.0, 0, True, [0.0], irl_validate(mdp, w, phi, expert_policy, hyper.validate_tol))

    # first candidate: the policy that is greedy for the all-zero reward
    mu_bar = mu(np.zeros(mdp.n_states, dtype=np.int64))
    margins = []
    best = None
    for it in range(1, hyper.max_iter + 1):
        w = mu_expert - mu_bar
        margin = float(np.linalg.norm(w))
        margins.append(margin)
        if margin <= hyper.tol:
            break
        w = _scaled(w, hyper.w_max)
        report = irl_validate(mdp, w, phi, expert_policy, hyper.validate_tol * hyper.w_max)
        if best is None or report.match_fraction > best.report.match_fraction:
            best = IRLResult(w, margin, it, False, margins, report)
        if report.optimal.all():
            best.converged = True
            break
        q = exact_q(mdp, phi @ w)
        mu_new = mu(envs.greedy_policy(q))
        step = mu_new - mu_bar
        denom = float(step @ step)
        if denom == 0.0:
            break
        mu_bar = mu_bar + float(np.clip(step @ (mu_expert - mu_bar) / denom, 0.0, 1.0)) * step
    if margins[-1] <= hyper.tol and (best is None or not best.converged):
        # mu_expert lies in the span of the policies found; keep the best candidate
        if best is None:
            raise ConvergenceError("projection collapsed onto the expert before any candidate was scored")
        best.converged = True
    best.margins = margins
    best.iterations = len(margins)
    if not best.converged:
        raise ConvergenceError(
            f"IRL did not converge in {hyper.max_iter} iterations; final margin {margins[-1]:.3g}, "
            f"best candidate matches {best.report.match_fraction:.1%} of states", best)
    return best
