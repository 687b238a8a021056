"""Cross-task knowledge transfer for simultaneously trained PINNs.

When a task's training loss plateaus, its hidden layers are replaced by a
learned layer-wise linear blend of every task's hidden layers.  The blend
coefficients are fitted on that task's own loss with all base networks
frozen, and the blend is kept only if it lowers the full training loss.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import netcore
from .errors import ConfigurationError, DivergenceError
from .objective import CollocationBatch
from .optim import LambHyper, LambState, lamb_step

ALPHA_INIT_MODES = ("identity", "0.7-0.3", "0.5-0.5", "swap", "xavier")

_FIXED_PAIRS = {
    "identity": (1.0, 0.0),
    "0.7-0.3": (0.7, 0.3),
    "0.5-0.5": (0.5, 0.5),
    "swap": (0.0, 1.0),
}


@dataclass(frozen=True)
class TriggerPolicy:
    kind: str = "adaptive"
    window: int = 50
    improvement: float = 0.01
    period: int = 50

    def __post_init__(self):
        if self.kind not in ("adaptive", "fixed"):
            raise ConfigurationError(f"unknown trigger kind {self.kind!r}")
        if self.window < 1 or self.period < 1:
            raise ConfigurationError("window and period must be >= 1")
        if not 0 < self.improvement < 1:
            raise ConfigurationError("improvement fraction must lie in (0, 1)")


@dataclass(frozen=True)
class TriggerState:
    best_loss: float = math.inf
    plateau_count: int = 0


def observe_epoch(state, policy, epoch, epoch_loss):
    """Feed one epoch's training loss; returns (new_state, fire)."""
    if epoch_loss <= state.best_loss * (1.0 - policy.improvement):
        count = 0
    else:
        count = state.plateau_count + 1
    best = min(state.best_loss, epoch_loss)
    if policy.kind == "fixed":
        fire = epoch % policy.period == 0
        return TriggerState(best, min(count, policy.window)), fire
    if count >= policy.window:
        return TriggerState(best, 0), True
    return TriggerState(best, count), False


def after_transfer(state, installed_loss):
    """Restart the plateau window once a transfer attempt has been decided."""
    return TriggerState(min(state.best_loss, installed_loss), 0)


def combine(all_params, alpha, k):
    """Task k's parameters with hidden layers blended by ``alpha``."""
    netcore.check_combinable(all_params, alpha)
    return netcore.NetworkParams(all_params[k].arch, netcore.combine_layers(all_params, alpha, k))


def init_alpha(mode, n_task, n_layers, k, seed=0):
    """Coefficient matrix of shape (n_task, n_layers).

    The fixed modes put their first value on row ``k`` and the second on every
    other row.  ``xavier`` draws U(-sqrt(3/n_task), +sqrt(3/n_task)).
    """
    if mode == "xavier":
        lim = math.sqrt(6.0 / (2 * n_task))
        return np.random.default_rng(seed).uniform(-lim, lim, size=(n_task, n_layers))
    try:
        own, other = _FIXED_PAIRS[mode]
    except KeyError:
        raise ConfigurationError(f"unknown alpha init mode {mode!r}; choose from {ALPHA_INIT_MODES}") from None
    alpha = np.full((n_task, n_layers), other)
    alpha[k, :] = own
    return alpha


@dataclass(frozen=True)
class MtoConfig:
    alpha_init: str = "identity"
    alpha_epochs: int = 200
    batch_size: int = 1024
    n_colloc: int = None
    lamb: LambHyper = field(default_factory=LambHyper)


@dataclass
class MtoOutcome:
    accepted: bool
    pre_loss: float
    post_loss: float
    learned_alpha: np.ndarray
    params: object  # installed parameters for the triggered task
    installed_loss: float
    note: str = ""
    eval_colloc: object = None  # collocation snapshot behind pre/post


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def _rng(seed_key, *extra):
    return np.random.default_rng(np.random.SeedSequence([*seed_key, *extra]))


def run_mto(all_params, k, task, config, seed_key=(0,)):
    """One transfer attempt for task ``k``.

    ``seed_key`` is a tuple of non-negative ints identifying this attempt;
    all randomness (shuffles, collocation draws, Xavier alpha) derives from it.
    """
    snapshot = list(all_params)
    netcore.check_combinable(snapshot)
    n_layers = snapshot[0].arch.n_layers - 1
    train = task.train_set
    n = len(train)
    n_colloc = config.n_colloc or n

    eval_colloc = CollocationBatch.uniform(_rng(seed_key, 3), n_colloc)
    pre = netcore.evaluate_loss(snapshot[k], task, train, eval_colloc)[2]

    alpha = init_alpha(config.alpha_init, len(snapshot), n_layers, k,
                       seed=_rng(seed_key, 4).integers(2**32))
    state = LambState.fresh([alpha[:, j] for j in range(n_layers)])
    note = ""
    try:
        for ep in range(config.alpha_epochs):
            groups = _batches(n, config.batch_size, _rng(seed_key, 1, ep))
            colloc = CollocationBatch.uniform(_rng(seed_key, 2, ep), n_colloc)
            parts = np.array_split(np.arange(n_colloc), len(groups))
            for idx, cidx in zip(groups, parts):
                cb = CollocationBatch(colloc.d[cidx], colloc.t[cidx])
                _, g = netcore.grad_alpha_loss(snapshot, alpha, k, task, train.take(idx), cb)
                state, cols = lamb_step(state, [alpha[:, j] for j in range(n_layers)],
                                        [g[:, j] for j in range(n_layers)], config.lamb)
                alpha = np.column_stack(cols)
        candidate = combine(snapshot, alpha, k)
        post = netcore.evaluate_loss(candidate, task, train, eval_colloc)[2]
    except DivergenceError as exc:
        candidate, post, note = None, math.inf, f"alpha learning diverged: {exc}"

    if post < pre:
        return MtoOutcome(True, pre, post, alpha, candidate, post, note, eval_colloc)
    return MtoOutcome(False, pre, post, alpha, snapshot[k], pre, note, eval_colloc)
