"""Lock-step training of a main task and its auxiliary tasks.

Every task runs one epoch (shuffle, fresh collocation draw, mini-batch LAMB
steps), then all tasks meet at a barrier where trigger states are updated
and transfer attempts run against a frozen snapshot of all networks.
"""
from dataclasses import dataclass, field
import math
import time

import numpy as np

from . import netcore
from .errors import ConfigurationError, DivergenceError
from .mto import MtoConfig, TriggerPolicy, TriggerState, after_transfer, observe_epoch, run_mto
from .objective import CollocationBatch, LabeledBatch, loss_nn, mape
from .optim import LambHyper, LambState, lamb_step
from .physics import GreenshieldsParams, ResidualForm

COLLOC_MODES = ("per_epoch", "per_run", "per_batch")

# purpose tags mixed into per-task seed sequences
_INIT, _SHUFFLE, _COLLOC, _MTO = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class TaskSpec:
    name: str
    target: str
    train_set: LabeledBatch
    greenshields: GreenshieldsParams = field(default_factory=GreenshieldsParams)
    pde_enabled: bool = True
    residual_form: str = None
    loss_weights: tuple = (1.0, 1.0)
    stream: int = None  # RNG stream id; defaults to the task's index

    def __post_init__(self):
        form = ResidualForm(self.residual_form or self.target)
        if form.value != self.target:
            raise ConfigurationError(f"task {self.name}: residual form {form.value} does not match target {self.target}")
        object.__setattr__(self, "residual_form", form.value)
        if len(self.train_set) == 0:
            raise ConfigurationError(f"task {self.name}: empty training set")


@dataclass(frozen=True)
class TrainConfig:
    tasks: tuple
    arch: netcore.Architecture = field(default_factory=netcore.Architecture)
    main: int = 0
    epochs: int = 4000
    batch_size: int = 1024
    n_colloc: int = None  # None -> one collocation point per labelled sample
    colloc_mode: str = "per_epoch"
    trigger: TriggerPolicy = field(default_factory=TriggerPolicy)
    alpha_init: str = "identity"
    alpha_epochs: int = 200
    lamb: LambHyper = field(default_factory=lambda: LambHyper(lr=1e-3))
    alpha_lamb: LambHyper = field(default_factory=lambda: LambHyper(lr=1e-2))
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise ConfigurationError("at least one task is required")
        if not 0 <= self.main < len(self.tasks):
            raise ConfigurationError("main task index out of range")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.colloc_mode not in COLLOC_MODES:
            raise ConfigurationError(f"colloc_mode must be one of {COLLOC_MODES}")


@dataclass
class TriggerEvent:
    task: int
    epoch: int
    pre_loss: float
    post_loss: float
    accepted: bool
    alpha: np.ndarray
    note: str = ""


@dataclass
class RunRecord:
    seed: int
    loss_nn: list       # per task, array over epochs
    loss_pde: list
    loss_total: list
    triggers: list      # TriggerEvent entries in decision order
    params: list        # final NetworkParams per task
    train_loss: float = math.nan   # main task, full training set, fixed collocation snapshot
    test_mape: float = math.nan
    test_loss_nn: float = math.nan
    wall_clock: float = 0.0
    status: str = "ok"
    diagnostic: str = ""
    audit: list = field(default_factory=list)

    def trigger_count(self, task=None):
        return sum(1 for e in self.triggers if task is None or e.task == task)


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence([int(x) for x in key]))


def _stream(task, index):
    return index if task.stream is None else task.stream


def evaluate(params, task, test_set, floor=1e-3):
    """(test MAPE, test data MSE) of ``params`` on ``test_set``."""
    preds = netcore.predict(params, test_set.inputs)[:, 0]
    return mape(preds, test_set.u, floor), loss_nn(preds, test_set.u)


def full_training_loss(params, task, n_colloc, key):
    colloc = CollocationBatch.uniform(_rng(*key), n_colloc)
    return netcore.evaluate_loss(params, task, task.train_set, colloc)[2]


class _TaskRunner:
    def __init__(self, cfg, index):
        self.cfg = cfg
        self.task = cfg.tasks[index]
        self.stream = _stream(self.task, index)
        init_seed = int(_rng(cfg.seed, self.stream, _INIT).integers(2**31))
        self.params = netcore.init_params(cfg.arch, init_seed)
        self.opt = LambState.fresh(self.params.blocks())
        self.n = len(self.task.train_set)
        self.n_colloc = cfg.n_colloc or self.n
        self.run_colloc = None
        if cfg.colloc_mode == "per_run":
            self.run_colloc = CollocationBatch.uniform(_rng(cfg.seed, self.stream, _COLLOC, 0), self.n_colloc)

    def epoch(self, e):
        cfg, train = self.cfg, self.task.train_set
        perm = _rng(cfg.seed, self.stream, _SHUFFLE, e).permutation(self.n)
        groups = [perm[i:i + cfg.batch_size] for i in range(0, self.n, cfg.batch_size)]
        crng = _rng(cfg.seed, self.stream, _COLLOC, e)
        if cfg.colloc_mode == "per_epoch":
            colloc = CollocationBatch.uniform(crng, self.n_colloc)
        elif cfg.colloc_mode == "per_run":
            colloc = self.run_colloc
        parts = np.array_split(np.arange(self.n_colloc), len(groups))
        sums = np.zeros(3)
        blocks = self.params.blocks()
        for idx, cidx in zip(groups, parts):
            if cfg.colloc_mode == "per_batch":
                cb = CollocationBatch.uniform(crng, len(cidx))
            else:
                cb = CollocationBatch(colloc.d[cidx], colloc.t[cidx])
            params = netcore.NetworkParams.from_blocks(cfg.arch, blocks)
            l_nn, l_pde, total, grads = netcore.loss_and_grad_blocks(params, self.task, train.take(idx), cb)
            self.opt, blocks = lamb_step(self.opt, blocks, grads, cfg.lamb)
            sums += (l_nn, l_pde, total)
        self.params = netcore.NetworkParams.from_blocks(cfg.arch, blocks)
        return sums / len(groups)


def _audit_transfer(snapshot, i, task, out):
    """Re-check the invariants of one transfer decision."""
    installed = netcore.evaluate_loss(out.params, task, task.train_set, out.eval_colloc)[2]
    return {
        "task": i,
        "installed_is_min": installed == min(out.pre_loss, out.post_loss),
        "output_layer_kept": all(np.array_equal(a, b) for a, b in
                                 zip(out.params.layers[-1], snapshot[i].layers[-1])),
    }


def run(config, test_set=None, audit=False):
    """Train all tasks for ``config.epochs`` epochs and score the main task.

    With ``audit=True`` every transfer decision is re-verified and the checks
    are stored on ``RunRecord.audit``.
    """
    cfg = config
    start = time.perf_counter()
    runners = [_TaskRunner(cfg, i) for i in range(len(cfg.tasks))]
    n_task = len(runners)
    series = np.full((n_task, cfg.epochs, 3), np.nan)
    triggers = []
    tstates = [TriggerState() for _ in runners]
    mto_cfg = MtoConfig(cfg.alpha_init, cfg.alpha_epochs, cfg.batch_size, cfg.n_colloc, cfg.alpha_lamb)
    record = RunRecord(cfg.seed, [], [], [], triggers, [])

    try:
        for e in range(1, cfg.epochs + 1):
            for i, r in enumerate(runners):
                try:
                    series[i, e - 1] = r.epoch(e)
                except DivergenceError as exc:
                    raise DivergenceError(str(exc), epoch=e, task=r.task.name) from None
                if not np.isfinite(series[i, e - 1]).all():
                    raise DivergenceError("non-finite epoch loss", epoch=e, task=r.task.name)
            # epoch barrier
            fired = []
            for i, r in enumerate(runners):
                tstates[i], fire = observe_epoch(tstates[i], cfg.trigger, e, series[i, e - 1, 2])
                if fire and n_task > 1:
                    fired.append(i)
            if not fired:
                continue
            snapshot = [r.params for r in runners]
            for i in fired:
                r = runners[i]
                out = run_mto(snapshot, i, r.task, mto_cfg, seed_key=(cfg.seed, r.stream, _MTO, e))
                if audit:
                    record.audit.append(_audit_transfer(snapshot, i, r.task, out))
                r.params = out.params
                tstates[i] = after_transfer(tstates[i], out.installed_loss)
                triggers.append(TriggerEvent(i, e, out.pre_loss, out.post_loss, out.accepted,
                                             out.learned_alpha, out.note))
            if audit:
                for j in range(n_task):
                    if j not in fired:
                        record.audit.append({"task": j, "epoch": e, "unchanged":
                                             runners[j].params == snapshot[j]})
    except DivergenceError as exc:
        record.status = "diverged"
        record.diagnostic = str(exc)

    for i, r in enumerate(runners):
        record.loss_nn.append(series[i, :, 0])
        record.loss_pde.append(series[i, :, 1])
        record.loss_total.append(series[i, :, 2])
        record.params.append(r.params)
    if record.status == "ok":
        main = runners[cfg.main]
        record.train_loss = full_training_loss(main.params, main.task, main.n_colloc,
                                               (cfg.seed, main.stream, _MTO, 0))
        if test_set is not None:
            record.test_mape, record.test_loss_nn = evaluate(main.params, main.task, test_set)
    record.wall_clock = time.perf_counter() - start
    return record
