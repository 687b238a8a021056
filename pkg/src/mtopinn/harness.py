"""Multi-seed experiment plans, comparison/ablation tables and run artefacts.

A plan trains one method (NN, PINN or PINN+MTO) over a list of seeds.  Every
run writes its loss curves, trigger log, checkpoint and a ``run.json``; all
tables are recomputed from those ``run.json`` files, so ``report`` can
rebuild any table without retraining.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import csv
import json
import logging
import math
import os
from pathlib import Path

import numpy as np

from . import dataflow, netcore
from .errors import ConfigurationError
from .mto import ALPHA_INIT_MODES, TriggerPolicy
from .optim import LambHyper
from .stats import welch_t_test
from .trainer import TaskSpec, TrainConfig, run

log = logging.getLogger(__name__)

METHODS = ("NN", "PINN", "PINN+MTO")
TASK_NAMES = ("density-A", "density-B", "speed-A", "speed-B")
DEFAULT_SEEDS = tuple(range(1, 11))
DEFAULT_WINDOWS = tuple(range(10, 121, 10))

SET_FILES = {
    "density-A": "density_A.csv",
    "speed-A": "speed_A.csv",
    "density-B": "density_B.csv",
    "speed-B": "speed_B.csv",
}
TEST_FILE = "test_density.csv"
FIELD_FILE = "field.csv"


@dataclass(frozen=True, eq=False)
class DataBundle:
    """Physical-unit training sets and test grid plus the road metadata."""
    D: float
    T: float
    p: object
    sets: dict
    test: object

    @classmethod
    def from_field(cls, fld):
        dA, sA = dataflow.sample_sensors(fld, dataflow.set_a_layout(fld))
        dB, sB = dataflow.sample_sensors(fld, dataflow.set_b_layout(fld))
        sets = {"density-A": dA, "speed-A": sA, "density-B": dB, "speed-B": sB}
        return cls(fld.D, fld.T, fld.p, sets, dataflow.make_test_grid(fld))

    @classmethod
    def from_scenario(cls, seed=1, config=None):
        return cls.from_field(dataflow.rush_hour_scenario(seed, config))

    def save(self, out_dir, fld=None):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if fld is not None:
            dataflow.save_field(fld, out / FIELD_FILE)
        for name, fname in SET_FILES.items():
            dataflow.save_csv(self.sets[name], out / fname)
        dataflow.save_csv(self.test, out / TEST_FILE)

    @classmethod
    def load(cls, data_dir):
        d = Path(data_dir)
        fld = dataflow.load_field(d / FIELD_FILE)
        sets = {name: dataflow.load_csv(d / fname) for name, fname in SET_FILES.items() if (d / fname).exists()}
        return cls(fld.D, fld.T, fld.p, sets, dataflow.load_csv(d / TEST_FILE))

    def _normalizer(self, target):
        scale = self.p.k_j if target == "density" else self.D / self.T
        return dataflow.Normalizer(d=(0.0, self.D), t=(0.0, self.T), u=(0.0, scale))

    @property
    def greenshields(self):
        return dataflow.normalized_greenshields(self)

    def task(self, name, pde_enabled=True):
        if name not in self.sets:
            raise ConfigurationError(f"no training set named {name!r}; have {sorted(self.sets)}")
        target = name.split("-")[0]
        return TaskSpec(name=name, target=target, train_set=self._normalizer(target).apply(self.sets[name]),
                        greenshields=self.greenshields, pde_enabled=pde_enabled)

    def test_set(self):
        return self._normalizer("density").apply(self.test)


@dataclass(frozen=True)
class ExperimentPlan:
    method: str
    main: str = "density-A"
    auxiliary: str = None
    seeds: tuple = DEFAULT_SEEDS
    overrides: dict = field(default_factory=dict)
    label: str = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}")
        if self.method == "PINN+MTO" and not self.auxiliary:
            raise ConfigurationError("PINN+MTO needs exactly one auxiliary task")
        if self.method != "PINN+MTO" and self.auxiliary:
            raise ConfigurationError(f"{self.method} takes no auxiliary task")
        if not self.main.startswith("density"):
            raise ConfigurationError("the main task must be a density task")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigurationError("plan has no seeds")
        bad = set(self.overrides) - set(TrainConfig.__dataclass_fields__) - {"lr", "alpha_lr"}
        if bad:
            raise ConfigurationError(f"unknown TrainConfig overrides: {sorted(bad)}")

    @property
    def name(self):
        if self.label:
            return self.label
        aux = f"+{self.auxiliary}" if self.auxiliary else ""
        return f"{self.method}_{self.main}{aux}".replace("+", "_")


def make_config(plan, bundle, seed):
    tasks = [bundle.task(plan.main, pde_enabled=plan.method != "NN")]
    if plan.auxiliary:
        tasks.append(bundle.task(plan.auxiliary))
    ov = dict(plan.overrides)
    if "lr" in ov:
        ov["lamb"] = LambHyper(lr=float(ov.pop("lr")))
    if "alpha_lr" in ov:
        ov["alpha_lamb"] = LambHyper(lr=float(ov.pop("alpha_lr")))
    if isinstance(ov.get("trigger"), dict):
        ov["trigger"] = TriggerPolicy(**ov["trigger"])
    if isinstance(ov.get("arch"), dict):
        ov["arch"] = netcore.Architecture(**ov["arch"])
    return TrainConfig(tasks=tasks, seed=seed, **ov)


# ----------------------------------------------------------------- artefacts

def _fmt(x):
    return format(float(x), ".17g")


def write_loss_curves(record, cfg, run_dir):
    """One CSV per task: epoch, loss_nn, loss_pde, total, triggered, accepted."""
    run_dir = Path(run_dir)
    for i, task in enumerate(cfg.tasks):
        fired = {e.epoch: e for e in record.triggers if e.task == i}
        with open(run_dir / f"loss_{i}_{task.name}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss_nn", "loss_pde", "total", "triggered", "accepted"])
            for e in range(cfg.epochs):
                ev = fired.get(e + 1)
                w.writerow([e + 1, _fmt(record.loss_nn[i][e]), _fmt(record.loss_pde[i][e]),
                            _fmt(record.loss_total[i][e]), int(ev is not None), int(bool(ev and ev.accepted))])


def write_trigger_log(record, cfg, run_dir, run_id):
    n_alpha = cfg.arch.n_layers - 1
    names = [f"alpha_{i}_{j}" for i in range(len(cfg.tasks)) for j in range(n_alpha)]
    with open(Path(run_dir) / "triggers.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "task", "epoch", "pre_loss", "post_loss", "accepted", *names])
        for ev in record.triggers:
            w.writerow([run_id, cfg.tasks[ev.task].name, ev.epoch, _fmt(ev.pre_loss), _fmt(ev.post_loss),
                        int(ev.accepted), *[_fmt(a) for a in np.asarray(ev.alpha).ravel()]])


def run_summary(record, cfg):
    n_trig = [record.trigger_count(i) for i in range(len(cfg.tasks))]
    n_acc = [sum(1 for e in record.triggers if e.task == i and e.accepted) for i in range(len(cfg.tasks))]
    return {
        "seed": record.seed,
        "status": record.status,
        "diagnostic": record.diagnostic,
        "tasks": [t.name for t in cfg.tasks],
        "epochs": cfg.epochs,
        "train_loss": record.train_loss,
        "final_epoch_loss": float(record.loss_total[cfg.main][-1]),
        "test_mape": record.test_mape,
        "test_loss_nn": record.test_loss_nn,
        "trigger_counts": n_trig,
        "accepted_counts": n_acc,
        "acceptance_rate": (n_acc[cfg.main] / n_trig[cfg.main]) if n_trig[cfg.main] else None,
        "wall_clock": record.wall_clock,
    }


def _run_one(args):
    plan, bundle, seed, out_dir, audit = args
    cfg = make_config(plan, bundle, seed)
    record = run(cfg, bundle.test_set(), audit=audit)
    summary = run_summary(record, cfg)
    if audit:
        summary["audit_failures"] = sum(1 for a in record.audit if not all(
            v for k, v in a.items() if isinstance(v, bool)))
    if out_dir is not None:
        run_dir = Path(out_dir) / plan.name / f"seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        write_loss_curves(record, cfg, run_dir)
        write_trigger_log(record, cfg, run_dir, f"{plan.name}/seed{seed}")
        for i, t in enumerate(cfg.tasks):
            netcore.save_checkpoint(record.params[i], run_dir / f"params_{i}_{t.name}.ckpt")
        with open(run_dir / "run.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
    return record, summary


# ------------------------------------------------------------ aggregation

@dataclass
class SummaryRow:
    method: str
    main: str
    auxiliary: str
    n_runs: int
    n_failed: int
    loss_mean: float
    loss_std: float
    mape_mean: float
    mape_std: float
    trigger_mean: float
    single_sample: bool = False
    baseline: str = ""
    p_loss: float = math.nan
    p_mape: float = math.nan
    better_loss: bool = False
    better_mape: bool = False


def _mean_std(xs):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        return math.nan, math.nan
    if xs.size == 1:
        return float(xs[0]), 0.0
    return float(xs.mean()), float(xs.std(ddof=1))


def summarize(plan, summaries):
    ok = [s for s in summaries if s["status"] == "ok"]
    for s in summaries:
        if s["status"] != "ok":
            log.warning("%s seed %s excluded: %s", plan.name, s["seed"], s["diagnostic"])
    lm, ls = _mean_std([s["train_loss"] for s in ok])
    mm, ms = _mean_std([s["test_mape"] for s in ok])
    tm = float(np.mean([s["trigger_counts"][0] for s in ok])) if ok else math.nan
    return SummaryRow(plan.method, plan.main, plan.auxiliary or "", len(ok), len(summaries) - len(ok),
                      lm, ls, mm, ms, tm, single_sample=len(ok) == 1)


@dataclass
class PlanResult:
    plan: ExperimentPlan
    records: list
    summaries: list
    row: SummaryRow

    def values(self, key):
        return [s[key] for s in self.summaries if s["status"] == "ok"]


def run_plan(plan, bundle, out_dir=None, workers=1, audit=False):
    """Train ``plan`` once per seed and aggregate.

    ``audit`` re-verifies every transfer decision; the number of failed checks
    lands in each summary under ``audit_failures``.
    """
    jobs = [(plan, bundle, seed, out_dir, audit) for seed in plan.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    records = [r for r, _ in results]
    summaries = [s for _, s in results]
    return PlanResult(plan, records, summaries, summarize(plan, summaries))


def load_plan_summaries(run_root, plan_name):
    base = Path(run_root) / plan_name
    out = []
    for p in sorted(base.glob("seed*/run.json"), key=lambda x: int(x.parent.name[4:])):
        with open(p, encoding="utf-8") as fh:
            out.append(json.load(fh))
    return out


def significance(xs, ys):
    """Welch p-value of xs vs ys and whether xs is significantly lower."""
    if len(xs) < 2 or len(ys) < 2:
        return math.nan, False
    res = welch_t_test(xs, ys)
    return res.p, bool(res.significant and np.mean(xs) < np.mean(ys))


def mark_against(row, result, baseline):
    row.baseline = baseline.plan.name
    row.p_loss, row.better_loss = significance(result.values("train_loss"), baseline.values("train_loss"))
    row.p_mape, row.better_mape = significance(result.values("test_mape"), baseline.values("test_mape"))
    return row


ROW_FIELDS = list(SummaryRow.__dataclass_fields__)


def write_rows(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in rows:
            vals = asdict(r)
            w.writerow([_cell(vals[k]) for k in ROW_FIELDS])


def _cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return _fmt(v)
    return v


# ------------------------------------------------------------ experiments

def compare(bundle, main="density-A", auxiliaries=("speed-B",), seeds=DEFAULT_SEEDS, overrides=None,
            out_dir=None, workers=1, audit=False):
    """NN / PINN / PINN+MTO rows; MTO rows are tested against the PINN row."""
    overrides = overrides or {}
    results = [run_plan(ExperimentPlan("NN", main, None, seeds, overrides), bundle, out_dir, workers, audit),
               run_plan(ExperimentPlan("PINN", main, None, seeds, overrides), bundle, out_dir, workers, audit)]
    pinn = results[1]
    mark_against(results[0].row, results[0], pinn)
    for aux in auxiliaries:
        res = run_plan(ExperimentPlan("PINN+MTO", main, aux, seeds, overrides), bundle, out_dir, workers, audit)
        mark_against(res.row, res, pinn)
        results.append(res)
    if out_dir is not None:
        write_rows([r.row for r in results], Path(out_dir) / "compare.csv")
    return results


@dataclass
class AblationCell:
    label: str
    loss_mean: float
    loss_std: float
    mape_mean: float
    mape_std: float
    trigger_mean: float
    p_vs_best: float
    best: bool
    co_winner: bool


def _rank_cells(labels, results):
    """Best = lowest mean loss; co-winners are not significantly worse than it."""
    means = [r.row.loss_mean for r in results]
    ib = int(np.nanargmin(means))
    best_losses = results[ib].values("train_loss")
    cells = []
    for i, (lab, r) in enumerate(zip(labels, results)):
        if i == ib:
            p, co = math.nan, False
        else:
            xs = r.values("train_loss")
            if len(xs) < 2 or len(best_losses) < 2:
                p, co = math.nan, False
            else:
                res = welch_t_test(best_losses, xs)
                p, co = res.p, not res.significant
        cells.append(AblationCell(lab, r.row.loss_mean, r.row.loss_std, r.row.mape_mean, r.row.mape_std,
                                  r.row.trigger_mean, p, i == ib, co))
    return cells


def write_cells(cells, path):
    names = list(AblationCell.__dataclass_fields__)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for c in cells:
            vals = asdict(c)
            w.writerow([_cell(vals[k]) for k in names])


def _mto_base(base):
    if base.method != "PINN+MTO":
        raise ConfigurationError("ablations need a PINN+MTO base plan")


def ablate(kind, base, bundle, out_dir=None, workers=1, audit=False):
    """Trigger-strategy (fixed vs adaptive) or alpha-init (five modes) comparison."""
    _mto_base(base)
    trig = base.overrides.get("trigger")
    if isinstance(trig, dict):
        trig = TriggerPolicy(**trig)
    window = (trig or TriggerPolicy()).window
    if kind == "trigger_strategy":
        labels = ["fixed", "adaptive"]
        variants = [TriggerPolicy("fixed", window=window, period=window), TriggerPolicy("adaptive", window=window)]
        plans = [replace(base, overrides={**base.overrides, "trigger": v},
                         label=f"{base.name}__trigger_{lab}") for lab, v in zip(labels, variants)]
    elif kind == "alpha_init":
        labels = list(ALPHA_INIT_MODES)
        plans = [replace(base, overrides={**base.overrides, "alpha_init": m},
                         label=f"{base.name}__alpha_{m}") for m in labels]
    else:
        raise ConfigurationError(f"unknown ablation kind {kind!r}")
    results = [run_plan(p, bundle, out_dir, workers, audit) for p in plans]
    cells = _rank_cells(labels, results)
    if out_dir is not None:
        write_cells(cells, Path(out_dir) / f"ablate_{kind}.csv")
    return cells, results


@dataclass
class SweepRow:
    window: int
    trigger_mean: float
    trigger_counts: list
    loss_mean: float
    loss_std: float
    losses: list


def sweep_window(base, bundle, windows=DEFAULT_WINDOWS, out_dir=None, workers=1, audit=False):
    """Adaptive trigger window sweep: trigger counts and loss spread per S."""
    _mto_base(base)
    rows = []
    for s in windows:
        trig = TriggerPolicy("adaptive", window=int(s))
        plan = replace(base, overrides={**base.overrides, "trigger": trig}, label=f"{base.name}__S{s}")
        res = run_plan(plan, bundle, out_dir, workers, audit)
        counts = [x["trigger_counts"][0] for x in res.summaries if x["status"] == "ok"]
        losses = res.values("train_loss")
        rows.append(SweepRow(int(s), float(np.mean(counts)) if counts else math.nan, counts,
                             *_mean_std(losses), losses))
    if out_dir is not None:
        write_sweep(rows, Path(out_dir) / "sweep_window.csv")
    return rows


def write_sweep(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "trigger_mean", "trigger_counts", "loss_mean", "loss_std", "losses"])
        for r in rows:
            w.writerow([r.window, _fmt(r.trigger_mean), " ".join(str(c) for c in r.trigger_counts),
                        _fmt(r.loss_mean), _fmt(r.loss_std), " ".join(_fmt(x) for x in r.losses)])


def non_increasing(values):
    return all(b <= a for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------- reports

class _StoredResult:
    """Enough of a PlanResult to rebuild tables from ``run.json`` files."""

    def __init__(self, plan, summaries):
        self.plan = plan
        self.summaries = summaries
        self.row = summarize(plan, summaries)

    def values(self, key):
        return [s[key] for s in self.summaries if s["status"] == "ok"]


def _plan_from_dir(name, summaries):
    tasks = summaries[0]["tasks"]
    if name.startswith("NN_"):
        method = "NN"
    elif len(tasks) > 1:
        method = "PINN+MTO"
    else:
        method = "PINN"
    return ExperimentPlan(method, tasks[0], tasks[1] if len(tasks) > 1 else None,
                          tuple(s["seed"] for s in summaries), label=name)


def report(run_root):
    """Recompute every table under ``run_root`` from the stored run summaries."""
    root = Path(run_root)
    stored = {}
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        sums = load_plan_summaries(root, d.name)
        if sums:
            stored[d.name] = _StoredResult(_plan_from_dir(d.name, sums), sums)
    written = []

    plain = {k: v for k, v in stored.items() if "__" not in k}
    pinn = next((v for k, v in plain.items() if k.startswith("PINN_") and v.plan.method == "PINN"), None)
    if plain:
        rows = []
        for k in sorted(plain, key=lambda k: (METHODS.index(plain[k].plan.method), k)):
            r = plain[k]
            if pinn is not None and r is not pinn:
                mark_against(r.row, r, pinn)
            rows.append(r.row)
        write_rows(rows, root / "compare.csv")
        written.append(root / "compare.csv")

    groups = {}
    for k, v in stored.items():
        if "__" in k:
            base, variant = k.split("__", 1)
            groups.setdefault((base, variant.split("_")[0] if not variant.startswith("S") else "S"), []).append((variant, v))
    for (base, kind), items in sorted(groups.items()):
        if kind == "trigger":
            order = ["trigger_fixed", "trigger_adaptive"]
            fname = "ablate_trigger_strategy.csv"
        elif kind == "alpha":
            order = [f"alpha_{m}" for m in ALPHA_INIT_MODES]
            fname = "ablate_alpha_init.csv"
        else:
            items.sort(key=lambda it: int(it[0][1:]))
            rows = []
            for variant, v in items:
                counts = [s["trigger_counts"][0] for s in v.summaries if s["status"] == "ok"]
                losses = v.values("train_loss")
                rows.append(SweepRow(int(variant[1:]), float(np.mean(counts)), counts, *_mean_std(losses), losses))
            write_sweep(rows, root / "sweep_window.csv")
            written.append(root / "sweep_window.csv")
            continue
        lookup = dict(items)
        present = [o for o in order if o in lookup]
        cells = _rank_cells([o.split("_", 1)[1] for o in present], [lookup[o] for o in present])
        write_cells(cells, root / fname)
        written.append(root / fname)
    return written


def default_workers():
    return max(1, min(len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else 1, 10))
