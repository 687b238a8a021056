# %% [markdown]
# # Multi-seed comparisons, ablations and reports
#
# Every run writes loss curves, a trigger log, checkpoints and a run.json
# under one directory; tables are derived from those files, so they can be
# rebuilt later without retraining.  The budget below is tiny; the command
# line accepts the full settings.

# %%
import tempfile
from pathlib import Path

from mtopinn import harness
from mtopinn.harness import DataBundle, ExperimentPlan
from mtopinn.netcore import Architecture
from mtopinn.stats import welch_t_test

bundle = DataBundle.from_scenario(seed=1)
budget = {"epochs": 60, "arch": Architecture(hidden_widths=(10,) * 3), "alpha_epochs": 3,
          "trigger": {"window": 4}}
out = Path(tempfile.mkdtemp(prefix="mtopinn-demo-"))

# %% [markdown]
# ## Comparison table

# %%
results = harness.compare(bundle, "density-A", ("speed-B",), seeds=[1, 2, 3], overrides=budget, out_dir=out)
for r in results:
    print(f"{r.plan.name:28s} MAPE {r.row.mape_mean:.3f} ± {r.row.mape_std:.3f}  p vs PINN {r.row.p_mape:.3g}")

# %% [markdown]
# ## Ablations

# %%
base = ExperimentPlan("PINN+MTO", "density-A", "speed-B", seeds=[1, 2], overrides=budget)
cells, _ = harness.ablate("trigger_strategy", base, bundle, out)
for c in cells:
    print(f"{c.label:9s} triggers {c.trigger_mean:.1f}  loss {c.loss_mean:.3e}  best={c.best} co-winner={c.co_winner}")
rows = harness.sweep_window(base, bundle, windows=(2, 4, 8, 16), out_dir=out)
print("mean triggers by window:", [(r.window, r.trigger_mean) for r in rows])

# %% [markdown]
# ## Tables from stored runs

# %%
print([p.name for p in harness.report(out)])
print((out / "compare.csv").read_text().splitlines()[0])

# %% [markdown]
# ## The significance test on its own

# %%
print(welch_t_test([0.31, 0.29, 0.35, 0.30], [0.41, 0.38, 0.45, 0.40]))
