# %% [markdown]
# # Sparse sensors: plain network vs physics-informed network
#
# Both models see only set A (six sensors near the upstream end) and are
# scored on the dense test grid.  The physics term lets the PINN carry the
# upstream observations across the rest of the road.  The budget here is
# small so the script finishes in a few minutes; the acceptance suite runs
# the full comparison.

# %%
from mtopinn.harness import DataBundle, ExperimentPlan, run_plan
from mtopinn.netcore import Architecture

bundle = DataBundle.from_scenario(seed=1)
overrides = {"epochs": 300, "arch": Architecture(hidden_widths=(20,) * 4)}

# %%
for method in ("NN", "PINN"):
    res = run_plan(ExperimentPlan(method, "density-A", seeds=[1], overrides=overrides), bundle)
    s = res.summaries[0]
    print(f"{method:5s} train loss {s['train_loss']:.3e}  test MAPE {s['test_mape']:.3f}  "
          f"({s['wall_clock']:.0f}s)")

# %% [markdown]
# The same thing through the lower-level trainer, watching the two loss terms.

# %%
from mtopinn.trainer import TrainConfig, run

task = bundle.task("density-A")
rec = run(TrainConfig((task,), overrides["arch"], epochs=100), bundle.test_set())
for e in (0, 9, 49, 99):
    print(f"epoch {e + 1:4d}  data {rec.loss_nn[0][e]:.3e}  residual {rec.loss_pde[0][e]:.3e}")
print("test MAPE", round(rec.test_mape, 4))
