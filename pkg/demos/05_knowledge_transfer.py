# %% [markdown]
# # Transferring hidden layers between tasks
#
# Two PINNs train side by side: density from set A (the main task) and speed
# from set B (the auxiliary).  When a task's loss stops improving by 1% for
# a window of epochs, its hidden layers are replaced by a learned blend of
# both tasks' hidden layers.  The blend is kept only when it lowers that
# task's training loss.

# %%
import numpy as np

from mtopinn.mto import TriggerPolicy, TriggerState, combine, init_alpha, observe_epoch
from mtopinn.netcore import Architecture, init_params

# %% [markdown]
# ## Blending layers

# %%
arch = Architecture(hidden_widths=(3, 3))
a, b = init_params(arch, 1), init_params(arch, 2)
for mode in ("identity", "0.5-0.5", "swap"):
    alpha = init_alpha(mode, n_task=2, n_layers=2, k=0)
    c = combine([a, b], alpha, k=0)
    print(f"{mode:9s} alpha rows {alpha.tolist()}  output layer kept: {c.layers[-1][0].tolist() == a.layers[-1][0].tolist()}")

# %% [markdown]
# ## When transfers fire

# %%
policy = TriggerPolicy("adaptive", window=5, improvement=0.01)
state = TriggerState()
losses = [1.0, 0.8, 0.7, 0.699, 0.698, 0.698, 0.697, 0.697, 0.5, 0.499]
for epoch, loss in enumerate(losses, start=1):
    state, fire = observe_epoch(state, policy, epoch, loss)
    print(f"epoch {epoch:2d} loss {loss:.3f} plateau {state.plateau_count} {'FIRE' if fire else ''}")

# %% [markdown]
# ## A short joint run

# %%
from mtopinn.harness import DataBundle
from mtopinn.trainer import TrainConfig, run

bundle = DataBundle.from_scenario(seed=1)
tasks = (bundle.task("density-A"), bundle.task("speed-B"))
cfg = TrainConfig(tasks, Architecture(hidden_widths=(20,) * 4), epochs=150, alpha_epochs=10,
                  trigger=TriggerPolicy("adaptive", window=10))
rec = run(cfg, bundle.test_set(), audit=True)
for ev in rec.triggers:
    print(f"{tasks[ev.task].name:9s} epoch {ev.epoch:3d}  pre {ev.pre_loss:.3e} post {ev.post_loss:.3e}  "
          f"{'accepted' if ev.accepted else 'rejected'}  alpha[:, 0]={np.round(ev.alpha[:, 0], 3).tolist()}")
print("every installed loss equals min(pre, post):", all(x.get("installed_is_min", True) for x in rec.audit))
print("main-task test MAPE", round(rec.test_mape, 4))
