# %% [markdown]
# # LAMB: Adam with a per-block trust ratio
#
# Each weight matrix and bias vector is rescaled so that its step is
# lr * ||w||, whatever the raw Adam direction's magnitude.

# %%
import numpy as np

from mtopinn.optim import LambHyper, LambState, lamb_step, reset

h = LambHyper(lr=1e-3)
state, (w,) = lamb_step(LambState(), [np.array([1.0])], [np.array([0.5])], h)
print("first moment", state.m[0], "second moment", state.v[0], "new weight", w)

# %% [markdown]
# Two blocks with very different gradient scales take steps of the same
# relative size.

# %%
blocks = [np.full(4, 2.0), np.full(3, 0.01)]
grads = [np.full(4, 100.0), np.full(3, 1e-4)]
_, new = lamb_step(LambState(), blocks, grads, h)
for old, nw in zip(blocks, new):
    print(f"relative step {np.linalg.norm(nw - old) / np.linalg.norm(old):.4g}")

# %% [markdown]
# ## A convex bowl

# %%
target = np.array([3.0, -1.0])
w = np.zeros(2)
state = LambState()
for step in range(1, 3001):
    state, (w,) = lamb_step(state, [w], [2 * (w - target)], LambHyper(lr=1e-2))
    if step in (1, 10, 100, 1000, 3000):
        print(f"step {step:5d}  w={w}  distance {np.linalg.norm(w - target):.3g}")

print("after reset:", reset(state).step_count, "steps,", float(np.abs(reset(state).m[0]).sum()), "moment mass")
