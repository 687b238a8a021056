# %% [markdown]
# # Exact derivatives for the PDE loss
#
# The physics term needs du/dd and du/dt at collocation points, and training
# needs the gradient of that term with respect to every weight.  The network
# pushes the two input tangents through the forward pass, then a single
# reverse sweep yields all parameter gradients.  Here we check both against
# finite differences.

# %%
import numpy as np

from mtopinn import netcore
from mtopinn.netcore import Architecture, NetworkParams
from mtopinn.objective import CollocationBatch, LabeledBatch
from mtopinn.physics import GreenshieldsParams
from mtopinn.trainer import TaskSpec

arch = Architecture(hidden_widths=(16, 16))
params = netcore.init_params(arch, seed=0)
print(arch.widths, arch.n_params, "parameters")

# %% [markdown]
# ## Input derivatives

# %%
r = netcore.forward_with_input_grads(params, 0.3, 0.7)
h = 1e-5
fd_d = (netcore.forward(params, 0.3 + h, 0.7) - netcore.forward(params, 0.3 - h, 0.7)) / (2 * h)
fd_t = (netcore.forward(params, 0.3, 0.7 + h) - netcore.forward(params, 0.3, 0.7 - h)) / (2 * h)
print(f"u={r.u_hat:.6f}  du/dd={r.du_dd:.8f} (fd {fd_d:.8f})  du/dt={r.du_dt:.8f} (fd {fd_t:.8f})")

# %% [markdown]
# ## Parameter gradient of data MSE plus residual MSE

# %%
rng = np.random.default_rng(1)
data = LabeledBatch(*rng.uniform(0, 1, (3, 32)))
colloc = CollocationBatch(*rng.uniform(0, 1, (2, 32)))
task = TaskSpec("demo", "density", data, GreenshieldsParams(v_f=6.0, k_j=1.0))

loss, grad = netcore.grad_total_loss(params, task, data, colloc)
flat = params.flat()
worst = 0.0
for i in rng.choice(flat.size, 50, replace=False):
    up, dn = flat.copy(), flat.copy()
    up[i] += h
    dn[i] -= h
    fd = (netcore.evaluate_loss(NetworkParams.from_flat(arch, up), task, data, colloc)[2]
          - netcore.evaluate_loss(NetworkParams.from_flat(arch, dn), task, data, colloc)[2]) / (2 * h)
    worst = max(worst, abs(grad[i] - fd) / max(1e-8, abs(fd)))
print(f"loss {loss:.6f}; worst relative gradient error over 50 coordinates: {worst:.2e}")

# %% [markdown]
# ## Checkpoints are exact text

# %%
import tempfile
from pathlib import Path

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "net.ckpt"
    netcore.save_checkpoint(params, path)
    print(path.read_text().splitlines()[:8])
    print("round trip identical:", netcore.load_checkpoint(path) == params)
