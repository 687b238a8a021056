"""Fully-connected tanh network with exact input and parameter derivatives.

The PDE loss depends on du/dd and du/dt, so its parameter gradient needs
mixed second derivatives.  We get them by pushing the two input tangent
directions through the forward pass alongside the values, then running an
ordinary reverse sweep over that augmented computation.

Rows are stacked as ``[labelled values; collocation values; d-tangents;
t-tangents]`` so every layer is a single matrix product.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .objective import CollocationBatch, LabeledBatch
from .physics import ResidualForm, residual, residual_partials

CHECKPOINT_MAGIC = "# mtopinn-checkpoint v1"


@dataclass(frozen=True)
class Architecture:
    input_dim: int = 2
    hidden_widths: tuple = (20,) * 8
    output_dim: int = 1
    hidden_activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigurationError("input_dim and output_dim must be >= 1")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ConfigurationError("hidden_widths must be a non-empty list of positive widths")
        if self.hidden_activation != "tanh" or self.output_activation != "linear":
            raise ConfigurationError("only tanh hidden / linear output layers are supported")

    @property
    def widths(self):
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @property
    def n_layers(self):
        return len(self.hidden_widths) + 1

    def layer_shapes(self):
        w = self.widths
        return [(w[i + 1], w[i]) for i in range(len(w) - 1)]

    @property
    def n_params(self):
        return sum(o * i + o for o, i in self.layer_shapes())


class NetworkParams:
    """Weights and biases per layer.  Arrays are read-only once constructed."""

    __slots__ = ("arch", "layers")

    def __init__(self, arch, layers):
        shapes = arch.layer_shapes()
        if len(layers) != len(shapes):
            raise ConfigurationError(f"expected {len(shapes)} layers, got {len(layers)}")
        frozen = []
        for (W, b), (fo, fi) in zip(layers, shapes):
            W = np.array(W, dtype=np.float64)
            b = np.array(b, dtype=np.float64).ravel()
            if W.shape != (fo, fi) or b.shape != (fo,):
                raise ConfigurationError(f"layer shape {W.shape}/{b.shape}, expected {(fo, fi)}/{(fo,)}")
            W.setflags(write=False)
            b.setflags(write=False)
            frozen.append((W, b))
        self.arch = arch
        self.layers = tuple(frozen)

    def blocks(self):
        out = []
        for W, b in self.layers:
            out += [W, b]
        return out

    @classmethod
    def from_blocks(cls, arch, blocks):
        return cls(arch, [(blocks[2 * i], blocks[2 * i + 1]) for i in range(len(blocks) // 2)])

    def flat(self):
        return flatten_blocks(self.blocks())

    @classmethod
    def from_flat(cls, arch, vec):
        return cls.from_blocks(arch, unflatten(arch, vec))

    def is_finite(self):
        return all(np.isfinite(a).all() for a in self.blocks())

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return self.arch == other.arch and all(
            np.array_equal(a, b) for a, b in zip(self.blocks(), other.blocks()))

    def __repr__(self):
        return f"NetworkParams(widths={self.arch.widths})"


@dataclass(frozen=True)
class ForwardResult:
    u_hat: object
    du_dd: object
    du_dt: object


def flatten_blocks(blocks):
    return np.concatenate([np.asarray(b).ravel() for b in blocks])


def unflatten(arch, vec):
    """Split a canonical flat vector into [W1, b1, W2, b2, ...] blocks."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size != arch.n_params:
        raise ConfigurationError(f"vector has {vec.size} entries, architecture needs {arch.n_params}")
    out, pos = [], 0
    for fo, fi in arch.layer_shapes():
        out.append(vec[pos:pos + fo * fi].reshape(fo, fi))
        pos += fo * fi
        out.append(vec[pos:pos + fo])
        pos += fo
    return out


def init_params(arch, seed):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fo, fi in arch.layer_shapes():
        lim = math.sqrt(6.0 / (fi + fo))
        layers.append((rng.uniform(-lim, lim, size=(fo, fi)), np.zeros(fo)))
    return NetworkParams(arch, layers)


def _as_inputs(d, t):
    d = np.asarray(d, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    scalar = d.ndim == 0 and t.ndim == 0
    d, t = np.broadcast_arrays(np.atleast_1d(d), np.atleast_1d(t))
    return np.column_stack([d.ravel(), t.ravel()]), scalar


def predict(params, X):
    """Network outputs for an (n, input_dim) array; returns shape (n, output_dim)."""
    H = np.asarray(X, dtype=np.float64)
    last = len(params.layers) - 1
    for j, (W, b) in enumerate(params.layers):
        H = H @ W.T + b
        if j < last:
            np.tanh(H, out=H)
    return H


def forward(params, d, t):
    """û(d, t).  Scalars in, float out; arrays in, flat array out."""
    X, scalar = _as_inputs(d, t)
    u = predict(params, X)[:, 0]
    return float(u[0]) if scalar else u


def _tangent_forward(layers, X):
    """Values plus d/dd and d/dt tangents; returns (u, du_dd, du_dt) arrays."""
    n = X.shape[0]
    H = np.vstack([X, np.tile([1.0, 0.0], (n, 1)), np.tile([0.0, 1.0], (n, 1))])
    last = len(layers) - 1
    for j, (W, b) in enumerate(layers):
        Z = H @ W.T
        Z[:n] += b
        if j < last:
            A = np.tanh(Z[:n])
            S = 1.0 - A * A
            Z[:n] = A
            Z[n:2 * n] *= S
            Z[2 * n:] *= S
        H = Z
    return H[:n, 0], H[n:2 * n, 0], H[2 * n:, 0]


def forward_with_input_grads(params, d, t):
    X, scalar = _as_inputs(d, t)
    u, ud, ut = _tangent_forward(params.layers, X)
    if scalar:
        return ForwardResult(float(u[0]), float(ud[0]), float(ut[0]))
    return ForwardResult(u, ud, ut)


def _task_physics(task):
    form = ResidualForm(task.residual_form)
    weights = getattr(task, "loss_weights", (1.0, 1.0))
    return form, task.greenshields, bool(task.pde_enabled), weights


def _loss_and_grads(layers, task, nn_batch, colloc_batch, need_grad=True):
    """Core kernel: (loss_nn, loss_pde, grad blocks or None)."""
    form, gp, pde_on, (w_nn, w_pde) = _task_physics(task)
    Xn = nn_batch.inputs
    n1 = Xn.shape[0]
    if n1 == 0:
        raise ValueError("labelled batch is empty")
    if pde_on and colloc_batch is not None and len(colloc_batch) > 0:
        Xc = colloc_batch.inputs
    else:
        Xc = np.empty((0, Xn.shape[1]))
    n2 = Xc.shape[0]
    nv = n1 + n2
    H = np.vstack([Xn, Xc, np.tile([1.0, 0.0], (n2, 1)), np.tile([0.0, 1.0], (n2, 1))])

    last = len(layers) - 1
    cache = []
    for j, (W, b) in enumerate(layers):
        Z = H @ W.T
        Z[:nv] += b
        if j < last:
            A = np.tanh(Z[:nv])
            S = 1.0 - A * A
            Zt = Z[nv:].copy()
            Z[:nv] = A
            Z[nv:nv + n2] *= S[n1:]
            Z[nv + n2:] *= S[n1:]
            cache.append((H, A, S, Zt))
        else:
            cache.append((H, None, None, None))
        H = Z

    u_nn = H[:n1, 0]
    err = u_nn - nn_batch.u
    with np.errstate(over="ignore", invalid="ignore"):
        l_nn = float(np.mean(err * err))
        if n2:
            u_c, ud, ut = H[n1:nv, 0], H[nv:nv + n2, 0], H[nv + n2:, 0]
            f = residual(form, u_c, ud, ut, gp)
            l_pde = float(np.mean(f * f))
        else:
            l_pde = 0.0
    if not (math.isfinite(l_nn) and math.isfinite(l_pde)):
        raise DivergenceError("non-finite loss")
    if not need_grad:
        return l_nn, l_pde, None

    G = np.zeros_like(H)
    G[:n1, 0] = w_nn * 2.0 * err / n1
    if n2:
        fbar = w_pde * 2.0 * f / n2
        pu, pud, put = residual_partials(form, u_c, ud, ut, gp)
        G[n1:nv, 0] = fbar * pu
        G[nv:nv + n2, 0] = fbar * pud
        G[nv + n2:, 0] = fbar * put

    grads = [None] * (2 * len(layers))
    for j in range(last, -1, -1):
        W, _ = layers[j]
        Hin, A, S, Zt = cache[j]
        if j < last:
            # G holds adjoints of this layer's outputs; map them back to Z.
            Gv = G[:nv]
            Gt = G[nv:]
            Sc = S[n1:]
            dS = Gt[:n2] * Zt[:n2] + Gt[n2:] * Zt[n2:]
            Gt[:n2] *= Sc
            Gt[n2:] *= Sc
            Gv[n1:] -= 2.0 * A[n1:] * dS
            Gv *= S
        grads[2 * j] = G.T @ Hin
        grads[2 * j + 1] = G[:nv].sum(axis=0)
        if j > 0:
            G = G @ W
    return l_nn, l_pde, grads


def loss_and_grad_blocks(params, task, nn_batch, colloc_batch):
    """Like :func:`grad_total_loss` but returns (loss_nn, loss_pde, total, blocks)."""
    l_nn, l_pde, grads = _loss_and_grads(params.layers, task, nn_batch, colloc_batch)
    w = getattr(task, "loss_weights", (1.0, 1.0))
    total = w[0] * l_nn + w[1] * l_pde
    return l_nn, l_pde, total, grads


def grad_total_loss(params, task, nn_batch, colloc_batch):
    """Total loss (data MSE + residual MSE) and its exact flat parameter gradient."""
    _, _, total, grads = loss_and_grad_blocks(params, task, nn_batch, colloc_batch)
    return total, flatten_blocks(grads)


def evaluate_loss(params, task, nn_batch, colloc_batch):
    """(loss_nn, loss_pde, total) without the reverse sweep."""
    l_nn, l_pde, _ = _loss_and_grads(params.layers, task, nn_batch, colloc_batch, need_grad=False)
    w = getattr(task, "loss_weights", (1.0, 1.0))
    return l_nn, l_pde, w[0] * l_nn + w[1] * l_pde


def check_combinable(all_params, alpha=None):
    if not all_params:
        raise ConfigurationError("no task parameters supplied")
    ref = [W.shape for W, _ in all_params[0].layers[:-1]]
    for p in all_params[1:]:
        if [W.shape for W, _ in p.layers[:-1]] != ref:
            raise ConfigurationError("hidden layer shapes differ across tasks")
    if alpha is not None:
        alpha = np.asarray(alpha)
        if alpha.shape != (len(all_params), len(ref)):
            raise ConfigurationError(
                f"alpha has shape {alpha.shape}, expected {(len(all_params), len(ref))}")


def combine_layers(all_params, alpha, k):
    """Layer-wise linear blend of hidden layers; output layer copied from task k."""
    alpha = np.asarray(alpha, dtype=np.float64)
    layers = []
    for j in range(alpha.shape[1]):
        W = sum(alpha[i, j] * p.layers[j][0] for i, p in enumerate(all_params))
        b = sum(alpha[i, j] * p.layers[j][1] for i, p in enumerate(all_params))
        layers.append((W, b))
    layers.append(all_params[k].layers[-1])
    return layers


def grad_alpha_loss(all_params, alpha, k, task, nn_batch, colloc_batch):
    """Task-k loss at the blended parameters and its gradient w.r.t. alpha.

    d loss / d alpha[i, j] is the inner product of the layer-j parameter
    gradient with task i's layer-j parameters (weights and bias together).
    """
    check_combinable(all_params, alpha)
    alpha = np.asarray(alpha, dtype=np.float64)
    layers = combine_layers(all_params, alpha, k)
    l_nn, l_pde, grads = _loss_and_grads(layers, task, nn_batch, colloc_batch)
    w = getattr(task, "loss_weights", (1.0, 1.0))
    g_alpha = np.empty_like(alpha)
    for j in range(alpha.shape[1]):
        gW, gb = grads[2 * j], grads[2 * j + 1]
        for i, p in enumerate(all_params):
            W, b = p.layers[j]
            g_alpha[i, j] = np.vdot(gW, W) + np.vdot(gb, b)
    return w[0] * l_nn + w[1] * l_pde, g_alpha


def save_checkpoint(params, path):
    """Text checkpoint: architecture header then one parameter per line (%.17g)."""
    a = params.arch
    lines = [
        CHECKPOINT_MAGIC,
        f"input_dim {a.input_dim}",
        f"hidden_widths {' '.join(str(w) for w in a.hidden_widths)}",
        f"output_dim {a.output_dim}",
        f"hidden_activation {a.hidden_activation}",
        f"output_activation {a.output_activation}",
        f"n_params {a.n_params}",
    ]
    lines += [format(x, ".17g") for x in params.flat()]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ConfigurationError(f"{path}: not a checkpoint file")
    head = dict(line.split(" ", 1) for line in lines[1:7])
    arch = Architecture(
        input_dim=int(head["input_dim"]),
        hidden_widths=tuple(int(w) for w in head["hidden_widths"].split()),
        output_dim=int(head["output_dim"]),
        hidden_activation=head["hidden_activation"],
        output_activation=head["output_activation"],
    )
    n = int(head["n_params"])
    vec = np.array([float(x) for x in lines[7:7 + n]])
    if vec.size != n:
        raise ConfigurationError(f"{path}: truncated parameter list")
    return NetworkParams.from_flat(arch, vec)
