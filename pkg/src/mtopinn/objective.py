"""Loss terms and evaluation metrics for PINN training."""
import numpy as np

from .errors import UndefinedMetricError


def _pair(preds, truths):
    preds = np.asarray(preds, dtype=np.float64).ravel()
    truths = np.asarray(truths, dtype=np.float64).ravel()
    if preds.shape != truths.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions vs {truths.size} targets")
    if preds.size == 0:
        raise ValueError("empty prediction list")
    return preds, truths


def loss_nn(preds, truths):
    """Mean squared error between network outputs and observations."""
    preds, truths = _pair(preds, truths)
    return float(np.mean((preds - truths) ** 2))


def loss_pde(residuals, enabled=True):
    """Mean squared PDE residual; 0 when the physics term is switched off."""
    residuals = np.asarray(residuals, dtype=np.float64).ravel()
    if not enabled:
        return 0.0
    if residuals.size == 0:
        raise ValueError("loss_pde needs at least one residual when the PDE term is enabled")
    return float(np.mean(residuals ** 2))


def total_loss(nn, pde, weights=(1.0, 1.0)):
    return weights[0] * nn + weights[1] * pde


def mape(preds, truths, floor=1e-3):
    """Mean absolute percentage error as a fraction.

    Samples whose target magnitude is below ``floor`` are skipped.
    """
    if not floor > 0:
        raise ValueError("floor must be positive")
    preds, truths = _pair(preds, truths)
    keep = np.abs(truths) >= floor
    if not keep.any():
        raise UndefinedMetricError(f"all {truths.size} targets are below the MAPE floor {floor}")
    return float(np.mean(np.abs(preds[keep] - truths[keep]) / np.abs(truths[keep])))


class LabeledBatch:
    """Observed samples (d, t, u) stored as parallel float64 arrays."""

    __slots__ = ("d", "t", "u")

    def __init__(self, d, t, u):
        d = np.asarray(d, dtype=np.float64).ravel()
        t = np.asarray(t, dtype=np.float64).ravel()
        u = np.asarray(u, dtype=np.float64).ravel()
        if not (d.shape == t.shape == u.shape):
            raise ValueError("d, t and u must have equal lengths")
        self.d, self.t, self.u = d, t, u

    def __len__(self):
        return self.d.size

    def __eq__(self, other):
        if not isinstance(other, LabeledBatch):
            return NotImplemented
        return (np.array_equal(self.d, other.d) and np.array_equal(self.t, other.t)
                and np.array_equal(self.u, other.u))

    def __repr__(self):
        return f"LabeledBatch(n={len(self)})"

    @property
    def inputs(self):
        return np.column_stack([self.d, self.t])

    def take(self, idx):
        return LabeledBatch(self.d[idx], self.t[idx], self.u[idx])

    @classmethod
    def concat(cls, batches):
        return cls(np.concatenate([b.d for b in batches]),
                   np.concatenate([b.t for b in batches]),
                   np.concatenate([b.u for b in batches]))


class CollocationBatch:
    """Unlabelled (d, t) points where only the PDE residual is penalised."""

    __slots__ = ("d", "t")

    def __init__(self, d, t):
        d = np.asarray(d, dtype=np.float64).ravel()
        t = np.asarray(t, dtype=np.float64).ravel()
        if d.shape != t.shape:
            raise ValueError("d and t must have equal lengths")
        self.d, self.t = d, t

    def __len__(self):
        return self.d.size

    def __repr__(self):
        return f"CollocationBatch(n={len(self)})"

    @property
    def inputs(self):
        return np.column_stack([self.d, self.t])

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0))

    @classmethod
    def uniform(cls, rng, n, d_range=(0.0, 1.0), t_range=(0.0, 1.0)):
        return cls(rng.uniform(*d_range, size=n), rng.uniform(*t_range, size=n))
