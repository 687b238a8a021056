"""Greenshields fundamental diagram and the LWR residuals for density/speed targets.

All functions broadcast over numpy arrays as well as plain floats.
"""
from dataclasses import dataclass
from enum import Enum
import math

from .errors import ConfigurationError


class ResidualForm(str, Enum):
    DENSITY = "density"
    SPEED = "speed"


@dataclass(frozen=True)
class GreenshieldsParams:
    v_f: float = 1.0
    k_j: float = 1.0

    def __post_init__(self):
        for name in ("v_f", "k_j"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ConfigurationError(f"{name} must be positive and finite, got {val}")

    @property
    def capacity(self):
        return self.v_f * self.k_j / 4.0


def greenshields_speed(k, p):
    return p.v_f * (1.0 - k / p.k_j)


def greenshields_flow(k, p):
    return k * greenshields_speed(k, p)


def residual_density(k, dk_dd, dk_dt, p):
    """f(d, t, k) = v_f k_d - 2 (v_f/k_j) k_d k + k_t."""
    return p.v_f * dk_dd - 2.0 * (p.v_f / p.k_j) * dk_dd * k + dk_dt


def residual_speed(v, dv_dd, dv_dt, p):
    """f(d, t, v) = k_j v_d - 2 (k_j/v_f) v_d v - (k_j/v_f) v_t."""
    r = p.k_j / p.v_f
    return p.k_j * dv_dd - 2.0 * r * dv_dd * v - r * dv_dt


def residual_partials(form, u, du_dd, du_dt, p):
    """Partial derivatives of the residual w.r.t. (u, u_d, u_t).

    Used by the network's reverse pass; the residuals are bilinear in the
    state and its derivatives so these are exact.
    """
    form = ResidualForm(form)
    if form is ResidualForm.DENSITY:
        c = 2.0 * p.v_f / p.k_j
        return -c * du_dd, p.v_f - c * u, 1.0
    r = p.k_j / p.v_f
    return -2.0 * r * du_dd, p.k_j - 2.0 * r * u, -r


def residual(form, u, du_dd, du_dt, p):
    if ResidualForm(form) is ResidualForm.DENSITY:
        return residual_density(u, du_dd, du_dt, p)
    return residual_speed(u, du_dd, du_dt, p)
