"""Synthetic LWR ground truth, sensor sampling, normalisation and CSV I/O.

Coordinates follow the grid-node convention: cell ``i`` is centred at
``d = i * dd`` and row ``n`` of a field holds the state at ``t = n * dt``.
A road of ``Nd`` cells therefore has length ``D = Nd * dd``.

Normalised training units
-------------------------
Networks see ``d/D``, ``t/T`` and a target scaled so that the Greenshields
residual keeps its exact form:

* density ``k / k_j`` with residual constants ``v_f' = v_f T / D``, ``k_j' = 1``;
* speed ``v T / D`` with the same constants.

The speed scale has to be ``D / T`` because ``v_f`` enters the speed
residual both as the speed scale and as the wave speed.  With these choices
``v' = v_f' (1 - k')`` holds in normalised units as well.
"""
from dataclasses import dataclass, field as dc_field
import csv
import math

import numpy as np

from .errors import ConfigurationError, ParseError, ValidationError
from .objective import LabeledBatch
from .physics import GreenshieldsParams, greenshields_flow, greenshields_speed

SET_A_POSITIONS = (4.0, 8.0, 12.0, 16.0, 20.0, 24.0)
SET_B_POSITIONS = (8.0, 92.0, 128.0, 292.0, 408.0)
REFERENCE_D = 640.0
REFERENCE_T = 2700.0
REPORT_DT = 5.0


@dataclass(frozen=True)
class TrafficField:
    D: float
    T: float
    k: np.ndarray  # (Nt, Nd) densities
    p: GreenshieldsParams
    dd: float
    dt: float

    def __post_init__(self):
        k = np.array(self.k, dtype=np.float64)
        if k.ndim != 2:
            raise ValidationError("density grid must be 2-D (Nt x Nd)")
        k.setflags(write=False)
        object.__setattr__(self, "k", k)

    @property
    def Nt(self):
        return self.k.shape[0]

    @property
    def Nd(self):
        return self.k.shape[1]

    @property
    def positions(self):
        return np.arange(self.Nd) * self.dd

    @property
    def times(self):
        return np.arange(self.Nt) * self.dt

    @property
    def v(self):
        return greenshields_speed(self.k, self.p)

    @property
    def q(self):
        return greenshields_flow(self.k, self.p)

    def __eq__(self, other):
        if not isinstance(other, TrafficField):
            return NotImplemented
        return ((self.D, self.T, self.p, self.dd, self.dt) == (other.D, other.T, other.p, other.dd, other.dt)
                and np.array_equal(self.k, other.k))


@dataclass(frozen=True)
class Grid:
    dd: float
    dt: float
    n_steps: int
    record_every: int = 1


@dataclass(frozen=True)
class Periodic:
    pass


@dataclass(frozen=True)
class OpenBoundary:
    """Upstream ghost density feeding its demand in; downstream supply cap.

    Either side may be a constant or a callable of time (seconds).
    ``downstream_supply=None`` means free outflow at capacity.
    """
    upstream_density: object
    downstream_supply: object = None


def _at(value, t):
    return float(value(t)) if callable(value) else float(value)


def demand(k, p):
    return np.where(k <= p.k_j / 2, greenshields_flow(k, p), p.capacity)


def supply(k, p):
    return np.where(k <= p.k_j / 2, p.capacity, greenshields_flow(k, p))


def godunov_flux(k_left, k_right, p):
    return np.minimum(demand(k_left, p), supply(k_right, p))


def godunov_solve(init, bc, p, grid):
    """March the LWR conservation law with the Godunov (demand/supply) scheme."""
    k = np.array(init, dtype=np.float64)
    if k.ndim != 1 or k.size < 2:
        raise ValidationError("initial profile must be a 1-D array of at least 2 cells")
    if grid.dt * p.v_f > grid.dd * (1 + 1e-12):
        raise ConfigurationError(f"CFL violated: dt={grid.dt} > dd/v_f={grid.dd / p.v_f}")
    if k.min() < 0 or k.max() > p.k_j:
        raise ValidationError("initial densities must lie in [0, k_j]")
    if grid.n_steps < 0 or grid.record_every < 1:
        raise ConfigurationError("n_steps must be >= 0 and record_every >= 1")
    lam = grid.dt / grid.dd
    rows = [k.copy()]
    for n in range(grid.n_steps):
        t = n * grid.dt
        inner = godunov_flux(k[:-1], k[1:], p)
        if isinstance(bc, Periodic):
            wrap = godunov_flux(k[-1:], k[:1], p)
            flux = np.concatenate([wrap, inner, wrap])
        else:
            k_up = _at(bc.upstream_density, t)
            cap = p.capacity if bc.downstream_supply is None else _at(bc.downstream_supply, t)
            f_in = min(float(demand(k_up, p)), float(supply(k[0], p)))
            f_out = min(float(demand(k[-1], p)), cap)
            flux = np.concatenate([[f_in], inner, [f_out]])
        k = k - lam * (flux[1:] - flux[:-1])
        if (n + 1) % grid.record_every == 0:
            rows.append(k.copy())
    Nd = k.size
    return TrafficField(D=Nd * grid.dd, T=len(rows) * grid.dt * grid.record_every, k=np.array(rows), p=p,
                        dd=grid.dd, dt=grid.dt * grid.record_every)


@dataclass(frozen=True)
class ScenarioConfig:
    D: float = REFERENCE_D
    T: float = REFERENCE_T
    dd: float = 4.0
    report_dt: float = REPORT_DT
    # Time-compressed kinematics: free-flow vehicles cross the section a few
    # times per horizon so that congestion waves span the study area.
    v_f: float = 6.0 * REFERENCE_D / REFERENCE_T
    k_j: float = 0.2
    n_bottlenecks: int = 3


def _solver_dt(dd, v_f, report_dt):
    """Largest report_dt / m that satisfies the CFL bound."""
    m = max(1, math.ceil(report_dt * v_f / dd - 1e-12))
    return report_dt / m, m


def rush_hour_scenario(seed, config=None):
    """Morning-peak field: rising inflow plus intermittent downstream restrictions."""
    c = config or ScenarioConfig()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7A11]))
    p = GreenshieldsParams(c.v_f, c.k_j)
    Nd = int(round(c.D / c.dd))
    x = np.arange(Nd) * c.dd / c.D

    init = c.k_j * (0.18 + 0.04 * np.sin(2 * np.pi * (x + rng.uniform())) + 0.02 * rng.uniform() * x)

    # Upstream demand: background rising into a peak, plus slow fluctuations.
    peak_t = rng.uniform(0.4, 0.6) * c.T
    amp = rng.uniform(-1, 1, size=3) * 0.025
    freq = rng.uniform(1.5, 4.0, size=3)
    phase = rng.uniform(0, 2 * np.pi, size=3)

    def upstream(t):
        s = t / c.T
        base = 0.2 + 0.2 * math.exp(-((t - peak_t) / (0.3 * c.T)) ** 2)
        wobble = sum(a * math.sin(2 * np.pi * f * s + ph) for a, f, ph in zip(amp, freq, phase))
        return c.k_j * min(0.49, max(0.05, base + wobble))

    # Downstream restrictions: disjoint windows of reduced supply.
    edges = np.sort(rng.uniform(0.05, 0.9, size=c.n_bottlenecks))
    windows = []
    for i, start in enumerate(edges):
        limit = edges[i + 1] if i + 1 < len(edges) else 1.0
        length = min(rng.uniform(0.08, 0.18), limit - start)
        windows.append((start * c.T, (start + length) * c.T, rng.uniform(0.35, 0.6)))

    def downstream(t):
        for a, b, frac in windows:
            if a <= t < b:
                return frac * p.capacity
        return p.capacity

    dt, sub = _solver_dt(c.dd, c.v_f, c.report_dt)
    n_report = int(round(c.T / c.report_dt))
    grid = Grid(dd=c.dd, dt=dt, n_steps=(n_report - 1) * sub, record_every=sub)
    fld = godunov_solve(init, OpenBoundary(upstream, downstream), p, grid)
    return TrafficField(D=c.D, T=c.T, k=fld.k, p=p, dd=c.dd, dt=c.report_dt)


@dataclass(frozen=True)
class SensorLayout:
    positions: tuple
    sample_times: tuple = dc_field(default=None)

    def times_for(self, fld):
        return fld.times if self.sample_times is None else np.asarray(self.sample_times, dtype=np.float64)


def _scaled_positions(positions, fld):
    return tuple(float(x) * fld.D / REFERENCE_D for x in positions)


def set_a_layout(fld=None):
    """Six closely spaced upstream sensors, every report stamp."""
    return SensorLayout(SET_A_POSITIONS if fld is None else _scaled_positions(SET_A_POSITIONS, fld))


def set_b_layout(fld=None):
    """Five sensors spread over the study area, every report stamp."""
    return SensorLayout(SET_B_POSITIONS if fld is None else _scaled_positions(SET_B_POSITIONS, fld))


def _nearest(values, grid_values, spacing, what):
    values = np.asarray(values, dtype=np.float64)
    idx = np.rint(values / spacing).astype(int)
    if values.size and (values.min() < 0 or idx.max() >= len(grid_values)):
        raise ValidationError(f"{what} outside the field bounds")
    return idx


def sample_sensors(fld, layout):
    """Nearest-cell point samples; returns (density batch, speed batch)."""
    times = layout.times_for(fld)
    pi = _nearest(layout.positions, fld.positions, fld.dd, "sensor position")
    ti = _nearest(times, fld.times, fld.dt, "sample time")
    P, Tm = np.meshgrid(pi, ti, indexing="ij")
    P, Tm = P.ravel(), Tm.ravel()
    d = fld.positions[P]
    t = fld.times[Tm]
    k = fld.k[Tm, P]
    return LabeledBatch(d, t, k), LabeledBatch(d, t, greenshields_speed(k, fld.p))


def make_test_grid(fld, target="density", spacing=4.0, extent=408.0):
    """Dense evaluation grid from d=spacing to d=extent at every report stamp."""
    scale = fld.D / REFERENCE_D
    positions = np.arange(spacing, extent + spacing / 2, spacing) * scale
    dens, speed = sample_sensors(fld, SensorLayout(tuple(positions)))
    return dens if target == "density" else speed


@dataclass(frozen=True)
class Normalizer:
    """Per-variable affine map (x - lo) / (hi - lo) for d, t and the target."""
    d: tuple
    t: tuple
    u: tuple

    def __post_init__(self):
        for name in ("d", "t", "u"):
            lo, hi = getattr(self, name)
            if not hi > lo:
                raise ValidationError(f"degenerate range for {name}: min={lo}, max={hi}")

    @staticmethod
    def _fwd(x, rng):
        return (x - rng[0]) / (rng[1] - rng[0])

    @staticmethod
    def _inv(x, rng):
        return x * (rng[1] - rng[0]) + rng[0]

    def apply(self, batch):
        return LabeledBatch(self._fwd(batch.d, self.d), self._fwd(batch.t, self.t), self._fwd(batch.u, self.u))

    def invert(self, batch):
        return LabeledBatch(self._inv(batch.d, self.d), self._inv(batch.t, self.t), self._inv(batch.u, self.u))

    def invert_target(self, u):
        return self._inv(np.asarray(u, dtype=np.float64), self.u)


def fit_normalizer(train):
    return Normalizer(d=(float(train.d.min()), float(train.d.max())),
                      t=(float(train.t.min()), float(train.t.max())),
                      u=(float(train.u.min()), float(train.u.max())))


def field_normalizer(fld, target):
    """Domain-box normaliser that keeps the residual form exact (see module docs)."""
    scale = fld.p.k_j if target == "density" else fld.D / fld.T
    return Normalizer(d=(0.0, fld.D), t=(0.0, fld.T), u=(0.0, scale))


def normalized_greenshields(fld):
    return GreenshieldsParams(v_f=fld.p.v_f * fld.T / fld.D, k_j=1.0)


def save_csv(batch, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "t", "value"])
        for d, t, u in zip(batch.d, batch.t, batch.u):
            w.writerow([format(d, ".17g"), format(t, ".17g"), format(u, ".17g")])


def load_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    if [c.strip() for c in rows[0]] != ["d", "t", "value"]:
        raise ParseError(f"header must be 'd,t,value', got {','.join(rows[0])!r}", line=1)
    vals = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
        try:
            rec = [float(x) for x in row]
        except ValueError:
            raise ParseError(f"non-numeric value in {row!r}", line=lineno) from None
        if not all(math.isfinite(x) for x in rec):
            raise ParseError(f"non-finite value in {row!r}", line=lineno)
        vals.append(rec)
    if not vals:
        raise ValidationError(f"{path}: no data rows")
    a = np.array(vals)
    return LabeledBatch(a[:, 0], a[:, 1], a[:, 2])


def save_field(fld, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# D={fld.D!r} T={fld.T!r} Nd={fld.Nd} Nt={fld.Nt} vf={fld.p.v_f!r} kj={fld.p.k_j!r}\n")
        for row in fld.k:
            fh.write(",".join(format(x, ".17g") for x in row) + "\n")


def load_field(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ParseError("missing '# D=... T=...' header", line=1)
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        try:
            rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
        except ValueError as exc:
            raise ParseError(f"bad density value: {exc}") from None
    k = np.array(rows)
    Nd, Nt = int(meta["Nd"]), int(meta["Nt"])
    if k.shape != (Nt, Nd):
        raise ValidationError(f"field body is {k.shape}, header says {(Nt, Nd)}")
    D, T = float(meta["D"]), float(meta["T"])
    return TrafficField(D=D, T=T, k=k, p=GreenshieldsParams(float(meta["vf"]), float(meta["kj"])),
                        dd=D / Nd, dt=T / Nt)
