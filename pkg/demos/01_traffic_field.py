# %% [markdown]
# # A synthetic rush hour
#
# We build the ground-truth traffic field every experiment trains on: a 640 m
# road observed for 45 minutes, solved with a Godunov finite-volume scheme on
# the LWR conservation law under the Greenshields speed-density line.

# %%
import numpy as np

from mtopinn import dataflow as df
from mtopinn.physics import GreenshieldsParams, greenshields_flow

# %% [markdown]
# ## The flux building blocks
#
# Godunov's interface flux is the smaller of what the upstream cell wants to
# send (demand) and what the downstream cell can take (supply).

# %%
unit = GreenshieldsParams(v_f=1.0, k_j=1.0)
k = np.linspace(0, 1, 6)
print("k       ", k)
print("flow    ", greenshields_flow(k, unit))
print("demand  ", df.demand(k, unit))
print("supply  ", df.supply(k, unit))

# %% [markdown]
# A Riemann problem whose two states carry the same flow (0.16 at k=0.2 and
# k=0.8) forms a shock that stays put.

# %%
init = np.where(np.arange(160) < 80, 0.2, 0.8)
shock = df.godunov_solve(init, df.OpenBoundary(0.2, 0.16), unit, df.Grid(dd=1.0, dt=0.9, n_steps=1000))
front = [int(np.argmax(row > 0.5)) for row in shock.k]
print("shock front cell: start", front[0], "end", front[-1])

# %% [markdown]
# ## The scenario
#
# Inflow ramps up into a morning peak while the downstream exit is
# intermittently restricted, so queues spill back upstream.

# %%
field = df.rush_hour_scenario(seed=1)
print(f"field {field.Nt} stamps x {field.Nd} cells, D={field.D} m, T={field.T} s")
print(f"density range [{field.k.min():.3f}, {field.k.max():.3f}] veh/m, k_j={field.p.k_j}")

jam = field.k > field.p.k_j / 2
onset = [int(np.argmax(jam[:, j])) * field.dt if jam[:, j].any() else None for j in range(0, field.Nd, 20)]
for x, t in zip(field.positions[::20], onset):
    print(f"  d={x:5.0f} m  first congested at {'never' if t is None else f'{t:.0f} s'}")

# %% [markdown]
# ## Sensors and the test grid
#
# Set A packs six sensors into the first 24 m; set B spreads five over the
# study area.  Speed samples come from the density samples through the
# Greenshields line.

# %%
dens_a, speed_a = df.sample_sensors(field, df.set_a_layout(field))
dens_b, speed_b = df.sample_sensors(field, df.set_b_layout(field))
test = df.make_test_grid(field)
print("set A rows", len(dens_a), "positions", sorted(set(dens_a.d.tolist())))
print("set B rows", len(dens_b), "positions", sorted(set(dens_b.d.tolist())))
print("test grid rows", len(test))

# %% [markdown]
# ## Normalisation
#
# Networks see d/D, t/T and density/k_j.  In these units the residual keeps
# its form with k_j=1 and a free-flow speed of v_f*T/D.

# %%
norm = df.field_normalizer(field, "density")
scaled = norm.apply(dens_a)
print("normalised ranges", scaled.d.min(), scaled.d.max(), scaled.t.max(), scaled.u.max())
print("normalised Greenshields", df.normalized_greenshields(field))
