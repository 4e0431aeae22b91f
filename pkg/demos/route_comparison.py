"""Compare all routes to the same observables on a two-site benchmark.

The model: two lattice sites, one period nu = 1, killing rate kappa0 = 1,
on-site repulsion lambda0 = 0.5.  Small enough that the truncated Fock trace
is numerically exact, which makes it the referee for the three stochastic
routes.
"""

import numpy as np

from bosegas.fock import duhamel_exact, gamma1_exact, xi_exact
from bosegas.hsfield import estimate_duhamel, estimate_xi_rel
from bosegas.lattice import ModelParams, TimeGrid, TorusGeometry, delta_potential
from bosegas.loopgas import duhamel_loopgas, xi_rel_series
from bosegas.mayer import log_xi_rel_partial

geom = TorusGeometry(dimension=1, sites_per_side=2)
v = delta_potential(geom)
grid = TimeGrid(nu=1.0, n_slices=32)
params = ModelParams(nu=1.0, kappa0=1.0, lambda0=0.5)
SAMPLES = 20_000

print("two-site benchmark: nu = 1, kappa0 = 1, on-site lambda0 = 0.5")
print()

oracle = xi_exact(params, geom, v, n_max=20)
print("relative partition function Xi / Xi_free")
print(f"  exact trace          {oracle.xi_rel:.6f}")

hs = estimate_xi_rel(params, geom, grid, v, SAMPLES, seed=0)
print(f"  auxiliary field      {hs.value.real:.6f} +- {hs.stderr_re:.6f}")

lg = xi_rel_series(params, geom, grid, v, 6, 6, SAMPLES, seed=1)
print(f"  loop-gas series      {lg.value.real:.6f} +- {lg.stderr_re:.6f}")

my = log_xi_rel_partial(params, geom, grid, v, 3, 6, SAMPLES, seed=2)
print(f"  cluster expansion    {np.exp(my.value.real):.6f} "
      f"(ln-scale error {my.stderr_re:.6f}, three orders)")
print()

print("two-point function G(tau = 0.25, x = 0; tau' = 0, x' = 1)")
want = duhamel_exact(params, geom, v, 20, 0.25, 0, 0.0, 1)
print(f"  exact trace          {want:.6f}")
d_hs = estimate_duhamel(params, geom, grid, v, 0, 1, tau=0.25,
                        n_samples=SAMPLES, seed=3)
print(f"  auxiliary field      {d_hs.value.real:.6f} +- {d_hs.stderr_re:.6f}")
d_lg = duhamel_loopgas(params, geom, grid, v, 0.25, 0, 0.0, 1, 6, 6,
                       SAMPLES, seed=4)
print(f"  open loop in gas     {d_lg.value.real:.6f} +- {d_lg.stderr_re:.6f}")
print()

print("equal-time one-body matrix gamma_1 (exact trace)")
print(np.array_str(gamma1_exact(params, geom, v, n_max=20), precision=6))
