"""Limit-regime experiments: classical particle limit, mean-field limit,
large-N saddle point.

Each sweep compares a finite-parameter Monte Carlo route against the
appropriate limiting reference and reports per-point discrepancies with a
monotonicity verdict.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .hsfield import estimate_duhamel, wick_rho
from .lattice import ModelParams, TimeGrid, TorusGeometry
from .loopgas import xi_rel_series
from .meanfield import field_quadrature_1site
from .propagators import free_green, ideal_occupation

__all__ = [
    "LimitSweep",
    "SaddleState",
    "classical_xi",
    "activity_to_kappa",
    "classical_limit_sweep",
    "saddle_point",
    "largeN_check",
    "meanfield_sweep",
]


@dataclass
class LimitSweep:
    """Per-point discrepancies of a route against its limiting reference."""

    parameter_name: str
    parameters: list
    discrepancies: list
    errors: list
    final_tolerance: float
    extra: dict = field(default_factory=dict)

    @property
    def monotone_decreasing(self) -> bool:
        """Strict decrease beyond combined 1-sigma errors between neighbours."""
        for k in range(len(self.discrepancies) - 1):
            gap = self.discrepancies[k] - self.discrepancies[k + 1]
            sigma = float(np.hypot(self.errors[k], self.errors[k + 1]))
            if gap <= sigma:
                return False
        return True

    @property
    def final_ok(self) -> bool:
        return self.discrepancies[-1] < self.final_tolerance

    @property
    def verdict(self) -> bool:
        return self.monotone_decreasing and self.final_ok


# ---------------------------------------------------------------------------
# classical point gas


def _classical_boltzmann_lattice(geom, v, lambda0, positions):
    vmat = v.matrix()
    sub = vmat[np.ix_(positions, positions)]
    return np.exp(-0.5 * lambda0 * sub.sum())


def classical_xi(z: float, lambda0: float, n_species: float,
                 geom: TorusGeometry, v, n_max: int,
                 gl_points: int = 8, max_panels: int = 4,
                 quad_tol: float = 1e-8) -> dict:
    """Truncated classical grand partition function with self-terms included.

    Xi_cl = sum_{n <= n_max} ((z N)^n / n!) * integral over n positions of
    exp(-(lambda0/2) sum_{i,j} v(u_i - u_j)).  Lattice positions are summed
    exactly; circle positions use translation invariance (first point fixed,
    one factor of the circumference) and composite Gauss-Legendre panels,
    doubled until the change is below quad_tol or the panel cap is hit.
    """
    if n_max > 8:
        raise ValueError("n_max above 8 is not supported")
    zn = z * n_species
    per_n = [1.0]
    converged = True
    from scipy.special import gammaln

    for n in range(1, n_max + 1):
        if geom.mode == "lattice":
            total = 0.0
            for pos in itertools.product(range(geom.n_sites), repeat=n):
                total += _classical_boltzmann_lattice(geom, v, lambda0, list(pos))
            integral = total
        else:
            integral, ok = _classical_integral_circle(
                geom.circumference, v, lambda0, n, gl_points, max_panels, quad_tol)
            converged = converged and ok
        per_n.append(float(np.exp(n * np.log(zn) - gammaln(n + 1)) * integral))
    vol = geom.n_sites if geom.mode == "lattice" else geom.circumference
    tail = 1.0 - np.exp(-zn * vol) * sum(
        np.exp(k * np.log(zn * vol) - gammaln(k + 1)) if k else 1.0
        for k in range(n_max + 1))
    return {
        "value": float(sum(per_n)),
        "per_n": per_n,
        "tail_rel": float(abs(tail)),
        "quadrature_converged": converged,
    }


def _classical_integral_circle(L, v, lambda0, n, gl_points, max_panels, tol):
    """Integral over n circle positions of the classical Boltzmann factor.

    Self-terms contribute a constant exp(-(lambda0/2) n v(0)).
    """
    self_part = np.exp(-0.5 * lambda0 * n * v(0.0))
    if n == 1:
        return L * self_part, True
    nodes0, weights0 = np.polynomial.legendre.leggauss(gl_points)
    prev = None
    panels = 1
    while True:
        edges = np.linspace(0.0, L, panels + 1)
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            nodes.append(0.5 * (b - a) * nodes0 + 0.5 * (a + b))
            weights.append(0.5 * (b - a) * weights0)
        nodes = np.concatenate(nodes)
        weights = np.concatenate(weights)
        # first position fixed at 0 by translation invariance
        grids = np.meshgrid(*([nodes] * (n - 1)), indexing="ij")
        wgrids = np.meshgrid(*([weights] * (n - 1)), indexing="ij")
        pts = np.stack([np.zeros_like(grids[0].ravel())]
                       + [g.ravel() for g in grids], axis=1)
        wts = np.prod([w.ravel() for w in wgrids], axis=0)
        energy = np.zeros(len(pts))
        for i in range(n):
            for j in range(i + 1, n):
                energy += v(pts[:, i] - pts[:, j])
        val = L * self_part * float(np.sum(wts * np.exp(-lambda0 * energy)))
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1.0):
            return val, True
        if panels >= max_panels:
            return val, prev is not None and abs(val - prev) <= 1e-4 * abs(val)
        prev = val
        panels *= 2


def activity_to_kappa(z: float, nu: float, d: int) -> float:
    """kappa(nu) solving e^{-kappa nu} nu^{-d/2} = z, exactly."""
    if z <= 0 or nu <= 0:
        raise ValueError("need z > 0 and nu > 0")
    return float(-np.log(z * nu**(0.5 * d)) / nu)


def classical_limit_sweep(z: float, lambda0: float, nu_list, geom: TorusGeometry,
                          v, n_species: float = 1.0, n_max: int = 5,
                          l_max: int = 5, samples: int = 4096,
                          eps_target: float = 0.025, seed: int = 0) -> LimitSweep:
    """Loop-gas raw series at shrinking nu against the classical point gas.

    The activity schedule e^{-kappa nu} nu^{-d/2} = z makes the winding-1
    loops converge to classical particles with effective fugacity
    z (2 pi)^{-d/2}; both sides are truncated at the same loop/particle
    number so the comparison isolates the nu dependence.
    """
    if list(nu_list) != sorted(nu_list, reverse=True):
        raise ValueError("nu_list must be strictly decreasing")
    d = geom.dimension
    z_eff = z * (2.0 * np.pi)**(-0.5 * d)
    ref = classical_xi(z_eff, lambda0, n_species, geom, v, n_max)
    discs, errs, values = [], [], []
    for k, nu in enumerate(nu_list):
        kappa = activity_to_kappa(z, nu, d)
        n_tau = max(4, int(round(nu / eps_target)))
        grid = TimeGrid(nu=nu, n_slices=n_tau)
        params = ModelParams(nu=nu, kappa0=kappa, lambda0=lambda0,
                             n_species=n_species)
        est = xi_rel_series(params, geom, grid, v, n_max, l_max, samples,
                            seed=seed + k)
        raw = est.extra["raw_value"]
        raw_se = est.extra["raw_stderr"]
        discs.append(abs(raw - ref["value"]) / ref["value"])
        errs.append(raw_se / ref["value"])
        values.append(raw)
    return LimitSweep(parameter_name="nu", parameters=list(nu_list),
                      discrepancies=discs, errors=errs, final_tolerance=0.05,
                      extra={"reference": ref["value"], "raw_values": values,
                             "z_effective": z_eff})


# ---------------------------------------------------------------------------
# large N


@dataclass
class SaddleState:
    shift: float
    kappa_ren: float
    residual: float


def saddle_point(params: ModelParams, geom: TorusGeometry, v) -> SaddleState:
    """Constant-field saddle of the large-N action.

    Stationarity against constant shifts gives the scalar fixed point

        s = (lambda0 vhat(0) N / (N + 1)) * (nu * n(kappa0 + s) - rho),

    with n(kappa) the per-site ideal occupation and vhat(0) the zero-mode
    Fourier sum of v.  n is decreasing in kappa, so the root is unique; it is
    found by bracketed root finding on (-kappa0, infinity).
    """
    nu = params.nu
    coupling = params.lambda0 * v.total() * params.n_species / (params.n_species + 1.0)

    def f(s):
        return s - coupling * (nu * ideal_occupation(geom, nu, params.kappa0 + s)
                               - params.rho)

    if coupling == 0.0:
        return SaddleState(shift=0.0, kappa_ren=params.kappa0, residual=0.0)
    lo = -params.kappa0 + 1e-6
    hi = max(1.0, abs(coupling * params.rho) + 1.0)
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("saddle bracket expansion failed")
    if f(lo) > 0:
        raise RuntimeError("no sign change in saddle bracket")
    s = brentq(f, lo, hi, xtol=1e-14, rtol=1e-15)
    return SaddleState(shift=float(s), kappa_ren=float(params.kappa0 + s),
                       residual=float(abs(f(s))))


def largeN_check(params: ModelParams, geom: TorusGeometry, grid: TimeGrid, v,
                 N_list, samples: int, seed: int = 0,
                 site: tuple = (0, 0)) -> LimitSweep:
    """gamma_1 at growing species number N against the saddle-point free gas.

    The coupling is rescaled as lambda0 nu^2 / (N + 1); the reference is
    free_green at the renormalized rate kappa0 + s(N).  A common seed keeps
    the base noise shared across N, which sharpens the trend comparison.
    """
    if list(N_list) != sorted(N_list):
        raise ValueError("N_list must be increasing")
    x, y = site
    discs, errs, info = [], [], []
    for N in N_list:
        pN = ModelParams(nu=params.nu, kappa0=params.kappa0,
                         lambda0=params.lambda0, n_species=float(N),
                         coupling_mode="meanfield", rho_mode=params.rho_mode,
                         rho=params.rho)
        sd = saddle_point(pN, geom, v)
        target = free_green(geom, params.nu, sd.kappa_ren)[x, y]
        est = estimate_duhamel(pN, geom, grid, v, x, y, n_samples=samples,
                               seed=seed)
        disc = abs(est.value.real - target)
        discs.append(disc)
        errs.append(est.stderr)
        info.append({"N": N, "shift": sd.shift, "target": target,
                     "estimate": est.value.real, "residual": sd.residual})
    return LimitSweep(parameter_name="n_species", parameters=list(N_list),
                      discrepancies=discs, errors=errs,
                      final_tolerance=3.0 * max(errs[-1], 1e-12),
                      extra={"points": info})


# ---------------------------------------------------------------------------
# mean-field limit


def meanfield_sweep(lambda0: float, kappa0: float, nu_list, samples: int,
                    eps: float = 1.0 / 64.0, seed: int = 0) -> LimitSweep:
    """nu * gamma_1 on a single site against the classical field moment.

    Quantum side: auxiliary-field gamma_1 with lambda = lambda0 nu^2 / (N+1)
    and rho at its Wick value; classical side: deterministic radial
    quadrature of the field integral.  The grids share a fixed slice width so
    the Trotter bias is common across the sweep.
    """
    if list(nu_list) != sorted(nu_list, reverse=True):
        raise ValueError("nu_list must be strictly decreasing")
    geom = TorusGeometry(dimension=1, sites_per_side=1)
    from .lattice import delta_potential

    v = delta_potential(geom)
    p_cl = ModelParams(nu=1.0, kappa0=kappa0, lambda0=lambda0, n_species=1.0)
    ref = field_quadrature_1site(p_cl, v)["phi2"]
    discs, errs, info = [], [], []
    for k, nu in enumerate(nu_list):
        n_tau = max(2, int(round(nu / eps)))
        grid = TimeGrid(nu=nu, n_slices=n_tau)
        rho = wick_rho(geom, nu, kappa0)
        params = ModelParams(nu=nu, kappa0=kappa0, lambda0=lambda0,
                             n_species=1.0, coupling_mode="meanfield",
                             rho_mode="explicit", rho=rho)
        est = estimate_duhamel(params, geom, grid, v, 0, 0,
                               n_samples=samples, seed=seed + k)
        scaled = nu * est.value.real
        discs.append(abs(scaled - ref))
        errs.append(nu * est.stderr)
        info.append({"nu": nu, "n_tau": n_tau, "scaled_gamma1": scaled})
    return LimitSweep(parameter_name="nu", parameters=list(nu_list),
                      discrepancies=discs, errors=errs,
                      final_tolerance=3.0 * max(errs[-1], 1e-12) + 0.05,
                      extra={"reference": ref, "points": info})
