"""Spectral Laplacian data, heat propagators, monodromies and the free Green matrix."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .lattice import TimeGrid, TorusGeometry, UnsupportedModeError

__all__ = [
    "laplacian_spectrum",
    "heat_propagator",
    "circle_heat_kernel",
    "monodromy",
    "free_green",
    "ideal_occupation",
]


@lru_cache(maxsize=64)
def _spectral_data(geom: TorusGeometry):
    lap = geom.laplacian_matrix()
    evals, evecs = np.linalg.eigh(lap)
    return evals, evecs


def laplacian_spectrum(geom: TorusGeometry):
    """All (eigenvalue, orthonormal mode) pairs of the periodic lattice Laplacian.

    Eigenvalues follow 2 * sum_i (cos(2 pi k_i / m) - 1) over integer wave
    vectors k; the zero eigenvalue belongs to the constant mode alone.
    """
    if geom.mode != "lattice":
        raise UnsupportedModeError("spectrum is only defined in lattice mode")
    evals, evecs = _spectral_data(geom)
    return [(float(evals[i]), evecs[:, i].copy()) for i in range(len(evals))]


def heat_propagator(geom: TorusGeometry, t: float) -> np.ndarray:
    """exp(t * Laplacian / 2) as a dense symmetric stochastic matrix."""
    if t < 0:
        raise ValueError("negative time in heat propagator")
    if geom.mode != "lattice":
        raise UnsupportedModeError("use circle_heat_kernel in circle mode")
    evals, evecs = _spectral_data(geom)
    return (evecs * np.exp(0.5 * t * evals)) @ evecs.T


def circle_heat_kernel(circumference: float, t: float, x, y=0.0):
    """Wrapped Gaussian transition density p_t(x, y) on the circle.

    The winding sum is truncated once additional terms drop below 1e-16.
    """
    if t < 0:
        raise ValueError("negative time in heat kernel")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if t == 0:
        raise ValueError("t=0 transition density is a point mass")
    L = circumference
    norm = 1.0 / np.sqrt(2.0 * np.pi * t)
    total = np.zeros(np.broadcast(x, y).shape)
    w = 0
    while True:
        term = norm * np.exp(-((x - y + w * L) ** 2) / (2.0 * t))
        if w != 0:
            term = term + norm * np.exp(-((x - y - w * L) ** 2) / (2.0 * t))
        total = total + term
        if np.all(term < 1e-16) and w > 0:
            break
        w += 1
    if total.shape == ():
        return float(total)
    return total


def _half_step(geom: TorusGeometry, eps: float) -> np.ndarray:
    return heat_propagator(geom, 0.5 * eps)


def monodromy(geom: TorusGeometry, grid: TimeGrid, sigma: np.ndarray) -> np.ndarray:
    """Strang-split time-ordered propagator over one period with potential i*sigma.

    sigma has shape (n_slices, n_sites); the result is the product over slices
    j = n_slices..1 of exp(eps*Lap/4) diag(exp(-i eps sigma_j)) exp(eps*Lap/4),
    a contraction (operator norm <= 1) for every real sigma.
    """
    sigma = np.asarray(sigma)
    if sigma.shape != (grid.n_slices, geom.n_sites):
        raise ValueError(
            f"sigma shape {sigma.shape} does not match "
            f"({grid.n_slices}, {geom.n_sites})"
        )
    half = _half_step(geom, grid.eps)
    gam = np.eye(geom.n_sites, dtype=complex)
    for j in range(grid.n_slices):
        phases = np.exp(-1j * grid.eps * sigma[j])
        gam = half @ (phases[:, None] * (half @ gam))
    return gam


def monodromy_batch(geom: TorusGeometry, grid: TimeGrid, sigma: np.ndarray,
                    keep_prefixes=None) -> np.ndarray:
    """Vectorized monodromy for a stack of fields, shape (S, n_slices, n_sites).

    keep_prefixes, when given, is a sorted list of slice counts; the return is
    then (result, {j: product over the first j slices}) for reuse by unequal-
    time estimators.
    """
    sigma = np.asarray(sigma)
    S = sigma.shape[0]
    if sigma.shape[1:] != (grid.n_slices, geom.n_sites):
        raise ValueError("sigma stack has the wrong slice/site shape")
    half = _half_step(geom, grid.eps)
    n = geom.n_sites
    gam = np.broadcast_to(np.eye(n, dtype=complex), (S, n, n)).copy()
    prefixes = {}
    if keep_prefixes and 0 in keep_prefixes:
        prefixes[0] = gam.copy()
    for j in range(grid.n_slices):
        phases = np.exp(-1j * grid.eps * sigma[:, j, :])
        gam = half @ (phases[:, :, None] * (half @ gam))
        if keep_prefixes and (j + 1) in keep_prefixes:
            prefixes[j + 1] = gam.copy()
    if keep_prefixes is not None:
        return gam, prefixes
    return gam


def free_green(geom: TorusGeometry, nu: float, kappa0: float) -> np.ndarray:
    """Ideal-gas one-body matrix M0 (1 - M0)^-1 with M0 = e^{-nu kappa0} e^{nu Lap/2}.

    Equals the winding sum over l >= 1 of e^{-kappa0 l nu} exp(l nu Lap / 2);
    convergence needs kappa0 > 0.
    """
    if kappa0 <= 0:
        raise ValueError("free Green series diverges unless kappa0 > 0")
    evals, evecs = _spectral_data(geom)
    occ = np.exp(-nu * kappa0 + 0.5 * nu * evals)
    return (evecs * (occ / (1.0 - occ))) @ evecs.T


def ideal_occupation(geom: TorusGeometry, nu: float, kappa: float) -> float:
    """Per-site ideal-gas occupation (1/|Λ|) Σ_k (e^{nu(ε_k + kappa)} - 1)^-1."""
    evals, _ = _spectral_data(geom)
    eps_k = -0.5 * evals
    return float(np.mean(1.0 / (np.exp(nu * (eps_k + kappa)) - 1.0)))
