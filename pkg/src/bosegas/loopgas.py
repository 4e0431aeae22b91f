"""Brownian loop-gas route: bridge sampling, 2-loop interactions, grand series.

The gas is expanded over closed walks that wind l times around the imaginary
time period nu.  A loop of winding l based at u carries activity

    a(u, l) = (e^{-kappa l nu} / l) * p_{l nu}(u, u),

and a configuration of loops interacts through the pair functional V_nu that
couples positions at equal time phases.  The truncated grand-canonical series
over loop number n and winding l is evaluated by direct importance sampling
(loops are drawn i.i.d. from the activity); Duhamel functions add one open
path with fixed endpoints.  A separate duration-regularized series targets
the classical field partition function directly (no winding structure, a hard
floor delta on loop durations instead).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .lattice import ModelParams, TimeGrid, TorusGeometry, UnsupportedModeError
from .propagators import circle_heat_kernel, heat_propagator, _spectral_data
from .stats import ComplexEstimate, mean_estimate, ratio_estimate

__all__ = [
    "GridPath",
    "SymanzikParams",
    "sample_bridge",
    "loop_interaction_Vnu",
    "kappa_eff",
    "free_loop_sum",
    "activity_table",
    "xi_rel_series",
    "duhamel_loopgas",
    "make_symanzik",
    "symanzik_series",
]

UNDERFLOW = 1e-300


@dataclass
class GridPath:
    """Positions at uniform grid times; closed loops repeat the base point last.

    start_slice records which time phase the first position sits on, so open
    paths launched at tau' interact on the correct phases.
    """

    positions: np.ndarray
    eps: float
    start_slice: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.positions) - 1


def kappa_eff(params: ModelParams, v) -> float:
    """Killing rate after absorbing the density counterterm into each line.

    The cross term of the shifted quartic lowers every particle's chemical
    potential by lam * N * rho * (integral of v) / nu^2.
    """
    return params.kappa0 - params.lam * params.n_species * params.rho * v.total() / params.nu**2


def _rho_constant(params: ModelParams, geom: TorusGeometry, v) -> float:
    """Constant factor exp(-(lam/2)(N rho / nu)^2 |volume| vbar) from the shift."""
    if params.rho == 0.0:
        return 1.0
    vol = geom.n_sites if geom.mode == "lattice" else geom.circumference
    shift = params.n_species * params.rho / params.nu
    return float(np.exp(-0.5 * params.lam * shift**2 * vol * v.total()))


def _diag_heat(geom: TorusGeometry, t: float) -> float:
    """Return-probability density p_t(u, u), site independent."""
    if geom.mode == "lattice":
        evals, _ = _spectral_data(geom)
        return float(np.mean(np.exp(0.5 * t * evals)))
    return circle_heat_kernel(geom.circumference, t, 0.0, 0.0)


def _volume(geom: TorusGeometry) -> float:
    return geom.n_sites if geom.mode == "lattice" else geom.circumference


def free_loop_sum(geom: TorusGeometry, nu: float, kappa0: float, l_max: int) -> float:
    """Q = sum_{l <= l_max} (e^{-kappa0 l nu}/l) * (base-point sum of p_{l nu}(u,u)).

    As l_max grows this tends to log Xi_free per species.
    """
    vol = _volume(geom)
    return float(sum(
        np.exp(-kappa0 * ell * nu) / ell * vol * _diag_heat(geom, ell * nu)
        for ell in range(1, l_max + 1)
    ))


def activity_table(geom: TorusGeometry, nu: float, kappa: float, l_max: int) -> np.ndarray:
    """Total single-loop activity per winding, a_l summed over base points."""
    vol = _volume(geom)
    return np.array([
        np.exp(-kappa * ell * nu) / ell * vol * _diag_heat(geom, ell * nu)
        for ell in range(1, l_max + 1)
    ])


# ---------------------------------------------------------------------------
# bridge sampling


def _lattice_bridges(geom: TorusGeometry, starts: np.ndarray, ends: np.ndarray,
                     n_steps: int, eps: float, rng: np.random.Generator) -> np.ndarray:
    """(S, n_steps + 1) site paths pinned at both ends, exact conditional law."""
    kernels = [None] + [heat_propagator(geom, k * eps) for k in range(1, n_steps + 1)]
    if np.any(kernels[n_steps][starts, ends] < UNDERFLOW):
        raise ValueError("endpoint unreachable: p_T(x, y) underflows")
    S = len(starts)
    pos = np.empty((S, n_steps + 1), dtype=np.int64)
    pos[:, 0] = starts
    pos[:, -1] = ends
    cur = np.asarray(starts)
    for k in range(1, n_steps):
        probs = kernels[1][cur, :] * kernels[n_steps - k][:, ends].T
        cdf = np.cumsum(probs, axis=1)
        u = rng.random((S, 1)) * cdf[:, -1:]
        cur = (cdf < u).sum(axis=1)
        pos[:, k] = cur
    return pos


def _circle_bridges(L: float, starts: np.ndarray, ends: np.ndarray, T: float,
                    n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Continuum bridges on the circle: winding sector, then a Gaussian bridge.

    Positions are returned unwrapped; consumers wrap displacements mod L.
    """
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    S = len(starts)
    d0 = np.mod(ends - starts + 0.5 * L, L) - 0.5 * L
    w_cap = int(np.ceil(np.sqrt(2.0 * T * 40.0) / L)) + 1
    w = np.arange(-w_cap, w_cap + 1)
    drift_opts = d0[:, None] + w[None, :] * L
    logw = -(drift_opts**2) / (2.0 * T)
    probs = np.exp(logw - logw.max(axis=1, keepdims=True))
    cdf = np.cumsum(probs, axis=1)
    pick = (cdf < rng.random((S, 1)) * cdf[:, -1:]).sum(axis=1)
    drift = drift_opts[np.arange(S), pick]
    dt = T / n_steps
    incr = rng.normal(0.0, np.sqrt(dt), (S, n_steps))
    brown = np.concatenate([np.zeros((S, 1)), np.cumsum(incr, axis=1)], axis=1)
    frac = np.arange(n_steps + 1) / n_steps
    bridge = brown - frac[None, :] * brown[:, -1:]
    return starts[:, None] + drift[:, None] * frac[None, :] + bridge


def sample_bridge(geom: TorusGeometry, x, y, T: float, grid: TimeGrid,
                  seed: int = 0, start_slice: int = 0) -> GridPath:
    """One pinned path from x to y over duration T on the shared time grid."""
    rng = np.random.default_rng(seed)
    n_steps = int(round(T / grid.eps))
    if abs(n_steps * grid.eps - T) > 1e-9 * max(T, 1.0):
        raise ValueError("duration must be a multiple of the grid step")
    if geom.mode == "lattice":
        pos = _lattice_bridges(geom, np.array([x]), np.array([y]),
                               n_steps, grid.eps, rng)[0]
    else:
        pos = _circle_bridges(geom.circumference, np.array([float(x)]),
                              np.array([float(y)]), T, n_steps, rng)[0]
    return GridPath(positions=pos, eps=grid.eps, start_slice=start_slice)


# ---------------------------------------------------------------------------
# pair interaction


def _v_circle(vpot, d: np.ndarray) -> np.ndarray:
    return vpot(d)


def loop_interaction_Vnu(path1: GridPath, path2: GridPath, n_tau: int, v,
                         geom: TorusGeometry) -> float:
    """V_nu: (eps/2) * sum over equal-phase position pairs of v(x - x').

    Left-endpoint quadrature: the final (repeated) position of each path is
    excluded.  Self-pairing path1 is path2 is allowed and includes the
    diagonal terms.
    """
    if abs(path1.eps - path2.eps) > 1e-12:
        raise ValueError("paths live on different grids")
    eps = path1.eps
    p1 = path1.positions[:-1]
    p2 = path2.positions[:-1]
    ph1 = (path1.start_slice + np.arange(len(p1))) % n_tau
    ph2 = (path2.start_slice + np.arange(len(p2))) % n_tau
    if geom.mode == "lattice":
        vmat = v.matrix()
    total = 0.0
    for t in range(n_tau):
        a = p1[ph1 == t]
        b = p2[ph2 == t]
        if len(a) == 0 or len(b) == 0:
            continue
        if geom.mode == "lattice":
            total += vmat[np.ix_(a, b)].sum()
        else:
            total += _v_circle(v, a[:, None] - b[None, :]).sum()
    return 0.5 * eps * total


# ---------------------------------------------------------------------------
# loop-ensemble machinery (batched)


def _sample_windings(act: np.ndarray, shape, rng) -> np.ndarray:
    """Windings 1..l_max drawn proportional to the activity table."""
    probs = act / act.sum()
    return rng.choice(np.arange(1, len(act) + 1), size=shape, p=probs)


def _loops_lattice_counts(geom, grid, n, act, samples, rng):
    """Per-sample occupation counts (S, n_tau, n_sites) of n i.i.d. loops."""
    n_tau = grid.n_slices
    C = np.zeros((samples, n_tau, geom.n_sites))
    if n == 0:
        return C
    W = _sample_windings(act, (samples, n), rng)
    tt = np.arange(n_tau)
    for ell in range(1, len(act) + 1):
        si, _ = np.nonzero(W == ell)
        m = len(si)
        if m == 0:
            continue
        starts = rng.integers(geom.n_sites, size=m)
        pos = _lattice_bridges(geom, starts, starts, ell * n_tau, grid.eps, rng)
        body = pos[:, :-1].reshape(m, ell, n_tau)
        np.add.at(C, (si[:, None, None], tt[None, None, :], body), 1.0)
    return C


def _loops_circle_positions(geom, grid, n, act, samples, rng):
    """Padded positions (S, R, n_tau) and entry mask of the same shape.

    Each winding-l loop contributes l rows (one per traversed period); padded
    entries are masked out of the pair sums.
    """
    n_tau = grid.n_slices
    if n == 0:
        return np.zeros((samples, 0, n_tau)), np.zeros((samples, 0, n_tau), dtype=bool)
    W = _sample_windings(act, (samples, n), rng)
    rows_per_sample = W.sum(axis=1)
    R = int(rows_per_sample.max())
    pos_pad = np.zeros((samples, R, n_tau))
    mask = np.zeros((samples, R, n_tau), dtype=bool)
    next_row = np.zeros(samples, dtype=np.int64)
    L = geom.circumference
    for ell in range(1, len(act) + 1):
        si, _ = np.nonzero(W == ell)
        m = len(si)
        if m == 0:
            continue
        starts = rng.random(m) * L
        pos = _circle_bridges(L, starts, starts, ell * grid.nu,
                              ell * n_tau, rng)
        body = pos[:, :-1].reshape(m, ell, n_tau)
        for j, s in enumerate(si):
            r0 = next_row[s]
            pos_pad[s, r0:r0 + ell, :] = body[j]
            mask[s, r0:r0 + ell, :] = True
            next_row[s] += ell
    return pos_pad, mask


def _lattice_pair_sum(C: np.ndarray, vmat: np.ndarray, eps: float) -> np.ndarray:
    """(eps/2) sum_t c_t . v . c_t per sample, all ordered visit pairs."""
    return 0.5 * eps * np.einsum("stx,xy,sty->s", C, vmat, C)


def _circle_pair_sum(pos: np.ndarray, mask: np.ndarray, v, eps: float,
                     block: int = 512) -> np.ndarray:
    """Masked all-pairs interaction per sample; mask has shape (S, R, n_tau)."""
    S, R, n_tau = pos.shape
    if R == 0:
        return np.zeros(S)
    out = np.empty(S)
    for lo in range(0, S, block):
        hi = min(lo + block, S)
        d = pos[lo:hi, :, None, :] - pos[lo:hi, None, :, :]
        vv = _v_circle(v, d)
        vv *= mask[lo:hi, :, None, :] & mask[lo:hi, None, :, :]
        out[lo:hi] = vv.sum(axis=(1, 2, 3))
    return 0.5 * eps * out


def _series_coefficients(n_species: float, A: float, n_max: int) -> np.ndarray:
    """(N A)^n / n! for n = 1..n_max."""
    from scipy.special import gammaln

    n = np.arange(1, n_max + 1)
    if n_species * A <= 0:
        return np.zeros(n_max)
    return np.exp(n * np.log(n_species * A) - gammaln(n + 1))


@dataclass
class LoopSeries:
    """Sampled partial series and its bookkeeping (shared by Xi and Duhamel)."""

    series_samples: np.ndarray      # per-sample raw partial sums, n=0 term included
    activity: float
    q_free: float
    tail_rel: float


def _raw_series_samples(params, geom, grid, v, n_max, l_max, samples, rng,
                        extra_counts=None, extra_positions=None):
    """Per-sample values of sum_n (N^n/n!) A^n W_n, optionally with an open path.

    extra_counts / extra_positions hold the open path's visits; when given, the
    returned pair is (with-open, loops-only) so ratio estimators stay aligned.
    """
    kappa = kappa_eff(params, v)
    act = activity_table(geom, grid.nu, kappa, l_max)
    A = float(act.sum())
    coef = _series_coefficients(params.n_species, A, n_max)
    lam_over_nu = params.lam / params.nu
    with_open = extra_counts is not None or extra_positions is not None
    base = np.ones(samples, dtype=float)
    series = base.copy()
    series_open = np.zeros(samples)
    if with_open:
        if geom.mode == "lattice":
            vmat = v.matrix()
            v00 = _lattice_pair_sum(extra_counts, vmat, grid.eps)
        else:
            pos0, mask0 = extra_positions
            v00 = _circle_pair_sum(pos0, mask0, v, grid.eps)
        series_open = np.exp(-lam_over_nu * v00)  # n = 0 term with self-energy
    if geom.mode == "lattice":
        vmat = v.matrix()
        for n in range(1, n_max + 1):
            C = _loops_lattice_counts(geom, grid, n, act, samples, rng)
            w_loops = np.exp(-lam_over_nu * _lattice_pair_sum(C, vmat, grid.eps))
            series += coef[n - 1] * w_loops
            if with_open:
                w_full = np.exp(-lam_over_nu * _lattice_pair_sum(
                    C + extra_counts, vmat, grid.eps))
                series_open += coef[n - 1] * w_full
    else:
        for n in range(1, n_max + 1):
            pos, mask = _loops_circle_positions(geom, grid, n, act, samples, rng)
            w_loops = np.exp(-lam_over_nu * _circle_pair_sum(pos, mask, v, grid.eps))
            series += coef[n - 1] * w_loops
            if with_open:
                pos0, mask0 = extra_positions
                pos_j = np.concatenate([pos, pos0], axis=1)
                mask_j = np.concatenate([mask, mask0], axis=1)
                w_full = np.exp(-lam_over_nu * _circle_pair_sum(pos_j, mask_j, v, grid.eps))
                series_open += coef[n - 1] * w_full
    q0 = free_loop_sum(geom, grid.nu, params.kappa0, l_max)
    na = params.n_species * A
    if na > 0:
        tail = 1.0 - np.exp(-na) * sum(
            np.exp(k * np.log(na) - _lgamma(k)) if k else 1.0 for k in range(n_max + 1))
    else:
        tail = 0.0
    ls = LoopSeries(series_samples=series, activity=A, q_free=q0,
                    tail_rel=float(abs(tail)))
    if with_open:
        return ls, series_open
    return ls


def _lgamma(k):
    from scipy.special import gammaln

    return gammaln(k + 1)


def xi_rel_series(params: ModelParams, geom: TorusGeometry, grid: TimeGrid, v,
                  n_max: int, l_max: int, samples: int, seed: int = 0) -> ComplexEstimate:
    """Xi_rel = const * e^{-N Q(kappa0)} * sum_{n <= n_max} (N^n/n!) I_n.

    I_n is the n-loop integral estimated over i.i.d. activity-sampled loops;
    the free normalization uses the same winding truncation so the l_max bias
    largely cancels.  lam = 0 short-circuits to the closed form (exact 1 at
    rho = 0).
    """
    const = _rho_constant(params, geom, v)
    if params.lam == 0.0:
        q0 = free_loop_sum(geom, grid.nu, params.kappa0, l_max)
        kappa = kappa_eff(params, v)
        A = free_loop_sum(geom, grid.nu, kappa, l_max)
        val = const * np.exp(params.n_species * (A - q0))
        return ComplexEstimate(value=complex(val), stderr_re=0.0, stderr_im=0.0,
                               n_samples=samples, seed=seed, ess=float(samples))
    rng = np.random.default_rng(seed)
    ls = _raw_series_samples(params, geom, grid, v, n_max, l_max, samples, rng)
    norm = const * np.exp(-params.n_species * ls.q_free)
    est = mean_estimate(norm * ls.series_samples, seed=seed)
    raw = mean_estimate(ls.series_samples)
    est.extra.update(
        activity=ls.activity,
        q_free=ls.q_free,
        tail_rel=ls.tail_rel,
        truncation_flag=ls.tail_rel > 1e-2,
        raw_value=raw.value.real,
        raw_stderr=raw.stderr_re,
    )
    return est


def _open_weights(params, geom, grid, v, s: float, x, x_p, l_max: int):
    """b_l0 = e^{-kappa T} p_T(x, x') for T = s + l0 nu, l0 = 0..l_max."""
    kappa = kappa_eff(params, v)
    out = []
    for l0 in range(0, l_max + 1):
        T = s + l0 * grid.nu
        if T <= 0:
            out.append(0.0)
            continue
        if geom.mode == "lattice":
            p = heat_propagator(geom, T)[x, x_p]
        else:
            p = circle_heat_kernel(geom.circumference, T, float(x), float(x_p))
        out.append(np.exp(-kappa * T) * p)
    return np.asarray(out)


def duhamel_loopgas(params: ModelParams, geom: TorusGeometry, grid: TimeGrid, v,
                    tau: float, x, tau_p: float, x_p, n_max: int, l_max: int,
                    samples: int, seed: int = 0) -> ComplexEstimate:
    """Two-point function from one open path immersed in the loop gas.

    numerator = sum_{l0} b_{l0} E[e^{-(lam/nu) sum_{i,j=0..n} V}], denominator
    the loop-only series, loops shared between the two.  Equal times drop the
    l0 = 0 (zero-duration) term, matching the other routes' convention.
    """
    nu = params.nu
    if not (0.0 <= tau_p <= tau < nu):
        raise ValueError("need 0 <= tau' <= tau < nu")
    s = tau - tau_p
    j_lo = int(round(tau_p / grid.eps))
    if abs(j_lo * grid.eps - tau_p) > 1e-9:
        raise ValueError("tau' must sit on the slice grid")
    bvec = _open_weights(params, geom, grid, v, s, x, x_p, l_max)
    B = float(bvec.sum())

    if params.lam == 0.0:
        # closed form: extend the winding sum until terms vanish
        total, l0 = 0.0, 0
        while True:
            T = s + l0 * nu
            if T > 0:
                if geom.mode == "lattice":
                    p = heat_propagator(geom, T)[x, x_p]
                else:
                    p = circle_heat_kernel(geom.circumference, T, float(x), float(x_p))
                term = np.exp(-params.kappa0 * T) * p
                total += term
                if term < 1e-16 and l0 > 1:
                    break
            l0 += 1
        return ComplexEstimate(value=complex(total), stderr_re=0.0, stderr_im=0.0,
                               n_samples=samples, seed=seed, ess=float(samples),
                               extra={"species_diagonal": True})

    rng = np.random.default_rng(seed)
    # sample the open winding l0, then the pinned path, grouped by l0
    probs = bvec / B
    l0s = rng.choice(np.arange(l_max + 1), size=samples, p=probs)
    n_tau = grid.n_slices
    if geom.mode == "lattice":
        C0 = np.zeros((samples, n_tau, geom.n_sites))
        for l0 in np.unique(l0s):
            si = np.nonzero(l0s == l0)[0]
            K = int(round(s / grid.eps)) + l0 * n_tau
            if K == 0:
                continue
            pos = _lattice_bridges(geom, np.full(len(si), x_p),
                                   np.full(len(si), x), K, grid.eps, rng)
            body = pos[:, :-1]
            phases = (j_lo + np.arange(K)) % n_tau
            np.add.at(C0, (si[:, None], phases[None, :], body), 1.0)
        ls, series_open = _raw_series_samples(params, geom, grid, v, n_max,
                                              l_max, samples, rng,
                                              extra_counts=C0)
    else:
        Kmax = int(round(s / grid.eps)) + l_max * n_tau
        Rmax = (j_lo + Kmax - 1) // n_tau + 1
        pos0 = np.zeros((samples, Rmax, n_tau))
        mask0 = np.zeros((samples, Rmax, n_tau), dtype=bool)
        # circle open paths stored row-per-period with per-entry masks
        for l0 in np.unique(l0s):
            si = np.nonzero(l0s == l0)[0]
            K = int(round(s / grid.eps)) + l0 * n_tau
            if K == 0:
                continue
            T = s + l0 * nu
            pos = _circle_bridges(geom.circumference,
                                  np.full(len(si), float(x_p)),
                                  np.full(len(si), float(x)), T, K, rng)
            body = pos[:, :-1]
            phases = (j_lo + np.arange(K)) % n_tau
            rows = (j_lo + np.arange(K)) // n_tau
            pos0[si[:, None], rows[None, :], phases[None, :]] = body
            mask0[si[:, None], rows[None, :], phases[None, :]] = True
        ls, series_open = _raw_series_samples(params, geom, grid, v, n_max,
                                              l_max, samples, rng,
                                              extra_positions=(pos0, mask0))
    est = ratio_estimate(B * series_open, ls.series_samples, seed=seed)
    est.extra.update(species_diagonal=True, open_weight=B, tail_rel=ls.tail_rel)
    return est


# ---------------------------------------------------------------------------
# duration-regularized (classical field) series


@dataclass
class SymanzikParams:
    """Regularization data for the classical-field loop series."""

    delta: float
    n_max: int
    kappa_delta: float = 0.0
    wick_constant_delta: float = 0.0
    n_quad: int = 32

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("duration floor delta must be positive")


def make_symanzik(params: ModelParams, geom: TorusGeometry, v, delta: float,
                  n_max: int, n_quad: int = 32) -> SymanzikParams:
    """Fix the killing rate and Wick constant by linear-term cancellation."""
    if geom.mode != "lattice":
        raise UnsupportedModeError("duration-regularized series is lattice only")
    evals, _ = _spectral_data(geom)
    freqs = params.kappa0 - 0.5 * evals
    c_delta = float(np.mean(np.exp(-delta * freqs) / freqs))
    lam_cl = params.lambda0 / (params.n_species + 1.0)
    kappa_delta = params.kappa0 - params.n_species * c_delta * lam_cl * v.total()
    sp = SymanzikParams(delta=delta, n_max=n_max, kappa_delta=kappa_delta,
                        wick_constant_delta=c_delta, n_quad=n_quad)
    return sp


def _sample_durations(kappa: float, delta: float, samples: int, rng) -> np.ndarray:
    """Draw T from dT/T e^{-kappa T} on [delta, inf) by inverse CDF on a log grid."""
    t_hi = delta + 60.0 / max(kappa, 1e-6)
    grid = np.geomspace(delta, t_hi, 4096)
    dens = np.exp(-kappa * grid) / grid
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(rng.random(samples), cdf, grid)


def symanzik_series(params: ModelParams, geom: TorusGeometry, v,
                    sym: SymanzikParams, samples: int, seed: int = 0) -> ComplexEstimate:
    """Regularized classical-field partition function as a loop series.

    Loops have continuous durations T >= delta (no winding), interact through
    V_0 = (1/2) double time integral of v along the pair, and the free
    normalization exp(-N Q_0(delta)) uses the exact exponential-integral form.
    """
    evals, _ = _spectral_data(geom)
    freqs = params.kappa0 - 0.5 * evals
    lam_cl = params.lambda0 / (params.n_species + 1.0)
    N = params.n_species
    q0 = float(np.sum(exp1(freqs * sym.delta)))
    const = float(np.exp(-0.5 * lam_cl * (N * sym.wick_constant_delta)**2
                         * geom.n_sites * v.total()))
    a_delta = float(np.sum(exp1((sym.kappa_delta - 0.5 * evals) * sym.delta)))
    if params.lambda0 == 0.0:
        val = const * np.exp(N * (a_delta - q0))
        return ComplexEstimate(value=complex(val), stderr_re=0.0, stderr_im=0.0,
                               n_samples=samples, seed=seed, ess=float(samples))

    rng = np.random.default_rng(seed)
    norm_t = float(exp1(sym.kappa_delta * sym.delta))
    vmat = v.matrix()
    nq = sym.n_quad
    series = np.ones(samples)
    for n in range(1, sym.n_max + 1):
        T = _sample_durations(sym.kappa_delta, sym.delta, samples * n,
                              rng).reshape(samples, n)
        starts = rng.integers(geom.n_sites, size=(samples, n))
        # weighted site-occupation vector over all loops' quadrature nodes
        qvec = np.zeros((samples, geom.n_sites))
        act_w = np.ones(samples)
        for i in range(n):
            Ti = T[:, i]
            pos = _continuous_loops(geom, starts[:, i], Ti, nq, rng)
            wq = (Ti / nq)[:, None]
            np.add.at(qvec, (np.arange(samples)[:, None].repeat(nq, 1), pos), wq)
            act_w *= geom.n_sites * norm_t * _diag_heat_vec(geom, Ti)
        pair = 0.5 * np.einsum("sx,xy,sy->s", qvec, vmat, qvec)
        series += N**n / np.exp(_lgamma(n)) * act_w * np.exp(-lam_cl * pair)
    est = mean_estimate(const * np.exp(-N * q0) * series, seed=seed)
    est.extra.update(q0=q0, activity=a_delta, kappa_delta=sym.kappa_delta)
    return est


def _diag_heat_vec(geom: TorusGeometry, t: np.ndarray) -> np.ndarray:
    evals, _ = _spectral_data(geom)
    return np.mean(np.exp(0.5 * t[:, None] * evals[None, :]), axis=1)


def _continuous_loops(geom: TorusGeometry, starts: np.ndarray, T: np.ndarray,
                      nq: int, rng) -> np.ndarray:
    """Pinned lattice walks sampled at nq midpoint times of their own duration.

    Durations vary per path, so each conditional step uses per-sample heat
    matrices; |lattice| <= 4 keeps this cheap via the spectral form.
    """
    evals, evecs = _spectral_data(geom)

    def heat_vec(dt):
        # (S, n, n) heat kernels for per-sample time steps
        return np.einsum("ik,sk,jk->sij", evecs, np.exp(0.5 * dt[:, None] * evals), evecs)

    S = len(starts)
    tq = (np.arange(nq) + 0.5) / nq  # fractions of T
    pos = np.empty((S, nq), dtype=np.int64)
    cur = starts.copy()
    prev_frac = np.zeros(S)
    for j in range(nq):
        dt = (tq[j] - prev_frac) * T
        rem = (1.0 - tq[j]) * T
        step = heat_vec(dt)
        back = heat_vec(rem)
        probs = step[np.arange(S), cur, :] * back[np.arange(S), :, starts]
        cdf = np.cumsum(probs, axis=1)
        u = rng.random((S, 1)) * cdf[:, -1:]
        cur = (cdf < u).sum(axis=1)
        pos[:, j] = cur
        prev_frac = np.full(S, tq[j])
    return pos
