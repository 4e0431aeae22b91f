import numpy as np
import pytest

from bosegas.fock import duhamel_exact, xi_exact
from bosegas.lattice import (ModelParams, TimeGrid, TorusGeometry,
                             UnsupportedModeError, delta_potential)
from bosegas.loopgas import (GridPath, SymanzikParams, _lattice_bridges,
                             activity_table, duhamel_loopgas, free_loop_sum,
                             kappa_eff, loop_interaction_Vnu, make_symanzik,
                             sample_bridge, symanzik_series, xi_rel_series)
from bosegas.propagators import free_green, heat_propagator

G1 = TorusGeometry(dimension=1, sites_per_side=1)
G2 = TorusGeometry(dimension=1, sites_per_side=2)
GRID = TimeGrid(nu=1.0, n_slices=32)
FREE = ModelParams(nu=1.0, kappa0=1.0, lambda0=0.0)
BENCH = ModelParams(nu=1.0, kappa0=1.0, lambda0=0.5)


def test_free_loop_sum_single_site():
    # one site: Q = sum e^-l / l -> -log(1 - e^-1)
    q = free_loop_sum(G1, 1.0, 1.0, 60)
    assert q == pytest.approx(-np.log(1 - np.exp(-1)), abs=1e-12)


def test_free_loop_sum_is_log_xi():
    # the loop representation of the free gas: Q = log Xi_free
    want = -np.log(1 - np.exp(-1)) - np.log(1 - np.exp(-3))
    assert free_loop_sum(G2, 1.0, 1.0, 80) == pytest.approx(want, abs=1e-12)


def test_activity_table_single_site():
    act = activity_table(G1, 1.0, 2.0, 4)
    want = np.exp(-2.0 * np.arange(1, 5)) / np.arange(1, 5)
    assert np.allclose(act, want)


def test_kappa_eff_counterterm():
    v = delta_potential(G2, strength=1.5)
    p = ModelParams(nu=0.5, kappa0=1.0, lambda0=0.4, n_species=2.0, rho=0.3)
    want = 1.0 - 0.4 * 2.0 * 0.3 * 1.5 / 0.25
    assert kappa_eff(p, v) == pytest.approx(want)
    assert kappa_eff(FREE, v) == FREE.kappa0


def test_sample_bridge_endpoints():
    path = sample_bridge(G2, 0, 1, 2.0, GRID, seed=3)
    assert path.positions[0] == 0 and path.positions[-1] == 1
    assert path.n_steps == 64
    with pytest.raises(ValueError):
        sample_bridge(G2, 0, 1, 0.7 * GRID.eps, GRID)


def test_bridge_midpoint_marginal():
    # conditional law: P(mid = x) ~ p_{T/2}(0, x) p_{T/2}(x, 0)
    rng = np.random.default_rng(4)
    n_steps, T = 16, 16 * GRID.eps
    S = 20000
    pos = _lattice_bridges(G2, np.zeros(S, dtype=int), np.zeros(S, dtype=int),
                           n_steps, GRID.eps, rng)
    half = heat_propagator(G2, T / 2)
    probs = half[0, :] * half[:, 0]
    probs /= probs.sum()
    frac = np.mean(pos[:, n_steps // 2] == 0)
    se = np.sqrt(probs[0] * (1 - probs[0]) / S)
    assert abs(frac - probs[0]) < 5 * se


def test_loop_interaction_single_site():
    # every slice doubly occupied: V = (eps/2) * n_tau * l1 * l2 * v(0) ... x2
    v = delta_potential(G1, strength=2.0)
    p1 = GridPath(positions=np.zeros(2 * 32 + 1, dtype=int), eps=GRID.eps)
    p2 = GridPath(positions=np.zeros(3 * 32 + 1, dtype=int), eps=GRID.eps)
    got = loop_interaction_Vnu(p1, p2, 32, v, G1)
    assert got == pytest.approx(0.5 * 2 * 3 * 1.0 * 2.0)  # l l' nu v(0) / 2


def test_loop_interaction_phase_alignment():
    # paths on disjoint phases never interact
    v = delta_potential(G1)
    p1 = GridPath(positions=np.zeros(2, dtype=int), eps=GRID.eps, start_slice=0)
    p2 = GridPath(positions=np.zeros(2, dtype=int), eps=GRID.eps, start_slice=5)
    assert loop_interaction_Vnu(p1, p2, 32, v, G1) == 0.0


def test_xi_rel_series_free():
    v = delta_potential(G2)
    est = xi_rel_series(FREE, G2, GRID, v, 4, 40, 100)
    assert est.value == pytest.approx(1.0, abs=1e-12)
    assert est.stderr == 0.0


def test_xi_rel_series_matches_oracle():
    v = delta_potential(G2)
    oracle = xi_exact(BENCH, G2, v, n_max=16).xi_rel
    est = xi_rel_series(BENCH, G2, GRID, v, 6, 6, 4000, seed=2)
    assert abs(est.value.real - oracle) < 4 * max(est.stderr_re, 1e-3)
    assert not est.extra["truncation_flag"]


def test_duhamel_loopgas_free():
    v = delta_potential(G2)
    fg = free_green(G2, 1.0, 1.0)
    est = duhamel_loopgas(FREE, G2, GRID, v, 0.0, 0, 0.0, 1, 4, 30, 10)
    assert est.value.real == pytest.approx(fg[0, 1], abs=1e-10)
    # unequal times on one site: e^-s / (1 - e^-1)
    v1 = delta_potential(G1)
    est = duhamel_loopgas(FREE, G1, GRID, v1, 0.5, 0, 0.0, 0, 4, 40, 10)
    assert est.value.real == pytest.approx(np.exp(-0.5) / (1 - np.exp(-1)),
                                           abs=1e-10)


def test_duhamel_loopgas_matches_oracle():
    v = delta_potential(G2)
    want = duhamel_exact(BENCH, G2, v, 16, 0.25, 0, 0.0, 1)
    est = duhamel_loopgas(BENCH, G2, GRID, v, 0.25, 0, 0.0, 1, 6, 6, 4000,
                          seed=3)
    assert abs(est.value.real - want) < 4 * max(est.stderr_re, 2e-3)


def test_duhamel_domain_check():
    v = delta_potential(G2)
    with pytest.raises(ValueError):
        duhamel_loopgas(FREE, G2, GRID, v, 1.0, 0, 0.0, 0, 4, 6, 10)


def test_symanzik_lattice_only():
    circle = TorusGeometry(dimension=1, mode="circle", circumference=4.0)
    with pytest.raises(UnsupportedModeError):
        make_symanzik(FREE, circle, None, 1e-3, 12)
    with pytest.raises(ValueError):
        SymanzikParams(delta=0.0, n_max=4)


def test_symanzik_free_closed_form():
    v = delta_potential(G1)
    sym = make_symanzik(FREE, G1, v, 1e-3, 12)
    assert sym.kappa_delta == FREE.kappa0
    est = symanzik_series(FREE, G1, v, sym, 100)
    assert est.value == pytest.approx(1.0, abs=1e-12)


def test_symanzik_matches_radial_quadrature():
    # single site classical field theory: loop series vs deterministic oracle
    from bosegas.meanfield import field_quadrature_1site

    v = delta_potential(G1)
    p = ModelParams(nu=1.0, kappa0=1.0, lambda0=0.5)
    sym = make_symanzik(p, G1, v, 1e-3, 20)
    est = symanzik_series(p, G1, v, sym, 4000, seed=5)
    want = field_quadrature_1site(p, v)["z_rel"]
    assert abs(est.value.real - want) < 4 * max(est.stderr_re, 1e-3)
