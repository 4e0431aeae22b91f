import math

import numpy as np
import pytest

from bosegas.hsfield import wick_rho
from bosegas.lattice import (CirclePotential, ModelParams, TorusGeometry,
                             delta_potential)
from bosegas.limits import (LimitSweep, activity_to_kappa, classical_xi,
                            largeN_check, saddle_point)
from bosegas.propagators import ideal_occupation

G1 = TorusGeometry(dimension=1, sites_per_side=1)
G2 = TorusGeometry(dimension=1, sites_per_side=2)


def test_sweep_verdict_logic():
    good = LimitSweep("nu", [0.4, 0.2], [0.2, 0.05], [0.01, 0.01], 0.1)
    assert good.monotone_decreasing and good.final_ok and good.verdict
    flat = LimitSweep("nu", [0.4, 0.2], [0.2, 0.19], [0.05, 0.05], 0.5)
    assert not flat.monotone_decreasing
    bad_final = LimitSweep("nu", [0.4, 0.2], [0.5, 0.3], [0.01, 0.01], 0.1)
    assert not bad_final.final_ok


def test_classical_xi_free_single_site():
    # lattice, lambda0 = 0: Xi = sum z^n / n! = e^z truncated
    out = classical_xi(0.7, 0.0, 1.0, G1, delta_potential(G1), n_max=8)
    assert out["value"] == pytest.approx(np.exp(0.7), rel=1e-5)
    assert out["tail_rel"] < 1e-4


def test_classical_xi_interacting_single_site():
    # one site: integral is exp(-lambda0 n^2 v(0) / 2), summable directly
    lam, z = 0.5, 0.6
    v = delta_potential(G1)
    want = sum(z**n / math.factorial(n) * np.exp(-0.5 * lam * n * n)
               for n in range(6))
    out = classical_xi(z, lam, 1.0, G1, v, n_max=5)
    assert out["value"] == pytest.approx(want, rel=1e-12)


def test_classical_xi_circle_free():
    # free circle gas: integral over n positions gives L^n
    L = 4.0
    circle = TorusGeometry(dimension=1, mode="circle", circumference=L)
    v = CirclePotential(L, strength=1.0, width=0.5)
    out = classical_xi(0.3, 0.0, 1.0, circle, v, n_max=4)
    want = sum((0.3 * L)**n / math.factorial(n) for n in range(5))
    assert out["value"] == pytest.approx(want, rel=1e-6)
    assert out["quadrature_converged"]


def test_classical_xi_species_scaling():
    # n_species enters only through z N
    v = delta_potential(G2)
    a = classical_xi(0.4, 0.3, 2.0, G2, v, n_max=4)
    b = classical_xi(0.8, 0.3, 1.0, G2, v, n_max=4)
    assert a["value"] == pytest.approx(b["value"], rel=1e-12)


def test_classical_xi_order_cap():
    with pytest.raises(ValueError):
        classical_xi(0.5, 0.0, 1.0, G1, delta_potential(G1), n_max=9)


def test_activity_to_kappa_inverts():
    for z, nu, d in [(0.5, 0.25, 1), (1.2, 0.1, 2)]:
        kappa = activity_to_kappa(z, nu, d)
        assert np.exp(-kappa * nu) * nu**(-0.5 * d) == pytest.approx(z)
    with pytest.raises(ValueError):
        activity_to_kappa(0.0, 1.0, 1)


def test_saddle_free_coupling():
    p = ModelParams(nu=1.0, kappa0=1.0, lambda0=0.0)
    sd = saddle_point(p, G2, delta_potential(G2))
    assert sd.shift == 0.0 and sd.kappa_ren == 1.0


def test_saddle_stationarity():
    p = ModelParams(nu=1.0, kappa0=1.0, lambda0=1.0, n_species=4.0, rho=0.2)
    v = delta_potential(G2)
    sd = saddle_point(p, G2, v)
    coupling = p.lambda0 * v.total() * 4.0 / 5.0
    lhs = sd.shift
    rhs = coupling * (ideal_occupation(G2, 1.0, sd.kappa_ren) - 0.2)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_saddle_vanishes_at_wick_density():
    # rho at the ideal occupation makes the tadpole cancel exactly
    p = ModelParams(nu=1.0, kappa0=1.0, lambda0=1.0,
                    rho=wick_rho(G2, 1.0, 1.0))
    sd = saddle_point(p, G2, delta_potential(G2))
    assert abs(sd.shift) < 1e-10
    assert sd.residual < 1e-12


def test_largeN_requires_increasing_list():
    from bosegas.lattice import TimeGrid

    p = ModelParams(nu=1.0, kappa0=1.0, lambda0=0.25)
    with pytest.raises(ValueError):
        largeN_check(p, G2, TimeGrid(nu=1.0, n_slices=8),
                     delta_potential(G2), [16, 4], samples=8)
