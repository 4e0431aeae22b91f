import numpy as np
import pytest

from bosegas.fock import xi_exact
from bosegas.lattice import (CapacityError, ModelParams, TimeGrid,
                             TorusGeometry, delta_potential)
from bosegas.loopgas import GridPath, free_loop_sum
from bosegas.mayer import (enumerate_connected, log_xi_rel_partial,
                           mayer_factor, n_polynomial, ursell_coefficient)

G1 = TorusGeometry(dimension=1, sites_per_side=1)
G2 = TorusGeometry(dimension=1, sites_per_side=2)
GRID = TimeGrid(nu=1.0, n_slices=32)
FREE = ModelParams(nu=1.0, kappa0=1.0, lambda0=0.0)
BENCH = ModelParams(nu=1.0, kappa0=1.0, lambda0=0.25)


def test_connected_graph_counts():
    assert [len(enumerate_connected(n)) for n in (1, 2, 3, 4)] == [1, 1, 4, 38]


def test_connected_graph_count_order_five():
    assert len(enumerate_connected(5)) == 728


def test_cluster_order_capacity():
    with pytest.raises(CapacityError):
        enumerate_connected(6)
    with pytest.raises(CapacityError):
        ursell_coefficient(6, BENCH, G2, GRID, delta_potential(G2), 6, 10)


def test_spanning_trees_valid():
    for g in enumerate_connected(4):
        assert len(g.spanning_tree) == 3
        assert set(g.spanning_tree) <= set(g.edges)


def test_mayer_factor_single_site():
    # two one-period loops on one site: V = nu v(0) / 2, factor e^{-lam V / nu} - 1
    v = delta_potential(G1)
    p1 = GridPath(positions=np.zeros(33, dtype=int), eps=GRID.eps)
    p2 = GridPath(positions=np.zeros(33, dtype=int), eps=GRID.eps)
    got = mayer_factor(p1, p2, ModelParams(nu=1.0, kappa0=1.0, lambda0=1.0),
                       G1, 32, v)
    assert got == pytest.approx(np.expm1(-0.5))
    assert -1.0 < got <= 0.0


def test_b1_free_is_loop_activity():
    v = delta_potential(G2)
    b1 = ursell_coefficient(1, FREE, G2, GRID, v, 8, 50)
    assert b1.value == pytest.approx(free_loop_sum(G2, 1.0, 1.0, 8), abs=1e-12)
    assert b1.stderr == 0.0


def test_higher_orders_vanish_when_free():
    v = delta_potential(G2)
    for n in (2, 3):
        b = ursell_coefficient(n, FREE, G2, GRID, v, 8, 50)
        assert b.value == 0.0 and b.stderr == 0.0


def test_tree_bound_diagnostic():
    # |full graph product| never exceeds |spanning tree product| for v >= 0
    v = delta_potential(G2)
    b3 = ursell_coefficient(3, BENCH, G2, GRID, v, 6, 400, seed=1)
    assert b3.tree_bound_max <= 1.0 + 1e-12


def test_partial_sum_matches_oracle():
    v = delta_potential(G2)
    want = np.log(xi_exact(BENCH, G2, v, n_max=16).xi_rel)
    est = log_xi_rel_partial(BENCH, G2, GRID, v, 3, 6, 4000, seed=2)
    diff = abs(est.value.real - want)
    assert diff < max(0.01 * abs(want), 4 * est.stderr_re)
    assert set(est.extra["orders"]) == {1, 2, 3}


def test_alternating_order_magnitudes():
    # successive Ursell terms shrink and alternate in sign at weak coupling
    v = delta_potential(G2)
    est = log_xi_rel_partial(BENCH, G2, GRID, v, 3, 6, 2000, seed=3)
    orders = est.extra["orders"]
    assert orders[1][0] > 0 > orders[2][0]
    assert abs(orders[2][0]) > abs(orders[3][0])


def test_n_polynomial_scaling():
    # c_n = b_n / N^n should be N independent at fixed lam
    v = delta_potential(G2)
    c1 = n_polynomial(BENCH, G2, GRID, v, 2, 6, 2000, seed=4)
    p2 = ModelParams(nu=1.0, kappa0=1.0, lambda0=0.25, n_species=2.0)
    c2 = n_polynomial(p2, G2, GRID, v, 2, 6, 2000, seed=4)
    for n in (1, 2):
        se = np.hypot(c1["coefficients"][n][1], c2["coefficients"][n][1])
        assert abs(c1["coefficients"][n][0] - c2["coefficients"][n][0]) \
            < 5 * max(se, 1e-12) + 1e-10
