import numpy as np
import pytest

from bosegas.lattice import (CirclePotential, ModelParams, TimeGrid,
                             TorusGeometry, UnsupportedModeError,
                             constant_potential, delta_potential,
                             validate_potential, wrapped_gaussian_potential)


def test_geometry_counts_and_coords():
    g = TorusGeometry(dimension=2, sites_per_side=3)
    assert g.n_sites == 9
    coords = g.site_coords()
    assert coords.shape == (9, 2)
    assert g.site_index(coords[5]) == 5
    # wrap-around indexing
    assert g.site_index([-1, 4]) == g.site_index([2, 1])


def test_laplacian_spectrum_formula():
    # eigenvalues are 2 * sum_i (cos(2 pi k_i / m) - 1)
    for d, m in [(1, 4), (2, 3)]:
        g = TorusGeometry(dimension=d, sites_per_side=m)
        lap = g.laplacian_matrix()
        got = np.sort(np.linalg.eigvalsh(lap))
        ks = np.stack(np.meshgrid(*([np.arange(m)] * d), indexing="ij"),
                      axis=-1).reshape(-1, d)
        want = np.sort(2.0 * np.sum(np.cos(2 * np.pi * ks / m) - 1.0, axis=1))
        assert np.allclose(got, want, atol=1e-12)


def test_laplacian_small_sides():
    # m=1: isolated site, Laplacian vanishes; m=2: single eigenvalue -4 per dim
    g1 = TorusGeometry(dimension=1, sites_per_side=1)
    assert np.allclose(g1.laplacian_matrix(), 0.0)
    g2 = TorusGeometry(dimension=1, sites_per_side=2)
    assert np.allclose(np.sort(np.linalg.eigvalsh(g2.laplacian_matrix())),
                       [-4.0, 0.0])


def test_displacement_table_group_property():
    g = TorusGeometry(dimension=1, sites_per_side=5)
    table = g.displacement_table()
    assert table[3, 3] == 0
    assert table[4, 1] == 3
    assert table[1, 4] == 2  # -3 mod 5


def test_time_grid():
    grid = TimeGrid(nu=2.0, n_slices=8)
    assert grid.eps == pytest.approx(0.25)
    assert len(grid.times()) == 9
    with pytest.raises(ValueError):
        TimeGrid(nu=-1.0, n_slices=8)


def test_potential_validation():
    g = TorusGeometry(dimension=1, sites_per_side=4)
    assert bool(validate_potential(delta_potential(g)))
    assert bool(validate_potential(constant_potential(g)))
    assert bool(validate_potential(wrapped_gaussian_potential(g, width=1.0)))
    # a pure nearest-neighbour coupling has a negative Fourier coefficient
    bad = delta_potential(g)
    bad.values = np.array([0.0, 1.0, 0.0, 1.0])
    report = validate_potential(bad)
    assert not report.passed and report.offending_modes


def test_potential_fourier_delta():
    g = TorusGeometry(dimension=1, sites_per_side=4)
    v = delta_potential(g, strength=2.0)
    assert np.allclose(v.fourier_coefficients(), 0.5)
    assert v.at_origin == 2.0
    assert v.total() == 2.0
    assert np.allclose(v.matrix(), 2.0 * np.eye(4))


def test_circle_potential():
    v = CirclePotential(4.0, strength=1.0, width=0.5)
    x = np.linspace(0, 4, 17)
    assert np.allclose(v(x), v(x + 4.0))          # periodic
    assert np.allclose(v(x), v(-x))               # even
    assert np.all(v.fourier_coefficients() >= 0)  # positive type
    assert v.total() == pytest.approx(0.5 * np.sqrt(2 * np.pi))


def test_model_params():
    p = ModelParams(nu=0.5, kappa0=1.0, lambda0=2.0, n_species=3.0,
                    coupling_mode="meanfield")
    assert p.lam == pytest.approx(2.0 * 0.25 / 4.0)
    assert ModelParams(nu=1.0, kappa0=1.0, lambda0=2.0).lam == 2.0
    with pytest.raises(ValueError):
        ModelParams(nu=1.0, kappa0=0.0)
    with pytest.raises(ValueError):
        ModelParams(nu=1.0, kappa0=1.0, lambda0=-1.0)
    q = p.with_rho(0.7)
    assert q.rho == 0.7 and q.rho_mode == "explicit" and q.nu == p.nu


def test_circle_mode_restrictions():
    with pytest.raises(UnsupportedModeError):
        TorusGeometry(dimension=2, mode="circle", circumference=1.0)
    g = TorusGeometry(dimension=1, mode="circle", circumference=3.0)
    with pytest.raises(UnsupportedModeError):
        g.laplacian_matrix()
