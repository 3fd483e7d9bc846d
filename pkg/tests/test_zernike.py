import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zrnet import zernike
from zrnet.errors import ConfigError, DomainError, ShapeError

# (j, n, m) written out by hand from j = (n(n+2)+m)/2
ANSI_TABLE = [
    (0, 0, 0), (1, 1, -1), (2, 1, 1), (3, 2, -2), (4, 2, 0), (5, 2, 2),
    (6, 3, -3), (7, 3, -1), (8, 3, 1), (9, 3, 3), (10, 4, -4), (11, 4, -2),
    (12, 4, 0), (13, 4, 2), (14, 4, 4), (15, 5, -5), (16, 5, -3), (20, 5, 5),
    (21, 6, -6), (24, 6, 0), (27, 6, 6),
]


@pytest.mark.parametrize("j,n,m", ANSI_TABLE)
def test_ansi_table(j, n, m):
    assert zernike.ansi_nm(j) == (n, m)
    assert zernike.nm_ansi(n, m) == j


@given(st.integers(0, 5000))
def test_ansi_round_trip(j):
    n, m = zernike.ansi_nm(j)
    assert abs(m) <= n and (n - m) % 2 == 0
    assert zernike.nm_ansi(n, m) == j


@pytest.mark.parametrize("bad", [-1, 2.5])
def test_ansi_rejects_bad_index(bad):
    with pytest.raises(DomainError):
        zernike.ansi_nm(bad)


@pytest.mark.parametrize("n,m", [(2, 1), (1, 3), (-1, 0)])
def test_nm_rejects_invalid_pairs(n, m):
    with pytest.raises(DomainError):
        zernike.nm_ansi(n, m)


CLOSED_FORMS = {
    (2, 0): lambda r: 2 * r**2 - 1,
    (2, 2): lambda r: r**2,
    (3, 1): lambda r: 3 * r**3 - 2 * r,
    (4, 0): lambda r: 6 * r**4 - 6 * r**2 + 1,
    (4, 2): lambda r: 4 * r**4 - 3 * r**2,
    (5, 1): lambda r: 10 * r**5 - 12 * r**3 + 3 * r,
    (6, 0): lambda r: 20 * r**6 - 30 * r**4 + 12 * r**2 - 1,
    (6, 4): lambda r: 6 * r**6 - 5 * r**4,
}


@pytest.mark.parametrize("nm", sorted(CLOSED_FORMS))
def test_radial_matches_closed_form(nm):
    rho = np.linspace(0.0, 1.0, 101)
    np.testing.assert_allclose(zernike.radial_poly(*nm, rho), CLOSED_FORMS[nm](rho), atol=1e-12)


@given(st.integers(0, 10).flatmap(lambda n: st.tuples(st.just(n), st.sampled_from(range(n % 2, n + 1, 2)))))
def test_radial_is_one_at_edge(nm):
    assert zernike.radial_poly(*nm, np.array([1.0]))[0] == pytest.approx(1.0, abs=1e-9)


def test_radial_rejects_outside_disk():
    with pytest.raises(DomainError):
        zernike.radial_poly(2, 0, np.array([1.5]))


def test_mode_norm_values():
    assert zernike.mode_norm(2, 0) == pytest.approx(math.sqrt(3))
    assert zernike.mode_norm(3, -1) == pytest.approx(math.sqrt(8))


def test_grid_pixels_on_edge_are_inside():
    grid = zernike.UnitDiskGrid.build(64)
    assert np.all(grid.mask == (grid.rho <= 1.0))
    assert grid.mask.sum() > 0.75 * 64 * 64
    with pytest.raises(ValueError):
        grid.rho[0, 0] = 0.0  # read-only


def test_grid_fraction_shrinks_disk():
    full = zernike.UnitDiskGrid.build(64, 1.0).mask.sum()
    half = zernike.UnitDiskGrid.build(64, 0.5).mask.sum()
    assert half == pytest.approx(full / 4, rel=0.05)


def test_modes_orthonormal_on_fine_grid():
    grid = zernike.UnitDiskGrid.build(256)
    basis = zernike.mode_basis(grid)[:, grid.mask > 0]
    gram = basis @ basis.T / grid.mask.sum()
    assert np.max(np.abs(gram - np.eye(zernike.N_MODES))) < 2e-2


def test_defocus_shape():
    grid = zernike.UnitDiskGrid.build(33)
    z4 = zernike.evaluate_mode(4, grid)
    expected = math.sqrt(3) * (2 * grid.rho**2 - 1) * grid.mask
    np.testing.assert_allclose(z4, expected, atol=1e-12)


def test_odd_mode_uses_sine():
    grid = zernike.UnitDiskGrid.build(33)
    z3 = zernike.evaluate_mode(3, grid)  # (2, -2): sqrt(6) rho^2 sin(2 phi)
    expected = math.sqrt(6) * grid.rho**2 * np.sin(2 * grid.phi) * grid.mask
    np.testing.assert_allclose(z3, expected, atol=1e-12)


@pytest.mark.parametrize("j", [2, 28])
def test_evaluate_mode_range(j):
    with pytest.raises(DomainError):
        zernike.evaluate_mode(j, zernike.UnitDiskGrid.build(16))


@given(st.lists(st.floats(-1, 1), min_size=25, max_size=25), st.floats(-3, 3))
def test_compose_is_linear(c, s):
    grid = zernike.UnitDiskGrid.build(16)
    c = np.array(c)
    np.testing.assert_allclose(zernike.compose_wavefront(s * c, grid),
                               s * zernike.compose_wavefront(c, grid), atol=1e-9)


def test_compose_single_mode():
    grid = zernike.UnitDiskGrid.build(32)
    c = np.zeros(25)
    c[8] = 0.7
    np.testing.assert_allclose(zernike.compose_wavefront(c, grid), 0.7 * zernike.evaluate_mode(11, grid))


def test_wavefront_variance_equals_coefficient_energy(rng):
    grid = zernike.UnitDiskGrid.build(256)
    c = zernike.sample_coefficients(rng)
    phi = zernike.compose_wavefront(c, grid)[grid.mask > 0]
    assert np.mean(phi**2) == pytest.approx(np.sum(c**2), rel=2e-2)


@pytest.mark.parametrize("bad,error", [(np.zeros(24), ShapeError), (np.zeros((2, 26)), ShapeError),
                                       (np.array([np.nan] * 25), DomainError)])
def test_validate_coefficients(bad, error):
    with pytest.raises(error):
        zernike.validate_coefficients(bad)


def test_sampled_coefficients_in_range(rng):
    c = zernike.sample_coefficients(rng, size=1000)
    assert c.shape == (1000, 25)
    assert c.min() >= -1 and c.max() <= 1


def test_zero_prediction_error_level():
    c = zernike.sample_coefficients(np.random.default_rng(0), size=20000)
    assert math.sqrt(np.mean(np.sum(c**2, axis=1))) == pytest.approx(2.887, abs=0.01)


def test_azimuthal_grouping():
    table = zernike.grouping("azimuthal")
    assert len(table.groups) == 13
    members = {g.key[0]: set(g.members) for g in table.groups}
    assert members[0] == {4, 12, 24}
    assert members[-2] == {3, 11, 23}
    for m, j in [(-6, 21), (-5, 15), (5, 20), (6, 27)]:
        assert members[m] == {j}


def test_aberration_grouping():
    table = zernike.grouping("aberration")
    sets = [set(g.members) for g in table.groups]
    assert len(sets) == 14
    assert {11, 13} in sets and {6, 9} in sets and {7, 8} in sets


def test_none_grouping_is_single_group():
    (group,) = zernike.grouping("none").groups
    assert group.members == zernike.MODE_INDICES


@pytest.mark.parametrize("mode", zernike.GROUPING_MODES)
def test_grouping_partitions_modes(mode):
    seen = [j for g in zernike.grouping(mode).groups for j in g.members]
    assert sorted(seen) == list(zernike.MODE_INDICES)


def test_grouping_json():
    js = zernike.grouping("azimuthal").to_json()
    assert js["mode"] == "azimuthal"
    assert {"key": 0, "members": [4, 12, 24]} in js["groups"]


def test_unknown_grouping():
    with pytest.raises(ConfigError):
        zernike.grouping("radial")
