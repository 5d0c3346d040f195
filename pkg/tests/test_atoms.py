"""Dictionary of first-order atoms and the implicit-conjugate coefficients."""

import numpy as np
import pytest

from ltpid import (AtomResponseMatrix, CoefficientMatrix, GridSpec, PoleGrid,
                   PeriodicStateSpace, REFERENCE_GRID_PRESET, atom_response,
                   build_atom_responses, build_pole_grid,
                   hankel_nuclear_norm_of_atom, reconstruct, response_basis,
                   true_impulse_response)


def test_atom_response_hand_values():
    # (1 - |w|^2) w^(i-1) at w = 0.5j: 0.75 * (1, 0.5j, -0.25, -0.125j)
    a = atom_response(0.5j, 4)
    assert a == pytest.approx([0.75, 0.375j, -0.1875, -0.09375j], abs=1e-16)
    b = atom_response(0.5, 3)
    assert b == pytest.approx([0.75, 0.375, 0.1875], abs=1e-16)


def test_atom_response_rejects_unit_circle():
    with pytest.raises(ValueError):
        atom_response(1.0, 10)
    with pytest.raises(ValueError):
        atom_response(0.8 + 0.7j, 10)


def test_atom_hankel_norm_closed_form(rng):
    # the truncated Hankel of an atom is rank one, so its nuclear norm is
    # sqrt((1 - r^(2 m)) (1 - r^(2 (N - m + 1)))) exactly
    for w in (0.3, -0.7, 0.5j, 0.6 * np.exp(0.8j), 0.98, 0.95 + 0.2j):
        n_taps, m = 100, 20
        r = abs(w)
        expected = np.sqrt((1.0 - r ** (2 * m))
                           * (1.0 - r ** (2 * (n_taps - m + 1))))
        got = hankel_nuclear_norm_of_atom(w, n_taps, m)
        assert got == pytest.approx(expected, abs=1e-12)


def test_atom_hankel_norm_approaches_one():
    assert hankel_nuclear_norm_of_atom(0.5, 100, 20) == pytest.approx(
        1.0, abs=1e-12)
    # slow poles need a longer window than (100, 20) provides
    assert hankel_nuclear_norm_of_atom(0.98, 100, 20) < 1.0 - 1e-3
    assert hankel_nuclear_norm_of_atom(0.98, 4000, 800) == pytest.approx(
        1.0, abs=1e-9)


def test_reference_grid_counts():
    grid = build_pole_grid(GridSpec.reference())
    assert grid.n_poles == 51 * 51
    assert int(grid.is_complex.sum()) == 51 * 49
    assert grid.n_poles_nominal == 51 * 51 + 51 * 49
    radii = np.abs(grid.poles)
    assert radii.max() == pytest.approx(0.999)
    assert radii.min() == pytest.approx(0.02)


def test_grid_snaps_real_axis():
    grid = build_pole_grid(GridSpec(radii=(0.5,),
                                    angles=(0.0, np.pi / 2, np.pi),
                                    n_taps=10))
    assert grid.n_poles == 3
    real = grid.poles[~grid.is_complex]
    assert np.array_equal(np.sort(real.real), [-0.5, 0.5])
    assert np.all(real.imag == 0.0)
    assert grid.poles[grid.is_complex].real == pytest.approx(0.0, abs=1e-16)


def test_pole_grid_validation():
    with pytest.raises(ValueError):
        PoleGrid(poles=np.array([1.0 + 0j]), is_complex=np.array([False]))
    with pytest.raises(ValueError):
        PoleGrid(poles=np.array([0.5 - 0.1j]), is_complex=np.array([True]))
    with pytest.raises(ValueError):  # duplicates
        PoleGrid(poles=np.array([0.5 + 0j, 0.5 + 0j]),
                 is_complex=np.array([False, False]))


def test_grid_spec_from_config():
    assert GridSpec.from_config(None, 64).n_taps == 64
    ref = GridSpec.from_config(REFERENCE_GRID_PRESET)
    assert len(ref.radii) == 51 and len(ref.angles) == 51
    custom = GridSpec.from_config({"radii": [0.4], "angles": [0.0], "N": 8})
    assert custom.n_taps == 8
    with pytest.raises(ValueError):
        GridSpec.from_config("no-such-preset")


def test_grid_spec_dict_roundtrip(tmp_path):
    spec = GridSpec(radii=(0.2, 0.8), angles=(0.0, 1.0), n_taps=16)
    back = GridSpec.from_config(spec.to_dict())
    assert back.radii == spec.radii
    assert back.angles == spec.angles
    assert back.n_taps == spec.n_taps


def test_response_basis_hand_values():
    grid = PoleGrid(poles=np.array([0.5 + 0j, 0.5j]),
                    is_complex=np.array([False, True]))
    basis = response_basis(build_atom_responses(grid, 4))
    assert basis.shape == (4, 4)
    # alpha columns: plain atom for the real pole, doubled real part for
    # the implicit pair; beta columns: zero for real, -2 Im for the pair
    assert basis[:, 0] == pytest.approx([0.75, 0.375, 0.1875, 0.09375])
    assert basis[:, 1] == pytest.approx([1.5, 0.0, -0.375, 0.0])
    assert basis[:, 2] == pytest.approx([0.0, 0.0, 0.0, 0.0])
    assert basis[:, 3] == pytest.approx([0.0, -0.75, 0.0, 0.1875])


def test_reconstruct_matches_complex_arithmetic(rng):
    grid = build_pole_grid(GridSpec(radii=(0.3, 0.7),
                                    angles=(0.0, 0.9, 2.2, np.pi),
                                    n_taps=30))
    atoms = build_atom_responses(grid, 30)
    period = 3
    alpha = rng.standard_normal((grid.n_poles, period))
    beta = rng.standard_normal((grid.n_poles, period))
    beta[~grid.is_complex] = 0.0
    coeffs = CoefficientMatrix(alpha=alpha, beta=beta,
                               is_complex=grid.is_complex)
    got = reconstruct(coeffs, atoms).values

    expected = np.zeros((30, period))
    for k, w in enumerate(grid.poles):
        a = atom_response(w, 30)
        for tau in range(period):
            c = alpha[k, tau] + 1j * beta[k, tau]
            term = c * a
            if grid.is_complex[k]:
                term = term + np.conj(c) * np.conj(a)
            expected[:, tau] += term.real
    assert np.allclose(got, expected, atol=1e-13)


def test_reconstruct_matches_modal_state_space():
    # a single conjugate pair with unit coefficient equals the impulse
    # response of the rotation realization scaled by 2 (1 - r^2)
    r, theta = 0.6, 0.7
    w = r * np.exp(1j * theta)
    grid = PoleGrid(poles=np.array([w]), is_complex=np.array([True]))
    coeffs = CoefficientMatrix(alpha=np.array([[1.0]]),
                               beta=np.array([[0.0]]),
                               is_complex=np.array([True]))
    got = reconstruct(coeffs, build_atom_responses(grid, 50)).values[:, 0]

    A = r * np.array([[[np.cos(theta), -np.sin(theta)],
                       [np.sin(theta), np.cos(theta)]]])
    B = np.array([[2.0 * (1.0 - r ** 2), 0.0]])
    C = np.array([[1.0, 0.0]])
    sys_ = PeriodicStateSpace(A=A, B=B, C=C)
    assert np.allclose(got, true_impulse_response(sys_, 50).values[:, 0],
                       atol=1e-12)


def test_coefficient_matrix_contract():
    with pytest.raises(ValueError):  # beta on a real pole
        CoefficientMatrix(alpha=np.zeros((1, 2)), beta=np.ones((1, 2)),
                          is_complex=np.array([False]))
    coeffs = CoefficientMatrix(alpha=np.array([[3.0, 0.0]]),
                               beta=np.array([[4.0, 0.0]]),
                               is_complex=np.array([True]))
    assert coeffs.modulus() == pytest.approx(np.array([[5.0, 0.0]]))
    assert coeffs.group_norms() == pytest.approx([5.0])
    back = CoefficientMatrix.from_stacked(coeffs.stacked(),
                                          coeffs.is_complex)
    assert np.array_equal(back.alpha, coeffs.alpha)
    assert np.array_equal(back.beta, coeffs.beta)


def test_atom_matrix_shape_contract(rng):
    grid = build_pole_grid(GridSpec(radii=(0.5,), angles=(0.0, 1.0),
                                    n_taps=12))
    atoms = build_atom_responses(grid, 12)
    assert isinstance(atoms, AtomResponseMatrix)
    assert atoms.n_taps == 12
    assert atoms.n_poles == 2
    with pytest.raises(ValueError):
        reconstruct(CoefficientMatrix(alpha=np.zeros((3, 1)),
                                      beta=np.zeros((3, 1)),
                                      is_complex=np.array([False] * 3)),
                    atoms)
