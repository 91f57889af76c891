import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from spinherald.fock_basis import (
    BasisSizeError,
    CollectiveState,
    build_basis,
    collective_spin_ops,
    dump_basis,
    dump_operator,
    generator_G,
    highest_weight_state,
    lowest_weight_state,
    product_state_m0,
    quadrupole_op,
    total_spin_squared,
)
from tests.oracles import spin_populations_by_projection


def basis_vec(basis, p, z):
    v = np.zeros(basis.dim, dtype=complex)
    v[basis.index(p, z)] = 1
    return v


@pytest.mark.parametrize("N, dim", [(1, 3), (2, 6), (1000, 501501)])
def test_basis_size(N, dim):
    assert build_basis(N).dim == dim


@pytest.mark.parametrize("N", [0, -1, 2.5, 10**6])
def test_basis_size_errors(N):
    with pytest.raises(BasisSizeError):
        build_basis(N)


@given(st.integers(1, 60))
def test_index_is_a_bijection_in_lexicographic_order(N):
    b = build_basis(N)
    assert b.dim == (N + 1) * (N + 2) // 2
    np.testing.assert_array_equal(b.index(b.n_plus, b.n_zero), np.arange(b.dim))
    keys = list(zip(b.n_plus, b.n_zero))
    assert keys == sorted(keys)
    assert np.all(b.n_minus >= 0)


def test_sz_eigenvalues():
    N = 5
    b = build_basis(N)
    sz, _, _ = collective_spin_ops(b)
    zero = basis_vec(b, 0, N)
    up = basis_vec(b, N, 0)
    assert np.allclose(sz @ zero, 0)
    assert np.allclose(sz @ up, N * up)


def test_splus_single_atom():
    b = build_basis(1)
    _, sp, _ = collective_spin_ops(b)
    out = sp @ basis_vec(b, 0, 0)
    assert np.allclose(out, np.sqrt(2) * basis_vec(b, 0, 1))


@pytest.mark.parametrize("N", [1, 2, 7, 15])
def test_spin_algebra(N):
    b = build_basis(N)
    sz, sp, sm = collective_spin_ops(b)
    assert abs(sp.conj().T - sm).max() == 0
    assert abs((sz @ sp - sp @ sz) - sp).max() < 1e-12
    assert abs((sz @ sm - sm @ sz) + sm).max() < 1e-12


@pytest.mark.parametrize("N", [1, 2, 3, 10, 30])
def test_generator_equals_quadrupole_difference(N):
    b = build_basis(N)
    diff = quadrupole_op(b, "x", "x") - quadrupole_op(b, "y", "y")
    assert abs(generator_G(b) - diff).max() < 1e-12


def test_quadrupole_properties():
    b1 = build_basis(1)
    assert abs(quadrupole_op(b1, "z", "z").diagonal().sum()) < 1e-12
    b = build_basis(4)
    assert abs(quadrupole_op(b, "x", "y") - quadrupole_op(b, "y", "x")).max() < 1e-12
    for i in "xyz":
        for j in "xyz":
            q = quadrupole_op(b, i, j)
            assert abs(q - q.conj().T).max() < 1e-12
    with pytest.raises(ValueError):
        quadrupole_op(b, "x", "w")


def test_generator_examples():
    N = 6
    b = build_basis(N)
    G = generator_G(b)
    assert np.allclose(G @ basis_vec(b, 0, N), 0)
    out = G @ basis_vec(b, 0, 0)
    assert np.allclose(out, 2 * np.sqrt(N) * basis_vec(b, 1, 0))
    assert abs(G - G.conj().T).max() == 0
    # every nonzero connects triples differing by (+-1, 0, -+1)
    coo = sps.coo_matrix(G)
    dp = b.n_plus[coo.row] - b.n_plus[coo.col]
    assert set(np.abs(dp)) == {1}
    np.testing.assert_array_equal(b.n_zero[coo.row], b.n_zero[coo.col])
    np.testing.assert_array_equal(np.abs(b.magnetization[coo.row] - b.magnetization[coo.col]), 2)


def test_total_spin_squared():
    b1 = build_basis(1)
    s2 = total_spin_squared(b1)
    v = basis_vec(b1, 0, 1)
    assert np.allclose(s2 @ v, 2 * v)
    b = build_basis(8)
    sz, _, _ = collective_spin_ops(b)
    s2 = total_spin_squared(b)
    assert abs(s2 @ sz - sz @ s2).max() < 1e-10
    w = np.linalg.eigvalsh(s2.toarray())
    S = (np.sqrt(1 + 4 * w) - 1) / 2
    assert np.allclose(S, np.round(S), atol=1e-9)


def test_product_state_spin_squared():
    # N=2: <S^2> = |c_2|^2 * 6 + |c_0|^2 * 0 = 4 = 2N
    for N in (2, 3, 9):
        b = build_basis(N)
        psi = product_state_m0(b)
        sz, _, _ = collective_spin_ops(b)
        assert abs(psi.expect(sz)) == 0
        s2 = psi.expect(total_spin_squared(b)).real
        assert s2 == pytest.approx(2 * N, abs=1e-10)
        pops = spin_populations_by_projection(N)
        S = np.arange(N + 1)
        assert s2 == pytest.approx(np.dot(pops, S * (S + 1)), abs=1e-9)
    b3 = build_basis(3)
    assert product_state_m0(b3).amplitudes[b3.index(0, 3)] == 1


def residuals(basis, psi, S, lowest=True):
    sz, sp, sm = collective_spin_ops(basis)
    s2 = total_spin_squared(basis)
    ann = sm if lowest else sp
    sign = 1 if lowest else -1
    return (
        np.linalg.norm(s2 @ psi - S * (S + 1) * psi),
        np.linalg.norm(sz @ psi + sign * S * psi),
        np.linalg.norm(ann @ psi),
    )


@pytest.mark.parametrize("N", [1, 2, 5, 12, 20])
def test_extremal_states_pass_eigen_residuals(N):
    b = build_basis(N)
    for S in range(N % 2, N + 1, 2):
        for method in ("pairs", "nullspace"):
            lo = lowest_weight_state(b, S, method)
            hi = highest_weight_state(b, S, method)
            assert max(residuals(b, lo.amplitudes, S, True)) <= 1e-10
            assert max(residuals(b, hi.amplitudes, S, False)) <= 1e-10
        np.testing.assert_allclose(
            lowest_weight_state(b, S).amplitudes, lowest_weight_state(b, S, "nullspace").amplitudes, atol=1e-12
        )


def test_pair_construction_scales():
    b = build_basis(300)
    for S in (0, 18, 150, 300):
        assert max(residuals(b, lowest_weight_state(b, S).amplitudes, S)) <= 1e-10


def test_extremal_examples():
    b1 = build_basis(1)
    assert np.allclose(lowest_weight_state(b1, 1).amplitudes, basis_vec(b1, 0, 0))
    assert np.allclose(highest_weight_state(b1, 1).amplitudes, basis_vec(b1, 1, 0))
    b = build_basis(7)
    assert np.allclose(lowest_weight_state(b, 7).amplitudes, basis_vec(b, 0, 0))
    assert np.allclose(highest_weight_state(b, 7).amplitudes, basis_vec(b, 7, 0))


def test_two_atom_singlet():
    # two-atom singlet from Clebsch-Gordan tables: (|+-> - |00> + |-+>)/sqrt(3);
    # in occupations that is (sqrt(2)|1,0,1> - |0,2,0>)/sqrt(3), up to phase
    b = build_basis(2)
    singlet = (np.sqrt(2) * basis_vec(b, 1, 0) - basis_vec(b, 0, 2)) / np.sqrt(3)
    psi = lowest_weight_state(b, 0).amplitudes
    assert abs(abs(np.vdot(singlet, psi)) - 1) < 1e-12
    # phase: first contributing triple (0,2,0) is real positive
    assert psi[b.index(0, 2)].real > 0 and psi[b.index(0, 2)].imag == 0


@pytest.mark.parametrize("N, S", [(4, 3), (5, 0), (3, 4), (3, -1)])
def test_extremal_domain_errors(N, S):
    with pytest.raises(ValueError):
        lowest_weight_state(build_basis(N), S)


def test_m_selection_rule_between_extremal_states():
    for N in range(1, 21):
        b = build_basis(N)
        G = generator_G(b)
        states = {S: lowest_weight_state(b, S).amplitudes for S in range(N % 2, N + 1, 2)}
        for S, u in states.items():
            assert abs(np.vdot(u, G @ u)) < 1e-12
            for S2, v in states.items():
                if abs(S - S2) != 2:
                    assert abs(np.vdot(u, G @ v)) < 1e-12


def test_collective_state_validates_norm():
    b = build_basis(2)
    with pytest.raises(ValueError):
        CollectiveState(b, np.ones(b.dim))


def test_debug_dumps(tmp_path):
    b = build_basis(1)
    dump_basis(b, tmp_path / "basis.txt")
    dump_operator(generator_G(b), tmp_path / "g.txt")
    assert (tmp_path / "basis.txt").read_text().splitlines()[1] == "0 0 0 1"
    lines = (tmp_path / "g.txt").read_text().splitlines()
    assert lines[0] == "# row col re im dim=3"
    assert lines[1:] == ["0 2 2.0 0.0", "2 0 2.0 0.0"]
