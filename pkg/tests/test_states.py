import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from broadcast_discord.exceptions import DimensionError, DomainError
from broadcast_discord.states import (DensityMatrix, bell_state, conditional_mutual_information,
                                      fidelity_closed_form, is_quantum_classical, ket, kron,
                                      maximally_mixed, mutual_information, partial_trace,
                                      partial_transpose, product_state, proj, quantum_classical_state,
                                      random_density_matrix, random_unitary, similarity,
                                      state_family_fig2, trace_distance, von_neumann_entropy)

X = np.array([[0, 1], [1, 0]])
PLUS = np.array([1, 1]) / np.sqrt(2)
MINUS = np.array([1, -1]) / np.sqrt(2)


def test_density_matrix_validation():
    with pytest.raises(DomainError):
        DensityMatrix(np.diag([0.6, 0.6]))
    with pytest.raises(DomainError):
        DensityMatrix(np.diag([1.2, -0.2]))
    with pytest.raises(DomainError):
        DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(DimensionError):
        DensityMatrix(np.eye(4) / 4, dims=(2, 3))
    rho = DensityMatrix(np.eye(4) / 4, dims=(2, 2))
    assert rho.order == 4 and rho.dims == (2, 2)


def test_kron_examples():
    assert np.allclose(kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.allclose(kron(proj(ket(0, 2)), proj(ket(1, 2))), np.diag([0, 1, 0, 0]))
    assert np.allclose(kron(X, X) @ np.kron(ket(0, 2), ket(0, 2)), np.kron(ket(1, 2), ket(1, 2)))


def test_partial_trace_examples():
    ra = random_density_matrix(2, seed=1).data
    rb = random_density_matrix(3, seed=2).data
    assert np.allclose(partial_trace(np.kron(ra, rb), [2, 3], [0]), ra, atol=1e-14)
    assert np.allclose(partial_trace(np.kron(ra, rb), [2, 3], [1]), rb, atol=1e-14)
    assert np.allclose(partial_trace(bell_state().data, [2, 2], [0]), np.eye(2) / 2)
    psi0 = np.array([np.cos(np.pi / 8), np.sin(np.pi / 8)])
    psi1 = np.array([np.cos(np.pi / 8), -np.sin(np.pi / 8)])
    got = partial_trace(state_family_fig2(np.pi / 4).data, [2, 2], [1])
    assert np.allclose(got, (proj(psi0) + proj(psi1)) / 2)
    with pytest.raises(DimensionError):
        partial_trace(np.eye(4), [2, 3], [0])


def test_partial_transpose_examples():
    ra = random_density_matrix(2, seed=3).data
    rb = random_density_matrix(2, seed=4).data
    assert np.allclose(partial_transpose(np.kron(ra, rb), [2, 2], [1]), np.kron(ra, rb.T))
    w = np.linalg.eigvalsh(partial_transpose(bell_state().data, [2, 2], [1]))
    assert w[0] == pytest.approx(-0.5)
    m = random_density_matrix(6, seed=5).data
    assert np.allclose(partial_transpose(partial_transpose(m, [2, 3], [1]), [2, 3], [1]), m)
    with pytest.raises(DimensionError):
        partial_transpose(m, [2, 2], [0])


def test_fidelity_examples():
    rho = random_density_matrix(3, seed=6)
    assert fidelity_closed_form(rho, rho) == pytest.approx(1, abs=1e-10)
    assert fidelity_closed_form(proj(ket(0, 2)), proj(ket(1, 2))) == pytest.approx(0, abs=1e-12)
    assert fidelity_closed_form(proj(ket(0, 2)), proj(PLUS)) == pytest.approx(1 / np.sqrt(2))
    with pytest.raises(DomainError):
        fidelity_closed_form(np.diag([1.5, -0.5]), np.eye(2) / 2)


def test_fidelity_symmetric():
    a, b = random_density_matrix(4, rank=2, seed=7), random_density_matrix(4, seed=8)
    assert fidelity_closed_form(a, b) == pytest.approx(fidelity_closed_form(b, a), abs=1e-10)


def test_trace_distance_examples():
    rho = random_density_matrix(3, seed=9)
    assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-14)
    assert trace_distance(proj(ket(0, 2)), proj(ket(1, 2))) == pytest.approx(1)
    assert trace_distance(proj(ket(0, 2)), proj(PLUS)) == pytest.approx(1 / np.sqrt(2))
    with pytest.raises(DimensionError):
        trace_distance(np.eye(2) / 2, np.eye(3) / 3)


def test_trace_distance_triangle():
    for s in range(30):
        a, b, c = (random_density_matrix(3, seed=[s, i]) for i in range(3))
        assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-12


def test_entropy_examples():
    assert von_neumann_entropy(proj(ket(0, 2))) == pytest.approx(0, abs=1e-12)
    assert von_neumann_entropy(np.eye(2) / 2) == pytest.approx(1)
    assert von_neumann_entropy(np.diag([0.75, 0.25])) == pytest.approx(0.81128, abs=1e-5)


def test_mutual_information_examples():
    ra, rb = random_density_matrix(2, seed=10), random_density_matrix(3, seed=11)
    assert mutual_information(product_state(ra, rb)) == pytest.approx(0, abs=1e-10)
    assert mutual_information(bell_state()) == pytest.approx(2)
    rc = random_density_matrix(2, seed=12)
    rab = random_density_matrix(4, seed=13, dims=(2, 2))
    abc = DensityMatrix(np.kron(rab.data, rc.data), (2, 2, 2))
    assert conditional_mutual_information(abc) == pytest.approx(mutual_information(rab), abs=1e-10)
    with pytest.raises(DimensionError):
        mutual_information(DensityMatrix(np.eye(8) / 8, (2, 2, 2)))


def test_mutual_information_additive():
    r1 = random_density_matrix(4, seed=14, dims=(2, 2))
    r2 = random_density_matrix(4, seed=15, dims=(2, 2))
    # (A1 B1) (x) (A2 B2) regrouped as (A1 A2):(B1 B2)
    t = np.kron(r1.data, r2.data).reshape([2] * 8).transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(16, 16)
    both = DensityMatrix(t, (4, 4))
    assert mutual_information(both) == pytest.approx(mutual_information(r1) + mutual_information(r2), abs=1e-9)


def test_fig2_family_examples():
    assert np.allclose(state_family_fig2(0).data, np.kron(np.eye(2) / 2, proj(ket(0, 2))))
    expected = (np.kron(proj(ket(0, 2)), proj(PLUS)) + np.kron(proj(ket(1, 2)), proj(MINUS))) / 2
    assert np.allclose(state_family_fig2(np.pi / 2).data, expected)
    rho = state_family_fig2(np.pi / 4)
    b0 = 2 * rho.data[:2, :2]
    b1 = 2 * rho.data[2:, 2:]
    # each conditional block is a pure projector; overlap |<psi0|psi1>|^2 = cos^2(pi/4)
    assert np.trace(b0 @ b1).real == pytest.approx(np.cos(np.pi / 4) ** 2)
    assert rho.dims == (2, 2)
    with pytest.raises(DomainError):
        state_family_fig2(2.0)
    with pytest.raises(DomainError):
        state_family_fig2(-0.1)


def test_fig2_classical_only_at_endpoints():
    assert is_quantum_classical(state_family_fig2(0))
    assert is_quantum_classical(state_family_fig2(np.pi / 2))
    for t in np.linspace(0.05, np.pi / 2 - 0.05, 7):
        assert not is_quantum_classical(state_family_fig2(t))


def test_quantum_classical_state_examples():
    ra = random_density_matrix(2, seed=16).data
    one = quantum_classical_state([1.0], [ra], [ket(0, 2)])
    assert np.allclose(one.data, np.kron(ra, proj(ket(0, 2))))
    cc = quantum_classical_state([0.5, 0.5], [proj(ket(0, 2)), proj(ket(1, 2))], np.eye(2))
    assert np.allclose(cc.data, np.diag([0.5, 0, 0, 0.5]))
    assert is_quantum_classical(cc)
    with pytest.raises(DomainError):
        quantum_classical_state([0.5, 0.5], [ra, ra], [ket(0, 2), PLUS])


def test_random_density_matrix_examples():
    pure = random_density_matrix(3, rank=1, seed=17)
    assert von_neumann_entropy(pure) == pytest.approx(0, abs=1e-9)
    assert np.array_equal(random_density_matrix(4, seed=18).data, random_density_matrix(4, seed=18).data)
    assert np.all(random_density_matrix(4, rank=4, seed=19).eigvals() > 0)
    w = random_density_matrix(5, rank=2, seed=20).eigvals()
    assert np.sum(w > 1e-10) == 2
    with pytest.raises(DomainError):
        random_density_matrix(3, rank=4)


def test_text_round_trip(tmp_path):
    rho = random_density_matrix(6, rank=3, seed=21, dims=(2, 3))
    text = rho.to_text()
    assert text.splitlines()[0] == "dims: 2 3"
    back = DensityMatrix.from_text(text)
    assert back.dims == (2, 3)
    assert np.array_equal(back.data, rho.data)
    rho.save(tmp_path / "s.txt")
    assert np.array_equal(DensityMatrix.load(tmp_path / "s.txt").data, rho.data)


def test_fuchs_van_de_graaf_1000_pairs():
    rng = np.random.default_rng(0)
    for s in range(1000):
        d = int(rng.integers(2, 7))
        rank_a, rank_b = (int(r) for r in rng.integers(1, d + 1, size=2))
        rep = similarity(random_density_matrix(d, rank_a, seed=[s, 0]),
                         random_density_matrix(d, rank_b, seed=[s, 1]))
        assert 0 <= rep.fidelity <= 1 and 0 <= rep.trace_distance <= 1
        lo, hi = rep.fuchs_van_de_graaf_slack()
        assert lo >= -1e-12 and hi >= -1e-8


def test_entropy_unitary_invariance():
    for s in range(40):
        rho = random_density_matrix(4, rank=1 + s % 4, seed=s)
        u = random_unitary(4, seed=1000 + s)
        assert abs(von_neumann_entropy(u @ rho.data @ u.conj().T) - von_neumann_entropy(rho)) <= 1e-9


def test_qc_detection_rotated_basis():
    u = random_unitary(2, seed=3)
    rho = quantum_classical_state([0.3, 0.7], [random_density_matrix(3, seed=1), random_density_matrix(3, seed=2)], u)
    assert is_quantum_classical(rho)
    assert not is_quantum_classical(bell_state())
    assert is_quantum_classical(maximally_mixed(4).data, dims=(2, 2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 3), st.integers(2, 3))
def test_partial_trace_of_product_recovers_factors(seed, da, db):
    ra = random_density_matrix(da, seed=[seed, 0]).data
    rb = random_density_matrix(db, seed=[seed, 1]).data
    m = np.kron(ra, rb)
    assert np.allclose(partial_trace(m, [da, db], [0]), ra, atol=1e-13)
    assert np.allclose(partial_trace(m, [da, db], [1]), rb, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([(2, 2, 2), (2, 2, 3)]))
def test_strong_subadditivity(seed, dims):
    rho = random_density_matrix(int(np.prod(dims)), seed=seed, dims=dims)
    assert conditional_mutual_information(rho) >= -1e-9
