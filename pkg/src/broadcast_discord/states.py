"""Dense density matrices on small composite systems.

Subsystems are addressed by position in a ``dims`` list; the matrix index of
a composite basis state is the row-major (C order) flattening of its local
indices, consistent with :func:`numpy.kron`.

Entropies are in bits.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import unitary_group

from . import textio
from .exceptions import DimensionError, DomainError

TOL = 1e-10
ENTROPY_CUTOFF = 1e-12


def _mat(m) -> np.ndarray:
    if isinstance(m, DensityMatrix):
        return m.data
    return np.asarray(m, dtype=complex)


def hermitize(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    return (m + m.conj().T) / 2


def _check_dims(m: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if any(d < 1 for d in dims) or prod(dims) != m.shape[0]:
        raise DimensionError(f"dims {list(dims)} do not match matrix order {m.shape[0]}")
    return dims


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix with subsystem dims.

    Construction validates the state at tolerance ``tol``. ``dims`` defaults
    to a single subsystem.
    """

    data: np.ndarray
    dims: tuple[int, ...] = None
    labels: tuple[str, ...] | None = None
    tol: float = field(default=TOL, repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        dims = (data.shape[0],) if self.dims is None else self.dims
        dims = _check_dims(data, dims)
        if self.labels is not None and len(self.labels) != len(dims):
            raise DimensionError("labels and dims differ in length")
        if np.max(np.abs(data - data.conj().T), initial=0.0) > self.tol:
            raise DomainError("matrix is not Hermitian")
        if abs(np.trace(data) - 1) > self.tol:
            raise DomainError(f"trace is {np.trace(data).real:.3g}, not 1")
        if np.linalg.eigvalsh(hermitize(data))[0] < -self.tol:
            raise DomainError("matrix is not positive semidefinite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def order(self) -> int:
        return self.data.shape[0]

    def ptrace(self, keep: Iterable[int]) -> "DensityMatrix":
        keep = sorted(set(keep))
        return DensityMatrix(partial_trace(self.data, self.dims, keep),
                             [self.dims[i] for i in keep], tol=self.tol)

    def eigvals(self) -> np.ndarray:
        return clamp_eigenvalues(np.linalg.eigvalsh(hermitize(self.data)))

    def to_text(self) -> str:
        return textio.format_matrix("dims", self.dims, self.data)

    @classmethod
    def from_text(cls, text: str) -> "DensityMatrix":
        key, ints, m = textio.parse_matrix(text)
        if key != "dims":
            raise ValueError(f"expected a 'dims:' header, got {key!r}")
        return cls(m, ints)

    def save(self, path) -> None:
        textio.write_text(path, self.to_text())

    @classmethod
    def load(cls, path) -> "DensityMatrix":
        return cls.from_text(textio.read_text(path))


def clamp_eigenvalues(w: np.ndarray, tol: float = TOL) -> np.ndarray:
    """Zero out eigenvalues in ``[-tol, 0)``; anything more negative is kept."""
    w = np.asarray(w, dtype=float).copy()
    w[(w < 0) & (w >= -tol)] = 0.0
    return w


def kron(*mats) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, _mat(m))
    return out


def ket(index: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[index] = 1
    return v


def proj(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    return np.outer(v, v.conj())


def partial_trace(m, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Kept subsystems stay in their original order.
    """
    m = _mat(m)
    dims = _check_dims(m, dims)
    keep = sorted(set(int(i) for i in keep))
    n = len(dims)
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise DimensionError(f"keep={keep} is not a nonempty subset of range({n})")
    t = m.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters) + 26:
        raise DimensionError("too many subsystems")
    letters = letters + letters.upper()
    row = list(letters[:n])
    col = [letters[n + i] if i in keep else row[i] for i in range(n)]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = prod(dims[i] for i in keep)
    return res.reshape(dk, dk)


def partial_transpose(m, dims: Sequence[int], subsystems: Iterable[int]) -> np.ndarray:
    m = _mat(m)
    dims = _check_dims(m, dims)
    n = len(dims)
    subs = set(int(i) for i in subsystems)
    if any(i < 0 or i >= n for i in subs):
        raise DimensionError(f"subsystems {sorted(subs)} out of range for {n} parties")
    t = m.reshape(dims + dims)
    axes = list(range(2 * n))
    for i in subs:
        axes[i], axes[n + i] = n + i, i
    return t.transpose(axes).reshape(m.shape)


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(hermitize(m))
    w = clamp_eigenvalues(w)
    if w[0] < 0:
        raise DomainError("matrix is not positive semidefinite")
    # eigenvalues at the rounding floor are noise; their square roots (~1e-8) are not
    w[w < 10 * len(w) * np.finfo(float).eps * max(w[-1], 0.0)] = 0.0
    return (v * np.sqrt(w)) @ v.conj().T


def _check_pair(rho, sigma) -> tuple[np.ndarray, np.ndarray]:
    r, s = _mat(rho), _mat(sigma)
    if r.shape != s.shape:
        raise DimensionError(f"shape mismatch {r.shape} vs {s.shape}")
    if isinstance(rho, DensityMatrix) and isinstance(sigma, DensityMatrix) and rho.dims != sigma.dims:
        raise DimensionError(f"dims mismatch {rho.dims} vs {sigma.dims}")
    return r, s


def fidelity_closed_form(rho, sigma) -> float:
    """Uhlmann fidelity ``Tr sqrt(sqrt(rho) sigma sqrt(rho))`` (not squared)."""
    r, s = _check_pair(rho, sigma)
    # nuclear norm of sqrt(rho) sqrt(sigma); avoids squaring the conditioning
    sv = np.linalg.svd(_sqrt_psd(r) @ _sqrt_psd(s), compute_uv=False)
    return float(np.clip(np.sum(sv), 0.0, 1.0))


def trace_distance(rho, sigma) -> float:
    r, s = _check_pair(rho, sigma)
    w = np.linalg.eigvalsh(hermitize(r - s))
    return float(np.clip(0.5 * np.sum(np.abs(w)), 0.0, 1.0))


def von_neumann_entropy(rho) -> float:
    w = clamp_eigenvalues(np.linalg.eigvalsh(hermitize(_mat(rho))))
    w = w[w > ENTROPY_CUTOFF]
    return float(max(0.0, -np.sum(w * np.log2(w))))


def _dims_of(rho, dims, arity: int) -> tuple[int, ...]:
    if dims is None:
        if not isinstance(rho, DensityMatrix):
            raise DimensionError("dims required for a bare matrix")
        dims = rho.dims
    dims = _check_dims(_mat(rho), dims)
    if len(dims) != arity:
        raise DimensionError(f"expected {arity} subsystems, got dims {list(dims)}")
    return dims


def mutual_information(rho, dims: Sequence[int] | None = None) -> float:
    """I(A:B) for a bipartite state."""
    dims = _dims_of(rho, dims, 2)
    m = _mat(rho)
    return (von_neumann_entropy(partial_trace(m, dims, [0]))
            + von_neumann_entropy(partial_trace(m, dims, [1]))
            - von_neumann_entropy(m))


def conditional_mutual_information(rho, dims: Sequence[int] | None = None) -> float:
    """I(A:B|C) = S(AC) + S(BC) - S(ABC) - S(C) for a tripartite state."""
    dims = _dims_of(rho, dims, 3)
    m = _mat(rho)
    return (von_neumann_entropy(partial_trace(m, dims, [0, 2]))
            + von_neumann_entropy(partial_trace(m, dims, [1, 2]))
            - von_neumann_entropy(m)
            - von_neumann_entropy(partial_trace(m, dims, [2])))


def similarity(rho, sigma) -> "SimilarityReport":
    return SimilarityReport(fidelity_closed_form(rho, sigma), trace_distance(rho, sigma))


@dataclass(frozen=True)
class SimilarityReport:
    fidelity: float
    trace_distance: float

    def fuchs_van_de_graaf_slack(self) -> tuple[float, float]:
        """Slacks of ``1 - F <= T`` and ``T <= sqrt(1 - F^2)``; both should be >= 0."""
        f, t = self.fidelity, self.trace_distance
        return t - (1 - f), np.sqrt(max(0.0, 1 - f * f)) - t


# -- state families --------------------------------------------------------

def maximally_mixed(d: int) -> DensityMatrix:
    return DensityMatrix(np.eye(d) / d)


def bell_state() -> DensityMatrix:
    """|phi+> = (|00> + |11>)/sqrt(2) on two qubits."""
    v = np.array([1, 0, 0, 1]) / np.sqrt(2)
    return DensityMatrix(proj(v), (2, 2))


def product_state(*states) -> DensityMatrix:
    dims = []
    for s in states:
        dims.extend(s.dims if isinstance(s, DensityMatrix) else [_mat(s).shape[0]])
    return DensityMatrix(kron(*states), dims)


def fig2_branch(theta: float, a: int) -> np.ndarray:
    """cos(theta/2)|0> + (-1)^a sin(theta/2)|1>."""
    return np.array([np.cos(theta / 2), (-1) ** a * np.sin(theta / 2)], dtype=complex)


def state_family_fig2(theta: float) -> DensityMatrix:
    """Mixture of |a><a| (x) |psi_a(theta)><psi_a(theta)| with equal weights, a = 0, 1."""
    if not (0.0 <= theta <= np.pi / 2 + 1e-12):
        raise DomainError(f"theta={theta} outside [0, pi/2]")
    terms = [np.kron(proj(ket(a, 2)), proj(fig2_branch(theta, a))) for a in (0, 1)]
    return DensityMatrix(hermitize(0.5 * (terms[0] + terms[1])), (2, 2))


def quantum_classical_state(probs: Sequence[float], a_states: Sequence, b_basis) -> DensityMatrix:
    """sum_b p_b rho_b (x) |b><b| with ``b_basis`` given as the columns of a matrix
    (or a list of vectors), which must be orthonormal."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < -TOL) or abs(probs.sum() - 1) > TOL:
        raise DomainError("probs is not a probability vector")
    basis = np.asarray(b_basis, dtype=complex)
    if not isinstance(b_basis, np.ndarray):
        basis = basis.T  # list of vectors -> columns
    if basis.ndim != 2 or basis.shape[1] < len(probs):
        raise DimensionError("need one basis vector per probability")
    basis = basis[:, :len(probs)]
    if np.max(np.abs(basis.conj().T @ basis - np.eye(basis.shape[1]))) > 1e-9:
        raise DomainError("b_basis is not orthonormal")
    a_mats = [_mat(a) for a in a_states]
    if len(a_mats) != len(probs):
        raise DimensionError("need one A state per probability")
    da, db = a_mats[0].shape[0], basis.shape[0]
    out = np.zeros((da * db, da * db), dtype=complex)
    for p, a, b in zip(probs, a_mats, basis.T):
        out += p * np.kron(a, proj(b))
    return DensityMatrix(hermitize(out), (da, db))


def random_density_matrix(d: int, rank: int | None = None, seed: int | None = None,
                          dims: Sequence[int] | None = None) -> DensityMatrix:
    """Ginibre-distributed state of the given rank (full rank by default)."""
    rank = d if rank is None else rank
    if not 1 <= rank <= d:
        raise DomainError(f"rank={rank} outside [1, {d}]")
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return DensityMatrix(hermitize(m / np.trace(m).real), dims)


def random_unitary(d: int, seed: int | None = None) -> np.ndarray:
    return unitary_group.rvs(d, random_state=np.random.default_rng(seed))


def is_quantum_classical(rho, dims: Sequence[int] | None = None, tol: float = 1e-8) -> bool:
    """True when rho is classical on its second subsystem.

    The conditional blocks ``<i|_A rho |j>_A`` must pairwise commute; the set
    is closed under adjoints, so commuting implies a common eigenbasis.
    """
    da, db = _dims_of(rho, dims, 2)
    t = _mat(rho).reshape(da, db, da, db)
    blocks = [t[i, :, j, :] for i in range(da) for j in range(da)]
    for x in range(len(blocks)):
        for y in range(x + 1, len(blocks)):
            p, q = blocks[x], blocks[y]
            if np.max(np.abs(p @ q - q @ p)) > tol:
                return False
    return True
