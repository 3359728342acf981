"""Choi-Jamiolkowski representation of channels.

``J(L) = sum_{x,x'} |x><x'| (x) L(|x><x'|)`` with the unnormalized maximally
entangled vector, index order (input (x) output). The inverse is
``L(rho) = Tr_X(J^{T_X} (rho (x) 1))``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import textio
from .exceptions import ContractError, DimensionError, DomainError
from .states import DensityMatrix, TOL, hermitize, partial_trace, partial_transpose, proj

CHANNEL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    data: np.ndarray
    din: int
    dout: int

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        if data.shape != (self.din * self.dout,) * 2:
            raise DimensionError(f"Choi shape {data.shape} does not match din={self.din}, dout={self.dout}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def is_cp(self) -> bool:
        return bool(np.linalg.eigvalsh(hermitize(self.data))[0] >= -CHANNEL_TOL)

    @property
    def is_tp(self) -> bool:
        return bool(np.max(np.abs(self.input_marginal() - np.eye(self.din))) <= CHANNEL_TOL)

    def input_marginal(self) -> np.ndarray:
        return partial_trace(self.data, [self.din, self.dout], [0])

    def tensor(self) -> np.ndarray:
        """Entries as W[x, y, x', y']."""
        return self.data.reshape(self.din, self.dout, self.din, self.dout)

    def to_text(self) -> str:
        return textio.format_matrix("choi", (self.din, self.dout), self.data)

    @classmethod
    def from_text(cls, text: str) -> "ChoiMatrix":
        key, ints, m = textio.parse_matrix(text)
        if key != "choi" or len(ints) != 2:
            raise ValueError("expected a 'choi: din dout' header")
        return cls(m, *ints)

    def save(self, path) -> None:
        textio.write_text(path, self.to_text())

    @classmethod
    def load(cls, path) -> "ChoiMatrix":
        return cls.from_text(textio.read_text(path))


@dataclass(frozen=True)
class ChannelVerdict:
    cp: bool
    tp: bool

    def __bool__(self) -> bool:
        return self.cp and self.tp


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """POVM ``{M_y}`` on the input and one prepared output state per outcome."""

    povm: tuple[np.ndarray, ...]
    preparations: tuple[np.ndarray, ...]

    def __post_init__(self):
        povm = tuple(np.asarray(m, dtype=complex) for m in self.povm)
        preps = tuple(np.asarray(p.data if isinstance(p, DensityMatrix) else p, dtype=complex)
                      for p in self.preparations)
        if len(povm) != len(preps) or not povm:
            raise DimensionError("need one preparation per POVM element")
        preps = tuple(proj(p) if p.ndim == 1 else p for p in preps)
        d = povm[0].shape[0]
        if np.max(np.abs(sum(povm) - np.eye(d))) > CHANNEL_TOL:
            raise DomainError("POVM elements do not sum to the identity")
        for m in povm:
            if np.max(np.abs(m - m.conj().T)) > TOL or np.linalg.eigvalsh(hermitize(m))[0] < -TOL:
                raise DomainError("POVM element is not positive semidefinite")
        for p in preps:
            DensityMatrix(p)
        object.__setattr__(self, "povm", povm)
        object.__setattr__(self, "preparations", preps)

    @property
    def din(self) -> int:
        return self.povm[0].shape[0]

    @property
    def dout(self) -> int:
        return self.preparations[0].shape[0]


def choi_of_channel(apply: Callable[[np.ndarray], np.ndarray], din: int, dout: int,
                    seed: int = 0) -> ChoiMatrix:
    """Choi matrix of ``apply``; linearity is spot-checked on a random input."""
    blocks = {}
    w = np.zeros((din, dout, din, dout), dtype=complex)
    for x in range(din):
        for xp in range(din):
            e = np.zeros((din, din), dtype=complex)
            e[x, xp] = 1
            out = np.asarray(apply(e), dtype=complex)
            if out.shape != (dout, dout):
                raise DimensionError(f"channel output shape {out.shape}, expected {(dout, dout)}")
            blocks[x, xp] = out
            w[x, :, xp, :] = out
    rng = np.random.default_rng(seed)
    coeffs = rng.normal(size=(din, din)) + 1j * rng.normal(size=(din, din))
    expected = sum(coeffs[x, xp] * blocks[x, xp] for x in range(din) for xp in range(din))
    got = np.asarray(apply(coeffs), dtype=complex)
    if np.max(np.abs(got - expected)) > 1e-8 * max(1.0, np.max(np.abs(expected))):
        raise ContractError("channel function is not linear on the matrix basis")
    return ChoiMatrix(w.reshape(din * dout, din * dout), din, dout)


def apply_choi(w: ChoiMatrix, rho, acting_on: int = 0, dims: Sequence[int] | None = None,
               tol: float = 1e-8):
    """Apply the channel with Choi matrix ``w`` to subsystem ``acting_on`` of ``rho``.

    Returns a :class:`DensityMatrix` when ``rho`` is one (validated at ``tol``),
    otherwise a bare array.
    """
    is_state = isinstance(rho, DensityMatrix)
    m = rho.data if is_state else np.asarray(rho, dtype=complex)
    if dims is None:
        dims = rho.dims if is_state else (m.shape[0],)
    dims = list(dims)
    if not 0 <= acting_on < len(dims):
        raise DimensionError(f"acting_on={acting_on} out of range for dims {dims}")
    if dims[acting_on] != w.din:
        raise DimensionError(f"subsystem dimension {dims[acting_on]} != channel input {w.din}")
    if not w.is_tp:
        warnings.warn("Choi matrix is not trace preserving", RuntimeWarning, stacklevel=2)
    n = len(dims)
    t = m.reshape(dims + dims)
    # L(rho)_{y y'} = sum_{a,b} W[a, y, b, y'] rho_{a b}
    t = np.moveaxis(t, (acting_on, n + acting_on), (0, 1))
    out = np.tensordot(w.tensor(), t, axes=([0, 2], [0, 1]))  # y, y', rest...
    new_dims = dims.copy()
    new_dims[acting_on] = w.dout
    rest = dims[:acting_on] + dims[acting_on + 1:]
    out = np.moveaxis(out, (0, 1), (acting_on, n + acting_on)) if rest else out
    d_new = int(np.prod(new_dims))
    out = out.reshape(d_new, d_new)
    if is_state or np.allclose(m, m.conj().T, atol=TOL, rtol=0):
        out = hermitize(out)
    if is_state:
        return DensityMatrix(out, new_dims, rho.labels, tol=tol)
    return out


def is_channel(w: ChoiMatrix) -> ChannelVerdict:
    return ChannelVerdict(w.is_cp, w.is_tp)


def is_ppt_choi(w: ChoiMatrix, tol: float = CHANNEL_TOL) -> bool:
    pt = partial_transpose(w.data, [w.din, w.dout], [0])
    return bool(np.linalg.eigvalsh(hermitize(pt))[0] >= -tol)


def eb_certificate(w: ChoiMatrix) -> str:
    """'entanglement-breaking', 'not entanglement-breaking' or 'ppt-candidate'.

    PPT is decisive for separability only when din * dout <= 6.
    """
    if not w.is_cp:
        return "not entanglement-breaking"
    ppt = is_ppt_choi(w)
    if not ppt:
        return "not entanglement-breaking"
    return "entanglement-breaking" if w.din * w.dout <= 6 else "ppt-candidate"


def eb_channel(m: MeasurementModel) -> ChoiMatrix:
    """Measure-and-prepare channel ``rho -> sum_y Tr(M_y rho) beta_y``."""
    data = sum(np.kron(my.T, beta) for my, beta in zip(m.povm, m.preparations))
    return ChoiMatrix(hermitize(data), m.din, m.dout)


def identity_choi(d: int) -> ChoiMatrix:
    v = np.eye(d).reshape(-1)
    return ChoiMatrix(np.outer(v, v), d, d)


def depolarizing_choi(din: int, dout: int | None = None) -> ChoiMatrix:
    """Completely depolarizing channel rho -> Tr(rho) 1/dout."""
    dout = din if dout is None else dout
    return ChoiMatrix(np.eye(din * dout) / dout, din, dout)


def unitary_choi(u: np.ndarray) -> ChoiMatrix:
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    v = (np.eye(d) @ u.T).reshape(-1)  # sum_x |x> (x) U|x>
    return ChoiMatrix(np.outer(v, v.conj()), d, d)


def random_choi(din: int, dout: int, rank: int | None = None, seed: int | None = None) -> ChoiMatrix:
    """Random channel from a Haar-like isometry C^din -> C^dout (x) C^rank."""
    rank = din * dout if rank is None else rank
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dout * rank, din)) + 1j * rng.normal(size=(dout * rank, din))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    kraus = q.reshape(dout, rank, din).transpose(1, 0, 2)
    w = np.zeros((din * dout, din * dout), dtype=complex)
    for k in kraus:
        v = k.T.reshape(-1)  # sum_x |x> (x) K|x>
        w += np.outer(v, v.conj())
    return ChoiMatrix(hermitize(w), din, dout)
