"""Symmetric subspace of k copies of C^d and copy-permutation operators."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import CapacityError, DomainError

DEFAULT_CAP = 2 ** 20


@dataclass(frozen=True, eq=False)
class SymmetricSubspace:
    """Isometry ``T`` from Sym^k(C^d) into (C^d)^(x)k.

    Column ``j`` is the normalized symmetrization of the sorted index tuple
    ``occupations[j]``; tuples are in lexicographic order, so for d=2, k=2 the
    columns are |00>, (|01>+|10>)/sqrt2, |11>.
    """

    local_dim: int
    copies: int
    isometry: sp.csr_matrix
    index_tuples: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return self.isometry.shape[1]

    def dense(self) -> np.ndarray:
        return self.isometry.toarray()

    def projector(self) -> np.ndarray:
        t = self.dense()
        return t @ t.conj().T


@lru_cache(maxsize=64)
def symmetric_isometry(d: int, k: int, cap: int = DEFAULT_CAP) -> SymmetricSubspace:
    if d < 1 or k < 1:
        raise DomainError(f"need d >= 1 and k >= 1, got d={d}, k={k}")
    full = d ** k
    if full > cap:
        raise CapacityError(f"d^k = {full} exceeds cap {cap}")
    digits = np.array(np.unravel_index(np.arange(full), (d,) * k)).T
    keys = np.sort(digits, axis=1) @ (d ** np.arange(k - 1, -1, -1))
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    assert len(uniq) == comb(d + k - 1, k)
    vals = 1.0 / np.sqrt(counts[inverse])
    t = sp.csr_matrix((vals, (np.arange(full), inverse)), shape=(full, len(uniq)))
    tuples = tuple(tuple(int(x) for x in np.unravel_index(u, (d,) * k)) for u in uniq)
    return SymmetricSubspace(d, k, t, tuples)


def _check_perm(perm: Sequence[int], k: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(k)):
        raise DomainError(f"{perm} is not a permutation of range({k})")
    return perm


def permutation_operator(d: int, k: int, perm: Sequence[int], cap: int = DEFAULT_CAP) -> np.ndarray:
    """Unitary moving tensor factor ``i`` to position ``perm[i]`` (0-based).

    With this convention ``V(p) @ V(q) == V(p o q)`` where ``(p o q)[i] = p[q[i]]``.
    The transposition (0 1) is the swap |b>|b'> -> |b'>|b>.
    """
    perm = _check_perm(perm, k)
    if d ** k > cap:
        raise CapacityError(f"d^k = {d ** k} exceeds cap {cap}")
    # output axis perm[i] comes from input axis i
    axes = np.argsort(perm)
    eye = np.eye(d ** k).reshape((d,) * k + (d ** k,))
    return eye.transpose(tuple(axes) + (k,)).reshape(d ** k, d ** k)


def compose(p: Sequence[int], q: Sequence[int]) -> tuple[int, ...]:
    return tuple(p[i] for i in q)


def symmetrizer(d: int, k: int) -> np.ndarray:
    """Average of all k! permutation operators (equals the projector onto Sym^k)."""
    from itertools import permutations

    total = sum(permutation_operator(d, k, p) for p in permutations(range(k)))
    return total / factorial(k)
