"""Broadcast-fidelity SDP hierarchy and the discord-like quantities derived from it.

For a state rho on A (x) B the level-k program maximizes the Uhlmann fidelity
between rho and (id (x) L)[rho] over channels L on B that are the first-copy
marginal of a broadcast map B -> Sym^k(B). The broadcast map is represented by
its Choi matrix on B (x) Sym^k(B), so Bose symmetry holds by construction. The
level-k bound is ``-log2 F*^2`` (bits).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

from .choi import ChoiMatrix, apply_choi
from .exceptions import CapacityError, DimensionError, DomainError, SolverError
from .sdp import AffineMatrix, SdpProblem, SdpSolution, SolverOptions, psd_support, fidelity_sdp_block, solve
from .states import DensityMatrix, fidelity_closed_form, hermitize, partial_trace, partial_transpose
from .symmetry import DEFAULT_CAP, permutation_operator, symmetric_isometry

# the B : B^k bipartition, written as the set of transposed parties (0 = B, i = B_i)
CUT_B = frozenset({0})


def normalize_cut(cut, k: int) -> frozenset[int]:
    """Canonical form of a bipartition of {B, B1..Bk}: the side containing B."""
    cut = frozenset(int(i) for i in cut)
    everything = frozenset(range(k + 1))
    if not cut or cut == everything or not cut <= everything:
        raise DomainError(f"{sorted(cut)} is not a proper bipartition of {k + 1} parties")
    return cut if 0 in cut else everything - cut


def all_cuts(k: int) -> frozenset[frozenset[int]]:
    rest = range(1, k + 1)
    return frozenset(frozenset({0, *extra}) for r in range(k) for extra in itertools.combinations(rest, r))


def cut_label(cut) -> str:
    return "".join("B" if i == 0 else f"B{i}" for i in sorted(cut))


def parse_cut(label: str) -> frozenset[int]:
    label = label.strip()
    parts, i = [], 0
    while i < len(label):
        if label[i] != "B":
            raise DomainError(f"bad cut label {label!r}")
        j = i + 1
        while j < len(label) and label[j].isdigit():
            j += 1
        parts.append(int(label[i + 1:j]) if j > i + 1 else 0)
        i = j
    if not parts:
        raise DomainError("empty cut label")
    return frozenset(parts)


@dataclass(frozen=True)
class HierarchyOptions:
    k: int = 2
    bose: bool = True
    ppt_cuts: frozenset = frozenset()

    def __post_init__(self):
        if self.k < 1:
            raise DomainError(f"k must be >= 1, got {self.k}")
        cuts = frozenset(normalize_cut(c, self.k) for c in self.ppt_cuts)
        object.__setattr__(self, "ppt_cuts", cuts)

    @classmethod
    def ppt(cls, k: int = 1, bose: bool = True) -> "HierarchyOptions":
        return cls(k, bose, frozenset({CUT_B}))

    @property
    def trivial(self) -> bool:
        """k=1 without cuts admits the identity channel, so F* = 1."""
        return self.k == 1 and not self.ppt_cuts

    def ppt_label(self) -> str:
        if not self.ppt_cuts:
            return "none"
        return "+".join(sorted((cut_label(c) for c in self.ppt_cuts), key=lambda s: (len(s), s)))

    def label(self) -> str:
        s = f"k={self.k}"
        if not self.bose:
            s += ",sym"
        if self.ppt_cuts:
            s += f",ppt={self.ppt_label()}"
        return s


@dataclass
class HierarchyResult:
    options: HierarchyOptions
    f_star: float
    d_bound: float
    status: str
    gap: float
    iterations: int
    seconds: float
    raw_value: float
    optimizer: ChoiMatrix | None = field(default=None, repr=False)
    reduced: ChoiMatrix | None = field(default=None, repr=False)
    symmetry_residual: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def to_record(self, family: str = "", param: float = float("nan")) -> dict:
        o = self.options
        return dict(family=family, param=param, k=o.k, bose=o.bose, ppt=o.ppt_label(),
                    F_star=self.f_star, d_bound=self.d_bound, status=self.status,
                    gap=self.gap, seconds=self.seconds)


def bound_from_fidelity(f: float) -> float:
    """``-log2 f^2`` with f clipped to [0, 1]."""
    f = float(np.clip(f, 0.0, 1.0))
    return float("inf") if f == 0 else max(0.0, -2.0 * np.log2(f))


def _expand(wc: np.ndarray, db: int, k: int) -> np.ndarray:
    """Compressed operator on B (x) Sym^k(B) -> operator on B (x) B^k."""
    t = symmetric_isometry(db, k).dense()
    big = np.kron(np.eye(db), t)
    return big @ wc @ big.conj().T


@lru_cache(maxsize=32)
def _first_copy_map(db: int, k: int, bose: bool) -> np.ndarray:
    """Linear map from the broadcast Choi variable to its (B, B1) marginal."""
    from .sdp import linear_map_matrix

    if bose:
        n = db * comb(db + k - 1, k)
        fn = lambda w: partial_trace(_expand(w, db, k), [db] * (k + 1), [0, 1])
    else:
        n = db ** (k + 1)
        fn = lambda w: partial_trace(w, [db] * (k + 1), [0, 1])
    out = linear_map_matrix(fn, n, db * db)
    out.setflags(write=False)
    return out


def _sigma_fn(rho: np.ndarray, da: int, db: int):
    """W_{BB1} -> Tr_B(W^{T_B} (rho (x) 1)) as a function on matrices."""
    r = rho.reshape(da, db, da, db)

    def fn(w):
        w = np.asarray(w).reshape(db, db, db, db)
        return np.einsum("xyXY,axAX->ayAY", w, r).reshape(da * db, da * db)

    return fn


def _generators(k: int) -> list[tuple[int, ...]]:
    if k < 2:
        return []
    gens = [(1, 0) + tuple(range(2, k))]
    if k > 2:
        gens.append(tuple((i + 1) % k for i in range(k)))
    return gens


def _add_permutation_symmetry(p: SdpProblem, name: str, d_pre: int, d: int, k: int) -> None:
    """Constrain block ``name`` on C^d_pre (x) (C^d)^(x)k to be invariant under copy permutations."""
    var = AffineMatrix.variable(name, d_pre * d ** k)
    for g in _generators(k):
        v = np.kron(np.eye(d_pre), permutation_operator(d, k, g))
        p.add_affine_zero(var.apply(lambda x, v=v: v @ x @ v.conj().T - x, d_pre * d ** k))


@dataclass
class BroadcastProgram:
    """The broadcast-fidelity SDP for one state, reusable across levels."""

    rho: DensityMatrix
    solver: SolverOptions = field(default_factory=SolverOptions)
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if len(self.rho.dims) != 2:
            raise DimensionError(f"expected a bipartite state, got dims {self.rho.dims}")
        da, self.db = self.rho.dims
        # the output of id (x) L stays inside supp(rho_A) (x) B; restricting A there
        # changes no fidelity and keeps the SDP strictly feasible
        rho_a = partial_trace(self.rho.data, self.rho.dims, [0])
        _, va = psd_support(rho_a, 1e-12)
        iso = np.kron(va, np.eye(self.db))
        self.da = va.shape[1]
        self._rho = hermitize(iso.conj().T @ self.rho.data @ iso)
        self._sigma_lin = None

    def sigma_map(self) -> np.ndarray:
        if self._sigma_lin is None:
            from .sdp import linear_map_matrix

            d = self.da * self.db
            self._sigma_lin = linear_map_matrix(_sigma_fn(self._rho, self.da, self.db), self.db ** 2, d)
        return self._sigma_lin

    def w_order(self, opts: HierarchyOptions) -> int:
        db, k = self.db, opts.k
        if db ** k > self.cap:
            raise CapacityError(f"|B|^k = {db ** k} exceeds cap {self.cap}")
        return db * comb(db + k - 1, k) if opts.bose else db ** (k + 1)

    def build(self, opts: HierarchyOptions) -> SdpProblem:
        db, k = self.db, opts.k
        n_w = self.w_order(opts)
        p = SdpProblem()
        p.add_block("W", n_w)
        lin = self.sigma_map() @ _first_copy_map(db, k, opts.bose)
        sigma = AffineMatrix(np.zeros((self.da * db,) * 2, dtype=complex), {"W": lin})
        fidelity_sdp_block(p, self._rho, sigma, name="fidelity")
        w = AffineMatrix.variable("W", n_w)
        inner = n_w // db
        p.add_affine_zero(w.apply(lambda x: partial_trace(x, [db, inner], [0]), db) - np.eye(db))
        if not opts.bose:
            _add_permutation_symmetry(p, "W", db, db, k)
        for cut in sorted(opts.ppt_cuts, key=sorted):
            name = "ppt_" + cut_label(cut)
            if opts.bose and cut == CUT_B:
                # partial transpose on B commutes with the isometry on the copies
                p.add_block(name, n_w)
                fn = lambda x: partial_transpose(x, [db, inner], [0])
                p.add_affine_zero(AffineMatrix.variable(name, n_w) - w.apply(fn, n_w))
            else:
                full = db ** (k + 1)
                if full > self.cap:
                    raise CapacityError(f"PPT cut needs order {full} > cap {self.cap}")
                p.add_block(name, full)
                if opts.bose:
                    fn = lambda x, c=cut: partial_transpose(_expand(x, db, k), [db] * (k + 1), c)
                else:
                    fn = lambda x, c=cut: partial_transpose(x, [db] * (k + 1), c)
                p.add_affine_zero(AffineMatrix.variable(name, full) - w.apply(fn, full))
        return p

    def solve(self, opts: HierarchyOptions) -> HierarchyResult:
        p = self.build(opts)
        sol = solve(p, self.solver)
        return self._result(opts, sol)

    def _result(self, opts: HierarchyOptions, sol: SdpSolution) -> HierarchyResult:
        if not sol.ok:
            return HierarchyResult(opts, float("nan"), float("nan"), sol.status, sol.gap,
                                   sol.iterations, sol.seconds, sol.value)
        f = float(np.clip(sol.value, 0.0, 1.0))
        db, k = self.db, opts.k
        wc = _polish_channel(sol.primal["W"], db)
        out_dim = wc.shape[0] // db
        optimizer = ChoiMatrix(wc, db, out_dim)
        reduced = ChoiMatrix(hermitize((_first_copy_map(db, k, opts.bose) @ wc.reshape(-1)).reshape(db * db, db * db)), db, db)
        if opts.bose:
            full = _expand(wc, db, k)
            proj = np.kron(np.eye(db), symmetric_isometry(db, k).projector())
            resid = float(np.max(np.abs(proj @ full @ proj - full)))
        else:
            resid = 0.0
            for g in _generators(k):
                v = np.kron(np.eye(db), permutation_operator(db, k, g))
                resid = max(resid, float(np.max(np.abs(v @ wc @ v.conj().T - wc))))
        return HierarchyResult(opts, f, bound_from_fidelity(f), sol.status, sol.gap, sol.iterations,
                               sol.seconds, sol.value, optimizer, reduced, resid)


def _polish_channel(w: np.ndarray, din: int) -> np.ndarray:
    """Project a solver Choi matrix to exactly CP and TP (input index first)."""
    w = hermitize(w)
    vals, vecs = np.linalg.eigh(w)
    w = (vecs * np.clip(vals, 0, None)) @ vecs.conj().T
    dout = w.shape[0] // din
    m = partial_trace(w, [din, dout], [0])
    mv, mu = np.linalg.eigh(hermitize(m))
    inv_sqrt = (mu / np.sqrt(np.clip(mv, 1e-300, None))) @ mu.conj().T
    fix = np.kron(inv_sqrt, np.eye(dout))
    return hermitize(fix @ w @ fix.conj().T)


def _as_state(rho) -> DensityMatrix:
    if not isinstance(rho, DensityMatrix):
        raise TypeError("expected a DensityMatrix with dims [|A|, |B|]")
    return rho


def build_problem(rho_AB: DensityMatrix, opts: HierarchyOptions) -> SdpProblem:
    return BroadcastProgram(_as_state(rho_AB)).build(opts)


def discord_lower_bound(rho_AB: DensityMatrix, opts: HierarchyOptions | None = None,
                        solver: SolverOptions | None = None) -> HierarchyResult:
    """Level-k bound ``-log2 F*^2``. Solver trouble is reported in ``status``."""
    opts = opts or HierarchyOptions()
    return BroadcastProgram(_as_state(rho_AB), solver or SolverOptions()).solve(opts)


def max_broadcast_fidelity(rho_AB: DensityMatrix, opts: HierarchyOptions | None = None,
                           solver: SolverOptions | None = None) -> float:
    res = discord_lower_bound(rho_AB, opts, solver)
    if not res.ok:
        raise SolverError(f"broadcast fidelity SDP ended with status {res.status}", res)
    return res.f_star


def surprisal_measurement_recoverability(rho_AB: DensityMatrix,
                                         solver: SolverOptions | None = None) -> HierarchyResult:
    """Exact for a qubit B, where PPT channels are entanglement breaking."""
    rho_AB = _as_state(rho_AB)
    if len(rho_AB.dims) != 2 or rho_AB.dims[1] != 2:
        raise DomainError("exact recoverability needs |B| = 2; use discord_lower_bound with "
                          "HierarchyOptions.ppt(k) for finite-level lower bounds instead")
    return discord_lower_bound(rho_AB, HierarchyOptions.ppt(1), solver)


def replay_fidelity(rho_AB: DensityMatrix, result: HierarchyResult) -> float:
    """Fidelity of rho with the output of the optimizer's first-copy channel."""
    out = apply_choi(result.reduced, rho_AB, acting_on=1, tol=1e-6)
    return fidelity_closed_form(rho_AB, out)


def fidelity_with_k_extendible(rho_AB: DensityMatrix, k: int, bose: bool = True,
                               solver: SolverOptions | None = None, cap: int = DEFAULT_CAP) -> float:
    """Largest fidelity of rho with a state that has a (Bose-)k-symmetric extension on B."""
    rho_AB = _as_state(rho_AB)
    da, db = rho_AB.dims
    if k < 1:
        raise DomainError("k must be >= 1")
    if db ** k > cap:
        raise CapacityError(f"|B|^k = {db ** k} exceeds cap {cap}")
    p = SdpProblem()
    if bose:
        n = da * comb(db + k - 1, k)
        t = np.kron(np.eye(da), symmetric_isometry(db, k).dense())
        fn = lambda s: partial_trace(t @ s @ t.conj().T, [da] + [db] * k, [0, 1])
    else:
        n = da * db ** k
        fn = lambda s: partial_trace(s, [da] + [db] * k, [0, 1])
    p.add_block("S", n)
    s = AffineMatrix.variable("S", n)
    fidelity_sdp_block(p, rho_AB.data, s.apply(fn, da * db), name="fidelity")
    p.add_constraint({"S": np.eye(n)}, 1.0)
    if not bose:
        _add_permutation_symmetry(p, "S", da, db, k)
    sol = solve(p, solver or SolverOptions())
    if not sol.ok:
        raise SolverError(f"extendible-state fidelity SDP ended with status {sol.status}", sol)
    return float(np.clip(sol.value, 0.0, 1.0))
