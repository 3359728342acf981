"""Block semidefinite programs in equality standard form.

    maximize    sum_j <C_j, Z_j>
    subject to  sum_j <A_ij, Z_j> = b_i,   Z_j >= 0,

with ``<A, Z> = Re Tr(A Z)`` over Hermitian (or real symmetric) blocks. Coefficient
matrices are stored row-wise as flattened (row-major) Hermitian matrices.

Hermitian problems are solved through the real embedding
``H -> [[Re H, -Im H], [Im H, Re H]]`` by default; the conic solve itself is
delegated to cvxpy (Clarabel interior point by default).
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .exceptions import CapacityError, DimensionError, DomainError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILURE = "numerical-failure"


@dataclass
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-7
    solver: str = "CLARABEL"
    embed: bool = True
    max_iters: int = 400
    max_order: int = 512


@dataclass
class SdpSolution:
    status: str
    value: float
    primal: dict[str, np.ndarray]
    dual_value: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    solver: str
    seconds: float = 0.0
    dual: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _transpose_perm(n: int) -> np.ndarray:
    return np.arange(n * n).reshape(n, n).T.reshape(-1)


def linear_map_matrix(fn: Callable[[np.ndarray], np.ndarray], n_in: int, n_out: int) -> np.ndarray:
    """Matrix ``L`` with ``vec(fn(X)) = L @ vec(X)`` (row-major vec), for linear ``fn``."""
    cols = np.empty((n_out * n_out, n_in * n_in), dtype=complex)
    e = np.zeros((n_in, n_in), dtype=complex)
    for r in range(n_in * n_in):
        p, q = divmod(r, n_in)
        e[p, q] = 1
        cols[:, r] = np.asarray(fn(e)).reshape(-1)
        e[p, q] = 0
    return cols


def _as_lin(lin):
    return lin.tocsr() if sp.issparse(lin) else sp.csr_matrix(np.asarray(lin, dtype=complex))


@dataclass
class AffineMatrix:
    """Hermitian-valued affine expression ``const + sum_j unvec(L_j @ vec(Z_j))``.

    ``L_j`` may be dense or scipy-sparse.
    """

    const: np.ndarray
    terms: dict[str, object] = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.const.shape[0]

    @classmethod
    def constant(cls, m) -> "AffineMatrix":
        return cls(np.array(np.asarray(m), dtype=complex))

    @classmethod
    def variable(cls, name: str, order: int) -> "AffineMatrix":
        return cls(np.zeros((order, order), dtype=complex),
                   {name: sp.identity(order * order, dtype=complex, format="csr")})

    @classmethod
    def sub_block(cls, name: str, big: int, offset: int, order: int) -> "AffineMatrix":
        """The diagonal sub-block ``Z[o:o+n, o:o+n]`` of a block of order ``big``."""
        iu, ju = np.divmod(np.arange(order * order), order)
        cols = (iu + offset) * big + (ju + offset)
        sel = sp.csr_matrix((np.ones(order * order), (np.arange(order * order), cols)),
                            shape=(order * order, big * big), dtype=complex)
        return cls(np.zeros((order, order), dtype=complex), {name: sel})

    def apply(self, fn: Callable[[np.ndarray], np.ndarray], n_out: int) -> "AffineMatrix":
        """Compose with a linear map on matrices."""
        lin = sp.csr_matrix(linear_map_matrix(fn, self.order, n_out))
        return AffineMatrix(np.asarray(fn(self.const), dtype=complex),
                            {k: lin @ _as_lin(v) for k, v in self.terms.items()})

    def __add__(self, other) -> "AffineMatrix":
        if not isinstance(other, AffineMatrix):
            other = AffineMatrix.constant(other)
        if other.order != self.order:
            raise DimensionError(f"order mismatch {self.order} vs {other.order}")
        terms = {k: _as_lin(v) for k, v in self.terms.items()}
        for k, v in other.terms.items():
            terms[k] = terms[k] + _as_lin(v) if k in terms else _as_lin(v)
        return AffineMatrix(self.const + other.const, terms)

    def __neg__(self) -> "AffineMatrix":
        return AffineMatrix(-self.const, {k: -_as_lin(v) for k, v in self.terms.items()})

    def __sub__(self, other) -> "AffineMatrix":
        if not isinstance(other, AffineMatrix):
            other = AffineMatrix.constant(other)
        return self + (-other)

    def evaluate(self, blocks: Mapping[str, np.ndarray]) -> np.ndarray:
        out = self.const.reshape(-1).copy()
        for k, lin in self.terms.items():
            out = out + lin @ np.asarray(blocks[k]).reshape(-1)
        return out.reshape(self.order, self.order)


class SdpProblem:
    """Builder and container for an equality-form block SDP."""

    def __init__(self, hermitian: bool = True):
        self.hermitian = hermitian
        self.blocks: dict[str, int] = {}
        self._pieces: dict[str, list[tuple[int, sp.coo_matrix]]] = {}
        self._rhs: list[np.ndarray] = []
        self._m = 0
        self._obj: dict[str, np.ndarray] = {}
        self._cache: dict[str, sp.csr_matrix] = {}

    # -- construction ----------------------------------------------------
    def add_block(self, name: str, order: int) -> str:
        if name in self.blocks:
            raise ValueError(f"duplicate block {name!r}")
        self.blocks[name] = int(order)
        self._pieces[name] = []
        return name

    @property
    def num_constraints(self) -> int:
        return self._m

    def _hermitian_rows(self, name: str, f) -> sp.coo_matrix:
        n = self.blocks[name]
        f = sp.csr_matrix(f)
        if f.shape[1] != n * n:
            raise DimensionError(f"functional width {f.shape[1]} != {n}^2 for block {name!r}")
        sym = (f[:, _transpose_perm(n)] + f.conj()) / 2
        if not self.hermitian:
            if sym.nnz and np.max(np.abs(sym.data.imag)) > 0:
                raise DomainError("complex coefficients in a real problem")
            sym = sym.real
        sym = sym.tocoo()
        sym.eliminate_zeros()
        return sym

    def add_functionals(self, funcs: Mapping[str, object], rhs) -> None:
        """Append constraints ``Re sum_j f_j @ vec(Z_j) = rhs`` (one per row)."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        for name, f in funcs.items():
            rows = self._hermitian_rows(name, f)
            if rows.shape[0] != len(rhs):
                raise DimensionError("functional rows and rhs length differ")
            self._pieces[name].append((self._m, rows))
        self._rhs.append(rhs)
        self._m += len(rhs)
        self._cache.clear()

    def add_constraint(self, coeffs: Mapping[str, object], rhs: float) -> None:
        """Append ``sum_j <A_j, Z_j> = rhs`` for Hermitian ``A_j``."""
        funcs = {}
        for name, a in coeffs.items():
            a = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=complex)
            if np.max(np.abs(a - a.conj().T), initial=0.0) > 1e-12:
                raise DomainError(f"coefficient for {name!r} is not Hermitian")
            # <A, Z> = Re sum conj(A)_pq Z_pq for Hermitian A
            funcs[name] = a.conj().reshape(1, -1)
        self.add_functionals(funcs, [rhs])

    def add_objective(self, name: str, c) -> None:
        c = np.asarray(c, dtype=complex)
        if np.max(np.abs(c - c.conj().T), initial=0.0) > 1e-12:
            raise DomainError("objective coefficient is not Hermitian")
        n = self.blocks[name]
        vec = c.reshape(-1)
        if not self.hermitian:
            vec = vec.real
        self._obj[name] = self._obj.get(name, np.zeros(n * n, dtype=vec.dtype)) + vec

    def add_affine_zero(self, expr: AffineMatrix) -> None:
        """Constrain a Hermitian-valued affine expression to vanish entrywise."""
        n = expr.order
        iu, ju = np.triu_indices(n)
        pick = iu * n + ju
        off = pick[iu < ju]
        c = expr.const.reshape(-1)
        funcs = {}
        for k, lin in expr.terms.items():
            lin = _as_lin(lin)
            rows = [lin[pick]]
            if self.hermitian:
                # Im(w) = Re(-i w); diagonal imaginary parts vanish identically
                rows.append(-1j * lin[off])
            funcs[k] = sp.vstack(rows).tocsr()
        rhs = [-c[pick].real]
        if self.hermitian:
            rhs.append(-c[off].imag)
        self.add_functionals(funcs, np.concatenate(rhs))

    def constrain_equal(self, name: str, offset: int, expr: AffineMatrix) -> None:
        """Force the diagonal sub-block ``Z[o:o+n, o:o+n]`` of block ``name`` to equal ``expr``."""
        sub = AffineMatrix.sub_block(name, self.blocks[name], offset, expr.order)
        self.add_affine_zero(sub - expr)

    # -- access ----------------------------------------------------------
    def coefficients(self, name: str) -> sp.csr_matrix:
        if name not in self._cache:
            n = self.blocks[name]
            dtype = complex if self.hermitian else float
            out = sp.csr_matrix((self._m, n * n), dtype=dtype)
            if self._pieces[name]:
                r = np.concatenate([off + p.row for off, p in self._pieces[name]])
                c = np.concatenate([p.col for _, p in self._pieces[name]])
                v = np.concatenate([p.data for _, p in self._pieces[name]])
                out = sp.csr_matrix((v, (r, c)), shape=(self._m, n * n), dtype=dtype)
            self._cache[name] = out
        return self._cache[name]

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate(self._rhs) if self._rhs else np.zeros(0)

    def objective(self, name: str) -> np.ndarray:
        n = self.blocks[name]
        return self._obj.get(name, np.zeros(n * n, dtype=complex if self.hermitian else float))

    def evaluate(self, blocks: Mapping[str, np.ndarray]) -> float:
        return float(sum(np.real(np.vdot(self.objective(k), np.asarray(blocks[k]).reshape(-1)))
                         for k in self.blocks))

    def constraint_values(self, blocks: Mapping[str, np.ndarray]) -> np.ndarray:
        out = np.zeros(self._m)
        for k in self.blocks:
            out += np.real(self.coefficients(k).conj() @ np.asarray(blocks[k]).reshape(-1))
        return out

    def embedded_order(self) -> int:
        factor = 2 if self.hermitian else 1
        return factor * sum(self.blocks.values())

    def scaled(self, c: float) -> "SdpProblem":
        """Copy with the objective multiplied by ``c``."""
        out = SdpProblem(self.hermitian)
        out.blocks = dict(self.blocks)
        out._pieces = {k: list(v) for k, v in self._pieces.items()}
        out._rhs = list(self._rhs)
        out._m = self._m
        out._obj = {k: c * v for k, v in self._obj.items()}
        return out


# -- real embedding ----------------------------------------------------------

def _embed_rows(rows: sp.coo_matrix, n: int) -> sp.coo_matrix:
    rows = rows.tocoo()
    p, q = divmod(rows.col, n)
    re, im = rows.data.real / 2, rows.data.imag / 2
    big = 2 * n
    r = np.tile(rows.row, 4)
    cols = np.concatenate([p * big + q, (p + n) * big + (q + n), p * big + (q + n), (p + n) * big + q])
    vals = np.concatenate([re, re, -im, im])
    out = sp.coo_matrix((vals, (r, cols)), shape=(rows.shape[0], big * big))
    out.sum_duplicates()
    out.eliminate_zeros()
    return out


def embed_hermitian(p: SdpProblem) -> SdpProblem:
    """Real symmetric problem with the same optimal value.

    Each Hermitian block of order n becomes a real block of order 2n and every
    coefficient ``A`` becomes ``emb(A)/2``, so ``<emb(A)/2, emb(Z)> = Re Tr(A Z)``.
    """
    if not p.hermitian:
        return p
    out = SdpProblem(hermitian=False)
    for name, n in p.blocks.items():
        out.add_block(name, 2 * n)
        out._pieces[name] = [(0, _embed_rows(p.coefficients(name).tocoo(), n))]
        obj = sp.coo_matrix(p.objective(name).reshape(1, -1))
        out._obj[name] = _embed_rows(obj, n).toarray().ravel()
    out._rhs = [p.rhs]
    out._m = p.num_constraints
    return out


def extract_hermitian(y: np.ndarray) -> np.ndarray:
    n = y.shape[0] // 2
    return (y[:n, :n] + y[n:, n:]) / 2 + 1j * (y[n:, :n] - y[:n, n:]) / 2


# -- solving ------------------------------------------------------------------

def solve(p: SdpProblem, opts: SolverOptions | None = None) -> SdpSolution:
    """Solve ``p``; failures are reported through ``status``, never raised."""
    import cvxpy as cp

    opts = opts or SolverOptions()
    if p.embedded_order() > opts.max_order:
        raise CapacityError(f"embedded order {p.embedded_order()} exceeds cap {opts.max_order}")
    start = time.perf_counter()
    work = embed_hermitian(p) if (p.hermitian and opts.embed) else p
    variables, lhs, obj = {}, 0, 0
    for name, n in work.blocks.items():
        if work.hermitian:
            z = cp.Variable((n, n), hermitian=True, name=name)
            vz = cp.vec(z, order="C")
            lhs = lhs + cp.real(work.coefficients(name).conj() @ vz)
            obj = obj + cp.real(np.conj(work.objective(name)) @ vz)
            variables[name] = (z, [z >> 0])
        else:
            z = cp.Variable((n, n), PSD=True, name=name)
            vz = cp.vec(z, order="C")
            lhs = lhs + work.coefficients(name) @ vz
            obj = obj + work.objective(name) @ vz
            variables[name] = (z, [])
    b = work.rhs
    eq = lhs == b
    constraints = [eq] + [c for _, cons in variables.values() for c in cons]
    prob = cp.Problem(cp.Maximize(obj), constraints)
    kwargs = {}
    if opts.solver == "CLARABEL":
        kwargs = dict(tol_gap_abs=opts.gap_tol * 1e-2, tol_gap_rel=opts.gap_tol * 1e-2,
                      tol_feas=opts.feas_tol * 1e-1, max_iter=opts.max_iters)
    elif opts.solver == "SCS":
        kwargs = dict(eps=opts.feas_tol, max_iters=100 * opts.max_iters)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            prob.solve(solver=opts.solver, **kwargs)
        raw_status = prob.status
    except cp.error.SolverError:
        raw_status = "solver_error"
    iters = int(getattr(prob.solver_stats, "num_iters", 0) or 0) if prob.solver_stats else 0
    elapsed = time.perf_counter() - start

    if raw_status in ("infeasible", "infeasible_inaccurate"):
        return SdpSolution(INFEASIBLE, float("nan"), {}, float("nan"), float("inf"), float("inf"),
                           float("inf"), iters, opts.solver, elapsed)
    if raw_status in ("unbounded", "unbounded_inaccurate"):
        return SdpSolution(UNBOUNDED, float("inf"), {}, float("nan"), float("inf"), float("inf"),
                           float("inf"), iters, opts.solver, elapsed)
    if any(v.value is None for v, _ in variables.values()) or eq.dual_value is None:
        return SdpSolution(FAILURE, float("nan"), {}, float("nan"), float("inf"), float("inf"),
                           float("inf"), iters, opts.solver, elapsed)

    blocks = {k: np.asarray(v.value) for k, (v, _) in variables.items()}
    y = np.asarray(eq.dual_value, dtype=float).reshape(-1)
    primal_value = work.evaluate(blocks)
    dual_value = float(b @ y)
    residual = float(np.max(np.abs(work.constraint_values(blocks) - b), initial=0.0)) / (1 + np.max(np.abs(b), initial=0.0))
    psd_violation = 0.0
    dual_violation = 0.0
    for name, n in work.blocks.items():
        z = blocks[name]
        psd_violation = max(psd_violation, -float(np.linalg.eigvalsh((z + z.conj().T) / 2)[0]))
        s = (work.coefficients(name).conj().T @ y).reshape(n, n) - np.conj(work.objective(name)).reshape(n, n)
        dual_violation = max(dual_violation, -float(np.linalg.eigvalsh((s + s.conj().T) / 2)[0]))
    residual = max(residual, psd_violation)
    gap = abs(dual_value - primal_value) / (1 + abs(primal_value) + abs(dual_value))

    if p.hermitian and opts.embed:
        blocks = {k: extract_hermitian(v) for k, v in blocks.items()}
    ok = raw_status == "optimal" or (raw_status == "optimal_inaccurate")
    status = OPTIMAL if (ok and gap <= opts.gap_tol and residual <= opts.feas_tol * 10
                         and dual_violation <= opts.feas_tol * 10) else FAILURE
    return SdpSolution(status, primal_value, blocks, dual_value, gap, residual, dual_violation,
                       iters, opts.solver, elapsed, y)


# -- fidelity as an SDP ---------------------------------------------------------

SUPPORT_TOL = 1e-13


def psd_support(m: np.ndarray, tol: float = SUPPORT_TOL) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    keep = w > tol
    return np.diag(w[keep]).astype(complex), v[:, keep]


def fidelity_sdp_block(p: SdpProblem, rho, sigma, name: str = "fidelity",
                       reduce_support: bool = True) -> str:
    """Add the block ``[[rho, X], [X^dag, sigma]] >= 0`` and ``Re Tr X`` to the objective.

    ``rho`` and ``sigma`` may be constant matrices or :class:`AffineMatrix`
    expressions in other blocks. A constant side is restricted to its support
    (``X = V_rho Y V_sigma^dag``), which keeps the block strictly feasible for
    rank-deficient states without changing the optimum.
    """
    sides = []
    for side in (rho, sigma):
        if isinstance(side, AffineMatrix):
            sides.append((side, np.eye(side.order, dtype=complex)))
        elif reduce_support:
            d, v = psd_support(np.asarray(side, dtype=complex))
            sides.append((AffineMatrix.constant(d), v))
        else:
            m = np.asarray(side, dtype=complex)
            sides.append((AffineMatrix.constant(m), np.eye(m.shape[0], dtype=complex)))
    (left, vl), (right, vr) = sides
    if vl.shape[0] != vr.shape[0]:
        raise DimensionError(f"rho is {vl.shape[0]}x{vl.shape[0]} but sigma is {vr.shape[0]}x{vr.shape[0]}")
    nl, nr = left.order, right.order
    p.add_block(name, nl + nr)
    if nl:
        p.constrain_equal(name, 0, left)
    if nr:
        p.constrain_equal(name, nl, right)
    # Re Tr(V_l Y V_r^dag) = Re sum_ij Y[i, j] G[j, i] with G = V_r^dag V_l
    g = vr.conj().T @ vl
    c = np.zeros((nl + nr, nl + nr), dtype=complex)
    c[nl:, :nl] = g / 2
    c[:nl, nl:] = g.conj().T / 2
    p.add_objective(name, c)
    return name


def fidelity_sdp(rho, sigma, opts: SolverOptions | None = None) -> SdpSolution:
    p = SdpProblem()
    fidelity_sdp_block(p, np.asarray(rho), np.asarray(sigma))
    return solve(p, opts)


# -- interchange ---------------------------------------------------------------

def to_sdpa(p: SdpProblem) -> str:
    """SDPA sparse text (``.dat-s``); Hermitian problems are written embedded.

    In SDPA terms the problem is the dual form ``max F0.Y, Fi.Y = ci``: F0 is
    the objective, Fi the i-th constraint, c the right-hand side.
    """
    q = embed_hermitian(p)
    names = list(q.blocks)
    lines = ['"broadcast_discord SDP"', str(q.num_constraints), str(len(names)),
             " ".join(str(q.blocks[k]) for k in names),
             " ".join(f"{v:.17g}" for v in q.rhs) if q.num_constraints else ""]
    entries = []
    for bi, name in enumerate(names, start=1):
        n = q.blocks[name]
        obj = q.objective(name).real
        for flat in np.flatnonzero(obj):
            i, j = divmod(int(flat), n)
            if i <= j:
                entries.append((0, bi, i + 1, j + 1, obj[flat]))
        a = q.coefficients(name).tocoo()
        i, j = np.divmod(a.col, n)
        upper = i <= j
        for r, ii, jj, v in zip(a.row[upper], i[upper], j[upper], a.data[upper].real):
            entries.append((int(r) + 1, bi, int(ii) + 1, int(jj) + 1, v))
    entries.sort()
    lines += [f"{c} {b} {i} {j} {v:.17g}" for c, b, i, j, v in entries]
    return "\n".join(lines) + "\n"


def from_sdpa(text: str) -> SdpProblem:
    """Parse SDPA sparse text into a real :class:`SdpProblem`."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith(('"', "*"))]
    m = int(lines[0].split()[0])
    nblocks = int(lines[1].split()[0])
    sizes = [abs(int(float(s))) for s in lines[2].replace(",", " ").replace("{", " ").replace("}", " ").split()[:nblocks]]
    body = lines[3:]
    rhs = np.array([float(s) for s in body[0].split()], dtype=float) if m else np.zeros(0)
    if m == 0:
        body = lines[3:]
    else:
        body = body[1:]
    p = SdpProblem(hermitian=False)
    names = [f"block{i}" for i in range(1, nblocks + 1)]
    for name, n in zip(names, sizes):
        p.add_block(name, n)
    data = np.array([[float(x) for x in ln.split()] for ln in body]) if body else np.zeros((0, 5))
    for bi, name in enumerate(names, start=1):
        n = sizes[bi - 1]
        sel = data[data[:, 1] == bi] if len(data) else data
        con, i, j, v = sel[:, 0].astype(int), sel[:, 2].astype(int) - 1, sel[:, 3].astype(int) - 1, sel[:, 4]
        # mirror off-diagonal entries
        off = i != j
        con2 = np.concatenate([con, con[off]])
        i2 = np.concatenate([i, j[off]])
        j2 = np.concatenate([j, i[off]])
        v2 = np.concatenate([v, v[off]])
        objmask = con2 == 0
        obj = np.zeros(n * n)
        np.add.at(obj, i2[objmask] * n + j2[objmask], v2[objmask])
        p._obj[name] = obj
        a = sp.coo_matrix((v2[~objmask], (con2[~objmask] - 1, i2[~objmask] * n + j2[~objmask])),
                          shape=(m, n * n))
        p._pieces[name] = [(0, a)]
    p._rhs = [rhs]
    p._m = m
    return p
