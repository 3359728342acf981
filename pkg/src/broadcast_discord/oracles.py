"""Reference computations that do not touch the SDP backend.

* brute-force discord with measurement on a qubit B (grid + pattern search),
* feasible measure-and-prepare fidelities by direct search,
* the fidelity quasi-triangle inequality used in the convergence argument.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize, nnls

from .exceptions import DimensionError, DomainError
from .states import (DensityMatrix, TOL, clamp_eigenvalues, fidelity_closed_form, hermitize,
                     mutual_information, trace_distance, von_neumann_entropy)

PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


@dataclass(frozen=True)
class MeasurementSweepConfig:
    grid: tuple[int, int] = (181, 361)
    refine: int = 200
    outcomes: int = 2
    povm_samples: int = 400
    seed: int = 0
    trace_path: str | None = None

    def __post_init__(self):
        if min(self.grid) < 2:
            raise DomainError("grid resolutions must be >= 2")
        if self.outcomes not in (2, 3, 4):
            raise DomainError("outcomes must be 2, 3 or 4")


def _entropy_batch(mats: np.ndarray) -> np.ndarray:
    """Von Neumann entropies (bits) of a stack of unnormalized PSD matrices, normalized first."""
    w = np.linalg.eigvalsh(mats)
    w = np.clip(w, 0, None)
    tr = w.sum(axis=-1, keepdims=True)
    p = np.divide(w, tr, out=np.zeros_like(w), where=tr > 0)
    logs = np.log2(np.where(p > 1e-12, p, 1.0))
    return -(p * logs).sum(axis=-1)


def _conditional_a_states(rho: np.ndarray, da: int, db: int, povm: np.ndarray) -> np.ndarray:
    """Unnormalized Tr_B[(1 (x) M_y) rho] for a batch of POVMs shaped (..., m, db, db)."""
    r = rho.reshape(da, db, da, db)
    return np.einsum("...qb,abcq->...ac", povm, r)


def measured_information_batch(rho: np.ndarray, da: int, db: int, povms: np.ndarray) -> np.ndarray:
    """I(A:Y) for each POVM in a batch shaped (n, m, db, db)."""
    cond = _conditional_a_states(rho, da, db, povms)
    cond = (cond + np.conj(np.swapaxes(cond, -1, -2))) / 2
    probs = np.real(np.trace(cond, axis1=-2, axis2=-1))
    s_a = von_neumann_entropy(np.einsum("abcb->ac", rho.reshape(da, db, da, db)))
    return s_a - np.sum(probs * _entropy_batch(cond), axis=-1)


def measured_mutual_information(rho: DensityMatrix, povm: Sequence[np.ndarray]) -> float:
    """I(A:Y) after measuring B with ``povm``."""
    da, db = rho.dims
    stack = np.asarray(povm, dtype=complex)[None]
    return float(measured_information_batch(rho.data, da, db, stack)[0])


def _projectors(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    n = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
    ns = np.einsum("...i,ijk->...jk", n, PAULI)
    eye = np.eye(2)
    return np.stack([(eye + ns) / 2, (eye - ns) / 2], axis=-3)


def _projective_info(rho, da, theta, phi):
    return measured_information_batch(rho, da, 2, _projectors(np.asarray(theta), np.asarray(phi)))


def _pattern_search(f, x0: np.ndarray, step: float, steps: int, trace=None) -> tuple[np.ndarray, float]:
    """Compass search; the step halves after every 20 non-improving moves."""
    x, fx = np.asarray(x0, dtype=float), f(x0)
    dirs = np.vstack([np.eye(len(x)), -np.eye(len(x))])
    stale = 0
    for it in range(steps):
        improved = False
        for d in dirs:
            y = x + step * d
            fy = f(y)
            if fy < fx:
                x, fx, improved = y, fy, True
                break
        if trace is not None:
            trace.append((it, *x, fx, step))
        if not improved:
            stale += 1
            if stale % 20 == 0:
                step *= 0.5
    return x, fx


def _random_extremal_povm(rng, m: int, tries: int = 50) -> np.ndarray | None:
    """Rank-one qubit POVM with ``m`` outcomes: weights w_y >= 0 with sum w_y n_y = 0."""
    for _ in range(tries):
        n = rng.normal(size=(m, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        a = np.vstack([n.T, np.ones(m)])
        w, res = nnls(a, np.array([0, 0, 0, 1.0]))
        if res < 1e-10 and np.all(w > 1e-6):
            ns = np.einsum("yi,ijk->yjk", n, PAULI)
            return w[:, None, None] * (np.eye(2) + ns)
    return None


def discord_bruteforce(rho_AB: DensityMatrix, cfg: MeasurementSweepConfig | None = None) -> float:
    """min over measurements on B of I(A:B) - I(A:Y), for a qubit B.

    Projective measurements are swept on a Bloch-angle grid and refined by a
    pattern search; with ``cfg.outcomes > 2`` random extremal POVMs with that
    many outcomes are also tried. The result is an upper bound on the exact
    minimum that the refinement makes tight in practice.
    """
    cfg = cfg or MeasurementSweepConfig()
    if len(rho_AB.dims) != 2:
        raise DimensionError("expected a bipartite state")
    da, db = rho_AB.dims
    if db != 2:
        raise DomainError("brute-force discord supports a qubit B only")
    rho = rho_AB.data
    i_ab = mutual_information(rho_AB)
    nt, nphi = cfg.grid
    theta = np.linspace(0, np.pi, nt)
    phi = np.linspace(0, 2 * np.pi, nphi)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    info = _projective_info(rho, da, tt.ravel(), pp.ravel())
    order = np.argsort(-info)
    starts = [order[0]]
    for idx in order[1:]:
        if len(starts) == 3:
            break
        if all(abs(tt.ravel()[idx] - tt.ravel()[s]) + abs(pp.ravel()[idx] - pp.ravel()[s]) > 0.2 for s in starts):
            starts.append(idx)
    best = info[order[0]]
    trace = [] if cfg.trace_path else None
    if cfg.refine > 0:
        f = lambda x: -float(_projective_info(rho, da, x[0], x[1]))
        step = np.pi / max(nt - 1, 1)
        for s in starts:
            _, fx = _pattern_search(f, np.array([tt.ravel()[s], pp.ravel()[s]]), step, cfg.refine, trace)
            best = max(best, -fx)
    if cfg.outcomes > 2:
        rng = np.random.default_rng(cfg.seed)
        povms = [p for p in (_random_extremal_povm(rng, cfg.outcomes) for _ in range(cfg.povm_samples))
                 if p is not None]
        if povms:
            best = max(best, float(np.max(measured_information_batch(rho, da, 2, np.array(povms)))))
    if trace is not None:
        with open(cfg.trace_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "theta", "phi", "neg_info", "step_size"])
            w.writerows(trace)
    return float(max(0.0, i_ab - best))


# -- feasible entanglement-breaking fidelities ----------------------------------

def _unpack(x: np.ndarray, d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    g = (x[: 2 * d * m:2] + 1j * x[1: 2 * d * m:2]).reshape(d, m)
    rest = x[2 * d * m:]
    betas = (rest[0::2] + 1j * rest[1::2]).reshape(m, d)
    betas = betas / np.maximum(np.linalg.norm(betas, axis=1, keepdims=True), 1e-300)
    gram = g @ g.conj().T
    w, v = np.linalg.eigh(gram)
    inv_sqrt = (v / np.sqrt(np.clip(w, 1e-300, None))) @ v.conj().T
    cols = inv_sqrt @ g
    povm = np.einsum("iy,jy->yij", cols, cols.conj())
    return povm, betas


def measure_prepare_output(rho: np.ndarray, da: int, db: int, povm, preps) -> np.ndarray:
    """(id (x) L)[rho] for L(X) = sum_y Tr(M_y X) prep_y, preps given as pure vectors or matrices."""
    cond = _conditional_a_states(rho, da, db, np.asarray(povm))
    out = np.zeros((da * db, da * db), dtype=complex)
    for c, b in zip(cond, preps):
        b = np.asarray(b)
        out += np.kron(c, np.outer(b, b.conj()) if b.ndim == 1 else b)
    return hermitize(out)


def _fidelity_fast(rho_sqrt: np.ndarray, sigma: np.ndarray) -> float:
    w = np.linalg.eigvalsh(hermitize(rho_sqrt @ sigma @ rho_sqrt))
    return float(np.sum(np.sqrt(np.clip(w, 0, None))))


def eb_fidelity_search(rho_AB: DensityMatrix, samples: int = 8, seed: int = 0,
                       outcomes: int | None = None, maxiter: int = 400, polish: int = 1500,
                       return_model: bool = False):
    """Best fidelity F(rho, (id (x) L)[rho]) over searched measure-and-prepare channels L on B.

    Every candidate is a genuine entanglement-breaking channel, so the value is
    a certified lower bound on the optimum over that class. Start ``i`` is drawn
    from ``(seed, i)``, so the result never decreases as ``samples`` grows.
    """
    da, db = rho_AB.dims
    m = db if outcomes is None else outcomes
    rho = rho_AB.data
    w, v = np.linalg.eigh(rho)
    rho_sqrt = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T

    def value(x):
        povm, betas = _unpack(x, db, m)
        return _fidelity_fast(rho_sqrt, measure_prepare_output(rho, da, db, povm, betas))

    best_f, best_x = -1.0, None
    # deterministic first start: measure and re-prepare in the eigenbasis of rho_B
    rho_b = np.einsum("abad->bd", rho.reshape(da, db, da, db))
    _, u = np.linalg.eigh(rho_b)
    starts = []
    g0 = np.zeros((db, m), dtype=complex)
    g0[:, :db] = u[:, :min(db, m)] if m >= db else u[:, :m]
    betas0 = np.zeros((m, db), dtype=complex)
    betas0[: min(m, db)] = u.T[: min(m, db)]
    if m > db:
        betas0[db:] = 1.0
    x0 = np.empty(2 * db * m + 2 * m * db)
    x0[0:2 * db * m:2], x0[1:2 * db * m:2] = g0.real.ravel(), g0.imag.ravel()
    x0[2 * db * m::2], x0[2 * db * m + 1::2] = betas0.real.ravel(), betas0.imag.ravel()
    if m >= db:
        starts.append(x0)
    for i in range(samples):
        rng = np.random.default_rng([seed, i])
        starts.append(rng.normal(size=x0.shape))
    for x in starts:
        # BFGS, then a derivative-free polish (BFGS can stall where the output loses rank);
        # each start's value depends only on that start, which keeps prefixes monotone
        cands = [x]
        res = minimize(lambda y: -value(y), x, method="BFGS", options=dict(maxiter=maxiter, gtol=1e-8))
        cands.append(res.x)
        if polish:
            res = minimize(lambda y: -value(y), res.x, method="Nelder-Mead",
                           options=dict(maxiter=polish, xatol=1e-10, fatol=1e-13, adaptive=True))
            cands.append(res.x)
        for cand in cands:
            f = value(cand)
            if f > best_f:
                best_f, best_x = f, cand
    best_f = float(min(best_f, 1.0))
    if return_model:
        from .choi import MeasurementModel

        povm, betas = _unpack(best_x, db, m)
        return best_f, MeasurementModel(tuple(hermitize(p) for p in povm), tuple(betas))
    return best_f


# -- inequality checkers -------------------------------------------------------

@dataclass(frozen=True)
class ContinuityReport:
    """The three sides of the chain and its slacks.

    All sides are non-negative, so slacks compare squares: ``sqrt(1 - F)`` turns a
    round-off error of 1e-16 in F into 1e-8, the squared form does not.
    """

    lhs: float
    middle: float
    rhs: float

    @property
    def slack_first(self) -> float:
        return self.middle ** 2 - self.lhs ** 2

    @property
    def slack_second(self) -> float:
        return self.rhs ** 2 - self.middle ** 2

    @property
    def slack(self) -> float:
        return min(self.slack_first, self.slack_second)

    def holds(self, tol: float = 1e-9) -> bool:
        return self.slack >= -tol


def check_continuity(rho, sigma, tau) -> ContinuityReport:
    """|F(rho,sigma) - F(tau,sigma)| <= sqrt2 sqrt(1 - F(tau,rho)) <= sqrt2 sqrt(T(tau,rho))."""
    lhs = abs(fidelity_closed_form(rho, sigma) - fidelity_closed_form(tau, sigma))
    middle = np.sqrt(2) * np.sqrt(max(0.0, 1 - fidelity_closed_form(tau, rho)))
    rhs = np.sqrt(2) * np.sqrt(trace_distance(tau, rho))
    return ContinuityReport(float(lhs), float(middle), float(rhs))


def convergence_slack(f_eb: float, f_k: float, db: int, k: int) -> float:
    """Slack of ``f_eb >= f_k - sqrt(2 |B| / k)``."""
    return float(f_eb - (f_k - np.sqrt(2 * db / k)))


def fawzi_renner_slack(f_eb: float, discord: float) -> float:
    """Slack of ``f_eb >= 2^(-discord / 2)``."""
    return float(f_eb - 2.0 ** (-discord / 2))
