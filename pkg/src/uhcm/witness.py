"""Nonclassicality witnesses built from displaced photon-number moments.

For ``k`` and filter width ``w`` the Hankel moment matrix

    L[m, m'] = w^(2(m+m')) <:[n(alpha)]^(m+m'):>,   m, m' = 0..k

is positive semidefinite for every classical state. Two tests are offered:
the quadratic form with the normalised regularizing filter (truncated
regularized P function) and the minimal eigenvalue of ``L``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, IncoherentRecordSet, InsufficientChannels, InsufficientMoments
from .fock import DensityMatrix
from .moments import MomentCache, MomentSet, default_cache, moment_set
from .simulation import CorrelationRecord, ac_products

JACOBI_TOL = 1e-13
DEGENERACY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    k: int
    w: float
    alpha: complex
    entries: np.ndarray

    def __post_init__(self):
        L = np.array(self.entries, dtype=float, copy=True)
        if L.shape != (self.k + 1, self.k + 1):
            raise DomainError(f"moment matrix must be {(self.k + 1,) * 2}, got {L.shape}")
        if not np.array_equal(L, L.T):
            raise DomainError("moment matrix must be exactly symmetric")
        L.setflags(write=False)
        object.__setattr__(self, "entries", L)


@dataclass(frozen=True, eq=False)
class FilterVector:
    q: float
    w: float
    k: int
    components: np.ndarray


class WitnessValue(NamedTuple):
    F_min: float
    h_opt: np.ndarray
    degenerate: bool


def _hankel(seq: np.ndarray, k: int) -> np.ndarray:
    idx = np.add.outer(np.arange(k + 1), np.arange(k + 1))
    return seq[idx]


def build_moment_matrix(moments: MomentSet, k: int, w: float) -> MomentMatrix:
    if k < 0:
        raise DomainError("k must be nonnegative")
    if not w > 0:
        raise DomainError("filter width w must be positive")
    if moments.max_order < 2 * k:
        raise InsufficientMoments(f"k={k} needs moments up to order {2 * k}, have {moments.max_order}")
    ell = np.arange(2 * k + 1)
    seq = w ** (2.0 * ell) * moments.values[: 2 * k + 1]
    return MomentMatrix(k, float(w), moments.alpha, _hankel(seq, k))


def agarwal_tara_matrix(moments: MomentSet, k: int) -> MomentMatrix:
    """Matrix of displaced moments ``<:[n(alpha)]^(m+m'):>`` (unit filter width)."""
    return build_moment_matrix(moments, k, 1.0)


def _records_by_order(records: Sequence[CorrelationRecord], max_order: int):
    by_order = {}
    for rec in records:
        by_order[rec.m] = rec
    missing = [ell for ell in range(1, max_order + 1) if ell not in by_order]
    if missing:
        raise InsufficientMoments(f"missing correlation orders {missing}")
    used = [by_order[ell] for ell in range(1, max_order + 1)]
    a0, z0 = used[0].alpha, used[0].zeta_tilde
    for rec in used[1:]:
        if abs(rec.alpha - a0) > 1e-12 * max(1.0, abs(a0)) or abs(rec.zeta_tilde - z0) > 1e-12 * z0:
            raise IncoherentRecordSet("records disagree on alpha or zeta_tilde")
    return used


def matrix_from_gamma(records: Sequence[CorrelationRecord], k: int, w_tilde: float) -> MomentMatrix:
    """Moment matrix straight from measured correlations, ``w_tilde = w / zeta_tilde``."""
    if not w_tilde > 0:
        raise DomainError("w_tilde must be positive")
    if k == 0:
        return MomentMatrix(0, w_tilde, 0j, np.ones((1, 1)))
    used = _records_by_order(records, 2 * k)
    seq = np.empty(2 * k + 1)
    seq[0] = 1.0
    for ell, rec in enumerate(used, start=1):
        seq[ell] = w_tilde ** (2 * ell) / math.comb(2 * ell, ell) * rec.gamma_hat
    return MomentMatrix(k, w_tilde * used[0].zeta_tilde, used[0].alpha, _hankel(seq, k))


def moments_from_records(records: Sequence[CorrelationRecord], max_order: int) -> MomentSet:
    """Simulated :class:`MomentSet` with standard errors from correlation records."""
    used = _records_by_order(records, max_order)
    vals = [1.0]
    errs = [0.0]
    for ell, rec in enumerate(used, start=1):
        scale = math.comb(2 * ell, ell) * rec.zeta_tilde ** (2 * ell)
        vals.append(rec.gamma_hat / scale)
        errs.append(rec.std_error / scale)
    return MomentSet(used[0].alpha, vals, "simulated", errs)


def filter_coefficients(q: float, w: float, k: int) -> np.ndarray:
    """Unnormalised regularizing-filter coefficients ``H_0 .. H_k``."""
    if not q > 2:
        raise DomainError(f"q must exceed 2, got {q}")
    if not w > 0:
        raise DomainError("filter width w must be positive")
    m = np.arange(k + 1)
    log_pref = (1 / q + 0.5) * math.log(2) + math.log(w) - 0.5 * (
        math.log(math.pi * q) + gammaln(2 / q)
    )
    log_abs = log_pref + gammaln(2 / q * (m + 1)) - 2 * gammaln(m + 1)
    return (-1.0) ** m * np.exp(log_abs)


def filter_vector(q: float, w: float, k: int) -> FilterVector:
    """Unit vector of the first ``k+1`` filter coefficients.

    Works in log space; the common prefactor cancels in the normalisation.
    """
    if k < 0:
        raise DomainError("k must be nonnegative")
    if not q > 2:
        raise DomainError(f"q must exceed 2, got {q}")
    if not w > 0:
        raise DomainError("filter width w must be positive")
    m = np.arange(k + 1)
    log_abs = gammaln(2 / q * (m + 1)) - 2 * gammaln(m + 1)
    mag = np.exp(log_abs - log_abs.max())
    h = (-1.0) ** m * mag
    return FilterVector(float(q), float(w), k, h / np.linalg.norm(h))


def truncated_regularized_p(matrix: MomentMatrix, filt: FilterVector) -> float:
    if filt.k != matrix.k:
        raise DomainError(f"filter has k={filt.k}, matrix has k={matrix.k}")
    h = filt.components
    return float(h @ matrix.entries @ h)


def jacobi_eigh(A: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 64):
    """Eigen-decomposition of a small real symmetric matrix by cyclic Jacobi.

    Sweeps until the off-diagonal Frobenius norm falls below
    ``tol * max(1, ||A||_F)``. Returns ascending eigenvalues and the matching
    eigenvectors as columns.
    """
    A = np.array(A, dtype=float, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(A)))
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A[~np.eye(n, dtype=bool)]))
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                diff = A[q, q] - A[p, p]
                if apq == 0.0:
                    continue
                if abs(apq) < 1e-18 * abs(diff):
                    # rotation angle below machine resolution
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    vals = np.diag(A).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], V[:, order]


def min_eigenvalue_witness(matrix: MomentMatrix) -> WitnessValue:
    """Smallest eigenvalue of the moment matrix and its unit eigenvector."""
    vals, vecs = jacobi_eigh(matrix.entries)
    h = vecs[:, 0]
    h = h / np.linalg.norm(h)
    degenerate = vals.size > 1 and (vals[1] - vals[0]) < DEGENERACY_TOL
    return WitnessValue(float(vals[0]), h, bool(degenerate))


# ---------------------------------------------------------------------------
# Reports


@dataclass
class WitnessReport:
    """Witness values on a grid of displacements for one ``(k, w, q)``."""

    k: int
    w: float
    q: float
    alpha: np.ndarray
    P_trunc: np.ndarray
    F_min: np.ndarray
    h_opt: np.ndarray
    envelope: np.ndarray
    envelope_c: float = 0.0
    P_ci: Optional[np.ndarray] = None
    F_ci: Optional[np.ndarray] = None
    P_z: Optional[np.ndarray] = None
    F_z: Optional[np.ndarray] = None

    @property
    def P_env(self) -> np.ndarray:
        return self.P_trunc * self.envelope

    @property
    def F_env(self) -> np.ndarray:
        return self.F_min * self.envelope


def envelope_factor(alpha, c: float) -> np.ndarray:
    return np.exp(-c * np.abs(np.asarray(alpha)) ** 2)


def scan(
    rho: DensityMatrix,
    alphas: Sequence[complex],
    ks: Sequence[int],
    w: float,
    q: float,
    envelope_c: float = 0.0,
    threads: int = 1,
    cache: Optional[MomentCache] = default_cache,
) -> dict:
    """Evaluate both witnesses for every ``k`` in ``ks`` along ``alphas``.

    Returns ``{k: WitnessReport}``. Points are evaluated in parallel when
    ``threads > 1`` and collected in grid order.
    """
    alphas = np.asarray(alphas, dtype=complex)
    ks = list(ks)
    kmax = max(ks)
    filters = {k: filter_vector(q, w, k) for k in ks}

    def point(alpha):
        ms = moment_set(rho, alpha, 2 * kmax, cache=cache)
        out = {}
        for k in ks:
            L = build_moment_matrix(ms, k, w)
            wv = min_eigenvalue_witness(L)
            out[k] = (truncated_regularized_p(L, filters[k]), wv.F_min, wv.h_opt)
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(point, alphas))
    else:
        results = [point(a) for a in alphas]

    env = envelope_factor(alphas, envelope_c)
    reports = {}
    for k in ks:
        reports[k] = WitnessReport(
            k=k, w=float(w), q=float(q), alpha=alphas,
            P_trunc=np.array([r[k][0] for r in results]),
            F_min=np.array([r[k][1] for r in results]),
            h_opt=np.array([r[k][2] for r in results]),
            envelope=env, envelope_c=float(envelope_c),
        )
    return reports


def _witness_from_currents(currents, k, w_tilde, filt, alpha, zeta_tilde):
    prods = ac_products(currents, 2 * k)
    recs = [
        CorrelationRecord(ell, alpha, float(prods[ell - 1].mean()), 0.0, zeta_tilde, currents.shape[0])
        for ell in range(1, 2 * k + 1)
    ]
    L = matrix_from_gamma(recs, k, w_tilde)
    return truncated_regularized_p(L, filt), min_eigenvalue_witness(L)


def bootstrap_witness(
    currents: np.ndarray,
    k: int,
    w_tilde: float,
    q: float,
    resamples: int = 200,
    seed: int = 0,
    alpha: complex = 0j,
    zeta_tilde: float = 1.0,
    envelope_c: float = 0.0,
    index_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None,
) -> WitnessReport:
    """Percentile bootstrap over shots for both witnesses at one displacement.

    Each resample draws shot indices with replacement (``index_sampler``
    overrides the draw), recomputes the ac means and all correlation orders,
    and rebuilds the matrix. Intervals are the 2.5 and 97.5 percentiles; the
    z-scores divide the point estimate by the bootstrap standard deviation.
    """
    currents = np.asarray(currents, dtype=float)
    N, M = currents.shape
    if M < 4 * k:
        raise InsufficientChannels(f"k={k} needs {4 * k} detectors, have {M}")
    if resamples < 1:
        raise DomainError("resamples must be >= 1")
    filt = filter_vector(q, w_tilde * zeta_tilde, k)
    P0, W0 = _witness_from_currents(currents, k, w_tilde, filt, alpha, zeta_tilde)

    if index_sampler is None:
        def index_sampler(rng, n):
            return rng.integers(0, n, n)

    boot_P = np.empty(resamples)
    boot_F = np.empty(resamples)
    for b in range(resamples):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        idx = index_sampler(rng, N)
        P, W = _witness_from_currents(currents[idx], k, w_tilde, filt, alpha, zeta_tilde)
        boot_P[b], boot_F[b] = P, W.F_min

    def z(point, samples):
        sd = samples.std(ddof=1) if samples.size > 1 else 0.0
        if sd > 0:
            return point / sd
        return 0.0 if point == 0 else math.copysign(math.inf, point)

    env = envelope_factor([alpha], envelope_c)
    return WitnessReport(
        k=k, w=w_tilde * zeta_tilde, q=float(q), alpha=np.array([complex(alpha)]),
        P_trunc=np.array([P0]), F_min=np.array([W0.F_min]), h_opt=W0.h_opt[None, :],
        envelope=env, envelope_c=float(envelope_c),
        P_ci=np.percentile(boot_P, [2.5, 97.5])[None, :],
        F_ci=np.percentile(boot_F, [2.5, 97.5])[None, :],
        P_z=np.array([z(P0, boot_P)]),
        F_z=np.array([z(W0.F_min, boot_F)]),
    )
