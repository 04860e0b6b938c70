"""Normal-ordered displaced photon-number moments and counting statistics.

Two independent routes give ``<:[n(alpha)]^m:>``:

* :func:`moment_direct` applies ``(a - alpha)`` ``m`` times from both sides
  of ``rho`` and takes the trace. ``a`` only lowers, so this is exact in the
  truncated space.
* :func:`moment_via_displacement` displaces the state and sums falling
  factorials of the photon-number distribution.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom

from .errors import (
    DivergentRepresentation,
    DomainError,
    InsufficientMoments,
    NumericalInconsistency,
    SeriesTruncationError,
    TruncationError,
)
from .fock import DEFAULT_MAX_DIM, DEFAULT_TAIL_TOL, DensityMatrix, displacement_matrix, _displacement_work_dim

SERIES_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MomentSet:
    """Moments ``values[m] = <:[n(alpha)]^m:>`` for ``m = 0 .. max_order``."""

    alpha: complex
    values: np.ndarray
    source: str = "analytic"
    std_errors: Optional[np.ndarray] = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 1 or vals.size == 0:
            raise DomainError("moment values must be a nonempty vector")
        if self.source not in ("analytic", "simulated"):
            raise DomainError(f"unknown moment source {self.source!r}")
        if vals[0] != 1.0:
            raise DomainError(f"zeroth moment must be exactly 1, got {vals[0]!r}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("moments must be finite")
        # estimates from finite data may dip below zero
        if self.source == "analytic" and np.any(vals < -1e-9):
            raise NumericalInconsistency(f"negative normally ordered moment {vals.min():.3g}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "alpha", complex(self.alpha))
        if self.std_errors is not None:
            err = np.array(self.std_errors, dtype=float, copy=True)
            if err.shape != vals.shape:
                raise DomainError("std_errors must match values")
            err.setflags(write=False)
            object.__setattr__(self, "std_errors", err)

    @property
    def max_order(self) -> int:
        return self.values.size - 1

    def scaled(self, lam: float) -> "MomentSet":
        """Moments of the same state seen with efficiency ``lam``: mu_l -> lam^l mu_l."""
        factors = lam ** np.arange(self.values.size)
        err = None if self.std_errors is None else self.std_errors * factors
        return MomentSet(self.alpha, self.values * factors, self.source, err)


@dataclass(frozen=True, eq=False)
class PhotocountDistribution:
    alpha: complex
    eta: float
    probs: np.ndarray
    truncation_order: int
    tail_mass: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < -1e-8) or np.any(p > 1 + 1e-8):
            raise NumericalInconsistency("photocount probabilities out of range")
        total = p.sum() + self.tail_mass
        if abs(total - 1.0) > 1e-6:
            raise NumericalInconsistency(f"photocount distribution sums to {total!r}")


class SeriesValue(NamedTuple):
    value: float
    order: int
    last_term: float


def _imag_check(value: complex) -> float:
    scale = max(1.0, abs(value.real))
    residue = abs(value.imag) / scale
    if residue > 1e-8:
        raise NumericalInconsistency(f"moment has imaginary residue {residue:.3g}")
    return value.real


def _lower(X: np.ndarray, alpha: complex) -> np.ndarray:
    """(a - alpha) X (a - alpha)^dag without forming dense operators."""
    d = X.shape[0]
    s = np.sqrt(np.arange(1, d, dtype=float))
    Y = -alpha * X
    Y[:-1] += s[:, None] * X[1:]
    Z = -np.conj(alpha) * Y
    Z[:, :-1] += Y[:, 1:] * s[None, :]
    return Z


def moments_direct(rho: DensityMatrix, alpha: complex, max_order: int) -> np.ndarray:
    """All moments of order ``0 .. max_order`` by the direct route."""
    if max_order < 0:
        raise DomainError("moment order must be nonnegative")
    alpha = complex(alpha)
    out = np.empty(max_order + 1)
    out[0] = 1.0
    X = np.array(rho.entries)
    for m in range(1, max_order + 1):
        X = _lower(X, alpha)
        out[m] = _imag_check(np.trace(X))
    return out


def moment_direct(rho: DensityMatrix, alpha: complex, m: int) -> float:
    """``Tr[rho (a^dag - alpha*)^m (a - alpha)^m]``."""
    return float(moments_direct(rho, alpha, m)[m])


def _falling_factorial(n: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros(n.shape)
    ok = n >= m
    out[ok] = np.exp(gammaln(n[ok] + 1.0) - gammaln(n[ok] - m + 1.0))
    return out


def moment_via_displacement(
    rho: DensityMatrix,
    alpha: complex,
    m: int,
    tol: float = DEFAULT_TAIL_TOL,
    max_dim: int = DEFAULT_MAX_DIM,
) -> float:
    """``sum_n n!/(n-m)! <n|rho(-alpha)|n>``.

    The working space grows until levels in its top fifth contribute less
    than 1e-13 of the result, since the falling factorial amplifies the tail.
    """
    if m < 0:
        raise DomainError("moment order must be nonnegative")
    if m == 0:
        return 1.0
    alpha = complex(alpha)
    work = _displacement_work_dim(rho.dim, alpha)
    while True:
        if work > max_dim:
            raise TruncationError(f"moment of order {m} needs working dimension {work} > {max_dim}")
        Dm = displacement_matrix(-alpha, work)[:, : rho.dim]
        pops = np.einsum("ij,jk,ik->i", Dm, rho.entries, Dm.conj()).real
        lost = 1.0 - pops.sum()
        terms = _falling_factorial(np.arange(work, dtype=float), m) * pops
        total = terms.sum()
        top = terms[int(0.8 * work):].sum()
        if lost < tol and abs(top) <= 1e-13 * max(1.0, abs(total)):
            return float(total)
        if work == max_dim:
            raise TruncationError(f"moment of order {m} not converged at cap {max_dim}")
        work = min(math.ceil(1.5 * work), max_dim)


class MomentCache:
    """Thread-safe memo of direct-route moments keyed by (state, alpha, order)."""

    def __init__(self):
        self._data: dict = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(rho: DensityMatrix, alpha: complex, m: int):
        alpha = complex(alpha)
        return (rho.digest, round(alpha.real, 12), round(alpha.imag, 12), m)

    def get_many(self, rho: DensityMatrix, alpha: complex, max_order: int):
        with self._lock:
            vals = [self._data.get(self.key(rho, alpha, m)) for m in range(max_order + 1)]
        if any(v is None for v in vals):
            return None
        return np.array(vals)

    def put_many(self, rho: DensityMatrix, alpha: complex, values: np.ndarray):
        with self._lock:
            for m, v in enumerate(values):
                self._data[self.key(rho, alpha, m)] = float(v)

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


default_cache = MomentCache()


def moment_set(
    rho: DensityMatrix, alpha: complex, max_order: int, cache: Optional[MomentCache] = default_cache
) -> MomentSet:
    """Analytic :class:`MomentSet` up to ``max_order`` (cached)."""
    vals = cache.get_many(rho, alpha, max_order) if cache is not None else None
    if vals is None:
        vals = moments_direct(rho, alpha, max_order)
        if cache is not None:
            cache.put_many(rho, alpha, vals)
    return MomentSet(complex(alpha), vals, "analytic")


# ---------------------------------------------------------------------------
# Counting statistics


def _displaced_populations(rho: DensityMatrix, alpha: complex) -> np.ndarray:
    from .fock import displaced_entries

    return np.clip(displaced_entries(rho, alpha).diagonal().real, 0.0, None)


def photocount_direct(
    rho: DensityMatrix, alpha: complex, eta: float, n_max: Optional[int] = None
) -> PhotocountDistribution:
    """Counting statistics of the displaced state behind efficiency ``eta``.

    Each photon of ``rho(-alpha)`` is registered with probability ``eta``.
    ``n_max`` limits the returned vector; the omitted mass is kept in
    ``tail_mass``.
    """
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"efficiency must lie in (0, 1], got {eta}")
    pops = _displaced_populations(rho, alpha)
    k = np.arange(pops.size)
    if eta == 1.0:
        probs = pops
    else:
        probs = binom.pmf(k[:, None], k[None, :], eta) @ pops
    probs = probs / probs.sum()
    tail = 0.0
    if n_max is not None:
        if n_max < 0:
            raise DomainError("n_max must be nonnegative")
        if n_max + 1 < probs.size:
            tail = float(probs[n_max + 1:].sum())
            probs = probs[: n_max + 1]
        else:
            probs = np.concatenate([probs, np.zeros(n_max + 1 - probs.size)])
    return PhotocountDistribution(complex(alpha), eta, probs, pops.size - 1, tail)


def photocount_from_moments(moments: MomentSet, eta: float, n: int, tol: float = SERIES_TOL) -> SeriesValue:
    """Probability of ``n`` counts from the alternating moment series.

    Summation stops at order ``L`` once the partial sums over the last three
    terms vary by less than ``tol`` and the next term's bound
    ``eta^(L+1) mu_(L+1) / (L+1-n)!`` is below ``tol``.
    """
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"efficiency must lie in (0, 1], got {eta}")
    if n < 0:
        raise DomainError("count index must be nonnegative")
    mu = moments.values
    if mu.size < n + 4:
        raise InsufficientMoments(f"need moments up to order {n + 3}, have {moments.max_order}")
    partial = []
    s = 0.0
    log_nfact = gammaln(n + 1)
    residual = math.inf
    for ell in range(n, mu.size - 1):
        log_c = ell * math.log(eta) - gammaln(ell - n + 1) - log_nfact
        term = (-1) ** (ell - n) * math.exp(log_c) * mu[ell]
        s += term
        partial.append(s)
        if len(partial) < 3:
            continue
        spread = max(partial[-3:]) - min(partial[-3:])
        nxt = math.exp((ell + 1) * math.log(eta) - gammaln(ell + 2 - n)) * abs(mu[ell + 1])
        residual = max(spread, nxt)
        if spread < tol and nxt < tol:
            return SeriesValue(s, ell, abs(term))
    raise SeriesTruncationError(
        f"moment series for n={n} not converged by order {moments.max_order}", residual
    )


def quasiprob_s(rho: DensityMatrix, alpha: complex, s: float, eta: float = 1.0) -> float:
    """s-parametrized quasiprobability at ``alpha`` from displaced counting statistics."""
    if not s < 1.0:
        raise DomainError(f"ordering parameter must be < 1, got {s}")
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"efficiency must lie in (0, 1], got {eta}")
    ratio = (eta * (1.0 - s) - 2.0) / (eta * (1.0 - s))
    pref = 2.0 / (math.pi * (1.0 - s))
    if ratio == 0.0:
        return pref * photocount_direct(rho, alpha, eta).probs[0]
    p = photocount_direct(rho, alpha, eta).probs
    weights = ratio ** np.arange(p.size)
    terms = weights * p
    if abs(ratio) > 1.0:
        tail = np.abs(terms[-max(1, p.size // 4):]).max()
        if tail >= 1e-12:
            raise DivergentRepresentation(
                f"|ratio| = {abs(ratio):.3g} and the counting series does not decay (tail term {tail:.3g})"
            )
    return float(pref * terms.sum())
