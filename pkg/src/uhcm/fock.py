"""Single-mode states in a truncated Fock basis.

States are dense complex matrices. Builders pick the cutoff either from a
fixed ``N_max`` or adaptively, growing the dimension by 1.5x until the
probability mass beyond the cutoff drops under ``tail_tol``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, TruncationError

DEFAULT_TAIL_TOL = 1e-10
DEFAULT_MAX_DIM = 512
_START_DIM = 16

STATE_KINDS = ("vacuum", "fock", "coherent", "thermal", "squeezed_vacuum", "spats", "custom")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix ``<n|rho|n'>``.

    The array is copied and frozen on construction. ``tail_tol`` (optional)
    additionally asserts that the top Fock level carries negligible weight.
    """

    entries: np.ndarray
    tail_tol: Optional[float] = None

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex, copy=True)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] == 0:
            raise DomainError(f"density matrix must be square, got shape {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise DomainError("density matrix has non-finite entries")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm >= 1e-12:
            raise DomainError(f"density matrix not Hermitian (residual {herm:.3g})")
        tr = np.trace(rho).real
        if abs(tr - 1.0) >= 1e-10:
            raise DomainError(f"density matrix trace is {tr!r}, expected 1")
        lam = np.linalg.eigvalsh(rho)[0]
        if lam <= -1e-8:
            raise DomainError(f"density matrix not positive (smallest eigenvalue {lam:.3g})")
        if self.tail_tol is not None and rho.shape[0] > 1:
            top = rho[-1, -1].real
            if top >= self.tail_tol:
                raise TruncationError(
                    f"top Fock level holds {top:.3g} >= tail tolerance {self.tail_tol:.3g}"
                )
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.entries.diagonal().real

    @cached_property
    def digest(self) -> str:
        return hashlib.sha1(self.entries.tobytes()).hexdigest()

    def mean_photon_number(self) -> float:
        return float(np.dot(np.arange(self.dim), self.populations))

    def padded(self, dim: int) -> np.ndarray:
        """Entries embedded in a larger Fock space (zero beyond the cutoff)."""
        if dim < self.dim:
            raise ValueError("cannot pad to a smaller dimension")
        out = np.zeros((dim, dim), dtype=complex)
        out[: self.dim, : self.dim] = self.entries
        return out


@dataclass(frozen=True)
class StateSpec:
    """Recipe for a state.

    ``efficiency`` is the transmissivity of a loss channel applied after
    preparation (1 means lossless). ``cutoff`` fixes ``N_max``; when it is
    None the cutoff is chosen adaptively against ``tail_tol``.
    """

    kind: str
    n: int = 0
    beta: complex = 0j
    nbar: float = 0.0
    xi: complex = 0j
    matrix: Optional[np.ndarray] = field(default=None, compare=False)
    efficiency: float = 1.0
    cutoff: Optional[int] = None
    tail_tol: float = DEFAULT_TAIL_TOL
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        if self.kind not in STATE_KINDS:
            raise DomainError(f"unknown state kind {self.kind!r}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise DomainError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if self.kind == "fock" and (int(self.n) != self.n or self.n < 0):
            raise DomainError(f"Fock index must be a nonnegative integer, got {self.n}")
        if self.kind in ("thermal", "spats") and not (self.nbar >= 0 and math.isfinite(self.nbar)):
            raise DomainError(f"mean thermal photon number must be >= 0, got {self.nbar}")
        if self.kind == "spats" and self.nbar == 0:
            # a^dag |0><0| a is a pure single photon; allowed
            pass
        if not (np.isfinite(complex(self.beta)) and np.isfinite(complex(self.xi))):
            raise DomainError("complex amplitudes must be finite")
        if self.kind == "custom" and self.matrix is None:
            raise DomainError("custom state needs a matrix")
        if self.cutoff is not None and self.cutoff < 0:
            raise DomainError("cutoff must be nonnegative")


# ---------------------------------------------------------------------------
# Raw (cutoff-restricted, not renormalized) states. Entries are the exact
# infinite-dimensional values for indices below ``dim``.


def _coherent_amplitudes(beta: complex, dim: int) -> np.ndarray:
    c = np.empty(dim, dtype=complex)
    c[0] = math.exp(-abs(beta) ** 2 / 2)
    for n in range(1, dim):
        c[n] = c[n - 1] * beta / math.sqrt(n)
    return c


def _squeezed_amplitudes(xi: complex, dim: int) -> np.ndarray:
    r = abs(xi)
    theta = np.angle(xi)
    c = np.zeros(dim, dtype=complex)
    c[0] = 1.0 / math.sqrt(math.cosh(r))
    ratio = -np.exp(1j * theta) * math.tanh(r)
    for n in range(1, (dim + 1) // 2):
        # c_{2n} / c_{2n-2} = ratio * sqrt((2n)(2n-1)) / (2n)
        c[2 * n] = c[2 * n - 2] * ratio * math.sqrt((2 * n - 1) / (2 * n))
    return c


def _thermal_populations(nbar: float, dim: int) -> np.ndarray:
    x = nbar / (1.0 + nbar)
    return x ** np.arange(dim) / (1.0 + nbar)


def _spats_populations(nbar: float, dim: int) -> np.ndarray:
    # a^dag x^n a = n x^(n-1) |n><n|, normalised by (1 - x)^2
    x = nbar / (1.0 + nbar)
    n = np.arange(dim)
    p = np.zeros(dim)
    p[1:] = n[1:] * x ** (n[1:] - 1.0) * (1.0 - x) ** 2
    return p


def _raw_state(spec: StateSpec, dim: int) -> np.ndarray:
    kind = spec.kind
    if kind == "vacuum":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
    elif kind == "fock":
        rho = np.zeros((dim, dim), dtype=complex)
        if spec.n < dim:
            rho[spec.n, spec.n] = 1.0
    elif kind == "coherent":
        c = _coherent_amplitudes(complex(spec.beta), dim)
        rho = np.outer(c, c.conj())
    elif kind == "squeezed_vacuum":
        c = _squeezed_amplitudes(complex(spec.xi), dim)
        rho = np.outer(c, c.conj())
    elif kind == "thermal":
        rho = np.diag(_thermal_populations(spec.nbar, dim)).astype(complex)
    elif kind == "spats":
        rho = np.diag(_spats_populations(spec.nbar, dim)).astype(complex)
    else:
        raise DomainError(f"no raw builder for kind {kind!r}")
    if spec.efficiency < 1.0:
        rho = _loss_entries(rho, spec.efficiency)
    return rho


def build_state(spec: StateSpec) -> DensityMatrix:
    """Construct the density matrix described by ``spec``."""
    if spec.kind == "custom":
        rho = DensityMatrix(spec.matrix)
        return loss_channel(rho, spec.efficiency) if spec.efficiency < 1.0 else rho

    if spec.cutoff is not None:
        dim = spec.cutoff + 1
        if dim > spec.max_dim:
            raise TruncationError(f"cutoff {spec.cutoff} exceeds cap {spec.max_dim}")
        raw = _raw_state(spec, dim)
        tr = np.trace(raw).real
        if tr <= 0:
            raise TruncationError(f"cutoff {spec.cutoff} leaves no probability mass")
        return DensityMatrix(_hermitize(raw / tr), tail_tol=spec.tail_tol)

    dim = max(_START_DIM, spec.n + 2 if spec.kind == "fock" else 0)
    while True:
        dim = min(dim, spec.max_dim)
        raw = _raw_state(spec, dim)
        tr = np.trace(raw).real
        if 1.0 - tr < spec.tail_tol and raw[-1, -1].real < spec.tail_tol:
            return DensityMatrix(_hermitize(raw / tr), tail_tol=spec.tail_tol)
        if dim >= spec.max_dim:
            raise TruncationError(
                f"tail mass {1.0 - tr:.3g} still above {spec.tail_tol:.3g} at cap {spec.max_dim}"
            )
        dim = math.ceil(1.5 * dim)


def squeezed_vacuum_expm(xi: complex, dim: int) -> np.ndarray:
    """Squeezed vacuum from the matrix exponential of the squeeze generator.

    Computed in a doubled working space and cut back to ``dim`` so that the
    truncated generator does not spoil the retained amplitudes.
    """
    from scipy.linalg import expm

    work = 2 * dim + 20
    a = annihilation(work)
    gen = (np.conj(xi) * a @ a - xi * a.T @ a.T) / 2
    vec = expm(gen)[:, 0][:dim]
    return np.outer(vec, vec.conj())


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return (rho + rho.conj().T) / 2


# ---------------------------------------------------------------------------
# Displacement


def displacement_matrix(alpha: complex, dim: int) -> np.ndarray:
    """Matrix elements ``<m|D(alpha)|n>`` for ``m, n < dim``.

    Uses the associated-Laguerre closed form, evaluated along each
    off-diagonal band with the three-term Laguerre recurrence rescaled so
    that every iterate is itself a matrix element (magnitude <= 1). Entries
    are exact up to rounding; no truncated generator is exponentiated.
    """
    alpha = complex(alpha)
    x = abs(alpha) ** 2
    D = np.zeros((dim, dim), dtype=complex)
    if x == 0.0:
        np.fill_diagonal(D, 1.0)
        return D
    phase = alpha / abs(alpha)
    k = np.arange(dim, dtype=float)
    # band k holds f_n = <n+k|D|n> / phase^k for n = 0 .. dim-1-k
    log_f0 = 0.5 * k * math.log(x) - x / 2 - 0.5 * gammaln(k + 1)
    f_prev = np.exp(log_f0)
    f_cur = f_prev * (1 + k - x) / np.sqrt(k + 1)
    bands = np.zeros((dim, dim))  # bands[k, n]
    bands[:, 0] = f_prev
    if dim > 1:
        bands[:, 1] = f_cur
    for n in range(1, dim - 1):
        f_next = ((2 * n + 1 + k - x) * f_cur - np.sqrt(n * (n + k)) * f_prev) / np.sqrt(
            (n + 1) * (n + 1 + k)
        )
        bands[:, n + 1] = f_next
        f_prev, f_cur = f_cur, f_next
    for kk in range(dim):
        n = np.arange(dim - kk)
        band = bands[kk, : dim - kk]
        D[n + kk, n] = band * phase**kk
        if kk:
            D[n, n + kk] = band * (-np.conj(phase)) ** kk
    return D


def _displacement_work_dim(dim: int, alpha: complex) -> int:
    r = abs(alpha)
    return dim + math.ceil(4 * (r * r + r * math.sqrt(dim)))


def displaced_entries(
    rho: DensityMatrix, alpha: complex, tol: float = DEFAULT_TAIL_TOL, max_dim: int = DEFAULT_MAX_DIM
) -> np.ndarray:
    """Untrimmed ``D(-alpha) rho D(-alpha)^dag`` on an enlarged working space.

    The working dimension starts from the enlargement rule and grows by 1.5x
    until the lost trace is below ``tol``.
    """
    alpha = complex(alpha)
    if alpha == 0:
        return np.array(rho.entries)
    work = _displacement_work_dim(rho.dim, alpha)
    while True:
        if work > max_dim:
            raise TruncationError(
                f"displacement by {alpha} needs working dimension {work} > cap {max_dim}"
            )
        Dm = displacement_matrix(-alpha, work)[:, : rho.dim]
        out = Dm @ rho.entries @ Dm.conj().T
        lost = 1.0 - np.trace(out).real
        if lost < tol:
            return _hermitize(out)
        if work == max_dim:
            raise TruncationError(f"displacement loses trace {lost:.3g} at cap {max_dim}")
        work = min(math.ceil(1.5 * work), max_dim)


def displace(
    rho: DensityMatrix, alpha: complex, tol: float = DEFAULT_TAIL_TOL, max_dim: int = DEFAULT_MAX_DIM
) -> DensityMatrix:
    """Return ``rho(-alpha) = D(-alpha) rho D(-alpha)^dag``.

    The result keeps at least the input dimension; trailing levels of the
    working space whose combined weight is below 1e-15 are dropped.
    """
    alpha = complex(alpha)
    if alpha == 0:
        return rho
    out = displaced_entries(rho, alpha, tol=tol, max_dim=max_dim)
    pops = out.diagonal().real
    tail = np.cumsum(pops[::-1])[::-1]  # tail[i] = mass at levels >= i
    keep = int(np.argmax(tail < 1e-15)) if np.any(tail < 1e-15) else out.shape[0]
    keep = max(keep, rho.dim, 1)
    out = out[:keep, :keep]
    return DensityMatrix(_hermitize(out / np.trace(out).real))


# ---------------------------------------------------------------------------
# Loss


def _loss_entries(rho: np.ndarray, eta: float) -> np.ndarray:
    dim = rho.shape[0]
    if eta == 1.0:
        return rho.copy()
    out = np.zeros_like(rho)
    if eta == 0.0:
        out[0, 0] = np.trace(rho)
        return out
    n = np.arange(dim)
    log_eta, log_loss = math.log(eta), math.log1p(-eta)
    for k in range(dim):
        m = n[: dim - k]
        # sqrt(C(m+k, k)) * eta^(m/2) * (1-eta)^(k/2)
        logc = 0.5 * (gammaln(m + k + 1) - gammaln(m + 1) - gammaln(k + 1))
        w = np.exp(logc + 0.5 * m * log_eta + 0.5 * k * log_loss)
        out[: dim - k, : dim - k] += np.outer(w, w) * rho[k:, k:]
    return out


def loss_channel(rho: DensityMatrix, eta: float) -> DensityMatrix:
    """Pure-loss (beam splitter with vacuum) channel of transmissivity ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"transmissivity must lie in [0, 1], got {eta}")
    if eta == 1.0:
        return rho
    out = _loss_entries(np.asarray(rho.entries), eta)
    return DensityMatrix(_hermitize(out / np.trace(out).real))
