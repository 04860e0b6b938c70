"""Monte Carlo model of the unbalanced homodyne correlation setup.

The signal is mixed with a displaced dephased laser (DDL) on a highly
transmitting beam splitter, the output is split onto ``M`` linear detectors
and the ac parts of the amplified currents are correlated.

Only signals with a nonnegative Glauber-Sudarshan function are simulated
shot by shot: each shot draws a classical amplitude, a DDL phase and
conditionally Poissonian counts. This reproduces normally ordered
correlations exactly.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateChannel,
    DegenerateSplitter,
    DomainError,
    InsufficientChannels,
)
from .fock import DensityMatrix, StateSpec, build_state

BLOCK_SHOTS = 1 << 16

SHOT_MAGIC = b"UHCM"
SHOT_VERSION = 1
_SHOT_HEADER = struct.Struct("<4sIIQ")


@dataclass(frozen=True)
class OpticalChainConfig:
    """Physical parameters of the beam-splitter network and detectors.

    Per-detector sequences (``T_u``, ``eta_u``, ``g_u``, ``dark_mean``,
    ``dark_sd``) all have length ``M``. ``dark_correlated`` switches to a
    diagnostic mode where one dark-noise draw per shot is shared by all
    detectors.
    """

    T: complex
    R: complex
    T_D: complex
    R_D: complex
    beta_R: float
    beta_D: complex
    T_u: tuple
    eta_u: tuple
    g_u: tuple
    dark_mean: tuple = ()
    dark_sd: tuple = ()
    beta_R_jitter_sd: float = 0.0
    shots: int = 1_000_000
    seed: int = 0
    dark_correlated: bool = False
    check_balance: bool = field(default=True, compare=False)

    def __post_init__(self):
        M = len(self.T_u)
        for name in ("T_u", "eta_u", "g_u", "dark_mean", "dark_sd"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.dark_mean:
            object.__setattr__(self, "dark_mean", (0.0,) * M)
        if not self.dark_sd:
            object.__setattr__(self, "dark_sd", (0.0,) * M)
        if M < 2:
            raise ConfigError("need at least two detectors")
        for name in ("eta_u", "g_u", "dark_mean", "dark_sd"):
            if len(getattr(self, name)) != M:
                raise ConfigError(f"{name} must have one entry per detector ({M})")
        if abs(abs(self.T) ** 2 + abs(self.R) ** 2 - 1) > 1e-12:
            raise ConfigError("main beam splitter is not lossless: |T|^2 + |R|^2 != 1")
        if abs(abs(self.T_D) ** 2 + abs(self.R_D) ** 2 - 1) > 1e-12:
            raise ConfigError("DDL beam splitter is not lossless: |T_D|^2 + |R_D|^2 != 1")
        if sum(abs(t) ** 2 for t in self.T_u) > 1 + 1e-12:
            raise ConfigError("detector splitting transmits more than the input power")
        if not self.beta_R > 0:
            raise ConfigError("beta_R must be positive")
        if any(not 0 < e <= 1 for e in self.eta_u):
            raise ConfigError("detector efficiencies must lie in (0, 1]")
        if any(not g > 0 for g in self.g_u):
            raise ConfigError("gains must be positive")
        if any(s < 0 for s in self.dark_sd) or self.beta_R_jitter_sd < 0:
            raise ConfigError("noise standard deviations must be nonnegative")
        if self.shots < 1:
            raise ConfigError("shots must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")
        if self.check_balance:
            z = self.balance_products
            if np.max(np.abs(z - z[0])) > 1e-12 * max(1.0, z[0]):
                raise ConfigError("gains are not balanced: g_u eta_u |T_u|^2 differ between detectors")

    @property
    def M(self) -> int:
        return len(self.T_u)

    @property
    def balance_products(self) -> np.ndarray:
        return np.array([g * e * abs(t) ** 2 for g, e, t in zip(self.g_u, self.eta_u, self.T_u)])

    @property
    def zeta(self) -> float:
        """Common mean-current scale; detector 1 is the reference if unbalanced."""
        return float(self.balance_products[0])

    @property
    def zeta_tilde(self) -> float:
        return self.zeta * abs(self.T) * abs(self.R) * abs(self.R_D) * self.beta_R


def make_chain(
    alpha: complex,
    M: int = 4,
    beta_R: float = 1000.0,
    transmissivity: float = 0.9,
    ddl_reflectivity: float = 0.5,
    eta: Sequence[float] | float = 1.0,
    zeta: float = 1.0,
    **kwargs,
) -> OpticalChainConfig:
    """Equal-split chain whose DDL displaces the signal by ``alpha``.

    ``transmissivity`` and ``ddl_reflectivity`` are intensity coefficients
    of the main and DDL beam splitters; gains are balanced to ``zeta``.
    """
    T = math.sqrt(transmissivity)
    R = math.sqrt(1 - transmissivity)
    R_D = math.sqrt(ddl_reflectivity)
    T_D = math.sqrt(1 - ddl_reflectivity)
    if T_D == 0:
        raise DomainError("DDL splitter must transmit part of beta_D")
    beta_D = -complex(alpha) * T / (R * T_D) if R else 0j
    etas = (eta,) * M if np.isscalar(eta) else tuple(eta)
    T_u = (1 / math.sqrt(M),) * M
    g_u = tuple(zeta / (e * abs(t) ** 2) for e, t in zip(etas, T_u))
    return OpticalChainConfig(
        T=T, R=R, T_D=T_D, R_D=R_D, beta_R=beta_R, beta_D=beta_D,
        T_u=T_u, eta_u=etas, g_u=g_u, **kwargs,
    )


def implied_displacement(cfg: OpticalChainConfig) -> complex:
    """Displacement ``-R T_D beta_D / T`` imprinted on the signal by the DDL."""
    if cfg.T == 0:
        raise DegenerateSplitter("main beam splitter has zero transmittance")
    return -cfg.R * cfg.T_D * cfg.beta_D / cfg.T


def balance_gains(cfg: OpticalChainConfig, zeta: float) -> OpticalChainConfig:
    """Return ``cfg`` with ``g_u = zeta / (eta_u |T_u|^2)``."""
    if not zeta > 0:
        raise DomainError("zeta must be positive")
    den = [e * abs(t) ** 2 for e, t in zip(cfg.eta_u, cfg.T_u)]
    if any(d <= 0 for d in den):
        raise DegenerateChannel("a detector channel receives no light")
    return replace(cfg, g_u=tuple(zeta / d for d in den), check_balance=True)


@dataclass(frozen=True)
class ClassicalSignalModel:
    """Signal with a nonnegative P function, sampled as a complex amplitude.

    kinds: ``coherent`` (amplitude ``sigma0``), ``thermal`` (mean photon
    number ``nbar``), ``phase_diffused`` (modulus ``r``, uniform phase).
    """

    kind: str
    sigma0: complex = 0j
    nbar: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if self.kind not in ("coherent", "thermal", "phase_diffused"):
            raise DomainError(f"unknown classical signal {self.kind!r}")
        if self.nbar < 0 or self.r < 0:
            raise DomainError("signal parameters must be nonnegative")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "coherent":
            return np.full(n, complex(self.sigma0))
        if self.kind == "thermal":
            z = rng.standard_normal((2, n))
            return math.sqrt(self.nbar / 2) * (z[0] + 1j * z[1])
        return self.r * np.exp(1j * rng.uniform(0, 2 * math.pi, n))

    def density_matrix(self) -> DensityMatrix:
        """The same state in the Fock basis, for analytic comparison."""
        if self.kind == "coherent":
            return build_state(StateSpec("coherent", beta=self.sigma0))
        if self.kind == "thermal":
            return build_state(StateSpec("thermal", nbar=self.nbar))
        # Poisson populations, no coherences
        coh = build_state(StateSpec("coherent", beta=self.r))
        return DensityMatrix(np.diag(coh.populations).astype(complex))


@dataclass(frozen=True)
class CorrelationRecord:
    m: int
    alpha: complex
    gamma_hat: float
    std_error: float
    zeta_tilde: float
    shots_used: int

    def __post_init__(self):
        if self.std_error < 0:
            raise DomainError("std_error must be nonnegative")
        if not self.zeta_tilde > 0:
            raise DomainError("zeta_tilde must be positive")


# ---------------------------------------------------------------------------


def _block_streams(seed: int, block: int):
    light, dark = np.random.SeedSequence(seed, spawn_key=(block,)).spawn(2)
    return np.random.default_rng(light), np.random.default_rng(dark)


def _simulate_block(cfg: OpticalChainConfig, signal: ClassicalSignalModel, block: int, n: int) -> np.ndarray:
    light, dark = _block_streams(cfg.seed, block)
    sigma = signal.sample(light, n)
    phi = light.uniform(0.0, 2 * math.pi, n)
    beta_R = np.full(n, float(cfg.beta_R))
    if cfg.beta_R_jitter_sd > 0:
        beta_R = np.clip(beta_R + cfg.beta_R_jitter_sd * light.standard_normal(n), 0.0, None)
    a0 = cfg.T * sigma + cfg.R * (cfg.T_D * cfg.beta_D + cfg.R_D * beta_R * np.exp(1j * phi))
    intensity = np.abs(a0) ** 2
    rates = np.array([e * abs(t) ** 2 for e, t in zip(cfg.eta_u, cfg.T_u)])
    counts = light.poisson(intensity[:, None] * rates[None, :])
    currents = counts * np.asarray(cfg.g_u)[None, :]

    sd = np.asarray(cfg.dark_sd, dtype=float)
    mean = np.asarray(cfg.dark_mean, dtype=float)
    if np.any(sd > 0) or np.any(mean != 0):
        if cfg.dark_correlated:
            z = dark.standard_normal(n)[:, None]
        else:
            z = dark.standard_normal((n, cfg.M))
        currents = currents + mean[None, :] + sd[None, :] * z
    return currents


def simulate_run(cfg: OpticalChainConfig, signal: ClassicalSignalModel, threads: int = 1) -> np.ndarray:
    """Shot matrix ``c[j, u]`` of amplified detector currents, shape (N, M).

    Shots are processed in fixed blocks with RNG streams derived from
    ``(seed, block)``, so the output does not depend on ``threads``.
    """
    sizes = [BLOCK_SHOTS] * (cfg.shots // BLOCK_SHOTS)
    if cfg.shots % BLOCK_SHOTS:
        sizes.append(cfg.shots % BLOCK_SHOTS)
    jobs = list(enumerate(sizes))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda bn: _simulate_block(cfg, signal, *bn), jobs))
    else:
        parts = [_simulate_block(cfg, signal, b, n) for b, n in jobs]
    return np.concatenate(parts, axis=0)


def ac_products(currents: np.ndarray, max_m: int) -> np.ndarray:
    """Per-shot products of ac currents over channels ``0 .. 2m-1``.

    Row ``m - 1`` of the result holds the products for order ``m``.
    """
    currents = np.asarray(currents, dtype=float)
    ac = currents - currents.mean(axis=0)
    cum = np.cumprod(ac[:, : 2 * max_m], axis=1)
    return cum[:, 1::2].T


def estimate_gamma(
    currents: np.ndarray,
    m: int,
    alpha: complex = 0j,
    zeta_tilde: float = 1.0,
    channels: Optional[Sequence[int]] = None,
) -> CorrelationRecord:
    """Equal-time ac correlation of ``2m`` detectors.

    The ac part subtracts each channel's empirical mean over the run.
    ``channels`` selects the detectors (default: the first ``2m``).
    """
    currents = np.asarray(currents, dtype=float)
    if currents.ndim != 2:
        raise DomainError("currents must be a (shots, detectors) matrix")
    N, M = currents.shape
    if m < 1:
        raise DomainError("correlation order m must be >= 1")
    if channels is None:
        if M < 2 * m:
            raise InsufficientChannels(f"order m={m} needs {2 * m} detectors, have {M}")
        channels = range(2 * m)
    channels = list(channels)
    if len(channels) != 2 * m or len(set(channels)) != 2 * m:
        raise InsufficientChannels(f"order m={m} needs {2 * m} distinct detectors")
    if N < 2:
        raise InsufficientChannels("need at least two shots")
    sub = currents[:, channels]
    prod = np.prod(sub - sub.mean(axis=0), axis=1)
    return CorrelationRecord(
        m=m,
        alpha=complex(alpha),
        gamma_hat=float(prod.mean()),
        std_error=float(prod.std(ddof=1) / math.sqrt(N)),
        zeta_tilde=float(zeta_tilde),
        shots_used=N,
    )


def correlate(cfg: OpticalChainConfig, currents: np.ndarray, orders: Sequence[int]) -> list:
    """Records for several orders, tagged with the chain's alpha and zeta_tilde."""
    alpha = implied_displacement(cfg)
    return [estimate_gamma(currents, m, alpha, cfg.zeta_tilde) for m in orders]


def gamma_to_moment(rec: CorrelationRecord):
    """Invert the correlation-moment relation: ``(m, alpha, moment, std_error)``."""
    scale = math.comb(2 * rec.m, rec.m) * rec.zeta_tilde ** (2 * rec.m)
    return rec.m, rec.alpha, rec.gamma_hat / scale, rec.std_error / scale


@dataclass
class DarkNoiseReport:
    levels: list
    records: list
    differences: list = field(default_factory=list)  # (i, j, diff, combined_err)

    def max_z(self) -> float:
        return max((abs(d) / e if e > 0 else (0.0 if d == 0 else math.inf))
                   for _, _, d, e in self.differences)


def dark_noise_experiment(
    cfg: OpticalChainConfig,
    signal: ClassicalSignalModel,
    dark_levels: Sequence[float],
    m: int = 1,
    correlated: bool = False,
    threads: int = 1,
) -> DarkNoiseReport:
    """Estimate ``Gamma_m`` at several dark-noise standard deviations.

    All levels share the light-path random streams; only the dark-noise
    amplitude changes. Differences are reported against every other level
    with errors combined in quadrature.
    """
    levels = [float(x) for x in dark_levels]
    if len(levels) < 2 or 0.0 not in levels:
        raise DomainError("need at least two dark levels including zero")
    alpha = implied_displacement(cfg)
    records = []
    for level in levels:
        run_cfg = replace(cfg, dark_sd=(level,) * cfg.M, dark_correlated=correlated)
        currents = simulate_run(run_cfg, signal, threads=threads)
        records.append(estimate_gamma(currents, m, alpha, cfg.zeta_tilde))
    diffs = []
    for i in range(len(levels)):
        for j in range(i + 1, len(levels)):
            a, b = records[i], records[j]
            diffs.append((i, j, b.gamma_hat - a.gamma_hat, math.hypot(a.std_error, b.std_error)))
    return DarkNoiseReport(levels, records, diffs)


def beta_r_sweep(
    cfg: OpticalChainConfig, signal: ClassicalSignalModel, betas: Sequence[float], m: int = 1
) -> list:
    """Moment estimates versus DDL strength, for finite-beta_R characterization."""
    out = []
    for b in betas:
        c = replace(cfg, beta_R=float(b), beta_D=cfg.beta_D)
        rec = estimate_gamma(simulate_run(c, signal), m, implied_displacement(c), c.zeta_tilde)
        out.append((float(b),) + gamma_to_moment(rec)[2:])
    return out


# ---------------------------------------------------------------------------
# Raw shot files: header (magic, version u32, M u32, N u64), then rows of
# little-endian float64, one row per shot.


def write_shot_file(path, currents: np.ndarray) -> None:
    currents = np.ascontiguousarray(currents, dtype="<f8")
    N, M = currents.shape
    with open(path, "wb") as fh:
        fh.write(_SHOT_HEADER.pack(SHOT_MAGIC, SHOT_VERSION, M, N))
        fh.write(currents.tobytes())


def read_shot_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_SHOT_HEADER.size)
        if len(head) < _SHOT_HEADER.size:
            raise ConfigError("shot file too short for header")
        magic, version, M, N = _SHOT_HEADER.unpack(head)
        if magic != SHOT_MAGIC:
            raise ConfigError(f"bad shot-file magic {magic!r}")
        if version != SHOT_VERSION:
            raise ConfigError(f"unsupported shot-file version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != M * N:
        raise ConfigError(f"shot file holds {data.size} values, header promises {M * N}")
    return data.reshape(N, M).astype(float)
