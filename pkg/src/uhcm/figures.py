"""Preset scans for the two worked examples and sign-pattern helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fock import StateSpec, build_state
from .witness import scan


@dataclass(frozen=True)
class ScanSpec:
    """Displacement grid and witness parameters for a phase-space scan.

    ``axis`` is ``real_axis``, ``imag_axis`` or ``grid2d`` (square grid of
    ``points`` x ``points`` over ``range`` on both axes). For real squeezing
    parameters the real axis is the squeezed quadrature.
    """

    axis: str = "real_axis"
    range: tuple = (-4.0, 4.0)
    points: int = 401
    envelope_c: float = 0.0
    ks: tuple = (1, 2)
    w: float = 1.0
    q: float = 10.0

    def __post_init__(self):
        if self.axis not in ("real_axis", "imag_axis", "grid2d"):
            raise ConfigError(f"unknown scan axis {self.axis!r}")
        lo, hi = self.range
        if not lo < hi:
            raise ConfigError("scan range must satisfy min < max")
        if self.points < 2:
            raise ConfigError("scan needs at least two points")
        if self.envelope_c < 0:
            raise ConfigError("envelope constant must be >= 0")
        if not self.ks or any(k < 1 for k in self.ks):
            raise ConfigError("k list must hold integers >= 1")

    def alphas(self) -> np.ndarray:
        x = np.linspace(self.range[0], self.range[1], self.points)
        if self.axis == "real_axis":
            return x.astype(complex)
        if self.axis == "imag_axis":
            return 1j * x
        re, im = np.meshgrid(x, x)
        return (re + 1j * im).ravel()


@dataclass(frozen=True)
class FigurePreset:
    state: StateSpec
    scan: ScanSpec
    title: str
    notes: dict = field(default_factory=dict)


FIGURES = {
    "fig3": FigurePreset(
        StateSpec("squeezed_vacuum", xi=0.03),
        ScanSpec(range=(-4.0, 4.0), points=401, envelope_c=1.0, ks=(1, 2), w=1.5, q=10.0),
        r"squeezed vacuum, $\xi=0.03$, $q=10$, $w=1.5$",
    ),
    "fig4": FigurePreset(
        StateSpec("spats", nbar=0.8, efficiency=0.5),
        ScanSpec(range=(-3.0, 3.0), points=401, envelope_c=1.4, ks=(1, 2), w=1.3, q=10.0),
        r"SPATS, $\bar n=0.8$, $\eta=0.5$, $q=10$, $w=1.3$",
    ),
}


def run_scan(state: StateSpec, spec: ScanSpec, threads: int = 1) -> dict:
    rho = build_state(state)
    return scan(rho, spec.alphas(), spec.ks, spec.w, spec.q, spec.envelope_c, threads=threads)


def run_figure(which: str, threads: int = 1, points: int | None = None) -> dict:
    try:
        preset = FIGURES[which]
    except KeyError:
        raise ConfigError(f"unknown figure {which!r}; choose from {sorted(FIGURES)}") from None
    spec = preset.scan
    if points is not None:
        spec = ScanSpec(spec.axis, spec.range, points, spec.envelope_c, spec.ks, spec.w, spec.q)
    return run_scan(preset.state, spec, threads=threads)


def negative_runs(values, threshold: float = 0.0) -> list:
    """Index ranges ``(start, stop)`` of maximal runs with ``values < threshold``."""
    neg = np.asarray(values) < threshold
    runs, start = [], None
    for i, flag in enumerate(neg):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, neg.size))
    return runs


def strictly_contains(outer: list, inner: list) -> bool:
    """Every inner run sits inside some outer run that is strictly longer."""
    if not inner:
        return False
    for a, b in inner:
        hosts = [(c, d) for c, d in outer if c <= a and b <= d]
        if not hosts or not any((d - c) > (b - a) for c, d in hosts):
            return False
    return True
