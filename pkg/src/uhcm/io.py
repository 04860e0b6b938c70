"""Config ingestion, CSV/JSON emission and run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from . import __version__
from .errors import ConfigError, UHCMError
from .fock import StateSpec
from .simulation import CorrelationRecord, OpticalChainConfig, balance_gains, gamma_to_moment, make_chain

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SECTIONS = ("state", "chain", "scan", "witness")
STATE_KEYS = {"kind", "n", "beta", "nbar", "xi", "matrix", "matrix_imag", "efficiency",
              "cutoff", "tail_tol", "max_dim"}
CHAIN_KEYS = {"alpha", "M", "beta_R", "transmissivity", "ddl_reflectivity", "eta", "zeta",
              "T", "R", "T_D", "R_D", "beta_D", "T_u", "eta_u", "g_u",
              "dark_mean", "dark_sd", "beta_R_jitter_sd", "shots", "seed", "dark_correlated", "orders"}
SCAN_KEYS = {"axis", "range", "points", "envelope_c", "k", "w", "q"}
WITNESS_KEYS = {"k", "w", "q", "resamples", "seed"}

MOMENT_COLUMNS = ["alpha_re", "alpha_im", "order_or_n", "value", "std_error"]
WITNESS_COLUMNS = ["alpha_re", "alpha_im", "k", "w", "q", "P_trunc", "F_min",
                   "envelope", "P_env", "F_env", "ci_low", "ci_high"]
CORRELATION_COLUMNS = ["m", "alpha_re", "alpha_im", "gamma_hat", "std_error", "zeta_tilde",
                       "shots_used", "moment_estimate", "moment_std_error", "analytic_moment"]


# ---------------------------------------------------------------------------
# Config


def parse_complex(value, name="value") -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigError(f"{name}: cannot read {value!r} as a complex number")


def load_config(path) -> dict:
    """Read a JSON or TOML config; unknown sections or keys are errors."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(text.decode())
        else:
            data = json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a table/object at top level")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for name, allowed in zip(SECTIONS, (STATE_KEYS, CHAIN_KEYS, SCAN_KEYS, WITNESS_KEYS)):
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section [{name}] must be a table")
        bad = set(section) - allowed
        if bad:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
    return data


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def state_spec_from_config(section: dict) -> StateSpec:
    if "kind" not in section:
        raise ConfigError("[state] needs a 'kind'")
    kw: dict[str, Any] = {"kind": section["kind"]}
    try:
        for key in ("n", "cutoff", "max_dim"):
            if key in section:
                kw[key] = int(section[key])
        for key in ("nbar", "efficiency", "tail_tol"):
            if key in section:
                kw[key] = float(section[key])
        for key in ("beta", "xi"):
            if key in section:
                kw[key] = parse_complex(section[key], key)
        if "matrix" in section:
            mat = np.array(section["matrix"], dtype=float)
            if "matrix_imag" in section:
                mat = mat + 1j * np.array(section["matrix_imag"], dtype=float)
            kw["matrix"] = mat
        return StateSpec(**kw)
    except UHCMError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[state]: {exc}") from exc


def _per_detector(value, M, name):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        if len(value) != M:
            raise ConfigError(f"[chain] {name} needs {M} entries")
        return tuple(value)
    return (value,) * M


def chain_from_config(section: dict, seed: Optional[int] = None) -> OpticalChainConfig:
    """Build the optical chain.

    Either give the splitter amplitudes explicitly (``T``, ``R``, ``T_D``,
    ``R_D``, ``beta_D``, ``T_u``) or give ``alpha`` and let an equal-split
    chain be derived. Gains default to balanced values for ``zeta``.
    """
    s = dict(section)
    s.pop("orders", None)
    extra = {}
    for key in ("beta_R_jitter_sd",):
        if key in s:
            extra[key] = float(s.pop(key))
    for key in ("shots", "seed"):
        if key in s:
            extra[key] = int(s.pop(key))
    if "dark_correlated" in s:
        extra["dark_correlated"] = bool(s.pop("dark_correlated"))
    if seed is not None:
        extra["seed"] = int(seed)
    dark_mean = s.pop("dark_mean", None)
    dark_sd = s.pop("dark_sd", None)
    zeta = float(s.pop("zeta", 1.0))
    try:
        if "T" in s:
            M = len(s.get("T_u", ()))
            if M == 0:
                raise ConfigError("[chain] explicit form needs T_u")
            eta = _per_detector(s.pop("eta_u", s.pop("eta", 1.0)), M, "eta_u")
            g_u = s.pop("g_u", None)
            cfg = OpticalChainConfig(
                T=parse_complex(s.pop("T"), "T"), R=parse_complex(s.pop("R"), "R"),
                T_D=parse_complex(s.pop("T_D"), "T_D"), R_D=parse_complex(s.pop("R_D"), "R_D"),
                beta_R=float(s.pop("beta_R")), beta_D=parse_complex(s.pop("beta_D", 0), "beta_D"),
                T_u=tuple(parse_complex(t, "T_u") for t in s.pop("T_u")), eta_u=eta,
                g_u=tuple(g_u) if g_u is not None else (1.0,) * M,
                dark_mean=_per_detector(dark_mean, M, "dark_mean") or (),
                dark_sd=_per_detector(dark_sd, M, "dark_sd") or (),
                check_balance=g_u is not None, **extra,
            )
            if g_u is None:
                cfg = balance_gains(cfg, zeta)
            if s:
                raise ConfigError(f"[chain] keys not used by the explicit form: {sorted(s)}")
        else:
            M = int(s.pop("M", 4))
            for key in ("eta_u", "g_u", "T_u", "R", "T_D", "R_D", "beta_D"):
                if key in s:
                    raise ConfigError(f"[chain] {key} requires the explicit form (give T)")
            cfg = make_chain(
                parse_complex(s.pop("alpha", 0), "alpha"), M=M,
                beta_R=float(s.pop("beta_R", 1000.0)),
                transmissivity=float(s.pop("transmissivity", 0.9)),
                ddl_reflectivity=float(s.pop("ddl_reflectivity", 0.5)),
                eta=s.pop("eta", 1.0), zeta=zeta,
                dark_mean=_per_detector(dark_mean, M, "dark_mean") or (),
                dark_sd=_per_detector(dark_sd, M, "dark_sd") or (),
                **extra,
            )
            if s:
                raise ConfigError(f"[chain] unexpected keys: {sorted(s)}")
    except KeyError as exc:
        raise ConfigError(f"[chain] missing key {exc}") from exc
    except UHCMError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# Tabular output


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def write_csv(path, columns: list, rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
    return path


def moment_rows(mset, residuals=None):
    for m, v in enumerate(mset.values):
        err = None if mset.std_errors is None else mset.std_errors[m]
        row = [mset.alpha.real, mset.alpha.imag, m, v, err]
        if residuals is not None:
            row.append(residuals[m])
        yield row


def moment_set_json(mset) -> dict:
    return {
        "alpha": [mset.alpha.real, mset.alpha.imag],
        "max_order": mset.max_order,
        "source": mset.source,
        "values": [float(v) for v in mset.values],
        "std_errors": None if mset.std_errors is None else [float(v) for v in mset.std_errors],
    }


def photocount_rows(dist):
    for n, p in enumerate(dist.probs):
        yield [dist.alpha.real, dist.alpha.imag, n, p, None]


def photocount_json(dist) -> dict:
    return {
        "alpha": [dist.alpha.real, dist.alpha.imag],
        "eta": dist.eta,
        "probs": [float(p) for p in dist.probs],
        "truncation_order": dist.truncation_order,
        "tail_mass": dist.tail_mass,
    }


def witness_rows(report):
    """Rows in :data:`WITNESS_COLUMNS` order; the interval columns refer to F_min."""
    for i, a in enumerate(report.alpha):
        lo = hi = None
        if report.F_ci is not None:
            lo, hi = report.F_ci[i]
        yield [a.real, a.imag, report.k, report.w, report.q, report.P_trunc[i], report.F_min[i],
               report.envelope[i], report.P_env[i], report.F_env[i], lo, hi]


def witness_json(report) -> dict:
    def arr(x):
        return None if x is None else np.asarray(x, dtype=float).tolist()

    return {
        "k": report.k, "w": report.w, "q": report.q, "envelope_c": report.envelope_c,
        "alpha": [[a.real, a.imag] for a in report.alpha],
        "P_trunc": arr(report.P_trunc), "F_min": arr(report.F_min),
        "h_opt": arr(report.h_opt), "envelope": arr(report.envelope),
        "P_env": arr(report.P_env), "F_env": arr(report.F_env),
        "P_ci": arr(report.P_ci), "F_ci": arr(report.F_ci),
        "P_z": arr(report.P_z), "F_z": arr(report.F_z),
    }


def correlation_rows(records: Iterable[CorrelationRecord], analytic=None):
    for rec in records:
        _, _, mom, err = gamma_to_moment(rec)
        ref = None if analytic is None else analytic.get(rec.m)
        yield [rec.m, rec.alpha.real, rec.alpha.imag, rec.gamma_hat, rec.std_error,
               rec.zeta_tilde, rec.shots_used, mom, err, ref]


def correlation_json(rec: CorrelationRecord, analytic=None) -> dict:
    _, _, mom, err = gamma_to_moment(rec)
    return {
        "m": rec.m, "alpha": [rec.alpha.real, rec.alpha.imag], "gamma_hat": rec.gamma_hat,
        "std_error": rec.std_error, "zeta_tilde": rec.zeta_tilde, "shots_used": rec.shots_used,
        "moment_estimate": mom, "moment_std_error": err, "analytic_moment": analytic,
    }


# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: Optional[int]
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    started: str = ""
    finished: str = ""
    version: str = __version__

    def start(self):
        self.started = _now()
        return self

    def finish(self, out_dir) -> Path:
        self.finished = _now()
        return write_json(Path(out_dir) / "manifest.json", {
            "command": self.command, "config_hash": self.config_hash, "seed": self.seed,
            "tool_version": self.version, "started": self.started, "finished": self.finished,
            "inputs": [str(p) for p in self.inputs], "outputs": [str(p) for p in self.outputs],
        })


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
