"""Command-line front end.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 insufficient
data.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as uio
from .errors import ConfigError, UHCMError
from .figures import FIGURES, ScanSpec, negative_runs, run_figure, run_scan, strictly_contains
from .fock import build_state
from .moments import moment_set, moment_via_displacement
from .plotting import plot_correlations, plot_scan
from .simulation import (
    ClassicalSignalModel,
    correlate,
    implied_displacement,
    read_shot_file,
    simulate_run,
    write_shot_file,
)
from .witness import bootstrap_witness

log = logging.getLogger("uhcm")


def _common(p: argparse.ArgumentParser, config_required=True):
    p.add_argument("--config", type=Path, required=config_required, help="JSON or TOML config")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the chain seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uhcm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("moments", help="displaced normally ordered moments, two routes")
    _common(p)
    p.add_argument("--alpha", action="append", default=None, help="displacement, e.g. 0.5 or 1+0.5j")
    p.add_argument("--max-order", type=int, default=4)

    p = sub.add_parser("scan", help="phase-space scan of both witnesses")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo correlation measurement")
    _common(p)
    p.add_argument("--orders", type=int, nargs="+", default=None)
    p.add_argument("--raw", type=Path, default=None, help="also write the shot matrix here")

    p = sub.add_parser("witness", help="bootstrap witnesses from simulated or recorded shots")
    _common(p)
    p.add_argument("--shots-file", type=Path, default=None, help="raw shot file instead of simulating")

    p = sub.add_parser("figures", help="reproduce a worked example")
    _common(p, config_required=False)
    p.add_argument("which", choices=sorted(FIGURES))
    p.add_argument("--points", type=int, default=None)
    return parser


def _signal_from_state(section: dict) -> ClassicalSignalModel:
    spec = uio.state_spec_from_config(section)
    eta = spec.efficiency
    if spec.kind == "coherent":
        return ClassicalSignalModel("coherent", sigma0=complex(spec.beta) * np.sqrt(eta))
    if spec.kind == "thermal":
        return ClassicalSignalModel("thermal", nbar=spec.nbar * eta)
    if spec.kind == "vacuum":
        return ClassicalSignalModel("coherent", sigma0=0j)
    raise ConfigError(
        f"state kind {spec.kind!r} has no nonnegative P function and cannot be simulated shot by shot"
    )


def _scan_spec(cfg: dict) -> ScanSpec:
    s, wit = cfg.get("scan", {}), cfg.get("witness", {})
    ks = s.get("k", wit.get("k", [1, 2]))
    ks = tuple(ks) if isinstance(ks, (list, tuple)) else (int(ks),)
    try:
        return ScanSpec(
            axis=s.get("axis", "real_axis"),
            range=tuple(float(v) for v in s.get("range", (-4.0, 4.0))),
            points=int(s.get("points", 401)),
            envelope_c=float(s.get("envelope_c", 0.0)),
            ks=tuple(int(k) for k in ks),
            w=float(s.get("w", wit.get("w", 1.0))),
            q=float(s.get("q", wit.get("q", 10.0))),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[scan]: {exc}") from exc


def _emit_table(args, stem, columns, rows, json_obj):
    if args.format == "json":
        return uio.write_json(args.out / f"{stem}.json", json_obj)
    return uio.write_csv(args.out / f"{stem}.csv", columns, rows)


def cmd_moments(args, cfg, manifest):
    rho = build_state(uio.state_spec_from_config(cfg.get("state", {})))
    alphas = [uio.parse_complex(a, "--alpha") for a in (args.alpha or ["0"])]
    rows, docs = [], []
    for a in alphas:
        ms = moment_set(rho, a, args.max_order)
        resid = [0.0] + [
            abs(ms.values[m] - moment_via_displacement(rho, a, m)) / max(1.0, abs(ms.values[m]))
            for m in range(1, args.max_order + 1)
        ]
        rows.extend(uio.moment_rows(ms, resid))
        doc = uio.moment_set_json(ms)
        doc["cross_path_residual"] = resid
        docs.append(doc)
        log.info("alpha=%s max cross-path residual %.2e", a, max(resid))
    manifest.outputs.append(
        _emit_table(args, "moments", uio.MOMENT_COLUMNS + ["cross_path_residual"], rows, docs)
    )


def _emit_scan(args, reports, spec, stem, title, manifest):
    rows, docs = [], []
    for k in spec.ks:
        rows.extend(uio.witness_rows(reports[k]))
        docs.append(uio.witness_json(reports[k]))
    manifest.outputs.append(_emit_table(args, stem, uio.WITNESS_COLUMNS, rows, docs))
    manifest.outputs.append(plot_scan(reports, args.out / f"{stem}.svg", spec.axis, title))


def cmd_scan(args, cfg, manifest):
    spec = _scan_spec(cfg)
    reports = run_scan(uio.state_spec_from_config(cfg.get("state", {})), spec, threads=args.threads)
    _emit_scan(args, reports, spec, "scan", None, manifest)


def cmd_simulate(args, cfg, manifest):
    chain_sec = cfg.get("chain", {})
    chain = uio.chain_from_config(chain_sec, seed=args.seed)
    manifest.seed = chain.seed
    signal = _signal_from_state(cfg.get("state", {}))
    orders = args.orders or chain_sec.get("orders") or list(range(1, chain.M // 2 + 1))
    currents = simulate_run(chain, signal, threads=args.threads)
    if args.raw is not None:
        write_shot_file(args.raw, currents)
        manifest.outputs.append(args.raw)
    records = correlate(chain, currents, orders)
    mu = moment_set(signal.density_matrix(), records[0].alpha, max(orders))
    analytic = {m: float(mu.values[m]) for m in orders}
    rows = list(uio.correlation_rows(records, analytic))
    docs = [uio.correlation_json(r, analytic[r.m]) for r in records]
    manifest.outputs.append(_emit_table(args, "correlations", uio.CORRELATION_COLUMNS, rows, docs))
    manifest.outputs.append(plot_correlations(rows, args.out / "correlations.svg"))


def cmd_witness(args, cfg, manifest):
    chain = uio.chain_from_config(cfg.get("chain", {}), seed=args.seed)
    manifest.seed = chain.seed
    wit = cfg.get("witness", {})
    k = wit.get("k", 1)
    k = int(k[0] if isinstance(k, (list, tuple)) else k)
    w, q = float(wit.get("w", 1.0)), float(wit.get("q", 10.0))
    if args.shots_file is not None:
        currents = read_shot_file(args.shots_file)
        manifest.inputs.append(args.shots_file)
    else:
        currents = simulate_run(chain, _signal_from_state(cfg.get("state", {})), threads=args.threads)
    report = bootstrap_witness(
        currents, k, w / chain.zeta_tilde, q,
        resamples=int(wit.get("resamples", 200)), seed=int(wit.get("seed", chain.seed)),
        alpha=implied_displacement(chain), zeta_tilde=chain.zeta_tilde,
    )
    manifest.outputs.append(
        _emit_table(args, "witness", uio.WITNESS_COLUMNS, uio.witness_rows(report), uio.witness_json(report))
    )


def cmd_figures(args, cfg, manifest):
    preset = FIGURES[args.which]
    reports = run_figure(args.which, threads=args.threads, points=args.points)
    spec = preset.scan
    _emit_scan(args, reports, spec, args.which, preset.title, manifest)
    for k, rep in sorted(reports.items()):
        log.info("k=%d  min P_env=%.4g  min F_env=%.4g", k, rep.P_env.min(), rep.F_env.min())
    if args.which == "fig3":
        ok = strictly_contains(negative_runs(reports[1].F_min), negative_runs(reports[1].P_trunc))
        log.info("F(1) negativity strictly contains P(1) negativity: %s", ok)


COMMANDS = {
    "moments": cmd_moments,
    "scan": cmd_scan,
    "simulate": cmd_simulate,
    "witness": cmd_witness,
    "figures": cmd_figures,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be unsigned")
        cfg = uio.load_config(args.config) if args.config is not None else {}
        args.out.mkdir(parents=True, exist_ok=True)
        manifest = uio.RunManifest(args.command, uio.config_hash(cfg), args.seed).start()
        if args.config is not None:
            manifest.inputs.append(args.config)
        COMMANDS[args.command](args, cfg, manifest)
        manifest.finish(args.out)
    except UHCMError as exc:
        print(f"uhcm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
