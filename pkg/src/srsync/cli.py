"""Command-line interface.

    sync steady   --scenario <tag> --w <val> --delta <val> [--xi] [--n] [--n-gamma <Hz>]
    sync spectrum --scenario <tag> --w <val> --delta <val> [...] [--out csv]
    sync sweep    --config <file> --out <csv> [--resume] [--jobs <k>]
    sync figure   --id <figure_id> --out <csv> [--scenario <tag>] [--n <int>]
    sync validate --n-small <k> [--scenarios a,b,...] [--out <csv>]

Rates on the command line are in units of the collective rate N*gamma;
--n-gamma pins that rate in Hz (default 1, i.e. dimensionless output).
Exit codes: 0 success, 1 usage error, 2 solver failure, 3 validation failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__, harness, meanfield, spectral
from .meanfield import IntegrationError, SteadyStateError
from .model import ModelParams, ParameterError, ScenarioKind

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_VALIDATION = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; remap onto the documented code
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sync", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sync {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_point_args(sp):
        sp.add_argument("--scenario", required=True, help="bi-quantum | uni-quantum | "
                        "uni-classical | bi-classical")
        sp.add_argument("--w", type=float, required=True, help="pump rate (units of N*gamma)")
        sp.add_argument("--delta", type=float, required=True, help="detuning (units of N*gamma)")
        sp.add_argument("--xi", type=float, default=0.0, help="feedback strength (bi-classical)")
        sp.add_argument("--n", type=int, default=10000, help="atoms per ensemble")
        sp.add_argument("--n-gamma", type=float, default=1.0, help="collective rate in Hz")

    sp = sub.add_parser("steady", help="steady state, stability, and flux at one point")
    add_point_args(sp)

    sp = sub.add_parser("spectrum", help="normalized emission spectrum at one point")
    add_point_args(sp)
    sp.add_argument("--omega-min", type=float, default=None)
    sp.add_argument("--omega-max", type=float, default=None)
    sp.add_argument("--points", type=int, default=2001)
    sp.add_argument("--out", default=None, help="write CSV instead of printing")

    sp = sub.add_parser("sweep", help="grid sweep from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--resume", action="store_true",
                    help="leave a completed output file untouched")
    sp.add_argument("--jobs", type=int, default=None, help="override parallelism")

    sp = sub.add_parser("figure", help="emit the data behind one figure")
    sp.add_argument("--id", required=True, dest="figure_id")
    sp.add_argument("--out", required=True)
    sp.add_argument("--scenario", default=None)
    sp.add_argument("--n", type=int, default=10000)
    sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("validate", help="cumulant solver vs the exact oracle")
    sp.add_argument("--n-small", type=int, required=True)
    sp.add_argument("--scenarios", default=None, help="comma list; default all four")
    sp.add_argument("--out", default=None)
    return parser


def _point_params(args) -> tuple[ScenarioKind, ModelParams]:
    scenario = ScenarioKind.parse(args.scenario)
    rate = args.n_gamma
    p = ModelParams.for_scenario(scenario, n_atoms=args.n, pump=args.w * rate,
                                 detuning=args.delta * rate, collective_rate=rate,
                                 feedback_strength=args.xi)
    return scenario, p


def _cmd_steady(args) -> int:
    scenario, p = _point_params(args)
    result = meanfield.steady_state(scenario, p)
    s = result.state
    print(f"scenario = {scenario.value}")
    print(f"z_a = {s.z_a:.12g}")
    print(f"z_b = {s.z_b:.12g}")
    print(f"aa = {s.aa.real:.12g}{s.aa.imag:+.12g}j")
    print(f"bb = {s.bb.real:.12g}{s.bb.imag:+.12g}j")
    print(f"ab = {s.ab.real:.12g}{s.ab.imag:+.12g}j")
    print(f"stable = {result.stable}")
    print(f"residual_norm = {result.residual_norm:.3e}")
    print(f"seeds_tried = {result.seeds_tried}")
    print(f"stable_roots = {result.stable_roots}")
    eigs = ", ".join(f"{e.real:.6g}{e.imag:+.6g}j" for e in result.jacobian_eigenvalues)
    print(f"jacobian_eigenvalues = [{eigs}]")
    print(f"photon_flux = {spectral.photon_flux(scenario, result, p):.12g}")
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    scenario, p = _point_params(args)
    steady = meanfield.steady_state(scenario, p)
    rs = spectral.regression_system(scenario, steady, p)
    rate = p.collective_rate
    try:
        comps = spectral.components(rs)
        lo = args.omega_min * rate if args.omega_min is not None else \
            min(c.center - 20 * c.half_width for c in comps) - 0.1 * rate
        hi = args.omega_max * rate if args.omega_max is not None else \
            max(c.center + 20 * c.half_width for c in comps) + 0.1 * rate
        grid = np.linspace(lo, hi, args.points)
        values, norm = spectral.spectrum(comps, grid)
        meta = [("kind", "spectrum"), ("scenario", scenario.value),
                ("normalization_flux", f"{norm:.12g}"), ("method", "lorentzian")]
        for i, c in enumerate(comps):
            meta.append((f"component_{i}",
                         f"center={c.center:.12g} half_width={c.half_width:.12g} "
                         f"weight={c.weight.real:.12g}{c.weight.imag:+.12g}j"))
    except spectral.DefectiveMatrixError:
        grid, values = spectral.fft_spectrum(rs, tau_max=4000.0 / rate, n_tau=1 << 15)
        meta = [("kind", "spectrum"), ("scenario", scenario.value), ("method", "fft")]
    table = harness.Table(("omega", "s_norm"),
                          tuple((float(o), float(v)) for o, v in zip(grid, values)),
                          tuple(meta))
    if args.out:
        harness.write_csv(table, args.out)
        print(f"wrote {args.out}")
    else:
        for key, value in table.metadata:
            print(f"# {key} = {value}")
        print(",".join(table.header))
        for row in table.rows:
            print(f"{row[0]:.12g},{row[1]:.12g}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    with open(args.config) as fh:
        spec = harness.sweep_from_config(fh.read())
    if args.jobs is not None:
        from dataclasses import replace
        spec = replace(spec, parallelism=args.jobs)
    if args.resume and harness.resume_sweep(spec, args.out):
        print(f"{args.out} is complete; nothing to do")
        return EXIT_OK
    table = harness.run_sweep(spec)
    harness.write_csv(table, args.out)
    failed = sum(1 for row in table.rows if row[-1])
    print(f"wrote {args.out} ({len(table.rows)} rows, {failed} failed points)")
    return EXIT_OK


def _cmd_figure(args) -> int:
    job = harness.FigureJob(
        figure_id=harness.FigureId.parse(args.figure_id),
        scenario=ScenarioKind.parse(args.scenario) if args.scenario else None,
        n_atoms=args.n, parallelism=args.jobs)
    table = harness.run_figure(job)
    harness.write_csv(table, args.out)
    print(f"wrote {args.out} ({len(table.rows)} rows)")
    return EXIT_OK


def _cmd_validate(args) -> int:
    scenarios = tuple(ScenarioKind)
    if args.scenarios:
        scenarios = tuple(ScenarioKind.parse(tag) for tag in args.scenarios.split(","))
    report = harness.validate(args.n_small, scenarios)
    table = report.table()
    if args.out:
        harness.write_csv(table, args.out)
    width = max(len(r[3]) for r in table.rows)
    for row in table.rows:
        print(f"{row[0]:<14} w={row[1]:<5g} delta={row[2]:<5g} {row[3]:<{width}} "
              f"exact={row[4]:+.4f}{row[5]:+.4f}j cumulant={row[6]:+.4f}{row[7]:+.4f}j "
              f"dev={row[8]:.4f} tol={row[9]:.4f} {row[10]}")
    n_fail = sum(1 for e in report.entries if not e.passed)
    print(f"validation: {len(report.entries) - n_fail}/{len(report.entries)} checks passed")
    return EXIT_OK if report.ok else EXIT_VALIDATION


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "steady":
            return _cmd_steady(args)
        if args.command == "spectrum":
            return _cmd_spectrum(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "figure":
            return _cmd_figure(args)
        return _cmd_validate(args)
    except (ParameterError, FileNotFoundError, _UsageError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SteadyStateError, IntegrationError, harness.SweepError,
            spectral.DefectiveMatrixError, spectral.FluxConsistencyError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
