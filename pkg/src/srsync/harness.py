"""Batch layer: parameter sweeps for phase diagrams, figure-data production,
cumulant-vs-exact validation, and CSV persistence.

Each grid point is a pure computation, so sweeps parallelize with a process
pool and merge in deterministic grid order; per-point failures are recorded
in the row instead of aborting the sweep (phase-diagram edges contain
genuinely hard root-finding points).  CSV files carry a '#'-prefixed
metadata block and 12-significant-digit, locale-independent numbers, so a
rerun with any parallelism is byte-identical.
"""
from __future__ import annotations

import concurrent.futures
import enum
import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import __version__, closedform, exactsim, meanfield, spectral
from .model import (ModelParams, ParameterError, ScenarioKind,
                    parse_config_text, params_from_config, scenario_from_config)

_VALID_OUTPUTS = ("z", "aa", "bb", "re_ab", "flux", "linewidths", "pole_distance")


class SweepError(RuntimeError):
    """Every point of a sweep failed."""


@dataclass(frozen=True)
class SweepSpec:
    """A (pump, detuning) grid in units of the collective rate."""

    scenario: ScenarioKind
    w_grid: tuple[float, ...]
    delta_grid: tuple[float, ...]
    n_atoms: int = 10000
    collective_rate: float = 1.0
    xi: float = 0.0
    outputs: tuple[str, ...] = ("z", "aa", "re_ab")
    parallelism: int = 1

    def __post_init__(self) -> None:
        for name, grid in (("w_grid", self.w_grid), ("delta_grid", self.delta_grid)):
            if len(grid) == 0:
                raise ParameterError(f"{name} must be nonempty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ParameterError(f"{name} must be strictly increasing")
        unknown = set(self.outputs) - set(_VALID_OUTPUTS)
        if unknown:
            raise ParameterError(f"unknown outputs {sorted(unknown)}")
        if "pole_distance" in self.outputs and not self.scenario.symmetric:
            raise ParameterError("pole_distance is only defined for symmetric scenarios")
        if self.parallelism < 1:
            raise ParameterError("parallelism must be >= 1")


def _grid_from_text(raw: str) -> tuple[float, ...]:
    """Parse 'start:stop:count' (inclusive linspace) or a comma list."""
    text = raw.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParameterError(f"grid spec {raw!r} must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        return tuple(float(v) for v in np.linspace(start, stop, count))
    return tuple(float(v) for v in text.split(","))


def sweep_from_config(text: str) -> SweepSpec:
    entries = parse_config_text(text)
    scenario = scenario_from_config(entries)
    params = params_from_config(entries)
    if "w_grid" not in entries or "delta_grid" not in entries:
        raise ParameterError("sweep config needs w_grid and delta_grid")
    outputs = tuple(s.strip() for s in entries.get("outputs", "z, aa, re_ab").split(","))
    return SweepSpec(
        scenario=scenario,
        w_grid=_grid_from_text(entries["w_grid"]),
        delta_grid=_grid_from_text(entries["delta_grid"]),
        n_atoms=params.n_atoms,
        collective_rate=params.collective_rate,
        xi=params.feedback_strength,
        outputs=outputs,
        parallelism=int(entries.get("parallelism", "1")),
    )


@dataclass(frozen=True)
class Table:
    header: tuple[str, ...]
    rows: tuple[tuple, ...]
    metadata: tuple[tuple[str, str], ...]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.12g}"


def write_csv(table: Table, path: str) -> None:
    lines = [f"# {key} = {value}" for key, value in table.metadata]
    lines.append(",".join(table.header))
    for row in table.rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _sweep_columns(spec: SweepSpec) -> list[str]:
    cols = ["w", "delta"]
    sym = spec.scenario.symmetric
    for out in spec.outputs:
        if out == "z":
            cols += ["z"] if sym else ["z_a", "z_b"]
        elif out == "aa":
            cols += ["aa"]
        elif out == "bb":
            cols += ["bb"]
        elif out == "re_ab":
            cols += ["re_ab"]
        elif out == "flux":
            cols += ["flux"]
        elif out == "linewidths":
            cols += ["lw_narrow", "lw_broad"] if sym else ["lw_master", "lw_slave"]
        elif out == "pole_distance":
            cols += ["pole_distance"]
    cols.append("error")
    return cols


def _sweep_point(args) -> tuple[int, list]:
    spec, index, w, delta = args
    p = ModelParams.for_scenario(spec.scenario, n_atoms=spec.n_atoms, pump=w * spec.collective_rate,
                                 detuning=delta * spec.collective_rate,
                                 collective_rate=spec.collective_rate,
                                 feedback_strength=spec.xi)
    values: list = [w, delta]
    try:
        steady = meanfield.steady_state(spec.scenario, p)
        s = steady.state
        comps = None
        for out in spec.outputs:
            if out == "z":
                values += [s.z_a] if spec.scenario.symmetric else [s.z_a, s.z_b]
            elif out == "aa":
                values.append(s.aa.real)
            elif out == "bb":
                values.append(s.bb.real)
            elif out == "re_ab":
                values.append(s.ab.real)
            elif out == "flux":
                values.append(spectral.photon_flux(spec.scenario, steady, p))
            elif out in ("linewidths", "pole_distance"):
                if comps is None:
                    try:
                        comps = spectral.components(
                            spectral.regression_system(spec.scenario, steady, p))
                    except spectral.DefectiveMatrixError:
                        comps = "defective"
                if out == "pole_distance":
                    if comps == "defective":
                        poles = spectral.pole_pair(spec.scenario, steady, p)
                        values.append(abs(poles[0].imag - poles[1].imag))
                    else:
                        values.append(spectral.peak_separation(comps))
                else:
                    if comps == "defective":
                        poles = spectral.pole_pair(spec.scenario, steady, p)
                        widths = sorted(-2.0 * pole.real for pole in poles)
                    elif spec.scenario.symmetric:
                        widths = sorted(2.0 * c.half_width for c in comps)
                    else:
                        # master at the carrier, slave at -delta
                        ordered = sorted(comps, key=lambda c: abs(c.center))
                        widths = [2.0 * c.half_width for c in ordered]
                    values += widths[:2]
        values.append("")
        return index, values
    except Exception as exc:  # per-point failure isolation
        cols = _sweep_columns(spec)
        values = [w, delta] + [None] * (len(cols) - 3)
        values.append(f"{type(exc).__name__}: {exc}")
        return index, values


def _config_digest(spec: SweepSpec) -> str:
    text = repr((spec.scenario.value, spec.w_grid, spec.delta_grid, spec.n_atoms,
                 spec.collective_rate, spec.xi, spec.outputs))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _sweep_metadata(spec: SweepSpec) -> tuple[tuple[str, str], ...]:
    return (
        ("toolkit_version", __version__),
        ("scenario", spec.scenario.value),
        ("n_atoms", str(spec.n_atoms)),
        ("collective_rate", _fmt(spec.collective_rate)),
        ("feedback_strength", _fmt(spec.xi)),
        ("grid", f"{len(spec.w_grid)}x{len(spec.delta_grid)}"),
        ("units", "rates in collective_rate units"),
        ("seed_policy", "deterministic multi-seed newton, grid order"),
        ("config_digest", _config_digest(spec)),
    )


def run_sweep(spec: SweepSpec) -> Table:
    """One row per (w, delta), deterministic grid order at any parallelism."""
    jobs = [(spec, i * len(spec.delta_grid) + j, w, d)
            for i, w in enumerate(spec.w_grid)
            for j, d in enumerate(spec.delta_grid)]
    results: list = [None] * len(jobs)
    if spec.parallelism == 1:
        for job in jobs:
            index, values = _sweep_point(job)
            results[index] = values
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            for index, values in pool.map(_sweep_point, jobs, chunksize=16):
                results[index] = values
    failed = sum(1 for row in results if row[-1])
    if failed == len(results):
        raise SweepError("every sweep point failed; first error: " + str(results[0][-1]))
    return Table(header=tuple(_sweep_columns(spec)), rows=tuple(tuple(r) for r in results),
                 metadata=_sweep_metadata(spec))


def resume_sweep(spec: SweepSpec, path: str) -> bool:
    """True when `path` already holds a complete run of this spec.

    The file is then left untouched (byte-identical), otherwise the caller
    recomputes and rewrites it.
    """
    if not os.path.exists(path):
        return False
    expected_rows = len(spec.w_grid) * len(spec.delta_grid)
    digest = _config_digest(spec)
    rows = 0
    digest_ok = False
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if line.startswith("# config_digest = "):
                    digest_ok = line.split("=", 1)[1].strip() == digest
            elif line:
                rows += 1
    return digest_ok and rows - 1 == expected_rows  # minus the header line


# ---------------------------------------------------------------------------
# figure jobs
# ---------------------------------------------------------------------------

class FigureId(enum.Enum):
    PULLING_CURVE = "pulling_curve"
    SYNC_CONTOURS = "sync_contours"
    SPECTRUM_INSET = "spectrum_inset"
    PLATEAU_CURVE = "plateau_curve"
    LINEWIDTH_COMPARISON = "linewidth_comparison"
    CLASSICAL_POLE_DISTANCE = "classical_pole_distance"

    @classmethod
    def parse(cls, tag: str) -> "FigureId":
        key = tag.strip().lower().replace("-", "_")
        for fid in cls:
            if fid.value == key:
                return fid
        raise ParameterError(f"unknown figure id {tag!r}; expected one of "
                             f"{', '.join(f.value for f in cls)}")


@dataclass(frozen=True)
class FigureJob:
    figure_id: FigureId
    scenario: ScenarioKind | None = None
    n_atoms: int = 10000
    parallelism: int = 1


def _figure_meta(job: FigureJob, extra: dict[str, str]) -> tuple[tuple[str, str], ...]:
    meta = [("toolkit_version", __version__), ("figure", job.figure_id.value)]
    meta += [(k, v) for k, v in extra.items()]
    return tuple(meta)


def run_figure(job: FigureJob) -> Table:
    """Emit the data behind one figure with its default parameters baked in."""
    fid = job.figure_id
    n = job.n_atoms

    if fid is FigureId.PULLING_CURVE:
        rate = 1e6
        w = 0.5 * rate
        rows = []
        for d in np.linspace(0.0, 4.0 * w, 81):
            p = ModelParams.for_scenario(ScenarioKind.BI_QUANTUM, n, w, float(d), rate)
            steady = meanfield.steady_state(ScenarioKind.BI_QUANTUM, p)
            poles = spectral.pole_pair(ScenarioKind.BI_QUANTUM, steady, p)
            rows.append((d / rate, abs(poles[0].imag - poles[1].imag) / rate,
                         closedform.pole_distance_leading(ScenarioKind.BI_QUANTUM, p) / rate))
        return Table(("delta", "pole_distance", "pole_distance_leading"), tuple(rows),
                     _figure_meta(job, {"scenario": "bi_quantum", "w": "0.5",
                                        "collective_rate": "1e6 Hz", "units": "collective_rate"}))

    if fid is FigureId.SYNC_CONTOURS:
        scenario = job.scenario or ScenarioKind.BI_QUANTUM
        xi = 0.6 if scenario is ScenarioKind.BI_CLASSICAL else 0.0
        grid = tuple(float(v) for v in np.linspace(0.05, 2.5, 60))
        spec = SweepSpec(scenario=scenario, w_grid=grid, delta_grid=grid, n_atoms=n,
                         collective_rate=1e6, xi=xi, outputs=("z", "aa", "bb", "re_ab"),
                         parallelism=job.parallelism)
        table = run_sweep(spec)
        return Table(table.header, table.rows, _figure_meta(
            job, {"scenario": scenario.value, "collective_rate": "1e6 Hz",
                  "feedback_strength": _fmt(xi)}))

    if fid in (FigureId.SPECTRUM_INSET, FigureId.PLATEAU_CURVE):
        rate = 1e4
        w = 0.5 * rate
        if fid is FigureId.SPECTRUM_INSET:
            rows = []
            for dfrac in (1.5, 1.0, 0.5, 0.0):
                p = ModelParams.for_scenario(ScenarioKind.UNI_QUANTUM, n, w, dfrac * rate, rate)
                steady = meanfield.steady_state(ScenarioKind.UNI_QUANTUM, p)
                rs = spectral.regression_system(ScenarioKind.UNI_QUANTUM, steady, p)
                try:
                    comps = spectral.components(rs)
                    grid = _spectrum_grid(comps, rate)
                    values, _ = spectral.spectrum(comps, grid)
                except spectral.DefectiveMatrixError:
                    grid, values = spectral.fft_spectrum(rs, tau_max=4000.0 / rate,
                                                         n_tau=1 << 15)
                rows += [(dfrac, float(o) / rate, float(v) * rate)
                         for o, v in zip(grid, values)]
            return Table(("delta", "omega", "s_norm"), tuple(rows),
                         _figure_meta(job, {"scenario": "uni_quantum", "w": "0.5",
                                            "collective_rate": "10 kHz"}))
        rows = []
        for d in np.linspace(0.0, 1.5 * rate, 61):
            p = ModelParams.for_scenario(ScenarioKind.UNI_QUANTUM, n, w, float(d), rate)
            steady = meanfield.steady_state(ScenarioKind.UNI_QUANTUM, p)
            comps = spectral.components(
                spectral.regression_system(ScenarioKind.UNI_QUANTUM, steady, p))
            values, _ = spectral.spectrum(comps, np.array([0.0]))
            rows.append((d / rate, float(values[0]) * rate))
        return Table(("delta", "s_norm_at_carrier"), tuple(rows),
                     _figure_meta(job, {"scenario": "uni_quantum", "w": "0.5",
                                        "collective_rate": "10 kHz"}))

    if fid is FigureId.LINEWIDTH_COMPARISON:
        xi = 0.6
        rows = []
        for w in np.linspace(0.05, 2.0, 40):
            for d in np.linspace(0.0, 1.5, 31):
                pq = ModelParams.for_scenario(ScenarioKind.BI_QUANTUM, n, float(w), float(d))
                pc = ModelParams.for_scenario(ScenarioKind.BI_CLASSICAL, n, float(w), float(d),
                                              feedback_strength=xi)
                # the width formulas hold in the superradiant window only;
                # beyond it the inversion clips at one and the emission is
                # chaotic with an O(N)-wide line, which is not tabulated
                if closedform.sigma_z_leading(ScenarioKind.BI_QUANTUM, pq) >= 1.0:
                    continue
                if closedform.sigma_z_leading(ScenarioKind.BI_CLASSICAL, pc) >= 1.0:
                    continue
                gamma = pq.single_atom_rate
                wq = closedform.linewidth_leading(ScenarioKind.BI_QUANTUM, pq)
                wc = closedform.linewidth_leading(ScenarioKind.BI_CLASSICAL, pc)
                narrow_q = min(pk.full_width for pk in wq if pk.full_width is not None)
                narrow_c = min(pk.full_width for pk in wc if pk.full_width is not None)
                rows.append((float(w), float(d), narrow_q / gamma, narrow_c / gamma))
        return Table(("w", "delta", "linewidth_quantum", "linewidth_classical"), tuple(rows),
                     _figure_meta(job, {"feedback_strength": "0.6",
                                        "units": "collective_rate; widths in single-atom rate"}))

    # classical pole distance (symmetric classical channel, strong feedback)
    xi, w = 0.9, 0.5
    rows = []
    for d in np.linspace(0.0, 1.25, 81):
        p = ModelParams.for_scenario(ScenarioKind.BI_CLASSICAL, n, w, float(d),
                                     feedback_strength=xi)
        steady = meanfield.steady_state(ScenarioKind.BI_CLASSICAL, p)
        poles = spectral.pole_pair(ScenarioKind.BI_CLASSICAL, steady, p)
        rows.append((float(d), abs(poles[0].imag - poles[1].imag),
                     closedform.pole_distance_leading(ScenarioKind.BI_CLASSICAL, p)))
    return Table(("delta", "pole_distance", "pole_distance_leading"), tuple(rows),
                 _figure_meta(job, {"scenario": "bi_classical", "w": "0.5",
                                    "feedback_strength": "0.9", "units": "collective_rate"}))


def _spectrum_grid(comps, rate: float) -> np.ndarray:
    """Union of fine windows around each peak plus a coarse background."""
    pieces = [np.linspace(-2.0 * rate, 2.0 * rate, 801)]
    for c in comps:
        span = 25.0 * max(c.half_width, 1e-6 * rate)
        pieces.append(np.linspace(c.center - span, c.center + span, 401))
    return np.unique(np.concatenate(pieces))


# ---------------------------------------------------------------------------
# cumulant-vs-exact validation
# ---------------------------------------------------------------------------

# pump/detuning panel (units of the collective rate) inside the superradiant
# window of the small systems used by the oracle
_VALIDATION_PANEL = ((0.7, 0.0), (0.7, 0.25), (0.9, 0.25))
_VALIDATION_XI = 0.6
REL_TOLERANCE = 0.15     # toolkit convention: paper gives no number
ABS_CORR_FLOOR = 0.01    # pair correlations at n_small=2 sit at the closure noise floor


@dataclass(frozen=True)
class ValidationEntry:
    scenario: ScenarioKind
    pump: float
    detuning: float
    observable: str
    exact: complex
    cumulant: complex
    deviation: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple[ValidationEntry, ...]
    ok: bool

    def table(self) -> Table:
        rows = tuple(
            (e.scenario.value, e.pump, e.detuning, e.observable,
             e.exact.real, e.exact.imag, e.cumulant.real, e.cumulant.imag,
             e.deviation, e.tolerance, "pass" if e.passed else "FAIL")
            for e in self.entries)
        return Table(("scenario", "w", "delta", "observable", "exact_re", "exact_im",
                      "cumulant_re", "cumulant_im", "deviation", "tolerance", "status"),
                     rows, (("toolkit_version", __version__), ("kind", "validation")))


def validate(n_small: int, scenarios: tuple[ScenarioKind, ...] = tuple(ScenarioKind),
             panel: tuple[tuple[float, float], ...] = _VALIDATION_PANEL) -> ValidationReport:
    """Exact-oracle steady states vs the cumulant solver on a fixed panel.

    Observables compare within REL_TOLERANCE relative deviation; the pair
    correlations additionally get the ABS_CORR_FLOOR absolute allowance,
    since at oracle-size atom numbers they sit at the closure's own accuracy
    limit.  Every exact state is invariant-checked (trace, hermiticity,
    positivity) before use.
    """
    if n_small > 3:
        raise ParameterError("validation oracle runs at n_small <= 3")
    entries: list[ValidationEntry] = []
    for scenario in scenarios:
        xi = _VALIDATION_XI if scenario is ScenarioKind.BI_CLASSICAL else 0.0
        for w, d in panel:
            p = ModelParams.for_scenario(scenario, n_small, w, d, feedback_strength=xi)
            lv = exactsim.build_liouvillian(scenario, p, n_small)
            rho = exactsim.steady_state_exact(lv)
            rho.validate(herm_tol=1e-12, trace_tol=1e-10, positivity_tol=1e-9)
            exact = exactsim.expectations(rho, lv.layout)
            cumulant = meanfield.steady_state(scenario, p).state
            for name in ("z_a", "z_b", "aa", "bb", "ab"):
                e = complex(getattr(exact, name))
                c = complex(getattr(cumulant, name))
                if n_small == 1 and name in ("aa", "bb"):
                    continue  # no distinct pair exists
                dev = abs(c - e)
                tol = REL_TOLERANCE * abs(e)
                if name in ("aa", "bb", "ab"):
                    tol += ABS_CORR_FLOOR
                entries.append(ValidationEntry(
                    scenario=scenario, pump=w, detuning=d, observable=name,
                    exact=e, cumulant=c, deviation=dev, tolerance=tol,
                    passed=bool(dev <= tol)))
    return ValidationReport(entries=tuple(entries), ok=all(e.passed for e in entries))
