import os

import numpy as np
import pytest

from srsync import cli, harness, meanfield
from srsync.harness import (FigureId, FigureJob, SweepSpec, Table, run_figure,
                            run_sweep, sweep_from_config, validate, write_csv)
from srsync.model import ParameterError, ScenarioKind

SK = ScenarioKind

SMALL_GRID = tuple(float(v) for v in np.linspace(0.3, 0.9, 3))


def small_spec(**overrides):
    base = dict(scenario=SK.BI_QUANTUM, w_grid=SMALL_GRID, delta_grid=SMALL_GRID,
                n_atoms=2000, outputs=("z", "aa", "re_ab", "flux"))
    base.update(overrides)
    return SweepSpec(**base)


# --- spec validation -----------------------------------------------------------

def test_sweep_spec_validation():
    with pytest.raises(ParameterError):
        small_spec(w_grid=())
    with pytest.raises(ParameterError):
        small_spec(w_grid=(0.5, 0.4))
    with pytest.raises(ParameterError):
        small_spec(outputs=("z", "nonsense"))
    with pytest.raises(ParameterError):
        small_spec(scenario=SK.UNI_QUANTUM, outputs=("pole_distance",))
    with pytest.raises(ParameterError):
        small_spec(parallelism=0)


def test_sweep_config_parsing():
    spec = sweep_from_config("""
        scenario = uni_classical
        n_atoms = 500
        w_grid = 0.1:0.5:5
        delta_grid = 0.1, 0.4, 0.9
        outputs = z, bb, flux
        parallelism = 2
    """)
    assert spec.scenario is SK.UNI_CLASSICAL
    assert spec.w_grid == pytest.approx(tuple(np.linspace(0.1, 0.5, 5)))
    assert spec.delta_grid == (0.1, 0.4, 0.9)
    assert spec.outputs == ("z", "bb", "flux")
    assert spec.parallelism == 2
    with pytest.raises(ParameterError):
        sweep_from_config("scenario = bi_quantum\n")  # grids missing


# --- sweeps ----------------------------------------------------------------------

def test_sweep_rows_in_grid_order_and_complete():
    table = run_sweep(small_spec())
    assert len(table.rows) == 9
    assert table.header[:2] == ("w", "delta")
    ws = [row[0] for row in table.rows]
    assert ws == sorted(ws)
    assert all(row[-1] == "" for row in table.rows)


def test_sweep_parallel_runs_are_byte_identical(tmp_path):
    spec1 = small_spec(parallelism=1)
    spec2 = small_spec(parallelism=2)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(run_sweep(spec1), str(p1))
    write_csv(run_sweep(spec2), str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_sweep_resume_leaves_complete_file_untouched(tmp_path):
    spec = small_spec()
    path = tmp_path / "sweep.csv"
    write_csv(run_sweep(spec), str(path))
    before = path.read_bytes()
    assert harness.resume_sweep(spec, str(path))
    assert path.read_bytes() == before
    # a different spec does not match the digest
    other = small_spec(n_atoms=4000)
    assert not harness.resume_sweep(other, str(path))
    # truncated files are recomputed
    path.write_bytes(before[: len(before) // 2])
    assert not harness.resume_sweep(spec, str(path))


def test_sweep_isolates_failing_points(monkeypatch):
    real = meanfield.steady_state

    def flaky(scenario, p):
        if abs(p.pump - 0.6) < 1e-9:
            raise meanfield.SteadyStateError("forced failure")
        return real(scenario, p)

    monkeypatch.setattr(harness.meanfield, "steady_state", flaky)
    table = run_sweep(small_spec())
    failed = [row for row in table.rows if row[-1]]
    assert len(failed) == 3
    assert all("forced failure" in row[-1] for row in failed)
    assert all(row[2] is None for row in failed)


def test_sweep_raises_when_everything_fails(monkeypatch):
    def always_fail(scenario, p):
        raise meanfield.SteadyStateError("forced failure")

    monkeypatch.setattr(harness.meanfield, "steady_state", always_fail)
    with pytest.raises(harness.SweepError):
        run_sweep(small_spec())


def test_csv_formatting(tmp_path):
    table = Table(header=("a", "b"), rows=((1.0 / 3.0, None), (2, "msg")),
                  metadata=(("kind", "demo"),))
    path = tmp_path / "t.csv"
    write_csv(table, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "# kind = demo"
    assert lines[1] == "a,b"
    assert lines[2] == "0.333333333333,"
    assert lines[3] == "2,msg"


def test_sync_region_boundary_tracks_critical_line():
    # coarse sweep: the last detuning with visible cross correlation stays
    # within one grid cell of delta = w
    grid = tuple(float(v) for v in np.linspace(0.1, 1.1, 11))
    table = run_sweep(SweepSpec(scenario=SK.BI_QUANTUM, w_grid=grid, delta_grid=grid,
                                n_atoms=10000, outputs=("re_ab",)))
    cell = grid[1] - grid[0]
    for w in (0.5, 0.7, 0.9):
        rows = [r for r in table.rows if abs(r[0] - w) < 1e-12]
        locked = [r[1] for r in rows if r[2] is not None and r[2] > 1e-3]
        assert locked, f"no locked points at w={w}"
        assert abs(max(locked) - w) <= cell


# --- figures ----------------------------------------------------------------------

def test_pulling_curve_zero_then_asymptotic():
    table = run_figure(FigureJob(FigureId.PULLING_CURVE, n_atoms=2000))
    rows = table.rows
    assert table.header == ("delta", "pole_distance", "pole_distance_leading")
    below = [r for r in rows if r[0] < 0.45]
    assert all(r[1] <= 1e-9 for r in below)
    top = rows[-1]
    assert top[1] / top[0] == pytest.approx(1.0, rel=0.05)


def test_classical_pole_distance_critical_detuning():
    table = run_figure(FigureJob(FigureId.CLASSICAL_POLE_DISTANCE, n_atoms=2000))
    opened = [r for r in table.rows if r[1] > 1e-6]
    assert min(r[0] for r in opened) == pytest.approx(0.45, abs=0.02)


def test_linewidth_comparison_classical_dominates():
    table = run_figure(FigureJob(FigureId.LINEWIDTH_COMPARISON, n_atoms=10000))
    assert all(row[3] >= row[2] for row in table.rows)


def test_plateau_curve_monotone_then_flat():
    table = run_figure(FigureJob(FigureId.PLATEAU_CURVE, n_atoms=2000))
    rows = sorted(table.rows)
    flat = [r[1] for r in rows if r[0] <= 0.25]
    assert (max(flat) - min(flat)) / max(flat) < 0.01
    outside = [r[1] for r in rows if r[0] >= 0.55]
    assert all(b < a for a, b in zip(outside, outside[1:]))


def test_figure_id_parsing():
    assert FigureId.parse("pulling-curve") is FigureId.PULLING_CURVE
    with pytest.raises(ParameterError):
        FigureId.parse("sideways")


# --- validation --------------------------------------------------------------------

def test_validate_all_scenarios_pass_tolerance():
    report = validate(2)
    assert report.ok
    assert len(report.entries) == 4 * 3 * 5
    assert {e.scenario for e in report.entries} == set(SK)


def test_validate_unpumped_dark_state_agrees_exactly():
    report = validate(1, scenarios=(SK.BI_QUANTUM,), panel=((0.0, 0.3),))
    assert report.ok
    for entry in report.entries:
        if entry.observable in ("z_a", "z_b"):
            assert entry.exact.real == pytest.approx(-1.0, abs=1e-9)
            assert entry.deviation < 1e-9


def test_validate_rejects_large_oracles():
    with pytest.raises(ParameterError):
        validate(4)


# --- command line --------------------------------------------------------------------

def test_cli_steady_ok(capsys):
    rc = cli.main(["steady", "--scenario", "bi-quantum", "--w", "0.5", "--delta",
                   "0.3", "--n", "2000"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "z_a = " in out and "stable = True" in out


def test_cli_usage_errors(capsys):
    assert cli.main(["steady", "--scenario", "bogus", "--w", "0.5", "--delta", "0"]) == 1
    assert cli.main(["steady", "--w", "0.5", "--delta", "0"]) == 1
    assert cli.main(["sweep", "--config", "/nonexistent", "--out", "x.csv"]) == 1
    assert cli.main(["figure", "--id", "sideways", "--out", "x.csv"]) == 1


def test_cli_sweep_and_resume(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("scenario = bi_quantum\nn_atoms = 2000\n"
                   "w_grid = 0.3:0.9:3\ndelta_grid = 0.3:0.9:3\noutputs = z, re_ab\n")
    out = tmp_path / "out.csv"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    stamp = out.read_bytes()
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out), "--resume"]) == 0
    assert out.read_bytes() == stamp


def test_cli_spectrum_writes_csv(tmp_path):
    out = tmp_path / "spec.csv"
    rc = cli.main(["spectrum", "--scenario", "uni-quantum", "--w", "0.5", "--delta",
                   "0.8", "--n", "2000", "--out", str(out)])
    assert rc == 0
    text = out.read_text()
    assert "omega,s_norm" in text
    assert "# method = lorentzian" in text


def test_cli_solver_failure_exit_code(monkeypatch):
    def always_fail(scenario, p):
        raise meanfield.SteadyStateError("forced failure")

    monkeypatch.setattr(cli.meanfield, "steady_state", always_fail)
    rc = cli.main(["steady", "--scenario", "bi-quantum", "--w", "0.5", "--delta", "0.3"])
    assert rc == 2


def test_cli_validate_exit_codes(monkeypatch, capsys):
    rc = cli.main(["validate", "--n-small", "1", "--scenarios", "bi_quantum"])
    assert rc == 0
    monkeypatch.setattr(harness, "REL_TOLERANCE", 1e-9)
    monkeypatch.setattr(harness, "ABS_CORR_FLOOR", 0.0)
    rc = cli.main(["validate", "--n-small", "2", "--scenarios", "bi_quantum"])
    assert rc == 3
