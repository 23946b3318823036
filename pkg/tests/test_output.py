"""Snapshot and CSV serialization: exact round-trips, stable headers."""

import numpy as np
import numpy.testing as npt
import pytest

from hybridqc import (
    ClassicalHamiltonian,
    MeasuredObservable,
    PhaseSpaceError,
    build_initial,
    delta_limit_study,
    detect_violation,
    diagnose,
    evolve,
    gaussian_state,
    make_grid,
    product_state,
    pure_from_amplitudes,
)
from hybridqc.output import (
    STUDY_HEADER,
    VIOLATION_HEADER,
    diagnostics_header,
    diagnostics_row,
    format_float,
    read_field,
    read_state_snapshot,
    render_diagnostics,
    write_diagnostics_csv,
    write_field,
    write_margins_csv,
    write_state_snapshot,
    write_study_csv,
    write_violation_csv,
)
from tests.test_collapse import pointer_scenario

RNG_SEED = 20240821


def short_run(scenario=None):
    scenario = scenario or pointer_scenario()
    state = build_initial(scenario)
    return list(evolve(state, scenario.observable, scenario.coupling,
                       scenario.dt, 0.1))


# ---------------------------------------------------------------------------
# float formatting
# ---------------------------------------------------------------------------


def test_format_float_round_trips_exactly():
    rng = np.random.default_rng(RNG_SEED)
    samples = list(rng.normal(size=50)) + list(rng.normal(size=50) * 1e-300)
    samples += [0.0, 1.0, -1.0, np.pi, 2.0 / 3.0, 1e308, 5e-324]
    for x in samples:
        assert float(format_float(float(x))) == float(x)


def test_format_float_uses_shortest_repr():
    assert format_float(0.1) == "0.1"
    assert format_float(1.0) == "1.0"
    assert format_float(np.float64(0.25)) == "0.25"


# ---------------------------------------------------------------------------
# field snapshots
# ---------------------------------------------------------------------------


def test_field_round_trip_is_bit_exact(tmp_path):
    grid = make_grid(-3, 3, -2, 2, 32, 24)
    rng = np.random.default_rng(RNG_SEED + 1)
    values = rng.normal(size=grid.shape)
    path = tmp_path / "field.txt"
    write_field(path, grid, values, 0.75)
    grid_back, values_back, t_back = read_field(path)
    assert (grid_back.q_min, grid_back.q_max) == (grid.q_min, grid.q_max)
    assert grid_back.shape == grid.shape
    assert t_back == 0.75
    npt.assert_array_equal(values_back, values)


def test_field_header_layout(tmp_path):
    grid = make_grid(-1, 1, -2, 2, 8, 16)
    path = tmp_path / "field.txt"
    write_field(path, grid, np.zeros(grid.shape), 0.5)
    first = path.read_text().splitlines()[0]
    assert first.split() == ["-1.0", "1.0", "-2.0", "2.0", "8", "16", "0.5"]


def test_field_rejects_shape_mismatch(tmp_path):
    grid = make_grid(-1, 1, -1, 1, 8, 8)
    with pytest.raises(PhaseSpaceError, match="shape"):
        write_field(tmp_path / "bad.txt", grid, np.zeros((4, 4)), 0.0)


def test_truncated_snapshot_is_detected(tmp_path):
    grid = make_grid(-1, 1, -1, 1, 8, 8)
    path = tmp_path / "field.txt"
    write_field(path, grid, np.ones(grid.shape), 0.0)
    lines = path.read_text().splitlines()
    (tmp_path / "cut.txt").write_text("\n".join(lines[:30]) + "\n")
    with pytest.raises(PhaseSpaceError, match="truncated"):
        read_field(tmp_path / "cut.txt")


def test_empty_snapshot_is_detected(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("")
    with pytest.raises(PhaseSpaceError, match="empty"):
        read_field(path)


# ---------------------------------------------------------------------------
# state snapshots
# ---------------------------------------------------------------------------


def test_state_snapshot_round_trip_restores_conjugates(tmp_path):
    grid = make_grid(-4, 4, -4, 4, 48, 48)
    rho_cm = gaussian_state(grid, 0.3, -0.2, 0.5, 0.5)
    state = product_state(pure_from_amplitudes([1.0, 2.0j]), rho_cm)
    path = tmp_path / "state.txt"
    write_state_snapshot(path, state, 1.25)
    back, t = read_state_snapshot(path)
    assert t == 1.25
    assert back.dim == 2
    npt.assert_array_equal(back.blocks, state.blocks)


def test_state_snapshot_headers_tag_blocks(tmp_path):
    grid = make_grid(-4, 4, -4, 4, 16, 16)
    rho_cm = gaussian_state(grid, 0.0, 0.0, 1.0, 1.0)
    state = product_state(pure_from_amplitudes([1.0, 1.0]), rho_cm)
    path = tmp_path / "state.txt"
    write_state_snapshot(path, state, 0.0)
    tags = [line.split()[7:] for line in path.read_text().splitlines()
            if len(line.split()) > 7]
    assert tags == [
        ["block", "0", "0", "re"], ["block", "0", "0", "im"],
        ["block", "0", "1", "re"], ["block", "0", "1", "im"],
        ["block", "1", "1", "re"], ["block", "1", "1", "im"],
    ]


def test_state_snapshot_rejects_mixed_times(tmp_path):
    grid = make_grid(-4, 4, -4, 4, 16, 16)
    rho_cm = gaussian_state(grid, 0.0, 0.0, 1.0, 1.0)
    state = product_state(pure_from_amplitudes([1.0]), rho_cm)
    path_a = tmp_path / "a.txt"
    path_b = tmp_path / "b.txt"
    write_state_snapshot(path_a, state, 0.0)
    write_state_snapshot(path_b, state, 1.0)
    merged = tmp_path / "merged.txt"
    merged.write_text(path_a.read_text() + path_b.read_text())
    with pytest.raises(PhaseSpaceError, match="mixed"):
        read_state_snapshot(merged)


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------


def test_diagnostics_header_strings():
    assert diagnostics_header(2) == (
        "t,trace,purity_ratio,min_eig,qm_entropy,qm_purity,"
        "offdiag_mass_12,mean_q_1,mean_p_1,mean_q_2,mean_p_2"
    )
    assert diagnostics_header(3) == (
        "t,trace,purity_ratio,min_eig,qm_entropy,qm_purity,"
        "offdiag_mass_12,offdiag_mass_13,offdiag_mass_23,"
        "mean_q_1,mean_p_1,mean_q_2,mean_p_2,mean_q_3,mean_p_3"
    )


def test_diagnostics_row_matches_header_width():
    run = short_run()
    history = [diag for _, _, diag in run]
    header_cols = diagnostics_header(2).count(",")
    for diag in history:
        assert diagnostics_row(diag).count(",") == header_cols


def test_diagnostics_csv_is_byte_deterministic(tmp_path):
    history = [diag for _, _, diag in short_run()]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_diagnostics_csv(a, history)
    write_diagnostics_csv(b, history)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text() == render_diagnostics(history)


def test_diagnostics_csv_rejects_empty_history(tmp_path):
    with pytest.raises(PhaseSpaceError, match="empty"):
        write_diagnostics_csv(tmp_path / "x.csv", [])


def test_violation_csv_header_only_when_clean(tmp_path):
    scenario = pointer_scenario()
    state = build_initial(scenario)
    clean = detect_violation([diagnose(state, 0.0)])
    path = tmp_path / "violation.csv"
    write_violation_csv(path, clean)
    assert path.read_text() == VIOLATION_HEADER + "\n"


def test_violation_csv_single_row_when_found(tmp_path):
    report = detect_violation(short_run())
    assert report.found
    path = tmp_path / "violation.csv"
    write_violation_csv(path, report)
    lines = path.read_text().splitlines()
    assert lines[0] == VIOLATION_HEADER
    assert len(lines) == 2
    cells = lines[1].split(",")
    assert float(cells[0]) == report.onset_time
    assert float(cells[3]) == report.worst_value


def test_margins_csv_layout(tmp_path):
    report = detect_violation(short_run())
    path = tmp_path / "margins.csv"
    write_margins_csv(path, report)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,defect_12"
    assert len(lines) == 1 + report.margin_times.size
    assert float(lines[1].split(",")[0]) == report.margin_times[0]


def test_study_csv_layout(tmp_path):
    study = delta_limit_study(pointer_scenario(), [0.4])
    path = tmp_path / "study.csv"
    write_study_csv(path, study)
    lines = path.read_text().splitlines()
    assert lines[0] == STUDY_HEADER
    assert len(lines) == 2
    cells = lines[1].split(",")
    assert float(cells[0]) == 0.4
    assert float(cells[1]) == study.rows[0].onset_time
    assert np.isnan(float(cells[3]))
