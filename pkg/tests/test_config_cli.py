"""Config parsing (collective validation), describe output, CLI exit codes."""

import numpy as np
import numpy.testing as npt
import pytest

from hybridqc import ConfigError, describe, parse_config
from hybridqc.cli import EXIT_BREAKDOWN, EXIT_CLEAN, EXIT_VIOLATION, main

POINTER_INI = """\
[quantum]
amplitudes = 0.7071067811865476,0 0.7071067811865476,0
eigenvalues = 1 -1

[classical]
q_min = -2.5
q_max = 2.5
p_min = -2.5
p_max = 2.5
n_q = 128
n_p = 128
q0 = 0.0
p0 = 0.0
sigma_q = 0.25
sigma_p = 0.25
coupling = linear_p

[run]
name = pointer
dt = 0.02
t_final = 0.4
"""


def write_config(tmp_path, text, directory=None, **run_overrides):
    if directory is not None:
        text += f"\n[output]\ndirectory = {directory}\n"
    for key, value in run_overrides.items():
        text += f"\n[run]\n{key} = {value}\n" if "[run]" not in text else ""
    path = tmp_path / "run.ini"
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def test_minimal_config_fills_defaults():
    config = parse_config(POINTER_INI)
    assert config.name == "pointer"
    assert config.mode == "evolve"
    assert config.cadence == 1
    assert config.hbar == 1.0
    assert config.tol_psd == 1e-6
    assert config.interpolation is None
    assert config.directory == "."
    assert config.emit_diagnostics == "diagnostics.csv"
    assert config.emit_violation == "violation.csv"
    assert config.emit_margins == "margins.csv"
    assert config.snapshot_cadence == 0
    assert config.notices == ()
    npt.assert_allclose(np.abs(config.amplitudes) ** 2, [0.5, 0.5], atol=1e-12)
    npt.assert_array_equal(config.observable.values, [1.0, -1.0])
    assert config.coupling.kind == "linear_p"
    scenario = config.scenario()
    assert scenario.t_final == 0.4


def test_unnormalized_amplitudes_are_renormalized_with_notice():
    text = POINTER_INI.replace(
        "amplitudes = 0.7071067811865476,0 0.7071067811865476,0",
        "amplitudes = 1,0 1,0",
    )
    config = parse_config(text)
    assert any("renormalized" in n for n in config.notices)
    npt.assert_allclose(np.abs(config.amplitudes) ** 2, [0.5, 0.5], atol=1e-12)


def test_missing_required_keys_are_reported_together():
    text = POINTER_INI.replace("dt = 0.02\n", "").replace("q0 = 0.0\n", "")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    messages = err.value.errors
    assert any("missing required key: dt" in m for m in messages)
    assert any("missing required key: q0" in m for m in messages)


def test_unknown_section_and_key_are_errors():
    text = POINTER_INI + "\n[extra]\nfoo = 1\n"
    text = text.replace("[run]", "[run]\nbogus_key = 1")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    messages = err.value.errors
    assert any("unknown section: [extra]" in m for m in messages)
    assert any("unknown key: bogus_key" in m for m in messages)


def test_every_problem_reported_in_one_pass():
    text = """\
[quantum]
amplitudes = 1,0 nonsense
eigenvalues = 1 -1

[classical]
q_min = -2.5
q_max = 2.5
p_min = -2.5
p_max = 2.5
n_q = 128
n_p = 128
q0 = 0.0
p0 = 0.0
sigma_q = 0.25
sigma_p = 0.25
coupling = warp_drive

[run]
mode = teleport
interpolation = spline9
"""
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    joined = "\n".join(err.value.errors)
    assert "amplitudes" in joined
    assert "warp_drive" in joined
    assert "teleport" in joined
    assert "spline9" in joined
    assert "missing required key: dt" in joined
    assert len(err.value.errors) >= 5


def test_evolve_mode_requires_t_final():
    text = POINTER_INI.replace("t_final = 0.4\n", "")
    with pytest.raises(ConfigError, match="t_final"):
        parse_config(text)


def test_under_resolved_width_is_rejected():
    text = POINTER_INI.replace("sigma_q = 0.25", "sigma_q = 0.01")
    with pytest.raises(ConfigError, match="resolution limit"):
        parse_config(text)


def test_start_point_must_be_inside_grid():
    text = POINTER_INI.replace("q0 = 0.0", "q0 = 7.0")
    with pytest.raises(ConfigError, match="outside the grid"):
        parse_config(text)


def test_unstable_dt_is_rejected_with_binding_constraint():
    text = POINTER_INI.replace("dt = 0.02", "dt = 0.5")
    with pytest.raises(ConfigError, match="binding constraint"):
        parse_config(text)


def test_polynomial_coupling_terms():
    text = POINTER_INI.replace(
        "coupling = linear_p",
        "coupling = polynomial\ncoupling_terms = 0,1,1.0 2,0,0.25",
    ).replace("dt = 0.02", "dt = 0.01")
    config = parse_config(text)
    assert config.coupling.evaluate(2.0, 0.5) == 0.5 + 0.25 * 4.0


def test_polynomial_coupling_requires_terms():
    text = POINTER_INI.replace("coupling = linear_p", "coupling = polynomial")
    with pytest.raises(ConfigError, match="coupling_terms"):
        parse_config(text)


def test_coupling_terms_rejected_for_named_kinds():
    text = POINTER_INI.replace(
        "coupling = linear_p",
        "coupling = harmonic\ncoupling_terms = 0,1,1.0",
    )
    with pytest.raises(ConfigError, match="polynomial"):
        parse_config(text)


def test_coupling_scale_multiplies():
    text = POINTER_INI.replace(
        "coupling = linear_p", "coupling = linear_p\ncoupling_scale = -2.0"
    ).replace("dt = 0.02", "dt = 0.01")
    config = parse_config(text)
    assert config.coupling.evaluate(0.0, 1.5) == -3.0


def test_study_mode_validates_sigma_list():
    study = POINTER_INI.replace("[run]", "[run]\nmode = study")
    with pytest.raises(ConfigError, match="sigma_list"):
        parse_config(study)
    with pytest.raises(ConfigError, match="decreasing"):
        parse_config(study.replace("mode = study", "mode = study\nsigma_list = 0.2 0.4"))
    config = parse_config(study.replace("mode = study",
                                        "mode = study\nsigma_list = 0.4 0.2"))
    assert config.sigma_list == (0.4, 0.2)


def test_snapshot_flags():
    on = parse_config(POINTER_INI + "\n[output]\nsnapshots = on\n")
    assert on.snapshot_cadence == 1
    final = parse_config(POINTER_INI + "\n[output]\nsnapshots = final\n")
    assert final.snapshot_cadence == -1
    with pytest.raises(ConfigError, match="snapshots"):
        parse_config(POINTER_INI + "\n[output]\nsnapshots = maybe\n")


def test_output_files_can_be_disabled():
    config = parse_config(POINTER_INI + "\n[output]\ndiagnostics = off\nmargins = off\n")
    assert config.emit_diagnostics is None
    assert config.emit_margins is None
    assert config.emit_violation == "violation.csv"


# ---------------------------------------------------------------------------
# describe
# ---------------------------------------------------------------------------


def test_describe_echoes_every_user_key_resolved():
    config = parse_config(POINTER_INI)
    text = describe(config)
    for line in ("amplitudes =", "eigenvalues = 1.0 -1.0", "q_min = -2.5",
                 "n_q = 128", "sigma_q = 0.25", "coupling = linear_p",
                 "dt = 0.02", "t_final = 0.4", "name = pointer"):
        assert line in text
    # defaults are echoed too, with their resolved values
    assert "cadence = 1" in text
    assert "hbar = 1.0" in text
    assert "tol_psd = 1e-06" in text
    assert "interpolation = bspline" in text


def test_describe_reports_stability_and_binding():
    text = describe(parse_config(POINTER_INI))
    assert "stability bounds (largest admissible dt):" in text
    assert "binding constraint: transport (q axis) (dt_max = 0.0390625)" in text
    assert "configured dt: 0.02" in text


def test_describe_memory_estimate_counts_buffer_values():
    big = (POINTER_INI.replace("n_q = 128", "n_q = 256")
           .replace("n_p = 128", "n_p = 256")
           .replace("dt = 0.02", "dt = 0.01"))
    text = describe(parse_config(big))
    # 2x2 blocks on 256x256 nodes, complex: 4 * 65536 * 2 values
    assert "2x2 blocks on 256x256 nodes -> 524288 values per buffer" in text
    assert "4.0 MiB" in text


def test_describe_counts_steps_and_ticks():
    text = describe(parse_config(POINTER_INI))
    assert "estimated step count: 20" in text
    assert "diagnostic ticks: 21" in text


def test_describe_lists_study_jobs():
    study = POINTER_INI.replace("[run]", "[run]\nmode = study\nsigma_list = 0.4 0.2")
    text = describe(parse_config(study))
    assert "planned study jobs (2):" in text
    assert "sigma = 0.4" in text
    assert "sigma = 0.2" in text


def test_describe_shows_renormalization_notice():
    text = describe(parse_config(POINTER_INI.replace(
        "amplitudes = 0.7071067811865476,0 0.7071067811865476,0",
        "amplitudes = 3,0 4,0",
    )))
    assert "notice: amplitudes renormalized" in text


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_rejects_bad_config_with_error_listing(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(POINTER_INI.replace("dt = 0.02\n", ""))
    code = main(["simulate", str(bad)])
    captured = capsys.readouterr()
    assert code == EXIT_BREAKDOWN
    assert "configuration errors:" in captured.err
    assert "missing required key: dt" in captured.err


def test_cli_reports_unreadable_config(tmp_path, capsys):
    code = main(["simulate", str(tmp_path / "missing.ini")])
    captured = capsys.readouterr()
    assert code == EXIT_BREAKDOWN
    assert "cannot read" in captured.err


def test_cli_describe_prints_summary(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(POINTER_INI)
    code = main(["describe", str(cfg)])
    captured = capsys.readouterr()
    assert code == EXIT_CLEAN
    assert "resolved configuration:" in captured.out
    assert "stability bounds" in captured.out


def test_cli_simulate_pointer_reports_violation(tmp_path, capsys):
    out_dir = tmp_path / "artifacts"
    cfg = tmp_path / "run.ini"
    cfg.write_text(POINTER_INI + f"\n[output]\ndirectory = {out_dir}\n")
    code = main(["simulate", str(cfg)])
    captured = capsys.readouterr()
    assert code == EXIT_VIOLATION
    assert "positivity violation: onset" in captured.out
    assert "final purity ratio:" in captured.out
    assert (out_dir / "diagnostics.csv").exists()
    assert (out_dir / "projected_diagnostics.csv").exists()
    assert (out_dir / "margins.csv").exists()
    violation = (out_dir / "violation.csv").read_text().splitlines()
    assert len(violation) == 2
    assert violation[0] == "onset_time,onset_q,onset_p,worst_value"


def test_cli_simulate_collapsed_ansatz_is_clean(tmp_path, capsys):
    out_dir = tmp_path / "artifacts"
    text = POINTER_INI.replace(
        "[run]", "[run]\nmode = ansatz\nansatz = collapsed\nansatz_time = 0.4"
    )
    cfg = tmp_path / "run.ini"
    cfg.write_text(text + f"\n[output]\ndirectory = {out_dir}\n")
    code = main(["simulate", str(cfg)])
    captured = capsys.readouterr()
    assert code == EXIT_CLEAN
    assert "no positivity violation" in captured.out
    violation = (out_dir / "violation.csv").read_text().splitlines()
    assert violation == ["onset_time,onset_q,onset_p,worst_value"]


def test_cli_simulate_correlated_ansatz_finds_violation(tmp_path, capsys):
    out_dir = tmp_path / "artifacts"
    text = POINTER_INI.replace(
        "[run]", "[run]\nmode = ansatz\nansatz = correlated\nansatz_time = 0.4"
    )
    cfg = tmp_path / "run.ini"
    cfg.write_text(text + f"\n[output]\ndirectory = {out_dir}\n")
    code = main(["simulate", str(cfg)])
    captured = capsys.readouterr()
    assert code == EXIT_VIOLATION
    assert "positivity violation" in captured.out


def test_cli_study_writes_table(tmp_path, capsys):
    out_dir = tmp_path / "artifacts"
    text = POINTER_INI.replace("[run]", "[run]\nmode = study\nsigma_list = 0.4")
    cfg = tmp_path / "run.ini"
    cfg.write_text(text + f"\n[output]\ndirectory = {out_dir}\n")
    code = main(["study", str(cfg)])
    captured = capsys.readouterr()
    assert code == EXIT_CLEAN
    assert captured.out.startswith("sigma,onset_time,half_time,fit_exponent")
    table = (out_dir / "study.csv").read_text().splitlines()
    assert table[0] == "sigma,onset_time,half_time,fit_exponent"
    assert len(table) == 2


def test_cli_snapshot_final_mode(tmp_path, capsys):
    out_dir = tmp_path / "artifacts"
    cfg = tmp_path / "run.ini"
    cfg.write_text(POINTER_INI
                   + f"\n[output]\ndirectory = {out_dir}\nsnapshots = final\n")
    code = main(["simulate", str(cfg)])
    capsys.readouterr()
    assert code == EXIT_VIOLATION
    assert (out_dir / "snapshot_raw_final.txt").exists()
    assert (out_dir / "snapshot_projected_final.txt").exists()


def test_cli_snapshot_cadence_mode(tmp_path, capsys):
    out_dir = tmp_path / "artifacts"
    cfg = tmp_path / "run.ini"
    cfg.write_text(POINTER_INI
                   + f"\n[output]\ndirectory = {out_dir}\nsnapshot_cadence = 10\n")
    code = main(["simulate", str(cfg)])
    capsys.readouterr()
    assert code == EXIT_VIOLATION
    assert (out_dir / "snapshot_raw_000000.txt").exists()
    assert (out_dir / "snapshot_raw_000010.txt").exists()
    assert (out_dir / "snapshot_raw_000020.txt").exists()


def test_cli_renormalization_notice_goes_to_stderr(tmp_path, capsys):
    out_dir = tmp_path / "artifacts"
    text = POINTER_INI.replace(
        "amplitudes = 0.7071067811865476,0 0.7071067811865476,0",
        "amplitudes = 1,0 1,0",
    )
    cfg = tmp_path / "run.ini"
    cfg.write_text(text + f"\n[output]\ndirectory = {out_dir}\n")
    code = main(["simulate", str(cfg)])
    captured = capsys.readouterr()
    assert code == EXIT_VIOLATION
    assert "notice: amplitudes renormalized" in captured.err
