"""Text artifact formats: field snapshots and the CSV tables.

Everything here is ASCII, deterministic, and round-trippable: floats are
written with ``repr`` (shortest exact decimal), rows end with a bare
newline on every platform, and identical inputs always produce
byte-identical files.

Field snapshot format (shared by classical densities and hybrid blocks):
a header line ``q_min q_max p_min p_max n_q n_p t`` followed by one float
per grid cell per line in row-major order (q index outer, p index inner).
Hybrid snapshots concatenate one such section per block component, with
four extra header tokens ``block i j re|im``.
"""

from __future__ import annotations

import io
from typing import Iterable, Sequence, TextIO

import numpy as np

from .phase_space import PhaseGrid, PhaseSpaceError, make_grid
from .hybrid import Diagnostics, HybridState
from .collapse import DeltaLimitStudy, ViolationReport

__all__ = [
    "format_float",
    "write_field",
    "read_field",
    "write_state_snapshot",
    "read_state_snapshot",
    "diagnostics_header",
    "write_diagnostics_csv",
    "write_margins_csv",
    "write_violation_csv",
    "write_study_csv",
]

VIOLATION_HEADER = "onset_time,onset_q,onset_p,worst_value"
STUDY_HEADER = "sigma,onset_time,half_time,fit_exponent"


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same float."""

    return repr(float(x))


# ---------------------------------------------------------------------------
# field snapshots
# ---------------------------------------------------------------------------


def _write_section(stream: TextIO, grid: PhaseGrid, values: np.ndarray, t: float,
                   extra: Sequence[str] = ()) -> None:
    header = [format_float(grid.q_min), format_float(grid.q_max),
              format_float(grid.p_min), format_float(grid.p_max),
              str(grid.n_q), str(grid.n_p), format_float(t)]
    header.extend(extra)
    stream.write(" ".join(header) + "\n")
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    stream.write("\n".join(format_float(v) for v in flat))
    stream.write("\n")


def write_field(path, grid: PhaseGrid, values: np.ndarray, t: float) -> None:
    """Write one real field in the shared snapshot format."""

    if np.asarray(values).shape != grid.shape:
        raise PhaseSpaceError(
            f"field shape {np.asarray(values).shape} does not match grid {grid.shape}"
        )
    with open(path, "w", newline="") as stream:
        _write_section(stream, grid, values, t)


def _read_section(lines: Iterable[str]):
    it = iter(lines)
    try:
        header = next(it).split()
    except StopIteration:
        return None
    if len(header) < 7:
        raise PhaseSpaceError(f"snapshot header has {len(header)} tokens, expected >= 7")
    q_min, q_max, p_min, p_max = (float(tok) for tok in header[:4])
    n_q, n_p = int(header[4]), int(header[5])
    t = float(header[6])
    extra = header[7:]
    count = n_q * n_p
    values = np.empty(count)
    for k in range(count):
        try:
            values[k] = float(next(it))
        except StopIteration:
            raise PhaseSpaceError(
                f"snapshot section truncated: expected {count} values, got {k}"
            ) from None
    grid = make_grid(q_min, q_max, p_min, p_max, n_q, n_p)
    return grid, values.reshape(n_q, n_p), t, extra


def read_field(path) -> tuple[PhaseGrid, np.ndarray, float]:
    """Read back a single-field snapshot written by :func:`write_field`."""

    with open(path) as stream:
        section = _read_section(stream)
    if section is None:
        raise PhaseSpaceError(f"{path}: empty snapshot file")
    grid, values, t, _ = section
    return grid, values, t


def write_state_snapshot(path, state: HybridState, t: float) -> None:
    """Write a hybrid state: one section per block (i <= j) and component."""

    with open(path, "w", newline="") as stream:
        for i in range(state.dim):
            for j in range(i, state.dim):
                block = state.blocks[i, j]
                for component, values in (("re", block.real), ("im", block.imag)):
                    _write_section(stream, state.grid, values, t,
                                   ("block", str(i), str(j), component))


def read_state_snapshot(path) -> tuple[HybridState, float]:
    """Reassemble a hybrid state from a snapshot file (conjugates restored)."""

    sections = []
    with open(path) as stream:
        while True:
            section = _read_section(stream)
            if section is None:
                break
            sections.append(section)
    if not sections:
        raise PhaseSpaceError(f"{path}: empty snapshot file")
    grid, _, t, _ = sections[0]
    dim = 0
    for _, _, _, extra in sections:
        if len(extra) != 4 or extra[0] != "block" or extra[3] not in ("re", "im"):
            raise PhaseSpaceError(f"{path}: malformed block header tokens {extra}")
        dim = max(dim, int(extra[1]) + 1, int(extra[2]) + 1)
    blocks = np.zeros((dim, dim, *grid.shape), dtype=np.complex128)
    for _, values, t_k, extra in sections:
        if t_k != t:
            raise PhaseSpaceError(f"{path}: mixed snapshot times {t} and {t_k}")
        i, j = int(extra[1]), int(extra[2])
        blocks[i, j] += values if extra[3] == "re" else 1j * values
    for i in range(dim):
        for j in range(i + 1, dim):
            blocks[j, i] = np.conj(blocks[i, j])
    return HybridState(grid, blocks), t


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------


def _pairs(dim: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(dim) for j in range(i + 1, dim)]


def diagnostics_header(dim: int) -> str:
    columns = ["t", "trace", "purity_ratio", "min_eig", "qm_entropy", "qm_purity"]
    columns += [f"offdiag_mass_{i + 1}{j + 1}" for i, j in _pairs(dim)]
    for i in range(dim):
        columns += [f"mean_q_{i + 1}", f"mean_p_{i + 1}"]
    return ",".join(columns)


def diagnostics_row(diag: Diagnostics) -> str:
    dim = diag.offdiag_mass.shape[0]
    cells = [diag.t, diag.trace, diag.purity_ratio, diag.min_eig,
             diag.qm_entropy, diag.qm_purity]
    cells += [diag.offdiag_mass[i, j] for i, j in _pairs(dim)]
    for i in range(dim):
        cells += [diag.mean_q[i], diag.mean_p[i]]
    return ",".join(format_float(c) for c in cells)


def write_diagnostics_csv(path, history: Sequence[Diagnostics]) -> None:
    if not history:
        raise PhaseSpaceError("cannot write an empty diagnostics table")
    dim = history[0].offdiag_mass.shape[0]
    with open(path, "w", newline="") as stream:
        stream.write(diagnostics_header(dim) + "\n")
        for diag in history:
            stream.write(diagnostics_row(diag) + "\n")


def write_margins_csv(path, report: ViolationReport) -> None:
    """Per-tick worst geometric-mean defect for every block pair."""

    dim = report.margin_history.shape[1]
    columns = ["t"] + [f"defect_{i + 1}{j + 1}" for i, j in _pairs(dim)]
    with open(path, "w", newline="") as stream:
        stream.write(",".join(columns) + "\n")
        for k in range(report.margin_times.size):
            cells = [report.margin_times[k]]
            cells += [report.margin_history[k, i, j] for i, j in _pairs(dim)]
            stream.write(",".join(format_float(c) for c in cells) + "\n")


def write_violation_csv(path, report: ViolationReport) -> None:
    """Onset summary: header always, one data row only when a violation was found."""

    with open(path, "w", newline="") as stream:
        stream.write(VIOLATION_HEADER + "\n")
        if report.found:
            cells = [report.onset_time, report.onset_q, report.onset_p,
                     report.worst_value]
            stream.write(",".join(format_float(c) for c in cells) + "\n")


def write_study_csv(path, study: DeltaLimitStudy) -> None:
    """Width-sweep table; the fitted exponent repeats as a constant column."""

    with open(path, "w", newline="") as stream:
        stream.write(STUDY_HEADER + "\n")
        for row in study.rows:
            cells = [row.sigma, row.onset_time, row.half_time, study.fit_exponent]
            stream.write(",".join(format_float(c) for c in cells) + "\n")


def render_diagnostics(history: Sequence[Diagnostics]) -> str:
    """Diagnostics table as a string (used by tests for byte comparisons)."""

    buffer = io.StringIO()
    dim = history[0].offdiag_mass.shape[0]
    buffer.write(diagnostics_header(dim) + "\n")
    for diag in history:
        buffer.write(diagnostics_row(diag) + "\n")
    return buffer.getvalue()
