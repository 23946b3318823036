"""INI-style run configuration: parsing, validation, and the describe text.

A config has four sections.  ``[quantum]`` fixes the level amplitudes and
the measured observable's eigenvalues, ``[classical]`` the phase-space
grid, the initial packet, and the coupling Hamiltonian, ``[run]`` the
integration controls and mode, ``[output]`` the artifact plumbing.
Validation is collective: every problem in the file is reported in one
pass, and unknown keys are errors, not warnings.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .phase_space import (
    ClassicalHamiltonian,
    PhaseGrid,
    PhaseSpaceError,
    make_grid,
)
from .quantum import MeasuredObservable
from .hybrid import stability_bounds
from .collapse import MeasurementScenario

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "describe",
]

MODES = ("evolve", "ansatz", "study")
ANSATZ_KINDS = ("correlated", "collapsed")
COUPLING_KINDS = ("linear_p", "linear_q", "harmonic", "polynomial")

_KNOWN_KEYS = {
    "quantum": {"amplitudes", "eigenvalues"},
    "classical": {"q_min", "q_max", "p_min", "p_max", "n_q", "n_p",
                  "q0", "p0", "sigma_q", "sigma_p",
                  "coupling", "coupling_scale", "coupling_terms"},
    "run": {"name", "mode", "dt", "t_final", "cadence", "hbar", "tol_psd",
            "interpolation", "ansatz", "ansatz_time", "sigma_list", "grid_cap"},
    "output": {"directory", "diagnostics", "snapshots", "snapshot_cadence",
               "violation", "margins", "study"},
}
_REQUIRED_KEYS = {
    "quantum": ("amplitudes", "eigenvalues"),
    "classical": ("q_min", "q_max", "p_min", "p_max", "n_q", "n_p",
                  "q0", "p0", "sigma_q", "sigma_p", "coupling"),
    "run": ("dt",),
    "output": (),
}


class ConfigError(ValueError):
    """All problems found in one configuration, reported together."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"- {e}" for e in self.errors))


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run description."""

    name: str
    mode: str
    amplitudes: np.ndarray
    observable: MeasuredObservable
    coupling: ClassicalHamiltonian
    grid: PhaseGrid
    q0: float
    p0: float
    sigma_q: float
    sigma_p: float
    dt: float
    t_final: float
    cadence: int
    hbar: float
    tol_psd: float
    interpolation: str | None
    ansatz: str
    ansatz_time: float
    sigma_list: tuple[float, ...]
    grid_cap: int
    directory: str
    emit_diagnostics: str | None
    emit_violation: str | None
    emit_margins: str | None
    emit_study: str | None
    snapshot_cadence: int
    user_keys: dict[str, str] = field(default_factory=dict)
    notices: tuple[str, ...] = ()

    def scenario(self) -> MeasurementScenario:
        return MeasurementScenario(
            amplitudes=self.amplitudes,
            observable=self.observable,
            coupling=self.coupling,
            q0=self.q0, p0=self.p0,
            sigma_q=self.sigma_q, sigma_p=self.sigma_p,
            grid=self.grid,
            dt=self.dt, t_final=self.t_final, cadence=self.cadence,
            hbar=self.hbar, interpolation=self.interpolation,
        )

    def resolved_items(self) -> list[tuple[str, str, str]]:
        """(section, key, resolved value) for every key, defaults included."""

        amp = " ".join(f"{float(c.real)!r},{float(c.imag)!r}" for c in self.amplitudes)
        eig = " ".join(repr(v) for v in self.observable.values.tolist())
        terms = " ".join(
            f"{a},{b},{float(self.coupling.coeffs[a, b])!r}"
            for a in range(5) for b in range(5)
            if self.coupling.coeffs[a, b] != 0.0
        ) or "0,0,0.0"
        items = [
            ("quantum", "amplitudes", amp),
            ("quantum", "eigenvalues", eig),
            ("classical", "q_min", repr(self.grid.q_min)),
            ("classical", "q_max", repr(self.grid.q_max)),
            ("classical", "p_min", repr(self.grid.p_min)),
            ("classical", "p_max", repr(self.grid.p_max)),
            ("classical", "n_q", str(self.grid.n_q)),
            ("classical", "n_p", str(self.grid.n_p)),
            ("classical", "q0", repr(self.q0)),
            ("classical", "p0", repr(self.p0)),
            ("classical", "sigma_q", repr(self.sigma_q)),
            ("classical", "sigma_p", repr(self.sigma_p)),
            ("classical", "coupling", self.coupling.kind),
            ("classical", "coupling_terms", terms),
            ("run", "name", self.name),
            ("run", "mode", self.mode),
            ("run", "dt", repr(self.dt)),
            ("run", "t_final", repr(self.t_final)),
            ("run", "cadence", str(self.cadence)),
            ("run", "hbar", repr(self.hbar)),
            ("run", "tol_psd", repr(self.tol_psd)),
            ("run", "interpolation", self.interpolation or "bspline"),
            ("run", "ansatz", self.ansatz),
            ("run", "ansatz_time", repr(self.ansatz_time)),
            ("run", "sigma_list", " ".join(repr(s) for s in self.sigma_list)),
            ("run", "grid_cap", str(self.grid_cap)),
            ("output", "directory", self.directory),
            ("output", "diagnostics", self.emit_diagnostics or "off"),
            ("output", "violation", self.emit_violation or "off"),
            ("output", "margins", self.emit_margins or "off"),
            ("output", "study", self.emit_study or "off"),
            ("output", "snapshot_cadence", str(self.snapshot_cadence)),
        ]
        return items


def _split_tokens(value: str) -> list[str]:
    return value.replace(",", " ").split()


def _parse_amplitudes(value: str, errors: list[str], notices: list[str]):
    pairs = value.split()
    amps = []
    for token in pairs:
        parts = token.split(",")
        if len(parts) != 2:
            errors.append(
                f"[quantum] amplitudes: token {token!r} is not a re,im pair"
            )
            return None
        try:
            amps.append(complex(float(parts[0]), float(parts[1])))
        except ValueError:
            errors.append(f"[quantum] amplitudes: cannot parse {token!r}")
            return None
    if not amps:
        errors.append("[quantum] amplitudes: empty")
        return None
    c = np.array(amps, dtype=np.complex128)
    norm = float(np.linalg.norm(c))
    if norm == 0.0:
        errors.append("[quantum] amplitudes: zero vector cannot be normalized")
        return None
    if abs(norm - 1.0) > 1e-12:
        notices.append(
            f"amplitudes renormalized (input norm {norm!r})"
        )
        c = c / norm
    return c


class _SectionReader:
    """Typed access to one section, accumulating errors instead of raising."""

    def __init__(self, parser: configparser.ConfigParser, section: str,
                 errors: list[str]):
        self.section = section
        self.errors = errors
        self.present = parser.has_section(section)
        self.raw = dict(parser.items(section)) if self.present else {}

    def check_keys(self):
        for key in self.raw:
            if key not in _KNOWN_KEYS[self.section]:
                self.errors.append(f"[{self.section}] unknown key: {key}")
        for key in _REQUIRED_KEYS[self.section]:
            if key not in self.raw:
                self.errors.append(f"[{self.section}] missing required key: {key}")

    def get(self, key: str, default=None):
        return self.raw.get(key, default)

    def typed(self, key: str, kind, default=None):
        if key not in self.raw:
            return default
        text = self.raw[key]
        try:
            return kind(text)
        except (TypeError, ValueError):
            label = getattr(kind, "__name__", str(kind))
            self.errors.append(f"[{self.section}] {key}: cannot parse {text!r} as {label}")
            return default


def _build_coupling(classical: _SectionReader, errors: list[str]):
    kind = classical.get("coupling")
    if kind is None:
        return None
    if kind not in COUPLING_KINDS:
        errors.append(
            f"[classical] coupling: unknown kind {kind!r} (choose from {', '.join(COUPLING_KINDS)})"
        )
        return None
    scale = classical.typed("coupling_scale", float, 1.0)
    if kind == "polynomial":
        text = classical.get("coupling_terms")
        if text is None:
            errors.append("[classical] coupling_terms required for polynomial coupling")
            return None
        terms = {}
        for token in text.split():
            parts = token.split(",")
            if len(parts) != 3:
                errors.append(
                    f"[classical] coupling_terms: token {token!r} is not q_exp,p_exp,coeff"
                )
                return None
            try:
                a, b, coeff = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                errors.append(f"[classical] coupling_terms: cannot parse {token!r}")
                return None
            terms[(a, b)] = terms.get((a, b), 0.0) + coeff
        try:
            base = ClassicalHamiltonian.polynomial(terms)
        except PhaseSpaceError as exc:
            errors.append(f"[classical] coupling_terms: {exc}")
            return None
    else:
        if "coupling_terms" in classical.raw:
            errors.append(
                f"[classical] coupling_terms only applies to the polynomial kind, not {kind!r}"
            )
        base = {
            "linear_p": ClassicalHamiltonian.linear_p,
            "linear_q": ClassicalHamiltonian.linear_q,
            "harmonic": ClassicalHamiltonian.harmonic,
        }[kind]()
    if scale is None:
        return base
    return base.scaled(scale)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config, reporting every error at once."""

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    errors: list[str] = []
    notices: list[str] = []
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            errors.append(f"unknown section: [{section}]")
    readers = {name: _SectionReader(parser, name, errors) for name in _KNOWN_KEYS}
    for name in ("quantum", "classical", "run"):
        if not readers[name].present:
            errors.append(f"missing section: [{name}]")
    for reader in readers.values():
        if reader.present:
            reader.check_keys()

    quantum, classical, run, out = (readers[n] for n in
                                    ("quantum", "classical", "run", "output"))

    amplitudes = None
    if quantum.get("amplitudes") is not None:
        amplitudes = _parse_amplitudes(quantum.raw["amplitudes"], errors, notices)
    observable = None
    if quantum.get("eigenvalues") is not None:
        try:
            values = [float(tok) for tok in _split_tokens(quantum.raw["eigenvalues"])]
            observable = MeasuredObservable(np.array(values))
        except ValueError as exc:
            errors.append(f"[quantum] eigenvalues: {exc}")
    if amplitudes is not None and observable is not None:
        if amplitudes.size != observable.dim:
            errors.append(
                f"[quantum] {amplitudes.size} amplitudes but {observable.dim} eigenvalues"
            )

    grid = None
    bounds = [classical.typed(k, float) for k in ("q_min", "q_max", "p_min", "p_max")]
    n_q = classical.typed("n_q", int)
    n_p = classical.typed("n_p", int)
    if all(b is not None for b in bounds) and n_q is not None and n_p is not None:
        try:
            grid = make_grid(*bounds, n_q, n_p)
        except PhaseSpaceError as exc:
            errors.append(f"[classical] grid: {exc}")
    q0 = classical.typed("q0", float, 0.0)
    p0 = classical.typed("p0", float, 0.0)
    sigma_q = classical.typed("sigma_q", float, 0.0)
    sigma_p = classical.typed("sigma_p", float, 0.0)
    coupling = _build_coupling(classical, errors)

    name = run.get("name", "run")
    mode = run.get("mode", "evolve")
    if mode not in MODES:
        errors.append(f"[run] mode: unknown mode {mode!r} (choose from {', '.join(MODES)})")
        mode = "evolve"
    dt = run.typed("dt", float)
    t_final = run.typed("t_final", float)
    cadence = run.typed("cadence", int, 1)
    hbar = run.typed("hbar", float, 1.0)
    tol_psd = run.typed("tol_psd", float, 1e-6)
    interpolation = run.get("interpolation")
    if interpolation is not None and interpolation not in ("bspline", "lagrange"):
        errors.append(f"[run] interpolation: unknown scheme {interpolation!r}")
        interpolation = None
    ansatz = run.get("ansatz", "correlated")
    if ansatz not in ANSATZ_KINDS:
        errors.append(f"[run] ansatz: unknown kind {ansatz!r} (choose from {', '.join(ANSATZ_KINDS)})")
        ansatz = "correlated"
    ansatz_time = run.typed("ansatz_time", float, 0.0)
    grid_cap = run.typed("grid_cap", int, 512)
    sigma_list: tuple[float, ...] = ()
    if run.get("sigma_list") is not None:
        try:
            sigma_list = tuple(float(tok) for tok in _split_tokens(run.raw["sigma_list"]))
        except ValueError:
            errors.append(f"[run] sigma_list: cannot parse {run.raw['sigma_list']!r}")

    if mode in ("evolve", "ansatz") and t_final is None:
        errors.append("[run] missing required key for this mode: t_final")
    if mode == "study":
        if not sigma_list:
            errors.append("[run] study mode needs sigma_list")
        elif any(b >= a for a, b in zip(sigma_list, sigma_list[1:])):
            errors.append("[run] sigma_list must be strictly decreasing")
        elif any(s <= 0.0 or not math.isfinite(s) for s in sigma_list):
            errors.append("[run] sigma_list entries must be positive and finite")
    if t_final is None:
        t_final = 0.0
    if dt is not None and not (dt > 0.0 and math.isfinite(dt)):
        errors.append(f"[run] dt must be positive and finite, got {dt!r}")
        dt = None
    if cadence is not None and cadence < 1:
        errors.append(f"[run] cadence must be >= 1, got {cadence}")
        cadence = 1
    if tol_psd is not None and tol_psd <= 0.0:
        errors.append(f"[run] tol_psd must be positive, got {tol_psd!r}")
        tol_psd = 1e-6

    directory = out.get("directory", ".")
    def _emit(key, default):
        value = out.get(key, default)
        return None if value in ("off", "none", "") else value
    emit_diagnostics = _emit("diagnostics", "diagnostics.csv")
    emit_violation = _emit("violation", "violation.csv")
    emit_margins = _emit("margins", "margins.csv")
    emit_study = _emit("study", "study.csv")
    snapshot_cadence = out.typed("snapshot_cadence", int, 0)
    if out.get("snapshots") is not None:
        snapshots_flag = out.raw["snapshots"].strip().lower()
        if snapshots_flag == "on":
            snapshot_cadence = snapshot_cadence or 1
        elif snapshots_flag == "final":
            snapshot_cadence = snapshot_cadence or -1   # final tick only
        elif snapshots_flag == "off":
            snapshot_cadence = 0
        else:
            errors.append(f"[output] snapshots: expected on|final|off, got {out.raw['snapshots']!r}")
    if snapshot_cadence is not None and snapshot_cadence < -1:
        errors.append(f"[output] snapshot_cadence must be >= -1, got {snapshot_cadence}")
        snapshot_cadence = 0

    # Cross-field physics checks only make sense once the pieces parsed.
    if not errors and grid is not None:
        if not grid.contains(q0, p0):
            errors.append(f"[classical] start point ({q0!r}, {p0!r}) outside the grid")
        min_q, min_p = 2.0 * grid.dq, 2.0 * grid.dp
        if sigma_q < min_q or sigma_p < min_p:
            errors.append(
                f"[classical] packet width ({sigma_q!r}, {sigma_p!r}) below the grid "
                f"resolution limit ({min_q!r}, {min_p!r}): 2 cells per width minimum"
            )
        if mode in ("evolve", "ansatz") and observable is not None and coupling is not None:
            sb = stability_bounds(grid, observable, coupling, hbar)
            if dt is not None and dt > sb.dt_max * (1.0 + 1e-12):
                errors.append(
                    f"[run] dt={dt!r} exceeds the stability bound {sb.dt_max!r} "
                    f"(binding constraint: {sb.binding})"
                )

    if errors:
        raise ConfigError(errors)

    user_keys = {f"{reader.section}.{key}": value
                 for reader in readers.values() for key, value in reader.raw.items()}
    return RunConfig(
        name=name, mode=mode,
        amplitudes=amplitudes, observable=observable, coupling=coupling,
        grid=grid, q0=q0, p0=p0, sigma_q=sigma_q, sigma_p=sigma_p,
        dt=dt, t_final=t_final, cadence=cadence, hbar=hbar, tol_psd=tol_psd,
        interpolation=interpolation, ansatz=ansatz, ansatz_time=ansatz_time,
        sigma_list=sigma_list, grid_cap=grid_cap,
        directory=directory,
        emit_diagnostics=emit_diagnostics, emit_violation=emit_violation,
        emit_margins=emit_margins, emit_study=emit_study,
        snapshot_cadence=snapshot_cadence,
        user_keys=user_keys, notices=tuple(notices),
    )


def describe(config: RunConfig) -> str:
    """Human-readable summary: resolved keys, stability, memory, work plan."""

    lines = [f"scenario: {config.name} (mode={config.mode})"]
    for notice in config.notices:
        lines.append(f"notice: {notice}")
    lines.append("")
    lines.append("resolved configuration:")
    section = None
    for sec, key, value in config.resolved_items():
        if sec != section:
            lines.append(f"  [{sec}]")
            section = sec
        lines.append(f"  {key} = {value}")
    lines.append("")

    g = config.grid
    d = config.observable.dim
    sb = stability_bounds(g, config.observable, config.coupling, config.hbar)
    lines.append("stability bounds (largest admissible dt):")
    lines.append(f"  transport along q: {sb.dt_transport_q!r}")
    lines.append(f"  transport along p: {sb.dt_transport_p!r}")
    lines.append(f"  phase rotation:    {sb.dt_phase!r}")
    lines.append(f"  binding constraint: {sb.binding} (dt_max = {sb.dt_max!r})")
    lines.append(f"  configured dt: {config.dt!r}")
    lines.append("")

    values_per_buffer = d * d * g.n_q * g.n_p * 2
    mib = values_per_buffer * 8 / 2 ** 20
    lines.append(
        f"memory estimate: {d}x{d} blocks on {g.n_q}x{g.n_p} nodes -> "
        f"{values_per_buffer} values per buffer ({mib:.1f} MiB, two buffers live)"
    )

    if config.mode == "study":
        lines.append(f"planned study jobs ({len(config.sigma_list)}):")
        for sigma in config.sigma_list:
            lines.append(f"  sigma = {sigma!r} (onset pass + decay pass, adaptive grid)")
    else:
        steps = max(1, round(config.t_final / config.dt)) if config.t_final > 0 else 0
        lines.append(f"estimated step count: {steps}")
        ticks = steps // config.cadence + 1 if steps else 1
        lines.append(f"diagnostic ticks: {ticks} (cadence {config.cadence})")
    return "\n".join(lines) + "\n"
