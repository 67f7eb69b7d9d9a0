"""
Declarative scenario configs and their runners.

A config is a TOML document. Every physical quantity is a string with an
explicit unit (see :mod:`nvgates.units`); counts, Fourier coefficients and
fidelities are plain numbers. ``load_config`` turns the document into a
:class:`Scenario` (validating every field) and ``run_scenario`` executes it,
writing delimiter-separated data files and returning a report dict.
"""

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli

from .bath import BathSpec, factorized_coherence, sample_census, trial_seed
from .control import PulseParams, axy8_schedule, required_f
from .effective import Thresholds, control_coupling, predicted_dip, validate_conditions
from .propagate import (
    EvolutionPolicy, ScheduleFamily, coherence, coherence_scan, evolve, fields_dressing,
    gate_fidelity, realized_gate, register_frames, rwa_comparison, target_gate,
)
from .effective import solve_magic_angle
from .system import ControlField, DecouplingField, FieldConfig, Nucleus, SpinRegister
from .units import UnitError, format_quantity, parse_quantity, parse_vector

TWO_PI = 2 * np.pi
SCENARIOS = ("resonance_scan", "gate_fidelity", "decoupling_check", "rwa_comparison",
             "bath_coherence", "sample_census")
GATE_KINDS = ("sigma_z_x", "sigma_z_y", "x", "y")


class ConfigError(ValueError):
    """Invalid config; the message names the offending field."""


@dataclass
class Scenario:
    kind: str
    label: str
    seed: int
    source: str
    register: Optional[SpinRegister]
    fields: Optional[FieldConfig]
    pulse: PulseParams
    policy: EvolutionPolicy
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Parsing helpers


class _Section:
    """Dict wrapper that tracks its dotted path and unused keys."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected a table")
        self.data, self.path, self.used = data, path, set()

    def _where(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data

    def raw(self, key, default=None, required=False):
        if key not in self.data:
            if required:
                raise ConfigError(f"{self._where(key)}: missing required field")
            return default
        self.used.add(key)
        return self.data[key]

    def quantity(self, key, dimension, default=None, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            return parse_quantity(v, dimension, self._where(key))
        except UnitError as exc:
            raise ConfigError(str(exc)) from None

    def vector(self, key, dimension, default=None, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            return parse_vector(v, dimension, self._where(key))
        except UnitError as exc:
            raise ConfigError(str(exc)) from None

    def number(self, key, default=None, required=False, kind=float, lo=None, hi=None):
        v = self.raw(key, None, required)
        if v is None:
            return default
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self._where(key)}: expected a number, got {v!r}")
        if kind is int and not isinstance(v, int):
            raise ConfigError(f"{self._where(key)}: expected an integer, got {v!r}")
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise ConfigError(f"{self._where(key)}: {v} outside [{lo}, {hi}]")
        return kind(v)

    def direction(self, key, default=None):
        v = self.raw(key, None)
        if v is None:
            return default
        if (not isinstance(v, list) or len(v) != 3
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)):
            raise ConfigError(f"{self._where(key)}: expected three direction cosines")
        v = np.asarray(v, dtype=float)
        if np.linalg.norm(v) == 0:
            raise ConfigError(f"{self._where(key)}: direction must be non-zero")
        return v / np.linalg.norm(v)

    def choice(self, key, options, default=None):
        v = self.raw(key, default)
        if v not in options:
            raise ConfigError(f"{self._where(key)}: {v!r} is not one of {list(options)}")
        return v

    def sub(self, key, required=False):
        v = self.raw(key, None, required)
        return _Section({} if v is None else v, self._where(key))

    def items(self, key, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return []
        if not isinstance(v, list):
            raise ConfigError(f"{self._where(key)}: expected an array of tables")
        return [_Section(x, f"{self._where(key)}[{i}]") for i, x in enumerate(v)]

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self.path or 'config'}: unknown field(s) {extra}")


def _parse_register(sec):
    m_s = sec.choice("m_s", (1, -1), 1)
    nuclei = []
    for i, ns in enumerate(sec.items("nuclei", required=True)):
        pos = ns.vector("position", "length")
        hyp = ns.vector("hyperfine", "angular")
        a_z = ns.quantity("Az", "angular")
        label = str(ns.raw("label", str(i + 1)))
        for v, name in ((pos, "position"), (hyp, "hyperfine")):
            if v is not None and v.size != 3:
                raise ConfigError(f"{ns.path}.{name}: expected three components")
        if a_z is not None and hyp is not None:
            raise ConfigError(f"{ns.path}: give Az or hyperfine, not both")
        try:
            nuc = Nucleus.create(pos, hyp, label)
        except ValueError as exc:
            raise ConfigError(f"{ns.path}: {exc}") from None
        if a_z is not None:
            hv = nuc.hyperfine.copy()
            hv[2] = a_z
            nuc = Nucleus(hv, nuc.position, label=label)
        ns.finish()
        nuclei.append(nuc)
    couplings = None
    pairs = sec.items("couplings")
    if pairs:
        reg = SpinRegister(tuple(nuclei), m_s)
        couplings = reg.coupling_matrix()
        for ps in pairs:
            pair = ps.raw("pair", required=True)
            if (not isinstance(pair, list) or len(pair) != 2 or len(set(pair)) != 2
                    or not all(isinstance(p, int) and 1 <= p <= len(nuclei) for p in pair)):
                raise ConfigError(f"{ps.path}.pair: expected two distinct nucleus numbers")
            j, k = pair[0] - 1, pair[1] - 1
            couplings[j, k] = couplings[k, j] = ps.quantity("g", "angular", required=True)
            ps.finish()
    sec.finish()
    return SpinRegister(tuple(nuclei), m_s, couplings)


def _parse_fields(sec):
    B_z = sec.quantity("Bz", "field", required=True)
    if B_z <= 0:
        raise ConfigError(f"{sec.path}.Bz: must be positive")
    decouple = None
    if sec.has("decouple"):
        ds = sec.sub("decouple")
        axis = ds.direction("axis", np.array([1.0, 0.0, 0.0]))
        if ds.has("Delta"):
            if ds.has("amplitude") or ds.has("freq"):
                raise ConfigError(f"{ds.path}: give Delta or amplitude/freq, not both")
            delta = ds.quantity("Delta", "angular")
            try:
                amp, freq = solve_magic_angle(B_z, delta, tuple(axis))
            except ValueError as exc:
                raise ConfigError(f"{ds.path}.Delta: {exc}") from None
        else:
            amp = ds.quantity("amplitude", "angular", required=True)
            freq = ds.quantity("freq", "angular", required=True)
        ds.finish()
        decouple = DecouplingField(amp, freq, axis)
    sec.finish()
    try:
        return FieldConfig(B_z, decouple)
    except ValueError as exc:
        raise ConfigError(f"{sec.path}: {exc}") from None


def _parse_pulse(sec):
    p = PulseParams(
        rabi=sec.quantity("rabi", "angular", PulseParams.rabi),
        detuning=sec.quantity("detuning", "angular", 0.0),
        rabi_error=sec.quantity("rabi_error", "fraction", 0.0),
        instantaneous=bool(sec.raw("instantaneous", False)),
    )
    sec.finish()
    return p


def _parse_policy(sec):
    kw = {}
    if sec.has("dt_max"):
        kw["dt_max"] = sec.quantity("dt_max", "time")
    if sec.has("coupling_dt"):
        kw["coupling_dt"] = sec.quantity("coupling_dt", "time")
    if sec.has("steps_per_period"):
        kw["steps_per_period"] = sec.number("steps_per_period", kind=int, lo=1)
    if sec.has("phase_cap"):
        kw["phase_cap"] = sec.number("phase_cap", lo=1e-6)
    if sec.has("order"):
        kw["order"] = sec.choice("order", (2, 4))
    if sec.has("frame"):
        kw["frame"] = sec.choice("frame", ("electron_rotating", "nuclear_interaction"))
    if sec.has("split_couplings"):
        kw["split_couplings"] = bool(sec.raw("split_couplings"))
    sec.finish()
    return EvolutionPolicy(**kw)


def _target_index(sec, key, register):
    j = sec.number(key, kind=int, required=True)
    if not 1 <= j <= register.n_nuclei:
        raise ConfigError(f"{sec.path}.{key}: nucleus {j} not in the register")
    return j - 1


def _periods(sec, register=None):
    """n_periods or a duration converted later; exactly one is required."""
    n = sec.number("n_periods", kind=int, lo=1)
    dur = sec.quantity("duration", "time")
    if (n is None) == (dur is None):
        raise ConfigError(f"{sec.path}: give exactly one of n_periods, duration")
    if dur is not None and dur <= 0:
        raise ConfigError(f"{sec.path}.duration: must be positive")
    return n, dur


def _grid(sec):
    points = sec.number("points", kind=int, required=True)
    if points < 1:
        raise ConfigError(f"{sec.path}.points: frequency grid is empty")
    width = sec.quantity("half_width", "angular", required=True)
    if width < 0 or (points > 1 and width == 0):
        raise ConfigError(f"{sec.path}.half_width: must be positive")
    return points, width


def _checks(sec, spec):
    """Read check thresholds; ``spec`` maps key -> (kind, default)."""
    out = {}
    for key, (kind, default) in spec.items():
        if kind == "number":
            out[key] = sec.number(key, default)
        elif kind == "range":
            v = sec.raw(key, default)
            if (not isinstance(v, list) or len(v) != 2
                    or not all(isinstance(x, (int, float)) for x in v) or v[0] > v[1]):
                raise ConfigError(f"{sec.path}.{key}: expected [low, high]")
            out[key] = [float(x) for x in v]
        else:
            out[key] = sec.quantity(key, kind, default)
    sec.finish()
    return out


# ---------------------------------------------------------------------------
# Scenario-specific sections


def _parse_resonance(root, sc):
    s = root.sub("scan", required=True)
    j = _target_index(s, "target", sc.register)
    flavor = s.choice("flavor", ("symmetric", "antisymmetric"), "symmetric")
    harmonic = s.number("harmonic", 1, kind=int, lo=1)
    n, dur = _periods(s)
    points, width = _grid(s)
    curves = []
    for cs in s.items("curves", required=True):
        phase = cs.quantity("phase", "angle")
        f = cs.number("f")
        if (phase is None) == (f is None):
            raise ConfigError(f"{cs.path}: give exactly one of phase, f")
        curves.append({"phase": phase, "f": f})
        cs.finish()
    if not curves:
        raise ConfigError(f"{s.path}.curves: at least one curve is required")
    quoted = s.quantity("quoted_resonance", "angular")
    s.finish()
    sc.params.update(target=j, flavor=flavor, harmonic=harmonic, n_periods=n, duration=dur,
                     points=points, half_width=width, curves=curves, quoted=quoted)
    sc.params["checks"] = _checks(root.sub("checks"), {
        "height_tol": ("number", 0.05), "resonance_tol": ("fraction", 0.005)})


def _parse_decoupling(root, sc):
    s = root.sub("scan", required=True)
    targets = s.raw("targets", required=True)
    n = sc.register.n_nuclei
    if (not isinstance(targets, list) or not targets
            or not all(isinstance(t, int) and 1 <= t <= n for t in targets)):
        raise ConfigError(f"{s.path}.targets: expected nucleus numbers 1..{n}")
    quoted = s.vector("quoted_resonances", "angular")
    if quoted is not None and quoted.size != len(targets):
        raise ConfigError(f"{s.path}.quoted_resonances: one value per target required")
    per, dur = _periods(s)
    points, width = _grid(s)
    sc.params.update(
        targets=[t - 1 for t in targets], quoted=quoted, n_periods=per, duration=dur,
        points=points, half_width=width,
        flavor=s.choice("flavor", ("symmetric", "antisymmetric"), "symmetric"),
        harmonic=s.number("harmonic", 1, kind=int, lo=1),
        f=s.number("f", required=True),
    )
    s.finish()
    c = root.sub("checks")
    chk = {}
    for key in ("overlap", "distorted", "unchanged"):
        v = c.raw(key, [])
        if not isinstance(v, list) or not all(isinstance(t, int) and t - 1 in sc.params["targets"]
                                              for t in v):
            raise ConfigError(f"{c.path}.{key}: expected scanned nucleus numbers")
        chk[key] = [t - 1 for t in v]
    chk.update(overlap_tol=c.number("overlap_tol", 0.02),
               distortion_min=c.number("distortion_min", 0.05),
               resonance_tol=c.quantity("resonance_tol", "fraction", 0.005))
    c.finish()
    sc.params["checks"] = chk


def _parse_gates(root, sc):
    s = root.sub("gates", required=True)
    angle = s.quantity("angle", "angle", np.pi / 2)
    kinds = s.raw("kinds", list(GATE_KINDS))
    if not isinstance(kinds, list) or not kinds or any(k not in GATE_KINDS for k in kinds):
        raise ConfigError(f"{s.path}.kinds: expected a subset of {list(GATE_KINDS)}")
    harmonic = s.number("harmonic", 1, kind=int, lo=1)
    targets = []
    for ts in s.items("targets", required=True):
        j = _target_index(ts, "spin", sc.register)
        n = ts.number("n_periods", kind=int, required=True, lo=1)
        quoted = ts.raw("quoted")
        if quoted is not None and (not isinstance(quoted, list) or len(quoted) != 2 * len(kinds)):
            raise ConfigError(f"{ts.path}.quoted: expected {2 * len(kinds)} fidelities "
                              "(F-, F+ per gate kind)")
        targets.append({"spin": j, "n_periods": n, "quoted": quoted})
        ts.finish()
    if not targets:
        raise ConfigError(f"{s.path}.targets: at least one target is required")
    s.finish()
    sc.params.update(angle=angle, kinds=kinds, harmonic=harmonic, targets=targets)
    sc.params["checks"] = _checks(root.sub("checks"), {
        "min_fidelity": ("number", 0.99), "quoted_tol": ("number", 0.01)})


def _parse_rwa(root, sc):
    s = root.sub("rwa", required=True)
    times = s.vector("times", "time", required=True)
    if times.size == 0 or np.any(times < 0):
        raise ConfigError(f"{s.path}.times: expected non-negative times")
    dec = sc.fields.decouple
    if dec is None:
        raise ConfigError("fields.decouple: required for rwa_comparison")
    sc.params.update(times=np.unique(times), misalignment=s.quantity("misalignment", "angle", 0.0))
    s.finish()
    sc.params["checks"] = _checks(root.sub("checks"), {
        "refined_min": ("number", 0.999), "refined_at": ("time", None),
        "rwa_at": ("time", None)})
    for key in ("refined_at", "rwa_at"):
        t = sc.params["checks"][key]
        if t is not None and not np.any(np.isclose(sc.params["times"], t)):
            raise ConfigError(f"checks.{key}: time not on rwa.times")


def _parse_bath(root, sc):
    g = root.sub("gate", required=True)
    j = _target_index(g, "spin", sc.register)
    sc.params.update(
        target=j, kind=g.choice("kind", GATE_KINDS[:2], "sigma_z_x"),
        angle=g.quantity("angle", "angle", required=True),
        n_periods=g.number("n_periods", kind=int, required=True, lo=1),
        harmonic=g.number("harmonic", 1, kind=int, lo=1),
    )
    g.finish()
    b = root.sub("bath", required=True)
    spec = dict(
        samples=b.number("samples", kind=int, required=True, lo=1),
        n_nuclei=b.number("n_nuclei", kind=int, lo=0),
        abundance=b.quantity("abundance", "fraction", 0.0027),
        r_min=b.quantity("r_min", "length", required=True),
        r_max=b.quantity("r_max", "length", required=True),
    )
    if not 0 <= spec["r_min"] < spec["r_max"]:
        raise ConfigError(f"{b.path}: need 0 <= r_min < r_max")
    b.finish()
    sc.params["bath"] = spec
    sc.params["checks"] = _checks(root.sub("checks"), {
        "register_L": ("number", None), "register_tol": ("number", 0.002),
        "mean_range": ("range", [0.0, 1.0])})


def _parse_census(root, sc):
    s = root.sub("census", required=True)
    spec = dict(
        trials=s.number("trials", kind=int, required=True, lo=1),
        abundance=s.quantity("abundance", "fraction", required=True),
        r_min=s.quantity("r_min", "length", 0.0),
        r_max=s.quantity("r_max", "length", required=True),
        mode=s.choice("mode", ("isolated", "pairwise"), "isolated"),
    )
    crit = []
    for cs in s.items("criteria", required=True):
        crit.append(dict(
            name=str(cs.raw("name", required=True)),
            dA_min=cs.quantity("dA_min", "angular", 0.0),
            A_max=cs.quantity("A_max", "angular"),
            quoted=cs.quantity("quoted", "fraction"),
            factor=cs.number("factor", 3.0, lo=1.0),
        ))
        cs.finish()
    s.finish()
    spec["criteria"] = crit
    sc.params["census"] = spec
    root.sub("checks").finish()


_PARSERS = {
    "resonance_scan": _parse_resonance,
    "decoupling_check": _parse_decoupling,
    "gate_fidelity": _parse_gates,
    "rwa_comparison": _parse_rwa,
    "bath_coherence": _parse_bath,
    "sample_census": _parse_census,
}
_NEEDS_REGISTER = ("resonance_scan", "decoupling_check", "gate_fidelity", "bath_coherence")


def parse_config(data, source="<config>"):
    """Validate a config mapping and build the :class:`Scenario`."""
    root = _Section(data, "")
    kind = root.choice("scenario", SCENARIOS, None)
    label = root.raw("label", required=True)
    if not isinstance(label, str) or not label:
        raise ConfigError("label: expected a non-empty string")
    seed = root.number("seed", 0, kind=int, lo=0)
    root.raw("description")
    register = _parse_register(root.sub("register")) if root.has("register") else None
    if kind in _NEEDS_REGISTER and register is None:
        raise ConfigError("register: missing required table")
    fields = _parse_fields(root.sub("fields")) if root.has("fields") else None
    if kind != "sample_census" and fields is None:
        raise ConfigError("fields: missing required table")
    pulse = _parse_pulse(root.sub("pulse"))
    policy = _parse_policy(root.sub("policy"))
    sc = Scenario(kind, label, seed, source, register, fields, pulse, policy)
    _PARSERS[kind](root, sc)
    root.finish()
    return sc


def load_config(path):
    """Read and validate a TOML config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_config(data, str(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# Running


class _Report:
    def __init__(self, sc, out_dir):
        self.sc = sc
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.quantities = {}
        self.tolerances = {}
        self.checks = []
        self.diagnostics = []
        self.files = []
        self.notes = []

    def quantity(self, name, value, tol=None):
        self.quantities[name] = float(value)
        if tol is not None:
            self.tolerances[name] = float(tol)

    def check(self, name, value, ok, requirement):
        self.checks.append({"name": name, "value": _jsonable(value),
                            "requirement": requirement, "ok": bool(ok)})

    def write(self, name, header, rows, fmt="%.10g"):
        path = self.out / name
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(v if isinstance(v, str) else fmt % v for v in row) + "\n")
        self.files.append(name)
        return path

    def as_dict(self, status, wall):
        return {
            "scenario": self.sc.kind,
            "label": self.sc.label,
            "config": self.sc.source,
            "seed": self.sc.seed,
            "status": status,
            "quantities": self.quantities,
            "tolerances": self.tolerances,
            "checks": self.checks,
            "diagnostics": self.diagnostics,
            "files": self.files,
            "notes": self.notes,
            "wall_time_s": round(wall, 3),
        }


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _hz(w):
    """Angular frequency → ordinary frequency in Hz for data files."""
    return w / TWO_PI


def _diagnose(rep, register, fields, f=None, target=None, name=""):
    dp = fields_dressing(fields)
    rows = validate_conditions(register, dp, f=f, target=target, omega=fields.larmor)
    for r in rows:
        r["context"] = name
    rep.diagnostics.extend(rows)


def _frames(sc):
    return register_frames(sc.register, sc.fields, fields_dressing(sc.fields))


def _extremum(L, grid, centre):
    """Local extremum of |L - median(L)| closest to ``centre``.

    Neighbouring lines can dominate a window, so the global extremum is not
    used; ties in distance go to the larger deviation.
    """
    dev = np.abs(L - np.median(L))
    pad = np.concatenate([[-np.inf], dev, [-np.inf]])
    peaks = np.nonzero((dev >= pad[:-2]) & (dev >= pad[2:]))[0]
    return int(min(peaks, key=lambda i: (abs(grid[i] - centre), -dev[i])))


def _n_periods(n, duration, tau):
    return n if n is not None else max(1, int(round(duration / tau)))


def _run_resonance(sc, rep, workers):
    p = sc.params
    j = p["target"]
    fr = _frames(sc)[j]
    tau = TWO_PI * p["harmonic"] / fr.omega_j
    n = _n_periods(p["n_periods"], p["duration"], tau)
    t = n * tau
    grid = fr.omega_j + np.linspace(-p["half_width"], p["half_width"], p["points"])
    centre = int(np.argmin(np.abs(grid - fr.omega_j)))
    step = grid[1] - grid[0] if len(grid) > 1 else np.inf
    rep.quantity("omega_j_Hz", _hz(fr.omega_j), 1e-6 * _hz(fr.omega_j))
    rep.quantity("g_j_Hz", _hz(fr.g_j), 1e-6 * _hz(fr.g_j))
    rep.quantity("n_periods", n, 0)
    rep.quantity("time_s", t, 1e-12)
    if p["quoted"] is not None:
        rel = abs(fr.omega_j - p["quoted"]) / p["quoted"]
        rep.check("resonance_vs_quoted", rel, rel <= p["checks"]["resonance_tol"],
                  f"relative deviation <= {p['checks']['resonance_tol']}")
    columns, names = [_hz(grid)], ["drive_freq_Hz"]
    for i, c in enumerate(p["curves"]):
        f = c["f"] if c["f"] is not None else required_f(c["phase"], fr.g_j, n, tau,
                                                          sc.register.m_s)
        fam = ScheduleFamily(p["flavor"], p["harmonic"], f, n, sc.pulse)
        data = coherence_scan(sc.register, sc.fields, fam, grid, sc.policy, workers)
        L = data[:, 1]
        columns.append(L)
        names.append(f"L_curve{i + 1}")
        expect = predicted_dip(f, fr.g_j, t, sc.register.m_s)
        rep.quantity(f"curve{i + 1}.f", f, 1e-9)
        rep.quantity(f"curve{i + 1}.L_at_resonance", L[centre], 1e-3)
        rep.quantity(f"curve{i + 1}.L_predicted", expect, 1e-9)
        tol = p["checks"]["height_tol"]
        rep.check(f"curve{i + 1}.height", L[centre], abs(L[centre] - expect) <= tol,
                  f"|L - ({expect:.4f})| <= {tol}")
        peak = _extremum(L, grid, fr.omega_j)
        off = abs(grid[peak] - fr.omega_j)
        rep.check(f"curve{i + 1}.extremum_position", _hz(off), off <= 1.01 * step,
                  "extremum within one grid step of the predicted resonance")
        if not np.all(np.abs(L) <= 1 + 1e-9):
            rep.check(f"curve{i + 1}.bounded", float(np.max(np.abs(L))), False, "|L| <= 1")
        _diagnose(rep, sc.register, sc.fields, f, j, f"curve{i + 1}")
    rep.write("scan.csv", names, np.column_stack(columns))


def _run_decoupling(sc, rep, workers):
    p = sc.params
    chk = p["checks"]
    frames = _frames(sc)
    uncoupled = sc.register.without_couplings()
    rows = []
    diffs, lobe = {}, {}
    for i, j in enumerate(p["targets"]):
        fr = frames[j]
        tau = TWO_PI * p["harmonic"] / fr.omega_j
        n = _n_periods(p["n_periods"], p["duration"], tau)
        grid = fr.omega_j + np.linspace(-p["half_width"], p["half_width"], p["points"])
        fam = ScheduleFamily(p["flavor"], p["harmonic"], p["f"], n, sc.pulse)
        on = coherence_scan(sc.register, sc.fields, fam, grid, sc.policy, workers)[:, 1]
        off = coherence_scan(uncoupled, sc.fields, fam, grid, sc.policy, workers)[:, 1]
        rows += [(j + 1, _hz(w), a, b) for w, a, b in zip(grid, on, off)]
        diffs[j] = float(np.max(np.abs(on - off)))
        # main lobe of the line: |ω - ω_j| <= 2π/t
        near = np.abs(grid - fr.omega_j) <= TWO_PI / (n * tau) * (1 + 1e-9)
        lobe[j] = float(np.max(np.abs(on - off)[near]))
        tag = f"spin{j + 1}"
        rep.quantity(f"{tag}.omega_j_Hz", _hz(fr.omega_j), 1e-6 * _hz(fr.omega_j))
        rep.quantity(f"{tag}.n_periods", n, 0)
        rep.quantity(f"{tag}.max_abs_diff", diffs[j], 1e-3)
        peak = _extremum(on, grid, fr.omega_j)
        step = grid[1] - grid[0] if len(grid) > 1 else np.inf
        rep.quantity(f"{tag}.peak_Hz", _hz(grid[peak]), _hz(step))
        if p["quoted"] is not None:
            q = p["quoted"][i]
            rel = abs(fr.omega_j - q) / q
            rep.check(f"{tag}.resonance_vs_quoted", rel, rel <= chk["resonance_tol"],
                      f"relative deviation <= {chk['resonance_tol']}")
            rel = abs(grid[peak] - q) / q
            rep.check(f"{tag}.scan_extremum_vs_quoted", rel, rel <= chk["resonance_tol"],
                      f"relative deviation <= {chk['resonance_tol']}")
        _diagnose(rep, sc.register, sc.fields, p["f"], j, tag)
    for j in chk["overlap"]:
        rep.check(f"spin{j + 1}.coupled_vs_uncoupled", diffs[j], diffs[j] <= chk["overlap_tol"],
                  f"max |L_on - L_off| <= {chk['overlap_tol']}")
    for j in chk["unchanged"]:
        rep.quantity(f"spin{j + 1}.max_abs_diff_main_lobe", lobe[j], 1e-3)
        rep.check(f"spin{j + 1}.peak_unchanged", lobe[j], lobe[j] <= chk["overlap_tol"],
                  f"max |L_on - L_off| <= {chk['overlap_tol']} within the main lobe")
    for j in chk["distorted"]:
        rep.check(f"spin{j + 1}.distorted", diffs[j], diffs[j] > chk["distortion_min"],
                  f"max |L_on - L_off| > {chk['distortion_min']}")
    rep.write("scan.csv", ["target", "drive_freq_Hz", "L_coupled", "L_uncoupled"], rows)


def gate_protocol(register, fields, j, kind, sign, angle, n_periods, pulse, harmonic=1):
    """Fields, pulse sequence and target unitary for one gate on nucleus ``j``.

    ``kind`` is one of ``sigma_z_x``, ``sigma_z_y`` (conditional rotations
    from the AXY modulation) or ``x``, ``y`` (rf-driven rotations under an
    f = 0 decoupling train). ``sign`` = +1 gives exp(-i angle G), -1 its
    inverse.
    """
    dp = fields_dressing(fields)
    fr = register_frames(register, fields, dp)[j]
    tau = TWO_PI * harmonic / fr.omega_j
    t = n_periods * tau
    axis = kind[-1]
    if kind.startswith("sigma_z"):
        f = sign * required_f(angle, fr.g_j, n_periods, tau, register.m_s)
        flavor = "symmetric" if axis == "x" else "antisymmetric"
        if axis == "y":
            f = -f
        seq = axy8_schedule(flavor, tau, harmonic, f, n_periods, pulse)
        gate_fields = fields
        gen = "entangling"
    else:
        if dp is None:
            raise ValueError("single-qubit gates need the decoupling field")
        seq = axy8_schedule("symmetric", tau, harmonic, 0.0, n_periods, pulse)
        kappa = control_coupling(register.nuclei[j].hyperfine, dp, m_s=register.m_s)
        lam = sign * angle / (kappa * t)
        gate_fields = fields.with_control(
            ControlField(lam, fr.omega_j, 0.0 if axis == "x" else np.pi / 2))
        gen = "single"
    target = target_gate(register, gate_fields, j, gen, axis, sign * angle)
    return gate_fields, seq, target


def _run_gates(sc, rep, workers):
    p = sc.params
    chk = p["checks"]
    rows = []
    walls = {}
    for tgt in p["targets"]:
        j = tgt["spin"]
        k = 0
        for kind in p["kinds"]:
            for sign, tag in ((1, "F-"), (-1, "F+")):
                gf, seq, target = gate_protocol(sc.register, sc.fields, j, kind, sign, p["angle"],
                                                tgt["n_periods"], sc.pulse, p["harmonic"])
                info = realized_gate(sc.register, gf, seq, sc.policy, return_info=True)
                F = gate_fidelity(info.unitary, target)
                name = f"spin{j + 1}.{kind}.{tag}"
                walls[name] = info.wall_time
                rows.append((name, F, tgt["n_periods"], seq.tau, seq.n_pulses))
                rep.quantity(name, F, 1e-4)
                rep.check(f"{name}.min", F, F >= chk["min_fidelity"], f">= {chk['min_fidelity']}")
                if tgt["quoted"] is not None:
                    q = tgt["quoted"][k]
                    rep.check(f"{name}.quoted", F, abs(F - q) <= chk["quoted_tol"],
                              f"|F - {q}| <= {chk['quoted_tol']}")
                k += 1
        rep.quantity(f"spin{j + 1}.gate_time_s", tgt["n_periods"] * seq.tau, 1e-12)
        fr = _frames(sc)[j]
        f = required_f(p["angle"], fr.g_j, tgt["n_periods"], seq.tau, sc.register.m_s)
        _diagnose(rep, sc.register, sc.fields, f, j, f"spin{j + 1}")
    rep.write("gates.csv", ["gate", "fidelity", "n_periods", "tau_s", "pulses"],
              [(r[0], r[1], r[2], r[3], r[4]) for r in rows], fmt="%.10g")
    rep.notes.append("wall_time_s per gate: " + json.dumps({k: round(v, 2) for k, v in walls.items()}))


def _run_rwa(sc, rep, workers):
    p = sc.params
    chk = p["checks"]
    dec = sc.fields.decouple
    dp = fields_dressing(sc.fields)
    res = rwa_comparison(sc.fields.B_z, dp.Delta, p["misalignment"], p["times"], sc.policy)
    labels = [k for k in res if isinstance(res[k], dict)]
    header = ["t_s"]
    cols = [res["t"]]
    for lab in labels:
        header += [f"refined{lab}", f"rwa{lab}"]
        cols += [res[lab]["refined"], res[lab]["rwa"]]
    rep.write("fidelity.csv", header, np.column_stack(cols))
    refined = np.min([res[lab]["refined"] for lab in labels], axis=0)
    rwa = np.min([res[lab]["rwa"] for lab in labels], axis=0)
    for i, t in enumerate(res["t"]):
        rep.quantity(f"refined_min@{t:.6g}s", refined[i], 1e-6)
        rep.quantity(f"rwa_min@{t:.6g}s", rwa[i], 1e-6)
    if chk["refined_at"] is not None:
        i = int(np.argmin(np.abs(res["t"] - chk["refined_at"])))
        rep.check("refined_fidelity", refined[i], refined[i] >= chk["refined_min"],
                  f">= {chk['refined_min']} at t = {res['t'][i]:.4g} s (worst direction)")
        if chk["rwa_at"] is not None:
            k = int(np.argmin(np.abs(res["t"] - chk["rwa_at"])))
            rep.check("rwa_below_refined", rwa[k], rwa[k] < refined[i],
                      f"RWA at {res['t'][k]:.4g} s < refined at {res['t'][i]:.4g} s "
                      f"({refined[i]:.6f})")
    rep.quantity("omega_x_Hz", _hz(dec.amplitude), 1e-6 * _hz(dec.amplitude))
    rep.quantity("omega_rf_Hz", _hz(dec.freq), 1e-6 * _hz(dec.freq))
    rep.diagnostics.extend(
        dict(r, context="dressing")
        for r in validate_conditions(SpinRegister(()), dp, omega=sc.fields.larmor))


def _run_bath(sc, rep, workers):
    p = sc.params
    chk = p["checks"]
    j = p["target"]
    fr = _frames(sc)[j]
    tau = TWO_PI * p["harmonic"] / fr.omega_j
    pulse = replace(sc.pulse, instantaneous=True)
    sign = 1
    gf, seq, target = gate_protocol(sc.register, sc.fields, j, p["kind"], sign, p["angle"],
                                    p["n_periods"], pulse, p["harmonic"])
    info = evolve(sc.register, gf, seq, sc.policy, return_info=True)
    from .bath import electron_coherence_magnitude
    L_reg = coherence(info.unitary)
    rep.quantity("register_L", L_reg, 1e-5)
    rep.quantity("register_L_magnitude", electron_coherence_magnitude(info.unitary), 1e-5)
    rep.quantity("gate_fidelity", gate_fidelity(realized_gate(sc.register, gf, seq, sc.policy),
                                                target), 1e-5)
    if chk["register_L"] is not None:
        rep.check("register_L", L_reg, abs(L_reg - chk["register_L"]) <= chk["register_tol"],
                  f"|L - {chk['register_L']}| <= {chk['register_tol']}")
    b = p["bath"]
    exclude = tuple(tuple(n.position) for n in sc.register.nuclei if n.position is not None)
    rows, totals = [], []
    for s in range(b["samples"]):
        seed = trial_seed(sc.seed, s)
        spec = BathSpec(seed, b["abundance"], b["r_min"], b["r_max"], b["n_nuclei"], exclude)
        nuc = spec.nuclei()
        L_b = factorized_coherence(nuc, gf, seq, m_s=sc.register.m_s, policy=sc.policy)
        d = np.array([np.linalg.norm(n.position) for n in nuc]) if nuc else np.zeros(1)
        total = abs(L_reg) * L_b
        totals.append(total)
        rows.append((s + 1, str(seed), L_b, total, d.min(), d.max(), len(nuc)))
        rep.quantity(f"sample{s + 1}.L", total, 1e-5)
    mean = float(np.mean(totals))
    rep.quantity("mean_L", mean, 1e-5)
    lo, hi = chk["mean_range"]
    rep.check("mean_L", mean, lo <= mean <= hi, f"in [{lo}, {hi}]")
    rep.write("bath.csv", ["sample", "seed", "L_bath", "L", "d_min_nm", "d_max_nm", "n_nuclei"],
              rows)
    rep.notes.append("bath nuclei evolve independently under electron-conditioned propagators; "
                     "register-bath and bath-bath couplings are dropped")
    f = required_f(p["angle"], fr.g_j, p["n_periods"], tau, sc.register.m_s)
    _diagnose(rep, sc.register, sc.fields, f, j, "register")


def _run_census(sc, rep, workers):
    c = sc.params["census"]
    rows = []
    for cr in c["criteria"]:
        res = sample_census(sc.seed, c["trials"], c["abundance"], c["r_min"], c["r_max"],
                            cr["dA_min"], cr["A_max"], c["mode"], workers)
        name = cr["name"]
        rep.quantity(f"{name}.fraction", res.fraction, 3 * (res.ci_high - res.fraction) + 1e-12)
        rows.append((name, _hz(cr["dA_min"]),
                     "none" if cr["A_max"] is None else format_quantity(cr["A_max"], "kHz_x2pi"),
                     res.trials, res.hits, res.fraction, res.ci_low, res.ci_high))
        if cr["quoted"] is not None:
            ratio = res.fraction / cr["quoted"] if res.fraction > 0 else 0.0
            ok = 1 / cr["factor"] <= ratio <= cr["factor"]
            rep.check(f"{name}.fraction", res.fraction, ok,
                      f"within a factor {cr['factor']} of {cr['quoted']}")
    rep.write("census.csv", ["criterion", "dA_min_Hz", "A_max", "trials", "hits", "fraction",
                             "ci_low", "ci_high"], rows)
    rep.notes.append(f"mode={c['mode']} abundance={c['abundance']} shell=[{c['r_min']}, "
                     f"{c['r_max']}] nm")


_RUNNERS = {
    "resonance_scan": _run_resonance,
    "decoupling_check": _run_decoupling,
    "gate_fidelity": _run_gates,
    "rwa_comparison": _run_rwa,
    "bath_coherence": _run_bath,
    "sample_census": _run_census,
}


def run_scenario(sc, out_dir, workers=1):
    """Execute ``sc``, writing data files and ``report.json`` into ``out_dir``.

    The report is also written when the runner raises, with status
    ``error``, so partial artifacts are kept.
    """
    rep = _Report(sc, out_dir)
    t0 = time.perf_counter()
    try:
        _RUNNERS[sc.kind](sc, rep, workers)
    except Exception as exc:
        rep.notes.append(f"error: {type(exc).__name__}: {exc}")
        _dump(rep, "error", time.perf_counter() - t0)
        raise
    status = "pass" if all(c["ok"] for c in rep.checks) else "fail"
    return _dump(rep, status, time.perf_counter() - t0)


def _dump(rep, status, wall):
    d = rep.as_dict(status, wall)
    with open(rep.out / "report.json", "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=False, default=_jsonable)
        fh.write("\n")
    return d


# ---------------------------------------------------------------------------
# Report comparison


def report_diff(new, golden, tolerances=None, default_tol=1e-6):
    """Compare the quantities of two reports.

    Tolerances are looked up in ``tolerances``, then in the golden report's
    own ``tolerances`` table, then ``default_tol``.

    Returns
    -------
    (bool, list of str)
        Overall pass flag and one line per quantity.
    """
    if new.get("scenario") != golden.get("scenario"):
        raise ValueError(f"scenario mismatch: {new.get('scenario')!r} vs "
                         f"{golden.get('scenario')!r}")
    tolerances = tolerances or {}
    lines, ok = [], True
    gq, nq = golden.get("quantities", {}), new.get("quantities", {})
    for name, ref in gq.items():
        tol = tolerances.get(name, golden.get("tolerances", {}).get(name, default_tol))
        if name not in nq:
            ok = False
            lines.append(f"FAIL {name}: absent (golden {ref:.10g})")
            continue
        d = abs(nq[name] - ref)
        good = d <= tol or (math.isnan(ref) and math.isnan(nq[name]))
        ok &= good
        lines.append(f"{'PASS' if good else 'FAIL'} {name}: {nq[name]:.10g} vs {ref:.10g} "
                     f"(|d| = {d:.3g}, tol {tol:.3g})")
    for name in nq:
        if name not in gq:
            lines.append(f"NOTE {name}: not in golden report")
    return ok, lines
