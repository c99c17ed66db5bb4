"""YAML run configuration with unit-checked physical quantities.

Every physical quantity must be a string carrying its unit ("235 nm",
"1 mW", "200 MHz", "45 deg"). Bare numbers are accepted only for
dimensionless fields (counts, fractions, refractive indices, line
strengths). Units are handled by ``pint``.

Frequencies given in Hz for a detuning are cyclic and converted to rad/s
with a factor 2*pi; a value already in "rad/s" is taken as angular.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .atoms import AtomSpecies, load_atom
from .dynamics import InitialDistribution, SignalModel
from .errors import ValidationError
from .fiber import FiberSpec
from .trap import BeamSpec, GridSpec, TrapConfig, _jsonable, probe_beam

SCHEMA = "onftrap-config/1"

_DIMS = {
    "length": "[length]",
    "power": "[power]",
    "time": "[time]",
    "frequency": "1/[time]",
    "temperature": "[temperature]",
    "intensity": "[power]/[length]**2",
}


@lru_cache(maxsize=1)
def _ureg():
    import pint

    return pint.UnitRegistry()


class ConfigError(ValidationError):
    """Validation failure tied to a config field (and line, when known)."""

    def __init__(self, path, message, line=None):
        self.path = path
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{path}: {message}")


def parse_quantity(value, kind, path="value"):
    """SI magnitude of a unit-suffixed string. ``kind`` is a key of _DIMS or 'angle'."""
    if isinstance(value, bool) or not isinstance(value, str):
        raise ConfigError(path, f"expected a {kind} with a unit suffix (e.g. '1 mW'), got {value!r}")
    ureg = _ureg()
    try:
        q = ureg.Quantity(value.strip())
    except Exception as exc:  # pint raises a zoo of parse errors
        raise ConfigError(path, f"cannot parse {value!r}: {exc}") from None
    if not hasattr(q, "units") or q.unitless:
        raise ConfigError(path, f"{value!r} has no unit; physical quantities need one")
    if kind == "angle":
        if not q.check("[]"):
            raise ConfigError(path, f"{value!r} is not an angle")
        return _round(q.to("rad").magnitude)
    if not q.check(_DIMS[kind]):
        raise ConfigError(path, f"{value!r} is not a {kind}")
    return _round(q.to_base_units().magnitude)


def _round(x):
    # 15 significant digits: "235 nm" and "0.235 um" give the same float
    return float(f"{float(x):.15g}")


def parse_angular_frequency(value, path="value"):
    """rad/s from either a cyclic ("200 MHz") or an angular ("1.2e9 rad/s") value."""
    w = parse_quantity(value, "frequency", path)
    if "rad" in value:
        return w
    return 2 * np.pi * w


def _number(value, path, integer=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a plain number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value!r}")
    return int(value) if integer else float(value)


class _Section:
    """Dict accessor that tracks the dotted path and flags unknown keys."""

    def __init__(self, data, path, allowed):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(path, "expected a mapping")
        extra = set(data) - set(allowed)
        if extra:
            raise ConfigError(path, f"unknown keys {sorted(extra)}")
        self.data = data
        self.path = path

    def p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data and self.data[key] is not None

    def qty(self, key, kind, default=None):
        if not self.has(key):
            if default is None:
                raise ConfigError(self.p(key), "missing required field")
            return default
        return parse_quantity(self.data[key], kind, self.p(key))

    def num(self, key, default=None, **kw):
        if not self.has(key):
            if default is None:
                raise ConfigError(self.p(key), "missing required field")
            return default
        return _number(self.data[key], self.p(key), **kw)

    def choice(self, key, options, default):
        v = self.data.get(key, default)
        if v not in options:
            raise ConfigError(self.p(key), f"must be one of {list(options)}, got {v!r}")
        return v

    def flag(self, key, default):
        v = self.data.get(key, default)
        if not isinstance(v, bool):
            raise ConfigError(self.p(key), f"expected true/false, got {v!r}")
        return v


@dataclass(frozen=True)
class SimulationSettings:
    dt: float = 2e-9
    duration: float = 300e-6
    radial_only: bool = True
    pulses: tuple = ()  # ((t_on, t_off), ...) s; empty = single continuous run
    workers: int = 1


@dataclass(frozen=True)
class AnalysisSettings:
    bin_width: float = 2e-9
    moving_average: float = 400e-9
    start: float = 0.0
    band: tuple = (20e3, 400e3)
    min_prominence: float = 0.05
    fit_half_window: float | None = None
    lifetime_start: float = 20e-6
    lifetime_offset: bool = True
    taper: str = "none"
    max_peaks: int = 2
    smooth_bins: int = 1


@dataclass(frozen=True)
class RunConfig:
    trap: TrapConfig
    dist: InitialDistribution
    signal: SignalModel
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    sensitivity_fraction: float = 0.05
    angle_scale: float = np.pi / 2
    harmonic_window: float = 0.1
    out_dir: str = "out"
    seed: int = 0
    atom_data: str = "bundled"

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed), dist=replace(self.dist, seed=int(seed)))

    def with_probe(self, on: bool) -> "RunConfig":
        return self if on else replace(self, trap=self.trap.without_probe())

    def canonical(self) -> dict:
        """SI-normalized, JSON-ready view; the basis of the digest."""
        d = _jsonable(asdict(self))
        d.pop("out_dir")
        d["schema"] = SCHEMA
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# --- parsing -----------------------------------------------------------------

_TOP = ("schema", "seed", "out_dir", "atom", "fiber", "grid", "trap", "beams",
        "distribution", "signal", "simulation", "analysis", "sensitivity")


def _parse_atom(sec: _Section, base: Path):
    data = sec.data.get("data", "bundled")
    if data == "bundled":
        atom = load_atom()
    else:
        path = Path(data)
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise FileNotFoundError(f"atomic data file not found: {path}")
        try:
            atom = load_atom(path)
        except (ValidationError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(sec.p("data"), f"malformed atomic data in {path}: {exc}") from None

    overrides = sec.data.get("overrides") or {}
    if not isinstance(overrides, dict):
        raise ConfigError(sec.p("overrides"), "expected a mapping of line label to fields")
    for label, fields_ in overrides.items():
        o = _Section(fields_, sec.p(f"overrides.{label}"),
                     ("effective_line_strength", "saturation_intensity", "linewidth", "wavelength"))
        try:
            atom.line(label)
        except KeyError:
            raise ConfigError(o.path, f"atom has no line {label!r}") from None
        ch = {}
        if o.has("effective_line_strength"):
            ch["effective_line_strength"] = o.num("effective_line_strength", minimum=0)
        if o.has("saturation_intensity"):
            ch["saturation_intensity"] = o.qty("saturation_intensity", "intensity")
        if o.has("linewidth"):
            ch["natural_linewidth"] = parse_angular_frequency(o.data["linewidth"], o.p("linewidth"))
        if o.has("wavelength"):
            ch["wavelength"] = o.qty("wavelength", "length")
        atom = atom.with_line(label, **ch)
    return atom, data


def _parse_fiber(sec: _Section) -> FiberSpec:
    radius = sec.qty("radius", "length")
    core = sec.data.get("core_index", "table")
    if core == "table" or core is None:
        core = None
    elif isinstance(core, dict):
        core = {parse_quantity(k, "length", sec.p(f"core_index[{k}]")):
                _number(v, sec.p(f"core_index[{k}]"), minimum=1.0) for k, v in core.items()}
    else:
        core = _number(core, sec.p("core_index"), minimum=1.0)
    return FiberSpec(radius, core, sec.num("cladding_index", 1.0, minimum=1.0))


def _parse_beam(d, path, atom: AtomSpecies) -> BeamSpec:
    sec = _Section(d, path, ("role", "wavelength", "power", "pol_angle", "standing_wave",
                              "backward_power", "backward_pol_angle", "detuning"))
    role = sec.choice("role", ("red", "blue", "probe"), None)
    power = sec.qty("power", "power")
    pol = sec.qty("pol_angle", "angle", 0.0)
    if role == "probe":
        if sec.has("wavelength"):
            raise ConfigError(sec.p("wavelength"), "probe wavelength follows from its detuning")
        if not sec.has("detuning"):
            raise ConfigError(sec.p("detuning"), "missing required field")
        return probe_beam(atom, power, pol, parse_angular_frequency(sec.data["detuning"], sec.p("detuning")))
    if sec.has("detuning"):
        raise ConfigError(sec.p("detuning"), "only the probe takes a detuning")
    standing = sec.flag("standing_wave", False)
    kw = {}
    if standing:
        kw["backward_power"] = sec.qty("backward_power", "power", power)
        kw["backward_pol_angle"] = sec.qty("backward_pol_angle", "angle", pol)
    return BeamSpec(role, sec.qty("wavelength", "length"), power, pol, standing, **kw)


def _parse_pulses(v, path):
    if v is None:
        return ()
    if not isinstance(v, list):
        raise ConfigError(path, "expected a list of [on, off] pairs")
    out = []
    for i, pair in enumerate(v):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"{path}[{i}]", "expected [on, off]")
        a = parse_quantity(pair[0], "time", f"{path}[{i}][0]")
        b = parse_quantity(pair[1], "time", f"{path}[{i}][1]")
        if not b > a:
            raise ConfigError(f"{path}[{i}]", "pulse must end after it starts")
        if out and a < out[-1][1]:
            raise ConfigError(f"{path}[{i}]", "pulses overlap or are out of order")
        out.append((a, b))
    return tuple(out)


def config_from_dict(d, base_dir=".") -> RunConfig:
    top = _Section(d, "", _TOP)
    if d.get("schema", SCHEMA) != SCHEMA:
        raise ConfigError("schema", f"unsupported schema {d.get('schema')!r} (want {SCHEMA})")
    base = Path(base_dir)
    seed = top.num("seed", 0, integer=True, minimum=0)

    atom, atom_data = _parse_atom(_Section(d.get("atom"), "atom", ("data", "overrides")), base)
    fiber = _parse_fiber(_Section(d.get("fiber"), "fiber", ("radius", "core_index", "cladding_index")))
    g = _Section(d.get("grid"), "grid", ("r_extent", "n_r", "n_phi"))
    grid = GridSpec(g.qty("r_extent", "length", 1.5e-6),
                    g.num("n_r", 600, integer=True, minimum=3),
                    g.num("n_phi", 360, integer=True, minimum=4))
    beams_raw = d.get("beams")
    if not isinstance(beams_raw, list) or not beams_raw:
        raise ConfigError("beams", "need a non-empty list of beams")
    beams = [_parse_beam(b, f"beams[{i}]", atom) for i, b in enumerate(beams_raw)]
    t = _Section(d.get("trap"), "trap", ("z_plane", "guard", "dispersive_factor", "harmonic_window"))
    trap = TrapConfig(
        fiber, atom, tuple(beams), grid,
        z_plane=t.qty("z_plane", "length", 0.0),
        guard_hz=t.qty("guard", "frequency", 1e9),
        dispersive_factor=t.num("dispersive_factor", 10.0, minimum=1.0),
    )

    s = _Section(d.get("distribution"), "distribution",
                 ("shape", "center_offset", "half_width", "velocity_model", "temperature",
                  "atom_count", "reference", "phi_reference"))
    dist = InitialDistribution(
        shape=s.choice("shape", ("flat", "delta"), "flat"),
        center_offset=s.qty("center_offset", "length", -80e-9),
        half_width=s.qty("half_width", "length", 75e-9),
        velocity_model=s.choice("velocity_model", ("zero", "thermal"), "zero"),
        temperature=s.qty("temperature", "temperature", 15e-6),
        atom_count=s.num("atom_count", 500, integer=True, minimum=1),
        seed=seed,
        reference=s.choice("reference", ("with_probe", "no_probe"), "with_probe"),
        phi_reference=s.choice("phi_reference", ("with_probe", "no_probe"), "no_probe"),
    )
    sg = _Section(d.get("signal"), "signal", ("decay_time", "normalization"))
    signal = SignalModel(sg.qty("decay_time", "time", 265e-6), sg.num("normalization", 1.0))

    sm = _Section(d.get("simulation"), "simulation", ("dt", "duration", "radial_only", "pulses", "workers"))
    sim = SimulationSettings(
        dt=sm.qty("dt", "time", 2e-9),
        duration=sm.qty("duration", "time", 300e-6),
        radial_only=sm.flag("radial_only", True),
        pulses=_parse_pulses(sm.data.get("pulses"), sm.p("pulses")),
        workers=sm.num("workers", 1, integer=True, minimum=1),
    )
    an = _Section(d.get("analysis"), "analysis",
                  ("bin_width", "moving_average", "start", "band", "min_prominence",
                   "fit_half_window", "lifetime_start", "lifetime_offset", "taper", "max_peaks",
                   "smooth_bins"))
    band = an.data.get("band", None)
    if band is None:
        band = (20e3, 400e3)
    else:
        if not isinstance(band, list) or len(band) != 2:
            raise ConfigError(an.p("band"), "expected [low, high]")
        band = tuple(parse_quantity(v, "frequency", f"{an.p('band')}[{i}]") for i, v in enumerate(band))
    analysis = AnalysisSettings(
        bin_width=an.qty("bin_width", "time", 2e-9),
        moving_average=an.qty("moving_average", "time", 400e-9),
        start=an.qty("start", "time", 0.0),
        band=band,
        min_prominence=an.num("min_prominence", 0.05, minimum=0.0),
        fit_half_window=an.qty("fit_half_window", "frequency") if an.has("fit_half_window") else None,
        lifetime_start=an.qty("lifetime_start", "time", 20e-6),
        lifetime_offset=an.flag("lifetime_offset", True),
        taper=an.choice("taper", ("none", "hann"), "none"),
        max_peaks=an.num("max_peaks", 2, integer=True, minimum=1),
        smooth_bins=an.num("smooth_bins", 1, integer=True, minimum=1),
    )
    if analysis.smooth_bins % 2 == 0:
        raise ConfigError(an.p("smooth_bins"), "must be odd")
    se = _Section(d.get("sensitivity"), "sensitivity", ("fraction", "angle_scale"))
    out_dir = d.get("out_dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("out_dir", "expected a path string")
    return RunConfig(
        trap=trap, dist=dist, signal=signal, simulation=sim, analysis=analysis,
        sensitivity_fraction=se.num("fraction", 0.05, minimum=0.0),
        angle_scale=se.qty("angle_scale", "angle", np.pi / 2),
        harmonic_window=t.num("harmonic_window", 0.1, minimum=0.0),
        out_dir=out_dir, seed=seed, atom_data=atom_data,
    )


def _line_of(text, path):
    """1-based line of the node at dotted ``path`` (with [i] indices), if findable."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    parts = []
    for chunk in path.replace("]", "").replace("[", ".").split("."):
        if chunk:
            parts.append(chunk)
    line = None
    for part in parts:
        if isinstance(node, yaml.MappingNode):
            hit = [(k, v) for k, v in node.value if k.value == part]
            if not hit:
                break
            line = hit[0][0].start_mark.line + 1
            node = hit[0][1]
        elif isinstance(node, yaml.SequenceNode) and part.isdigit() and int(part) < len(node.value):
            node = node.value[int(part)]
            line = node.start_mark.line + 1
        else:
            break
    return line


def loads_config(text, base_dir=".") -> RunConfig:
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<yaml>", str(exc).splitlines()[0],
                          mark.line + 1 if mark is not None else None) from None
    if not isinstance(d, dict):
        raise ConfigError("<root>", "config must be a mapping")
    try:
        return config_from_dict(d, base_dir)
    except ConfigError as exc:
        if exc.line is None:
            raise ConfigError(exc.path, exc.message, _line_of(text, exc.path)) from None
        raise


def load_config(path) -> RunConfig:
    """Parse a YAML config file; relative data paths resolve against its directory."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return loads_config(path.read_text(), path.parent)


def default_config_text() -> str:
    return resources.files("onftrap.data").joinpath("paper_defaults.yaml").read_text()


def default_config() -> RunConfig:
    """The bundled reference configuration."""
    return loads_config(default_config_text())
