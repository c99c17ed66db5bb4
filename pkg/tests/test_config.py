import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from onftrap import config as cf
from onftrap.config import ConfigError, parse_angular_frequency, parse_quantity


@pytest.mark.parametrize("text,kind,si", [
    ("235 nm", "length", 235e-9),
    ("1.5 um", "length", 1.5e-6),
    ("1 mW", "power", 1e-3),
    ("70 nW", "power", 70e-9),
    ("265 us", "time", 265e-6),
    ("200 MHz", "frequency", 200e6),
    ("15 uK", "temperature", 15e-6),
    ("25.0399 W/m^2", "intensity", 25.0399),
    ("2.50399 mW/cm^2", "intensity", 25.0399),
    ("90 deg", "angle", np.pi / 2),
    ("0.5 rad", "angle", 0.5),
])
def test_quantities_convert_to_si(text, kind, si):
    assert parse_quantity(text, kind) == pytest.approx(si, rel=1e-12)


@pytest.mark.parametrize("value,kind", [
    (235, "length"),           # bare number
    (1.0, "power"),
    ("235", "length"),         # string without unit
    ("1 mW", "length"),        # wrong dimension
    ("1 nm", "angle"),
    ("five nm", "length"),     # unparseable
    (True, "time"),
    (None, "time"),
])
def test_bad_quantities_rejected(value, kind):
    with pytest.raises(ConfigError):
        parse_quantity(value, kind, "x")


def test_angular_frequency_conversion():
    assert parse_angular_frequency("200 MHz") == pytest.approx(2 * np.pi * 200e6)
    assert parse_angular_frequency("1.2e9 rad/s") == pytest.approx(1.2e9)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_unit_prefixes_are_consistent(x):
    assert parse_quantity(f"{x} um", "length") == pytest.approx(parse_quantity(f"{x * 1e3} nm", "length"),
                                                                rel=1e-12)


def _doc():
    return yaml.safe_load(cf.default_config_text())


def test_default_config_contents(run_config):
    t = run_config.trap
    assert t.fiber.radius == pytest.approx(235e-9)
    roles = [b.role for b in t.beams]
    assert roles == ["red", "blue", "probe"]
    red = t.beams[0]
    assert red.standing_wave and red.backward_power == pytest.approx(1e-3)
    assert run_config.dist.atom_count == 500
    assert run_config.dist.center_offset == pytest.approx(-80e-9)
    assert run_config.signal.decay_time == pytest.approx(265e-6)
    assert run_config.simulation.radial_only
    assert t.atom.line("D2").effective_line_strength == 2.0


def test_bare_number_is_rejected_with_its_line():
    text = cf.default_config_text().replace("radius: 235 nm", "radius: 235")
    with pytest.raises(ConfigError) as ei:
        cf.loads_config(text)
    line = next(i + 1 for i, ln in enumerate(text.splitlines()) if ln.strip() == "radius: 235")
    assert ei.value.path == "fiber.radius"
    assert ei.value.line == line
    assert f"line {line}" in str(ei.value)


def test_nested_beam_error_reports_line():
    text = cf.default_config_text().replace("power: 3 mW", "power: 3 mV")
    with pytest.raises(ConfigError) as ei:
        cf.loads_config(text)
    assert ei.value.path == "beams[1].power"
    assert text.splitlines()[ei.value.line - 1].strip() == "power: 3 mV"


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(bogus=1),
    lambda d: d["fiber"].update(diameter="500 nm"),
    lambda d: d.update(beams=[]),
    lambda d: d["beams"][0].update(role="green"),
    lambda d: d["beams"][2].update(wavelength="780 nm"),
    lambda d: d["beams"][0].update(detuning="1 GHz"),
    lambda d: d["distribution"].update(atom_count=0),
    lambda d: d["distribution"].update(atom_count=2.5),
    lambda d: d["distribution"].update(shape="gauss"),
    lambda d: d["simulation"].update(pulses=[["0 us", "40 us"], ["30 us", "60 us"]]),
    lambda d: d["simulation"].update(pulses=[["40 us", "0 us"]]),
    lambda d: d["simulation"].update(radial_only="yes"),
    lambda d: d["analysis"].update(band=["20 kHz"]),
    lambda d: d["atom"]["overrides"].update(D3={"effective_line_strength": 1.0}),
    lambda d: d.update(schema="onftrap-config/0"),
    lambda d: d.update(seed=-1),
])
def test_invalid_configs(mutate):
    d = _doc()
    mutate(d)
    with pytest.raises(ConfigError):
        cf.config_from_dict(d)


def test_yaml_syntax_error_reports_line():
    with pytest.raises(ConfigError) as ei:
        cf.loads_config("fiber:\n  radius: [235 nm\nbeams: []\n")
    assert ei.value.line is not None


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        cf.load_config(tmp_path / "nope.yaml")
    d = _doc()
    d["atom"]["data"] = "missing_atom.json"
    with pytest.raises(FileNotFoundError):
        cf.config_from_dict(d, tmp_path)


def test_external_atom_file_resolves_relative_to_config(tmp_path):
    import json

    from onftrap.atoms import atom_to_dict, load_atom

    (tmp_path / "rb.json").write_text(json.dumps(atom_to_dict(load_atom())))
    text = cf.default_config_text().replace("data: bundled", "data: rb.json")
    p = tmp_path / "c.yaml"
    p.write_text(text)
    cfg = cf.load_config(p)
    assert cfg.atom_data == "rb.json"
    assert cfg.trap.atom == cf.default_config().trap.atom


def test_overrides_apply():
    cfg = cf.default_config()
    d2 = cfg.trap.atom.line("D2")
    assert d2.saturation_intensity == pytest.approx(25.0399)
    d = _doc()
    d["atom"]["overrides"]["D2"]["linewidth"] = "6 MHz"
    other = cf.config_from_dict(d)
    assert other.trap.atom.line("D2").natural_linewidth == pytest.approx(2 * np.pi * 6e6)


def test_digest_is_stable_and_sensitive():
    a, b = cf.default_config(), cf.loads_config(cf.default_config_text())
    assert a.digest() == b.digest()
    # formatting and out_dir do not matter; physics and seed do
    d = _doc()
    d["fiber"]["radius"] = "0.235 um"
    d["out_dir"] = "elsewhere"
    assert cf.config_from_dict(d).digest() == a.digest()
    assert a.with_seed(1).digest() != a.digest()
    d["beams"][1]["power"] = "3.1 mW"
    assert cf.config_from_dict(d).digest() != a.digest()


def test_seed_override_reaches_the_distribution():
    cfg = cf.default_config().with_seed(42)
    assert cfg.seed == 42 and cfg.dist.seed == 42


def test_with_probe_off_drops_the_probe():
    cfg = cf.default_config().with_probe(False)
    assert not cfg.trap.has_probe
    assert cf.default_config().with_probe(True).trap.has_probe
