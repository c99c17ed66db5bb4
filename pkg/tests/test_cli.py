import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import FIXTURES
from onftrap import __version__
from onftrap.analysis import TimeSeries, read_series_csv, write_series_csv
from onftrap.cli import run
from onftrap.config import default_config_text


def _header(path):
    head = {}
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            break
        k, _, v = line[1:].partition(":")
        head[k.strip()] = v.strip()
    return head


def _rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture
def cfg_file(tmp_path):
    def make(replacements=()):
        text = (FIXTURES / "fast.yaml").read_text()
        for a, b in replacements:
            assert a in text
            text = text.replace(a, b)
        p = tmp_path / "cfg.yaml"
        p.write_text(text)
        return p

    return make


def test_modes_marks_single_mode(tmp_path, fast_config_path, fast_config):
    assert run(["modes", "--config", str(fast_config_path), "--out", str(tmp_path)]) == 0
    p = tmp_path / "modes.csv"
    head = _header(p)
    assert head["version"] == __version__
    assert head["config_digest"] == fast_config.digest()
    assert head["seed"] == "0"
    rows = _rows(p)
    assert [r["role"] for r in rows] == ["red", "blue", "probe"]
    assert all(r["single_mode"] == "true" for r in rows)
    assert float(rows[0]["q_per_m"]) < float(rows[1]["q_per_m"])


def test_potential_outputs_and_reruns_are_byte_identical(tmp_path, fast_config_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["potential", "--config", str(fast_config_path), "--out", str(out), "--probe", "off"]) == 0
    for name in ("potential_probe_off.csv", "trap_report_probe_off.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rep = json.loads((a / "trap_report_probe_off.json").read_text())
    assert rep["header"]["kind"] == "trap-report"
    assert rep["probe"] == "probe_off"
    assert rep["report"]["depth_uK"] > 0
    rows = _rows(a / "potential_probe_off.csv")
    assert len(rows) == 300 * 180


def test_seed_flag_overrides_config(tmp_path, fast_config_path):
    assert run(["modes", "--config", str(fast_config_path), "--out", str(tmp_path), "--seed", "7"]) == 0
    assert _header(tmp_path / "modes.csv")["seed"] == "7"


def test_validation_errors_exit_1(tmp_path, cfg_file, capsys):
    bad = cfg_file([("radius: 235 nm", "radius: 235")])
    assert run(["modes", "--config", str(bad), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "fiber.radius" in err and "line" in err
    # a config with no beams
    text = bad.read_text().replace("radius: 235\n", "radius: 235 nm\n")
    start = text.index("beams:")
    end = text.index("distribution:")
    bad.write_text(text[:start] + "beams: []\n\n" + text[end:])
    assert run(["modes", "--config", str(bad), "--out", str(tmp_path)]) == 1
    # simulate without a probe
    noprobe = cfg_file([("  - role: probe\n    power: 70 nW\n    detuning: 200 MHz\n    pol_angle: 135 deg\n", "")])
    assert run(["simulate", "--config", str(noprobe), "--out", str(tmp_path)]) == 1
    assert run(["modes", "--out", str(tmp_path), "--seed", "-3"]) == 1


def test_argparse_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as ei:
        run(["potential", "--probe", "maybe"])
    assert ei.value.code == 1
    with pytest.raises(SystemExit) as ei:
        run(["frobnicate"])
    assert ei.value.code == 1


def test_numerical_failure_exits_2(tmp_path, cfg_file, capsys):
    multimode = cfg_file([("radius: 235 nm", "radius: 600 nm")])
    assert run(["modes", "--config", str(multimode), "--out", str(tmp_path)]) == 2
    assert "MultimodeError" in capsys.readouterr().err
    blue_only = cfg_file([("  - role: red\n    wavelength: 1064 nm\n    power: 1 mW\n    pol_angle: 90 deg\n"
                           "    standing_wave: true\n    backward_power: 1 mW\n", "")])
    assert run(["potential", "--config", str(blue_only), "--out", str(tmp_path)]) == 2


def test_io_errors_exit_3(tmp_path, fast_config_path):
    assert run(["analyze", str(tmp_path / "missing.csv"), "--config", str(fast_config_path),
                "--out", str(tmp_path)]) == 3
    assert run(["modes", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 3
    # output directory blocked by a regular file
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert run(["modes", "--config", str(fast_config_path), "--out", str(blocker / "sub")]) == 3


def test_sensitivity_command(tmp_path, fast_config_path):
    assert run(["sensitivity", "--config", str(fast_config_path), "--out", str(tmp_path),
                "--fraction", "0"]) == 0
    doc = json.loads((tmp_path / "sensitivity.json").read_text())
    assert doc["fraction"] == 0.0
    assert doc["nu_r_halfspread_Hz"] == 0.0 and doc["nu_phi_halfspread_Hz"] == 0.0


def test_analyze_synthetic_two_tone(tmp_path, fast_config_path):
    dt, T, tau = 20e-9, 4e-3, 370e-6
    t = np.arange(int(round(T / dt))) * dt
    # shaped like a simulated record: a decaying level carrying both oscillations
    y = np.exp(-t / tau) * (1 + 0.2 * np.sin(2 * np.pi * 73e3 * t) + 0.15 * np.sin(2 * np.pi * 197e3 * t))
    src = tmp_path / "two_tone.csv"
    write_series_csv(TimeSeries(0.0, dt, y), src, header={"radial_only": False})
    assert run(["analyze", str(src), "--config", str(fast_config_path), "--out", str(tmp_path)]) == 0
    peaks = json.loads((tmp_path / "peaks.json").read_text())
    df = peaks["df_Hz"]
    got = [(p["label"], p["center_Hz"]) for p in peaks["peaks"]]
    assert [g[0] for g in got] == ["azimuthal", "radial"]
    assert abs(got[0][1] - 73e3) <= df and abs(got[1][1] - 197e3) <= df
    life = json.loads((tmp_path / "lifetime.json").read_text())
    assert life["exponential"]["tau_s"] == pytest.approx(tau, rel=0.02)
    assert (tmp_path / "spectrum.csv").exists()


def test_simulate_pulses_and_npz(tmp_path, cfg_file):
    pulsed = cfg_file([("  # pulses: [[0 us", "  pulses: [[0 us"), ("atom_count: 256", "atom_count: 16")])
    assert run(["simulate", "--config", str(pulsed), "--out", str(tmp_path), "--npz"]) == 0
    s = read_series_csv(tmp_path / "series.csv")
    pulses = json.loads(s.meta["pulses_s"])
    assert len(pulses) == 4
    # four bursts separated by dark gaps
    lit = s.values > 0
    rising = np.count_nonzero(lit[1:] & ~lit[:-1]) + int(lit[0])
    assert rising == 4
    assert (tmp_path / "series.npz").exists()
    assert run(["analyze", str(tmp_path / "series.npz"), "--config", str(pulsed), "--out", str(tmp_path)]) == 0
    life = json.loads((tmp_path / "lifetime.json").read_text())
    assert "tau_s" in life["pulse_envelope"]
    assert len(life["pulse_peak_amplitudes"]) == 4


def test_pipeline_manifest_and_determinism(tmp_path, fast_config_path, fast_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, extra in ((a, []), (b, ["--figures"])):
        assert run(["pipeline", "--config", str(fast_config_path), "--out", str(out), "--fraction", "0.05",
                    *extra]) == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["manifest_digest"] == mb["manifest_digest"]
    assert ma["config_digest"] == fast_config.digest() and ma["seed"] == 0
    names = {e["file"] for e in ma["files"]}
    assert {"modes.csv", "potential_probe_off.csv", "potential_probe_on.csv", "trap_report_probe_on.json",
            "trap_report_probe_off.json", "sensitivity.json", "series.csv", "simulation.json",
            "spectrum.csv", "peaks.json", "lifetime.json"} <= names
    for e in ma["files"]:
        assert (a / e["file"]).read_bytes() == (b / e["file"]).read_bytes()
    # figures are rendered but never listed or digested
    assert (b / "spectrum.png").exists() and not any(n.endswith(".png") for n in names)
    peaks = json.loads((a / "peaks.json").read_text())["peaks"]
    assert [p["label"] for p in peaks] == ["radial"]
    # a different seed changes the simulated outputs and the manifest digest
    c = tmp_path / "c"
    assert run(["pipeline", "--config", str(fast_config_path), "--out", str(c), "--seed", "1"]) == 0
    assert json.loads((c / "manifest.json").read_text())["manifest_digest"] != ma["manifest_digest"]


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "onftrap.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
    assert "schema: onftrap-config/1" in default_config_text()
