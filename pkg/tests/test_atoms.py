import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onftrap import atoms
from onftrap.errors import DispersiveRegimeError, ResonanceError, ValidationError

ATOMIC_UNIT_POLARIZABILITY = 1.64877727436e-41  # C m^2 / V


@pytest.fixture(scope="module")
def rb():
    return atoms.rubidium87()


def test_bundled_data(rb):
    assert rb.name == "Rb87"
    d2, d1 = rb.line("D2"), rb.line("D1")
    assert d2.wavelength == pytest.approx(780.241e-9, rel=1e-6)
    assert d1.wavelength == pytest.approx(794.979e-9, rel=1e-6)
    assert d2.effective_line_strength + d1.effective_line_strength == pytest.approx(1.0)
    assert rb.probe_reference == "D2"


def test_two_line_sum_by_hand(rb):
    # written out line by line from the constants
    eps0, c = 8.8541878128e-12, 299792458.0
    lam = 1064e-9
    w = 2 * np.pi * c / lam
    total = 0.0
    for lam0, gam, wt in ((780.241209686e-9, 38.117e6, 2 / 3), (794.978851156e-9, 36.129e6, 1 / 3)):
        w0 = 2 * np.pi * c / lam0
        total += wt * 3 * np.pi * eps0 * c**3 * gam / w0**3 * (1 / (w0 - w) + 1 / (w0 + w))
    assert atoms.scalar_polarizability(rb, lam) == pytest.approx(total, rel=1e-8)


def test_polarizability_against_reference_values(rb):
    # ground-state Rb: ~687 a.u. at 1064 nm, ~319 a.u. static. The two D lines
    # alone carry all but a few percent (core and higher lines are left out).
    a1064 = atoms.scalar_polarizability(rb, 1064e-9) / ATOMIC_UNIT_POLARIZABILITY
    a_static = atoms.scalar_polarizability(rb, 1.0) / ATOMIC_UNIT_POLARIZABILITY
    assert a1064 == pytest.approx(687.3, rel=0.03)
    assert a_static == pytest.approx(318.8, rel=0.05)


def test_signs_red_attractive_blue_repulsive(rb):
    assert atoms.potential_per_intensity(rb, 1064e-9) < 0
    assert atoms.potential_per_intensity(rb, 750e-9) > 0


def test_resonance_guard(rb):
    lam = rb.line("D2").wavelength
    with pytest.raises(ResonanceError):
        atoms.scalar_polarizability(rb, lam)
    # 0.5 GHz away is still inside the default 1 GHz guard
    w = rb.line("D2").omega + 2 * np.pi * 0.5e9
    with pytest.raises(ResonanceError):
        atoms.scalar_polarizability(rb, 2 * np.pi * atoms.C / w)
    w = rb.line("D2").omega + 2 * np.pi * 5e9
    assert np.isfinite(atoms.scalar_polarizability(rb, 2 * np.pi * atoms.C / w))


def test_intensity_rejects_negative(rb):
    with pytest.raises(ValidationError):
        atoms.intensity_to_potential(rb, 1064e-9, -1.0)
    assert atoms.intensity_to_potential(rb, 1064e-9, 0.0) == 0.0


def test_probe_coefficient(rb):
    line = rb.line("D2")
    delta = 2 * np.pi * 200e6
    expected = atoms.HBAR * line.natural_linewidth**2 / (8 * delta * line.saturation_intensity)
    assert atoms.probe_potential_coefficient(rb, delta) == pytest.approx(expected, rel=1e-14)
    assert atoms.probe_potential_coefficient(rb, -delta) == pytest.approx(-expected, rel=1e-14)
    with pytest.raises(DispersiveRegimeError):
        atoms.probe_potential_coefficient(rb, 2 * np.pi * 20e6)


def test_probe_coefficient_matches_far_detuned_limit(rb):
    # single-line dispersive shift hbar G^2 I / (8 d Isat) with Isat =
    # hbar w0^3 G / (12 pi c^2) equals the rotating-wave part of -alpha I/(2 eps0 c)
    line = rb.line("D2")
    single = rb.with_line("D1", effective_line_strength=0.0).with_line(
        "D2", effective_line_strength=1.0,
        saturation_intensity=atoms.HBAR * line.omega**3 * line.natural_linewidth
        / (12 * np.pi * atoms.C**2))
    delta = 2 * np.pi * 50e9
    lam = 2 * np.pi * atoms.C / (line.omega + delta)
    w0, w = line.omega, line.omega + delta
    rwa = -3 * np.pi * atoms.C**2 * line.natural_linewidth / (2 * w0**3) / (w0 - w)
    assert atoms.probe_potential_coefficient(single, delta) == pytest.approx(rwa, rel=1e-3)
    full = atoms.potential_per_intensity(single, lam)
    assert full == pytest.approx(rwa, rel=0.01)


def test_round_trip_dict(rb, tmp_path):
    p = tmp_path / "atom.json"
    p.write_text(json.dumps(atoms.atom_to_dict(rb)))
    assert atoms.load_atom(p) == rb
    bad = atoms.atom_to_dict(rb)
    del bad["mass_kg"]
    with pytest.raises(ValidationError):
        atoms.atom_from_dict(bad)


def test_line_validation():
    with pytest.raises(ValidationError):
        atoms.TransitionLine("X", 780e-9, -1.0, 16.0, 1.0)
    with pytest.raises(ValidationError):
        atoms.AtomSpecies("X", 1e-25, (atoms.TransitionLine("A", 780e-9, 1e7, 16.0, 1.0),),
                          probe_reference="B")


@settings(max_examples=60, deadline=None)
@given(st.floats(850e-9, 1600e-9), st.floats(0.0, 1e9))
def test_light_shift_linear_in_intensity(lam, intensity):
    rb = atoms.rubidium87()
    u1 = atoms.intensity_to_potential(rb, lam, intensity)
    u2 = atoms.intensity_to_potential(rb, lam, 2 * intensity)
    assert u2 == pytest.approx(2 * u1, rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(st.floats(850e-9, 1600e-9), st.floats(1e-9, 200e-9))
def test_polarizability_falls_off_to_the_red(lam, step):
    # below both resonances alpha is positive and decreasing with wavelength
    rb = atoms.rubidium87()
    a1 = atoms.scalar_polarizability(rb, lam)
    a2 = atoms.scalar_polarizability(rb, lam + step)
    assert a1 > a2 > 0
