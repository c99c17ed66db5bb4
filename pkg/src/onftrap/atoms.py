"""Atomic reference data and scalar light shifts.

Energies are joules throughout. The trap beams use a two-line (D1 + D2)
dispersive sum for the scalar polarizability, including counter-rotating
terms; the near-resonant probe uses the two-level dispersive light shift.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import constants as sc

from .errors import DispersiveRegimeError, ResonanceError, ValidationError

HBAR = sc.hbar
KB = sc.k
EPS0 = sc.epsilon_0
C = sc.c

DEFAULT_GUARD_HZ = 1e9
DEFAULT_DISPERSIVE_FACTOR = 10.0


@dataclass(frozen=True)
class TransitionLine:
    label: str
    wavelength: float  # m
    natural_linewidth: float  # rad/s
    saturation_intensity: float  # W/m^2
    effective_line_strength: float

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValidationError(f"{self.label}: wavelength must be > 0")
        if self.natural_linewidth <= 0:
            raise ValidationError(f"{self.label}: natural linewidth must be > 0")
        if self.saturation_intensity <= 0:
            raise ValidationError(f"{self.label}: saturation intensity must be > 0")
        if self.effective_line_strength < 0:
            raise ValidationError(f"{self.label}: line strength must be >= 0")

    @property
    def omega(self) -> float:
        return 2 * np.pi * C / self.wavelength


@dataclass(frozen=True)
class AtomSpecies:
    name: str
    mass: float  # kg
    transitions: tuple[TransitionLine, ...]
    probe_reference: str = "D2"
    source: str = ""

    def __post_init__(self):
        if self.mass <= 0:
            raise ValidationError("atomic mass must be > 0")
        if not self.transitions:
            raise ValidationError("at least one transition line is required")
        object.__setattr__(self, "transitions", tuple(self.transitions))
        labels = [t.label for t in self.transitions]
        if self.probe_reference not in labels:
            raise ValidationError(
                f"probe reference {self.probe_reference!r} not among lines {labels}"
            )

    def line(self, label: str) -> TransitionLine:
        for t in self.transitions:
            if t.label == label:
                return t
        raise KeyError(label)

    def with_line(self, label: str, **changes) -> "AtomSpecies":
        """Copy with one transition line's fields replaced."""
        lines = tuple(
            replace(t, **changes) if t.label == label else t for t in self.transitions
        )
        return replace(self, transitions=lines)


def atom_from_dict(d: dict) -> AtomSpecies:
    try:
        lines = tuple(
            TransitionLine(
                label=t["label"],
                wavelength=float(t["wavelength_m"]),
                natural_linewidth=float(t["natural_linewidth_rad_s"]),
                saturation_intensity=float(t["saturation_intensity_W_m2"]),
                effective_line_strength=float(t["effective_line_strength"]),
            )
            for t in d["transitions"]
        )
        return AtomSpecies(
            name=d["name"],
            mass=float(d["mass_kg"]),
            transitions=lines,
            probe_reference=d.get("probe_reference", lines[0].label),
            source=d.get("source", ""),
        )
    except KeyError as exc:
        raise ValidationError(f"atomic data missing field {exc}") from None


def atom_to_dict(atom: AtomSpecies) -> dict:
    return {
        "schema": "onftrap-atom/1",
        "name": atom.name,
        "mass_kg": atom.mass,
        "probe_reference": atom.probe_reference,
        "source": atom.source,
        "transitions": [
            {
                "label": t.label,
                "wavelength_m": t.wavelength,
                "natural_linewidth_rad_s": t.natural_linewidth,
                "saturation_intensity_W_m2": t.saturation_intensity,
                "effective_line_strength": t.effective_line_strength,
            }
            for t in atom.transitions
        ],
    }


def load_atom(path: str | Path | None = None) -> AtomSpecies:
    """Load an atomic-data JSON file; ``None`` gives the bundled Rb-87 data."""
    if path is None:
        text = resources.files("onftrap.data").joinpath("rb87.json").read_text()
    else:
        text = Path(path).read_text()
    return atom_from_dict(json.loads(text))


def rubidium87() -> AtomSpecies:
    return load_atom(None)


def scalar_polarizability(
    species: AtomSpecies, wavelength: float, guard_hz: float = DEFAULT_GUARD_HZ
) -> float:
    """Ground-state scalar polarizability in C m^2 / V.

    Sum over lines of ``w_j * 3 pi eps0 c^3 Gamma_j / omega_j^3 *
    (1/(omega_j - omega) + 1/(omega_j + omega))``.
    """
    if not wavelength > 0:
        raise ValidationError("wavelength must be > 0")
    omega = 2 * np.pi * C / wavelength
    alpha = 0.0
    for t in species.transitions:
        w0 = t.omega
        if abs(w0 - omega) <= 2 * np.pi * guard_hz:
            raise ResonanceError(
                f"{wavelength * 1e9:.4f} nm is within {guard_hz:.3g} Hz of the "
                f"{t.label} line at {t.wavelength * 1e9:.4f} nm"
            )
        pref = 3 * np.pi * EPS0 * C**3 * t.natural_linewidth / w0**3
        alpha += t.effective_line_strength * pref * (1 / (w0 - omega) + 1 / (w0 + omega))
    return alpha


def potential_per_intensity(
    species: AtomSpecies, wavelength: float, guard_hz: float = DEFAULT_GUARD_HZ
) -> float:
    """U/I in J m^2 / W for a far-detuned beam."""
    return -scalar_polarizability(species, wavelength, guard_hz) / (2 * EPS0 * C)


def intensity_to_potential(species, wavelength, intensity, guard_hz=DEFAULT_GUARD_HZ):
    intensity = np.asarray(intensity, dtype=float)
    if np.any(intensity < 0):
        raise ValidationError("intensity must be >= 0")
    u = potential_per_intensity(species, wavelength, guard_hz) * intensity
    return float(u) if u.ndim == 0 else u


def probe_potential_coefficient(
    species: AtomSpecies,
    detuning: float,
    dispersive_factor: float = DEFAULT_DISPERSIVE_FACTOR,
) -> float:
    """Two-level dispersive light shift per unit intensity, hbar G^2 / (8 d Isat).

    ``detuning`` is in rad/s, positive to the blue of the probe reference line.
    """
    line = species.line(species.probe_reference)
    gamma = line.natural_linewidth
    if abs(detuning) < dispersive_factor * gamma:
        raise DispersiveRegimeError(
            f"|detuning| = {abs(detuning) / (2 * np.pi):.4g} Hz is below "
            f"{dispersive_factor:g} natural linewidths"
        )
    return HBAR * gamma**2 / (8 * detuning * line.saturation_intensity)


def joule_to_microkelvin(u):
    return np.asarray(u) / KB * 1e6
