"""Two-color evanescent trap: potential assembly, minimum, depth, frequencies.

Every beam's intensity is a quadratic form in (cos phi, sin phi), so the total
transverse potential separates exactly into three radial functions::

    U(r, phi) = U0(r) + Uc(r) cos 2phi + Us(r) sin 2phi

``TransversePotential`` evaluates those either directly from the Bessel
profiles or from cubic splines (used by the dynamics).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize

from . import atoms as _atoms
from .atoms import AtomSpecies, KB
from .errors import NoTrapError, OnfTrapError, ResolutionError, SaddleError, ValidationError
from .fiber import FiberSpec, ModeSolution, coherent_intensity, solve_he11

H_PLANCK = 6.62607015e-34

ROLES = ("red", "blue", "probe")


@dataclass(frozen=True)
class BeamSpec:
    """One laser beam (or a counter-propagating pair for a standing wave).

    Powers in W, angles in rad. For the probe, ``detuning`` (rad/s) is
    measured from the atom's probe reference line and fixes the wavelength.
    """

    role: str
    wavelength: float
    power: float
    pol_angle: float = 0.0
    standing_wave: bool = False
    backward_power: float = 0.0
    backward_pol_angle: float | None = None
    detuning: float | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"beam role must be one of {ROLES}, got {self.role!r}")
        if self.power < 0 or self.backward_power < 0:
            raise ValidationError(f"{self.role} beam power must be >= 0")
        if not self.wavelength > 0:
            raise ValidationError(f"{self.role} beam wavelength must be > 0")
        if self.standing_wave and self.role != "red":
            raise ValidationError("only red beams may form a standing wave")
        if self.role == "probe" and self.detuning is None:
            raise ValidationError("probe beam needs a detuning")
        if self.backward_pol_angle is None:
            object.__setattr__(self, "backward_pol_angle", self.pol_angle)

    def components(self):
        """(power, pol_angle, direction) of the coherent constituents."""
        out = [(self.power, self.pol_angle, +1)]
        if self.standing_wave:
            out.append((self.backward_power, self.backward_pol_angle, -1))
        return out


def probe_beam(atom: AtomSpecies, power, pol_angle, detuning) -> BeamSpec:
    """Probe beam whose wavelength sits ``detuning`` (rad/s) from the reference line."""
    line = atom.line(atom.probe_reference)
    omega = line.omega + detuning
    return BeamSpec("probe", 2 * np.pi * _atoms.C / omega, power, pol_angle, detuning=detuning)


@dataclass(frozen=True)
class GridSpec:
    r_extent: float = 1.5e-6  # outward from the surface
    n_r: int = 600
    n_phi: int = 360

    def __post_init__(self):
        if self.r_extent <= 0 or self.n_r < 3 or self.n_phi < 4:
            raise ValidationError("grid needs r_extent > 0, n_r >= 3, n_phi >= 4")


@dataclass(frozen=True)
class TrapConfig:
    fiber: FiberSpec
    atom: AtomSpecies
    beams: tuple[BeamSpec, ...]
    grid: GridSpec = field(default_factory=GridSpec)
    z_plane: float = 0.0  # z = 0 is a red antinode
    guard_hz: float = _atoms.DEFAULT_GUARD_HZ
    dispersive_factor: float = _atoms.DEFAULT_DISPERSIVE_FACTOR

    def __post_init__(self):
        object.__setattr__(self, "beams", tuple(self.beams))
        if not self.beams:
            raise ValidationError("trap configuration has no beams")

    def with_beams(self, beams) -> "TrapConfig":
        return replace(self, beams=tuple(beams))

    def without_probe(self) -> "TrapConfig":
        return self.with_beams(b for b in self.beams if b.role != "probe")

    @property
    def has_probe(self) -> bool:
        return any(b.role == "probe" and b.power > 0 for b in self.beams)

    def digest(self) -> str:
        blob = json.dumps(_jsonable(asdict(self)), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(repr(float(obj))) if np.isfinite(obj) else str(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@lru_cache(maxsize=256)
def mode_for(fiber: FiberSpec, wavelength: float) -> ModeSolution:
    return solve_he11(fiber, wavelength)


def beam_coefficient(config: TrapConfig, beam: BeamSpec) -> float:
    """Potential per unit intensity (J m^2 / W) for ``beam``."""
    if beam.role == "probe":
        return _atoms.probe_potential_coefficient(
            config.atom, beam.detuning, config.dispersive_factor
        )
    return _atoms.potential_per_intensity(config.atom, beam.wavelength, config.guard_hz)


def beam_potential(config: TrapConfig, beam: BeamSpec, r, phi, z=None):
    """Potential (J) of a single beam entry."""
    z = config.z_plane if z is None else z
    mode = mode_for(config.fiber, beam.wavelength)
    intensity = coherent_intensity(mode, beam.components(), r, phi, z)
    return beam_coefficient(config, beam) * intensity


def radial_coefficients(config: TrapConfig, r):
    """Exact (U0, Uc, Us) at radii ``r`` (J)."""
    r = np.asarray(r, dtype=float)
    u0 = np.zeros_like(r)
    uc = np.zeros_like(r)
    us = np.zeros_like(r)
    for beam in config.beams:
        if beam.power == 0 and beam.backward_power == 0:
            continue
        a = beam_potential(config, beam, r, 0.0)
        b = beam_potential(config, beam, r, np.pi / 2)
        d = beam_potential(config, beam, r, np.pi / 4)
        mean = 0.5 * (a + b)
        u0 += mean
        uc += 0.5 * (a - b)
        us += d - mean
    return u0, uc, us


class TransversePotential:
    """U(r, phi) in the working plane, with gradient.

    With ``spline=True`` the three radial functions are tabulated on
    ``n_spline`` points between the surface and ``r_max`` and interpolated by
    cubic splines; otherwise every call goes back to the Bessel profiles.
    """

    def __init__(self, config: TrapConfig, r_max=None, spline=True, n_spline=6001):
        self.config = config
        self.radius = config.fiber.radius
        self.r_max = r_max if r_max is not None else self.radius + 3e-6
        self.spline = spline
        if spline:
            rs = np.linspace(self.radius, self.r_max, n_spline)
            cs = CubicSpline(rs, np.column_stack(radial_coefficients(config, rs)))
            d = cs.derivative()
            # one piecewise cubic carrying (U0, Uc, Us, U0', Uc', Us')
            c = np.concatenate([cs.c, np.concatenate([np.zeros((1,) + d.c.shape[1:]), d.c])], axis=2)
            # (n_intervals, 4, 6), highest power first, for a direct uniform-grid lookup
            self._coef = [np.ascontiguousarray(ck) for ck in c]
            self._r0 = rs[0]
            self._h = rs[1] - rs[0]

    def _eval(self, r):
        r = np.asarray(r, dtype=float)
        c3, c2, c1, c0 = self._coef
        idx = np.clip(((r - self._r0) / self._h).astype(np.intp), 0, c0.shape[0] - 1)
        x = (r - (self._r0 + idx * self._h))[..., None]
        return ((c3.take(idx, 0) * x + c2.take(idx, 0)) * x + c1.take(idx, 0)) * x + c0.take(idx, 0)

    def coefficients(self, r):
        if self.spline:
            v = self._eval(r)
            return v[..., 0], v[..., 1], v[..., 2]
        return radial_coefficients(self.config, r)

    def __call__(self, r, phi):
        u0, uc, us = self.coefficients(r)
        return u0 + uc * np.cos(2 * phi) + us * np.sin(2 * phi)

    def gradient(self, r, phi):
        """(dU/dr, dU/dphi)."""
        c2, s2 = np.cos(2 * phi), np.sin(2 * phi)
        if self.spline:
            v = self._eval(r)
            u0, uc, us, d0, dc, ds = (v[..., i] for i in range(6))
        else:
            h = 1e-12
            u0, uc, us = radial_coefficients(self.config, r)
            p = radial_coefficients(self.config, np.asarray(r) + h)
            m = radial_coefficients(self.config, np.asarray(r) - h)
            d0, dc, ds = ((pp - mm) / (2 * h) for pp, mm in zip(p, m))
        dr = d0 + dc * c2 + ds * s2
        dphi = 2 * (us * c2 - uc * s2)
        return dr, dphi


@dataclass
class PotentialField:
    r: np.ndarray  # (n_r,) m
    phi: np.ndarray  # (n_phi,) rad, periodic
    values: np.ndarray  # (n_phi, n_r) J
    provenance: str = ""
    potential: object = None  # callable U(r, phi), optional

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.phi.size, self.r.size):
            raise ValidationError("field values must have shape (n_phi, n_r)")
        if not np.all(np.isfinite(self.values)):
            raise OnfTrapError("potential field contains non-finite values")

    @property
    def periodic(self) -> bool:
        dphi = self.phi[1] - self.phi[0]
        return np.isclose(self.phi[-1] + dphi - self.phi[0], 2 * np.pi)

    def evaluate(self, r, phi):
        if self.potential is None:
            raise ValidationError("field has no attached potential function")
        return self.potential(r, phi)


@dataclass(frozen=True)
class TrapMinimum:
    r: float
    phi: float
    u: float


@dataclass(frozen=True)
class TrapReport:
    r_min: float
    phi_min: float
    U_min: float
    depth: float
    nu_r: float
    nu_phi: float
    fit_residual: float
    radius: float = 0.0
    config_digest: str = ""

    @property
    def U_min_uK(self) -> float:
        return float(_atoms.joule_to_microkelvin(self.U_min))

    @property
    def depth_uK(self) -> float:
        return float(_atoms.joule_to_microkelvin(self.depth))

    def to_dict(self) -> dict:
        return {
            "schema": "onftrap-trap-report/1",
            "config_digest": self.config_digest,
            "r_min_m": self.r_min,
            "distance_from_surface_m": self.r_min - self.radius,
            "phi_min_rad": self.phi_min,
            "U_min_J": self.U_min,
            "U_min_uK": self.U_min_uK,
            "depth_J": self.depth,
            "depth_uK": self.depth_uK,
            "nu_r_Hz": self.nu_r,
            "nu_phi_Hz": self.nu_phi,
            "fit_residual": self.fit_residual,
        }


def build_potential(config: TrapConfig, check_resolution=True) -> PotentialField:
    """Sample U on the (phi, r) grid at the configured z plane."""
    g = config.grid
    a = config.fiber.radius
    r = a + np.linspace(0.0, g.r_extent, g.n_r)
    phi = np.linspace(0.0, 2 * np.pi, g.n_phi, endpoint=False)
    u0, uc, us = radial_coefficients(config, r)
    values = u0[None, :] + uc[None, :] * np.cos(2 * phi)[:, None] + us[None, :] * np.sin(2 * phi)[:, None]
    pot = TransversePotential(config, spline=False)
    field_ = PotentialField(r, phi, values, provenance=config.digest(), potential=pot)
    if check_resolution:
        _check_resolution(field_)
    return field_


def _check_resolution(field_: PotentialField, min_samples=10):
    """Require at least ``min_samples`` radial samples below the half-depth level."""
    j, i = np.unravel_index(np.argmin(field_.values), field_.values.shape)
    if i == 0 or i == field_.r.size - 1:
        return  # no interior well; find_minimum reports that
    ray = field_.values[j]
    umin = ray[i]
    inner = ray[: i + 1].max()
    outer = ray[i:].max()
    depth = min(inner, outer) - umin
    level = umin + 0.5 * depth
    lo = i
    while lo > 0 and ray[lo - 1] < level:
        lo -= 1
    hi = i
    while hi < ray.size - 1 and ray[hi + 1] < level:
        hi += 1
    if hi - lo + 1 < min_samples:
        raise ResolutionError(
            f"only {hi - lo + 1} radial samples across the well; refine the grid"
        )


def _parabola_vertex(ym, y0, yp):
    """Offset (in grid steps) of the vertex of the parabola through three points."""
    den = ym - 2 * y0 + yp
    if den <= 0:
        return 0.0
    return float(np.clip(0.5 * (ym - yp) / den, -0.5, 0.5))


def find_minimum(field_: PotentialField, polish=True) -> TrapMinimum:
    """Grid argmin refined by parabolic interpolation in r and phi.

    With ``polish`` and an attached potential function the estimate is
    finished with a bounded local minimization inside the grid cell.
    """
    v = field_.values
    j, i = np.unravel_index(np.argmin(v), v.shape)
    n_phi, n_r = v.shape
    if i == 0 or i == n_r - 1:
        raise NoTrapError("potential minimum lies on the radial grid boundary: no trap")
    periodic = field_.periodic
    if not periodic and (j == 0 or j == n_phi - 1):
        raise NoTrapError("potential minimum lies on the azimuthal grid boundary: no trap")
    dr = field_.r[1] - field_.r[0]
    dphi = field_.phi[1] - field_.phi[0]
    jm, jp = (j - 1) % n_phi, (j + 1) % n_phi
    r0 = field_.r[i] + dr * _parabola_vertex(v[j, i - 1], v[j, i], v[j, i + 1])
    phi0 = field_.phi[j] + dphi * _parabola_vertex(v[jm, i], v[j, i], v[jp, i])
    u0 = float(v[j, i])
    if polish and field_.potential is not None:
        res = minimize(
            lambda x: field_.potential(x[0] * dr + r0, x[1] * dphi + phi0) / abs(u0 or 1.0),
            x0=[0.0, 0.0],
            method="L-BFGS-B",
            bounds=[(-1.0, 1.0), (-1.0, 1.0)],
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 200},
        )
        r0 = r0 + res.x[0] * dr
        phi0 = phi0 + res.x[1] * dphi
        u0 = float(field_.potential(r0, phi0))
    elif field_.potential is not None:
        u0 = float(field_.potential(r0, phi0))
    if periodic:
        phi0 = float(np.mod(phi0, 2 * np.pi))
    return TrapMinimum(float(r0), float(phi0), u0)


def _ray(field_: PotentialField, minimum: TrapMinimum):
    """U along the radial ray through the minimum, on the field's r grid."""
    if field_.potential is not None:
        return field_.r, np.asarray(field_.potential(field_.r, minimum.phi))
    j = int(np.argmin(np.abs(np.angle(np.exp(1j * (field_.phi - minimum.phi))))))
    return field_.r, field_.values[j]


def trap_depth(field_: PotentialField, minimum: TrapMinimum) -> float:
    """min(inner barrier, outer escape level) - U_min along the minimum's ray (J)."""
    r, ray = _ray(field_, minimum)
    inside = r <= minimum.r
    barrier = ray[inside].max() if inside.any() else np.inf
    # U -> 0 at infinity, so escaping outward costs at least the zero level
    escape = max(ray[~inside].max(), 0.0) if (~inside).any() else 0.0
    return float(max(min(barrier, escape) - minimum.u, 0.0))


def _fit_curvature(x, u, level, degree=4):
    """Polynomial fit through samples with u < level; returns (k, rms).

    ``k`` is twice the x^2 coefficient. Degree 4 lets the cubic and quartic
    terms soak up the anharmonicity of the well instead of biasing ``k``.
    """
    sel = u < level
    if sel.sum() < degree + 3:
        raise ResolutionError("too few samples inside the harmonic-fit window")
    xs, us = x[sel], u[sel]
    scale = np.max(np.abs(xs)) or 1.0
    coef = np.polyfit(xs / scale, us, degree)
    k = 2 * coef[-3] / scale**2
    rms = float(np.sqrt(np.mean((us - np.polyval(coef, xs / scale)) ** 2)))
    return k, rms


def trap_frequencies(
    field_or_potential, minimum: TrapMinimum, atom: AtomSpecies, window=0.1, depth=None,
    n_samples=401, degree=4,
):
    """Radial and azimuthal trap frequencies (Hz) from a harmonic fit.

    The fit window keeps points with ``U - U_min < window * depth``. A
    callable potential is sampled on fine cuts through the minimum; a bare
    field uses its own grid row and column.
    Returns ``(nu_r, nu_phi, fit_residual)``, the residual being the RMS
    misfit normalized by the window height.
    """
    if isinstance(field_or_potential, PotentialField):
        fld = field_or_potential
        pot = fld.potential
        if depth is None:
            depth = trap_depth(fld, minimum)
    else:
        fld = None
        pot = field_or_potential
    if depth is None or depth <= 0:
        raise NoTrapError("trap depth must be positive for a harmonic fit")
    level = minimum.u + window * depth

    if pot is not None:
        span_r = _window_halfwidth(lambda x: pot(minimum.r + x, minimum.phi), level, minimum.r)
        xr = np.linspace(-span_r, span_r, n_samples)
        ur = np.asarray(pot(minimum.r + xr, minimum.phi))
        span_p = _window_halfwidth(lambda x: pot(minimum.r, minimum.phi + x / minimum.r), level, minimum.r)
        xp = np.linspace(-span_p, span_p, n_samples)
        up = np.asarray(pot(minimum.r, minimum.phi + xp / minimum.r))
    else:
        j = int(np.argmin(np.abs(np.angle(np.exp(1j * (fld.phi - minimum.phi))))))
        i = int(np.argmin(np.abs(fld.r - minimum.r)))
        xr, ur = fld.r - minimum.r, fld.values[j]
        dphi = np.angle(np.exp(1j * (fld.phi - minimum.phi)))
        order = np.argsort(dphi)
        xp, up = minimum.r * dphi[order], fld.values[order, i]

    k_r, rms_r = _fit_curvature(xr, ur, level, degree)
    k_p, rms_p = _fit_curvature(xp, up, level, degree)
    if k_r <= 0 or k_p <= 0:
        raise SaddleError(f"non-positive curvature at the minimum (k_r={k_r:.3g}, k_phi={k_p:.3g})")
    nu_r = np.sqrt(k_r / atom.mass) / (2 * np.pi)
    nu_p = np.sqrt(k_p / atom.mass) / (2 * np.pi)
    resid = max(rms_r, rms_p) / (window * depth)
    return float(nu_r), float(nu_p), float(resid)


def _window_halfwidth(f, level, r_scale):
    """Symmetric half-width reaching ``level`` on both sides, grown geometrically."""
    h = 1e-3 * r_scale
    for _ in range(60):
        if f(h) >= level and f(-h) >= level:
            return h
        h *= 1.5
    raise NoTrapError("harmonic-fit window never closes")


def curvature_fd(potential, minimum: TrapMinimum, h=0.5e-9):
    """Central finite-difference curvatures (k_r, k_phi) in J/m^2."""
    r, p = minimum.r, minimum.phi
    u0 = potential(r, p)
    k_r = (potential(r + h, p) - 2 * u0 + potential(r - h, p)) / h**2
    dp = h / r
    k_p = (potential(r, p + dp) - 2 * u0 + potential(r, p - dp)) / h**2
    return float(k_r), float(k_p)


def analyze_trap(config: TrapConfig, window=0.1) -> TrapReport:
    return trap_report(config, build_potential(config), window)


def trap_report(config: TrapConfig, field_: PotentialField, window=0.1) -> TrapReport:
    """Minimum, depth and frequencies of an already built field."""
    mn = find_minimum(field_)
    depth = trap_depth(field_, mn)
    nu_r, nu_p, resid = trap_frequencies(field_, mn, config.atom, window=window, depth=depth)
    return TrapReport(
        r_min=mn.r, phi_min=mn.phi, U_min=mn.u, depth=depth, nu_r=nu_r, nu_phi=nu_p,
        fit_residual=resid, radius=config.fiber.radius, config_digest=config.digest(),
    )


def probe_displacement(config_off: TrapConfig, config_on: TrapConfig) -> float:
    """Signed radial shift of the minimum when the probe is on (m, + outward)."""
    m_off = find_minimum(build_potential(config_off))
    m_on = find_minimum(build_potential(config_on))
    return m_on.r - m_off.r


# --- sensitivity -----------------------------------------------------------

SENSITIVITY_PARAMETERS = (
    "red_fwd_power", "red_bwd_power", "blue_power", "probe_power",
    "red_fwd_angle", "red_bwd_angle", "blue_angle", "probe_angle",
)


def perturb(config: TrapConfig, name: str, fraction: float, angle_scale=np.pi / 2) -> TrapConfig:
    """Copy of ``config`` with one parameter scaled by ``1 + fraction``.

    Powers are scaled multiplicatively. Angles are shifted by
    ``fraction * angle_scale`` (default: that fraction of the 90 degree
    red/blue crossing), since a relative change of a zero angle is empty.
    """
    what, kind = name.rsplit("_", 1)
    beams = list(config.beams)
    for idx, b in enumerate(beams):
        if what.startswith("red") and b.role == "red":
            backward = what.endswith("bwd")
            if kind == "power":
                key = "backward_power" if backward else "power"
                beams[idx] = replace(b, **{key: getattr(b, key) * (1 + fraction)})
            else:
                key = "backward_pol_angle" if backward else "pol_angle"
                beams[idx] = replace(b, **{key: getattr(b, key) + fraction * angle_scale})
            break
        if b.role == what:
            if kind == "power":
                beams[idx] = replace(b, power=b.power * (1 + fraction))
            else:
                beams[idx] = replace(b, pol_angle=b.pol_angle + fraction * angle_scale)
            break
    else:
        raise ValidationError(f"config has no beam for parameter {name!r}")
    return config.with_beams(beams)


@dataclass
class SensitivityResult:
    fraction: float
    baseline: TrapReport
    runs: dict  # (parameter, sign) -> TrapReport or error string
    nu_r_range: tuple
    nu_phi_range: tuple
    nu_r_corners: tuple
    nu_phi_corners: tuple

    @property
    def nu_r_halfspread(self) -> float:
        return 0.5 * (self.nu_r_range[1] - self.nu_r_range[0])

    @property
    def nu_phi_halfspread(self) -> float:
        return 0.5 * (self.nu_phi_range[1] - self.nu_phi_range[0])

    @property
    def failures(self) -> dict:
        return {k: v for k, v in self.runs.items() if isinstance(v, str)}

    def to_dict(self) -> dict:
        rows = []
        for (name, sign), rep in sorted(self.runs.items()):
            row = {"parameter": name, "sign": sign}
            if isinstance(rep, str):
                row["error"] = rep
            else:
                row.update(nu_r_Hz=rep.nu_r, nu_phi_Hz=rep.nu_phi, depth_uK=rep.depth_uK)
            rows.append(row)
        return {
            "schema": "onftrap-sensitivity/1",
            "fraction": self.fraction,
            "baseline": self.baseline.to_dict(),
            "nu_r_scan_range_Hz": list(self.nu_r_range),
            "nu_phi_scan_range_Hz": list(self.nu_phi_range),
            "nu_r_corner_range_Hz": list(self.nu_r_corners),
            "nu_phi_corner_range_Hz": list(self.nu_phi_corners),
            "nu_r_halfspread_Hz": self.nu_r_halfspread,
            "nu_phi_halfspread_Hz": self.nu_phi_halfspread,
            "runs": rows,
        }


def _corner_extremes(base, deltas):
    """Extremes over the corners of the +-fraction box, from one-at-a-time shifts.

    Each parameter contributes either its + or its - shift (or none); the
    extremes add up the most negative and most positive choice per parameter.
    """
    lo = hi = base
    for dm, dp in deltas:
        lo += min(0.0, dm, dp)
        hi += max(0.0, dm, dp)
    return lo, hi


def sensitivity_analysis(
    config: TrapConfig, fraction=0.05, parameters=None, angle_scale=np.pi / 2, window=0.1,
    workers=None,
) -> SensitivityResult:
    """One-at-a-time +-``fraction`` scan of beam powers and polarization angles.

    Runs that fail to trap are recorded per corner and left out of the
    spreads. The quoted uncertainty is the half-spread of the scanned
    frequencies; the linearized all-corner extremes are reported alongside.
    """
    if parameters is None:
        have_probe = any(b.role == "probe" for b in config.beams)
        parameters = [p for p in SENSITIVITY_PARAMETERS if have_probe or "probe" not in p]
    baseline = analyze_trap(config, window)
    jobs = [(p, s) for p in parameters for s in (-1, +1)]

    def run(job):
        name, sign = job
        try:
            return analyze_trap(perturb(config, name, sign * fraction, angle_scale), window)
        except OnfTrapError as exc:
            return f"{type(exc).__name__}: {exc}"

    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    runs = dict(zip(jobs, results))

    ok = [r for r in results if not isinstance(r, str)] + [baseline]
    nu_r = [r.nu_r for r in ok]
    nu_p = [r.nu_phi for r in ok]
    d_r, d_p = [], []
    for p in parameters:
        m, q = runs[(p, -1)], runs[(p, +1)]
        d_r.append(tuple(0.0 if isinstance(x, str) else x.nu_r - baseline.nu_r for x in (m, q)))
        d_p.append(tuple(0.0 if isinstance(x, str) else x.nu_phi - baseline.nu_phi for x in (m, q)))
    return SensitivityResult(
        fraction=fraction,
        baseline=baseline,
        runs=runs,
        nu_r_range=(min(nu_r), max(nu_r)),
        nu_phi_range=(min(nu_p), max(nu_p)),
        nu_r_corners=_corner_extremes(baseline.nu_r, d_r),
        nu_phi_corners=_corner_extremes(baseline.nu_phi, d_p),
    )
