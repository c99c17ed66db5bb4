"""Fundamental (HE11) mode of a step-index cylinder.

Field components follow the standard exact vector solution (Bessel J in the
core, modified Bessel K outside). A quasi-linearly polarized mode with
polarization axis ``phi0`` has, per unit amplitude,

    e_r   = R(r)   cos(phi - phi0)
    e_phi = Phi(r) sin(phi - phi0)
    e_z   = i Z(r) cos(phi - phi0)

with R, Phi, Z real. A backward-propagating copy flips the sign of e_z.
Intensities are ``eps0 c |E|^2 / 2``, the quantity that multiplies
``-alpha / (2 eps0 c)`` in the light shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import constants as sc
from scipy.optimize import bisect
from scipy.special import jv, kv

from .errors import DomainError, MultimodeError, NoGuidedModeError, ValidationError

EPS0 = sc.epsilon_0
MU0 = sc.mu_0
C = sc.c

# first zero of J0: cutoff of TE01/TM01 and the single-mode limit
SINGLE_MODE_V = 2.404825557695773

# Malitson fused-silica Sellmeier coefficients (wavelength in um)
_SELLMEIER_B = (0.6961663, 0.4079426, 0.8974794)
_SELLMEIER_C = (0.0684043, 0.1162414, 9.896161)

# fused silica at the experiment wavelengths, keyed by wavelength in nm
SILICA_INDEX_TABLE = {
    750.0: 1.454237,
    780.0: 1.453667,
    795.0: 1.453405,
    1064.0: 1.449631,
}


def silica_index(wavelength: float) -> float:
    x = wavelength * 1e6
    n2 = 1.0 + sum(b * x * x / (x * x - c * c) for b, c in zip(_SELLMEIER_B, _SELLMEIER_C))
    return float(np.sqrt(n2))


@dataclass(frozen=True)
class FiberSpec:
    """Step-index cylinder.

    ``core_index`` may be a number or a mapping from wavelength in nm to index.
    Unlisted wavelengths fall back to the silica table (matched within 1 nm)
    and then to the Sellmeier formula.
    """

    radius: float
    core_index: float | dict | tuple | None = None
    cladding_index: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError("fiber radius must be > 0")
        if self.cladding_index < 1:
            raise ValidationError("cladding index must be >= 1")
        if isinstance(self.core_index, dict):
            # stored as sorted pairs so the dataclass stays hashable
            pairs = tuple(sorted((float(k), float(v)) for k, v in self.core_index.items()))
            object.__setattr__(self, "core_index", pairs)

    def index_at(self, wavelength: float) -> float:
        nm = wavelength * 1e9
        table = dict(SILICA_INDEX_TABLE)
        if isinstance(self.core_index, tuple):
            table.update(dict(self.core_index))
        elif self.core_index is not None:
            n = float(self.core_index)
            self._check_index(n)
            return n
        key = min(table, key=lambda k: abs(k - nm))
        n = table[key] if abs(key - nm) <= 1.0 else silica_index(wavelength)
        self._check_index(n)
        return n

    def _check_index(self, n):
        if not n > self.cladding_index:
            raise ValidationError("core index must exceed cladding index")

    def v_number(self, wavelength: float) -> float:
        n1 = self.index_at(wavelength)
        return 2 * np.pi / wavelength * self.radius * np.sqrt(n1**2 - self.cladding_index**2)


def _dj1_over(x):
    """J1'(x) / (x J1(x))."""
    j1 = jv(1, x)
    return (jv(0, x) - j1 / x) / (x * j1)


def _dk1_over(x):
    """K1'(x) / (x K1(x))."""
    k1 = kv(1, x)
    return (-kv(0, x) - k1 / x) / (x * k1)


def characteristic_terms(beta, k, a, n1, n2):
    """Left and right sides of the HE11 eigenvalue equation at ``beta``."""
    h = np.sqrt((n1 * k) ** 2 - beta**2)
    q = np.sqrt(beta**2 - (n2 * k) ** 2)
    ha, qa = h * a, q * a
    fj, fk = _dj1_over(ha), _dk1_over(qa)
    lhs = (fj + fk) * (n1**2 * fj + n2**2 * fk)
    rhs = (beta / k) ** 2 * (1 / ha**2 + 1 / qa**2) ** 2
    return lhs, rhs


def characteristic_residual(beta, k, a, n1, n2):
    lhs, rhs = characteristic_terms(beta, k, a, n1, n2)
    return (lhs - rhs) / rhs


@dataclass(frozen=True)
class ModeSolution:
    wavelength: float
    beta: float
    q: float
    h: float
    hybrid_parameter: float  # s
    power_norm: float  # |A| for 1 W, in V/m
    radius: float
    n_core: float
    n_clad: float
    v_number: float
    power_fraction_outside: float = field(default=0.0)

    @property
    def k(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def decay_length(self) -> float:
        """1/e length of the evanescent intensity, 1/(2q)."""
        return 1.0 / (2 * self.q)

    @property
    def lattice_period(self) -> float:
        return np.pi / self.beta


def _circular_power(a, beta, h, q, s, k, n1, n2):
    """Guided power of a circularly polarized mode with unit amplitude A."""
    omega = k * C
    ha, qa = h * a, q * a
    s1 = beta**2 * s / (k * n1) ** 2
    s0 = beta**2 * s / (k * n2) ** 2
    j0, j1, j2, j3 = (jv(n, ha) for n in range(4))
    k0, k1, k2, k3 = (kv(n, qa) for n in range(4))
    p_in = (np.pi * a**2 * omega * EPS0 * n1**2 * beta / (4 * h**2)) * (
        (1 - s) * (1 - s1) * (j0**2 + j1**2) + (1 + s) * (1 + s1) * (j2**2 - j1 * j3)
    )
    p_out = (np.pi * a**2 * omega * EPS0 * n2**2 * beta / (4 * q**2)) * (j1 / k1) ** 2 * (
        (1 - s) * (1 - s0) * (k1**2 - k0**2) + (1 + s) * (1 + s0) * (k1 * k3 - k2**2)
    )
    return p_in, p_out


def solve_he11(
    fiber: FiberSpec, wavelength: float, n_scan: int = 1000, eps: float = 1e-9
) -> ModeSolution:
    """Propagation constant and field normalization of the HE11 mode.

    Dense scan of the bracket ``(n2 k (1+eps), n1 k (1-eps))`` followed by
    bisection on the sign change with the largest beta.
    """
    if not wavelength > 0:
        raise ValidationError("wavelength must be > 0")
    a = fiber.radius
    n1 = fiber.index_at(wavelength)
    n2 = fiber.cladding_index
    k = 2 * np.pi / wavelength
    v = k * a * np.sqrt(n1**2 - n2**2)
    if v >= SINGLE_MODE_V:
        raise MultimodeError(
            f"V = {v:.4f} >= {SINGLE_MODE_V:.4f} at {wavelength * 1e9:.2f} nm: fiber is multimode"
        )

    lo, hi = n2 * k * (1 + eps), n1 * k * (1 - eps)

    def f(b):
        lhs, rhs = characteristic_terms(b, k, a, n1, n2)
        return lhs - rhs

    grid = np.linspace(lo, hi, n_scan)
    with np.errstate(all="ignore"):
        vals = f(grid)
    ok = np.isfinite(vals)
    sign_change = np.nonzero(ok[:-1] & ok[1:] & (np.sign(vals[:-1]) != np.sign(vals[1:])))[0]
    if sign_change.size == 0:
        raise NoGuidedModeError(
            f"no HE11 root in ({lo:.6g}, {hi:.6g}) rad/m at {wavelength * 1e9:.2f} nm"
        )
    i = sign_change[-1]
    beta = bisect(f, grid[i], grid[i + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)

    h = np.sqrt((n1 * k) ** 2 - beta**2)
    q = np.sqrt(beta**2 - (n2 * k) ** 2)
    ha, qa = h * a, q * a
    s = (1 / ha**2 + 1 / qa**2) / (_dj1_over(ha) + _dk1_over(qa))
    p_in, p_out = _circular_power(a, beta, h, q, s, k, n1, n2)
    return ModeSolution(
        wavelength=wavelength,
        beta=float(beta),
        q=float(q),
        h=float(h),
        hybrid_parameter=float(s),
        power_norm=float(1 / np.sqrt(p_in + p_out)),
        radius=a,
        n_core=n1,
        n_clad=n2,
        v_number=float(v),
        power_fraction_outside=float(p_out / (p_in + p_out)),
    )


def field_profiles(mode: ModeSolution, r):
    """Real profiles (R, Phi, Z) in V/m for 1 W of quasi-linearly polarized power.

    Valid on both sides of the interface; the core branch is used only for
    normalization checks.
    """
    r = np.asarray(r, dtype=float)
    a, beta, q, h, s = mode.radius, mode.beta, mode.q, mode.h, mode.hybrid_parameter
    amp = np.sqrt(2.0) * mode.power_norm
    outside = r >= a
    ro = np.where(outside, r, a)
    ri = np.where(outside, a, r)
    scale = jv(1, h * a) / kv(1, q * a)
    qr = q * ro
    k0, k1, k2 = kv(0, qr), kv(1, qr), kv(2, qr)
    r_out = amp * beta / (2 * q) * scale * ((1 - s) * k0 + (1 + s) * k2)
    p_out = -amp * beta / (2 * q) * scale * ((1 - s) * k0 - (1 + s) * k2)
    z_out = -amp * scale * k1
    hr = h * ri
    j0, j1, j2 = jv(0, hr), jv(1, hr), jv(2, hr)
    r_in = amp * beta / (2 * h) * ((1 - s) * j0 - (1 + s) * j2)
    p_in = -amp * beta / (2 * h) * ((1 - s) * j0 + (1 + s) * j2)
    z_in = -amp * j1
    return (
        np.where(outside, r_out, r_in),
        np.where(outside, p_out, p_in),
        np.where(outside, z_out, z_in),
    )


def _check_outside(mode, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < mode.radius * (1 - 1e-12)):
        raise DomainError("evanescent field requested inside the fiber (r < radius)")
    return r


def evanescent_intensity(mode: ModeSolution, fiber: FiberSpec | None, power, pol_angle, r, phi):
    """Time-averaged intensity of a single quasi-linearly polarized beam (W/m^2)."""
    r = _check_outside(mode, r)
    rr, pp, zz = field_profiles(mode, r)
    psi = np.asarray(phi) - pol_angle
    c2, s2 = np.cos(psi) ** 2, np.sin(psi) ** 2
    e2 = power * ((rr**2 + zz**2) * c2 + pp**2 * s2)
    return 0.5 * EPS0 * C * e2


def intensity_decomposition(mode: ModeSolution, r):
    """Per-watt radial functions (mean, modulation) with I = P*(mean + mod*cos 2(phi-phi0))."""
    rr, pp, zz = field_profiles(mode, _check_outside(mode, r))
    c = 0.5 * EPS0 * C
    mean = c * 0.5 * (rr**2 + zz**2 + pp**2)
    mod = c * 0.5 * (rr**2 + zz**2 - pp**2)
    return mean, mod


def coherent_intensity(mode: ModeSolution, beams, r, phi, z=0.0):
    """Intensity of co- and counter-propagating beams of one wavelength.

    ``beams`` is a sequence of ``(power, pol_angle, direction)`` with
    direction +1 (forward) or -1 (backward). Fields add coherently with
    propagation phase ``exp(i direction beta z)``.
    """
    r = _check_outside(mode, r)
    rr, pp, zz = field_profiles(mode, r)
    phi = np.asarray(phi, dtype=float)
    er = ephi = ez = 0.0
    for power, pol, direction in beams:
        if power < 0:
            raise ValidationError("beam power must be >= 0")
        amp = np.sqrt(power) * np.exp(1j * direction * mode.beta * z)
        psi = phi - pol
        er = er + amp * rr * np.cos(psi)
        ephi = ephi + amp * pp * np.sin(psi)
        ez = ez + direction * amp * 1j * zz * np.cos(psi)
    e2 = np.abs(er) ** 2 + np.abs(ephi) ** 2 + np.abs(ez) ** 2
    return 0.5 * EPS0 * C * e2


def standing_wave_intensity(
    mode: ModeSolution, fiber: FiberSpec | None, power_fwd, power_bwd, r, phi, z, pol_angle
):
    return coherent_intensity(
        mode, [(power_fwd, pol_angle, +1), (power_bwd, pol_angle, -1)], r, phi, z
    )
