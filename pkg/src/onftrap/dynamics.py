"""Classical Monte Carlo ensemble in the transverse trap plane.

Atoms move in U(r, phi) under velocity Verlet. The integration runs in
Cartesian (x, y), where the scheme is symplectic; states are reported in
polar form. In radial-only mode phi is frozen and r obeys m r'' = -dU/dr.

The probe signal is the mean, over live atoms, of the probe intensity at
each atom, normalized to its value at the with-probe minimum and multiplied
by the trap-loss envelope exp(-t / decay_time).

Random numbers: numpy PCG64. Atom ``i`` draws from
``SeedSequence(seed, spawn_key=(i,))``, so an atom's initial condition does
not depend on the ensemble size, block layout or worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import TimeSeries
from .errors import StepSizeError, ValidationError
from .trap import (
    TrapConfig,
    TransversePotential,
    analyze_trap,
    beam_potential,
    build_potential,
    find_minimum,
)

BLOCK_SIZE = 512


@dataclass(frozen=True)
class InitialDistribution:
    """Initial radial positions around a reference minimum.

    ``center_offset`` is signed, negative toward the fiber. ``reference``
    selects which minimum it is measured from: ``"with_probe"`` (the trap
    the atoms evolve in) or ``"no_probe"``. In 2D runs the atoms start at
    the azimuth of ``phi_reference``; the default, the probe-free minimum,
    makes the probe turn-on kick the azimuthal motion coherently. Radial-only
    runs always sit at the with-probe azimuth.
    """

    shape: str = "flat"
    center_offset: float = -80e-9
    half_width: float = 75e-9
    velocity_model: str = "zero"
    temperature: float = 15e-6
    atom_count: int = 500
    seed: int = 0
    reference: str = "with_probe"
    phi_reference: str = "no_probe"

    def __post_init__(self):
        if self.shape not in ("flat", "delta"):
            raise ValidationError(f"unknown distribution shape {self.shape!r}")
        if self.velocity_model not in ("zero", "thermal"):
            raise ValidationError(f"unknown velocity model {self.velocity_model!r}")
        for ref in (self.reference, self.phi_reference):
            if ref not in ("with_probe", "no_probe"):
                raise ValidationError(f"unknown reference {ref!r}")
        if self.atom_count < 1:
            raise ValidationError("atom_count must be >= 1")
        if self.half_width < 0:
            raise ValidationError("half_width must be >= 0")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")


def atom_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for atom ``index``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def sample_initial_states(dist: InitialDistribution, r_center, phi_center, mass):
    """Arrays (r, phi, v_r, v_phi) for the ensemble; one substream per atom."""
    from scipy.constants import k as kB

    n = dist.atom_count
    r = np.empty(n)
    vr = np.zeros(n)
    vphi = np.zeros(n)
    sigma_v = np.sqrt(kB * dist.temperature / mass)
    for i in range(n):
        g = atom_rng(dist.seed, i)
        u = g.uniform(-1.0, 1.0) if dist.shape == "flat" else 0.0
        r[i] = r_center + dist.center_offset + dist.half_width * u
        if dist.velocity_model == "thermal":
            vr[i], vphi[i] = g.normal(0.0, sigma_v, size=2)
    return r, np.full(n, float(phi_center)), vr, vphi


@dataclass(frozen=True)
class SignalModel:
    decay_time: float = 265e-6
    normalization: float = 1.0

    def __post_init__(self):
        if not self.decay_time > 0:
            raise ValidationError("decay_time must be > 0")


@dataclass
class Trajectory:
    dt: float
    states: np.ndarray  # (n_samples, 4): r, phi, v_r, v_phi
    lost_at: int | None = None  # first sample index at which the atom is gone

    @property
    def lost(self) -> bool:
        return self.lost_at is not None

    @property
    def times(self):
        return self.dt * np.arange(self.states.shape[0])


class _Ensemble:
    """Vectorized velocity-Verlet state for a block of atoms."""

    def __init__(self, potential, mass, r, phi, vr, vphi, radial_only, r_lost_out):
        self.pot = potential
        self.m = mass
        self.radial_only = radial_only
        self.a = potential.radius
        self.r_out = r_lost_out
        self.alive = np.ones(r.size, bool)
        self.phi0 = np.array(phi, float)
        if radial_only:
            self.r = np.array(r, float)
            self.v = np.array(vr, float)
            self.acc = self._acc_radial(self.r)
        else:
            c, s = np.cos(phi), np.sin(phi)
            self.x = r * c
            self.y = r * s
            self.vx = vr * c - vphi * s
            self.vy = vr * s + vphi * c
            self.ax, self.ay = self._acc_xy(self.x, self.y)
        self._mark_lost()

    def _acc_radial(self, r):
        dr, _ = self.pot.gradient(np.clip(r, self.a, self.r_out), self.phi0)
        return -dr / self.m

    def _acc_xy(self, x, y):
        r = np.hypot(x, y)
        phi = np.arctan2(y, x)
        rc = np.clip(r, self.a, self.r_out)
        dr, dphi = self.pot.gradient(rc, phi)
        c, s = x / r, y / r
        fx = -(dr * c - dphi * s / r)
        fy = -(dr * s + dphi * c / r)
        return fx / self.m, fy / self.m

    def polar(self):
        if self.radial_only:
            return self.r, self.phi0
        return np.hypot(self.x, self.y), np.arctan2(self.y, self.x)

    def _mark_lost(self):
        r, _ = self.polar()
        self.alive &= (r > self.a) & (r < self.r_out)

    def step(self, dt):
        if self.radial_only:
            self.v = self.v + 0.5 * dt * self.acc
            self.r = self.r + dt * self.v
            self.acc = self._acc_radial(self.r)
            self.v = self.v + 0.5 * dt * self.acc
            dead = ~self.alive
            if dead.any():
                self.v[dead] = 0.0
        else:
            self.vx = self.vx + 0.5 * dt * self.ax
            self.vy = self.vy + 0.5 * dt * self.ay
            self.x = self.x + dt * self.vx
            self.y = self.y + dt * self.vy
            self.ax, self.ay = self._acc_xy(self.x, self.y)
            self.vx = self.vx + 0.5 * dt * self.ax
            self.vy = self.vy + 0.5 * dt * self.ay
            dead = ~self.alive
            if dead.any():
                self.vx[dead] = self.vy[dead] = 0.0
                self.ax[dead] = self.ay[dead] = 0.0
        self._mark_lost()

    def set_potential(self, potential):
        self.pot = potential
        if self.radial_only:
            self.acc = self._acc_radial(self.r)
        else:
            self.ax, self.ay = self._acc_xy(self.x, self.y)

    def energy(self):
        r, phi = self.polar()
        if self.radial_only:
            kin = 0.5 * self.m * self.v**2
        else:
            kin = 0.5 * self.m * (self.vx**2 + self.vy**2)
        return kin + self.pot(r, phi)

    def state(self):
        r, phi = self.polar()
        if self.radial_only:
            return r, phi, self.v, np.zeros_like(r)
        c, s = np.cos(phi), np.sin(phi)
        return r, phi, self.vx * c + self.vy * s, -self.vx * s + self.vy * c


def _local_frequency(potential, r, phi, mass):
    """Largest harmonic frequency implied by the local curvature (Hz)."""
    h = 1e-9
    u0 = potential(r, phi)
    krr = (potential(r + h, phi) - 2 * u0 + potential(r - h, phi)) / h**2
    kpp = (potential(r, phi + h / r) - 2 * u0 + potential(r, phi - h / r)) / h**2
    k = max(float(krr), float(kpp), 0.0)
    return np.sqrt(k / mass) / (2 * np.pi)


def check_step(dt, nu_max):
    if nu_max > 0 and dt > 1.0 / (50 * nu_max):
        raise StepSizeError(
            f"dt = {dt:.3g} s exceeds 1/(50 nu_max) = {1 / (50 * nu_max):.3g} s"
        )


def integrate_trajectory(
    potential, atom, initial_state, dt, duration, radial_only=False, nu_max=None,
    r_max=None,
) -> Trajectory:
    """Single-atom velocity-Verlet trajectory.

    ``initial_state`` is (r, phi, v_r, v_phi). ``nu_max`` defaults to the
    local curvature frequency at the start point. The trajectory stops at
    the first sample where the atom touches the fiber (or leaves ``r_max``).
    """
    r0, phi0, vr0, vphi0 = (float(v) for v in initial_state)
    if nu_max is None:
        nu_max = _local_frequency(potential, r0, phi0, atom.mass)
    check_step(dt, nu_max)
    r_max = r_max if r_max is not None else getattr(potential, "r_max", np.inf)
    ens = _Ensemble(potential, atom.mass, np.array([r0]), np.array([phi0]),
                    np.array([vr0]), np.array([vphi0]), radial_only, r_max)
    n = int(round(duration / dt))
    states = np.empty((n + 1, 4))
    states[0] = [v[0] for v in ens.state()]
    lost_at = None if ens.alive[0] else 0
    last = n
    for i in range(1, n + 1):
        if lost_at is not None:
            last = i - 1
            break
        ens.step(dt)
        states[i] = [v[0] for v in ens.state()]
        if not ens.alive[0]:
            lost_at = i
    return Trajectory(dt, states[: last + 1], lost_at)


def trajectory_energy(potential, atom, traj: Trajectory, radial_only=False):
    r, phi, vr, vphi = traj.states.T
    kin = 0.5 * atom.mass * (vr**2 + (0.0 if radial_only else vphi**2))
    return kin + potential(r, phi)


@dataclass
class SimulationResult:
    series: TimeSeries
    live_count: np.ndarray
    all_lost: bool
    r_min_probe: float
    phi_min_probe: float
    r_min_no_probe: float
    nu_r: float
    nu_phi: float
    meta: dict = field(default_factory=dict)


class _Scenario:
    """Potentials, minima and normalizations shared by the MC entry points."""

    def __init__(self, config: TrapConfig, r_max=None):
        if not config.has_probe:
            raise ValidationError("the Monte Carlo signal needs a probe beam in the config")
        self.config = config
        self.off_config = config.without_probe()
        a = config.fiber.radius
        self.r_max = r_max if r_max is not None else a + config.grid.r_extent + 1.5e-6
        self.pot_on = TransversePotential(config, r_max=self.r_max)
        self.pot_off = TransversePotential(self.off_config, r_max=self.r_max)
        self.min_on = find_minimum(build_potential(config))
        self.min_off = find_minimum(build_potential(self.off_config))
        rep = analyze_trap(config)
        self.nu_r, self.nu_phi = rep.nu_r, rep.nu_phi
        rep_off = analyze_trap(self.off_config)
        self.nu_max = max(rep.nu_r, rep.nu_phi, rep_off.nu_r, rep_off.nu_phi)
        probe_cfg = config.with_beams(b for b in config.beams if b.role == "probe")
        self.coupling = TransversePotential(probe_cfg, r_max=self.r_max)
        self.coupling_ref = float(self.coupling(self.min_on.r, self.min_on.phi))

    def initial(self, dist: InitialDistribution, radial_only):
        ref = self.min_on if dist.reference == "with_probe" else self.min_off
        if radial_only:
            phi = self.min_on.phi
        else:
            phi = (self.min_on if dist.phi_reference == "with_probe" else self.min_off).phi
        return sample_initial_states(dist, ref.r, phi, self.config.atom.mass)

    def coupling_of(self, ens):
        r, phi = ens.polar()
        return self.coupling(np.clip(r, ens.a, ens.r_out), phi) / self.coupling_ref


def _run_blocks(scen: _Scenario, dist, dt, n_steps, radial_only, schedule, workers):
    """Evolve the ensemble in fixed blocks; returns per-block (sum, count) arrays.

    ``schedule(i)`` -> (probe_on: bool) for step ``i`` (sample i is at t = i dt).
    Block partial sums are combined in block order, so results do not
    depend on ``workers``.
    """
    r, phi, vr, vphi = scen.initial(dist, radial_only)
    blocks = [slice(s, min(s + BLOCK_SIZE, r.size)) for s in range(0, r.size, BLOCK_SIZE)]

    def run(sl):
        on = schedule(0)
        ens = _Ensemble(scen.pot_on if on else scen.pot_off, scen.config.atom.mass,
                        r[sl], phi[sl], vr[sl], vphi[sl], radial_only, scen.r_max)
        sums = np.zeros(n_steps + 1)
        counts = np.zeros(n_steps + 1, dtype=np.int64)
        for i in range(n_steps + 1):
            if i > 0:
                now = schedule(i)
                if now != on:
                    ens.set_potential(scen.pot_on if now else scen.pot_off)
                    on = now
                ens.step(dt)
            live = ens.alive
            counts[i] = live.sum()
            if on and counts[i]:
                sums[i] = np.sum(scen.coupling_of(ens)[live])
        return sums, counts

    if workers and workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    total = np.zeros(n_steps + 1)
    count = np.zeros(n_steps + 1, dtype=np.int64)
    for s, c in parts:
        total += s
        count += c
    return total, count


def monte_carlo_signal(
    config: TrapConfig, dist: InitialDistribution, signal: SignalModel, dt=2e-9,
    duration=100e-6, radial_only=True, workers=None, scenario=None,
) -> SimulationResult:
    """Probe signal of an ensemble released into the with-probe potential at t = 0."""
    scen = scenario or _Scenario(config)
    check_step(dt, scen.nu_max)
    n_steps = int(round(duration / dt))
    total, count = _run_blocks(scen, dist, dt, n_steps, radial_only, lambda i: True, workers)
    return _finish(scen, dist, signal, dt, total, count, radial_only)


def pulse_sequence_signal(
    config: TrapConfig, dist: InitialDistribution, signal: SignalModel, pulses, dt=2e-9,
    radial_only=True, workers=None, scenario=None,
) -> SimulationResult:
    """Signal for a train of probe pulses ``[(t_on, t_off), ...]`` (s).

    Between pulses the atoms keep moving in the probe-free trap and no signal
    is recorded. The series starts at the first turn-on.
    """
    pulses = [(float(a), float(b)) for a, b in pulses]
    if not pulses:
        raise ValidationError("pulse list is empty")
    for (a, b), nxt in zip(pulses, pulses[1:] + [None]):
        if not b > a or (nxt is not None and nxt[0] < b):
            raise ValidationError("pulses must be increasing, non-overlapping (t_on, t_off) pairs")
    scen = scenario or _Scenario(config)
    check_step(dt, scen.nu_max)
    t0 = pulses[0][0]
    n_steps = int(round((pulses[-1][1] - t0) / dt))
    edges = [(int(round((a - t0) / dt)), int(round((b - t0) / dt))) for a, b in pulses]

    def schedule(i):
        return any(lo <= i < hi for lo, hi in edges) or (i == n_steps and edges[-1][1] == n_steps)

    total, count = _run_blocks(scen, dist, dt, n_steps, radial_only, schedule, workers)
    res = _finish(scen, dist, signal, dt, total, count, radial_only)
    res.series.t0 = t0
    res.meta["pulses_s"] = pulses
    res.series.meta["pulses_s"] = pulses
    return res


def _finish(scen, dist, signal, dt, total, count, radial_only):
    t = dt * np.arange(total.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), 0.0)
    values = signal.normalization * np.exp(-t / signal.decay_time) * mean
    all_lost = bool(count[-1] == 0)
    if all_lost:
        last = int(np.nonzero(count)[0][-1]) + 1 if count.any() else 1
        values = values[:last]
        count = count[:last]
    meta = {
        "atoms": dist.atom_count,
        "seed": dist.seed,
        "radial_only": radial_only,
        "decay_time_s": signal.decay_time,
        "lost_atoms": int(dist.atom_count - count[-1]),
        "all_lost": all_lost,
    }
    series = TimeSeries(0.0, dt, values, dict(meta))
    return SimulationResult(
        series=series, live_count=count, all_lost=all_lost,
        r_min_probe=scen.min_on.r, phi_min_probe=scen.min_on.phi, r_min_no_probe=scen.min_off.r,
        nu_r=scen.nu_r, nu_phi=scen.nu_phi, meta=meta,
    )
