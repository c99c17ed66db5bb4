"""Signal processing for polarimetric time series.

Binning/smoothing, one-sided power spectra, peak picking, Lorentzian and
exponential fits. Fits use scipy's Levenberg-Marquardt (MINPACK) with a
finite-difference Jacobian.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks as _scipy_find_peaks

from .errors import (
    DegenerateWidthError,
    DomainError,
    FitError,
    NoDecayError,
    SegmentError,
    ValidationError,
)

MAX_ITER = 200
XTOL = 1e-10


@dataclass
class TimeSeries:
    t0: float
    dt: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not self.dt > 0:
            raise ValidationError("time step must be > 0")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("time series contains non-finite values")

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def segment(self, start=None, stop=None) -> "TimeSeries":
        t = self.times
        sel = np.ones(t.size, bool)
        if start is not None:
            sel &= t >= start - 1e-9 * self.dt
        if stop is not None:
            sel &= t < stop - 1e-9 * self.dt
        idx = np.nonzero(sel)[0]
        if idx.size == 0:
            return TimeSeries(self.t0, self.dt, np.empty(0), dict(self.meta))
        return TimeSeries(t[idx[0]], self.dt, self.values[idx], dict(self.meta))


def bin_series(series: TimeSeries, bin_width: float) -> TimeSeries:
    """Average consecutive samples into bins of ``bin_width`` (rounded to whole samples)."""
    n = int(round(bin_width / series.dt))
    if n < 1:
        raise ValidationError("bin width shorter than the sample spacing")
    m = series.values.size // n
    v = series.values[: m * n].reshape(m, n).mean(axis=1)
    return TimeSeries(series.t0 + 0.5 * (n - 1) * series.dt, n * series.dt, v, dict(series.meta))


def moving_average(series: TimeSeries, window: float) -> TimeSeries:
    """Centered boxcar of ``round(window/dt)`` samples, forced odd.

    Near the ends the window shrinks symmetrically so it stays centered.
    """
    if window < series.dt * (1 - 1e-9):
        raise ValidationError(f"moving-average window {window:g} s is shorter than dt")
    n = int(round(window / series.dt))
    if n % 2 == 0:
        n += 1
    if n == 1:
        return TimeSeries(series.t0, series.dt, series.values.copy(), dict(series.meta))
    half = n // 2
    x = series.values
    N = x.size
    idx = np.arange(N)
    h = np.minimum(half, np.minimum(idx, N - 1 - idx))
    cs = np.concatenate([[0.0], np.cumsum(x)])
    out = (cs[idx + h + 1] - cs[idx - h]) / (2 * h + 1)
    return TimeSeries(series.t0, series.dt, out, dict(series.meta))


@dataclass
class Spectrum:
    frequency: np.ndarray  # Hz
    power: np.ndarray  # signal units^2 per bin

    @property
    def df(self) -> float:
        return float(self.frequency[1] - self.frequency[0])


def power_spectrum(series: TimeSeries, start=None, taper="none") -> Spectrum:
    """One-sided power spectrum of the mean-subtracted segment after ``start``.

    Normalized so that the bins sum to the mean square of the segment
    (Parseval). ``taper='hann'`` applies a Hann window, rescaled by its
    mean square.
    """
    seg = series.segment(start) if start is not None else series
    x = seg.values
    if x.size < 2:
        raise SegmentError("fewer than 2 samples in the spectral segment")
    x = x - x.mean()
    N = x.size
    if taper == "hann":
        w = np.hanning(N)
        x = x * w / np.sqrt(np.mean(w**2))
    elif taper != "none":
        raise ValidationError(f"unknown taper {taper!r}")
    X = np.fft.rfft(x)
    p = np.abs(X) ** 2 / N**2
    p[1:] *= 2
    if N % 2 == 0:
        p[-1] /= 2
    f = np.fft.rfftfreq(N, seg.dt)
    return Spectrum(f, p)


def smooth_spectrum(spectrum: Spectrum, bins: int) -> Spectrum:
    """Daniell estimate: centered running mean over ``bins`` (odd) frequency bins.

    Used to locate lines made of many unresolved spikes (a dephasing
    ensemble of undamped oscillators); fits still run on the raw bins.
    """
    bins = int(bins)
    if bins < 1 or bins % 2 == 0:
        raise ValidationError(f"smoothing width must be an odd number of bins, got {bins}")
    if bins == 1:
        return spectrum
    pad = bins // 2
    p = np.pad(spectrum.power, pad, mode="reflect")
    cs = np.concatenate([[0.0], np.cumsum(p)])
    return Spectrum(spectrum.frequency, (cs[bins:] - cs[:-bins]) / bins)


@dataclass(frozen=True)
class PeakCandidate:
    index: int
    frequency: float
    power: float
    prominence: float


def find_peaks(spectrum: Spectrum, min_prominence=0.05, band=None) -> list[PeakCandidate]:
    """Local maxima with prominence above ``min_prominence * max(power in band)``."""
    f, p = spectrum.frequency, spectrum.power
    sel = np.ones(f.size, bool)
    if band is not None:
        sel = (f >= band[0]) & (f <= band[1])
    if not sel.any():
        return []
    offset = int(np.argmax(sel))
    pp = p[sel]
    top = pp.max()
    if top <= 0:
        return []
    idx, props = _scipy_find_peaks(pp, prominence=min_prominence * top)
    return [
        PeakCandidate(int(i + offset), float(f[i + offset]), float(pp[i]), float(pr))
        for i, pr in zip(idx, props["prominences"])
    ]


def lorentzian(f, f0, gamma, amplitude, baseline=0.0):
    hw2 = (gamma / 2) ** 2
    return amplitude * hw2 / ((f - f0) ** 2 + hw2) + baseline


def frequency_uncertainty(fwhm, snr):
    """Uncertainty of a peak center: FWHM over signal-to-noise ratio."""
    if not snr > 0:
        raise DomainError("signal-to-noise ratio must be > 0")
    if np.isinf(snr):
        return 0.0
    return fwhm / snr


@dataclass(frozen=True)
class SpectrumPeak:
    center: float
    fwhm: float
    amplitude: float
    baseline: float
    snr: float
    stderr: dict
    n_bins: int = 0
    uncertainty: float = field(init=False)

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValidationError("peak FWHM must be > 0")
        if not self.snr > 0:
            raise ValidationError("peak SNR must be > 0")
        object.__setattr__(self, "uncertainty", frequency_uncertainty(self.fwhm, self.snr))

    @property
    def decoherence_time(self) -> float:
        """1/(pi FWHM): decay time of the matching damped oscillation."""
        return 1.0 / (np.pi * self.fwhm)

    def to_dict(self) -> dict:
        return {
            "center_Hz": self.center,
            "fwhm_Hz": self.fwhm,
            "amplitude": self.amplitude,
            "baseline": self.baseline,
            "snr": self.snr,
            "uncertainty_Hz": self.uncertainty,
            "decoherence_time_s": self.decoherence_time,
            "stderr": dict(self.stderr),
            "n_bins": self.n_bins,
        }


def _half_power_width(f, p, i):
    half = 0.5 * p[i]
    lo = i
    while lo > 0 and p[lo] > half:
        lo -= 1
    hi = i
    while hi < p.size - 1 and p[hi] > half:
        hi += 1
    return max(f[hi] - f[lo], f[1] - f[0])


def _stderr(res, n_params):
    dof = max(res.fun.size - n_params, 1)
    s2 = 2 * res.cost / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
        return np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        return np.full(n_params, np.nan)


def fit_lorentzian(spectrum: Spectrum, center=None, half_window=None, min_bins=5,
                   smooth_bins=1) -> SpectrumPeak:
    """Least-squares Lorentzian plus constant baseline around one peak.

    ``center`` picks the starting bin (default: global maximum); the fit
    window spans ``center +- half_window`` Hz (default: three half-power
    widths, at least ``min_bins`` bins).

    With ``smooth_bins`` = k > 1 the spectrum is Daniell-smoothed and the
    model is smoothed the same way (the mean of the Lorentzian over the k
    bin offsets), so the fitted width is not broadened by the smoothing.
    """
    f, p = spectrum.frequency, spectrum.power
    df = spectrum.df
    ps = smooth_spectrum(spectrum, smooth_bins).power
    i0 = int(np.argmax(ps)) if center is None else int(np.argmin(np.abs(f - center)))
    # climb to the local maximum near the requested center
    while 0 < i0 < ps.size - 1 and max(ps[i0 - 1], ps[i0 + 1]) > ps[i0]:
        i0 = i0 - 1 if ps[i0 - 1] > ps[i0 + 1] else i0 + 1
    width0 = _half_power_width(f, ps, i0)
    if half_window is None:
        half_window = max(3 * width0, (min_bins // 2 + 1) * df)
    sel = np.abs(f - f[i0]) <= half_window * (1 + 1e-12)
    n = int(sel.sum())
    if n < min_bins:
        raise DegenerateWidthError(f"fit window holds {n} bins; at least {min_bins} needed")
    fx, py = f[sel], ps[sel]
    scale = ps[i0] if ps[i0] > 0 else 1.0
    x0 = np.array([f[i0], width0, 1.0, float(np.min(py) / scale)])
    fscale = np.array([df, df, 1.0, 1.0])
    offsets = df * (np.arange(smooth_bins) - smooth_bins // 2)

    def resid(x):
        f0_, g_ = x[0] * df, abs(x[1]) * df
        model = np.mean([lorentzian(fx + o, f0_, g_, x[2], x[3]) for o in offsets], axis=0)
        return model - py / scale

    res = least_squares(
        resid, x0 / fscale, method="lm", xtol=XTOL, ftol=XTOL, gtol=XTOL, max_nfev=MAX_ITER * 5,
    )
    f0, gamma, amp, base = res.x[0] * df, abs(res.x[1]) * df, res.x[2] * scale, res.x[3] * scale
    if not res.success:
        if gamma < df:
            # sliding into the zero-width, infinite-amplitude valley
            raise DegenerateWidthError(
                f"fit collapsed toward zero width ({gamma:.4g} Hz < one bin, {df:.4g} Hz)")
        raise FitError(f"Lorentzian fit did not converge: {res.message} (nfev={res.nfev})")
    if gamma < df:
        raise DegenerateWidthError(f"fitted width {gamma:.4g} Hz is below one bin ({df:.4g} Hz)")
    if not fx[0] <= f0 <= fx[-1]:
        raise FitError(f"fitted center {f0:.6g} Hz left the fit window [{fx[0]:.6g}, {fx[-1]:.6g}] Hz")
    se = _stderr(res, 4) * np.array([df, df, scale, scale])
    rms = float(np.sqrt(np.mean(res.fun**2))) * scale
    snr = amp / rms if rms > 0 else np.inf
    if not snr > 0:
        raise FitError("fitted Lorentzian amplitude is not positive")
    return SpectrumPeak(
        center=float(f0), fwhm=float(gamma), amplitude=float(amp), baseline=float(base),
        snr=float(snr),
        stderr={"center": float(se[0]), "fwhm": float(se[1]), "amplitude": float(se[2]),
                "baseline": float(se[3])},
        n_bins=n,
    )


@dataclass(frozen=True)
class DecayFit:
    tau: float
    stderr: float
    amplitude: float
    offset: float

    def to_dict(self) -> dict:
        return {"tau_s": self.tau, "tau_stderr_s": self.stderr,
                "amplitude": self.amplitude, "offset": self.offset}


def fit_exponential_decay(series: TimeSeries, t_start=None, offset=True) -> DecayFit:
    """Fit ``A exp(-(t - t_start)/tau) + C`` to the segment after ``t_start``."""
    seg = series.segment(t_start) if t_start is not None else series
    return _fit_decay(seg.times - seg.t0, seg.values, offset)


def _fit_decay(t, y, offset=True) -> DecayFit:
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if y.size < 10:
        raise SegmentError("fewer than 10 samples in the decay segment")
    slope = np.polyfit(t, y, 1)[0]
    # a drop below round-off of the data scale is no trend
    if not slope * (t[-1] - t[0]) < -1e-9 * np.max(np.abs(y)):
        raise NoDecayError("segment shows no decreasing trend")
    span = t[-1] - t[0]
    yscale = np.max(np.abs(y)) or 1.0
    yn = y / yscale
    # log-linear start on the positive part
    tail = yn[-max(y.size // 10, 1):].mean() if offset else 0.0
    pos = yn - tail
    good = pos > 1e-3 * np.max(pos) if np.max(pos) > 0 else np.zeros_like(pos, bool)
    if good.sum() >= 3:
        k, b = np.polyfit(t[good] / span, np.log(pos[good]), 1)
        tau0 = -1.0 / k if k < 0 else 1.0
        a0 = np.exp(b)
    else:
        tau0, a0 = 1.0, yn[0]
    x0 = [a0, tau0, tail] if offset else [a0, tau0]

    def resid(x):
        model = x[0] * np.exp(-(t / span) / x[1])
        if offset:
            model = model + x[2]
        return model - yn

    res = least_squares(resid, x0, method="lm", xtol=XTOL, ftol=XTOL, gtol=XTOL,
                        max_nfev=MAX_ITER * 5)
    if not res.success:
        raise FitError(f"exponential fit did not converge: {res.message}")
    se = _stderr(res, len(x0))
    tau = abs(res.x[1]) * span
    return DecayFit(
        tau=float(tau), stderr=float(se[1] * span), amplitude=float(res.x[0] * yscale),
        offset=float(res.x[2] * yscale) if offset else 0.0,
    )


@dataclass(frozen=True)
class DampedFit:
    tau: float
    tau_stderr: float
    frequencies: tuple
    frequency_stderr: tuple


def fit_damped_sinusoids(
    series: TimeSeries, frequencies, t_start=None, tau0=None, max_samples=50_000
) -> DampedFit:
    """Time-domain fit of ``exp(-t/tau) * sum_i (a_i sin + b_i cos)(2 pi f_i t) + c``.

    ``frequencies`` seed the fit (e.g. Lorentzian centers); one common decay
    time is shared by all tones. Long records are strided down to at most
    ``max_samples`` points, which must still oversample the highest tone.
    """
    seg = series.segment(t_start) if t_start is not None else series
    stride = max(1, -(-seg.values.size // max_samples))
    if stride > 1 and 1.0 / (stride * seg.dt) < 8 * max(frequencies):
        stride = max(1, int(1.0 / (8 * max(frequencies) * seg.dt)))
    t = (seg.times - seg.t0)[::stride]
    y = seg.values[::stride]
    span = t[-1] - t[0]
    yscale = np.max(np.abs(y)) or 1.0
    yn = y / yscale
    f0 = np.asarray(frequencies, float)
    nt = f0.size
    tau0 = span / 3 if tau0 is None else tau0

    # linear amplitudes for the seeds
    env = np.exp(-t / tau0)
    cols = []
    for f in f0:
        cols += [env * np.sin(2 * np.pi * f * t), env * np.cos(2 * np.pi * f * t)]
    cols.append(np.ones_like(t))
    lin = np.linalg.lstsq(np.column_stack(cols), yn, rcond=None)[0]
    fs = 1.0 / span

    def model(x):
        tau = abs(x[0]) * span
        e = np.exp(-t / tau)
        out = np.full_like(t, x[-1])
        for i in range(nt):
            f = x[1 + i] * fs
            a, b = x[1 + nt + 2 * i], x[2 + nt + 2 * i]
            ph = 2 * np.pi * f * t
            out += e * (a * np.sin(ph) + b * np.cos(ph))
        return out

    x0 = np.concatenate([[tau0 / span], f0 / fs, lin[:-1], [lin[-1]]])
    res = least_squares(lambda x: model(x) - yn, x0, method="lm", xtol=XTOL, ftol=XTOL,
                        gtol=XTOL, max_nfev=MAX_ITER * (x0.size + 1))
    if not res.success:
        raise FitError(f"damped-sinusoid fit did not converge: {res.message}")
    se = _stderr(res, x0.size)
    return DampedFit(
        tau=float(abs(res.x[0]) * span),
        tau_stderr=float(se[0] * span),
        frequencies=tuple(float(v) for v in res.x[1:1 + nt] * fs),
        frequency_stderr=tuple(float(v) for v in se[1:1 + nt] * fs),
    )


# --- pulsed sequences --------------------------------------------------------


def pulse_segments(series: TimeSeries, pulses):
    """Per-pulse sub-series for ``pulses`` given as (t_on, t_off) pairs."""
    return [series.segment(on, off) for on, off in pulses]


def pulse_peak_amplitudes(series: TimeSeries, pulses, settle=0.0):
    """Largest signal value in each pulse, skipping ``settle`` seconds after turn-on.

    Pulses past the end of a truncated series report 0.
    """
    out = []
    for on, off in pulses:
        v = series.segment(on + settle, off).values
        out.append(float(v.max()) if v.size else 0.0)
    return out


def pulse_envelope(series: TimeSeries, pulses, tail_fraction=0.5):
    """(time, level) per pulse: mean signal over the last ``tail_fraction`` of it."""
    ts, levels = [], []
    for seg in pulse_segments(series, pulses):
        n = seg.values.size
        if n == 0:
            continue
        tail = seg.values[int(n * (1 - tail_fraction)):]
        t_tail = seg.times[int(n * (1 - tail_fraction)):]
        ts.append(float(t_tail.mean()))
        levels.append(float(tail.mean()))
    return np.array(ts), np.array(levels)


def fit_pulse_envelope(series: TimeSeries, pulses, tail_fraction=0.5) -> DecayFit:
    """Exponential (no offset) through the per-pulse envelope levels."""
    t, y = pulse_envelope(series, pulses, tail_fraction)
    if t.size < 2:
        raise SegmentError("envelope fit needs at least two pulses")
    if not np.all(y > 0):
        raise NoDecayError("non-positive pulse envelope level")
    A = np.column_stack([np.ones_like(t), t - t[0]])
    (b, k), res, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    if not k < 0:
        raise NoDecayError("pulse envelope does not decrease")
    dof = max(t.size - 2, 1)
    s2 = float(np.sum((A @ np.array([b, k]) - np.log(y)) ** 2)) / dof
    cov = np.linalg.inv(A.T @ A) * s2
    tau = -1.0 / k
    return DecayFit(tau=float(tau), stderr=float(np.sqrt(cov[1, 1]) * tau**2),
                    amplitude=float(np.exp(b)), offset=0.0)


# --- I/O ----------------------------------------------------------------------


def write_series_csv(series: TimeSeries, path, header=None):
    """CSV with columns ``t_s,signal``; ``header`` lines are written as ``# key: value``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "signal"])
        for t, v in zip(series.times, series.values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_series_csv(path) -> TimeSeries:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"time series file not found: {path}")
    meta = {}
    rows = []
    with path.open() as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                meta[k.strip()] = v.strip()
                continue
            if line.strip():
                rows.append(line)
    reader = csv.reader(rows)
    head = next(reader)
    if [h.strip() for h in head[:2]] != ["t_s", "signal"]:
        raise ValidationError(f"{path}: expected columns t_s,signal; got {head}")
    data = np.array([[float(a), float(b)] for a, b, *_ in reader])
    if data.shape[0] < 2:
        raise SegmentError(f"{path}: fewer than 2 samples")
    t = data[:, 0]
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if not np.allclose(steps, dt, rtol=1e-6, atol=0):
        raise ValidationError(f"{path}: samples are not uniformly spaced")
    return TimeSeries(float(t[0]), dt, data[:, 1], meta)


def write_series_npz(series: TimeSeries, path, header=None):
    """Binary columnar variant of the CSV (numpy .npz with t_s and signal)."""
    np.savez(path, t_s=series.times, signal=series.values,
             header=np.array(list((header or {}).items()), dtype=str))


def read_series_npz(path) -> TimeSeries:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"time series file not found: {path}")
    with np.load(path) as d:
        t = d["t_s"]
        meta = {str(k): str(v) for k, v in d["header"]} if d["header"].size else {}
        return TimeSeries(float(t[0]), float(t[1] - t[0]), d["signal"], meta)


def write_spectrum_csv(spectrum: Spectrum, path, header=None):
    with Path(path).open("w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frequency_Hz", "power"])
        for f, p in zip(spectrum.frequency, spectrum.power):
            w.writerow([repr(float(f)), repr(float(p))])
