"""Quick-look figures rendered next to the CSV outputs.

Figures are a convenience only: they are never listed in manifests or
digests, and every number they show is also in a CSV.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def potential_map(field_, path, radius, title=""):
    """Polar colour map of U (uK) over the transverse plane."""
    plt = _plt()
    from .atoms import joule_to_microkelvin

    # close the periodic phi grid so the map has no seam
    u = joule_to_microkelvin(np.vstack([field_.values, field_.values[:1]]))
    rr, pp = np.meshgrid(field_.r, np.append(field_.phi, field_.phi[0] + 2 * np.pi))
    x, y = rr * np.cos(pp) * 1e9, rr * np.sin(pp) * 1e9
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    lim = max(-u.min(), 1.0)
    m = ax.pcolormesh(x, y, np.clip(u, -lim, lim), shading="gouraud", cmap="RdBu_r",
                      vmin=-lim, vmax=lim)
    ax.add_patch(plt.Circle((0, 0), radius * 1e9, color="0.6"))
    ax.set_aspect("equal")
    ax.set_xlabel("x (nm)")
    ax.set_ylabel("y (nm)")
    if title:
        ax.set_title(title)
    fig.colorbar(m, ax=ax, label="U (uK)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def time_series(series, path, smoothed=None, pulses=()):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.2))
    t = series.times * 1e6
    ax.plot(t, series.values, lw=0.4, color="0.7", label="signal")
    if smoothed is not None:
        ax.plot(smoothed.times * 1e6, smoothed.values, lw=0.9, color="C0", label="moving average")
    for a, b in pulses:
        ax.axvspan(a * 1e6, b * 1e6, color="C1", alpha=0.08, lw=0)
    ax.set_xlabel("t (us)")
    ax.set_ylabel("signal (arb.)")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def spectrum(spec, path, peaks=(), band=None):
    plt = _plt()
    from .analysis import lorentzian

    fig, ax = plt.subplots(figsize=(6, 3.2))
    f = spec.frequency / 1e3
    sel = slice(None)
    if band is not None:
        sel = (spec.frequency >= band[0]) & (spec.frequency <= band[1])
    ax.plot(f[sel], spec.power[sel], lw=0.8, color="k")
    for pk in peaks:
        ff = spec.frequency[sel]
        ax.plot(ff / 1e3, lorentzian(ff, pk.center, pk.fwhm, pk.amplitude, pk.baseline),
                lw=0.8, ls="--")
    ax.set_xlabel("frequency (kHz)")
    ax.set_ylabel("power (arb.)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
