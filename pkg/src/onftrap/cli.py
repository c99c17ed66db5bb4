"""Command-line entry point: ``onftrap <subcommand> --config cfg.yaml --out DIR``.

Subcommands write CSV/JSON files, each headed by the package version, the
config digest and the seed. ``pipeline`` runs everything and writes a
manifest whose digest depends only on the config (figures excluded).

Exit codes: 0 success, 1 validation, 2 numerical failure, 3 I/O.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import trap as tr
from .config import RunConfig, default_config, load_config
from .dynamics import monte_carlo_signal, pulse_sequence_signal
from .errors import NumericalError, OnfTrapError, ValidationError
from .fiber import SINGLE_MODE_V

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


# --- file emission -------------------------------------------------------------


def file_header(cfg: RunConfig, kind: str) -> dict:
    return {"artifact": "onftrap", "version": __version__, "kind": kind,
            "config_digest": cfg.digest(), "seed": cfg.seed}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, cfg, kind, body):
    doc = {"header": file_header(cfg, kind), **_clean(body)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return Path(path)


def write_table(path, cfg, kind, columns, rows, extra_header=None):
    """CSV with ``# key: value`` header lines; floats use round-trip repr."""
    head = file_header(cfg, kind)
    head.update(extra_header or {})
    with Path(path).open("w", newline="") as fh:
        for k, v in head.items():
            fh.write(f"# {k}: {v}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")
    return Path(path)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- commands ------------------------------------------------------------------


def cmd_modes(cfg: RunConfig, out: Path):
    rows = []
    for i, beam in enumerate(cfg.trap.beams):
        m = tr.mode_for(cfg.trap.fiber, beam.wavelength)
        rows.append([i, beam.role, beam.wavelength, m.n_core, m.beta, m.q, m.h,
                     1.0 / m.q, m.decay_length, m.v_number, bool(m.v_number < SINGLE_MODE_V),
                     m.hybrid_parameter, m.power_fraction_outside])
    cols = ["beam", "role", "wavelength_m", "n_core", "beta_per_m", "q_per_m", "h_per_m",
            "field_decay_length_m", "intensity_decay_length_m", "v_number", "single_mode",
            "hybrid_parameter", "power_fraction_outside"]
    return [write_table(out / "modes.csv", cfg, "modes", cols, rows)]


def _probe_label(on):
    return "probe_on" if on else "probe_off"


def cmd_potential(cfg: RunConfig, out: Path, probe=True, figures=False):
    c = cfg.with_probe(probe)
    label = _probe_label(probe and cfg.trap.has_probe)
    field_ = tr.build_potential(c.trap)
    rep = replace(tr.trap_report(c.trap, field_, c.harmonic_window), config_digest=cfg.digest())
    from .atoms import joule_to_microkelvin

    uk = joule_to_microkelvin(field_.values)
    rows = ((r, p, u, k) for j, p in enumerate(field_.phi)
            for r, u, k in zip(field_.r, field_.values[j], uk[j]))
    files = [
        write_table(out / f"potential_{label}.csv", cfg, "potential-field",
                    ["r_m", "phi_rad", "U_J", "U_uK"], rows, {"probe": label}),
        write_json(out / f"trap_report_{label}.json", cfg, "trap-report",
                   {"probe": label, "report": rep.to_dict()}),
    ]
    if figures:
        from . import plotting

        plotting.potential_map(field_, out / f"potential_{label}.png", c.trap.fiber.radius, label)
    return files, rep


def cmd_sensitivity(cfg: RunConfig, out: Path, fraction=None):
    frac = cfg.sensitivity_fraction if fraction is None else fraction
    res = tr.sensitivity_analysis(cfg.trap, frac, angle_scale=cfg.angle_scale,
                                  window=cfg.harmonic_window)
    return [write_json(out / "sensitivity.json", cfg, "sensitivity", res.to_dict())], res


def cmd_simulate(cfg: RunConfig, out: Path, radial_only=None, figures=False, npz=False):
    sim = cfg.simulation
    ro = sim.radial_only if radial_only is None else radial_only
    if not cfg.trap.has_probe:
        raise ValidationError("simulate needs a probe beam (the signal is the probe coupling)")
    if sim.pulses:
        res = pulse_sequence_signal(cfg.trap, cfg.dist, cfg.signal, sim.pulses, sim.dt,
                                    radial_only=ro, workers=sim.workers)
    else:
        res = monte_carlo_signal(cfg.trap, cfg.dist, cfg.signal, sim.dt, sim.duration,
                                 radial_only=ro, workers=sim.workers)
    s = res.series
    extra = {"radial_only": ro, "atoms": cfg.dist.atom_count, "lost_atoms": res.meta["lost_atoms"],
             "all_lost": res.all_lost, "dt_s": repr(sim.dt),
             "pulses_s": json.dumps([list(p) for p in sim.pulses])}
    files = [write_table(out / "series.csv", cfg, "time-series", ["t_s", "signal"],
                         zip(s.times, s.values), extra)]
    if npz:
        head = {**file_header(cfg, "time-series"), **{k: str(v) for k, v in extra.items()}}
        an.write_series_npz(s, out / "series.npz", head)
        files.append(out / "series.npz")
    summary = {"radial_only": ro, "lost_atoms": res.meta["lost_atoms"], "all_lost": res.all_lost,
               "r_min_probe_m": res.r_min_probe, "phi_min_probe_rad": res.phi_min_probe,
               "r_min_no_probe_m": res.r_min_no_probe, "nu_r_Hz": res.nu_r, "nu_phi_Hz": res.nu_phi,
               "samples": int(s.values.size), "dt_s": sim.dt,
               "pulses_s": [list(p) for p in sim.pulses]}
    files.append(write_json(out / "simulation.json", cfg, "simulation", summary))
    if figures:
        from . import plotting

        plotting.time_series(s, out / "series.png", an.moving_average(s, cfg.analysis.moving_average)
                             if cfg.analysis.moving_average >= s.dt else None, sim.pulses)
    return files, res


def _pulses_from_meta(meta):
    raw = meta.get("pulses_s")
    if not raw:
        return []
    try:
        return [tuple(float(v) for v in p) for p in json.loads(raw)]
    except (TypeError, ValueError):
        raise ValidationError(f"unreadable pulses_s header: {raw!r}") from None


def analyze_series(series: an.TimeSeries, settings, pulses=(), max_peaks=None):
    """Spectrum, fitted peaks (ascending frequency), unresolved candidates and lifetime.

    Candidates are fitted strongest first; one lying inside an already fitted
    line is skipped. A failed fit of the strongest candidate is fatal, later
    failures are reported as unresolved.
    """
    s = series
    if settings.bin_width > s.dt * (1 + 1e-9):
        s = an.bin_series(s, settings.bin_width)
    seg_start = settings.start
    seg = s
    if pulses:
        # spectrum of the first burst only; the gaps would imprint the pulse period
        seg = s.segment(pulses[0][0], pulses[0][1])
        seg_start = pulses[0][0] + settings.start
    spec = an.power_spectrum(seg, start=seg_start, taper=settings.taper)
    n_max = settings.max_peaks if max_peaks is None else max_peaks
    peaks, unresolved = [], []
    smooth = an.smooth_spectrum(spec, settings.smooth_bins)
    cands = sorted(an.find_peaks(smooth, settings.min_prominence, settings.band), key=lambda c: -c.power)
    for c in cands[: 3 * n_max]:
        if len(peaks) >= n_max:
            break
        if any(abs(c.frequency - p.center) < max(p.fwhm, 3 * spec.df) for p in peaks):
            continue
        try:
            pk = an.fit_lorentzian(spec, c.frequency, settings.fit_half_window,
                                   smooth_bins=settings.smooth_bins)
        except an.FitError as exc:
            if not peaks:
                raise
            unresolved.append({"frequency_Hz": c.frequency, "reason": str(exc)})
            continue
        # a side lobe of a fitted line converges back onto it
        if not any(abs(pk.center - p.center) < 0.5 * max(p.fwhm, pk.fwhm) for p in peaks):
            peaks.append(pk)
    peaks.sort(key=lambda p: p.center)
    lifetime = {}
    if pulses:
        env = an.fit_pulse_envelope(s, pulses)
        lifetime["pulse_envelope"] = env.to_dict()
        lifetime["pulse_peak_amplitudes"] = an.pulse_peak_amplitudes(s, pulses)
    else:
        lifetime["exponential"] = an.fit_exponential_decay(
            s, settings.lifetime_start, offset=settings.lifetime_offset).to_dict()
    return spec, peaks, unresolved, lifetime


def cmd_analyze(cfg: RunConfig, out: Path, series_path=None, figures=False):
    path = Path(series_path) if series_path else out / "series.csv"
    if path.suffix == ".npz":
        series = an.read_series_npz(path)
    else:
        series = an.read_series_csv(path)
    pulses = _pulses_from_meta(series.meta)
    # a radial-only record carries a single oscillation mode
    radial_only = series.meta.get("radial_only", "").lower() == "true"
    spec, peaks, unresolved, lifetime = analyze_series(
        series, cfg.analysis, pulses, max_peaks=1 if radial_only else None)
    if radial_only:
        labels = ["radial"]
    elif len(peaks) == 2:
        labels = ["azimuthal", "radial"]
    else:
        labels = [f"peak{i}" for i in range(len(peaks))]
    files = [
        write_table(out / "spectrum.csv", cfg, "power-spectrum", ["frequency_Hz", "power"],
                    zip(spec.frequency, spec.power), {"source": path.name}),
        write_json(out / "peaks.json", cfg, "peaks",
                   {"source": path.name, "df_Hz": spec.df,
                    "peaks": [{"label": lab, **p.to_dict()} for lab, p in zip(labels, peaks)],
                    "unresolved": unresolved}),
        write_json(out / "lifetime.json", cfg, "lifetime", {"source": path.name, **lifetime}),
    ]
    if cfg.analysis.moving_average >= series.dt:
        sm = an.moving_average(series, cfg.analysis.moving_average)
        files.append(write_table(out / "series_smoothed.csv", cfg, "time-series",
                                 ["t_s", "signal"], zip(sm.times, sm.values),
                                 {"moving_average_s": repr(cfg.analysis.moving_average)}))
    if figures:
        from . import plotting

        plotting.spectrum(spec, out / "spectrum.png", peaks, cfg.analysis.band)
    return files, (spec, peaks, lifetime)


def cmd_pipeline(cfg: RunConfig, out: Path, fraction=None, radial_only=None, figures=False):
    files = []
    files += cmd_modes(cfg, out)
    for on in (False, True):
        f, _ = cmd_potential(cfg, out, probe=on, figures=figures)
        files += f
    files += cmd_sensitivity(cfg, out, fraction)[0]
    files += cmd_simulate(cfg, out, radial_only, figures=figures)[0]
    files += cmd_analyze(cfg, out, figures=figures)[0]
    entries = [{"file": p.name, "sha256": sha256_file(p)} for p in files]
    digest = hashlib.sha256("".join(e["file"] + e["sha256"] for e in entries).encode()).hexdigest()
    manifest = write_json(out / "manifest.json", cfg, "manifest",
                          {"config_digest": cfg.digest(), "seed": cfg.seed,
                           "files": entries, "manifest_digest": digest})
    return files + [manifest], digest


# --- argument handling -----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run config (default: bundled reference)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config out_dir)")
    common.add_argument("--seed", type=int, metavar="N", help="RNG seed (overrides config)")
    common.add_argument("--figures", action="store_true", help="also render PNG quick-look figures")

    p = _Parser(prog="onftrap", description="Nanofiber two-color trap simulator and signal analysis")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("modes", parents=[common], help="HE11 mode parameters per beam")
    sp = sub.add_parser("potential", parents=[common], help="potential map and trap report")
    sp.add_argument("--probe", choices=("on", "off"), default="on")
    ss = sub.add_parser("sensitivity", parents=[common], help="trap-frequency parameter scan")
    ss.add_argument("--fraction", type=float, metavar="F")
    sm = sub.add_parser("simulate", parents=[common], help="Monte Carlo probe signal")
    sm.add_argument("--radial-only", action="store_true")
    sm.add_argument("--npz", action="store_true", help="also write a binary series.npz")
    sa = sub.add_parser("analyze", parents=[common], help="spectrum, peaks and lifetime of a series")
    sa.add_argument("series", nargs="?", help="series CSV/NPZ (default: OUT/series.csv)")
    pp = sub.add_parser("pipeline", parents=[common], help="everything, plus a manifest")
    pp.add_argument("--fraction", type=float, metavar="F")
    pp.add_argument("--radial-only", action="store_true")
    return p


def _load(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError("--seed must be >= 0")
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "fraction", None) is not None and not args.fraction >= 0:
        raise ValidationError("--fraction must be >= 0")
    out = Path(args.out if args.out else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, out = _load(args)
        ro = True if getattr(args, "radial_only", False) else None
        if args.command == "modes":
            files = cmd_modes(cfg, out)
        elif args.command == "potential":
            files = cmd_potential(cfg, out, args.probe == "on", args.figures)[0]
        elif args.command == "sensitivity":
            files = cmd_sensitivity(cfg, out, args.fraction)[0]
        elif args.command == "simulate":
            files = cmd_simulate(cfg, out, ro, args.figures, args.npz)[0]
        elif args.command == "analyze":
            files = cmd_analyze(cfg, out, args.series, args.figures)[0]
        else:
            files, digest = cmd_pipeline(cfg, out, args.fraction, ro, args.figures)
            print(f"manifest digest {digest}")
    except ValidationError as exc:
        print(f"onftrap: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"onftrap: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, OnfTrapError, ArithmeticError) as exc:
        print(f"onftrap: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in files:
        print(f)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
