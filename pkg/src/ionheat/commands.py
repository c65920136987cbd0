"""File-producing operations behind the CLI (simulate / fit) and the run manifest."""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, io, pipelines, plotting, rates, recool, sideband, simlab, survey
from .config import MG25, RunConfig, config_from_dict, config_to_dict
from .errors import ConfigError

SIMULATE_KINDS = ("recool", "scan", "dataset")
FIT_KINDS = ("recool", "scan", "rate", "powerlaw", "survey")


@dataclass
class RunManifest:
    command: str
    config_hash: str | None
    seed: int | None
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    timestamp: str = ""

    def write(self, out_dir):
        """Write ``manifest.json`` (always the last file of a command)."""
        self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        path = Path(out_dir) / "manifest.json"
        d = asdict(self)
        d["outputs"] = [str(p) for p in self.outputs]
        d["inputs"] = [str(p) for p in self.inputs]
        io.write_json(path, d)
        return path


def ensure_out_dir(out_dir):
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as err:
        raise ConfigError(f"output directory {out} is not writable: {err}", "cli") from None
    return out


def _sidecar(path, run: RunConfig, seed, kind, **extra):
    d = {"kind": kind, "seed": seed, "config": config_to_dict(run),
         "config_hash": run.config_hash(), "tool_version": __version__}
    d.update(extra)
    return io.write_json(io.sidecar_path(path), d)


# --- simulate -------------------------------------------------------------

def simulate(kind, run: RunConfig, seed: int, out_dir, figures=True):
    """Run one simulation kind; returns the list of files written."""
    out = ensure_out_dir(out_dir)
    written = []
    if kind == "recool":
        traces = pipelines.simulate_recool(run, seed)
        p = io.write_traces(out / "recool_traces.csv", traces)
        written += [p, _sidecar(p, run, seed, "recool_traces")]
        if figures:
            written.append(plotting.recool_trace_figure(out / "recool_trace.png", traces[-1]))
    elif kind == "scan":
        grid = sideband.default_scan_grid(run.trap, run.raman, run.experiment.scan_points,
                                          run.experiment.scan_half_width)
        scan = sideband.synth_scan(sideband.ThermalState(run.experiment.sideband_nbar),
                                   run.species, run.trap, run.raman, detuning_grid=grid,
                                   shots=run.experiment.shots_per_point,
                                   rng=simlab.rng_for(seed, 3))
        p = io.write_scan(out / "sideband_scan.csv", scan)
        written += [p, _sidecar(p, run, seed, "sideband_scan", scan=io.scan_metadata(scan),
                                injected_nbar=run.experiment.sideband_nbar)]
        if figures:
            written.append(plotting.scan_figure(out / "sideband_scan.png", scan))
    elif kind == "dataset":
        res = pipelines.run_pipeline(run, seed)
        if res.method == "recool":
            p = io.write_traces(out / "recool_traces.csv", res.raw)
            written += [p, _sidecar(p, run, seed, "recool_traces")]
        else:
            for i, pt in enumerate(res.raw):
                p = io.write_scan(out / f"scan_{i:02d}.csv", pt.scan)
                written += [p, _sidecar(p, run, seed, "sideband_scan", delay_s=pt.delay,
                                        scan=io.scan_metadata(pt.scan),
                                        true_mean_n=pt.true_nbar)]
        p = io.write_dataset(out / "heating_dataset.csv", res.dataset)
        written += [p, _sidecar(p, run, seed, "heating_dataset", result=res.to_dict(),
                                fits=[f.to_dict() for f in res.fits])]
        if figures:
            written.append(plotting.rate_figure(out / "heating_dataset.png", res.dataset,
                                                res.rate))
    else:
        raise ConfigError(f"unknown simulate kind {kind!r}", "cli")
    return written


# --- fit ------------------------------------------------------------------

def _config_for(path, run):
    """Explicit config wins; otherwise use the data file's sidecar."""
    if run is not None:
        return run
    side = io.sidecar_path(path)
    if side.exists():
        meta = io.read_json(side)
        if "config" in meta:
            return config_from_dict(meta["config"])
    raise ConfigError(f"{path}: no --config given and no sidecar config found", "cli")


def fit(kind, inputs, out_dir, run: RunConfig | None = None, free_intercept=None,
        figures=True):
    """Fit input file(s); returns (result dict, files written)."""
    out = ensure_out_dir(out_dir)
    inputs = [Path(p) for p in inputs]
    if not inputs:
        raise ConfigError("no input files given", "cli")
    for p in inputs:
        if not p.exists():
            raise ConfigError(f"input {p} does not exist", "cli")
    written = []
    if kind == "recool":
        run = _config_for(inputs[0], run)
        fits = []
        for p in inputs:
            for tr in io.read_traces(p):
                fits.append(recool.fit_recool(tr, run.species, run.trap))
        pts = [rates.HeatingPoint(f.delay, f.nbar0, f.total_stderr) for f in fits]
        result = {"fits": [f.to_dict() for f in fits], "config_hash": run.config_hash()}
        written.append(io.write_json(out / "recool_fits.json", result))
        ds = rates.HeatingDataset(pts, run.trap.motional_frequency, "recool")
        written.append(io.write_dataset(out / "heating_dataset.csv", ds))
        if figures:
            tr = io.read_traces(inputs[-1])[-1]
            written.append(plotting.recool_trace_figure(out / "recool_fit.png", tr, fits[-1],
                                                        run.species, run.trap))
    elif kind == "scan":
        results = []
        for p in inputs:
            freq = None if run is None else run.trap.motional_frequency
            scan = io.read_scan(p, trap_frequency=freq)
            f = sideband.fit_scan(scan)
            d = f.to_dict()
            d["input"] = str(p)
            results.append(d)
            if figures:
                written.append(plotting.scan_figure(out / f"{p.stem}_fit.png", scan, f))
        result = {"fits": results}
        written.append(io.write_json(out / "scan_fits.json", result))
    elif kind == "rate":
        ds = io.read_dataset(inputs[0])
        origin = ds.method != "raman" if free_intercept is None else not free_intercept
        res = rates.fit_rate(ds, through_origin=origin)
        result = res.to_dict()
        if run is not None:
            noise = rates.electric_field_noise(max(res.rate, 0.0), run.species,
                                               ds.trap_frequency, res.rate_stderr)
            result["S_E_v2m2hz"] = noise.S_E
            result["S_E_stderr_v2m2hz"] = noise.S_E_stderr
        written.append(io.write_json(out / "rate_fit.json", result))
        t, n, s = ds.arrays()
        written.append(io.write_xy(out / "rate_plot.csv", t, n, s, ("delay_s", "nbar", "stderr")))
        if figures:
            written.append(plotting.rate_figure(out / "rate_fit.png", ds, res))
    elif kind == "powerlaw":
        species = MG25 if run is None else run.species
        triples = io.read_rate_table(inputs[0])
        rfit = rates.power_law_fit(triples)
        noise = [rates.electric_field_noise(r, species, w, s) for w, r, s in triples]
        npts = [(p.omega, p.S_E, p.S_E_stderr) for p in noise]
        sfit = rates.power_law_fit(npts)
        result = {"heating_rate": rfit.to_dict(), "S_E": sfit.to_dict(),
                  "points": [{"trap_frequency_mhz": rates.to_mhz(w), "rate": r,
                              "rate_stderr": s, "S_E_v2m2hz": p.S_E,
                              "S_E_stderr_v2m2hz": p.S_E_stderr}
                             for (w, r, s), p in zip(triples, noise)]}
        written.append(io.write_json(out / "powerlaw_fit.json", result))
        f_mhz = [rates.to_mhz(w) for w, _, _ in triples]
        written.append(io.write_xy(out / "rate_vs_frequency.csv", f_mhz,
                                   [r for _, r, _ in triples], [s for _, _, s in triples],
                                   ("trap_frequency_mhz", "rate", "stderr")))
        written.append(io.write_xy(out / "noise_vs_frequency.csv", f_mhz,
                                   [p.S_E for p in noise], [p.S_E_stderr for p in noise],
                                   ("trap_frequency_mhz", "S_E", "stderr")))
        if figures:
            written.append(plotting.power_law_figure(out / "rate_vs_frequency.png", triples,
                                                     rfit))
            written.append(plotting.power_law_figure(out / "noise_vs_frequency.png", npts, sfit,
                                                     "S_E (V^2 m^-2 Hz^-1)"))
    elif kind == "survey":
        entries, problems = survey.ingest_report(inputs[0])
        result = {"n_entries": len(entries), "problems": [str(p) for p in problems]}
        for q in ("S_E", "omega_S_E"):
            result[q] = survey.distance_scaling_fit(entries, q).to_dict()
        written.append(io.write_json(out / "survey_fit.json", result))
        rows = survey.panel_rows(entries)
        cols = ("panel", "d_um", "value", "band_low", "band_centre", "band_high", "species",
                "source")
        written.append(io.write_rows(out / "survey_panels.csv", cols,
                                     [[r[c] for c in cols] for r in rows]))
        if figures:
            written.append(plotting.survey_figure(out / "survey.png", rows))
    else:
        raise ConfigError(f"unknown fit kind {kind!r}", "cli")
    return result, written


def csv_bytes(paths):
    """{name: bytes} of the CSV files among ``paths`` (for determinism checks)."""
    return {Path(p).name: Path(p).read_bytes() for p in paths if str(p).endswith(".csv")}

