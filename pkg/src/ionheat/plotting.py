"""Static figures (Agg backend) written next to the plot-ready CSVs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import recool, sideband  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata so repeated runs write identical files
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def recool_trace_figure(path, trace, fit=None, species=None, cfg=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    centres = 0.5 * (trace.bin_edges[1:] + trace.bin_edges[:-1])
    ax.plot(centres * 1e3, trace.rate, ".", ms=3, label=f"delay {trace.delay:g} s")
    if fit is not None and species is not None and cfg is not None:
        dyn = recool.dynamics(species, cfg)
        model = recool.expected_counts(fit.nbar0, fit.scale, fit.background, trace.bin_edges,
                                       trace.repeats, dyn, cfg.motional_frequency)
        ax.plot(centres * 1e3, model / (trace.bin_width * trace.repeats), "-",
                label=f"fit nbar0 = {fit.nbar0:.4g}")
    ax.set_xlabel("recooling time (ms)")
    ax.set_ylabel("detected counts/s per experiment")
    ax.legend()
    return _save(fig, path)


def scan_figure(path, scan, fit=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    x = scan.detunings / 1e6
    ax.errorbar(x, scan.signal, scan.stderr, fmt=".", ms=4)
    if fit is not None:
        for g in (fit.red, fit.blue):
            xx = np.linspace(g.window[0], g.window[1], 200)
            ax.plot(xx / 1e6, sideband.gaussian(xx, g.amplitude, g.center, g.width), "-")
        ax.set_title(f"R = {fit.R:.3f}, nbar = {fit.nbar:.3f} +- {fit.nbar_stderr:.3f}")
    ax.set_xlabel("Raman detuning from carrier (MHz)")
    ax.set_ylabel("mean counts per shot")
    return _save(fig, path)


def rate_figure(path, ds, res):
    t, n, s = ds.arrays()
    fig, ax = plt.subplots(figsize=(6, 4))
    scale = 1e3 if t.max() < 1 else 1.0
    ax.errorbar(t * scale, n, s, fmt="o")
    tt = np.linspace(0, t.max(), 50)
    ax.plot(tt * scale, res.intercept + res.rate * tt, "-",
            label=f"{res.rate:.4g} +- {res.rate_stderr:.2g} quanta/s")
    ax.set_xlabel("delay (ms)" if scale == 1e3 else "delay (s)")
    ax.set_ylabel("<n>")
    ax.legend()
    return _save(fig, path)


def power_law_figure(path, points, fit, ylabel="heating rate (quanta/s)"):
    a = np.asarray(points, dtype=float).reshape(-1, 3)
    f = a[:, 0] / (2 * math.pi * 1e6)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(f, a[:, 1], a[:, 2], fmt="o")
    ff = np.geomspace(f.min() * 0.9, f.max() * 1.1, 50)
    ax.plot(ff, fit.predict(ff * 2 * math.pi * 1e6), "-",
            label=f"exponent {fit.exponent:.2f} +- {fit.exponent_stderr:.2f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("trap frequency (MHz)")
    ax.set_ylabel(ylabel)
    ax.legend()
    return _save(fig, path)


def survey_figure(path, rows):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, panel, label in zip(axes, ("S_E", "omega_S_E"),
                                ("S_E (V^2 m^-2 Hz^-1)", "omega S_E (V^2 m^-2)")):
        sel = sorted((r for r in rows if r["panel"] == panel), key=lambda r: r["d_um"])
        if not sel:
            continue
        d = np.array([r["d_um"] for r in sel])
        ax.fill_between(d, [r["band_low"] for r in sel], [r["band_high"] for r in sel],
                        color="0.85")
        ax.plot(d, [r["value"] for r in sel], "o")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("ion-electrode distance (um)")
        ax.set_ylabel(label)
    return _save(fig, path)
