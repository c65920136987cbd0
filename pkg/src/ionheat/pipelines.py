"""End-to-end heating-rate pipelines on simulated data.

Each pipeline simulates one dataset per delay with the Monte Carlo lab,
fits every delay with the technique's estimator and fits <n> against delay.
Recooling uses the through-origin rate fit; the Raman pipeline fits an
intercept because sideband cooling leaves a few tenths of a quantum that is
not negligible against the quanta gained over millisecond delays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import rates, recool, sideband, simlab
from .config import DelaySchedule, RunConfig
from .errors import DataQualityError, FitError

log = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    method: str
    dataset: rates.HeatingDataset
    rate: rates.RateResult
    injected_rate: float
    fits: list = field(default_factory=list)  # per-delay RecoolFit / SidebandFit
    raw: list = field(default_factory=list)  # RecoolTrace or RamanPoint per delay
    skipped: list = field(default_factory=list)  # (delay, reason)

    @property
    def deviation_sigma(self):
        return abs(self.rate.rate - self.injected_rate) / self.rate.rate_stderr

    @property
    def deviation_fraction(self):
        if self.injected_rate == 0:
            return float("inf") if self.rate.rate else 0.0
        return abs(self.rate.rate - self.injected_rate) / self.injected_rate

    def to_dict(self):
        return {
            "method": self.method,
            "injected_rate_per_s": self.injected_rate,
            "rate": self.rate.to_dict(),
            "deviation_sigma": self.deviation_sigma,
            "deviation_fraction": self.deviation_fraction,
            "points": [{"delay_s": p.delay, "nbar": p.nbar, "stderr": p.stderr}
                       for p in self.dataset.points],
            "skipped": [{"delay_s": d, "reason": r} for d, r in self.skipped],
        }


def _min_points(points, skipped, method):
    if len(points) < 2:
        raise FitError(f"{method} pipeline: only {len(points)} usable delays "
                       f"(skipped: {skipped})", "rates")


def simulate_raman(run: RunConfig, seed: int):
    ex = run.experiment
    grid = sideband.default_scan_grid(run.trap, run.raman, ex.scan_points, ex.scan_half_width)
    proc = simlab.HeatingProcess(ex.heating_rate, seed)
    return simlab.synth_raman_dataset(ex.delays, run.species, run.trap, run.raman, proc,
                                      ex.shots_per_point, grid, ex.workers)


def raman_pipeline(run: RunConfig, seed: int, raw=None) -> PipelineResult:
    if raw is None:
        raw = simulate_raman(run, seed)
    points, fits, skipped = [], [], []
    for p in raw:
        try:
            f = sideband.fit_scan(p.scan)
        except (FitError, DataQualityError) as err:
            log.warning("raman delay %g s skipped: %s", p.delay, err)
            skipped.append((p.delay, str(err)))
            continue
        fits.append(f)
        points.append(rates.HeatingPoint(p.delay, f.nbar, f.nbar_stderr))
    _min_points(points, skipped, "raman")
    ds = rates.HeatingDataset(points, run.trap.motional_frequency, "raman")
    res = rates.fit_rate(ds, through_origin=False)
    return PipelineResult("raman", ds, res, run.experiment.heating_rate, fits, list(raw), skipped)


def simulate_recool(run: RunConfig, seed: int):
    ex = run.experiment
    proc = simlab.HeatingProcess(ex.heating_rate, seed)
    return simlab.synth_recool_dataset(DelaySchedule(ex.delays, ex.repeats), run.species,
                                       run.trap, proc, bin_width=ex.bin_width,
                                       window=ex.recool_window, workers=ex.workers)


def recool_pipeline(run: RunConfig, seed: int, raw=None) -> PipelineResult:
    if raw is None:
        raw = simulate_recool(run, seed)
    points, fits, skipped = [], [], []
    for tr in raw:
        try:
            f = recool.fit_recool(tr, run.species, run.trap)
        except (FitError, DataQualityError) as err:
            log.warning("recool delay %g s skipped: %s", tr.delay, err)
            skipped.append((tr.delay, str(err)))
            continue
        if not f.total_stderr > 0:
            skipped.append((tr.delay, "zero fit uncertainty"))
            continue
        fits.append(f)
        # the fit sees one finite sample of a thermal ensemble; its mean scatters too
        points.append(rates.HeatingPoint(tr.delay, f.nbar0, f.total_stderr))
    _min_points(points, skipped, "recool")
    ds = rates.HeatingDataset(points, run.trap.motional_frequency, "recool")
    res = rates.fit_rate(ds, through_origin=True)
    return PipelineResult("recool", ds, res, run.experiment.heating_rate, fits, list(raw), skipped)


def run_pipeline(run: RunConfig, seed: int) -> PipelineResult:
    if run.experiment.method == "raman":
        return raman_pipeline(run, seed)
    return recool_pipeline(run, seed)
