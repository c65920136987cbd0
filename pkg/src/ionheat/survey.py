"""Trap survey: field-noise spectral density versus ion-electrode distance.

Survey CSV columns: ``species, d_um, omega_mhz, se_v2m2hz, source`` where
``omega_mhz`` is the trap frequency omega/2pi in MHz.  Fits are log-log
regressions of S_E (or omega*S_E) against d; residuals are quoted in decades
from a d^-4 reference band.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataQualityError, FitError

log = logging.getLogger(__name__)

COLUMNS = ("species", "d_um", "omega_mhz", "se_v2m2hz", "source")
REFERENCE_EXPONENT = -4.0


@dataclass(frozen=True)
class SurveyEntry:
    species: str
    d: float  # m
    omega: float  # rad/s
    S_E: float  # V^2 m^-2 Hz^-1
    source: str = ""

    def __post_init__(self):
        if not self.d > 0:
            raise DataQualityError(f"d must be > 0, got {self.d}", "survey")
        if not self.S_E > 0:
            raise DataQualityError(f"S_E must be > 0, got {self.S_E}", "survey")
        if not self.omega > 0:
            raise DataQualityError(f"omega must be > 0, got {self.omega}", "survey")

    @property
    def omega_S_E(self):
        return self.omega * self.S_E

    def row(self):
        return {
            "species": self.species,
            "d_um": repr(self.d * 1e6),
            "omega_mhz": repr(self.omega / (2 * math.pi * 1e6)),
            "se_v2m2hz": repr(self.S_E),
            "source": self.source,
        }


@dataclass(frozen=True)
class RowProblem:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


def ingest_report(path):
    """Parse a survey CSV: (valid entries, problems with line numbers)."""
    path = Path(path)
    entries, problems = [], []
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    # skip comment lines and blank lines but keep true line numbers
    numbered = [(i + 1, r) for i, r in enumerate(rows)
                if r and any(c.strip() for c in r) and not r[0].lstrip().startswith("#")]
    if not numbered:
        log.warning("survey file %s is empty", path)
        return entries, problems
    header_line, header = numbered[0]
    header = [h.strip() for h in header]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise DataQualityError(f"{path}: missing required columns {missing}", "survey")
    idx = {c: header.index(c) for c in COLUMNS}
    for line, r in numbered[1:]:
        try:
            if len(r) < len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(r)}")
            entries.append(SurveyEntry(
                species=r[idx["species"]].strip(),
                d=float(r[idx["d_um"]]) * 1e-6,
                omega=2 * math.pi * 1e6 * float(r[idx["omega_mhz"]]),
                S_E=float(r[idx["se_v2m2hz"]]),
                source=r[idx["source"]].strip(),
            ))
        except (ValueError, DataQualityError) as err:
            problems.append(RowProblem(line, str(err)))
    for p in problems:
        log.warning("%s: %s", path, p)
    return entries, problems


def ingest(path) -> list:
    return ingest_report(path)[0]


def write_survey(entries, path, comment=None):
    path = Path(path)
    with path.open("w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for e in entries:
            w.writerow(e.row())


def bundled_survey_path():
    return resources.files("ionheat") / "data" / "survey.csv"


@dataclass
class ScalingFit:
    exponent: float
    exponent_stderr: float
    prefactor: float  # y at d = d_ref
    d_ref: float  # m
    quantity: str
    residuals: np.ndarray  # decades from the d^-4 band anchored to the other entries
    below_trend: np.ndarray  # bool

    def to_dict(self):
        return {
            "exponent": self.exponent,
            "exponent_stderr": self.exponent_stderr,
            "prefactor": self.prefactor,
            "d_ref_m": self.d_ref,
            "quantity": self.quantity,
            "residual_decades": [float(r) for r in self.residuals],
            "below_trend": [bool(b) for b in self.below_trend],
        }


def _values(entries, quantity):
    if quantity == "S_E":
        return np.array([e.S_E for e in entries])
    if quantity == "omega_S_E":
        return np.array([e.omega_S_E for e in entries])
    raise ValueError(f"quantity must be 'S_E' or 'omega_S_E', got {quantity!r}")


def band_residuals(d, y, exponent=REFERENCE_EXPONENT):
    """Decades between each point and a d^exponent line through the others.

    The line's level is the mean of log10(y d^-exponent) over all other
    entries, so an outlier does not pull its own reference.
    """
    lev = np.log10(y) - exponent * np.log10(d)
    n = lev.size
    if n < 2:
        return np.zeros(n)
    others = (lev.sum() - lev) / (n - 1)
    return lev - others


def distance_scaling_fit(entries, quantity="S_E", min_span=2.0, below_decades=1.0) -> ScalingFit:
    """Least-squares slope of log10(quantity) against log10(d).

    Needs >= 3 entries spanning at least ``min_span`` in d.  Entries more
    than ``below_decades`` under the d^-4 band anchored to the others are
    flagged as below trend.
    """
    if len(entries) < 3:
        raise DataQualityError(f"need >= 3 survey entries, got {len(entries)}", "survey")
    d = np.array([e.d for e in entries])
    if d.max() / d.min() < min_span:
        raise FitError(f"degenerate design: d spans only a factor {d.max() / d.min():.3g} "
                       f"(need {min_span})", "survey")
    y = _values(entries, quantity)
    d_ref = float(np.exp(np.mean(np.log(d))))
    x = np.log10(d / d_ref)
    ly = np.log10(y)
    X = np.column_stack([x, np.ones_like(x)])
    coef, ss, _, _ = np.linalg.lstsq(X, ly, rcond=None)
    dof = len(entries) - 2
    resid = ly - X @ coef
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    res = band_residuals(d, y)
    return ScalingFit(float(coef[0]), float(math.sqrt(cov[0, 0])), float(10 ** coef[1]), d_ref,
                      quantity, res, res < -below_decades)


def synthetic_survey(rng, n=12, d_range=(40e-6, 400e-6), scatter_decades=1.0,
                     level=1e-11, d0=40e-6, omega=2 * math.pi * 1e6, exponent=REFERENCE_EXPONENT):
    """Entries on level*(d/d0)^exponent with uniform +-scatter in log10 (for testing)."""
    d = np.exp(rng.uniform(np.log(d_range[0]), np.log(d_range[1]), n))
    off = rng.uniform(-scatter_decades, scatter_decades, n)
    y = level * (d / d0) ** exponent * 10 ** off
    entries = [SurveyEntry("synthetic", float(di), omega, float(yi), "synthetic")
               for di, yi in zip(d, y)]
    return entries, off


def spread(values):
    v = np.asarray(values, dtype=float)
    return float(v.max() / v.min())


def panel_rows(entries, band_decades=1.0):
    """Plot-ready rows for the S_E and omega*S_E panels, with d^-4 band edges."""
    rows = []
    d = np.array([e.d for e in entries])
    for q in ("S_E", "omega_S_E"):
        y = _values(entries, q)
        if y.size >= 2:
            lev = float(np.mean(np.log10(y) - REFERENCE_EXPONENT * np.log10(d)))
        else:
            lev = float(np.log10(y[0]) - REFERENCE_EXPONENT * np.log10(d[0])) if y.size else 0.0
        for e, yi in zip(entries, y):
            centre = 10 ** (lev + REFERENCE_EXPONENT * math.log10(e.d))
            rows.append({
                "panel": q,
                "d_um": e.d * 1e6,
                "value": float(yi),
                "band_low": centre * 10 ** -band_decades,
                "band_centre": centre,
                "band_high": centre * 10 ** band_decades,
                "species": e.species,
                "source": e.source,
            })
    return rows
