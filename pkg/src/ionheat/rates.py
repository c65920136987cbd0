"""Heating rates from <n>-vs-delay data, field-noise conversion, power laws.

Uncertainties are statistical only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .config import CONSTANTS, IonSpecies
from .errors import DataQualityError, FitError

METHODS = ("recool", "raman")


def to_mhz(omega):
    """Angular frequency (rad/s) to MHz, trimmed of round-trip noise."""
    return float(f"{omega / (2 * math.pi * 1e6):.12g}")


@dataclass(frozen=True)
class HeatingPoint:
    delay: float  # s
    nbar: float  # quanta
    stderr: float  # quanta


@dataclass
class HeatingDataset:
    points: list
    trap_frequency: float  # rad/s
    method: str = "recool"

    def __post_init__(self):
        self.points = [p if isinstance(p, HeatingPoint) else HeatingPoint(*map(float, p))
                       for p in self.points]
        if self.method not in METHODS:
            raise DataQualityError(f"method must be one of {METHODS}, got {self.method!r}",
                                   "rates")
        for i, p in enumerate(self.points):
            if not p.stderr > 0:
                raise DataQualityError(f"point {i}: stderr must be > 0, got {p.stderr}", "rates")
            if p.delay < 0:
                raise DataQualityError(f"point {i}: delay must be >= 0, got {p.delay}", "rates")

    def arrays(self):
        a = np.array([(p.delay, p.nbar, p.stderr) for p in self.points], dtype=float)
        a = a.reshape(-1, 3)
        return a[:, 0], a[:, 1], a[:, 2]


@dataclass
class RateResult:
    rate: float  # quanta/s
    rate_stderr: float
    reduced_chi2: float
    intercept: float = 0.0
    intercept_stderr: float = 0.0
    through_origin: bool = True
    n_points: int = 0
    trap_frequency: float = float("nan")
    method: str = ""

    def to_dict(self):
        return {
            "rate_per_s": self.rate,
            "rate_stderr_per_s": self.rate_stderr,
            "reduced_chi2": self.reduced_chi2,
            "intercept": self.intercept,
            "intercept_stderr": self.intercept_stderr,
            "through_origin": self.through_origin,
            "n_points": self.n_points,
            "trap_frequency_mhz": to_mhz(self.trap_frequency),
            "method": self.method,
            "uncertainty": "statistical only",
        }


def fit_rate(ds: HeatingDataset, through_origin=True) -> RateResult:
    """Weighted (1/sigma^2) linear fit of nbar against delay.

    With ``through_origin`` the slope is ``sum(w t n) / sum(w t^2)``;
    otherwise an intercept is fitted as well.
    """
    t, n, s = ds.arrays()
    if t.size < 1 or (not through_origin and t.size < 2):
        raise DataQualityError(f"need more points for a rate fit, got {t.size}", "rates")
    w = 1.0 / s**2
    if through_origin:
        stt = np.sum(w * t * t)
        if not stt > 0:
            raise FitError("degenerate design: all delays are zero", "rates")
        slope = float(np.sum(w * t * n) / stt)
        err = 1.0 / math.sqrt(stt)
        resid = (n - slope * t) / s
        dof = t.size - 1
        b, b_err = 0.0, 0.0
    else:
        if np.ptp(t) == 0:
            raise FitError("degenerate design: all delays are equal", "rates")
        X = np.column_stack([t, np.ones_like(t)])
        cov = np.linalg.inv(X.T @ (X * w[:, None]))
        slope, b = cov @ (X.T @ (w * n))
        err, b_err = np.sqrt(np.diag(cov))
        resid = (n - slope * t - b) / s
        dof = t.size - 2
    ss = float(resid @ resid)
    if dof > 0:
        chi2 = ss / dof
    else:
        # exactly determined: chi2 is 0 by construction
        chi2 = 0.0
    return RateResult(float(slope), float(err), chi2, float(b), float(b_err), through_origin,
                      int(t.size), ds.trap_frequency, ds.method)


# --- electric-field noise -------------------------------------------------

@dataclass(frozen=True)
class NoisePoint:
    omega: float  # rad/s
    S_E: float  # V^2 m^-2 Hz^-1
    S_E_stderr: float = 0.0

    def __post_init__(self):
        if self.S_E < 0:
            raise DataQualityError(f"S_E must be >= 0, got {self.S_E}", "rates")


def _noise_factor(species, omega):
    c = CONSTANTS
    return 4.0 * species.mass * c.hbar * omega / c.elementary_charge**2


def electric_field_noise(rate, species: IonSpecies, omega, rate_stderr=0.0) -> NoisePoint:
    """S_E = rate * 4 m hbar omega / e^2 (V^2 m^-2 Hz^-1)."""
    if rate < 0:
        raise DataQualityError(f"heating rate must be >= 0, got {rate}", "rates")
    if not omega > 0:
        raise DataQualityError(f"omega must be > 0, got {omega}", "rates")
    f = _noise_factor(species, omega)
    return NoisePoint(omega, rate * f, abs(rate_stderr) * f)


def heating_rate_from_noise(point: NoisePoint, species: IonSpecies):
    """Inverse of :func:`electric_field_noise`: (rate, rate_stderr)."""
    f = _noise_factor(species, point.omega)
    return point.S_E / f, point.S_E_stderr / f


# --- power laws -----------------------------------------------------------

@dataclass
class PowerLawFit:
    exponent: float
    exponent_stderr: float
    prefactor: float  # y at x = x_ref
    prefactor_stderr: float
    x_ref: float
    reduced_chi2: float
    n_points: int = 0
    extra: dict = field(default_factory=dict)

    def predict(self, x):
        return self.prefactor * (np.asarray(x, dtype=float) / self.x_ref) ** self.exponent

    def to_dict(self):
        d = {
            "exponent": self.exponent,
            "exponent_stderr": self.exponent_stderr,
            "prefactor": self.prefactor,
            "prefactor_stderr": self.prefactor_stderr,
            "x_ref": self.x_ref,
            "reduced_chi2": self.reduced_chi2,
            "n_points": self.n_points,
        }
        d.update(self.extra)
        return d


def power_law_fit(points, x_ref=None) -> PowerLawFit:
    """Weighted straight-line fit of log(y) against log(x).

    ``points`` holds (x, y, sigma_y); sigma_log = sigma_y / y (first order,
    increasingly biased once relative errors pass ~30%).  The prefactor is
    quoted at ``x_ref`` (geometric mean of x by default) to decorrelate it
    from the exponent.
    """
    a = np.asarray(points, dtype=float).reshape(-1, 3)
    if a.shape[0] < 2:
        raise DataQualityError(f"power-law fit needs >= 2 points, got {a.shape[0]}", "rates")
    x, y, s = a.T
    if np.any(x <= 0) or np.any(y <= 0):
        raise DataQualityError("power-law fit needs positive x and y", "rates")
    if np.any(s <= 0):
        raise DataQualityError("power-law fit needs positive uncertainties", "rates")
    if np.ptp(x) == 0:
        raise FitError("degenerate design: all x equal", "rates")
    if x_ref is None:
        x_ref = float(np.exp(np.mean(np.log(x))))
    lx = np.log(x / x_ref)
    ly = np.log(y)
    w = (y / s) ** 2
    X = np.column_stack([lx, np.ones_like(lx)])
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    k, c = cov @ (X.T @ (w * ly))
    k_err, c_err = np.sqrt(np.diag(cov))
    resid = (ly - k * lx - c) * np.sqrt(w)
    dof = x.size - 2
    chi2 = float(resid @ resid) / dof if dof > 0 else 0.0
    pre = math.exp(c)
    return PowerLawFit(float(k), float(k_err), pre, pre * float(c_err), x_ref, chi2, int(x.size))


# --- cross-technique comparison -------------------------------------------

@dataclass(frozen=True)
class Comparison:
    z: float
    consistent: bool
    difference: float
    combined_stderr: float

    def to_dict(self):
        return {"z": self.z, "consistent": self.consistent, "difference": self.difference,
                "combined_stderr": self.combined_stderr}


def compare_methods(a: RateResult, b: RateResult, threshold=2.0, freq_rtol=1e-6) -> Comparison:
    """z = |r_a - r_b| / sqrt(sigma_a^2 + sigma_b^2); consistent when z < threshold."""
    fa, fb = a.trap_frequency, b.trap_frequency
    if math.isfinite(fa) and math.isfinite(fb) and abs(fa - fb) > freq_rtol * max(fa, fb):
        raise DataQualityError(f"trap frequencies differ ({fa} vs {fb} rad/s)", "rates")
    diff = a.rate - b.rate
    comb = math.hypot(a.rate_stderr, b.rate_stderr)
    if comb == 0:
        z = 0.0 if diff == 0 else math.inf
    else:
        z = abs(diff) / comb
    return Comparison(z, z < threshold, diff, comb)


def bundled_rates_path():
    """Measured 25Mg+ Raman heating rates at three trap frequencies (CSV)."""
    return resources.files("ionheat") / "data" / "heating_rates_mg25.csv"
