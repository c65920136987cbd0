"""Raman sideband thermometry for a thermal motional state.

Rabi frequencies follow the Lamb-Dicke scaling: ``rabi * eta * sqrt(n)`` on
the red sideband (n -> n-1), ``rabi * eta * sqrt(n+1)`` on the blue sideband
(n -> n+1) and ``rabi`` on the carrier.  Detuned square pulses use the
generalized Rabi formula, which gives the sinc^2-like Fourier-broadened
line of each transition.

Thermometry fits a Gaussian to each sideband and converts the amplitude
ratio ``R = red / blue`` into ``nbar = R / (1 - R)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .config import TWO_PI, IonSpecies, RamanConfig, TrapLaserConfig, lamb_dicke
from .errors import DataQualityError, FitError

SIDEBANDS = ("red", "carrier", "blue")
TRUNCATION = 1e-9


def thermal_pn(nbar, n):
    """Thermal occupation probability ``nbar**n / (nbar + 1)**(n + 1)``."""
    nbar = np.asarray(nbar, dtype=float)
    n = np.asarray(n)
    if np.any(nbar < 0) or np.any(n < 0):
        raise ValueError("nbar and n must be non-negative")
    q = nbar / (nbar + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(n == 0, 1.0 - q, (1.0 - q) * np.exp(n * np.log(q)))
    out = np.where(q == 0, np.where(n == 0, 1.0, 0.0), out)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class ThermalState:
    nbar: float

    def __post_init__(self):
        if not self.nbar >= 0:
            raise ValueError(f"nbar must be >= 0, got {self.nbar}")

    def n_max(self, tol=TRUNCATION) -> int:
        """Smallest cutoff with cumulative probability above ``1 - tol``."""
        if self.nbar == 0:
            return 0
        q = self.nbar / (self.nbar + 1.0)
        # 1 - q**(n+1) >= 1 - tol
        return max(0, math.ceil(math.log(tol) / math.log(q)) - 1)

    def populations(self, n_max=None):
        if n_max is None:
            n_max = self.n_max()
        n = np.arange(n_max + 1)
        return n, thermal_pn(self.nbar, n)


def ratio_from_nbar(nbar):
    return nbar / (nbar + 1.0)


def nbar_from_ratio(ratio):
    """``R / (1 - R)``; raises :class:`FitError` for ``R >= 1`` (infinite temperature)."""
    r = np.asarray(ratio, dtype=float)
    if np.any(r < 0):
        raise DataQualityError(f"sideband ratio must be >= 0, got {ratio}", "sideband")
    if np.any(r >= 1):
        raise FitError(f"sideband ratio R={ratio} >= 1: infinite temperature", "sideband")
    out = r / (1.0 - r)
    return out[()] if out.ndim == 0 else out


def rabi_frequencies(n, sideband, rabi_base, eta):
    n = np.asarray(n, dtype=float)
    if sideband == "red":
        return rabi_base * eta * np.sqrt(n)
    if sideband == "blue":
        return rabi_base * eta * np.sqrt(n + 1.0)
    if sideband == "carrier":
        return np.full_like(n, float(rabi_base))
    raise ValueError(f"unknown sideband {sideband!r}; expected one of {SIDEBANDS}")


def transition_probability(omega, duration, detuning=0.0):
    """Generalized Rabi formula for a square pulse; ``detuning`` in rad/s."""
    omega = np.asarray(omega, dtype=float)
    detuning = np.asarray(detuning, dtype=float)
    gen2 = omega**2 + detuning**2
    gen = np.sqrt(gen2)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(gen2 > 0, omega**2 / gen2, 0.0)
    return frac * np.sin(0.5 * gen * duration) ** 2


def envelope(duration, decay_tau):
    if decay_tau is None or math.isinf(decay_tau):
        return 1.0
    return math.exp(-duration / decay_tau)


def flip_probability(state: ThermalState, sideband: str, pulse_duration: float,
                     rabi_base: float, eta: float, decay_tau=None, detuning=0.0,
                     n_max=None) -> float:
    """Thermally averaged flip probability on one transition.

    ``detuning`` (rad/s) is measured from that transition's own resonance.
    The incoherent-scattering decay multiplies the coherent result by
    ``exp(-t / decay_tau)``.
    """
    if pulse_duration < 0:
        raise ValueError("pulse_duration must be >= 0")
    n, p = state.populations(n_max)
    om = rabi_frequencies(n, sideband, rabi_base, eta)
    total = float(np.sum(p * transition_probability(om, pulse_duration, detuning)))
    return total * envelope(pulse_duration, decay_tau)


def pi_time_rabi(raman: RamanConfig, eta: float) -> float:
    """Carrier Rabi frequency giving a pi pulse on the n=1 red sideband in ``red_pi_time``."""
    return math.pi / (raman.red_pi_time * eta)


def sideband_centers(cfg: TrapLaserConfig):
    """(red, carrier, blue) centers in Hz relative to the carrier."""
    f = cfg.motional_frequency / TWO_PI
    return -f, 0.0, f


def bright_counts(species: IonSpecies, cfg: TrapLaserConfig, detect_duration: float) -> float:
    """Mean detected counts from the fluorescing state in one detection window."""
    g = species.gamma
    s = cfg.saturation
    rate = 0.5 * g * s / (1.0 + s + (2.0 * cfg.detuning / g) ** 2)
    return rate * detect_duration * cfg.detection_efficiency


def spectrum_probability(n, detunings_hz, cfg, rabi_base, eta, duration,
                         include_carrier=True):
    """Flip probability per Fock state n (rows) at each scan detuning (columns).

    Transition contributions are summed and capped at 1.
    """
    n = np.atleast_1d(np.asarray(n, dtype=float))[:, None]
    det = np.asarray(detunings_hz, dtype=float)[None, :]
    red_c, car_c, blue_c = sideband_centers(cfg)
    total = transition_probability(rabi_frequencies(n, "red", rabi_base, eta), duration,
                                   TWO_PI * (det - red_c))
    total = total + transition_probability(rabi_frequencies(n, "blue", rabi_base, eta), duration,
                                           TWO_PI * (det - blue_c))
    if include_carrier:
        total = total + transition_probability(
            rabi_frequencies(n, "carrier", rabi_base, eta), duration, TWO_PI * (det - car_c))
    return np.minimum(total, 1.0)


@dataclass
class SidebandScan:
    detunings: np.ndarray  # Hz relative to carrier
    signal: np.ndarray  # mean counts per shot
    stderr: np.ndarray
    probe_duration: float
    shots: int = 0
    trap_frequency: float = 0.0  # rad/s, for locating the windows

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if np.any(np.diff(self.detunings) <= 0):
            raise DataQualityError("scan detunings must be strictly increasing", "sideband")
        if np.any((self.signal > 0) & ~(self.stderr > 0)):
            raise DataQualityError("stderr must be > 0 where signal > 0", "sideband")


def default_scan_grid(cfg: TrapLaserConfig, raman: RamanConfig, points=21, half_width=None):
    """Two windows of ``points`` detunings centred on the sidebands (Hz).

    The default half-width ``0.6 / t_pi`` keeps the scan on the main lobe of
    the square-pulse profile, where a Gaussian describes the line well.
    """
    if half_width is None:
        half_width = 0.6 / raman.red_pi_time
    red_c, _, blue_c = sideband_centers(cfg)
    off = np.linspace(-half_width, half_width, points)
    return np.concatenate([red_c + off, blue_c + off])


def synth_scan(state: ThermalState, species: IonSpecies, cfg: TrapLaserConfig,
               raman: RamanConfig, probe_duration=None, detuning_grid=None, *,
               detect_duration=50e-6, shots=1400, include_carrier=True, rng=None,
               window_fraction=0.45) -> SidebandScan:
    """Expected (or, with ``rng``, sampled) fluorescence versus Raman detuning.

    Each shot fluoresces with probability equal to the thermally averaged
    flip probability and then yields Poisson counts with mean
    :func:`bright_counts`.  Without ``rng`` the signal is the exact
    expectation and ``stderr`` its shot-noise standard error.
    """
    eta = lamb_dicke(species, cfg)
    rabi = pi_time_rabi(raman, eta)
    if probe_duration is None:
        probe_duration = raman.red_pi_time
    if detuning_grid is None:
        detuning_grid = default_scan_grid(cfg, raman)
    grid = np.asarray(detuning_grid, dtype=float)
    f_trap = cfg.motional_frequency / TWO_PI
    red_c, _, blue_c = sideband_centers(cfg)
    if grid.min() > red_c or grid.max() < blue_c:
        raise DataQualityError("detuning grid must span both sidebands", "sideband")
    if np.any(np.diff(grid) <= 0):
        raise DataQualityError("detuning grid must be strictly increasing", "sideband")

    n, p = state.populations()
    pflip = p @ spectrum_probability(n, grid, cfg, rabi, eta, probe_duration, include_carrier)
    pflip = pflip * envelope(probe_duration, raman.decay_tau)
    lam = bright_counts(species, cfg, detect_duration)
    floor = 1.0 / shots
    if rng is None:
        signal = lam * pflip
        var = lam * pflip + lam**2 * pflip * (1.0 - pflip)
        stderr = np.maximum(np.sqrt(var / shots), floor)
    else:
        bright = rng.binomial(shots, pflip)
        counts = rng.poisson(lam * bright)
        signal = counts / shots
        # per-point variance of per-shot counts, estimated from the sampled moments
        phat = bright / shots
        var = lam * phat + lam**2 * phat * (1.0 - phat)
        stderr = np.maximum(np.sqrt(var / shots), floor)
    return SidebandScan(grid, signal, stderr, probe_duration, shots, cfg.motional_frequency)


def gaussian(x, amplitude, center, width):
    return amplitude * np.exp(-0.5 * ((x - center) / width) ** 2)


@dataclass
class GaussianFit:
    amplitude: float
    center: float
    width: float
    covariance: np.ndarray
    window: tuple
    chi2: float
    dof: int

    @property
    def amplitude_stderr(self):
        return float(math.sqrt(self.covariance[0, 0]))


@dataclass
class SidebandFit:
    red: GaussianFit
    blue: GaussianFit
    R: float
    R_stderr: float
    nbar: float
    nbar_stderr: float
    flags: list = field(default_factory=list)

    @property
    def red_amplitude(self):
        return self.red.amplitude

    @property
    def blue_amplitude(self):
        return self.blue.amplitude

    @property
    def centers(self):
        return self.red.center, self.blue.center

    @property
    def widths(self):
        return self.red.width, self.blue.width

    def to_dict(self):
        def g(fit):
            return {
                "amplitude": fit.amplitude,
                "amplitude_stderr": fit.amplitude_stderr,
                "center_hz": fit.center,
                "width_hz": fit.width,
                "window_hz": list(fit.window),
                "chi2": fit.chi2,
                "dof": fit.dof,
            }
        return {
            "R": self.R,
            "R_stderr": self.R_stderr,
            "nbar": self.nbar,
            "nbar_stderr": self.nbar_stderr,
            "red": g(self.red),
            "blue": g(self.blue),
            "flags": list(self.flags),
            "uncertainty": "statistical only",
        }


def _fit_window(x, y, s, guess, window, width=None):
    if len(x) < (3 if width is None else 2) + 1:
        raise DataQualityError(f"window {window} holds only {len(x)} points", "sideband")
    if width is None:
        f = gaussian
        p0 = guess
    else:
        def f(xx, a, c):
            return gaussian(xx, a, c, width)
        p0 = guess[:2]
    try:
        popt, pcov = curve_fit(f, x, y, p0=p0, sigma=s, absolute_sigma=True, maxfev=2000)
    except (RuntimeError, ValueError) as err:
        raise FitError(f"Gaussian fit failed in window {window} "
                       f"({len(x)} points, guess={guess}): {err}", "sideband") from None
    if not np.all(np.isfinite(pcov)):
        raise FitError(f"singular covariance in window {window} ({len(x)} points)", "sideband")
    if width is not None:
        popt = np.array([popt[0], popt[1], width])
        full = np.zeros((3, 3))
        full[:2, :2] = pcov
        pcov = full
    resid = (y - gaussian(x, *popt)) / s
    return GaussianFit(float(popt[0]), float(popt[1]), float(abs(popt[2])), pcov,
                       window, float(resid @ resid), len(x) - len(p0))


def fit_scan(scan: SidebandScan, trap_frequency=None, half_width=None,
             shared_width=False) -> SidebandFit:
    """Independent weighted Gaussian fits to the red and blue sideband windows."""
    if trap_frequency is None:
        trap_frequency = scan.trap_frequency
    if not trap_frequency > 0:
        raise DataQualityError("trap frequency needed to locate sideband windows", "sideband")
    f = trap_frequency / TWO_PI
    if half_width is None:
        half_width = 0.5 * f
    x, y, s = scan.detunings, scan.signal, scan.stderr
    s = np.where(s > 0, s, np.min(s[s > 0]) if np.any(s > 0) else 1.0)
    windows = {}
    for name, c in (("red", -f), ("blue", f)):
        m = np.abs(x - c) <= half_width
        if m.sum() < 4:
            raise DataQualityError(f"{name} window [{c - half_width:.6g}, {c + half_width:.6g}] "
                                   f"Hz holds {m.sum()} points", "sideband")
        windows[name] = (x[m], y[m], s[m], (c - half_width, c + half_width))

    bx, by, bs, bwin = windows["blue"]
    if not np.max(by) > 0:
        raise DataQualityError("blue sideband amplitude is zero; ratio undefined", "sideband")
    step = np.median(np.diff(bx))
    guess = (float(np.max(by)), float(bx[np.argmax(by)]), float(max(3 * step, 0.1 * half_width)))
    blue = _fit_window(bx, by, bs, guess, bwin)
    if not blue.amplitude > 0:
        raise FitError(f"blue sideband fit gave amplitude {blue.amplitude} <= 0", "sideband")

    rx, ry, rs, rwin = windows["red"]
    rguess = (max(float(np.max(ry)), 1e-12), -blue.center, blue.width)
    red = _fit_window(rx, ry, rs, rguess, rwin, width=blue.width if shared_width else None)

    flags = []
    a_r, a_b = red.amplitude, blue.amplitude
    if a_r < 0:
        flags.append("negative red amplitude clipped to 0")
        a_r = 0.0
    R = a_r / a_b
    R_var = R**2 * ((red.covariance[0, 0] / a_r**2 if a_r > 0 else 0.0)
                    + blue.covariance[0, 0] / a_b**2)
    if a_r == 0:
        R_var = red.covariance[0, 0] / a_b**2
    R_err = math.sqrt(R_var)
    nbar = nbar_from_ratio(R)
    nbar_err = R_err / (1.0 - R) ** 2
    if R > 0.8 or nbar_err > nbar:
        flags.append("ratio near 1: nbar poorly constrained")
    return SidebandFit(red, blue, float(R), R_err, float(nbar), float(nbar_err), flags)
