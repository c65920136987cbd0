"""Monte Carlo laboratory: heating walk, pulse sequences, synthetic datasets.

Heating is the infinite-temperature reservoir jump process
``n -> n+1`` at rate ``A (n+1)`` and ``n -> n-1`` at rate ``A n``, for which
``d<n>/dt = A`` exactly and thermal states stay thermal.

Two samplers are provided.  :func:`simulate_heating_walk` runs the jump
process event by event (Gillespie) and is the reference.  For long delays
(recooling uses ~10^4 quanta, i.e. ~10^8 jumps per trajectory)
:func:`heat_occupations` samples the exact transition law instead: the
process is a critical linear birth-death process with immigration, so

    n(t) = K + NegBin(K + 1, p),   K ~ Binomial(n0, p),   p = 1 / (1 + A t).

Random streams are derived from ``numpy.random.SeedSequence(seed)`` with a
fixed spawn key per (stage, index), so results do not depend on execution
order or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import recool, sideband
from .config import CONSTANTS, DelaySchedule, IonSpecies, RamanConfig, TrapLaserConfig
from .errors import ConfigError
from .sideband import ThermalState

HBAR = CONSTANTS.hbar


def rng_for(seed, *key):
    """Independent generator for ``(seed, *key)``; keys are small non-negative ints."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class HeatingProcess:
    rate_A: float  # quanta/s
    seed: int = 0

    def __post_init__(self):
        if not self.rate_A >= 0:
            raise ConfigError(f"heating rate must be >= 0, got {self.rate_A}", "sim-lab")


@dataclass
class TrajectoryRecord:
    times: np.ndarray  # s, jump times (first entry 0)
    n_values: np.ndarray  # occupation after each jump
    photon_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def final_n(self):
        return int(self.n_values[-1])


def simulate_heating_walk(n0: int, proc: HeatingProcess, t: float, rng=None,
                          max_events=10_000_000) -> TrajectoryRecord:
    """Event-by-event jump process from ``n0`` for a duration ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if rng is None:
        rng = rng_for(proc.seed)
    A = proc.rate_A
    n = int(n0)
    now = 0.0
    times, ns = [0.0], [n]
    if A == 0:
        return TrajectoryRecord(np.array(times), np.array(ns, dtype=np.int64))
    for _ in range(max_events):
        total = A * (2 * n + 1)
        now += rng.exponential(1.0 / total)
        if now > t:
            break
        n += 1 if rng.random() * (2 * n + 1) < n + 1 else -1
        times.append(now)
        ns.append(n)
    else:
        raise RuntimeError(f"more than {max_events} jumps; use heat_occupations")
    return TrajectoryRecord(np.array(times), np.array(ns, dtype=np.int64))


def gillespie_ensemble(n0, rate, t, rng):
    """Vectorized event-by-event walk for many trajectories; returns n(t)."""
    n = np.array(n0, dtype=np.int64, copy=True)
    if rate == 0 or t == 0:
        return n
    clock = np.zeros(n.shape)
    active = np.ones(n.shape, dtype=bool)
    while active.any():
        idx = np.nonzero(active)[0]
        nn = n[idx]
        clock[idx] += rng.exponential(1.0 / (rate * (2 * nn + 1)))
        alive = clock[idx] <= t
        up = rng.random(idx.size) * (2 * nn + 1) < nn + 1
        step = np.where(up, 1, -1)
        n[idx[alive]] += step[alive]
        active[idx[~alive]] = False
    return n


def heat_occupations(n0, rate, t, rng):
    """Exact sample of n(t) for each starting occupation in ``n0``."""
    n0 = np.asarray(n0, dtype=np.int64)
    if rate == 0 or t == 0:
        return n0.copy()
    p = 1.0 / (1.0 + rate * t)
    k = rng.binomial(n0, p)
    return k + rng.negative_binomial(k + 1, p)


def thermal_sample(nbar, size, rng):
    """Thermal (geometric on 0, 1, 2, ...) occupations with mean ``nbar``."""
    if nbar <= 0:
        return np.zeros(size, dtype=np.int64)
    return rng.geometric(1.0 / (1.0 + nbar), size=size) - 1


def thermality_pvalue(samples) -> float:
    """KS p-value of integer samples against a geometric law with the sample mean.

    Both CDFs are step functions on the integers, so the sup distance is
    taken there (scipy's kstest would count every point mass as a gap).
    The continuous Kolmogorov tail is conservative for a discrete law.
    """
    samples = np.asarray(samples, dtype=np.int64)
    m = samples.mean()
    if m == 0:
        return 1.0
    k = np.arange(samples.max() + 1)
    ecdf = np.cumsum(np.bincount(samples, minlength=k.size)) / samples.size
    model = stats.geom(1.0 / (1.0 + m), loc=-1).cdf(k)
    d = np.max(np.abs(ecdf - model))
    return float(stats.kstwo.sf(d, samples.size))


# --- pulse sequences ------------------------------------------------------

STEP_KINDS = ("doppler_cool", "repump", "sideband_cool_cycles", "delay", "raman_probe", "detect")


@dataclass(frozen=True)
class Step:
    kind: str
    duration: float = 0.0  # s
    count: int = 0
    detuning: float = 0.0  # Hz relative to carrier (raman_probe)


def doppler_cool(duration):
    return Step("doppler_cool", duration=duration)


def repump(duration):
    return Step("repump", duration=duration)


def sideband_cool_cycles(count):
    return Step("sideband_cool_cycles", count=count)


def delay(duration):
    return Step("delay", duration=duration)


def raman_probe(detuning, duration):
    return Step("raman_probe", duration=duration, detuning=detuning)


def detect(duration):
    return Step("detect", duration=duration)


@dataclass(frozen=True)
class PulseSequence:
    steps: tuple

    def validate(self):
        for i, st in enumerate(self.steps):
            if st.kind not in STEP_KINDS:
                raise ConfigError(f"step {i}: unknown kind {st.kind!r}", "sim-lab")
            if st.duration < 0 or st.count < 0:
                raise ConfigError(f"step {i} ({st.kind}): negative duration/count", "sim-lab")
        detects = [i for i, st in enumerate(self.steps) if st.kind == "detect"]
        if len(detects) > 1:
            raise ConfigError("at most one detect step is allowed", "sim-lab")
        if detects and detects[0] != len(self.steps) - 1:
            raise ConfigError("detect must be the last step", "sim-lab")
        return self


def standard_sequence(delay_s, probe_detuning_hz, raman: RamanConfig, probe_duration=None,
                      detect_duration=50e-6) -> PulseSequence:
    """Doppler cool, prepare, sideband cool, wait, probe, detect."""
    if probe_duration is None:
        probe_duration = raman.red_pi_time
    return PulseSequence((
        doppler_cool(300e-6),
        repump(20e-6),
        sideband_cool_cycles(raman.cooling_cycles),
        delay(delay_s),
        raman_probe(probe_detuning_hz, probe_duration),
        detect(detect_duration),
    )).validate()


@dataclass
class SequenceResult:
    n_at_probe: np.ndarray  # occupation when the probe starts (or at end)
    n_after_cooling: np.ndarray
    bright: np.ndarray  # bool, fluorescing at detection
    counts: np.ndarray  # photons detected per trial

    @property
    def mean_counts(self):
        return float(self.counts.mean())


def cooling_flip_probability(n, raman: RamanConfig):
    """Per-cycle success of the red-sideband pi pulse tuned for ``reference_n``.

    The phase argument is capped at pi/2, so states above the reference
    always get a full pulse area.  With ``raman.cooling_decay`` the probe's
    decay envelope also scales every cooling pulse.
    """
    n = np.asarray(n, dtype=float)
    arg = 0.5 * np.pi * np.minimum(np.sqrt(n / raman.reference_n), 1.0)
    p = np.sin(arg) ** 2
    if raman.cooling_decay:
        p = p * sideband.envelope(raman.red_pi_time, raman.decay_tau)
    return p


def run_sequence(seq: PulseSequence, species: IonSpecies, cfg: TrapLaserConfig,
                 raman: RamanConfig, proc: HeatingProcess, trials: int, rng=None,
                 include_carrier=True) -> SequenceResult:
    """Execute a pulse sequence for ``trials`` independent ions (vectorized)."""
    seq.validate()
    if trials < 1:
        raise ConfigError("trials must be >= 1", "sim-lab")
    if rng is None:
        rng = rng_for(proc.seed)
    n = np.zeros(trials, dtype=np.int64)
    n_cool = None
    n_probe = None
    bright = np.ones(trials, dtype=bool)
    counts = np.zeros(trials, dtype=np.int64)
    nbar_doppler = None
    eta = None
    for st in seq.steps:
        if st.kind == "doppler_cool":
            if st.duration > 0:
                if nbar_doppler is None:
                    nbar_doppler = recool.doppler_nbar(species, cfg)
                n = thermal_sample(nbar_doppler, trials, rng)
            bright[:] = True
        elif st.kind == "repump":
            bright[:] = True
        elif st.kind == "sideband_cool_cycles":
            heat = raman.cycle_heating_quanta
            for _ in range(st.count):
                flip = rng.random(trials) < cooling_flip_probability(n, raman)
                n = n - flip
                if heat > 0:
                    n = n + (rng.random(trials) < heat)
            bright[:] = True
            n_cool = n.copy()
        elif st.kind == "delay":
            n = heat_occupations(n, proc.rate_A, st.duration, rng)
        elif st.kind == "raman_probe":
            if eta is None:
                eta = sideband.lamb_dicke(species, cfg)
            n_probe = n.copy()
            rabi = sideband.pi_time_rabi(raman, eta)
            values, inverse = np.unique(n, return_inverse=True)
            pf = sideband.spectrum_probability(values, [st.detuning], cfg, rabi, eta,
                                               st.duration, include_carrier)[:, 0]
            pf = pf * sideband.envelope(st.duration, raman.decay_tau)
            # the probe transfers the ion into the fluorescing manifold
            bright = rng.random(trials) < pf[inverse]
        elif st.kind == "detect":
            lam = sideband.bright_counts(species, cfg, st.duration)
            mean = np.where(bright, lam, 0.0) + cfg.background_rate * st.duration
            counts = rng.poisson(mean)
    if n_probe is None:
        n_probe = n
    if n_cool is None:
        n_cool = n_probe
    return SequenceResult(n_probe, n_cool, bright, counts)


def simulate_scan(delay_s, species, cfg, raman, proc, shots, detunings=None, seed=0,
                  index=0, include_carrier=True, detect_duration=50e-6):
    """Sideband scan from full pulse sequences at one delay.

    Returns ``(SidebandScan, mean n at probe)``; each detuning point uses its
    own stream ``(seed, 1, index, point)``.
    """
    if detunings is None:
        detunings = sideband.default_scan_grid(cfg, raman)
    detunings = np.asarray(detunings, dtype=float)
    signal = np.empty(detunings.size)
    stderr = np.empty(detunings.size)
    n_mean = []
    for j, d in enumerate(detunings):
        seq = standard_sequence(delay_s, d, raman, detect_duration=detect_duration)
        res = run_sequence(seq, species, cfg, raman, proc, shots, rng_for(seed, 1, index, j),
                           include_carrier=include_carrier)
        signal[j] = res.counts.mean()
        stderr[j] = max(res.counts.std(ddof=1) / math.sqrt(shots), 1.0 / shots)
        n_mean.append(res.n_at_probe.mean())
    scan = sideband.SidebandScan(detunings, signal, stderr, raman.red_pi_time, shots,
                                 cfg.motional_frequency)
    return scan, float(np.mean(n_mean))


@dataclass
class RamanPoint:
    delay: float
    scan: sideband.SidebandScan
    true_nbar: float


def synth_raman_dataset(delays, species, cfg, raman, proc, shots=1400, detunings=None,
                        workers=1, include_carrier=True):
    """One simulated sideband scan per delay (seeded per delay index)."""
    delays = DelaySchedule(tuple(delays)).delays

    def one(i):
        scan, nbar = simulate_scan(delays[i], species, cfg, raman, proc, shots, detunings,
                                   proc.seed, i, include_carrier)
        return RamanPoint(delays[i], scan, nbar)

    return _map(one, range(len(delays)), workers)


def _map(fn, items, workers):
    items = list(items)
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# --- recooling traces -----------------------------------------------------

def recool_window(species, cfg, nbar_max, margin=1.5, min_window=50e-6):
    """Recording window long enough for a ``nbar_max`` trajectory to recool."""
    dyn = recool.dynamics(species, cfg)
    e = HBAR * cfg.motional_frequency * nbar_max
    if e <= 2 * dyn.e_ss:
        return min_window
    return max(min_window, margin * dyn.time_between(e, 2 * dyn.e_ss))


def synth_recool_trace(delay_s, species, cfg, proc, repeats, bin_edges, rng):
    """Trace for one delay: heated ensemble -> per-trajectory recooling -> Poisson counts."""
    dyn = recool.dynamics(species, cfg)
    omega = cfg.motional_frequency
    n_start = thermal_sample(dyn.e_ss / (HBAR * omega), repeats, rng)
    n = heat_occupations(n_start, proc.rate_A, delay_s, rng)
    e_init = HBAR * omega * n
    # expected counts per trajectory and bin; summing Poisson draws over
    # trajectories is the same as one draw with the summed mean
    mean = np.zeros(len(bin_edges) - 1)
    for chunk in np.array_split(e_init, max(1, e_init.size // 256)):
        mean += np.diff(dyn.cumulative(chunk, bin_edges), axis=1).sum(axis=0)
    mean = cfg.detection_efficiency * mean + repeats * cfg.background_rate * np.diff(bin_edges)
    counts = rng.poisson(mean)
    return recool.RecoolTrace(delay_s, np.asarray(bin_edges), counts, repeats), n


def synth_recool_dataset(delays: DelaySchedule, species: IonSpecies, cfg: TrapLaserConfig,
                         proc: HeatingProcess, bin_width=None, window=None, n_bins=400,
                         workers=1):
    """One :class:`~ionheat.recool.RecoolTrace` per delay.

    The window defaults to 1.5x the recooling time of a trajectory at ten
    times the expected mean energy of the longest delay; ``bin_width``
    defaults to ``window / n_bins``.
    """
    dyn = recool.dynamics(species, cfg)
    nbar_d = dyn.e_ss / (HBAR * cfg.motional_frequency)
    if window is None:
        window = recool_window(species, cfg, 10 * (nbar_d + proc.rate_A * max(delays.delays)))
    if bin_width is None:
        bin_width = window / n_bins
    nb = max(10, int(round(window / bin_width)))
    edges = np.arange(nb + 1) * bin_width

    def one(i):
        trace, _ = synth_recool_trace(delays.delays[i], species, cfg, proc,
                                      delays.repeats_per_delay, edges, rng_for(proc.seed, 2, i))
        return trace

    return _map(one, range(len(delays.delays)), workers)
