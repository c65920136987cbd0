"""Doppler recooling: semi-classical 1D forward model and trace fitting.

The ion is a classical harmonic oscillator of energy E.  In the weak-binding
limit the fluorescence is the two-level Lorentzian scattering rate averaged
over one oscillation period, with velocity ``v = sqrt(2E/m) cos(phi)``:

    rho(E) = (Gamma/2) s < 1 / (1 + s + (2 (delta - k v) / Gamma)^2) >_phi

Energy evolves under the period-averaged cooling power plus recoil heating,

    dE/dt = < hbar k v rho(v) >_phi + (hbar k)^2 (1 + xi) / (2 m) * rho(E),

which has a single stable fixed point (the Doppler limit) for red detuning.

Both phase averages have closed forms (``1/sqrt(z^2 - c^2)`` for the mean of
``1/(z - c cos phi)``); the ODE uses them, while
:func:`scattering_rate_at_energy` defaults to adaptive quadrature.

Because the energy ODE is autonomous, every trajectory is a time shift of one
master trajectory.  :class:`RecoolDynamics` integrates that master curve once
(together with the running integral of the scattering rate) and answers
fluorescence and bin-integral queries for arbitrary initial energies by
lookup, which makes thermal averaging and Monte Carlo synthesis cheap.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .config import CONSTANTS, IonSpecies, TrapLaserConfig, validate_config
from .errors import ConfigError, DataQualityError, FitError

HBAR = CONSTANTS.hbar


def _check(species, cfg):
    bad = validate_config(cfg, species)
    if bad:
        raise ConfigError("; ".join(map(str, bad)), "recool")
    if not cfg.detuning < 0:
        raise ConfigError(f"recooling needs red detuning, got {cfg.detuning} rad/s", "recool")


def _params(species, cfg):
    g = species.gamma
    k = species.wavenumber * abs(cfg.doppler_axis_cosine)
    a = math.sqrt(1.0 + cfg.saturation)
    z = 2.0 * cfg.detuning / g - 1j * a
    return g, k, a, z


def _phase_averages(E, species, cfg):
    """Closed-form period averages: (scattering rate, cooling power)."""
    g, k, a, z = _params(species, cfg)
    E = np.asarray(E, dtype=float)
    # exploratory ODE steps may probe absurd energies; inf there just rejects the step
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        c = 2.0 * k * np.sqrt(2.0 * np.maximum(E, 0.0) / species.mass) / g
        # principal-branch product keeps w -> z as c -> 0 for Im z < 0
        w = np.sqrt(z - c) * np.sqrt(z + c)
        pref = 0.5 * g * cfg.saturation / a
        rho = pref * np.imag(1.0 / w)
        power = HBAR * 0.5 * g * pref * np.imag(z / w)
    return rho, power


def recoil_energy_per_photon(species, cfg):
    k = species.wavenumber * abs(cfg.doppler_axis_cosine)
    return (HBAR * k) ** 2 * (1.0 + cfg.recoil_geometry_factor) / (2.0 * species.mass)


def energy_rate(E, species, cfg):
    """dE/dt in J/s."""
    rho, power = _phase_averages(E, species, cfg)
    return power + recoil_energy_per_photon(species, cfg) * rho


def at_rest_rate(species, cfg):
    g = species.gamma
    s = cfg.saturation
    return 0.5 * g * s / (1.0 + s + (2.0 * cfg.detuning / g) ** 2)


def scattering_rate_at_energy(E, species: IonSpecies, cfg: TrapLaserConfig,
                              method="quad") -> float:
    """Period-averaged scattering rate (photons/s) at oscillator energy ``E`` (J).

    ``method="quad"`` integrates over the oscillation phase adaptively to
    ``cfg.quad_rtol``; ``method="closed"`` uses the analytic average.
    """
    if E < 0:
        raise DataQualityError(f"energy must be >= 0, got {E}", "recool")
    _check(species, cfg)
    if method == "closed":
        return float(_phase_averages(E, species, cfg)[0])
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    g, k, _, _ = _params(species, cfg)
    if E == 0:
        return at_rest_rate(species, cfg)
    kv0 = k * math.sqrt(2.0 * E / species.mass)
    s, d = cfg.saturation, cfg.detuning

    def f(phi):
        return 0.5 * g * s / (1.0 + s + (2.0 * (d - kv0 * math.cos(phi)) / g) ** 2)

    # the integrand peaks where k v(phi) = delta; split there
    pts = []
    if kv0 >= abs(d):
        pts = [math.acos(max(-1.0, min(1.0, d / kv0)))]
    val, _ = integrate.quad(f, 0.0, math.pi, points=pts or None, epsrel=cfg.quad_rtol,
                            epsabs=0.0, limit=500)
    return val / math.pi


def steady_state_energy(species: IonSpecies, cfg: TrapLaserConfig) -> float:
    """Doppler-limit energy: the root of :func:`energy_rate`."""
    _check(species, cfg)
    scale = HBAR * species.gamma
    lo, hi = 1e-12 * scale, scale
    while energy_rate(hi, species, cfg) > 0:
        hi *= 10.0
        if hi > 1e12 * scale:
            raise FitError("no Doppler steady state found", "recool")
    return optimize.brentq(lambda e: energy_rate(e, species, cfg), lo, hi,
                           xtol=1e-30 * scale, rtol=1e-14)


def doppler_nbar(species, cfg):
    return steady_state_energy(species, cfg) / (HBAR * cfg.motional_frequency)


def relaxation_rate(species, cfg, e_ss=None):
    """d(dE/dt)/dE at the Doppler limit (negative: the fixed point is stable)."""
    if e_ss is None:
        e_ss = steady_state_energy(species, cfg)
    h = 1e-3 * e_ss
    d1 = (energy_rate(e_ss + h, species, cfg) - energy_rate(e_ss - h, species, cfg)) / (2 * h)
    d2 = (energy_rate(e_ss + h / 2, species, cfg)
          - energy_rate(e_ss - h / 2, species, cfg)) / h
    return float((4 * d2 - d1) / 3)


def _log_gap_rhs(species, cfg, e_ss, sign, with_rate=False):
    """RHS for u = log|E - E_ss|; linearized once the gap is below 1e-5 E_ss."""
    lin = relaxation_rate(species, cfg, e_ss)
    recoil = recoil_energy_per_photon(species, cfg)
    u_lin = math.log(1e-5 * e_ss)

    def rhs(t, y):
        u = min(y[0], 700.0)
        diff = math.exp(u)
        e = e_ss + sign * diff
        rho, power = _phase_averages(e, species, cfg)
        du = lin if u < u_lin else sign * (power + recoil * rho) / diff
        if not with_rate:
            return [du]
        return [du, rho]
    return rhs


def _solve(fun, t_span, y0, rtol, what, **kw):
    sol = integrate.solve_ivp(fun, t_span, y0, method="DOP853", rtol=rtol,
                              atol=rtol * 1e-2, dense_output=True, **kw)
    if sol.status < 0:
        raise FitError(f"{what}: integration failed at t={sol.t[-1]:.6g} s after "
                       f"{sol.nfev} evaluations, {len(sol.t)} steps ({sol.message})", "recool")
    return sol


class _DenseEval:
    """Vectorized evaluation of a DOP853 ``OdeSolution``.

    Same per-step polynomials and arithmetic as scipy's interpolants, but
    all query points are evaluated at once instead of segment by segment.
    """

    def __init__(self, ode_solution):
        ints = ode_solution.interpolants
        self.n = len(ints)
        self.t_old = np.array([p.t_old for p in ints])
        self.h = np.array([p.h for p in ints])
        self.y_old = np.stack([p.y_old for p in ints])  # (segments, states)
        self.F = np.stack([p.F for p in ints])  # (segments, powers, states)
        self.ts_sorted = ode_solution.ts_sorted
        self.side = ode_solution.side
        self.ascending = ode_solution.ascending

    def __call__(self, t, state=None):
        """All states, shape (states,) + t.shape; or one state, shape t.shape."""
        t = np.asarray(t, dtype=float)
        shape, t = t.shape, t.ravel()
        seg = np.searchsorted(self.ts_sorted, t, side=self.side) - 1
        np.clip(seg, 0, self.n - 1, out=seg)
        if not self.ascending:
            seg = self.n - 1 - seg
        x = (t - self.t_old[seg]) / self.h[seg]
        states = range(self.y_old.shape[1]) if state is None else [state]
        out = []
        for j in states:
            f = self.F[:, :, j][seg]
            y = np.zeros(t.size)
            for i, k in enumerate(reversed(range(f.shape[1]))):
                y += f[:, k]
                y *= x if i % 2 == 0 else 1 - x
            y += self.y_old[seg, j]
            out.append(y.reshape(shape))
        return out[0] if state is not None else np.stack(out)


class _Branch:
    """Master trajectory approaching E_ss from one side.

    Forward state is ``u = log|E - E_ss|`` and ``C = integral of rho dt``;
    a second solve gives the master time as a function of ``u`` so the time
    at which any initial energy is passed is a direct lookup.  Near the
    fixed point ``u`` falls linearly at the relaxation rate, which is used to
    extrapolate past the end of the integration.
    """

    def __init__(self, species, cfg, e_ss, e_start, rtol):
        self.e_ss = e_ss
        self.sign = 1.0 if e_start > e_ss else -1.0
        self.species, self.cfg = species, cfg
        u0 = math.log(abs(e_start - e_ss))
        u_end = math.log(1e-12 * e_ss)
        rhs = _log_gap_rhs(species, cfg, e_ss, self.sign, with_rate=True)

        def done(t, y):
            return y[0] - u_end
        done.terminal = True
        done.direction = -1

        t_max = 1.0
        while True:
            sol = _solve(rhs, (0.0, t_max), [u0, 0.0], rtol, "recool master trajectory",
                         events=done)
            if sol.status == 1:
                break
            t_max *= 100.0
            if t_max > 1e6:
                raise FitError("recool master trajectory did not reach steady state "
                               f"within {t_max / 100:g} s ({sol.nfev} evaluations)", "recool")

        def inv(u, y):
            du, _ = rhs(0.0, [u, 0.0])
            return [1.0 / du]

        inv_sol = _solve(inv, (u0, u_end), [0.0], rtol, "recool inverse trajectory")
        self.inv = _DenseEval(inv_sol.sol)
        self.sol = _DenseEval(sol.sol)
        self.t_end = float(sol.t[-1])
        self.u_end = float(sol.y[0, -1])
        self.c_end = float(sol.y[1, -1])
        self.slope = rhs(self.t_end, [self.u_end, 0.0])[0]
        self.rho_ss = float(_phase_averages(e_ss, species, cfg)[0])
        self.u_start = u0

    def u(self, t):
        t = np.asarray(t, dtype=float)
        inside = t <= self.t_end
        y = self.sol(np.where(inside, t, self.t_end), 0)
        return np.where(inside, y, self.u_end + self.slope * (t - self.t_end))

    def c(self, t):
        """Photons scattered along the master trajectory from its start to ``t``."""
        t = np.asarray(t, dtype=float)
        inside = t <= self.t_end
        y = self.sol(np.where(inside, t, self.t_end), 1)
        return np.where(inside, y, self.c_end + self.rho_ss * (t - self.t_end))

    def energy(self, t):
        return self.e_ss + self.sign * np.exp(self.u(t))

    def time_of(self, e):
        """Master time at which the trajectory passes energy ``e`` (vectorized)."""
        e = np.asarray(e, dtype=float)
        with np.errstate(divide="ignore"):
            u = np.log(np.abs(e - self.e_ss))
        if np.any(u > self.u_start + 1e-12 * max(1.0, abs(self.u_start))):
            raise ValueError("energy outside master trajectory range")
        u = np.minimum(u, self.u_start)
        beyond = u <= self.u_end
        out = np.empty_like(u)
        out[beyond] = self.t_end + (u[beyond] - self.u_end) / self.slope
        if (~beyond).any():
            out[~beyond] = self.inv(u[~beyond], 0)
        return out


class RecoolDynamics:
    """Master-trajectory cache for one (species, cfg).

    Hot starts use a ladder of master trajectories whose start energies grow
    by a factor 4; each initial energy is served by the lowest rung above it,
    so the running photon integral never dwarfs the counts of one bin.
    Masters are integrated at ``1e-3 * cfg.ode_rtol`` because bin counts come
    from differences of that integral.
    """

    ladder_base = 10.0
    ladder_step = 4.0

    def __init__(self, species, cfg):
        _check(species, cfg)
        self.species, self.cfg = species, cfg
        self.e_ss = steady_state_energy(species, cfg)
        self.rho_ss = float(_phase_averages(self.e_ss, species, cfg)[0])
        self.rtol = max(cfg.ode_rtol * 1e-3, 1e-13)
        self._rungs = {}
        self._lower = None

    def _rung_index(self, e):
        r = np.maximum(np.asarray(e, dtype=float) / (self.ladder_base * self.e_ss), 1.0)
        k = np.ceil(np.log(r) / math.log(self.ladder_step) - 1e-12).astype(int)
        return np.maximum(k, 0)

    def rung(self, k):
        k = int(k)
        if k not in self._rungs:
            e_top = self.ladder_base * self.e_ss * self.ladder_step ** k
            self._rungs[k] = _Branch(self.species, self.cfg, self.e_ss, e_top, self.rtol)
        return self._rungs[k]

    @property
    def lower(self):
        if self._lower is None:
            self._lower = _Branch(self.species, self.cfg, self.e_ss, 0.0, self.rtol)
        return self._lower

    def _branches(self, e0):
        if np.any(e0 < 0):
            raise DataQualityError("initial energies must be >= 0", "recool")
        up, down = e0 > self.e_ss, e0 < self.e_ss
        if up.any():
            idx = np.full(e0.shape, -1)
            idx[up] = self._rung_index(e0[up])
            for k in np.unique(idx[up]):
                yield idx == k, self.rung(k)
        if down.any():
            yield down, self.lower

    def energy(self, e0, t):
        """E(t) for initial energies ``e0`` (shape m) at times ``t`` (shape k): (m, k)."""
        e0 = np.atleast_1d(np.asarray(e0, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.full((e0.size, t.size), self.e_ss)
        for mask, br in self._branches(e0):
            tau = br.time_of(e0[mask])
            out[mask] = br.energy(tau[:, None] + t[None, :])
        return out

    def cumulative(self, e0, t):
        """Photons scattered between 0 and t for each initial energy: (m, k)."""
        e0 = np.atleast_1d(np.asarray(e0, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.broadcast_to(self.rho_ss * t, (e0.size, t.size)).copy()
        for mask, br in self._branches(e0):
            tau = br.time_of(e0[mask])
            out[mask] = br.c(tau[:, None] + t[None, :]) - br.c(tau)[:, None]
        return out

    def rate(self, e0, t):
        return _phase_averages(self.energy(e0, t), self.species, self.cfg)[0]

    def thermal_rate(self, e_mean, t):
        """Scattering rate averaged over exponentially distributed initial energies."""
        if e_mean <= 0:
            return self.rate([0.0], t)[0]
        x, w = _thermal_rule()
        return w @ self.rate(e_mean * x, t)

    def thermal_cumulative(self, e_mean, t, coarse=False):
        if e_mean <= 0:
            return self.cumulative([0.0], t)[0]
        x, w = _thermal_rule(24) if coarse else _thermal_rule()
        return w @ self.cumulative(e_mean * x, t)

    def time_between(self, e_from, e_to):
        """Time for a trajectory to go from ``e_from`` to ``e_to`` (same side of E_ss)."""
        if (e_from - self.e_ss) * (e_to - self.e_ss) <= 0:
            raise ValueError("both energies must lie on the same side of E_ss")
        if e_from > self.e_ss:
            br = self.rung(self._rung_index(max(e_from, e_to)))
        else:
            br = self.lower
        t = br.time_of(np.array([e_from, e_to]))
        return float(t[1] - t[0])


@functools.lru_cache(maxsize=4)
def _thermal_rule(panels=96, order=8, x_max=45.0):
    """Composite Gauss-Legendre nodes/weights for the mean over x ~ Exp(1).

    Panels are log-spaced because the integrand switches from 'already
    cooled' to 'still hot' at an x that moves with recooling time.  The
    default rule is good to ~1e-4 relative on recooling curves.
    """
    edges = np.concatenate([[0.0], np.geomspace(1e-3, x_max, panels)])
    g, gw = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    x = (0.5 * (b - a) * g + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * gw).ravel() * np.exp(-x)
    return x, w / w.sum()


@functools.lru_cache(maxsize=16)
def dynamics(species: IonSpecies, cfg: TrapLaserConfig) -> RecoolDynamics:
    return RecoolDynamics(species, cfg)


def recool_curve(E0, species: IonSpecies, cfg: TrapLaserConfig, t_grid,
                 ensemble="thermal"):
    """Expected detected photons/s per experiment during recooling.

    ``ensemble="single"`` integrates one trajectory from energy ``E0``;
    ``"thermal"`` averages over a thermal (exponential) distribution of
    initial energies with mean ``E0``.
    """
    if E0 < 0:
        raise DataQualityError(f"E0 must be >= 0, got {E0}", "recool")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise DataQualityError("t_grid must be strictly increasing", "recool")
    _check(species, cfg)
    if ensemble == "single":
        rho = _single_trajectory_rate(E0, species, cfg, t_grid)
    elif ensemble == "thermal":
        rho = dynamics(species, cfg).thermal_rate(E0, t_grid)
    else:
        raise ValueError(f"unknown ensemble {ensemble!r}")
    return cfg.detection_efficiency * rho + cfg.background_rate


def _single_trajectory_rate(E0, species, cfg, t_grid):
    e_ss = steady_state_energy(species, cfg)
    if E0 == e_ss:
        return np.full(t_grid.shape, _phase_averages(e_ss, species, cfg)[0])
    # integrate log|E - E_ss| so the approach to the fixed point stays well scaled
    sign = 1.0 if E0 > e_ss else -1.0
    rhs = _log_gap_rhs(species, cfg, e_ss, sign)

    t0 = min(0.0, t_grid[0])
    sol = _solve(rhs, (t0, max(t_grid[-1], t0 + 1e-12)), [math.log(abs(E0 - e_ss))],
                 cfg.ode_rtol, "recool_curve")
    e = e_ss + sign * np.exp(sol.sol(t_grid)[0])
    return _phase_averages(e, species, cfg)[0]


@dataclass
class RecoolTrace:
    delay: float  # s
    bin_edges: np.ndarray  # s, relative to recooling start
    counts: np.ndarray  # summed over repeats
    repeats: int

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.bin_edges.ndim != 1 or self.counts.shape != (self.bin_edges.size - 1,):
            raise DataQualityError("need len(bin_edges) == len(counts) + 1", "recool")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise DataQualityError("bin_edges must be strictly increasing", "recool")
        if np.any(self.counts < 0):
            raise DataQualityError("counts must be non-negative", "recool")

    @property
    def bin_width(self):
        return np.diff(self.bin_edges)

    @property
    def rate(self):
        """Detected counts/s per experiment in each bin."""
        return self.counts / (self.bin_width * self.repeats)


@dataclass
class RecoolFit:
    E0: float
    E0_stderr: float
    nbar0: float
    nbar0_stderr: float
    scale: float  # counts/s at steady state
    scale_stderr: float
    background: float  # counts/s
    reduced_chi2: float
    delay: float = float("nan")
    nfev: int = 0
    repeats: int = 0

    @property
    def sampling_stderr(self):
        """Scatter of a thermal ensemble's sample mean over ``repeats`` ions (quanta)."""
        return self.nbar0 / math.sqrt(self.repeats) if self.repeats else 0.0

    @property
    def total_stderr(self):
        """Fit (photon-noise) and finite-ensemble errors in quadrature (quanta)."""
        return math.hypot(self.nbar0_stderr, self.sampling_stderr)

    def to_dict(self):
        return {
            "delay_s": self.delay,
            "E0_J": self.E0,
            "E0_stderr_J": self.E0_stderr,
            "nbar0": self.nbar0,
            "nbar0_stderr": self.nbar0_stderr,
            "scale_cps": self.scale,
            "scale_stderr_cps": self.scale_stderr,
            "background_cps": self.background,
            "reduced_chi2": self.reduced_chi2,
            "sampling_stderr": self.sampling_stderr,
            "total_stderr": self.total_stderr,
            "repeats": self.repeats,
            "uncertainty": "statistical only",
        }


def expected_counts(nbar0, scale, background, bin_edges, repeats, dyn, omega,
                    ensemble="thermal", coarse=False):
    """Model counts per bin: repeats * (scale * int(rho)/rho_ss + background * width)."""
    e0 = HBAR * omega * nbar0
    if ensemble == "thermal":
        c = dyn.thermal_cumulative(e0, bin_edges, coarse=coarse)
    else:
        c = dyn.cumulative([e0], bin_edges)[0]
    return repeats * (scale * np.diff(c) / dyn.rho_ss + background * np.diff(bin_edges))


def fit_recool(trace: RecoolTrace, species: IonSpecies, cfg: TrapLaserConfig,
               fit_background=False, background=None, ensemble="thermal",
               max_iter=200) -> RecoolFit:
    """Weighted least-squares fit of the recool model to a binned trace.

    Free parameters are the initial mean energy and the steady-state
    count rate (plus, optionally, a constant background).  Weights are
    Poisson, ``1 / max(counts, 1)``.
    """
    if trace.counts.size < 10:
        raise DataQualityError(f"trace has {trace.counts.size} bins; need >= 10", "recool")
    if not trace.counts.sum() > 0:
        raise DataQualityError("trace has no counts", "recool")
    _check(species, cfg)
    omega = cfg.motional_frequency
    dyn = dynamics(species, cfg)
    edges = trace.bin_edges
    y = trace.counts.astype(float)
    sigma = np.sqrt(np.maximum(y, 1.0))
    bg_fixed = cfg.background_rate if background is None else float(background)
    nb_ss = dyn.e_ss / (HBAR * omega)

    def model(p):
        bg = p[2] if fit_background else bg_fixed
        return expected_counts(p[0], p[1], bg, edges, trace.repeats, dyn, omega, ensemble)

    # coarse scan over nbar0 with the linear scale profiled out
    width = np.diff(edges)
    grid = np.geomspace(max(nb_ss * 1e-2, 1e-3), max(1e4 * nb_ss, 1e7), 61)
    best = None
    for nb in grid:
        shape = expected_counts(nb, 1.0, 0.0, edges, trace.repeats, dyn, omega, ensemble,
                                coarse=True)
        resid_y = y - trace.repeats * bg_fixed * width
        wts = 1.0 / sigma**2
        denom = np.sum(wts * shape**2)
        if denom <= 0:
            continue
        sc = np.sum(wts * shape * resid_y) / denom
        chi = np.sum(wts * (resid_y - sc * shape) ** 2)
        if best is None or chi < best[0]:
            best = (chi, nb, sc)
    if best is None or not best[2] > 0:
        raise DataQualityError("no positive steady-state rate fits this trace", "recool")
    p0 = [best[1], best[2]]
    lb, ub = [0.0, 0.0], [np.inf, np.inf]
    if fit_background:
        p0.append(max(bg_fixed, 0.0))
        lb.append(0.0)
        ub.append(np.inf)

    def resid(p):
        return (model(p) - y) / sigma

    p0 = np.array(p0, dtype=float)
    xs = np.maximum(np.abs(p0), 1e-12)
    try:
        res = optimize.least_squares(resid, p0, bounds=(lb, ub), x_scale=xs, method="trf",
                                     max_nfev=max_iter, xtol=1e-12, ftol=1e-12, gtol=1e-12,
                                     diff_step=1e-6)
    except (ValueError, np.linalg.LinAlgError) as err:
        raise FitError(f"recool fit failed at delay {trace.delay}: {err}", "recool") from None
    if res.status == 0:
        raise FitError(f"recool fit did not converge in {max_iter} evaluations "
                       f"(delay {trace.delay} s)", "recool")
    J = res.jac
    try:
        jtj = J.T @ J
        if np.linalg.cond(jtj) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        raise FitError(f"singular Jacobian in recool fit (delay {trace.delay} s)",
                       "recool") from None
    err = np.sqrt(np.diag(cov))
    dof = max(y.size - len(p0), 1)
    chi2 = float(res.fun @ res.fun) / dof
    nbar0 = float(res.x[0])
    return RecoolFit(
        E0=HBAR * omega * nbar0,
        E0_stderr=HBAR * omega * float(err[0]),
        nbar0=nbar0,
        nbar0_stderr=float(err[0]),
        scale=float(res.x[1]),
        scale_stderr=float(err[1]),
        background=float(res.x[2]) if fit_background else bg_fixed,
        reduced_chi2=chi2,
        delay=trace.delay,
        nfev=int(res.nfev),
        repeats=int(trace.repeats),
    )
