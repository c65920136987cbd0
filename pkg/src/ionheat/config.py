"""Physical constants, ion species and trap/laser configuration.

All quantities are SI inside the package.  The JSON config file uses
unit-suffixed keys (``motional_frequency_mhz``, ``ion_electrode_distance_um``,
...) and is converted on load.  Frequencies given in MHz are ordinary
frequencies; the matching attributes are angular (rad/s).

Detuning convention: ``detuning = omega_laser - omega_atom``, so Doppler
cooling needs ``detuning < 0``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysConstants:
    hbar: float = 1.054571817e-34  # J s
    elementary_charge: float = 1.602176634e-19  # C
    atomic_mass_unit: float = 1.66053906660e-27  # kg
    electron_mass_u: float = 5.48579909065e-4


# CODATA 2018; scipy >= 1.15 ships 2022 values, so these are pinned here.
CONSTANTS = PhysConstants()


@dataclass(frozen=True)
class IonSpecies:
    name: str
    mass: float  # kg
    transition_wavelength: float  # m
    natural_linewidth: float  # Hz, full width Gamma/2pi

    @property
    def gamma(self) -> float:
        """Natural linewidth as an angular rate (rad/s)."""
        return TWO_PI * self.natural_linewidth

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.transition_wavelength


def _ion_mass(atomic_mass_u, charge=1):
    return (atomic_mass_u - charge * CONSTANTS.electron_mass_u) * CONSTANTS.atomic_mass_unit


MG25 = IonSpecies(
    name="25Mg+",
    mass=_ion_mass(24.98583696),
    transition_wavelength=280e-9,
    natural_linewidth=41.4e6,
)

SPECIES_PRESETS = {MG25.name: MG25}


@dataclass(frozen=True)
class TrapLaserConfig:
    """Trap and Doppler/Raman beam parameters for one motional mode.

    ``beam_axis_cosine`` projects the Raman wavevector difference (magnitude
    ``sqrt(2) * 2pi/lambda``) onto the motional axis; ``doppler_axis_cosine``
    does the same for the single Doppler beam.  Neither constructor raises on
    out-of-range values; use :func:`validate_config`.
    """

    motional_frequency: float  # rad/s
    detuning: float  # rad/s
    saturation: float = 0.9
    ion_electrode_distance: float = 40e-6  # m
    beam_axis_cosine: float = 1.0
    doppler_axis_cosine: float = 1.0
    detection_efficiency: float = 1e-3
    background_rate: float = 0.0  # detected counts/s
    recoil_geometry_factor: float = 0.4
    weak_binding_fraction: float = 0.25
    quad_rtol: float = 1e-8
    ode_rtol: float = 1e-8

    @classmethod
    def for_species(cls, species: IonSpecies, motional_frequency_mhz: float,
                    detuning=None, **kwargs) -> "TrapLaserConfig":
        """Build a config at ``motional_frequency_mhz``; detuning defaults to -Gamma/2."""
        if detuning is None:
            detuning = -0.5 * species.gamma
        return cls(motional_frequency=TWO_PI * motional_frequency_mhz * 1e6,
                   detuning=detuning, **kwargs)

    @property
    def motional_frequency_mhz(self) -> float:
        return self.motional_frequency / TWO_PI / 1e6

    def with_frequency_mhz(self, f_mhz: float) -> "TrapLaserConfig":
        return replace(self, motional_frequency=TWO_PI * f_mhz * 1e6)


@dataclass(frozen=True)
class RamanConfig:
    """Raman probe and sideband-cooling parameters.

    ``decay_time=None`` means one red-sideband Rabi period at n = 1,
    i.e. twice ``red_pi_time``.
    """

    red_pi_time: float = 3e-6  # s, pi time on the n=1 -> 0 red sideband
    decay_time: float | None = None
    cooling_cycles: int = 30
    cycle_heating_quanta: float = 0.15  # chance of gaining one quantum per cooling cycle
    reference_n: float = 1.0
    cooling_decay: bool = False  # apply the probe decay envelope to cooling pulses too

    @property
    def decay_tau(self) -> float:
        return 2.0 * self.red_pi_time if self.decay_time is None else self.decay_time


@dataclass(frozen=True)
class DelaySchedule:
    delays: tuple  # s
    repeats_per_delay: int = 1

    def __post_init__(self):
        object.__setattr__(self, "delays", tuple(float(t) for t in self.delays))
        if self.repeats_per_delay < 1:
            raise ConfigError("repeats_per_delay must be >= 1", "config")
        if any(t < 0 for t in self.delays):
            raise ConfigError("delays must be non-negative", "config")
        if any(b <= a for a, b in zip(self.delays, self.delays[1:])):
            raise ConfigError("delays must be strictly increasing", "config")


@dataclass(frozen=True)
class Violation:
    field: str
    bound: str
    value: float

    def __str__(self):
        return f"{self.field}={self.value!r} violates {self.bound}"


def validate_config(cfg: TrapLaserConfig, species: IonSpecies) -> list[Violation]:
    """Return every violated invariant; an empty list means the config is usable."""
    out = []

    def check(ok, name, bound, value):
        if not (ok and math.isfinite(value)):
            out.append(Violation(name, bound, value))

    check(species.mass > 0, "species.mass", "> 0", species.mass)
    check(species.transition_wavelength > 0, "species.transition_wavelength", "> 0",
          species.transition_wavelength)
    check(species.natural_linewidth > 0, "species.natural_linewidth", "> 0",
          species.natural_linewidth)
    check(cfg.motional_frequency > 0, "motional_frequency", "> 0", cfg.motional_frequency)
    check(cfg.saturation >= 0, "saturation", ">= 0", cfg.saturation)
    check(cfg.ion_electrode_distance > 0, "ion_electrode_distance", "> 0",
          cfg.ion_electrode_distance)
    check(-1 <= cfg.beam_axis_cosine <= 1, "beam_axis_cosine", "in [-1, 1]",
          cfg.beam_axis_cosine)
    check(-1 <= cfg.doppler_axis_cosine <= 1, "doppler_axis_cosine", "in [-1, 1]",
          cfg.doppler_axis_cosine)
    check(0 < cfg.detection_efficiency <= 1, "detection_efficiency", "in (0, 1]",
          cfg.detection_efficiency)
    check(cfg.background_rate >= 0, "background_rate", ">= 0", cfg.background_rate)
    check(cfg.recoil_geometry_factor >= 0, "recoil_geometry_factor", ">= 0",
          cfg.recoil_geometry_factor)
    if species.natural_linewidth > 0 and cfg.motional_frequency > 0:
        limit = cfg.weak_binding_fraction * species.gamma
        check(cfg.motional_frequency < limit, "motional_frequency",
              f"weak binding: < {cfg.weak_binding_fraction} * 2pi * linewidth = {limit:.6g} rad/s",
              cfg.motional_frequency)
    return out


def lamb_dicke(species: IonSpecies, cfg: TrapLaserConfig) -> float:
    """Raman Lamb-Dicke parameter ``k_eff * sqrt(hbar / (2 m omega))``."""
    if not cfg.motional_frequency > 0:
        raise ConfigError(f"motional_frequency must be > 0, got {cfg.motional_frequency}",
                          "core-config")
    k_eff = math.sqrt(2.0) * species.wavenumber * cfg.beam_axis_cosine
    return abs(k_eff) * math.sqrt(CONSTANTS.hbar / (2.0 * species.mass * cfg.motional_frequency))


# --- JSON config file ---------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    heating_rate: float = 620.0  # quanta/s, injected truth for simulations
    delays: tuple = (5.0, 10.0, 15.0, 20.0, 25.0)  # s
    repeats: int = 2000  # recool repeats per delay
    bin_width: float | None = None  # s; None -> window / 400
    recool_window: float | None = None  # s; None -> automatic
    shots_per_point: int = 1400
    scan_points: int = 21  # per sideband window
    scan_half_width: float | None = None  # Hz; None -> 0.6 / red_pi_time
    sideband_nbar: float = 0.34  # for "scan" simulations without a sequence
    workers: int = 1
    method: str = "recool"  # which pipeline the delays belong to: recool | raman


@dataclass(frozen=True)
class RunConfig:
    species: IonSpecies
    trap: TrapLaserConfig
    raman: RamanConfig = field(default_factory=RamanConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def to_dict(self) -> dict:
        return config_to_dict(self)

    def config_hash(self) -> str:
        """sha256 over every physics-relevant parameter (workers excluded)."""
        d = self.to_dict()
        d["experiment"].pop("workers", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_REQUIRED_TRAP = ("motional_frequency_mhz",)


def _get(section, key, default, scale=1.0, name=""):
    if key not in section:
        return default
    v = section[key]
    if v is None:
        return None
    try:
        return float(v) * scale
    except (TypeError, ValueError):
        raise ConfigError(f"{name}{key}: expected a number, got {v!r}", "config") from None


def config_from_dict(d: dict[str, Any]) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a JSON object", "config")
    sp = d.get("species", {"preset": MG25.name})
    if "preset" in sp:
        try:
            species = SPECIES_PRESETS[sp["preset"]]
        except KeyError:
            raise ConfigError(f"unknown species preset {sp['preset']!r}", "config") from None
    else:
        missing = [k for k in ("mass_amu", "transition_wavelength_nm", "natural_linewidth_mhz")
                   if k not in sp]
        if missing:
            raise ConfigError(f"species: missing {', '.join(missing)}", "config")
        species = IonSpecies(
            name=str(sp.get("name", "custom")),
            mass=_get(sp, "mass_amu", None, CONSTANTS.atomic_mass_unit, "species."),
            transition_wavelength=_get(sp, "transition_wavelength_nm", None, 1e-9, "species."),
            natural_linewidth=_get(sp, "natural_linewidth_mhz", None, 1e6, "species."),
        )

    tr = d.get("trap")
    if not isinstance(tr, dict):
        raise ConfigError("missing 'trap' section", "config")
    for key in _REQUIRED_TRAP:
        if key not in tr:
            raise ConfigError(f"trap: missing required field {key!r}", "config")
    detuning_mhz = _get(tr, "detuning_mhz", None, name="trap.")
    base = TrapLaserConfig.for_species(
        species, _get(tr, "motional_frequency_mhz", None, name="trap."),
        detuning=None if detuning_mhz is None else TWO_PI * detuning_mhz * 1e6)
    defaults = TrapLaserConfig(1.0, 0.0)
    trap = replace(
        base,
        saturation=_get(tr, "saturation", defaults.saturation, name="trap."),
        ion_electrode_distance=_get(tr, "ion_electrode_distance_um",
                                    defaults.ion_electrode_distance, 1e-6, "trap."),
        beam_axis_cosine=_get(tr, "beam_axis_cosine", defaults.beam_axis_cosine, name="trap."),
        doppler_axis_cosine=_get(tr, "doppler_axis_cosine", defaults.doppler_axis_cosine,
                                 name="trap."),
        detection_efficiency=_get(tr, "detection_efficiency", defaults.detection_efficiency,
                                  name="trap."),
        background_rate=_get(tr, "background_rate_cps", defaults.background_rate, name="trap."),
        recoil_geometry_factor=_get(tr, "recoil_geometry_factor",
                                    defaults.recoil_geometry_factor, name="trap."),
        weak_binding_fraction=_get(tr, "weak_binding_fraction", defaults.weak_binding_fraction,
                                   name="trap."),
        quad_rtol=_get(tr, "quad_rtol", defaults.quad_rtol, name="trap."),
        ode_rtol=_get(tr, "ode_rtol", defaults.ode_rtol, name="trap."),
    )
    bad = validate_config(trap, species)
    if bad:
        raise ConfigError("invalid config: " + "; ".join(map(str, bad)), "config")

    ra = d.get("raman", {})
    rd = RamanConfig()
    raman = RamanConfig(
        red_pi_time=_get(ra, "red_pi_time_us", rd.red_pi_time, 1e-6, "raman."),
        decay_time=_get(ra, "decay_time_us", rd.decay_time, 1e-6, "raman."),
        cooling_cycles=int(ra.get("cooling_cycles", rd.cooling_cycles)),
        cycle_heating_quanta=_get(ra, "cycle_heating_quanta", rd.cycle_heating_quanta,
                                  name="raman."),
        reference_n=_get(ra, "reference_n", rd.reference_n, name="raman."),
        cooling_decay=bool(ra.get("cooling_decay", rd.cooling_decay)),
    )
    if raman.red_pi_time <= 0:
        raise ConfigError("raman.red_pi_time_us must be > 0", "config")

    ex = d.get("experiment", {})
    ed = ExperimentConfig()
    delays = ex.get("delays_s", ed.delays)
    if "delays_ms" in ex:
        delays = [float(t) * 1e-3 for t in ex["delays_ms"]]
    try:
        DelaySchedule(tuple(delays))
    except ConfigError as err:
        raise ConfigError(f"experiment.delays: {err}", "config") from None
    experiment = ExperimentConfig(
        heating_rate=_get(ex, "heating_rate_per_s", ed.heating_rate, name="experiment."),
        delays=tuple(float(t) for t in delays),
        repeats=int(ex.get("repeats", ed.repeats)),
        bin_width=_get(ex, "bin_width_us", ed.bin_width, 1e-6, "experiment."),
        recool_window=_get(ex, "recool_window_us", ed.recool_window, 1e-6, "experiment."),
        shots_per_point=int(ex.get("shots_per_point", ed.shots_per_point)),
        scan_points=int(ex.get("scan_points", ed.scan_points)),
        scan_half_width=_get(ex, "scan_half_width_khz", ed.scan_half_width, 1e3, "experiment."),
        sideband_nbar=_get(ex, "sideband_nbar", ed.sideband_nbar, name="experiment."),
        workers=int(ex.get("workers", ed.workers)),
        method=str(ex.get("method", ed.method)),
    )
    if experiment.method not in ("recool", "raman"):
        raise ConfigError(f"experiment.method must be 'recool' or 'raman', "
                          f"got {experiment.method!r}", "config")
    if experiment.bin_width is not None and experiment.bin_width <= 0:
        raise ConfigError("experiment.bin_width_us must be > 0", "config")
    if experiment.heating_rate < 0:
        raise ConfigError("experiment.heating_rate_per_s must be >= 0", "config")
    if experiment.repeats < 1 or experiment.shots_per_point < 1:
        raise ConfigError("experiment repeats/shots must be >= 1", "config")
    return RunConfig(species, trap, raman, experiment)


def _trim(x):
    """Drop unit-conversion noise so dict -> config -> dict is a fixed point."""
    return float(f"{x:.12g}")


def config_to_dict(run: RunConfig) -> dict[str, Any]:
    sp = run.species
    if SPECIES_PRESETS.get(sp.name) == sp:
        species = {"preset": sp.name}
    else:
        species = {
            "name": sp.name,
            "mass_amu": _trim(sp.mass / CONSTANTS.atomic_mass_unit),
            "transition_wavelength_nm": _trim(sp.transition_wavelength / 1e-9),
            "natural_linewidth_mhz": _trim(sp.natural_linewidth / 1e6),
        }
    t = run.trap
    trap = {
        "motional_frequency_mhz": _trim(t.motional_frequency / TWO_PI / 1e6),
        "detuning_mhz": _trim(t.detuning / TWO_PI / 1e6),
        "saturation": t.saturation,
        "ion_electrode_distance_um": _trim(t.ion_electrode_distance / 1e-6),
        "beam_axis_cosine": t.beam_axis_cosine,
        "doppler_axis_cosine": t.doppler_axis_cosine,
        "detection_efficiency": t.detection_efficiency,
        "background_rate_cps": t.background_rate,
        "recoil_geometry_factor": t.recoil_geometry_factor,
        "weak_binding_fraction": t.weak_binding_fraction,
        "quad_rtol": t.quad_rtol,
        "ode_rtol": t.ode_rtol,
    }
    r = run.raman
    raman = {
        "red_pi_time_us": _trim(r.red_pi_time / 1e-6),
        "decay_time_us": None if r.decay_time is None else _trim(r.decay_time / 1e-6),
        "cooling_cycles": r.cooling_cycles,
        "cycle_heating_quanta": r.cycle_heating_quanta,
        "reference_n": r.reference_n,
        "cooling_decay": r.cooling_decay,
    }
    e = run.experiment
    experiment = {
        "heating_rate_per_s": e.heating_rate,
        "delays_s": list(e.delays),
        "repeats": e.repeats,
        "bin_width_us": None if e.bin_width is None else _trim(e.bin_width / 1e-6),
        "recool_window_us": None if e.recool_window is None else _trim(e.recool_window / 1e-6),
        "shots_per_point": e.shots_per_point,
        "scan_points": e.scan_points,
        "scan_half_width_khz": (None if e.scan_half_width is None
                                else _trim(e.scan_half_width / 1e3)),
        "sideband_nbar": e.sideband_nbar,
        "workers": e.workers,
        "method": e.method,
    }
    return {"species": species, "trap": trap, "raman": raman, "experiment": experiment}


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}", "config") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})", "config") from None
    return config_from_dict(d)


def dump_config(run: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(run), indent=2) + "\n", encoding="utf-8")


def default_run_config(f_mhz=4.02, **experiment) -> RunConfig:
    trap = TrapLaserConfig.for_species(MG25, f_mhz)
    return RunConfig(MG25, trap, RamanConfig(), ExperimentConfig(**experiment))
