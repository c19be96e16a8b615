"""Campaign configuration: flat key-value text files and their resolution.

Config files are flat dotted-key ``section.key = value`` lines (a strict
subset of TOML), all physical quantities in SI units with the unit spelled
in the key name. Every key has a default, so an empty file is a valid
campaign. Unknown keys are rejected to catch typos early.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python 3.10
    import tomli as _toml

from ..constants import DEFAULT_WAVELENGTH
from ..dynamics import SQUARE_WAVE, STATIC, ForceProfile
from ..imaging import ImagingConfig
from ..lattice import BeamGeometry, ReciprocalLattice, build_reciprocal_lattice

__all__ = ["ConfigError", "DriftModel", "CampaignConfig", "load_config",
           "config_from_dict"]

DRIFT_KINDS = ("none", "linear", "random_walk")


class ConfigError(Exception):
    """A campaign configuration could not be parsed or validated."""


@dataclass(frozen=True)
class DriftModel:
    """Slow force-control drift injected on the y-component."""

    kind: str = "none"
    rate: float = 0.0  # N/s, linear ramp
    step: float = 0.0  # N per cycle, random-walk increment rms

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"drift kind must be one of {DRIFT_KINDS}")
        if self.rate < 0 or self.step < 0:
            raise ValueError("drift parameters must be nonnegative")


@dataclass(frozen=True, eq=False)
class CampaignConfig:
    """Everything a campaign run needs, fully resolved."""

    geometry: BeamGeometry
    imaging: ImagingConfig
    force: ForceProfile
    n0: float = 2.0e5
    condensate_fraction: float = 0.9
    tau_coh: float = 0.05  # s
    l_q: float = 1.0e-6  # m
    dt_list: tuple = (4.2e-3,)  # s, force acting times
    cycle_time: float = 76.0  # s, wall-clock cost of one data point
    prep_time: float = 38.0  # s, dead preparation time inside cycle_time
    n_cycles: int = 100
    seed: int = 1
    drift: DriftModel = field(default_factory=DriftModel)
    paired_shots: bool = False  # share the jitter/noise stream across a pair
    workers: int = 1
    ac_n_periods: int = 8
    ac_samples_per_half: int = 5
    ac_sample_times: tuple | None = None  # s, overrides the generated grid

    def __post_init__(self):
        if self.n_cycles < 2:
            raise ValueError("n_cycles must be >= 2")
        if len(self.dt_list) == 0 or any(dt <= 0 for dt in self.dt_list):
            raise ValueError("dt_list must be nonempty with positive entries")
        if not self.prep_time < self.cycle_time:
            raise ValueError("prep_time must be smaller than cycle_time")
        if not (self.n0 > 0 and 0 <= self.condensate_fraction <= 1):
            raise ValueError("n0 must be positive and fraction in [0, 1]")
        if not (self.tau_coh > 0 and self.l_q > 0):
            raise ValueError("tau_coh and l_q must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.ac_n_periods < 2 or self.ac_samples_per_half < 2:
            raise ValueError("ac sampling needs >= 2 periods and >= 2 samples per half")
        object.__setattr__(self, "dt_list", tuple(float(v) for v in self.dt_list))
        if self.ac_sample_times is not None:
            object.__setattr__(self, "ac_sample_times",
                               tuple(float(v) for v in self.ac_sample_times))

    def lattice(self) -> ReciprocalLattice:
        return build_reciprocal_lattice(self.geometry)

    def to_dict(self) -> dict:
        """Fully resolved config as the nested key tree of the file format."""
        g = self.geometry
        im = self.imaging
        f = self.force
        d = {
            "lattice": {
                "wavelength_m": g.wavelength,
                "beam_angles_deg": [a * 180.0 / math.pi for a in g.beam_angles],
            },
            "force": {
                "kind": f.kind,
                "static_n": list(map(float, f.static_force)),
                "sw_amplitude_n": list(map(float, f.sw_amplitude)),
                "sw_frequency_hz": f.sw_frequency,
                "sw_phase_rad": f.sw_phase,
                "sw_offset_n": list(map(float, f.sw_offset)),
            },
            "imaging": {
                "grid": [im.nx, im.ny],
                "k_per_pixel_inv_m": im.k_per_pixel,
                "peak_sigma_k_inv_m": im.peak_sigma_k,
                "thermal_sigma_k_inv_m": im.thermal_sigma_k,
                "shell_cutoff": im.shell_cutoff,
                "peak_weight_decay": im.peak_weight_decay,
            },
            "condensate": {
                "n0": self.n0,
                "fraction": self.condensate_fraction,
                "tau_coh_s": self.tau_coh,
                "l_q_m": self.l_q,
            },
            "campaign": {
                "dt_list_s": list(self.dt_list),
                "cycle_time_s": self.cycle_time,
                "prep_time_s": self.prep_time,
                "n_cycles": self.n_cycles,
                "seed": self.seed,
                "paired_shots": self.paired_shots,
                "workers": self.workers,
            },
            "noise": {
                "centering_jitter_k_inv_m": im.centering_jitter_k,
                "drift_model": self.drift.kind,
                "drift_rate_n_per_s": self.drift.rate,
                "drift_step_n": self.drift.step,
            },
            "ac": {
                "n_periods": self.ac_n_periods,
                "samples_per_half": self.ac_samples_per_half,
            },
        }
        if self.ac_sample_times is not None:
            d["ac"]["sample_times_s"] = list(self.ac_sample_times)
        return d

    def config_hash(self) -> str:
        """SHA-256 of the canonical (sorted-key) JSON of the resolved config."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


class _KeyReader:
    """Tracks which keys of the nested config dict were consumed."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.seen = set()

    def get(self, section: str, key: str, default):
        self.seen.add((section, key))
        try:
            return self.raw[section][key]
        except (KeyError, TypeError):
            return default

    def check_exhausted(self):
        extra = []
        for section, body in self.raw.items():
            if not isinstance(body, dict):
                extra.append(section)
                continue
            for key in body:
                if (section, key) not in self.seen:
                    extra.append(f"{section}.{key}")
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")


def _vec2_key(value, name) -> tuple:
    try:
        x, y = value
        return (float(x), float(y))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a [x, y] pair") from exc


def config_from_dict(raw: dict) -> CampaignConfig:
    """Resolve a nested key tree (parsed config file) into a CampaignConfig."""
    r = _KeyReader(raw)
    try:
        wavelength = float(r.get("lattice", "wavelength_m", DEFAULT_WAVELENGTH))
        angles_deg = r.get("lattice", "beam_angles_deg", [90.0, 210.0, 330.0])
        if len(angles_deg) != 3:
            raise ConfigError("lattice.beam_angles_deg needs exactly three angles")
        geometry = BeamGeometry(
            wavelength=wavelength,
            beam_angles=tuple(float(a) * math.pi / 180.0 for a in angles_deg))

        kind = r.get("force", "kind", STATIC)
        if kind not in (STATIC, SQUARE_WAVE):
            raise ConfigError(f"force.kind must be '{STATIC}' or '{SQUARE_WAVE}'")
        force = ForceProfile(
            kind=kind,
            static_force=_vec2_key(r.get("force", "static_n", (0.0, 0.0)),
                                   "force.static_n"),
            sw_amplitude=_vec2_key(r.get("force", "sw_amplitude_n", (0.0, 0.0)),
                                   "force.sw_amplitude_n"),
            sw_frequency=float(r.get("force", "sw_frequency_hz",
                                     250.0 if kind == SQUARE_WAVE else 0.0)),
            sw_phase=float(r.get("force", "sw_phase_rad", 0.0)),
            sw_offset=_vec2_key(r.get("force", "sw_offset_n", (0.0, 0.0)),
                                "force.sw_offset_n"),
        )

        b_norm = build_reciprocal_lattice(geometry).b_norm
        grid = r.get("imaging", "grid", [256, 256])
        if len(grid) != 2:
            raise ConfigError("imaging.grid must be [nx, ny]")
        imaging = ImagingConfig(
            nx=int(grid[0]), ny=int(grid[1]),
            k_per_pixel=float(r.get("imaging", "k_per_pixel_inv_m", b_norm / 64.0)),
            peak_sigma_k=float(r.get("imaging", "peak_sigma_k_inv_m", b_norm / 40.0)),
            thermal_sigma_k=float(r.get("imaging", "thermal_sigma_k_inv_m",
                                        b_norm / 4.0)),
            shell_cutoff=int(r.get("imaging", "shell_cutoff", 1)),
            peak_weight_decay=float(r.get("imaging", "peak_weight_decay", 0.15)),
            centering_jitter_k=float(r.get("noise", "centering_jitter_k_inv_m", 0.0)),
        )

        drift = DriftModel(
            kind=str(r.get("noise", "drift_model", "none")),
            rate=float(r.get("noise", "drift_rate_n_per_s", 0.0)),
            step=float(r.get("noise", "drift_step_n", 0.0)),
        )

        sample_times = r.get("ac", "sample_times_s", None)
        cfg = CampaignConfig(
            geometry=geometry,
            imaging=imaging,
            force=force,
            n0=float(r.get("condensate", "n0", 2.0e5)),
            condensate_fraction=float(r.get("condensate", "fraction", 0.9)),
            tau_coh=float(r.get("condensate", "tau_coh_s", 0.05)),
            l_q=float(r.get("condensate", "l_q_m", 1.0e-6)),
            dt_list=tuple(float(v) for v in
                          r.get("campaign", "dt_list_s", [4.2e-3])),
            cycle_time=float(r.get("campaign", "cycle_time_s", 76.0)),
            prep_time=float(r.get("campaign", "prep_time_s", 38.0)),
            n_cycles=int(r.get("campaign", "n_cycles", 100)),
            seed=int(r.get("campaign", "seed", 1)),
            drift=drift,
            paired_shots=bool(r.get("campaign", "paired_shots", False)),
            workers=int(r.get("campaign", "workers", 1)),
            ac_n_periods=int(r.get("ac", "n_periods", 8)),
            ac_samples_per_half=int(r.get("ac", "samples_per_half", 5)),
            ac_sample_times=None if sample_times is None
            else tuple(float(v) for v in sample_times),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    r.check_exhausted()
    return cfg


def load_config(path) -> CampaignConfig:
    """Parse a flat key-value config file into a CampaignConfig."""
    try:
        with open(path, "rb") as fh:
            raw = _toml.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(raw)
