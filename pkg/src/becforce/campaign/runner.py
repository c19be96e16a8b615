"""Campaign execution: shots, reconstruction, and the analysis stage.

Each measurement cycle is a differential pair: one reference shot of the
unperturbed condensate and one signal shot after the force acted for dt.
Shots are independent and may run on a process pool; every shot draws its
randomness from a stream keyed by (campaign seed, cycle index, shot role),
so results are order-independent and bit-reproducible at any worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..dynamics import (SQUARE_WAVE, STATIC, CondensateState, ForceProfile,
                        QuasimomentumTrace, apply_decoherence,
                        evolve_quasimomentum, force_from_impulse)
from ..imaging import DifferentialFitError, differential_wavevector, synthesize_tof
from ..lattice import fold_to_fbz
from ..metrology import (AdevCurve, HistogramStability, MeasurementSeries,
                         NormalityReport, PlateauFit, allan_deviation,
                         fit_square_wave_plateaus, force_angle,
                         histogram_stability, normality_diagnostic,
                         sensitivity_from_adev)
from .config import CampaignConfig

__all__ = [
    "CycleResult",
    "ComponentAnalysis",
    "RunRecord",
    "ScalingRecord",
    "AcRecord",
    "run_static_campaign",
    "run_scaling_campaign",
    "run_ac_campaign",
]

_REF, _SIG = 0, 1
_DRIFT_STREAM = 0xD1F7


def _fit_window(cfg: CampaignConfig) -> float:
    """Window half-width: covers the peak and jitter excursions, but never
    reaches the neighboring Bragg copy."""
    im = cfg.imaging
    want = 8.0 * im.peak_sigma_k + 5.0 * im.centering_jitter_k
    return min(want, 0.45 * cfg.lattice().b_norm)


def _drift_offsets(cfg: CampaignConfig, n: int) -> np.ndarray:
    """Per-cycle additive y-force drift (N), precomputed sequentially."""
    out = np.zeros(n)
    if cfg.drift.kind == "linear":
        out = cfg.drift.rate * cfg.cycle_time * np.arange(n)
    elif cfg.drift.kind == "random_walk":
        rng = np.random.default_rng((cfg.seed, _DRIFT_STREAM))
        out = np.cumsum(rng.normal(0.0, cfg.drift.step, size=n))
    return out


@dataclass(frozen=True, eq=False)
class CycleResult:
    """One differential measurement: what was measured and what it implies."""

    index: int
    timestamp: float  # s, cycle start
    dt: float  # s, force acting time
    dk: np.ndarray  # (2,) m^-1, unfolded measured wavevector change
    sigma_k: np.ndarray  # (2,) m^-1, fit + jitter uncertainty
    force: np.ndarray  # (2,) N, reconstructed
    converged: bool

    def to_json_dict(self) -> dict:
        return {
            "index": self.index,
            "timestamp_s": self.timestamp,
            "dt_s": self.dt,
            "dk_inv_m": [float(v) for v in self.dk],
            "sigma_k_inv_m": [float(v) for v in self.sigma_k],
            "force_n": [float(v) for v in self.force],
            "converged": self.converged,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CycleResult":
        return cls(index=d["index"], timestamp=d["timestamp_s"], dt=d["dt_s"],
                   dk=np.array(d["dk_inv_m"]),
                   sigma_k=np.array(d["sigma_k_inv_m"]),
                   force=np.array(d["force_n"]), converged=d["converged"])


def _simulate_cycle(cfg: CampaignConfig, lat, window_k: float, index: int,
                    dt: float, force: ForceProfile) -> CycleResult:
    """Reference + signal shot pair, differential fit, force reconstruction."""
    im = cfg.imaging
    k_f = evolve_quasimomentum((0.0, 0.0), force, dt)
    k_fold = fold_to_fbz(k_f, lat)
    zone_shift = k_f - k_fold

    ref_state = CondensateState(n0=cfg.n0,
                                condensate_fraction=cfg.condensate_fraction,
                                k=(0.0, 0.0), coherence=1.0, l_q=cfg.l_q)
    sig_state = apply_decoherence(replace(ref_state, k=k_fold), dt, cfg.tau_coh)

    sig_seed = (cfg.seed, 1, index, _SIG)
    if cfg.paired_shots:
        # Common-mode pair: both shots share one noise realization, so the
        # centering jitter (and, for identical states, the whole image)
        # cancels in the difference.
        ref_seed = sig_seed
    else:
        ref_seed = (cfg.seed, 1, index, _REF)
    img_ref = synthesize_tof(ref_state, lat, im, seed=ref_seed)
    img_sig = synthesize_tof(sig_state, lat, im, seed=sig_seed)

    timestamp = index * cfg.cycle_time
    try:
        dk_meas, sigma_fit = differential_wavevector(
            img_ref, img_sig, guess=k_fold, window_k=window_k,
            guess_ref=np.zeros(2))
    except DifferentialFitError:
        nan2 = np.full(2, np.nan)
        return CycleResult(index=index, timestamp=timestamp, dt=dt,
                           dk=nan2, sigma_k=nan2.copy(), force=nan2.copy(),
                           converged=False)
    dk_unfolded = dk_meas + zone_shift
    jitter_var = 0.0 if cfg.paired_shots else 2.0 * im.centering_jitter_k ** 2
    sigma_k = np.sqrt(sigma_fit ** 2 + jitter_var)
    # dt = 0 samples (ac trace anchor) carry no mean-force reading.
    f_rec = force_from_impulse((0.0, 0.0), dk_unfolded, dt) if dt > 0 \
        else np.full(2, np.nan)
    return CycleResult(index=index, timestamp=timestamp, dt=dt,
                       dk=dk_unfolded, sigma_k=sigma_k, force=f_rec,
                       converged=True)


def _cycle_task(args):
    return _simulate_cycle(*args)


def _run_cycles(cfg: CampaignConfig, tasks, workers: int | None):
    """Execute cycle tasks, optionally on a pool; aggregation keeps task order."""
    workers = cfg.workers if workers is None else workers
    if workers <= 1:
        return [_cycle_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_cycle_task, tasks, chunksize=8))


def _octave_multiples(n: int) -> list:
    """1, 2, 4, ... capped at n//2, with n//2 itself always included."""
    out = []
    m = 1
    while m <= n // 2:
        out.append(m)
        m *= 2
    if out and out[-1] != n // 2:
        out.append(n // 2)
    return out


@dataclass(frozen=True, eq=False)
class ComponentAnalysis:
    """Stability analysis of one force component."""

    label: str
    adev: AdevCurve
    histogram: HistogramStability
    normality: NormalityReport | None
    sensitivity: float  # N/sqrt(Hz), cycle-referenced: adev(tau0)*sqrt(tau0)
    acting_sensitivity: float  # N/sqrt(Hz), force-acting-time-only: adev(tau0)*sqrt(dt)

    def to_json_dict(self) -> dict:
        d = {
            "label": self.label,
            "adev": {
                "tau_s": [float(v) for v in self.adev.taus],
                "adev_n": [float(v) for v in self.adev.adev],
                "ci_lo_n": [float(v) for v in self.adev.ci_lower],
                "ci_hi_n": [float(v) for v in self.adev.ci_upper],
            },
            "histogram": {
                "bin_size": [int(v) for v in self.histogram.bin_sizes],
                "stability_n": [float(v) for v in self.histogram.stability],
                "ci_lo_n": [float(v) for v in self.histogram.ci_lower],
                "ci_hi_n": [float(v) for v in self.histogram.ci_upper],
            },
            "sensitivity_n_per_rthz": self.sensitivity,
            "acting_time_sensitivity_n_per_rthz": self.acting_sensitivity,
        }
        if self.normality is not None:
            d["normality"] = {
                "statistic": self.normality.statistic,
                "passed": self.normality.passed,
                "skewness": self.normality.skewness,
                "excess_kurtosis": self.normality.excess_kurtosis,
                "n": self.normality.n,
            }
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ComponentAnalysis":
        a = d["adev"]
        h = d["histogram"]
        norm = None
        if "normality" in d:
            n = d["normality"]
            norm = NormalityReport(statistic=n["statistic"], passed=n["passed"],
                                   skewness=n["skewness"],
                                   excess_kurtosis=n["excess_kurtosis"],
                                   n=n["n"])
        return cls(
            label=d["label"],
            adev=AdevCurve(taus=np.array(a["tau_s"]), adev=np.array(a["adev_n"]),
                           ci_lower=np.array(a["ci_lo_n"]),
                           ci_upper=np.array(a["ci_hi_n"])),
            histogram=HistogramStability(bin_sizes=np.array(h["bin_size"]),
                                         stability=np.array(h["stability_n"]),
                                         ci_lower=np.array(h["ci_lo_n"]),
                                         ci_upper=np.array(h["ci_hi_n"])),
            normality=norm,
            sensitivity=d["sensitivity_n_per_rthz"],
            acting_sensitivity=d["acting_time_sensitivity_n_per_rthz"],
        )


def _analyze_component(values: np.ndarray, times: np.ndarray, label: str,
                       cfg: CampaignConfig, dt: float) -> ComponentAnalysis:
    series = MeasurementSeries(values=values, cycle_time=cfg.cycle_time,
                               start_times=times, label=label)
    n = len(values)
    taus = np.array(_octave_multiples(n), dtype=float) * cfg.cycle_time
    adev = allan_deviation(series, taus)
    hist = histogram_stability(series, _octave_multiples(n))
    normality = normality_diagnostic(series) if n >= 50 else None
    adev0 = adev.at(cfg.cycle_time)
    return ComponentAnalysis(
        label=label,
        adev=adev,
        histogram=hist,
        normality=normality,
        sensitivity=sensitivity_from_adev(adev, cfg.cycle_time),
        acting_sensitivity=adev0 * np.sqrt(dt),
    )


@dataclass(frozen=True, eq=False)
class RunRecord:
    """A complete static campaign: per-cycle data plus the analysis summary."""

    config_hash: str
    config: dict
    cycles: list
    mean_force: np.ndarray  # (2,) N over converged cycles
    sem_force: np.ndarray  # (2,) N standard error of the mean
    theta: float  # rad from +y toward +x
    theta_sigma: float
    analysis_x: ComponentAnalysis
    analysis_y: ComponentAnalysis
    n_excluded: int
    dt: float

    kind = "static"

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": self.kind,
            "config_hash": self.config_hash,
            "config": self.config,
            "cycles": [c.to_json_dict() for c in self.cycles],
            "summary": {
                "mean_force_n": [float(v) for v in self.mean_force],
                "sem_force_n": [float(v) for v in self.sem_force],
                "theta_rad": self.theta,
                "theta_sigma_rad": self.theta_sigma,
                "dt_s": self.dt,
                "n_cycles": len(self.cycles),
                "n_excluded": self.n_excluded,
                "x": self.analysis_x.to_json_dict(),
                "y": self.analysis_y.to_json_dict(),
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RunRecord":
        s = d["summary"]
        return cls(
            config_hash=d["config_hash"],
            config=d["config"],
            cycles=[CycleResult.from_json_dict(c) for c in d["cycles"]],
            mean_force=np.array(s["mean_force_n"]),
            sem_force=np.array(s["sem_force_n"]),
            theta=s["theta_rad"],
            theta_sigma=s["theta_sigma_rad"],
            analysis_x=ComponentAnalysis.from_json_dict(s["x"]),
            analysis_y=ComponentAnalysis.from_json_dict(s["y"]),
            n_excluded=s["n_excluded"],
            dt=s["dt_s"],
        )

    def save(self, path) -> None:
        write_json(self.to_json_dict(), path)


def write_json(payload: dict, path) -> None:
    """Canonical JSON: sorted keys, fixed separators, shortest-round-trip floats."""
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def run_static_campaign(cfg: CampaignConfig, workers: int | None = None) -> RunRecord:
    """Simulate n_cycles differential force measurements and analyze them.

    Per cycle: evolve the quasi-momentum under the (possibly drifting)
    static force for dt, synthesize the reference and signal shots, fit the
    differential wavevector, and invert to a force. Unconverged fits are
    flagged and excluded from the statistics. Fully deterministic given
    (config, seed), at any worker count.
    """
    if cfg.force.kind != STATIC:
        raise ValueError("run_static_campaign requires a static force profile")
    lat = cfg.lattice()
    window_k = _fit_window(cfg)
    dt = cfg.dt_list[0]
    drift = _drift_offsets(cfg, cfg.n_cycles)
    tasks = []
    for i in range(cfg.n_cycles):
        f_i = ForceProfile.static(cfg.force.static_force + np.array([0.0, drift[i]]))
        tasks.append((cfg, lat, window_k, i, dt, f_i))
    cycles = _run_cycles(cfg, tasks, workers)

    good = [c for c in cycles if c.converged]
    if len(good) < 2:
        raise RuntimeError("fewer than two converged cycles; cannot analyze")
    forces = np.array([c.force for c in good])
    times = np.array([c.timestamp for c in good])
    mean_f = forces.mean(axis=0)
    sem_f = forces.std(axis=0, ddof=1) / np.sqrt(len(good))
    norm2 = float(mean_f @ mean_f)
    # Angle undefined for a zero mean force (background-free null result).
    theta = force_angle(mean_f) if norm2 > 0 else float("nan")
    # First-order propagation of atan2(Fx, Fy) in the component SEMs.
    theta_sigma = float(np.sqrt((mean_f[1] * sem_f[0]) ** 2
                                + (mean_f[0] * sem_f[1]) ** 2) / norm2) \
        if norm2 > 0 else float("nan")

    return RunRecord(
        config_hash=cfg.config_hash(),
        config=cfg.to_dict(),
        cycles=cycles,
        mean_force=mean_f,
        sem_force=sem_f,
        theta=theta,
        theta_sigma=theta_sigma,
        analysis_x=_analyze_component(forces[:, 0], times, "x", cfg, dt),
        analysis_y=_analyze_component(forces[:, 1], times, "y", cfg, dt),
        n_excluded=len(cycles) - len(good),
        dt=dt,
    )


@dataclass(frozen=True, eq=False)
class ScalingRecord:
    """Sensitivity versus force acting time, with the fitted power law."""

    config_hash: str
    config: dict
    dts: np.ndarray  # (n,) s
    sensitivity: np.ndarray  # (n, 2) N/sqrt(Hz) per component
    acting_sensitivity: np.ndarray  # (n, 2)
    exponent: np.ndarray  # (2,) log-log slope per component
    exponent_sigma: np.ndarray  # (2,)
    sub_seeds: list

    kind = "scaling"

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": self.kind,
            "config_hash": self.config_hash,
            "config": self.config,
            "entries": [
                {
                    "dt_s": float(self.dts[i]),
                    "sensitivity_n_per_rthz": [float(v) for v in self.sensitivity[i]],
                    "acting_time_sensitivity_n_per_rthz":
                        [float(v) for v in self.acting_sensitivity[i]],
                    "seed": int(self.sub_seeds[i]),
                }
                for i in range(len(self.dts))
            ],
            "summary": {
                "exponent": [float(v) for v in self.exponent],
                "exponent_sigma": [float(v) for v in self.exponent_sigma],
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ScalingRecord":
        entries = d["entries"]
        return cls(
            config_hash=d["config_hash"],
            config=d["config"],
            dts=np.array([e["dt_s"] for e in entries]),
            sensitivity=np.array([e["sensitivity_n_per_rthz"] for e in entries]),
            acting_sensitivity=np.array(
                [e["acting_time_sensitivity_n_per_rthz"] for e in entries]),
            exponent=np.array(d["summary"]["exponent"]),
            exponent_sigma=np.array(d["summary"]["exponent_sigma"]),
            sub_seeds=[e["seed"] for e in entries],
        )

    def save(self, path) -> None:
        write_json(self.to_json_dict(), path)


def run_scaling_campaign(cfg: CampaignConfig, workers: int | None = None) -> ScalingRecord:
    """One static campaign per dt in dt_list, then fit log S vs log dt.

    Each sub-campaign gets a seed derived from (campaign seed, position), so
    duplicated dt entries are independent repetitions.
    """
    if len(set(cfg.dt_list)) < 3:
        raise ValueError("scaling campaign needs at least three distinct dt values")
    sens = []
    acting = []
    seeds = []
    for idx, dt in enumerate(cfg.dt_list):
        sub_seed = int(np.random.SeedSequence((cfg.seed, idx)).generate_state(1)[0])
        sub = replace(cfg, dt_list=(dt,), seed=sub_seed)
        rec = run_static_campaign(sub, workers=workers)
        sens.append([rec.analysis_x.sensitivity, rec.analysis_y.sensitivity])
        acting.append([rec.analysis_x.acting_sensitivity,
                       rec.analysis_y.acting_sensitivity])
        seeds.append(sub_seed)
    dts = np.array(cfg.dt_list)
    sens = np.array(sens)
    acting = np.array(acting)
    exponent = np.empty(2)
    exponent_sigma = np.empty(2)
    x = np.log(dts)
    for c in range(2):
        y = np.log(sens[:, c])
        (slope, intercept), cov = np.polyfit(x, y, 1, cov=True)
        exponent[c] = slope
        exponent_sigma[c] = np.sqrt(cov[0, 0])
    return ScalingRecord(
        config_hash=cfg.config_hash(),
        config=cfg.to_dict(),
        dts=dts,
        sensitivity=sens,
        acting_sensitivity=acting,
        exponent=exponent,
        exponent_sigma=exponent_sigma,
        sub_seeds=seeds,
    )


@dataclass(frozen=True, eq=False)
class AcRecord:
    """Alternating-force calibration: sampled trace and plateau extraction."""

    config_hash: str
    config: dict
    sample_times: np.ndarray  # (n,) s, force acting times across the modulation
    k_measured: np.ndarray  # (n, 2) m^-1, unfolded
    sigma_k: np.ndarray  # (n, 2) m^-1
    frequency: float  # Hz, known modulation frequency used for segmentation
    plateaus: PlateauFit
    n_excluded: int

    kind = "ac"

    def to_json_dict(self) -> dict:
        p = self.plateaus
        return {
            "schema_version": 1,
            "kind": self.kind,
            "config_hash": self.config_hash,
            "config": self.config,
            "trace": {
                "t_s": [float(v) for v in self.sample_times],
                "k_inv_m": [[float(v) for v in row] for row in self.k_measured],
                "sigma_k_inv_m": [[float(v) for v in row] for row in self.sigma_k],
            },
            "summary": {
                "frequency_hz": self.frequency,
                "n_excluded": self.n_excluded,
                "segments": {
                    "mid_t_s": [float(v) for v in p.mid_times],
                    "sign": [float(v) for v in p.signs],
                    "force_n": [[float(v) for v in row] for row in p.forces],
                    "force_sigma_n": [[float(v) for v in row]
                                      for row in p.force_sigmas],
                },
                "positive_mean_n": [float(v) for v in p.positive_mean],
                "positive_std_n": [float(v) for v in p.positive_std],
                "negative_mean_n": [float(v) for v in p.negative_mean],
                "negative_std_n": [float(v) for v in p.negative_std],
                "positive_variance_n2": [float(v) for v in p.positive_variance],
                "negative_variance_n2": [float(v) for v in p.negative_variance],
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AcRecord":
        s = d["summary"]
        seg = s["segments"]
        plateaus = PlateauFit(
            forces=np.array(seg["force_n"]),
            force_sigmas=np.array(seg["force_sigma_n"]),
            signs=np.array(seg["sign"]),
            mid_times=np.array(seg["mid_t_s"]),
            positive_mean=np.array(s["positive_mean_n"]),
            positive_std=np.array(s["positive_std_n"]),
            negative_mean=np.array(s["negative_mean_n"]),
            negative_std=np.array(s["negative_std_n"]),
            positive_variance=np.array(s["positive_variance_n2"]),
            negative_variance=np.array(s["negative_variance_n2"]),
        )
        t = d["trace"]
        return cls(
            config_hash=d["config_hash"],
            config=d["config"],
            sample_times=np.array(t["t_s"]),
            k_measured=np.array(t["k_inv_m"]),
            sigma_k=np.array(t["sigma_k_inv_m"]),
            frequency=s["frequency_hz"],
            plateaus=plateaus,
            n_excluded=s["n_excluded"],
        )

    def save(self, path) -> None:
        write_json(self.to_json_dict(), path)


def ac_sample_times(cfg: CampaignConfig) -> np.ndarray:
    """Force acting times sampling the modulation, from config or generated."""
    if cfg.ac_sample_times is not None:
        return np.asarray(cfg.ac_sample_times, dtype=float)
    period = 1.0 / cfg.force.sw_frequency
    n = cfg.ac_n_periods * 2 * (cfg.ac_samples_per_half - 1) + 1
    return np.linspace(0.0, cfg.ac_n_periods * period, n)


def run_ac_campaign(cfg: CampaignConfig, workers: int | None = None) -> AcRecord:
    """Sample the oscillating wavevector and extract the plateau forces.

    Every sample time is one full differential shot pair at that force
    acting time; the resulting triangular-wave trace is segmented at the
    known modulation boundaries and each plateau force comes from a
    weighted linear fit.
    """
    if cfg.force.kind != SQUARE_WAVE:
        raise ValueError("run_ac_campaign requires a square-wave force profile")
    times = ac_sample_times(cfg)
    freq = cfg.force.sw_frequency
    span = float(times[-1] - times[0])
    if span * freq < 2.0 - 1e-9:
        raise ValueError("ac sample times must span at least two periods")
    lat = cfg.lattice()
    window_k = _fit_window(cfg)
    tasks = [(cfg, lat, window_k, i, float(t), cfg.force)
             for i, t in enumerate(times)]
    cycles = _run_cycles(cfg, tasks, workers)

    keep = [i for i, c in enumerate(cycles) if c.converged]
    n_excluded = len(cycles) - len(keep)
    if len(keep) < 4:
        raise RuntimeError("too few converged ac samples to segment")
    t_keep = times[keep]
    k_meas = np.array([cycles[i].dk for i in keep])
    s_keep = np.array([cycles[i].sigma_k for i in keep])

    k_fold = np.array([fold_to_fbz(k, lat) for k in k_meas])
    trace = QuasimomentumTrace(times=t_keep, k_unfolded=k_meas, k_folded=k_fold)
    plateaus = fit_square_wave_plateaus(trace, freq, float(t_keep[-1]),
                                        phase=cfg.force.sw_phase, sigmas=s_keep)
    return AcRecord(
        config_hash=cfg.config_hash(),
        config=cfg.to_dict(),
        sample_times=t_keep,
        k_measured=k_meas,
        sigma_k=s_keep,
        frequency=freq,
        plateaus=plateaus,
        n_excluded=n_excluded,
    )
