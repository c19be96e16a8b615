"""Statistical pipeline for the force measurements.

Allan deviation (overlapping by default, non-overlapping as a cross-check),
histogram/binning stability, a normality diagnostic, weighted linear force
regression, square-wave plateau extraction, and the closed-form measurement
limits for real-space and reciprocal-space sensing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .constants import HBAR, RB87_MASS
from .dynamics import QuasimomentumTrace

__all__ = [
    "PhysicalConstants",
    "MeasurementSeries",
    "AdevCurve",
    "HistogramStability",
    "NormalityReport",
    "LinearForceFit",
    "PlateauFit",
    "allan_deviation",
    "sensitivity_from_adev",
    "histogram_stability",
    "normality_diagnostic",
    "fit_force_linear",
    "force_angle",
    "fit_square_wave_plateaus",
    "sql_real",
    "sql_real_sensitivity",
    "ql_reciprocal",
    "ql_reciprocal_sensitivity",
    "save_series_csv",
    "load_series_csv",
]

# 5% critical value of the size-adjusted Anderson-Darling statistic for a
# normal with estimated mean and variance (Stephens).
AD_CRITICAL_5PCT = 0.752

_GAUSS_1SIGMA = 0.8413447460685429  # Phi(1)


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = HBAR  # J*s
    mass: float = RB87_MASS  # kg

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError("hbar and mass must be positive")


@dataclass(frozen=True, eq=False)
class MeasurementSeries:
    """One spatial component of consecutive force measurements.

    cycle_time is the wall-clock cost of a single data point; start_times
    carry the (simulated) acquisition schedule.
    """

    values: np.ndarray  # (n,) N
    cycle_time: float  # s
    start_times: np.ndarray  # (n,) s, strictly increasing
    label: str = "y"  # component tag, "x" or "y"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        t = np.asarray(self.start_times, dtype=float)
        if v.ndim != 1 or len(v) == 0:
            raise ValueError("values must be a nonempty 1D array")
        if not self.cycle_time > 0:
            raise ValueError("cycle_time must be > 0")
        if t.shape != v.shape:
            raise ValueError("start_times must match values in length")
        if len(t) > 1 and np.any(np.diff(t) < self.cycle_time * (1 - 1e-6)):
            raise ValueError("start_times must advance by at least cycle_time")
        if self.label not in ("x", "y"):
            raise ValueError("label must be 'x' or 'y'")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "start_times", t)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def regular(cls, values, cycle_time: float, label: str = "y",
                t_start: float = 0.0) -> "MeasurementSeries":
        values = np.asarray(values, dtype=float)
        times = t_start + np.arange(len(values)) * cycle_time
        return cls(values=values, cycle_time=cycle_time, start_times=times,
                   label=label)


@dataclass(frozen=True, eq=False)
class AdevCurve:
    """Allan deviation vs averaging time with 1-sigma chi-square bounds."""

    taus: np.ndarray  # (k,) s, strictly increasing multiples of cycle_time
    adev: np.ndarray  # (k,) N
    ci_lower: np.ndarray  # (k,) N
    ci_upper: np.ndarray  # (k,) N

    def __post_init__(self):
        for name in ("taus", "adev", "ci_lower", "ci_upper"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        if np.any(self.adev < 0):
            raise ValueError("adev must be nonnegative")
        if np.any(self.ci_lower > self.adev) or np.any(self.adev > self.ci_upper):
            raise ValueError("confidence bounds must bracket adev")

    def at(self, tau: float) -> float:
        """Allan deviation at an averaging time present in the curve."""
        i = np.flatnonzero(np.isclose(self.taus, tau, rtol=1e-9, atol=0.0))
        if i.size == 0:
            raise ValueError(f"tau={tau} s is not a point of this curve")
        return float(self.adev[i[0]])


def _block_means(values: np.ndarray, m: int, overlapping: bool) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(values)])
    if overlapping:
        return (c[m:] - c[:-m]) / m
    n = len(values) // m
    return (c[m * np.arange(1, n + 1)] - c[m * np.arange(n)]) / m


def allan_deviation(s: MeasurementSeries, taus, overlapping: bool = True) -> AdevCurve:
    """Allan deviation of the series at the requested averaging times.

    The samples are treated as uniformly spaced at cycle_time. Each tau must
    be an integer multiple m * cycle_time with m >= 1; taus with m > len/2
    are omitted from the curve rather than failing it. 1-sigma bounds come
    from a chi-square with ~(len/m - 1) equivalent degrees of freedom.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or len(taus) == 0:
        raise ValueError("taus must be a nonempty 1D array")
    if np.any(np.diff(taus) <= 0):
        raise ValueError("taus must be strictly increasing")
    v = s.values
    big_m = len(v)
    out_t, out_a, out_lo, out_hi = [], [], [], []
    for tau in taus:
        m_float = tau / s.cycle_time
        m = int(round(m_float))
        if m < 1 or abs(m_float - m) > 1e-6:
            raise ValueError(
                f"tau={tau} s is not an integer multiple of cycle_time")
        if 2 * m > big_m:
            continue  # too long for this series; omit the point
        means = _block_means(v, m, overlapping)
        if overlapping:
            diffs = means[m:] - means[:-m]
        else:
            diffs = np.diff(means)
        if diffs.size == 0:
            continue
        avar = 0.5 * float(np.mean(diffs ** 2))
        adev = math.sqrt(avar)
        edf = max(big_m / m - 1.0, 1.0)
        lo = adev * math.sqrt(edf / stats.chi2.ppf(_GAUSS_1SIGMA, edf))
        hi = adev * math.sqrt(edf / stats.chi2.ppf(1.0 - _GAUSS_1SIGMA, edf))
        out_t.append(m * s.cycle_time)
        out_a.append(adev)
        out_lo.append(min(lo, adev))
        out_hi.append(max(hi, adev))
    return AdevCurve(taus=np.array(out_t), adev=np.array(out_a),
                     ci_lower=np.array(out_lo), ci_upper=np.array(out_hi))


def sensitivity_from_adev(curve: AdevCurve, tau0: float) -> float:
    """Measurement sensitivity S = adev(tau0) * sqrt(tau0), in N/sqrt(Hz)."""
    if not tau0 > 0:
        raise ValueError("tau0 must be > 0")
    return curve.at(tau0) * math.sqrt(tau0)


@dataclass(frozen=True, eq=False)
class HistogramStability:
    """Std of consecutive-bin means vs bin size, the ADEV cross-check."""

    bin_sizes: np.ndarray  # (k,)
    stability: np.ndarray  # (k,) N
    ci_lower: np.ndarray
    ci_upper: np.ndarray


def histogram_stability(s: MeasurementSeries, bin_counts) -> HistogramStability:
    """Partition the series into consecutive bins and spread the bin means.

    For bin size b the series is cut into floor(len/b) bins; the reported
    stability is the ddof=1 std of the bin means with a chi-square 1-sigma
    interval. Bin sizes with fewer than two full bins are omitted.
    """
    v = s.values
    out_b, out_s, out_lo, out_hi = [], [], [], []
    for b in bin_counts:
        b = int(b)
        if b < 1:
            raise ValueError("bin sizes must be >= 1")
        nb = len(v) // b
        if nb < 2:
            continue
        means = _block_means(v[: nb * b], b, overlapping=False)
        sd = float(np.std(means, ddof=1))
        nu = nb - 1
        lo = sd * math.sqrt(nu / stats.chi2.ppf(_GAUSS_1SIGMA, nu))
        hi = sd * math.sqrt(nu / stats.chi2.ppf(1.0 - _GAUSS_1SIGMA, nu))
        out_b.append(b)
        out_s.append(sd)
        out_lo.append(min(lo, sd))
        out_hi.append(max(hi, sd))
    return HistogramStability(bin_sizes=np.array(out_b, dtype=int),
                              stability=np.array(out_s),
                              ci_lower=np.array(out_lo),
                              ci_upper=np.array(out_hi))


@dataclass(frozen=True)
class NormalityReport:
    statistic: float  # size-adjusted Anderson-Darling A^2
    passed: bool  # statistic below the 5% critical value
    skewness: float
    excess_kurtosis: float
    n: int


def normality_diagnostic(s: MeasurementSeries) -> NormalityReport:
    """Anderson-Darling test of the standardized series against a normal.

    Uses the size-adjusted statistic A^2 * (1 + 0.75/n + 2.25/n^2) and the
    5% critical value 0.752 (mean and variance estimated from the data).
    """
    v = s.values
    n = len(v)
    if n < 50:
        raise ValueError("normality diagnostic requires at least 50 samples")
    sd = float(np.std(v, ddof=1))
    if sd == 0:
        raise ValueError("degenerate series: zero variance")
    z = np.sort((v - np.mean(v)) / sd)
    u = np.clip(stats.norm.cdf(z), 1e-300, 1 - 1e-16)
    i = np.arange(1, n + 1)
    a2 = -n - np.mean((2 * i - 1) * (np.log(u) + np.log(1 - u[::-1])))
    a2_adj = a2 * (1.0 + 0.75 / n + 2.25 / n ** 2)
    return NormalityReport(
        statistic=float(a2_adj),
        passed=bool(a2_adj < AD_CRITICAL_5PCT),
        skewness=float(stats.skew(v)),
        excess_kurtosis=float(stats.kurtosis(v)),
        n=n,
    )


@dataclass(frozen=True, eq=False)
class LinearForceFit:
    """Per-component weighted straight-line fit of hbar*dk vs dt."""

    force: np.ndarray  # (2,) N, the slope
    force_sigma: np.ndarray  # (2,) N
    intercept: np.ndarray  # (2,) N*s, should be 0-consistent
    intercept_sigma: np.ndarray  # (2,) N*s
    chi2_dof: np.ndarray  # (2,) reduced chi-square (nan when dof = 0)


def _wls_line(x: np.ndarray, y: np.ndarray, sigma: np.ndarray):
    """Weighted LSQ of y = a + b*x. sigma all-positive -> absolute weights;
    sigma all-zero -> unweighted with residual-scaled errors."""
    if np.all(sigma > 0):
        w = 1.0 / sigma ** 2
        absolute = True
    elif np.all(sigma == 0):
        w = np.ones_like(x)
        absolute = False
    else:
        raise ValueError("sigmas must be all positive or all zero per component")
    sw = w.sum()
    sx = (w * x).sum()
    sy = (w * y).sum()
    sxx = (w * x * x).sum()
    sxy = (w * x * y).sum()
    delta = sw * sxx - sx * sx
    if delta <= 0 or np.unique(x).size < 2:
        raise ValueError("rank-deficient fit: need at least two distinct dt")
    b = (sw * sxy - sx * sy) / delta
    a = (sxx * sy - sx * sxy) / delta
    var_b = sw / delta
    var_a = sxx / delta
    resid = y - a - b * x
    dof = len(x) - 2
    chi2 = float((w * resid ** 2).sum())
    if not absolute:
        scale = chi2 / dof if dof > 0 else 0.0
        var_b *= scale
        var_a *= scale
    return a, b, math.sqrt(var_a), math.sqrt(var_b), \
        (chi2 / dof if dof > 0 else math.nan)


def fit_force_linear(traces) -> LinearForceFit:
    """Force from the linear accumulation of wavevector with acting time.

    traces: iterable of (dt seconds, dk 2-vector m^-1, sigma 2-vector m^-1).
    Fits hbar*dk = F*dt + c per component with weights 1/(hbar*sigma)^2; the
    slope is the force.
    """
    rows = list(traces)
    if len(rows) < 2:
        raise ValueError("need at least two (dt, dk, sigma) points")
    dt = np.array([float(r[0]) for r in rows])
    dk = np.array([np.asarray(r[1], dtype=float) for r in rows])
    sg = np.array([np.asarray(r[2], dtype=float) for r in rows])
    if np.unique(dt).size < 2:
        raise ValueError("rank-deficient fit: all dt identical")
    force = np.empty(2)
    force_sigma = np.empty(2)
    intercept = np.empty(2)
    intercept_sigma = np.empty(2)
    chi2_dof = np.empty(2)
    for c in range(2):
        a, b, sa, sb, x2 = _wls_line(dt, HBAR * dk[:, c], HBAR * sg[:, c])
        force[c], force_sigma[c] = b, sb
        intercept[c], intercept_sigma[c] = a, sa
        chi2_dof[c] = x2
    return LinearForceFit(force=force, force_sigma=force_sigma,
                          intercept=intercept, intercept_sigma=intercept_sigma,
                          chi2_dof=chi2_dof)


def force_angle(force) -> float:
    """Direction angle with respect to the +y axis, signed toward +x (rad)."""
    f = np.asarray(force, dtype=float)
    if np.all(f == 0):
        raise ValueError("force angle undefined for the zero vector")
    return math.atan2(f[0], f[1])


@dataclass(frozen=True, eq=False)
class PlateauFit:
    """Per-half-period forces of a square-wave drive, with direction summaries."""

    forces: np.ndarray  # (nseg, 2) N, slope of hbar*k per segment
    force_sigmas: np.ndarray  # (nseg, 2) N, per-segment fit uncertainty
    signs: np.ndarray  # (nseg,) +1 / -1 drive direction
    mid_times: np.ndarray  # (nseg,) s
    positive_mean: np.ndarray  # (2,) N
    positive_std: np.ndarray  # (2,) N, ddof=1 across segments
    negative_mean: np.ndarray  # (2,) N
    negative_std: np.ndarray  # (2,) N
    positive_variance: np.ndarray  # (2,) N^2, across-period variance
    negative_variance: np.ndarray  # (2,) N^2

    @property
    def n_segments(self) -> int:
        return len(self.forces)


def fit_square_wave_plateaus(trace: QuasimomentumTrace, frequency: float,
                             dt_total: float, phase: float = 0.0,
                             sigmas=None) -> PlateauFit:
    """Extract the drive force on each half-period plateau of a square wave.

    The trace is cut at the known sign-change times of sin(2*pi*f*t + phase)
    inside [0, dt_total]; each segment with at least two samples gets a
    weighted linear fit of hbar*k vs t whose slope is that plateau's force.
    Summaries (mean, ddof=1 std, variance across periods) are reported
    separately for the two drive directions.
    """
    if not frequency > 0:
        raise ValueError("frequency must be > 0")
    times = trace.times
    k = trace.k_unfolded
    if sigmas is None:
        sig = np.zeros_like(k)
    else:
        sig = np.asarray(sigmas, dtype=float)
        if sig.shape != k.shape:
            raise ValueError("sigmas must match the trace shape")
    t_end = min(dt_total, float(times[-1]))
    if t_end * frequency < 2.0 - 1e-9:
        raise ValueError("trace must span at least two full drive periods")

    half = 0.5 / frequency
    # Sign changes at t_n = (n*pi - phase)/(2*pi*f); clip to [0, t_end].
    bounds = [0.0]
    n = math.ceil(phase / math.pi - 1e-12)
    while True:
        t_n = (n - phase / math.pi) * half
        if t_n > t_end + 1e-12 * half:
            break
        if t_n > bounds[-1] + 1e-9 * half:
            bounds.append(t_n)
        n += 1
    if bounds[-1] < t_end - 1e-9 * half:
        bounds.append(t_end)

    eps = 1e-9 * half
    rows = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        mask = (times >= lo - eps) & (times <= hi + eps)
        if mask.sum() < 2 or np.unique(times[mask]).size < 2:
            continue
        f_seg = np.empty(2)
        s_seg = np.empty(2)
        for c in range(2):
            _, b, _, sb, _ = _wls_line(times[mask], HBAR * k[mask, c],
                                       HBAR * sig[mask, c])
            f_seg[c], s_seg[c] = b, sb
        t_mid = 0.5 * (lo + hi)
        sign = 1.0 if math.sin(2 * math.pi * frequency * t_mid + phase) >= 0 \
            else -1.0
        rows.append((t_mid, sign, f_seg, s_seg))
    if len(rows) < 2:
        raise ValueError("fewer than two fittable plateau segments")

    mids = np.array([r[0] for r in rows])
    signs = np.array([r[1] for r in rows])
    forces = np.array([r[2] for r in rows])
    fsig = np.array([r[3] for r in rows])

    def _summary(mask):
        if mask.sum() == 0:
            nan2 = np.full(2, np.nan)
            return nan2, nan2.copy(), nan2.copy()
        sel = forces[mask]
        mean = sel.mean(axis=0)
        if len(sel) > 1:
            std = sel.std(axis=0, ddof=1)
        else:
            std = np.zeros(2)
        return mean, std, std ** 2

    pos_mean, pos_std, pos_var = _summary(signs > 0)
    neg_mean, neg_std, neg_var = _summary(signs < 0)
    return PlateauFit(forces=forces, force_sigmas=fsig, signs=signs,
                      mid_times=mids,
                      positive_mean=pos_mean, positive_std=pos_std,
                      negative_mean=neg_mean, negative_std=neg_std,
                      positive_variance=pos_var, negative_variance=neg_var)


def sql_real(c: PhysicalConstants, dt: float) -> float:
    """Standard quantum limit of real-space force sensing: sqrt(m*hbar/dt^3)."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return math.sqrt(c.mass * c.hbar / dt ** 3)


def sql_real_sensitivity(c: PhysicalConstants, dt: float) -> float:
    """SQL referred to unit bandwidth: sql_real(dt) * sqrt(dt), N/sqrt(Hz)."""
    return sql_real(c, dt) * math.sqrt(dt)


def ql_reciprocal(c: PhysicalConstants, n0: float, dt: float, l_q: float) -> float:
    """Reciprocal-space shot-noise limit: hbar / (sqrt(N0) * dt * l_q)."""
    if not (n0 > 0 and dt > 0 and l_q > 0):
        raise ValueError("n0, dt, and l_q must be positive")
    return c.hbar / (math.sqrt(n0) * dt * l_q)


def ql_reciprocal_sensitivity(c: PhysicalConstants, n0: float, dt: float,
                              l_q: float, cycle_time: float) -> float:
    """Reciprocal-space limit per root bandwidth when preparation dominates:
    ql_reciprocal * sqrt(cycle_time)."""
    if not cycle_time > 0:
        raise ValueError("cycle_time must be > 0")
    return ql_reciprocal(c, n0, dt, l_q) * math.sqrt(cycle_time)


def save_series_csv(path, series_list) -> None:
    """Write measurement series as CSV rows start_time_s,component,force_n."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_time_s", "component", "force_n"])
        for s in series_list:
            for t, v in zip(s.start_times, s.values):
                writer.writerow([repr(float(t)), s.label, repr(float(v))])


def load_series_csv(path, cycle_time: float | None = None) -> dict:
    """Read series CSV back into {component: MeasurementSeries}.

    cycle_time defaults to the smallest start-time spacing per component.
    """
    rows = {"x": [], "y": []}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                [f.strip() for f in reader.fieldnames] != \
                ["start_time_s", "component", "force_n"]:
            raise ValueError(f"unexpected series CSV header in {path}")
        for rec in reader:
            comp = rec["component"].strip()
            if comp not in rows:
                raise ValueError(f"unknown component {comp!r} in {path}")
            rows[comp].append((float(rec["start_time_s"]), float(rec["force_n"])))
    out = {}
    for comp, data in rows.items():
        if not data:
            continue
        data.sort(key=lambda r: r[0])
        times = np.array([r[0] for r in data])
        values = np.array([r[1] for r in data])
        ct = cycle_time
        if ct is None:
            ct = float(np.min(np.diff(times))) if len(times) > 1 else 1.0
        out[comp] = MeasurementSeries(values=values, cycle_time=ct,
                                      start_times=times, label=comp)
    return out
