"""Persisted campaign reports: delimited data, JSON summary, and figures.

For a run record the report directory receives the raw measurement series
(CSV), the per-component Allan-deviation curves (CSV), a canonical JSON
summary, plot-ready analogue data for the stability/scaling/ac figures,
and the rendered PNG figures themselves.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..metrology import MeasurementSeries, save_series_csv
from .. import plotting
from .runner import AcRecord, RunRecord, ScalingRecord, write_json

__all__ = ["write_report"]

DEFAULT_FORMATS = ("csv", "json", "png")


def _adev_csv(path, analysis):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau_s", "adev_n", "ci_lo_n", "ci_hi_n"])
        a = analysis.adev
        for row in zip(a.taus, a.adev, a.ci_lower, a.ci_upper):
            w.writerow([repr(float(v)) for v in row])


def _histogram_csv(path, analysis):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_size", "stability_n", "ci_lo_n", "ci_hi_n"])
        h = analysis.histogram
        for b, s, lo, hi in zip(h.bin_sizes, h.stability, h.ci_lower, h.ci_upper):
            w.writerow([int(b), repr(float(s)), repr(float(lo)), repr(float(hi))])


def _static_files(record: RunRecord, out: Path, formats) -> list:
    written = []
    if "csv" in formats:
        cycles = [c for c in record.cycles if c.converged]
        t = np.array([c.timestamp for c in cycles])
        f = np.array([c.force for c in cycles])
        ct = record.config["campaign"]["cycle_time_s"]
        series = [MeasurementSeries(values=f[:, 0], cycle_time=ct,
                                    start_times=t, label="x"),
                  MeasurementSeries(values=f[:, 1], cycle_time=ct,
                                    start_times=t, label="y")]
        path = out / "series.csv"
        save_series_csv(path, series)
        written.append(path)
        for analysis in (record.analysis_x, record.analysis_y):
            p = out / f"adev_{analysis.label}.csv"
            _adev_csv(p, analysis)
            written.append(p)
            p = out / f"histogram_{analysis.label}.csv"
            _histogram_csv(p, analysis)
            written.append(p)
    if "json" in formats:
        path = out / "summary.json"
        write_json(record.to_json_dict(), path)
        written.append(path)
    if "png" in formats:
        for name, figure in [("series.png", plotting.series_figure(record)),
                             ("adev.png", plotting.adev_figure(record))]:
            path = out / name
            figure.savefig(path)
            written.append(path)
    return written


def _scaling_files(record: ScalingRecord, out: Path, formats) -> list:
    written = []
    if "csv" in formats:
        path = out / "scaling.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dt_s", "sensitivity_x_n_per_rthz",
                        "sensitivity_y_n_per_rthz",
                        "acting_sensitivity_x_n_per_rthz",
                        "acting_sensitivity_y_n_per_rthz"])
            for i in range(len(record.dts)):
                w.writerow([repr(float(record.dts[i])),
                            repr(float(record.sensitivity[i, 0])),
                            repr(float(record.sensitivity[i, 1])),
                            repr(float(record.acting_sensitivity[i, 0])),
                            repr(float(record.acting_sensitivity[i, 1]))])
        written.append(path)
    if "json" in formats:
        path = out / "summary.json"
        write_json(record.to_json_dict(), path)
        written.append(path)
    if "png" in formats:
        path = out / "scaling.png"
        plotting.scaling_figure(record).savefig(path)
        written.append(path)
    return written


def _ac_files(record: AcRecord, out: Path, formats) -> list:
    written = []
    if "csv" in formats:
        path = out / "ac_trace.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "kx_inv_m", "ky_inv_m",
                        "sigma_kx_inv_m", "sigma_ky_inv_m"])
            for i in range(len(record.sample_times)):
                w.writerow([repr(float(record.sample_times[i])),
                            repr(float(record.k_measured[i, 0])),
                            repr(float(record.k_measured[i, 1])),
                            repr(float(record.sigma_k[i, 0])),
                            repr(float(record.sigma_k[i, 1]))])
        written.append(path)
        path = out / "ac_plateaus.csv"
        p = record.plateaus
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mid_t_s", "sign", "force_x_n", "force_y_n",
                        "sigma_x_n", "sigma_y_n"])
            for i in range(p.n_segments):
                w.writerow([repr(float(p.mid_times[i])), int(p.signs[i]),
                            repr(float(p.forces[i, 0])),
                            repr(float(p.forces[i, 1])),
                            repr(float(p.force_sigmas[i, 0])),
                            repr(float(p.force_sigmas[i, 1]))])
        written.append(path)
    if "json" in formats:
        path = out / "summary.json"
        write_json(record.to_json_dict(), path)
        written.append(path)
    if "png" in formats:
        path = out / "ac.png"
        plotting.ac_figure(record).savefig(path)
        written.append(path)
    return written


def write_report(record, out_dir, formats=DEFAULT_FORMATS) -> list:
    """Write a campaign record's report files; returns the paths written.

    Raises OSError (with the offending path) when the destination cannot
    be written.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    if isinstance(record, RunRecord):
        return _static_files(record, out, formats)
    if isinstance(record, ScalingRecord):
        return _scaling_files(record, out, formats)
    if isinstance(record, AcRecord):
        return _ac_files(record, out, formats)
    raise TypeError(f"unknown record type {type(record).__name__}")
